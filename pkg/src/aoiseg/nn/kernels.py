"""Same-padding convolution kernels with backend selection at import.

The compiled Cython extension is used when available; otherwise a numpy
im2col implementation takes over. Set AOISEG_KERNELS=numpy (or =compiled)
to force a backend; forcing "compiled" raises if the extension is missing.
Both backends implement cross-correlation, matching the direct-convolution
reference used in the tests.

The input gradient is computed as a forward convolution of dy with the
flipped, channel-transposed weights, so both directions share the fast
im2col + GEMM path. Large intermediates (padded inputs, patch matrices)
live in a per-thread workspace: repeated multi-megabyte allocations are
disproportionately expensive under this kernel's allocator, and reuse
keeps the hot training loop off that path.
"""

from __future__ import annotations

import ctypes
import os
import sys
import threading

import numpy as np

if sys.platform.startswith("linux"):
    # Keep multi-MB numpy buffers on the heap instead of per-call mmap:
    # first-touch faults on fresh mappings cost ~20ms per 4MB under
    # sandboxed kernels, dominating the training loop otherwise.
    try:
        _libc = ctypes.CDLL("libc.so.6")
        _libc.mallopt(-3, 64 * 1024 * 1024)  # M_MMAP_THRESHOLD
        _libc.mallopt(-1, 256 * 1024 * 1024)  # M_TRIM_THRESHOLD
    except OSError:
        pass

try:
    from . import _kernels as _compiled
except ImportError:  # extension not built; numpy fallback below
    _compiled = None

_FORCED = os.environ.get("AOISEG_KERNELS", "").strip().lower()
if _FORCED == "numpy":
    _compiled = None
elif _FORCED == "compiled" and _compiled is None:
    raise ImportError("AOISEG_KERNELS=compiled but aoiseg.nn._kernels is not built")

BACKEND = "compiled" if _compiled is not None else "numpy"

_tls = threading.local()

# flat gather indices into the padded image, keyed by (rows, cols, kh, kw);
# layout (KK, MN) so patch matrices need no transposition
_INDEX_CACHE: dict[tuple[int, int, int, int], np.ndarray] = {}


def _flat_indices(rows: int, cols: int, kh: int, kw: int) -> np.ndarray:
    key = (rows, cols, kh, kw)
    cached = _INDEX_CACHE.get(key)
    if cached is None:
        u, v = np.meshgrid(np.arange(kh), np.arange(kw), indexing="ij")
        i, j = np.meshgrid(np.arange(rows), np.arange(cols), indexing="ij")
        ri = u.reshape(-1, 1) + i.reshape(1, -1)  # (KK, MN) in padded coords
        ci = v.reshape(-1, 1) + j.reshape(1, -1)
        cached = np.ascontiguousarray((ri * (cols + 2 * (kw // 2)) + ci).ravel())
        _INDEX_CACHE[key] = cached
    return cached


def _scratch(key: str, shape: tuple[int, ...]) -> np.ndarray:
    """Reusable zero-initialized per-thread buffer, one per (key, shape)."""
    store = getattr(_tls, "bufs", None)
    if store is None:
        store = _tls.bufs = {}
    full_key = (key, shape)
    buf = store.get(full_key)
    if buf is None:
        buf = np.zeros(shape, dtype=np.float64)
        store[full_key] = buf
    return buf


def _pad_into(x: np.ndarray, ph: int, pw: int, key: str) -> np.ndarray:
    bsz, cin, rows, cols = x.shape
    xp = _scratch(key, (bsz, cin, rows + 2 * ph, cols + 2 * pw))
    # border stays zero from allocation; only the interior is overwritten
    xp[:, :, ph : ph + rows, pw : pw + cols] = x
    return xp


def _im2col(x: np.ndarray, kh: int, kw: int, key: str) -> np.ndarray:
    """(B, C*KK, MN) patch matrix in a reused buffer."""
    bsz, cin, rows, cols = x.shape
    xp = _pad_into(x, kh // 2, kw // 2, key + "_pad")
    idx = _flat_indices(rows, cols, kh, kw)
    cols_buf = _scratch(key + "_cols", (bsz, cin, idx.size))
    np.take(xp.reshape(bsz, cin, -1), idx, axis=2, out=cols_buf)
    return cols_buf.reshape(bsz, cin * kh * kw, rows * cols)


def conv2d_same_numpy(x: np.ndarray, w: np.ndarray, b: np.ndarray) -> np.ndarray:
    """Cross-correlation with same padding: im2col + batched GEMM."""
    bsz, _, rows, cols = x.shape
    cout, cin, kh, kw = w.shape
    cols_mat = _im2col(x, kh, kw, "fwd")
    y = np.matmul(w.reshape(cout, cin * kh * kw), cols_mat)  # (B, Cout, MN)
    y += b[:, None]
    return y.reshape(bsz, cout, rows, cols)


def _flip_transpose(w: np.ndarray) -> np.ndarray:
    """Weights of the adjoint convolution: swap channel axes, flip taps."""
    return np.ascontiguousarray(w.transpose(1, 0, 2, 3)[:, :, ::-1, ::-1])


def _param_grads_numpy(x: np.ndarray, dy: np.ndarray, kh: int, kw: int):
    bsz, cin, rows, cols = x.shape
    cout = dy.shape[1]
    dy3 = dy.reshape(bsz, cout, rows * cols)
    cols_mat = _im2col(x, kh, kw, "bwd")
    acc = _scratch("dw_acc", (bsz, cout, cin * kh * kw))
    np.matmul(dy3, cols_mat.transpose(0, 2, 1), out=acc)
    dw = acc.sum(axis=0).reshape(cout, cin, kh, kw)
    db = dy3.sum(axis=(0, 2))
    return dw, db


def conv2d_same_bwd_numpy(x: np.ndarray, w: np.ndarray, dy: np.ndarray):
    """Gradients (dx, dw, db) of conv2d_same_numpy."""
    cout, cin, kh, kw = w.shape
    dw, db = _param_grads_numpy(x, dy, kh, kw)
    dx = conv2d_same_numpy(dy, _flip_transpose(w), np.zeros(cin))
    return dx, dw, db


def conv_param_grads(x: np.ndarray, w: np.ndarray, dy: np.ndarray):
    """Weight and bias gradients only (no input gradient)."""
    cout, cin, kh, kw = w.shape
    if _compiled is not None:
        dw, db = _compiled.conv_param_grads(_as_c64(x), _as_c64(dy), kh, kw)
        return dw.reshape(cout, cin, kh, kw), db
    return _param_grads_numpy(x, dy, kh, kw)


def rmsprop_update(
    params: np.ndarray,
    grads: np.ndarray,
    cache: np.ndarray,
    lr: float,
    decay: float,
    eps: float,
) -> None:
    """Fused in-place RMSprop step over the flat parameter vector."""
    if _compiled is not None:
        _compiled.rmsprop_update(params, grads, cache, lr, decay, eps)
        return
    cache *= decay
    cache += (1.0 - decay) * grads * grads
    params -= lr * grads / (np.sqrt(cache) + eps)


def _as_c64(a: np.ndarray) -> np.ndarray:
    return np.ascontiguousarray(a, dtype=np.float64)


def conv2d_same_compiled(x: np.ndarray, w: np.ndarray, b: np.ndarray) -> np.ndarray:
    """Compiled backend regardless of selection; raises if unavailable."""
    if _compiled is None:
        raise RuntimeError("compiled kernels are not built")
    return _compiled.conv2d_same(_as_c64(x), _as_c64(w), _as_c64(b))


def conv2d_same_bwd_compiled(x: np.ndarray, w: np.ndarray, dy: np.ndarray):
    if _compiled is None:
        raise RuntimeError("compiled kernels are not built")
    return _compiled.conv2d_same_bwd(_as_c64(x), _as_c64(w), _as_c64(dy))


def conv2d_same(x: np.ndarray, w: np.ndarray, b: np.ndarray) -> np.ndarray:
    if _compiled is not None:
        return _compiled.conv2d_same(_as_c64(x), _as_c64(w), _as_c64(b))
    return conv2d_same_numpy(x, w, b)


def conv2d_same_bwd(x: np.ndarray, w: np.ndarray, dy: np.ndarray):
    if _compiled is not None:
        return conv2d_same_bwd_compiled(x, w, dy)
    return conv2d_same_bwd_numpy(x, w, dy)


def has_compiled() -> bool:
    return _compiled is not None
