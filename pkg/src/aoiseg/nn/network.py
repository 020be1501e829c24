"""From-scratch Q-network: stacked same-padding 5x5 conv layers with ReLU,
a flattening, an optional ReLU hidden layer and a linear action head.

Parameters live in one flat float64 vector with named views per tensor, so
the optimizer, checkpointing and gradient checking all operate on a single
array. Gradients come back in the same layout. Tensors are plain numpy
arrays throughout.
"""

from __future__ import annotations

import struct
from dataclasses import dataclass

import numpy as np

from ..errors import InputError
from . import kernels

_MAGIC = b"AOIQNET1"
_VERSION = 1


@dataclass(frozen=True)
class NetworkShape:
    rows: int
    cols: int
    in_channels: int = 7
    conv_channels: tuple[int, ...] = (16, 32)
    kernel: int = 5
    hidden: int = 128
    n_actions: int = 5

    def __post_init__(self):
        if self.kernel % 2 != 1:
            raise InputError("kernel size must be odd for same padding")
        if self.rows < 1 or self.cols < 1 or self.n_actions < 1:
            raise InputError("invalid network shape")

    @property
    def flat_features(self) -> int:
        ch = self.conv_channels[-1] if self.conv_channels else self.in_channels
        return ch * self.rows * self.cols


class QNetwork:
    """Q-value function over the five border actions."""

    def __init__(self, shape: NetworkShape, seed: int = 0, init: bool = True):
        self.shape = shape
        specs: list[tuple[str, tuple[int, ...]]] = []
        cin = shape.in_channels
        for i, cout in enumerate(shape.conv_channels):
            specs.append((f"conv{i}_w", (cout, cin, shape.kernel, shape.kernel)))
            specs.append((f"conv{i}_b", (cout,)))
            cin = cout
        feat = shape.flat_features
        if shape.hidden > 0:
            specs.append(("dense_w", (shape.hidden, feat)))
            specs.append(("dense_b", (shape.hidden,)))
            head_in = shape.hidden
        else:
            head_in = feat
        specs.append(("head_w", (shape.n_actions, head_in)))
        specs.append(("head_b", (shape.n_actions,)))

        self._specs = specs
        total = sum(int(np.prod(s)) for _, s in specs)
        self.params = np.zeros(total, dtype=np.float64)
        self.views: dict[str, np.ndarray] = {}
        offset = 0
        for name, shp in specs:
            size = int(np.prod(shp))
            self.views[name] = self.params[offset : offset + size].reshape(shp)
            offset += size
        if init:
            self._init_params(seed)

    def _init_params(self, seed: int) -> None:
        # He-normal for the ReLU layers, smaller scale for the linear head
        rng = np.random.default_rng(np.random.SeedSequence([seed, 0x9E7]))
        for name, shp in self._specs:
            view = self.views[name]
            if name.endswith("_b"):
                view[...] = 0.0
            elif name.startswith("head"):
                fan_in = shp[1]
                view[...] = rng.normal(0.0, 1.0 / np.sqrt(fan_in), size=shp)
            else:
                fan_in = int(np.prod(shp[1:]))
                view[...] = rng.normal(0.0, np.sqrt(2.0 / fan_in), size=shp)

    # ----------------------------------------------------------- forward

    def forward_cached(self, x: np.ndarray):
        """Batched forward pass; returns (q, cache) with everything the
        backward pass needs."""
        x = np.ascontiguousarray(x, dtype=np.float64)
        if x.ndim != 4 or x.shape[1:] != (self.shape.in_channels, self.shape.rows, self.shape.cols):
            raise InputError(f"state batch has shape {x.shape}, expected "
                             f"(B, {self.shape.in_channels}, {self.shape.rows}, {self.shape.cols})")
        cache: dict[str, np.ndarray] = {}
        h = x
        for i in range(len(self.shape.conv_channels)):
            cache[f"conv{i}_in"] = h
            z = kernels.conv2d_same(h, self.views[f"conv{i}_w"], self.views[f"conv{i}_b"])
            cache[f"conv{i}_z"] = z
            h = np.maximum(z, 0.0)
        flat = h.reshape(h.shape[0], -1)
        cache["flat"] = flat
        if self.shape.hidden > 0:
            z1 = flat @ self.views["dense_w"].T + self.views["dense_b"]
            cache["dense_z"] = z1
            h1 = np.maximum(z1, 0.0)
        else:
            h1 = flat
        cache["head_in"] = h1
        q = h1 @ self.views["head_w"].T + self.views["head_b"]
        return q, cache

    def forward(self, x: np.ndarray) -> np.ndarray:
        return self.forward_cached(x)[0]

    def forward_single(self, state: np.ndarray) -> np.ndarray:
        return self.forward(state[None])[0]

    # ---------------------------------------------------------- backward

    def backward(self, cache: dict[str, np.ndarray], dq: np.ndarray) -> np.ndarray:
        """Gradient of sum(q * dq) w.r.t. all parameters, flat layout."""
        grads = np.zeros_like(self.params)
        views: dict[str, np.ndarray] = {}
        offset = 0
        for name, shp in self._specs:
            size = int(np.prod(shp))
            views[name] = grads[offset : offset + size].reshape(shp)
            offset += size

        h1 = cache["head_in"]
        views["head_w"][...] = dq.T @ h1
        views["head_b"][...] = dq.sum(axis=0)
        dh1 = dq @ self.views["head_w"]

        if self.shape.hidden > 0:
            dz1 = dh1 * (cache["dense_z"] > 0)
            views["dense_w"][...] = dz1.T @ cache["flat"]
            views["dense_b"][...] = dz1.sum(axis=0)
            dflat = dz1 @ self.views["dense_w"]
        else:
            dflat = dh1

        n_conv = len(self.shape.conv_channels)
        if n_conv:
            ch = self.shape.conv_channels[-1]
            dh = dflat.reshape(-1, ch, self.shape.rows, self.shape.cols)
            for i in reversed(range(n_conv)):
                dz = dh * (cache[f"conv{i}_z"] > 0)
                if i == 0:
                    # input gradients are never consumed below the first layer
                    dw, db = kernels.conv_param_grads(
                        cache["conv0_in"], self.views["conv0_w"], dz
                    )
                else:
                    dx, dw, db = kernels.conv2d_same_bwd(
                        cache[f"conv{i}_in"], self.views[f"conv{i}_w"], dz
                    )
                    dh = dx
                views[f"conv{i}_w"][...] = dw
                views[f"conv{i}_b"][...] = db
        return grads

    # ------------------------------------------------------------- utils

    def clone(self) -> "QNetwork":
        twin = QNetwork(self.shape, init=False)
        np.copyto(twin.params, self.params)
        return twin

    def copy_params_from(self, other: "QNetwork") -> None:
        if other.shape != self.shape:
            raise InputError("cannot copy parameters across different shapes")
        np.copyto(self.params, other.params)

    @property
    def n_params(self) -> int:
        return self.params.size

    # ------------------------------------------------------- persistence

    def save(self, path) -> None:
        """Versioned binary checkpoint: header + little-endian f64 block."""
        s = self.shape
        header = struct.pack(
            "<8sIIIIII",
            _MAGIC,
            _VERSION,
            s.rows,
            s.cols,
            s.in_channels,
            len(s.conv_channels),
            s.kernel,
        )
        header += struct.pack(f"<{len(s.conv_channels)}I", *s.conv_channels) if s.conv_channels else b""
        header += struct.pack("<IIQ", s.hidden, s.n_actions, self.params.size)
        with open(path, "wb") as fh:
            fh.write(header)
            fh.write(self.params.astype("<f8").tobytes())

    @staticmethod
    def load(path) -> "QNetwork":
        with open(path, "rb") as fh:
            head = fh.read(struct.calcsize("<8sIIIIII"))
            magic, version, rows, cols, in_ch, n_conv, kernel = struct.unpack("<8sIIIIII", head)
            if magic != _MAGIC:
                raise InputError(f"{path}: not a network checkpoint")
            if version != _VERSION:
                raise InputError(f"{path}: unsupported checkpoint version {version}")
            conv = struct.unpack(f"<{n_conv}I", fh.read(4 * n_conv)) if n_conv else ()
            hidden, n_actions, count = struct.unpack("<IIQ", fh.read(struct.calcsize("<IIQ")))
            shape = NetworkShape(
                rows=rows, cols=cols, in_channels=in_ch,
                conv_channels=tuple(int(c) for c in conv),
                kernel=kernel, hidden=hidden, n_actions=n_actions,
            )
            net = QNetwork(shape, init=False)
            data = fh.read(8 * count)
            if len(data) != 8 * count:
                raise InputError(f"{path}: truncated parameter block")
            params = np.frombuffer(data, dtype="<f8")
            if params.size != net.params.size:
                raise InputError(f"{path}: parameter count mismatch")
            np.copyto(net.params, params)
        return net


class RMSprop:
    """RMSprop with in-place updates on the flat parameter vector."""

    def __init__(self, n_params: int, lr: float = 1e-4, decay: float = 0.99, eps: float = 1e-8):
        if not 0.0 <= decay < 1.0 or lr <= 0 or eps <= 0:
            raise InputError("invalid RMSprop hyperparameters")
        self.lr = lr
        self.decay = decay
        self.eps = eps
        self.cache = np.zeros(n_params, dtype=np.float64)

    def step(self, params: np.ndarray, grads: np.ndarray) -> None:
        kernels.rmsprop_update(params, grads, self.cache, self.lr, self.decay, self.eps)
