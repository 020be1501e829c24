# cython: boundscheck=False, wraparound=False, cdivision=True
"""Compiled same-padding convolution kernels.

Patch extraction runs as C loops into reused per-thread buffers; the
contractions are single BLAS dgemm calls. The python dispatch layer
(aoiseg.nn.kernels) builds input gradients from these primitives.
"""

import threading

import numpy as np

cimport numpy as cnp
from libc.math cimport sqrt
from scipy.linalg.cython_blas cimport dgemm

cnp.import_array()

_tls = threading.local()


def _scratch(key, shape):
    # one persistent buffer per (key, shape); layers of different sizes
    # alternate every step and must not evict each other
    store = getattr(_tls, "bufs", None)
    if store is None:
        store = _tls.bufs = {}
    full_key = (key, shape)
    buf = store.get(full_key)
    if buf is None:
        buf = np.zeros(shape, dtype=np.float64)
        store[full_key] = buf
    return buf


cdef void _gemm_rowmajor(char op_a, char op_b, int m, int n, int k,
                         double alpha, double* a, int lda_row,
                         double* b, int ldb_row, double beta,
                         double* c) noexcept nogil:
    # Row-major C(m, n) = alpha * op(A)(m, k) @ op(B)(k, n) + beta * C,
    # expressed as the Fortran product C^T = op(B)^T op(A)^T.
    dgemm(&op_b, &op_a, &n, &m, &k, &alpha, b, &ldb_row, a, &lda_row,
          &beta, c, &n)


cdef void _im2col(double[:, :, :, ::1] x, double[:, ::1] cols,
                  int kh, int kw) noexcept nogil:
    cdef int bsz = x.shape[0], cin = x.shape[1], rows = x.shape[2], ncols = x.shape[3]
    cdef int ph = kh // 2, pw = kw // 2
    cdef int b, i, j, ci, u, v, ii, jj, row, col
    for b in range(bsz):
        for i in range(rows):
            for j in range(ncols):
                row = (b * rows + i) * ncols + j
                col = 0
                for ci in range(cin):
                    for u in range(kh):
                        ii = i + u - ph
                        for v in range(kw):
                            jj = j + v - pw
                            if 0 <= ii < rows and 0 <= jj < ncols:
                                cols[row, col] = x[b, ci, ii, jj]
                            else:
                                cols[row, col] = 0.0
                            col += 1


def conv2d_same(cnp.ndarray[double, ndim=4] x,
                cnp.ndarray[double, ndim=4] w,
                cnp.ndarray[double, ndim=1] b):
    """Cross-correlation with same padding.

    x: (B, Cin, M, N), w: (Cout, Cin, KH, KW) with odd kernel dims,
    b: (Cout,). Returns (B, Cout, M, N).
    """
    cdef int bsz = x.shape[0], cin = x.shape[1], rows = x.shape[2], ncols = x.shape[3]
    cdef int cout = w.shape[0], kh = w.shape[2], kw = w.shape[3]
    cdef int bmn = bsz * rows * ncols, ck = cin * kh * kw

    cols_arr = _scratch("fwd_cols", (bmn, ck))
    out2 = _scratch("fwd_out", (bmn, cout))
    cdef double[:, ::1] cols = cols_arr
    cdef double[:, ::1] o2 = out2
    cdef double[:, ::1] wmat = w.reshape(cout, ck)
    cdef double[::1] bias = b
    cdef double[:, :, :, ::1] xv = x
    cdef int row, co

    with nogil:
        _im2col(xv, cols, kh, kw)
        # out2 = cols @ wmat^T
        _gemm_rowmajor(b'N', b'T', bmn, cout, ck, 1.0,
                       &cols[0, 0], ck, &wmat[0, 0], ck, 0.0, &o2[0, 0])
        for row in range(bmn):
            for co in range(cout):
                o2[row, co] += bias[co]
    out = np.empty((bsz, cout, rows, ncols), dtype=np.float64)
    cdef double[:, :, :, ::1] ov = out
    cdef int bi, i, j
    with nogil:
        for bi in range(bsz):
            for co in range(cout):
                for i in range(rows):
                    for j in range(ncols):
                        ov[bi, co, i, j] = o2[(bi * rows + i) * ncols + j, co]
    return out


def conv_param_grads(cnp.ndarray[double, ndim=4] x,
                     cnp.ndarray[double, ndim=4] dy,
                     int kh, int kw):
    """Weight and bias gradients: dw (Cout, Cin*KH*KW), db (Cout,)."""
    cdef int bsz = x.shape[0], cin = x.shape[1], rows = x.shape[2], ncols = x.shape[3]
    cdef int cout = dy.shape[1]
    cdef int bmn = bsz * rows * ncols, ck = cin * kh * kw

    cols_arr = _scratch("pg_cols", (bmn, ck))
    dyc_arr = _scratch("pg_dyc", (bmn, cout))
    dw = np.empty((cout, ck), dtype=np.float64)
    db = np.zeros(cout, dtype=np.float64)

    cdef double[:, ::1] cols = cols_arr
    cdef double[:, ::1] dyc = dyc_arr
    cdef double[:, ::1] dwv = dw
    cdef double[::1] dbv = db
    cdef double[:, :, :, ::1] xv = x
    cdef double[:, :, :, ::1] dyv = dy
    cdef int bi, co, i, j, row

    with nogil:
        _im2col(xv, cols, kh, kw)
        for bi in range(bsz):
            for co in range(cout):
                for i in range(rows):
                    for j in range(ncols):
                        row = (bi * rows + i) * ncols + j
                        dyc[row, co] = dyv[bi, co, i, j]
                        dbv[co] += dyv[bi, co, i, j]
        # dw = dyc^T @ cols
        _gemm_rowmajor(b'T', b'N', cout, ck, bmn, 1.0,
                       &dyc[0, 0], cout, &cols[0, 0], ck, 0.0, &dwv[0, 0])
    return dw, db


def rmsprop_update(double[::1] params, double[::1] grads, double[::1] cache,
                   double lr, double decay, double eps):
    """Fused in-place RMSprop step."""
    cdef Py_ssize_t i, n = params.shape[0]
    cdef double g
    with nogil:
        for i in range(n):
            g = grads[i]
            cache[i] = decay * cache[i] + (1.0 - decay) * g * g
            params[i] -= lr * g / (sqrt(cache[i]) + eps)


cdef void _col2im(double[:, ::1] dcols, double[:, :, :, ::1] dx,
                  int kh, int kw) noexcept nogil:
    cdef int bsz = dx.shape[0], cin = dx.shape[1], rows = dx.shape[2], ncols = dx.shape[3]
    cdef int ph = kh // 2, pw = kw // 2
    cdef int b, i, j, ci, u, v, ii, jj, row, col
    for b in range(bsz):
        for i in range(rows):
            for j in range(ncols):
                row = (b * rows + i) * ncols + j
                col = 0
                for ci in range(cin):
                    for u in range(kh):
                        ii = i + u - ph
                        for v in range(kw):
                            jj = j + v - pw
                            if 0 <= ii < rows and 0 <= jj < ncols:
                                dx[b, ci, ii, jj] += dcols[row, col]
                            col += 1


def conv2d_same_bwd(cnp.ndarray[double, ndim=4] x,
                    cnp.ndarray[double, ndim=4] w,
                    cnp.ndarray[double, ndim=4] dy):
    """All gradients of conv2d_same: (dx, dw, db)."""
    cdef int bsz = x.shape[0], cin = x.shape[1], rows = x.shape[2], ncols = x.shape[3]
    cdef int cout = w.shape[0], kh = w.shape[2], kw = w.shape[3]
    cdef int bmn = bsz * rows * ncols, ck = cin * kh * kw

    cols_arr = _scratch("bwd_cols", (bmn, ck))
    dyc_arr = _scratch("bwd_dyc", (bmn, cout))
    dcols_arr = _scratch("bwd_dcols", (bmn, ck))
    dw = np.empty((cout, ck), dtype=np.float64)
    db = np.zeros(cout, dtype=np.float64)
    dx = np.zeros((bsz, cin, rows, ncols), dtype=np.float64)

    cdef double[:, ::1] cols = cols_arr
    cdef double[:, ::1] dyc = dyc_arr
    cdef double[:, ::1] dcols = dcols_arr
    cdef double[:, ::1] dwv = dw
    cdef double[::1] dbv = db
    cdef double[:, ::1] wmat = w.reshape(cout, ck)
    cdef double[:, :, :, ::1] xv = x
    cdef double[:, :, :, ::1] dyv = dy
    cdef double[:, :, :, ::1] dxv = dx
    cdef int bi, co, i, j, row

    with nogil:
        _im2col(xv, cols, kh, kw)
        for bi in range(bsz):
            for co in range(cout):
                for i in range(rows):
                    for j in range(ncols):
                        row = (bi * rows + i) * ncols + j
                        dyc[row, co] = dyv[bi, co, i, j]
                        dbv[co] += dyv[bi, co, i, j]
        # dw = dyc^T @ cols ; dcols = dyc @ wmat
        _gemm_rowmajor(b'T', b'N', cout, ck, bmn, 1.0,
                       &dyc[0, 0], cout, &cols[0, 0], ck, 0.0, &dwv[0, 0])
        _gemm_rowmajor(b'N', b'N', bmn, ck, cout, 1.0,
                       &dyc[0, 0], cout, &wmat[0, 0], ck, 0.0, &dcols[0, 0])
        _col2im(dcols, dxv, kh, kw)
    return dx, dw.reshape(cout, cin, kh, kw), db
