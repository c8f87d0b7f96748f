# cython: language_level=3, boundscheck=False, wraparound=False, cdivision=True
"""Compiled inner loops for the tensor and quantizer kernels.

Every routine here has a numpy twin in ``_fallback``. Quantizers perform the
same IEEE operations in the same order as the twin, so both backends snap
values to bit-identical levels. Matmul and convolution hand the reduction to
BLAS ``dgemm`` (convolution after an im2col gather), so they agree with the
twin to rounding, not bitwise.
"""

import numpy as np
cimport numpy as cnp
from libc.math cimport floor, fabs
from scipy.linalg.cython_blas cimport dgemm

cnp.import_array()


cdef void _gemm_rowmajor(int m, int n, int k, const double* a, const double* b, double* c) noexcept nogil:
    # row-major C(m,n) = A(m,k) B(k,n), i.e. column-major C^T = B^T A^T
    cdef char t = b'N'
    cdef double one = 1.0, zero = 0.0
    dgemm(&t, &t, &n, &m, &k, &one, <double*>b, &n, <double*>a, &k, &zero, c, &n)


def matmul(const double[:, ::1] a, const double[:, ::1] b):
    cdef int m = a.shape[0], kk = a.shape[1], n = b.shape[1]
    out = np.zeros((m, n), dtype=np.float64)
    cdef double[:, ::1] o = out
    if m == 0 or n == 0 or kk == 0:
        return out
    _gemm_rowmajor(m, n, kk, &a[0, 0], &b[0, 0], &o[0, 0])
    return out


def conv2d(const double[:, :, ::1] x, const double[:, :, :, ::1] w,
           Py_ssize_t stride, Py_ssize_t pad):
    cdef Py_ssize_t cin = x.shape[0], h = x.shape[1], wd = x.shape[2]
    cdef Py_ssize_t cout = w.shape[0], k = w.shape[2]
    cdef Py_ssize_t ho = (h + 2 * pad - k) // stride + 1
    cdef Py_ssize_t wo = (wd + 2 * pad - k) // stride + 1
    cdef Py_ssize_t ci, oy, ox, ky, kx, iy, ix, row
    cdef Py_ssize_t npix = ho * wo
    # im2col: one row per (ci, ky, kx), one column per output pixel
    col_buf = np.zeros((cin * k * k, npix), dtype=np.float64)
    cdef double[:, ::1] cb = col_buf
    for ci in range(cin):
        for ky in range(k):
            for kx in range(k):
                row = (ci * k + ky) * k + kx
                for oy in range(ho):
                    iy = oy * stride + ky - pad
                    if iy < 0 or iy >= h:
                        continue
                    for ox in range(wo):
                        ix = ox * stride + kx - pad
                        if 0 <= ix < wd:
                            cb[row, oy * wo + ox] = x[ci, iy, ix]
    out = np.empty((cout, ho, wo), dtype=np.float64)
    cdef double[:, :, ::1] o = out
    if cout and npix and cin:
        _gemm_rowmajor(<int>cout, <int>npix, <int>(cin * k * k), &w[0, 0, 0, 0], &cb[0, 0], &o[0, 0, 0])
    elif cout and npix:
        out[...] = 0.0
    return out


def quantize_uniform(const double[::1] x, double lo, double hi, double n_steps):
    """Snap to ``lo + i * step`` for i in 0..n_steps, ties away from zero."""
    cdef Py_ssize_t i, size = x.shape[0]
    cdef double step = (hi - lo) / n_steps
    cdef double v, t, f, frac, down, up
    out = np.empty(size, dtype=np.float64)
    cdef double[::1] o = out
    for i in range(size):
        v = x[i]
        if v < lo:
            v = lo
        elif v > hi:
            v = hi
        t = (v - lo) / step
        f = floor(t)
        frac = t - f
        if frac > 0.5:
            f = f + 1.0
        elif frac == 0.5:
            down = lo + f * step
            up = lo + (f + 1.0) * step
            if fabs(up) >= fabs(down):
                f = f + 1.0
        if f > n_steps:
            f = n_steps
        o[i] = lo + f * step
    return out


def quantize_midrise(const double[::1] x, double step, double half_levels):
    """Snap to ``±(j + 1/2) * step`` for j in 0..half_levels-1."""
    cdef Py_ssize_t i, size = x.shape[0]
    cdef double v, j, top = half_levels - 1.0
    out = np.empty(size, dtype=np.float64)
    cdef double[::1] o = out
    for i in range(size):
        v = x[i]
        j = floor(fabs(v) / step)
        if j > top:
            j = top
        if v >= 0.0:
            o[i] = (j + 0.5) * step
        else:
            o[i] = -((j + 0.5) * step)
    return out
