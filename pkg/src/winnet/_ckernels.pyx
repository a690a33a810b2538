# cython: boundscheck=False, wraparound=False, cdivision=True, initializedcheck=False
"""Compiled gather/scatter kernels for im2col convolution."""
import numpy as np

cimport cython


def im2col(const double[:, :, :, ::1] xp, Py_ssize_t f):
    """Unfold a padded batch (n, c, hp, wp) into per-sample columns (n, c*f*f, ho*wo)."""
    cdef Py_ssize_t n = xp.shape[0], c = xp.shape[1]
    cdef Py_ssize_t ho = xp.shape[2] - f + 1, wo = xp.shape[3] - f + 1
    cdef Py_ssize_t b, ch, i, j, y, x, row
    out = np.empty((n, c * f * f, ho * wo), dtype=np.float64)
    cdef double[:, :, ::1] cols = out
    with nogil:
        for b in range(n):
            for ch in range(c):
                for i in range(f):
                    for j in range(f):
                        row = (ch * f + i) * f + j
                        for y in range(ho):
                            for x in range(wo):
                                cols[b, row, y * wo + x] = xp[b, ch, y + i, x + j]
    return out


def col2im(const double[:, :, ::1] cols, Py_ssize_t c, Py_ssize_t hp, Py_ssize_t wp, Py_ssize_t f):
    """Adjoint of im2col: scatter-add per-sample columns back into a padded batch."""
    cdef Py_ssize_t n = cols.shape[0]
    cdef Py_ssize_t ho = hp - f + 1, wo = wp - f + 1
    cdef Py_ssize_t b, ch, i, j, y, x, row
    out = np.zeros((n, c, hp, wp), dtype=np.float64)
    cdef double[:, :, :, ::1] xp = out
    with nogil:
        for b in range(n):
            for ch in range(c):
                for i in range(f):
                    for j in range(f):
                        row = (ch * f + i) * f + j
                        for y in range(ho):
                            for x in range(wo):
                                xp[b, ch, y + i, x + j] += cols[b, row, y * wo + x]
    return out
