# cython: language_level=3, boundscheck=False, wraparound=False, cdivision=True
"""Compiled hot kernels: cell ownership and windowed weighted sums.

Same contracts as ``mink3d._fallback``.
"""
import itertools

import numpy as np

cimport numpy as cnp
from cython.parallel cimport prange

cnp.import_array()


def _cell_table():
    # For each of the 26 boundary cells of a unit voxel: its slot (0 face,
    # 1 edge, 2 vertex) and the offsets of the other incident voxels that
    # precede the voxel lexicographically.
    slots = []
    offsets = np.zeros((26, 7, 3), dtype=np.int64)
    n_smaller = np.zeros(26, dtype=np.int64)
    cell = 0
    for pos in itertools.product((-1, 0, 1), repeat=3):
        n_fixed = sum(1 for p in pos if p != 0)
        if n_fixed == 0:
            continue
        choices = [(0, p) if p != 0 else (0,) for p in pos]
        m = 0
        for off in itertools.product(*choices):
            if off != (0, 0, 0) and off < (0, 0, 0):
                offsets[cell, m] = off
                m += 1
        n_smaller[cell] = m
        slots.append(n_fixed - 1)
        cell += 1
    return np.asarray(slots, dtype=np.int64), offsets, n_smaller


_SLOTS, _OFFSETS, _N_SMALLER = _cell_table()


def owned_cells(white, int num_threads=1):
    cdef cnp.uint8_t[:, :, ::1] w = np.ascontiguousarray(white, dtype=np.uint8)
    cdef Py_ssize_t nx = w.shape[0], ny = w.shape[1], nz = w.shape[2]
    out_arr = np.zeros((nx, ny, nz, 3), dtype=np.int32)
    cdef int[:, :, :, ::1] out = out_arr
    cdef cnp.int64_t[::1] slots = _SLOTS
    cdef cnp.int64_t[:, :, ::1] offs = _OFFSETS
    cdef cnp.int64_t[::1] nsm = _N_SMALLER
    cdef Py_ssize_t i, j, k, c, m, a, b, d
    cdef bint owned
    for i in prange(nx, nogil=True, num_threads=num_threads, schedule="static"):
        for j in range(ny):
            for k in range(nz):
                if not w[i, j, k]:
                    continue
                for c in range(26):
                    owned = True
                    for m in range(nsm[c]):
                        a = i + offs[c, m, 0]
                        b = j + offs[c, m, 1]
                        d = k + offs[c, m, 2]
                        if 0 <= a < nx and 0 <= b < ny and 0 <= d < nz and w[a, b, d]:
                            owned = False
                            break
                    if owned:
                        out[i, j, k, slots[c]] += 1
    return out_arr


def window_sums(contrib, points, weights, int num_threads=1):
    cdef double[:, :, :, ::1] f = np.ascontiguousarray(contrib, dtype=np.float64)
    cdef cnp.int64_t[:, ::1] pts = np.ascontiguousarray(np.asarray(points).reshape(-1, 3), dtype=np.int64)
    cdef double[:, :, :, ::1] wts = np.ascontiguousarray(weights, dtype=np.float64)
    cdef Py_ssize_t nx = f.shape[0], ny = f.shape[1], nz = f.shape[2], nc = f.shape[3]
    cdef Py_ssize_t npts = pts.shape[0], nk = wts.shape[0]
    cdef Py_ssize_t rx = (wts.shape[1] - 1) // 2
    cdef Py_ssize_t ry = (wts.shape[2] - 1) // 2
    cdef Py_ssize_t rz = (wts.shape[3] - 1) // 2
    out_arr = np.zeros((npts, nk, nc), dtype=np.float64)
    cdef double[:, :, ::1] out = out_arr
    cdef Py_ssize_t q, a, b, d, i, j, k, kk, cc, a0, a1, b0, b1, d0, d1
    cdef double wv, fv
    cdef bint nonzero
    for q in prange(npts, nogil=True, num_threads=num_threads, schedule="static"):
        i = pts[q, 0]
        j = pts[q, 1]
        k = pts[q, 2]
        a0 = max(0, rx - i)
        a1 = min(2 * rx + 1, nx - i + rx)
        b0 = max(0, ry - j)
        b1 = min(2 * ry + 1, ny - j + ry)
        d0 = max(0, rz - k)
        d1 = min(2 * rz + 1, nz - k + rz)
        for a in range(a0, a1):
            for b in range(b0, b1):
                for d in range(d0, d1):
                    nonzero = False
                    for cc in range(nc):
                        if f[i + a - rx, j + b - ry, k + d - rz, cc] != 0.0:
                            nonzero = True
                            break
                    if not nonzero:
                        continue
                    for kk in range(nk):
                        wv = wts[kk, a, b, d]
                        for cc in range(nc):
                            fv = f[i + a - rx, j + b - ry, k + d - rz, cc]
                            out[q, kk, cc] += wv * fv
    return out_arr
