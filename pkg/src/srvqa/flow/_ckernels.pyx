# cython: boundscheck=False, wraparound=False, cdivision=True
"""Compiled twins of the numpy flow kernels (see _npkernels.py)."""
import numpy as np

cimport numpy as cnp

cnp.import_array()

BACKEND = "cython"


cdef inline Py_ssize_t _reflect(Py_ssize_t i, Py_ssize_t n) nogil:
    # symmetric reflection, matching scipy.ndimage mode="reflect"
    if i < 0:
        i = -i - 1
    if i >= n:
        i = 2 * n - 1 - i
    return i


cdef void _box_blur_2d(double[:, :] src, double[:, :] dst, double[:, :] tmp, int size) nogil:
    cdef Py_ssize_t h = src.shape[0]
    cdef Py_ssize_t w = src.shape[1]
    cdef Py_ssize_t half = size // 2
    cdef Py_ssize_t i, j, k
    cdef double acc, inv = 1.0 / size
    for i in range(h):
        for j in range(w):
            acc = 0.0
            for k in range(-half, half + 1):
                acc += src[_reflect(i + k, h), j]
            tmp[i, j] = acc * inv
    for i in range(h):
        for j in range(w):
            acc = 0.0
            for k in range(-half, half + 1):
                acc += tmp[i, _reflect(j + k, w)]
            dst[i, j] = acc * inv


def flow_update(a1, b1, a2w, b2w, d0, int winsize):
    """One Farneback displacement refinement pass (compiled path)."""
    cdef cnp.ndarray[cnp.float64_t, ndim=4] a1_ = np.ascontiguousarray(a1)
    cdef cnp.ndarray[cnp.float64_t, ndim=4] a2_ = np.ascontiguousarray(a2w)
    cdef cnp.ndarray[cnp.float64_t, ndim=3] b1_ = np.ascontiguousarray(b1)
    cdef cnp.ndarray[cnp.float64_t, ndim=3] b2_ = np.ascontiguousarray(b2w)
    cdef cnp.ndarray[cnp.float64_t, ndim=3] d0_ = np.ascontiguousarray(d0)
    cdef Py_ssize_t h = a1_.shape[0]
    cdef Py_ssize_t w = a1_.shape[1]

    cdef cnp.ndarray[cnp.float64_t, ndim=2] g11 = np.empty((h, w))
    cdef cnp.ndarray[cnp.float64_t, ndim=2] g12 = np.empty((h, w))
    cdef cnp.ndarray[cnp.float64_t, ndim=2] g22 = np.empty((h, w))
    cdef cnp.ndarray[cnp.float64_t, ndim=2] h1 = np.empty((h, w))
    cdef cnp.ndarray[cnp.float64_t, ndim=2] h2 = np.empty((h, w))
    cdef cnp.ndarray[cnp.float64_t, ndim=2] tmp = np.empty((h, w))
    cdef cnp.ndarray[cnp.float64_t, ndim=3] out = np.zeros((h, w, 2))

    cdef Py_ssize_t i, j
    cdef double a00, a01, a10, a11v, dbx, dby, det, bg11, bg12, bg22, bh1, bh2
    for i in range(h):
        for j in range(w):
            a00 = 0.5 * (a1_[i, j, 0, 0] + a2_[i, j, 0, 0])
            a01 = 0.5 * (a1_[i, j, 0, 1] + a2_[i, j, 0, 1])
            a10 = 0.5 * (a1_[i, j, 1, 0] + a2_[i, j, 1, 0])
            a11v = 0.5 * (a1_[i, j, 1, 1] + a2_[i, j, 1, 1])
            dbx = -0.5 * (b2_[i, j, 0] - b1_[i, j, 0]) + a00 * d0_[i, j, 0] + a01 * d0_[i, j, 1]
            dby = -0.5 * (b2_[i, j, 1] - b1_[i, j, 1]) + a10 * d0_[i, j, 0] + a11v * d0_[i, j, 1]
            g11[i, j] = a00 * a00 + a10 * a10
            g12[i, j] = a00 * a01 + a10 * a11v
            g22[i, j] = a01 * a01 + a11v * a11v
            h1[i, j] = a00 * dbx + a10 * dby
            h2[i, j] = a01 * dbx + a11v * dby

    _box_blur_2d(g11, g11, tmp, winsize)
    _box_blur_2d(g12, g12, tmp, winsize)
    _box_blur_2d(g22, g22, tmp, winsize)
    _box_blur_2d(h1, h1, tmp, winsize)
    _box_blur_2d(h2, h2, tmp, winsize)

    for i in range(h):
        for j in range(w):
            det = g11[i, j] * g22[i, j] - g12[i, j] * g12[i, j]
            if det > 1e-12:
                out[i, j, 0] = (g22[i, j] * h1[i, j] - g12[i, j] * h2[i, j]) / det
                out[i, j, 1] = (g11[i, j] * h2[i, j] - g12[i, j] * h1[i, j]) / det
    return out


def block_match(prev, nxt, int block, int radius):
    """Exhaustive integer SAD block search (compiled path)."""
    cdef cnp.ndarray[cnp.float64_t, ndim=2] p = np.ascontiguousarray(prev)
    cdef cnp.ndarray[cnp.float64_t, ndim=2] n = np.ascontiguousarray(nxt)
    cdef Py_ssize_t h = p.shape[0]
    cdef Py_ssize_t w = p.shape[1]
    cdef Py_ssize_t by = h // block
    cdef Py_ssize_t bx = w // block
    cdef cnp.ndarray[cnp.float64_t, ndim=3] field = np.zeros((h, w, 2))
    if by == 0 or bx == 0:
        return field

    # candidates in (magnitude^2, dy, dx) order -> deterministic tie-break
    cands = sorted(
        (dy * dy + dx * dx, dy, dx)
        for dy in range(-radius, radius + 1)
        for dx in range(-radius, radius + 1)
    )
    cdef cnp.ndarray[cnp.int64_t, ndim=2] cand = np.array(cands, dtype=np.int64)
    cdef Py_ssize_t ncand = cand.shape[0]

    cdef Py_ssize_t bi, bj, ci, y0, x0, yy, xx, u, v
    cdef long dy, dx
    cdef double best, sad, diff
    cdef long best_dy, best_dx
    for bi in range(by):
        for bj in range(bx):
            y0 = bi * block
            x0 = bj * block
            best = np.inf
            best_dy = 0
            best_dx = 0
            for ci in range(ncand):
                dy = cand[ci, 1]
                dx = cand[ci, 2]
                yy = y0 + dy
                xx = x0 + dx
                if yy < 0 or xx < 0 or yy + block > h or xx + block > w:
                    continue
                sad = 0.0
                for u in range(block):
                    for v in range(block):
                        diff = p[y0 + u, x0 + v] - n[yy + u, xx + v]
                        if diff < 0:
                            diff = -diff
                        sad += diff
                        if sad >= best:
                            break
                    if sad >= best:
                        break
                if sad < best:
                    best = sad
                    best_dy = dy
                    best_dx = dx
            for u in range(block):
                for v in range(block):
                    field[y0 + u, x0 + v, 0] = best_dx
                    field[y0 + u, x0 + v, 1] = best_dy
    return field
