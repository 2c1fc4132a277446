# cython: boundscheck=False, wraparound=False, cdivision=True, language_level=3
"""Compiled hot loops: Laplacian smoothing sweep and CSR scatter-add."""
import numpy as np
cimport numpy as cnp

cnp.import_array()


cdef inline double _orient(double x0, double y0, double x1, double y1, double x2, double y2) nogil:
    return (x1 - x0) * (y2 - y0) - (y1 - y0) * (x2 - x0)


def smooth_sweep(double[:, ::1] xy, const cnp.int64_t[:, ::1] cells,
                 const cnp.int64_t[::1] adj_ptr, const cnp.int64_t[::1] adj,
                 const cnp.int64_t[::1] vc_ptr, const cnp.int64_t[::1] vc,
                 const cnp.uint8_t[::1] free):
    """One Gauss-Seidel Laplacian sweep in place; returns the number of accepted moves."""
    cdef Py_ssize_t v, k, c, a, b, d
    cdef double ox, oy, sx, sy
    cdef int moved = 0, ok
    for v in range(xy.shape[0]):
        if not free[v] or adj_ptr[v + 1] == adj_ptr[v]:
            continue
        ox = xy[v, 0]
        oy = xy[v, 1]
        sx = 0.0
        sy = 0.0
        for k in range(adj_ptr[v], adj_ptr[v + 1]):
            sx += xy[adj[k], 0]
            sy += xy[adj[k], 1]
        xy[v, 0] = sx / (adj_ptr[v + 1] - adj_ptr[v])
        xy[v, 1] = sy / (adj_ptr[v + 1] - adj_ptr[v])
        ok = 1
        for k in range(vc_ptr[v], vc_ptr[v + 1]):
            c = vc[k]
            a = cells[c, 0]
            b = cells[c, 1]
            d = cells[c, 2]
            if _orient(xy[a, 0], xy[a, 1], xy[b, 0], xy[b, 1], xy[d, 0], xy[d, 1]) <= 0.0:
                ok = 0
                break
        if ok:
            moved += 1
        else:
            xy[v, 0] = ox
            xy[v, 1] = oy
    return moved


def scatter_add(const cnp.int32_t[::1] indptr, const cnp.int32_t[::1] indices, double[::1] data,
                const cnp.int64_t[:, ::1] rows, const cnp.int64_t[:, ::1] cols,
                const double[:, :, ::1] values):
    """Add ``values[e, i, j]`` at ``(rows[e, i], cols[e, j])`` of a CSR matrix in place."""
    cdef Py_ssize_t e, i, j, r, c, lo, hi, mid
    with nogil:
        for e in range(rows.shape[0]):
            for i in range(rows.shape[1]):
                r = rows[e, i]
                for j in range(cols.shape[1]):
                    c = cols[e, j]
                    lo = indptr[r]
                    hi = indptr[r + 1] - 1
                    while lo < hi:
                        mid = (lo + hi) >> 1
                        if indices[mid] < c:
                            lo = mid + 1
                        else:
                            hi = mid
                    data[lo] += values[e, i, j]
