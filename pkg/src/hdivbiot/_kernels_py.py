"""Pure-Python/NumPy versions of the hot loops (fallback for the compiled module)."""
import numpy as np


def _orient(x0, y0, x1, y1, x2, y2):
    return (x1 - x0) * (y2 - y0) - (y1 - y0) * (x2 - x0)


def smooth_sweep(xy, cells, adj_ptr, adj, vc_ptr, vc, free):
    """One Gauss-Seidel Laplacian sweep in place; returns the number of accepted moves."""
    moved = 0
    for v in range(len(xy)):
        if not free[v]:
            continue
        nb = adj[adj_ptr[v]:adj_ptr[v + 1]]
        if len(nb) == 0:
            continue
        old = xy[v].copy()
        xy[v] = xy[nb].mean(axis=0)
        ok = True
        for c in vc[vc_ptr[v]:vc_ptr[v + 1]]:
            a, b, d = cells[c]
            if _orient(xy[a, 0], xy[a, 1], xy[b, 0], xy[b, 1], xy[d, 0], xy[d, 1]) <= 0.0:
                ok = False
                break
        if ok:
            moved += 1
        else:
            xy[v] = old
    return moved


def scatter_add(indptr, indices, data, rows, cols, values):
    """Add ``values[e, i, j]`` at ``(rows[e, i], cols[e, j])`` of a CSR matrix in place.

    The sparsity pattern must contain every target entry and have sorted
    column indices per row.
    """
    ne, nr = rows.shape
    nc = cols.shape[1]
    r = np.broadcast_to(rows[:, :, None], (ne, nr, nc)).ravel()
    c = np.broadcast_to(cols[:, None, :], (ne, nr, nc)).ravel()
    v = np.ascontiguousarray(values).ravel()
    ncols = np.int64(indices.max() + 1 if len(indices) else 1)
    row_of = np.repeat(np.arange(len(indptr) - 1, dtype=np.int64), np.diff(indptr))
    keys = row_of * ncols + indices
    pos = np.searchsorted(keys, r.astype(np.int64) * ncols + c)
    data += np.bincount(pos, weights=v, minlength=len(data))
