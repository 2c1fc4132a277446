"""Compare the compiled kernels with the NumPy fallback.

Run ``python benchmarks/bench_kernels.py``.  Each kernel is timed on the
workload it sees in practice: CSR scatter of a vector-valued SIP matrix
and one Laplacian smoothing sweep of a locally refined L-shaped mesh.
"""
import time

import numpy as np

from hdivbiot import _core, _kernels_py
from hdivbiot.cases import lshape_case
from hdivbiot.forms import MatrixBuilder, spaces
from hdivbiot.mesh import _vertex_adjacency, _vertex_cells, build_mesh, refine


def best_of(fn, repeat=5):
    times = []
    for _ in range(repeat):
        t0 = time.perf_counter()
        fn()
        times.append(time.perf_counter() - t0)
    return min(times)


def scatter_workload(n=32, k=1):
    mesh = build_mesh(lshape_case().geometry, n)
    V = spaces(mesh, k).V
    rng = np.random.default_rng(0)
    vals = rng.standard_normal((mesh.n_cells, V.cell_dofs.shape[1], V.cell_dofs.shape[1]))
    b = MatrixBuilder((V.n_dofs, V.n_dofs))
    b.add(V.cell_dofs, V.cell_dofs, vals)
    A = b.tocsr()
    args = (A.indptr.astype(np.int32), A.indices.astype(np.int32),
            np.ascontiguousarray(V.cell_dofs, dtype=np.int64), np.ascontiguousarray(V.cell_dofs, dtype=np.int64),
            vals)
    return A, args


def smooth_workload():
    mesh = build_mesh(lshape_case().geometry, 8)
    for _ in range(6):
        near = np.flatnonzero(np.hypot(*mesh.centroids.T) < 0.3)
        mesh = refine(mesh, near)
    adj_ptr, adj = _vertex_adjacency(mesh)
    vc_ptr, vc = _vertex_cells(mesh)
    free = (~mesh.fixed_vertices()).astype(np.uint8)
    return mesh, (np.ascontiguousarray(mesh.cells), adj_ptr, adj, vc_ptr, vc, free)


def main():
    if not _core.COMPILED:
        print("compiled kernels not available; only the fallback is timed")
    backends = [("fallback", _kernels_py)]
    if _core.COMPILED:
        backends.insert(0, ("compiled", _core.kernels))

    A, (indptr, indices, rows, cols, vals) = scatter_workload()
    ref = None
    print(f"scatter_add: {rows.shape[0]} cells x {rows.shape[1]}^2 entries, nnz {A.nnz}")
    for name, mod in backends:
        def run():
            data = np.zeros(len(indices))
            mod.scatter_add(indptr, indices, data, rows, cols, vals)
            return data
        t = best_of(run)
        out = run()
        ref = out if ref is None else ref
        print(f"  {name:9s} {t * 1e3:9.2f} ms   max diff {np.abs(out - ref).max():.1e}")

    mesh, (cells, adj_ptr, adj, vc_ptr, vc, free) = smooth_workload()
    print(f"smooth_sweep: {mesh.n_vertices} vertices")
    ref = None
    for name, mod in backends:
        def run():
            xy = np.array(mesh.vertices, dtype=float, copy=True)
            mod.smooth_sweep(xy, cells, adj_ptr, adj, vc_ptr, vc, free)
            return xy
        t = best_of(run, 3)
        out = run()
        ref = out if ref is None else ref
        print(f"  {name:9s} {t * 1e3:9.2f} ms   max diff {np.abs(out - ref).max():.1e}")


if __name__ == "__main__":
    main()
