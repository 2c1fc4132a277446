"""Triangular meshes of two-subdomain geometries.

A :class:`Mesh` stores counter-clockwise triangles whose first two vertices
span the refinement edge (newest-vertex bisection convention), a subdomain
tag per cell, and the facet topology with one tag per facet.  Meshes are
treated as immutable values: :func:`refine` and :func:`laplacian_smooth`
return new meshes.
"""
from __future__ import annotations

from dataclasses import dataclass, field
from enum import IntEnum
from typing import Callable, Mapping, Sequence

import numpy as np

from ._core import kernels
from .exceptions import InvalidGeometry

_KEY = np.int64(1) << 31


class CellTag(IntEnum):
    E = 0
    P = 1


class FacetTag(IntEnum):
    INT_E = 0
    INT_P = 1
    SIGMA = 2
    GDIR_E = 3
    GNEU_E = 4
    GDIR_P = 5
    GNEU_P = 6


BOUNDARY_TAGS = (FacetTag.GDIR_E, FacetTag.GNEU_E, FacetTag.GDIR_P, FacetTag.GNEU_P)


def _edge_keys(a, b):
    a = np.asarray(a, dtype=np.int64)
    b = np.asarray(b, dtype=np.int64)
    return np.minimum(a, b) * _KEY + np.maximum(a, b)


@dataclass(frozen=True, eq=False)
class Mesh:
    """Conforming triangulation with subdomain and facet tags.

    Attributes
    ----------
    vertices : (nv, 2) float array
    cells : (nc, 3) int array
        Counter-clockwise; ``cells[:, :2]`` is the refinement edge.
    cell_tag : (nc,) int array of :class:`CellTag`
    facets : (nf, 2) int array
        Vertex pairs, lower vertex index first.
    facet_cells : (nf, 2) int array
        Incident cells; ``-1`` in the second column on the boundary.  The
        global facet normal is the outward normal of ``facet_cells[:, 0]``.
        On interior facets the first cell has the lower index, except on
        SIGMA where it is the poroelastic cell (normal points from P to E).
    facet_local : (nf, 2) int array
        Local edge index of the facet in each incident cell (local edge ``j``
        is opposite local vertex ``j``).
    facet_tag : (nf,) int array of :class:`FacetTag`
    cell_facets : (nc, 3) int array
    parent : (nc,) int array or None
        Cell of the previous mesh each cell descends from (after refine).
    """

    vertices: np.ndarray
    cells: np.ndarray
    cell_tag: np.ndarray
    facets: np.ndarray
    facet_cells: np.ndarray
    facet_local: np.ndarray
    facet_tag: np.ndarray
    cell_facets: np.ndarray
    parent: np.ndarray | None = None
    _cache: dict = field(default_factory=dict, repr=False, compare=False)

    @classmethod
    def from_cells(cls, vertices, cells, cell_tag, boundary_tag, parent=None) -> "Mesh":
        """Build the facet topology.

        ``boundary_tag`` maps boundary facets to tags; it is either a callable
        ``f(midpoints, subdomain_tags) -> tags`` or a mapping from sorted
        vertex pairs ``(a, b)`` to tags.
        """
        vertices = np.ascontiguousarray(vertices, dtype=float)
        cells = np.ascontiguousarray(cells, dtype=np.int64)
        cell_tag = np.ascontiguousarray(cell_tag, dtype=np.int64)
        nc = len(cells)
        # local edge j is opposite local vertex j
        a = cells[:, [1, 2, 0]].ravel()
        b = cells[:, [2, 0, 1]].ravel()
        keys = _edge_keys(a, b)
        uniq, inv, counts = np.unique(keys, return_inverse=True, return_counts=True)
        if np.any(counts > 2):
            raise InvalidGeometry("non-manifold edge in triangulation")
        nf = len(uniq)
        facets = np.column_stack([uniq // _KEY, uniq % _KEY]).astype(np.int64)
        cell_facets = inv.reshape(nc, 3)
        owner = np.repeat(np.arange(nc), 3)
        local = np.tile(np.arange(3), nc)
        order = np.lexsort((owner, inv))
        inv_s, owner_s, local_s = inv[order], owner[order], local[order]
        first = np.ones(len(inv_s), dtype=bool)
        first[1:] = inv_s[1:] != inv_s[:-1]
        facet_cells = -np.ones((nf, 2), dtype=np.int64)
        facet_local = -np.ones((nf, 2), dtype=np.int64)
        facet_cells[inv_s[first], 0] = owner_s[first]
        facet_local[inv_s[first], 0] = local_s[first]
        facet_cells[inv_s[~first], 1] = owner_s[~first]
        facet_local[inv_s[~first], 1] = local_s[~first]

        interior = facet_cells[:, 1] >= 0
        tags = np.empty(nf, dtype=np.int64)
        t0 = cell_tag[facet_cells[:, 0]]
        t1 = np.where(interior, cell_tag[np.maximum(facet_cells[:, 1], 0)], -1)
        sigma = interior & (t0 != t1)
        tags[interior & ~sigma & (t0 == CellTag.E)] = FacetTag.INT_E
        tags[interior & ~sigma & (t0 == CellTag.P)] = FacetTag.INT_P
        tags[sigma] = FacetTag.SIGMA
        # SIGMA: first cell is the poroelastic one
        swap = sigma & (t0 == CellTag.E)
        facet_cells[swap] = facet_cells[swap][:, ::-1]
        facet_local[swap] = facet_local[swap][:, ::-1]

        bnd = np.flatnonzero(~interior)
        if len(bnd):
            if callable(boundary_tag):
                mids = 0.5 * (vertices[facets[bnd, 0]] + vertices[facets[bnd, 1]])
                btags = np.asarray(boundary_tag(mids, cell_tag[facet_cells[bnd, 0]]), dtype=np.int64)
            else:
                btags = np.array([boundary_tag[(int(facets[f, 0]), int(facets[f, 1]))] for f in bnd],
                                 dtype=np.int64)
            tags[bnd] = btags
        mesh = cls(vertices, cells, cell_tag, facets, facet_cells, facet_local, tags, cell_facets,
                   None if parent is None else np.asarray(parent, dtype=np.int64))
        mesh.validate()
        return mesh

    # ------------------------------------------------------------------
    @property
    def n_cells(self) -> int:
        return len(self.cells)

    @property
    def n_facets(self) -> int:
        return len(self.facets)

    @property
    def n_vertices(self) -> int:
        return len(self.vertices)

    def _cached(self, name, fn):
        if name not in self._cache:
            value = fn()
            if isinstance(value, np.ndarray):
                value.setflags(write=False)
            self._cache[name] = value
        return self._cache[name]

    @property
    def jacobians(self) -> np.ndarray:
        """(nc, 2, 2) affine map Jacobians, columns ``v1 - v0`` and ``v2 - v0``."""
        def f():
            X = self.vertices[self.cells]
            return np.stack([X[:, 1] - X[:, 0], X[:, 2] - X[:, 0]], axis=2)
        return self._cached("J", f)

    @property
    def areas(self) -> np.ndarray:
        def f():
            J = self.jacobians
            return 0.5 * (J[:, 0, 0] * J[:, 1, 1] - J[:, 0, 1] * J[:, 1, 0])
        return self._cached("areas", f)

    @property
    def facet_lengths(self) -> np.ndarray:
        return self._cached("hf", lambda: np.linalg.norm(
            self.vertices[self.facets[:, 1]] - self.vertices[self.facets[:, 0]], axis=1))

    @property
    def cell_diameters(self) -> np.ndarray:
        return self._cached("hK", lambda: self.facet_lengths[self.cell_facets].max(axis=1))

    @property
    def facet_normals(self) -> np.ndarray:
        """(nf, 2) unit normals, outward from ``facet_cells[:, 0]``."""
        def f():
            t = self.vertices[self.facets[:, 1]] - self.vertices[self.facets[:, 0]]
            n = np.column_stack([t[:, 1], -t[:, 0]]) / self.facet_lengths[:, None]
            c = self.vertices[self.cells[self.facet_cells[:, 0]]].mean(axis=1)
            mid = 0.5 * (self.vertices[self.facets[:, 0]] + self.vertices[self.facets[:, 1]])
            flip = np.einsum("ij,ij->i", n, mid - c) < 0
            n[flip] *= -1
            return n
        return self._cached("normals", f)

    @property
    def centroids(self) -> np.ndarray:
        return self._cached("centroids", lambda: self.vertices[self.cells].mean(axis=1))

    @property
    def facet_midpoints(self) -> np.ndarray:
        return self._cached("fmid", lambda: 0.5 * (self.vertices[self.facets[:, 0]]
                                                     + self.vertices[self.facets[:, 1]]))

    def facets_with_tag(self, *tags) -> np.ndarray:
        return np.flatnonzero(np.isin(self.facet_tag, np.array(tags, dtype=np.int64)))

    def cells_with_tag(self, tag) -> np.ndarray:
        return np.flatnonzero(self.cell_tag == tag)

    def boundary_tag_map(self) -> dict:
        bnd = np.flatnonzero(self.facet_cells[:, 1] < 0)
        return {(int(self.facets[f, 0]), int(self.facets[f, 1])): int(self.facet_tag[f]) for f in bnd}

    def fixed_vertices(self) -> np.ndarray:
        """Boolean mask of vertices on the boundary, on SIGMA, or shared by both subdomains."""
        fixed = np.zeros(self.n_vertices, dtype=bool)
        special = (self.facet_cells[:, 1] < 0) | (self.facet_tag == FacetTag.SIGMA)
        fixed[self.facets[special].ravel()] = True
        seen_e = np.zeros(self.n_vertices, dtype=bool)
        seen_p = np.zeros(self.n_vertices, dtype=bool)
        seen_e[self.cells[self.cell_tag == CellTag.E].ravel()] = True
        seen_p[self.cells[self.cell_tag == CellTag.P].ravel()] = True
        return fixed | (seen_e & seen_p)

    def validate(self) -> None:
        if np.any(self.areas <= 0):
            raise InvalidGeometry("mesh has non-positive cell areas")
        interior = self.facet_cells[:, 1] >= 0
        sigma = self.facet_tag == FacetTag.SIGMA
        t0 = self.cell_tag[self.facet_cells[:, 0]]
        t1 = self.cell_tag[np.maximum(self.facet_cells[:, 1], 0)]
        if np.any(sigma != (interior & (t0 != t1))):
            raise InvalidGeometry("SIGMA tags do not match subdomain changes")
        btags = self.facet_tag[~interior]
        if not np.all(np.isin(btags, np.array(BOUNDARY_TAGS))):
            raise InvalidGeometry("boundary facet without boundary tag")
        # boundary tag subdomain must agree with the incident cell
        sub = self.cell_tag[self.facet_cells[~interior, 0]]
        is_p = np.isin(btags, [FacetTag.GDIR_P, FacetTag.GNEU_P])
        if np.any(is_p != (sub == CellTag.P)):
            raise InvalidGeometry("boundary tag subdomain disagrees with incident cell")
        dirichlet = np.isin(self.facet_tag, [FacetTag.GDIR_E, FacetTag.GDIR_P])
        if self.facet_lengths[dirichlet].sum() <= 0:
            raise InvalidGeometry("displacement Dirichlet boundary has zero length")


# ----------------------------------------------------------------------
# geometry specifications


@dataclass(frozen=True)
class GeometrySpec:
    """Geometry of the two-subdomain problem.

    ``shape`` is one of ``UNIT_SQUARE_SPLIT``, ``RECTANGLE_STRIPE`` or
    ``L_SHAPE_ZIGZAG``.  ``params`` holds the shape parameters (see
    :func:`build_mesh`); ``boundary`` optionally overrides the default
    boundary partition with ``f(midpoints, subdomain_tags) -> tags``.
    """

    shape: str
    params: Mapping = field(default_factory=dict)
    boundary: Callable | None = None

    def area(self) -> float:
        if self.shape == "UNIT_SQUARE_SPLIT":
            return 1.0
        if self.shape == "RECTANGLE_STRIPE":
            x0, x1, y0, y1 = self.params.get("box", (0.0, 0.25, 0.17, 0.25))
            return (x1 - x0) * (y1 - y0)
        if self.shape == "L_SHAPE_ZIGZAG":
            return 3.0
        raise InvalidGeometry(f"unknown shape {self.shape!r}")


DEFAULT_ZIGZAG = ((0.0, 0.0), (-0.5, 0.0), (-0.5, -0.5), (-1.0, -1.0))


def _grid_cells(nx, ny, keep=None):
    """Diagonal-split structured grid on index space; diagonals run along (1, 1)."""
    vid = np.arange((nx + 1) * (ny + 1)).reshape(ny + 1, nx + 1)
    i, j = np.meshgrid(np.arange(nx), np.arange(ny), indexing="xy")
    i, j = i.ravel(), j.ravel()
    if keep is not None:
        mask = keep(i, j)
        i, j = i[mask], j[mask]
    a = vid[j, i]
    b = vid[j, i + 1]
    c = vid[j + 1, i + 1]
    d = vid[j + 1, i]
    # refinement edge is the diagonal a-c in both halves
    lower = np.column_stack([c, a, b])
    upper = np.column_stack([a, c, d])
    cells = np.empty((2 * len(a), 3), dtype=np.int64)
    cells[0::2] = lower
    cells[1::2] = upper
    return cells


def _compact(vertices, cells):
    used = np.unique(cells)
    remap = -np.ones(len(vertices), dtype=np.int64)
    remap[used] = np.arange(len(used))
    return vertices[used], remap[cells]


def _is_multiple(value, step, tol=1e-9):
    r = value / step
    return abs(r - round(r)) < tol


def _points_in_polygon(points, poly):
    poly = np.asarray(poly, dtype=float)
    x, y = points[:, 0], points[:, 1]
    inside = np.zeros(len(points), dtype=bool)
    for k in range(len(poly)):
        x1, y1 = poly[k]
        x2, y2 = poly[(k + 1) % len(poly)]
        crosses = (y1 > y) != (y2 > y)
        with np.errstate(divide="ignore", invalid="ignore"):
            xint = x1 + (y - y1) * (x2 - x1) / (y2 - y1)
        inside ^= crosses & (x < xint)
    return inside


def _on_polyline(points, path, tol=1e-10):
    path = np.asarray(path, dtype=float)
    ok = np.zeros(len(points), dtype=bool)
    for p, q in zip(path[:-1], path[1:]):
        d = q - p
        t = np.clip(((points - p) @ d) / (d @ d), 0.0, 1.0)
        dist = np.linalg.norm(points - (p + t[:, None] * d), axis=1)
        ok |= dist < tol
    return ok


def _check_interface(mesh, path):
    path = np.asarray(path, dtype=float)
    sig = mesh.facets_with_tag(FacetTag.SIGMA)
    expected = np.linalg.norm(np.diff(path, axis=0), axis=1).sum()
    got = mesh.facet_lengths[sig].sum()
    if not np.all(_on_polyline(mesh.facet_midpoints[sig], path)) or abs(got - expected) > 1e-9 * max(1.0, expected):
        raise InvalidGeometry("interface path is not a union of mesh facets at this resolution")


def _square_boundary(mids, sub):
    # Dirichlet displacement on the whole boundary of both subdomains
    return np.where(sub == CellTag.E, FacetTag.GDIR_E, FacetTag.GDIR_P)


def _stripe_boundary(box, ys):
    x0, x1, y0, y1 = box

    def f(mids, sub):
        tags = np.empty(len(mids), dtype=np.int64)
        bottom = np.isclose(mids[:, 1], y0)
        top = np.isclose(mids[:, 1], y1)
        e = sub == CellTag.E
        tags[e] = np.where(bottom[e], FacetTag.GDIR_E, FacetTag.GNEU_E)
        tags[~e] = np.where(top[~e], FacetTag.GDIR_P, FacetTag.GNEU_P)
        return tags
    return f


def _lshape_boundary(mids, sub):
    top = np.isclose(mids[:, 1], 1.0)
    return np.where(sub == CellTag.E, FacetTag.GDIR_E,
                    np.where(top, FacetTag.GNEU_P, FacetTag.GDIR_P))


def build_mesh(spec: GeometrySpec, resolution: int) -> Mesh:
    """Structured initial mesh for a geometry.

    ``UNIT_SQUARE_SPLIT``: unit square, ``n x n`` squares split into ``2 n^2``
    triangles; ``params['split']`` (default 0.5) is the interface height with
    the elastic part above.  ``RECTANGLE_STRIPE``: ``params['box']`` =
    ``(x0, x1, y0, y1)``, elastic stripe ``y < params['stripe']`` resolved by
    ``resolution`` layers; the in-plane size is ``params['h_ref'] /
    resolution``.  ``L_SHAPE_ZIGZAG``: ``(-1, 1)^2`` minus the first quadrant,
    grid spacing ``1 / resolution``, interface polyline ``params['zigzag']``
    with the poroelastic part above it.
    """
    n = int(resolution)
    if n < 1:
        raise InvalidGeometry("resolution must be >= 1")
    p = dict(spec.params)
    if spec.shape == "UNIT_SQUARE_SPLIT":
        split = float(p.get("split", 0.5))
        if not (0.0 < split < 1.0) or not _is_multiple(split, 1.0 / n):
            raise InvalidGeometry(f"split y={split} is not a grid line at resolution {n}")
        xs = np.linspace(0.0, 1.0, n + 1)
        X, Y = np.meshgrid(xs, xs, indexing="xy")
        vertices = np.column_stack([X.ravel(), Y.ravel()])
        cells = _grid_cells(n, n)
        cent = vertices[cells].mean(axis=1)
        tags = np.where(cent[:, 1] > split, CellTag.E, CellTag.P)
        mesh = Mesh.from_cells(vertices, cells, tags, spec.boundary or _square_boundary)
        _check_interface(mesh, [(0.0, split), (1.0, split)])
        return mesh
    if spec.shape == "RECTANGLE_STRIPE":
        x0, x1, y0, y1 = p.get("box", (0.0, 0.25, 0.17, 0.25))
        ys = float(p.get("stripe", 0.1705))
        if not (y0 < ys < y1):
            raise InvalidGeometry("stripe must lie inside the box")
        h = float(p.get("h_ref", 0.05)) / n
        nx = max(1, int(round((x1 - x0) / h)))
        ny_p = max(1, int(np.ceil((y1 - ys) / h - 1e-9)))
        yv = np.concatenate([np.linspace(y0, ys, n + 1), np.linspace(ys, y1, ny_p + 1)[1:]])
        xv = np.linspace(x0, x1, nx + 1)
        X, Y = np.meshgrid(xv, yv, indexing="xy")
        vertices = np.column_stack([X.ravel(), Y.ravel()])
        cells = _grid_cells(nx, len(yv) - 1)
        cent = vertices[cells].mean(axis=1)
        tags = np.where(cent[:, 1] < ys, CellTag.E, CellTag.P)
        return Mesh.from_cells(vertices, cells, tags,
                               spec.boundary or _stripe_boundary((x0, x1, y0, y1), ys))
    if spec.shape == "L_SHAPE_ZIGZAG":
        path = np.asarray(p.get("zigzag", DEFAULT_ZIGZAG), dtype=float)
        step = 1.0 / n
        for q0, q1 in zip(path[:-1], path[1:]):
            d = q1 - q0
            if not (np.all([_is_multiple(c, step) for c in (*q0, *q1)])
                    and (abs(d[0]) < 1e-12 or abs(d[1]) < 1e-12 or abs(d[0] - d[1]) < 1e-12)):
                raise InvalidGeometry("zig-zag segment not representable at this resolution")
        m = 2 * n
        xs = np.linspace(-1.0, 1.0, m + 1)
        X, Y = np.meshgrid(xs, xs, indexing="xy")
        vertices = np.column_stack([X.ravel(), Y.ravel()])
        cells = _grid_cells(m, m, keep=lambda i, j: ~((i >= n) & (j >= n)))
        vertices, cells = _compact(vertices, cells)
        # P is the region above the path: path runs from the re-entrant corner to the left edge
        poly = np.vstack([[(0.0, 1.0), (-1.0, 1.0)], path[::-1]])
        cent = vertices[cells].mean(axis=1)
        tags = np.where(_points_in_polygon(cent, poly), CellTag.P, CellTag.E)
        mesh = Mesh.from_cells(vertices, cells, tags, spec.boundary or _lshape_boundary)
        _check_interface(mesh, path)
        return mesh
    raise InvalidGeometry(f"unknown shape {spec.shape!r}")


# ----------------------------------------------------------------------
# refinement


def refine(mesh: Mesh, marked) -> Mesh:
    """Newest-vertex bisection of the marked cells with conforming closure.

    All edges of marked cells are bisected; refinement edges of neighbours
    are added until the marked edge set is closed.  The returned mesh has a
    ``parent`` array mapping each cell to its cell in ``mesh``.
    """
    marked = np.unique(np.asarray(sorted(marked) if isinstance(marked, (set, frozenset)) else marked,
                                  dtype=np.int64))
    if marked.size and (marked.min() < 0 or marked.max() >= mesh.n_cells):
        raise IndexError("marked cell index out of range")
    if marked.size == 0:
        return mesh
    edge_marked = np.zeros(mesh.n_facets, dtype=bool)
    edge_marked[mesh.cell_facets[marked].ravel()] = True
    ref = mesh.cell_facets[:, 2]
    while True:
        need = edge_marked[mesh.cell_facets].any(axis=1) & ~edge_marked[ref]
        if not need.any():
            break
        edge_marked[ref[need]] = True

    vertices = [mesh.vertices]
    nv = mesh.n_vertices
    cells = mesh.cells.copy()
    tags = mesh.cell_tag.copy()
    parent = np.arange(mesh.n_cells, dtype=np.int64)
    fk = _edge_keys(mesh.facets[:, 0], mesh.facets[:, 1])
    marked_keys = np.sort(fk[edge_marked])
    mid_of = -np.ones(len(marked_keys), dtype=np.int64)
    btags = {int(k): int(t) for k, t in zip(fk[mesh.facet_cells[:, 1] < 0],
                                            mesh.facet_tag[mesh.facet_cells[:, 1] < 0])}
    while True:
        rk = _edge_keys(cells[:, 0], cells[:, 1])
        pos = np.searchsorted(marked_keys, rk)
        pos = np.minimum(pos, len(marked_keys) - 1)
        hit = marked_keys[pos] == rk
        if not hit.any():
            break
        new_edges = np.unique(pos[hit][mid_of[pos[hit]] < 0])
        if len(new_edges):
            ka = marked_keys[new_edges] // _KEY
            kb = marked_keys[new_edges] % _KEY
            allv = np.vstack(vertices)
            vertices.append(0.5 * (allv[ka] + allv[kb]))
            mid_of[new_edges] = nv + np.arange(len(new_edges))
            for e, a, b, m in zip(marked_keys[new_edges], ka, kb, mid_of[new_edges]):
                t = btags.get(int(e))
                if t is not None:
                    btags[int(_edge_keys(a, m))] = t
                    btags[int(_edge_keys(m, b))] = t
            nv += len(new_edges)
        c = cells[hit]
        m = mid_of[pos[hit]]
        child1 = np.column_stack([c[:, 2], c[:, 0], m])
        child2 = np.column_stack([c[:, 1], c[:, 2], m])
        keep = ~hit
        cells = np.vstack([cells[keep], child1, child2])
        tags = np.concatenate([tags[keep], tags[hit], tags[hit]])
        parent = np.concatenate([parent[keep], parent[hit], parent[hit]])

    allv = np.vstack(vertices)
    bmap = {}
    for k, t in btags.items():
        bmap[(k // int(_KEY), k % int(_KEY))] = t
    # deterministic cell order: by parent, then by centroid
    cent = allv[cells].mean(axis=1)
    order = np.lexsort((cent[:, 0], cent[:, 1], parent))
    cells, tags, parent = cells[order], tags[order], parent[order]
    return Mesh.from_cells(allv, cells, tags, bmap, parent=parent)


def uniform_refine(mesh: Mesh, times: int = 1) -> Mesh:
    for _ in range(times):
        mesh = refine(mesh, np.arange(mesh.n_cells))
    return mesh


# ----------------------------------------------------------------------
# smoothing and quality


def cell_quality(mesh: Mesh, vertices=None) -> np.ndarray:
    """Normalised radius ratio ``2 r_in / r_circ`` (1 for equilateral)."""
    X = (mesh.vertices if vertices is None else vertices)[mesh.cells]
    a = np.linalg.norm(X[:, 1] - X[:, 2], axis=1)
    b = np.linalg.norm(X[:, 2] - X[:, 0], axis=1)
    c = np.linalg.norm(X[:, 0] - X[:, 1], axis=1)
    area = 0.5 * np.abs((X[:, 1, 0] - X[:, 0, 0]) * (X[:, 2, 1] - X[:, 0, 1])
                        - (X[:, 1, 1] - X[:, 0, 1]) * (X[:, 2, 0] - X[:, 0, 0]))
    r_in = 2 * area / (a + b + c)
    r_circ = a * b * c / (4 * area)
    return 2 * r_in / r_circ


def _vertex_adjacency(mesh: Mesh):
    e = mesh.facets
    nbr = np.concatenate([e[:, 1], e[:, 0]])
    src = np.concatenate([e[:, 0], e[:, 1]])
    order = np.lexsort((nbr, src))
    ptr = np.zeros(mesh.n_vertices + 1, dtype=np.int64)
    np.add.at(ptr, src + 1, 1)
    return np.cumsum(ptr), nbr[order]


def _vertex_cells(mesh: Mesh):
    src = mesh.cells.ravel()
    owner = np.repeat(np.arange(mesh.n_cells), 3)
    order = np.lexsort((owner, src))
    ptr = np.zeros(mesh.n_vertices + 1, dtype=np.int64)
    np.add.at(ptr, src + 1, 1)
    return np.cumsum(ptr), owner[order]


def laplacian_smooth(mesh: Mesh, sweeps: int = 1) -> Mesh:
    """Gauss-Seidel Laplacian smoothing of the free vertices.

    Boundary vertices, SIGMA vertices and vertices shared by both
    subdomains stay fixed.  A vertex move is rejected if any incident cell
    would lose positive orientation.
    """
    adj_ptr, adj = _vertex_adjacency(mesh)
    vc_ptr, vc = _vertex_cells(mesh)
    free = ~mesh.fixed_vertices()
    xy = np.array(mesh.vertices, dtype=float, copy=True)
    for _ in range(sweeps):
        kernels.smooth_sweep(xy, np.ascontiguousarray(mesh.cells), adj_ptr, adj, vc_ptr, vc,
                             free.astype(np.uint8))
    return Mesh.from_cells(xy, mesh.cells, mesh.cell_tag, mesh.boundary_tag_map(), parent=mesh.parent)


# ----------------------------------------------------------------------
# VTK output


def write_vtk(path, mesh: Mesh, cell_data: Mapping[str, Sequence] | None = None,
              point_data: Mapping[str, np.ndarray] | None = None) -> None:
    """Legacy ASCII VTK file with triangles and facet lines.

    Triangles come first, then one line per facet.  ``cell_tag`` and
    ``facet_tag`` are written as cell data (-1 where not applicable); extra
    ``cell_data`` arrays are per triangle and padded with zeros on lines.
    Point data may be scalar ``(nv,)`` or vector ``(nv, 2)``.
    """
    nc, nf, nv = mesh.n_cells, mesh.n_facets, mesh.n_vertices
    lines = ["# vtk DataFile Version 3.0", "hdivbiot mesh", "ASCII", "DATASET UNSTRUCTURED_GRID",
             f"POINTS {nv} double"]
    lines += [f"{x:.16e} {y:.16e} 0.0" for x, y in mesh.vertices]
    lines.append(f"CELLS {nc + nf} {4 * nc + 3 * nf}")
    lines += [f"3 {a} {b} {c}" for a, b, c in mesh.cells]
    lines += [f"2 {a} {b}" for a, b in mesh.facets]
    lines.append(f"CELL_TYPES {nc + nf}")
    lines += ["5"] * nc + ["3"] * nf
    lines.append(f"CELL_DATA {nc + nf}")

    def scalars(name, values, fmt):
        lines.append(f"SCALARS {name} {'int' if fmt == 'd' else 'double'} 1")
        lines.append("LOOKUP_TABLE default")
        lines.extend(format(v, fmt) for v in values)

    scalars("cell_tag", np.concatenate([mesh.cell_tag, -np.ones(nf, dtype=int)]), "d")
    scalars("facet_tag", np.concatenate([-np.ones(nc, dtype=int), mesh.facet_tag]), "d")
    for name, values in (cell_data or {}).items():
        scalars(name, np.concatenate([np.asarray(values, dtype=float), np.zeros(nf)]), ".10e")
    if point_data:
        lines.append(f"POINT_DATA {nv}")
        for name, values in point_data.items():
            values = np.asarray(values, dtype=float)
            if values.ndim == 1:
                lines.append(f"SCALARS {name} double 1")
                lines.append("LOOKUP_TABLE default")
                lines.extend(f"{v:.10e}" for v in values)
            else:
                lines.append(f"VECTORS {name} double")
                lines.extend(f"{v[0]:.10e} {v[1]:.10e} 0.0" for v in values)
    with open(path, "w") as fh:
        fh.write("\n".join(lines) + "\n")
