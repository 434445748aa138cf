"""Conforming 2D meshes (structured Q1 quads and P1 triangles) with the node
neighborhoods and symmetric-point geometry needed by the shock detector.

A mesh is immutable after construction.  For every node ``i`` the macroelement
``Omega_i`` is the union of elements touching ``i``; ``neighborhoods[i]`` is
the set of nodes of those elements (including ``i`` itself).  For each
neighbor ``j`` of ``i`` the *symmetric point* is the intersection of the ray
from ``x_i`` away from ``x_j`` with the macroelement boundary.  On structured
meshes it coincides with the mirrored node; on general patches it may fall in
the interior of an element edge, and on the domain boundary it may not exist
at all (the ray immediately leaves the domain).
"""

from __future__ import annotations

from dataclasses import dataclass, field

import numpy as np

Q1 = "q1"
P1 = "p1"

# exit point closer than this (relative to the local edge length) to an
# existing node is snapped to that node
_SNAP_REL = 1e-9


@dataclass(frozen=True)
class SymPoint:
    """Symmetric point of neighbor j with respect to node i.

    ``u_h(x_sym)`` is always a fixed linear combination of nodal values,
    recorded in ``cols``/``coefs`` (a single node with weight one when the
    point is a mesh node).
    """

    kind: str                 # "node" | "point"
    dist: float               # |x_sym - x_i|
    point: tuple[float, float]
    node: int | None = None
    element: int | None = None
    cols: tuple[int, ...] = ()
    coefs: tuple[float, ...] = ()


class Mesh2D:
    """Nodes, elements, adjacency and symmetric-point data of a 2D mesh."""

    def __init__(self, coords, elements, kind, structured_shape=None, domain=None):
        coords = np.asarray(coords, dtype=float)
        elements = np.asarray(elements, dtype=np.int64)
        if coords.ndim != 2 or coords.shape[1] != 2:
            raise ValueError("coords must have shape (n_nodes, 2)")
        nloc = {P1: 3, Q1: 4}.get(kind)
        if nloc is None:
            raise ValueError(f"unknown element kind {kind!r}")
        if elements.ndim != 2 or elements.shape[1] != nloc:
            raise ValueError(f"{kind} elements must have {nloc} nodes each")

        self.coords = coords
        self.elements = elements
        self.kind = kind
        self.structured_shape = structured_shape  # (nx, ny) cell counts or None
        self.domain = domain                      # (x0, x1, y0, y1) or None
        self.n_nodes = coords.shape[0]
        self.n_elements = elements.shape[0]
        self._cache = {}

        self._build_adjacency()
        self._build_boundary()
        self._build_sym_info()

    # ------------------------------------------------------------------
    # construction
    # ------------------------------------------------------------------

    def _build_adjacency(self):
        neigh = [set() for _ in range(self.n_nodes)]
        node_elems = [[] for _ in range(self.n_nodes)]
        for e, conn in enumerate(self.elements):
            for a in conn:
                neigh[a].update(conn)
                node_elems[a].append(e)
        self.neighborhoods = [np.array(sorted(s), dtype=np.int64) for s in neigh]
        self.node_elements = [np.array(es, dtype=np.int64) for es in node_elems]

    def _element_edges(self, conn):
        k = len(conn)
        return [(conn[a], conn[(a + 1) % k]) for a in range(k)]

    def _build_boundary(self):
        # boundary edges are element sides seen exactly once
        count = {}
        for conn in self.elements:
            for a, b in self._element_edges(conn):
                key = (a, b) if a < b else (b, a)
                count[key] = count.get(key, 0) + 1
        self.is_boundary = np.zeros(self.n_nodes, dtype=bool)
        side_lengths = []
        for (a, b), c in count.items():
            side_lengths.append(np.linalg.norm(self.coords[a] - self.coords[b]))
            if c == 1:
                self.is_boundary[a] = True
                self.is_boundary[b] = True
        self.boundary_nodes = np.nonzero(self.is_boundary)[0]
        self.interior_nodes = np.nonzero(~self.is_boundary)[0]
        self.h_mean = float(np.mean(side_lengths))

    def _build_sym_info(self):
        self.sym_info = {}
        if self.structured_shape is not None:
            self._sym_structured()
        else:
            self._sym_geometric()

    def _sym_structured(self):
        # on a uniform tensor grid the ray away from j exits Omega_i exactly at
        # the mirrored node 2*x_i - x_j whenever that index is inside the grid,
        # and leaves the domain immediately otherwise
        nx, ny = self.structured_shape
        stride = nx + 1
        for i in range(self.n_nodes):
            ix, iy = i % stride, i // stride
            for j in self.neighborhoods[i]:
                if j == i:
                    continue
                jx, jy = j % stride, j // stride
                mx, my = 2 * ix - jx, 2 * iy - jy
                if 0 <= mx <= nx and 0 <= my <= ny:
                    k = my * stride + mx
                    dist = float(np.linalg.norm(self.coords[k] - self.coords[i]))
                    self.sym_info[(i, j)] = SymPoint(
                        kind="node", dist=dist, point=tuple(self.coords[k]),
                        node=k, cols=(int(k),), coefs=(1.0,))

    def _sym_geometric(self):
        for i in range(self.n_nodes):
            xi = self.coords[i]
            for j in self.neighborhoods[i]:
                if j == i:
                    continue
                sp = self._ray_exit(i, xi, self.coords[j])
                if sp is not None:
                    self.sym_info[(i, j)] = sp

    def _ray_exit(self, i, xi, xj):
        d = xi - xj
        nd = np.linalg.norm(d)
        d = d / nd
        best_t, best_elem = np.inf, -1
        for e in self.node_elements[i]:
            conn = self.elements[e]
            for a, b in self._element_edges(conn):
                if a == i or b == i:
                    continue
                t = self._ray_segment(xi, d, self.coords[a], self.coords[b])
                if t is not None and t < best_t:
                    best_t, best_elem = t, e
        if not np.isfinite(best_t):
            return None
        x_sym = xi + best_t * d
        # snap to a node when the exit point is a macroelement vertex
        for k in self.neighborhoods[i]:
            if k != i and np.linalg.norm(self.coords[k] - x_sym) < _SNAP_REL * nd:
                return SymPoint(kind="node", dist=float(np.linalg.norm(self.coords[k] - xi)),
                                point=tuple(self.coords[k]), node=int(k),
                                cols=(int(k),), coefs=(1.0,))
        cols, coefs = self._interp_coefs(best_elem, x_sym)
        return SymPoint(kind="point", dist=float(best_t), point=tuple(x_sym),
                        element=int(best_elem), cols=cols, coefs=coefs)

    @staticmethod
    def _ray_segment(x0, d, a, b):
        """Smallest t > 0 with x0 + t d on segment [a, b], or None."""
        m = np.array([[d[0], a[0] - b[0]], [d[1], a[1] - b[1]]])
        det = m[0, 0] * m[1, 1] - m[0, 1] * m[1, 0]
        scale = max(np.linalg.norm(d), np.linalg.norm(b - a))
        if abs(det) < 1e-14 * scale * scale:
            return None
        rhs = a - x0
        t = (rhs[0] * m[1, 1] - rhs[1] * m[0, 1]) / det
        s = (m[0, 0] * rhs[1] - m[1, 0] * rhs[0]) / det
        if t > 1e-12 and -1e-12 <= s <= 1 + 1e-12:
            return float(t)
        return None

    def _interp_coefs(self, e, x):
        """Nodal interpolation weights of the element's FE space at point x."""
        conn = self.elements[e]
        pts = self.coords[conn]
        if self.kind == P1:
            mat = np.array([[1.0, 1.0, 1.0], pts[:, 0], pts[:, 1]])
            lam = np.linalg.solve(mat, np.array([1.0, x[0], x[1]]))
            return tuple(int(c) for c in conn), tuple(float(v) for v in lam)
        # axis-aligned Q1 rectangle
        x0, y0 = pts[0]
        wx = pts[1, 0] - pts[0, 0]
        wy = pts[3, 1] - pts[0, 1]
        xi, eta = (x[0] - x0) / wx, (x[1] - y0) / wy
        vals = ((1 - xi) * (1 - eta), xi * (1 - eta), xi * eta, (1 - xi) * eta)
        return tuple(int(c) for c in conn), tuple(float(v) for v in vals)

    # ------------------------------------------------------------------
    # queries
    # ------------------------------------------------------------------

    def has_sym(self, i, j):
        return (i, j) in self.sym_info

    def element_rect_sides(self):
        """(width, height) per element; Q1 elements must be axis-aligned."""
        pts = self.coords[self.elements]
        if self.kind != Q1:
            raise ValueError("only Q1 elements are rectangles")
        wx = pts[:, 1, 0] - pts[:, 0, 0]
        wy = pts[:, 3, 1] - pts[:, 0, 1]
        if not (np.allclose(pts[:, 0, 1], pts[:, 1, 1]) and np.allclose(pts[:, 0, 0], pts[:, 3, 0])):
            raise ValueError("Q1 elements must be axis-aligned rectangles")
        return wx, wy


def symmetric_value(mesh, u, i, j):
    """Value of u_h at the symmetric point of neighbor j w.r.t. node i.

    Returns None when the symmetric point does not exist (the ray from x_i
    away from x_j leaves the domain at x_i, a boundary-node case); callers
    apply their one-sided fallback then.
    """
    sp = mesh.sym_info.get((i, j))
    if sp is None:
        return None
    u = np.asarray(u)
    return float(sum(c * u[col] for col, c in zip(sp.cols, sp.coefs)))


def build_structured(nx, ny, domain=(0.0, 1.0, 0.0, 1.0), kind=Q1):
    """Uniform nx-by-ny grid of the rectangle, as Q1 quads or P1 triangles.

    P1 cells are split along the lower-left-to-upper-right diagonal.  Node
    ``iy*(nx+1) + ix`` sits at grid position (ix, iy), x varying fastest.
    """
    if not (isinstance(nx, (int, np.integer)) and isinstance(ny, (int, np.integer))):
        raise ValueError("nx and ny must be integers")
    if nx < 1 or ny < 1:
        raise ValueError("nx and ny must be >= 1")
    x0, x1, y0, y1 = domain
    if not (x1 > x0 and y1 > y0):
        raise ValueError("domain must be a nondegenerate rectangle")

    xs = np.linspace(x0, x1, nx + 1)
    ys = np.linspace(y0, y1, ny + 1)
    xx, yy = np.meshgrid(xs, ys, indexing="xy")
    coords = np.column_stack([xx.ravel(), yy.ravel()])

    def nid(ix, iy):
        return iy * (nx + 1) + ix

    elems = []
    for iy in range(ny):
        for ix in range(nx):
            n00, n10 = nid(ix, iy), nid(ix + 1, iy)
            n11, n01 = nid(ix + 1, iy + 1), nid(ix, iy + 1)
            if kind == Q1:
                elems.append((n00, n10, n11, n01))
            else:
                elems.append((n00, n10, n11))
                elems.append((n00, n11, n01))
    return Mesh2D(coords, np.array(elems), kind,
                  structured_shape=(nx, ny), domain=tuple(map(float, domain)))


def triangle_fan(center_xy, ring_xy):
    """Single-ring P1 fan patch: one interior node surrounded by ring nodes."""
    ring = np.asarray(ring_xy, dtype=float)
    n = ring.shape[0]
    if n < 3:
        raise ValueError("a fan needs at least 3 ring nodes")
    coords = np.vstack([np.asarray(center_xy, dtype=float)[None, :], ring])
    elems = [(0, 1 + k, 1 + (k + 1) % n) for k in range(n)]
    return Mesh2D(coords, np.array(elems), P1)
