"""Conforming triangular meshes of the unit square.

Meshes are stored as index arrays and are read-only after construction.
Uniform red refinement keeps track of the parent element of every child so
that fields can be transferred exactly between nested levels.
"""
from __future__ import annotations

from dataclasses import dataclass
from typing import Callable, Optional

import numpy as np

from .quadrature import QuadratureRule, line_rule, triangle_rule

#: side tags of the unit square
BOTTOM, RIGHT, TOP, LEFT = 1, 2, 3, 4


class MeshError(ValueError):
    pass


@dataclass(frozen=True)
class VolumeQuadrature:
    """Physical quadrature points of a whole mesh, element-major order."""

    x: np.ndarray
    y: np.ndarray
    w: np.ndarray  # absolute weights (area included)
    element: np.ndarray
    rule: QuadratureRule

    @property
    def points(self) -> np.ndarray:
        return np.column_stack([self.x, self.y])


@dataclass(frozen=True)
class BoundaryQuadrature:
    """Gauss points on every boundary edge, edge-major order."""

    x: np.ndarray
    y: np.ndarray
    nx: np.ndarray
    ny: np.ndarray
    w: np.ndarray  # absolute weights (edge length included)
    edge: np.ndarray  # index into Mesh.boundary_edges
    t: np.ndarray  # local coordinate in [0, 1] from first to second vertex


def _readonly(a):
    a = np.ascontiguousarray(a)
    a.setflags(write=False)
    return a


class Mesh:
    """2D conforming simplicial mesh.

    Parameters
    ----------
    vertices : array_like, shape (nv, 2)
    triangles : array_like, shape (nt, 3)
        Vertex indices, counterclockwise.
    boundary_tags : dict, optional
        Maps a sorted vertex pair to an integer tag. Untagged boundary edges
        get tag 0.
    parent : array_like, optional
        For refined meshes, index of the parent triangle in ``coarser``.
    coarser : Mesh, optional
        The mesh this one was refined from.
    """

    def __init__(self, vertices, triangles, boundary_tags=None, parent=None,
                 coarser: Optional["Mesh"] = None):
        self.vertices = _readonly(np.asarray(vertices, dtype=float))
        self.triangles = _readonly(np.asarray(triangles, dtype=np.intp))
        self.parent = None if parent is None else _readonly(np.asarray(parent, dtype=np.intp))
        self.coarser = coarser
        self._build_topology(boundary_tags or {})
        self._check()

    # ------------------------------------------------------------------
    # construction
    def _build_topology(self, boundary_tags):
        t = self.triangles
        nt = len(t)
        # local edge k is opposite local vertex k
        local = np.stack([t[:, [1, 2]], t[:, [2, 0]], t[:, [0, 1]]], axis=1)  # (nt, 3, 2)
        flat = local.reshape(-1, 2)
        key = np.sort(flat, axis=1)
        edges, inverse = np.unique(key, axis=0, return_inverse=True)
        inverse = inverse.ravel()
        self.edges = _readonly(edges)
        self.element_edges = _readonly(inverse.reshape(nt, 3))

        adj = -np.ones((len(edges), 2), dtype=np.intp)
        owner = np.repeat(np.arange(nt), 3)
        order = np.argsort(inverse, kind="stable")
        counts = np.bincount(inverse, minlength=len(edges))
        if counts.max() > 2:
            raise MeshError("edge shared by more than two triangles")
        starts = np.concatenate([[0], np.cumsum(counts)[:-1]])
        adj[:, 0] = owner[order[starts]]
        two = counts == 2
        adj[two, 1] = owner[order[starts[two] + 1]]
        self.edge_triangles = _readonly(adj)
        self.edge_midpoints = _readonly(self.vertices[edges].mean(axis=1))

        bmask = counts == 1
        self.boundary_edge_ids = _readonly(np.flatnonzero(bmask))
        # orient boundary edges counterclockwise along their triangle
        pos = order[starts[bmask]]
        oriented = flat[pos]
        self.boundary_edges = _readonly(oriented)
        self.boundary_triangles = _readonly(owner[pos])
        d = self.vertices[oriented[:, 1]] - self.vertices[oriented[:, 0]]
        length = np.hypot(d[:, 0], d[:, 1])
        self.boundary_lengths = _readonly(length)
        self.boundary_normals = _readonly(np.column_stack([d[:, 1], -d[:, 0]]) / length[:, None])
        tags = [boundary_tags.get((min(a, b), max(a, b)), 0) for a, b in oriented]
        self.boundary_tags = _readonly(np.asarray(tags, dtype=np.intp))

        p = self.vertices[t]
        e1 = p[:, 1] - p[:, 0]
        e2 = p[:, 2] - p[:, 0]
        self.signed_areas = _readonly(0.5 * (e1[:, 0] * e2[:, 1] - e1[:, 1] * e2[:, 0]))
        lengths = np.linalg.norm(p[:, [1, 2, 0]] - p, axis=2)
        self.diameters = _readonly(lengths.max(axis=1))

    def _check(self):
        if np.any(self.signed_areas <= 0):
            raise MeshError("triangles must be counterclockwise with positive area")

    # ------------------------------------------------------------------
    @property
    def n_vertices(self) -> int:
        return len(self.vertices)

    @property
    def n_triangles(self) -> int:
        return len(self.triangles)

    @property
    def n_edges(self) -> int:
        return len(self.edges)

    @property
    def n_boundary_edges(self) -> int:
        return len(self.boundary_edges)

    @property
    def areas(self) -> np.ndarray:
        return self.signed_areas

    @property
    def h_max(self) -> float:
        return float(self.diameters.max())

    @property
    def area(self) -> float:
        return float(self.signed_areas.sum())

    @property
    def boundary_vertices(self) -> np.ndarray:
        return np.unique(self.boundary_edges)

    @property
    def level(self) -> int:
        """Number of refinements separating this mesh from its coarsest ancestor."""
        return 0 if self.coarser is None else 1 + self.coarser.level

    def barycentric_gradients(self) -> np.ndarray:
        """Gradients of the three barycentric coordinates, shape (nt, 3, 2)."""
        p = self.vertices[self.triangles]
        # grad lambda_k = rot90(p_{k+2} - p_{k+1}) / (2|T|)
        d = p[:, [2, 0, 1]] - p[:, [1, 2, 0]]
        g = np.stack([-d[..., 1], d[..., 0]], axis=-1)
        return g / (2.0 * self.signed_areas[:, None, None])

    def map_points(self, bary: np.ndarray) -> np.ndarray:
        """Physical coordinates of barycentric points, shape (nt, nq, 2)."""
        p = self.vertices[self.triangles]
        return np.einsum("qk,tkd->tqd", bary, p)

    def volume_quadrature(self, rule: QuadratureRule) -> VolumeQuadrature:
        xy = self.map_points(rule.points)
        w = self.signed_areas[:, None] * rule.weights[None, :]
        nq = rule.npoints
        return VolumeQuadrature(
            x=xy[..., 0].ravel(), y=xy[..., 1].ravel(), w=w.ravel(),
            element=np.repeat(np.arange(self.n_triangles), nq), rule=rule,
        )

    def boundary_quadrature(self, npoints: int = 2) -> BoundaryQuadrature:
        s, ws = line_rule(npoints)
        a = self.vertices[self.boundary_edges[:, 0]]
        b = self.vertices[self.boundary_edges[:, 1]]
        xy = a[:, None, :] + s[None, :, None] * (b - a)[:, None, :]
        nb = self.n_boundary_edges
        n = np.repeat(self.boundary_normals, npoints, axis=0)
        return BoundaryQuadrature(
            x=xy[..., 0].ravel(), y=xy[..., 1].ravel(),
            nx=n[:, 0], ny=n[:, 1],
            w=(self.boundary_lengths[:, None] * ws[None, :]).ravel(),
            edge=np.repeat(np.arange(nb), npoints),
            t=np.tile(s, nb),
        )

    def locate(self, points, tol: float = 1e-12):
        """Containing triangle and barycentric coordinates of each point.

        Raises
        ------
        MeshError
            If a point lies outside the mesh.
        """
        pts = np.atleast_2d(np.asarray(points, dtype=float))
        p = self.vertices[self.triangles]
        grads = self.barycentric_gradients()
        elems = np.empty(len(pts), dtype=np.intp)
        bary = np.empty((len(pts), 3))
        for i, x in enumerate(pts):
            lam = np.einsum("tkd,td->tk", grads, x[None, :] - p[:, 0, :])
            lam[:, 0] = 1.0 - lam[:, 1] - lam[:, 2]
            inside = np.flatnonzero(lam.min(axis=1) >= -tol)
            if inside.size == 0:
                raise MeshError(f"point {tuple(x)} is outside the mesh")
            elems[i] = inside[0]
            bary[i] = lam[inside[0]]
        return elems, bary

    def ancestor(self, coarse: "Mesh") -> np.ndarray:
        """Index in ``coarse`` of the triangle containing each triangle of self."""
        idx = np.arange(self.n_triangles)
        m = self
        while m is not coarse:
            if m.coarser is None or m.parent is None:
                raise MeshError("meshes are not nested by uniform refinement")
            idx = m.parent[idx]
            m = m.coarser
        return idx

    # ------------------------------------------------------------------
    def dump(self) -> str:
        """Plain-text dump: header ``nv nt nb``, then vertices, triangles, boundary edges."""
        lines = [f"{self.n_vertices} {self.n_triangles} {self.n_boundary_edges}"]
        lines += [f"{x!r} {y!r}" for x, y in self.vertices.tolist()]
        lines += [f"{i} {j} {k}" for i, j, k in self.triangles.tolist()]
        lines += [f"{i} {j} {tag}" for (i, j), tag in
                  zip(self.boundary_edges.tolist(), self.boundary_tags.tolist())]
        return "\n".join(lines) + "\n"

    @classmethod
    def load(cls, text: str) -> "Mesh":
        tokens = text.split("\n")
        nv, nt, nb = (int(s) for s in tokens[0].split())
        rows = [ln.split() for ln in tokens[1:1 + nv + nt + nb]]
        verts = [[float(a), float(b)] for a, b in rows[:nv]]
        tris = [[int(a) for a in r] for r in rows[nv:nv + nt]]
        tags = {}
        for i, j, tag in rows[nv + nt:]:
            i, j = int(i), int(j)
            tags[(min(i, j), max(i, j))] = int(tag)
        return cls(verts, tris, tags)

    def __repr__(self):
        return (f"Mesh(nv={self.n_vertices}, nt={self.n_triangles}, "
                f"nb={self.n_boundary_edges}, h_max={self.h_max:.4g})")


def build_unit_square(n: int) -> Mesh:
    """Uniform ``n x n`` grid of the unit square, each cell cut along its
    bottom-left to top-right diagonal."""
    if int(n) != n or n < 1:
        raise ValueError("n must be a positive integer")
    n = int(n)
    s = np.linspace(0.0, 1.0, n + 1)
    X, Y = np.meshgrid(s, s, indexing="xy")
    verts = np.column_stack([X.ravel(), Y.ravel()])
    i, j = np.meshgrid(np.arange(n), np.arange(n), indexing="xy")
    v00 = (j * (n + 1) + i).ravel()
    v10 = v00 + 1
    v01 = v00 + n + 1
    v11 = v01 + 1
    tris = np.empty((2 * n * n, 3), dtype=np.intp)
    tris[0::2] = np.column_stack([v00, v10, v11])
    tris[1::2] = np.column_stack([v00, v11, v01])

    tags = {}
    for k in range(n):
        for a, b, tag in (
            (k, k + 1, BOTTOM),
            (n * (n + 1) + k, n * (n + 1) + k + 1, TOP),
            (k * (n + 1), (k + 1) * (n + 1), LEFT),
            (k * (n + 1) + n, (k + 1) * (n + 1) + n, RIGHT),
        ):
            tags[(a, b)] = tag
    return Mesh(verts, tris, tags)


def refine_uniform(m: Mesh) -> Mesh:
    """Red refinement: every triangle is split into four by its edge midpoints."""
    nv = m.n_vertices
    verts = np.vstack([m.vertices, m.edge_midpoints])
    t = m.triangles
    mid = nv + m.element_edges  # mid[:, k] sits on the edge opposite vertex k
    v0, v1, v2 = t[:, 0], t[:, 1], t[:, 2]
    m0, m1, m2 = mid[:, 0], mid[:, 1], mid[:, 2]
    children = np.stack([
        np.column_stack([v0, m2, m1]),
        np.column_stack([m2, v1, m0]),
        np.column_stack([m1, m0, v2]),
        np.column_stack([m0, m1, m2]),
    ], axis=1).reshape(-1, 3)
    parent = np.repeat(np.arange(m.n_triangles), 4)

    tags = {}
    for eid, (a, b), tag in zip(m.boundary_edge_ids.tolist(), m.boundary_edges.tolist(),
                                m.boundary_tags.tolist()):
        c = nv + eid
        tags[(min(a, c), max(a, c))] = tag
        tags[(min(c, b), max(c, b))] = tag
    return Mesh(verts, children, tags, parent=parent, coarser=m)


def refine(m: Mesh, times: int) -> Mesh:
    for _ in range(times):
        m = refine_uniform(m)
    return m


def integrate(m: Mesh, q: QuadratureRule | int, f: Callable) -> float:
    """Integrate ``f(x, y)`` over the mesh with the given rule (or degree)."""
    if isinstance(q, int):
        q = triangle_rule(q)
    vq = m.volume_quadrature(q)
    return float(np.dot(vq.w, np.broadcast_to(f(vq.x, vq.y), vq.w.shape)))


def boundary_integrate(m: Mesh, g: Callable, npoints: int = 2) -> float:
    """Integrate a boundary field ``g(x, y, nx, ny)`` over the mesh boundary."""
    bq = m.boundary_quadrature(npoints)
    vals = np.broadcast_to(g(bq.x, bq.y, bq.nx, bq.ny), bq.w.shape)
    return float(np.dot(bq.w, vals))
