"""Piecewise quadratic maps on a triangulated grid and their smoothing."""

from __future__ import annotations

import math
from dataclasses import dataclass, field
from typing import Optional

import numpy as np

from .edge import EdgeBlend, EdgeBlendParams
from .errors import NonPositiveJacobian, OutOfChart
from .geometry import Jet2, cw_perp, disk_average
from .mesh import ConstantsEstimate, TriGrid, constants_from_jets
from .quadmap import (
    AVERAGING_FRACTION,
    SCHEMES,
    InterpolationSystem,
    QuadraticMap,
    edge_jump,
    poly_jet,
    poly_values,
)
from .vertex import VertexBlend, VertexFan


def vertex_averages(src, points: np.ndarray, radius: float, chunk: int = 4096):
    """Disk means of the value and of the derivative at each point."""
    vals, ders = [], []
    for s in range(0, len(points), chunk):
        P = points[s : s + chunk]
        vals.append(disk_average(src.value, P, radius))
        ders.append(disk_average(lambda q: src.jet(q).D, P, radius))
    return np.concatenate(vals).reshape(-1, 2), np.concatenate(ders).reshape(-1, 2, 2)


def interpolate_grid(src, grid: TriGrid, fraction: float = AVERAGING_FRACTION, triangle_mask=None) -> "PiecewiseQuadraticMap":
    """Averaged six-condition interpolant on every triangle of ``grid``.

    Averages are taken once per grid vertex and shared by the incident
    triangles; coefficients come from the inverted condition matrix of
    each triangle kind.
    """
    side = grid.side
    vals, ders = vertex_averages(src, grid.vertices, fraction * side)
    T = grid.n_triangles
    coeffs = np.empty((T, 2, 6))
    for parity, kind in ((0, "lower"), (1, "upper")):
        scheme = SCHEMES[kind]
        Minv = InterpolationSystem.assemble(side, scheme).inverse()
        tris = np.arange(parity, T, 2)
        tv = grid.tri_vertices[tris]  # vertex ids in scheme order
        c = np.empty((len(tris), 2, 6))
        c[:, :, :3] = np.transpose(vals[tv], (0, 2, 1))
        for k, (j, d) in enumerate(scheme.anchors):
            c[:, :, 3 + k] = ders[tv[:, j]] @ np.asarray(d, float)
        coeffs[tris] = np.einsum("ij,tcj->tci", Minv, c)
    mask = np.ones(T, bool) if triangle_mask is None else np.asarray(triangle_mask, bool)
    return PiecewiseQuadraticMap(grid, coeffs, mask)


@dataclass
class PiecewiseQuadraticMap:
    """One quadratic per triangle, expanded about its square's lower-left
    corner.  ``active`` marks the triangles that belong to the map."""

    grid: TriGrid
    coeffs: np.ndarray  # (T, 2, 6)
    active: np.ndarray  # (T,)
    _jumps: dict = field(default_factory=dict, repr=False)

    @property
    def origins(self) -> np.ndarray:
        return np.repeat(self.grid.square_corners(), 2, axis=0)

    def quad(self, t: int) -> QuadraticMap:
        return QuadraticMap.from_coeffs(self.coeffs[t], self.origins[t])

    def restrict(self, active) -> "PiecewiseQuadraticMap":
        return PiecewiseQuadraticMap(self.grid, self.coeffs, np.asarray(active, bool) & self.active)

    def locate(self, p, strict: bool = True) -> np.ndarray:
        t = self.grid.locate_fast(p)
        ok = t >= 0
        ok[ok] = self.active[t[ok]]
        if strict and not np.all(ok):
            raise OutOfChart("point outside the active triangles")
        return np.where(ok, t, -1)

    def value(self, p) -> np.ndarray:
        p = np.asarray(p, float)
        P = p.reshape(-1, 2)
        t = self.locate(P)
        corner = self.grid.z0 + self.grid.side * self.grid.squares[t // 2]
        return poly_values(self.coeffs[t], P - corner).reshape(p.shape)

    __call__ = value

    def jet(self, p) -> Jet2:
        p = np.asarray(p, float)
        P = p.reshape(-1, 2)
        t = self.locate(P)
        corner = self.grid.z0 + self.grid.side * self.grid.squares[t // 2]
        j = poly_jet(self.coeffs[t], P - corner)
        lead = p.shape[:-1]
        return Jet2(j.value.reshape(lead + (2,)), j.D.reshape(lead + (2, 2)), j.D2.reshape(lead + (2, 2, 2)))

    def edge_values(self, e: int, p) -> np.ndarray:
        """Values at points on edge ``e`` from an adjacent active triangle
        (no point location, so boundary edges work)."""
        t = [k for k in self.grid.edges[e].triangles if k >= 0 and self.active[k]]
        if not t:
            raise OutOfChart(f"edge {e} touches no active triangle")
        return self.jet_on(np.full(len(p), t[0]), p).value

    def jet_on(self, t: np.ndarray, p) -> Jet2:
        """Jets of the quadratics ``t`` at ``p`` (no point location)."""
        corner = self.grid.z0 + self.grid.side * self.grid.squares[np.asarray(t) // 2]
        return poly_jet(self.coeffs[t], np.asarray(p, float) - corner)

    # edges -----------------------------------------------------------------
    def interior_edges(self) -> list:
        return self.grid.interior_edges(self.active)

    def edge_sides(self, e: int):
        """``(t1, t2)``: ``t1`` on the clockwise-normal negative side of the
        edge (the blend's ``Q1``), ``t2`` on the other."""
        E = self.grid.edges[e]
        P0, P1 = self.grid.edge_points(e)
        n = cw_perp((P1 - P0) / np.hypot(*(P1 - P0)))
        a, b = E.triangles
        ca = self.grid.triangle_points(a).mean(axis=0)
        return (a, b) if np.dot(ca - P0, n) < 0 else (b, a)

    def edge_jump(self, e: int):
        if e not in self._jumps:
            t1, t2 = self.edge_sides(e)
            self._jumps[e] = edge_jump(self.quad(t1), self.quad(t2), tuple(self.grid.edge_points(e)))
        return self._jumps[e]

    def edge_mismatch(self, e: int, samples: int = 33) -> float:
        t1, t2 = self.edge_sides(e)
        P0, P1 = self.grid.edge_points(e)
        pts = P0 + np.linspace(0, 1, samples)[:, None] * (P1 - P0)
        d = self.jet_on(np.full(samples, t1), pts).value - self.jet_on(np.full(samples, t2), pts).value
        return float(np.hypot(d[:, 0], d[:, 1]).max())

    def _interior_batch(self):
        """Interior edges with their sides, endpoints and clockwise normals."""
        edges = np.array(self.interior_edges(), dtype=np.int64)
        if len(edges) == 0:
            z = np.zeros((0, 2))
            return edges, edges, edges, z, z, z
        E = [self.grid.edges[e] for e in edges]
        ends = np.array([(x.v0, x.v1) for x in E])
        P0, P1 = self.grid.vertices[ends[:, 0]], self.grid.vertices[ends[:, 1]]
        tau = (P1 - P0) / np.hypot(*(P1 - P0).T)[:, None]
        n = np.stack([tau[:, 1], -tau[:, 0]], -1)
        ab = np.array([x.triangles for x in E])
        ca = self.grid.vertices[self.grid.tri_vertices[ab[:, 0]]].mean(axis=1)
        first = np.sum((ca - P0) * n, -1) < 0
        t1 = np.where(first, ab[:, 0], ab[:, 1])
        t2 = np.where(first, ab[:, 1], ab[:, 0])
        return edges, t1, t2, P0, P1, n

    def _along_edges(self, s):
        """Per interior edge, values and derivatives of both sides at the
        fractions ``s`` of its length; shapes (K, len(s), ...)."""
        edges, t1, t2, P0, P1, n = self._interior_batch()
        S = len(s)
        pts = (P0[:, None, :] + s[None, :, None] * (P1 - P0)[:, None, :]).reshape(-1, 2)
        j1 = self.jet_on(np.repeat(t1, S), pts)
        j2 = self.jet_on(np.repeat(t2, S), pts)
        K = len(edges)
        return (edges, P0, P1, n, j1.value.reshape(K, S, 2), j2.value.reshape(K, S, 2),
                j1.D.reshape(K, S, 2, 2), j2.D.reshape(K, S, 2, 2))

    def max_mismatch(self, samples: int = 33) -> float:
        _, _, _, _, v1, v2, _, _ = self._along_edges(np.linspace(0, 1, samples))
        d = v1 - v2
        return float(np.hypot(d[..., 0], d[..., 1]).max(initial=0.0))

    def max_jump(self, samples: int = 9) -> float:
        """Largest sampled normal-derivative jump over interior edges."""
        _, _, _, n, _, _, D1, D2 = self._along_edges(np.linspace(0, 1, samples))
        d = np.einsum("ksij,kj->ksi", D2 - D1, n)
        return float(np.hypot(d[..., 0], d[..., 1]).max(initial=0.0))

    def jump_integrals(self, nodes: int = 16):
        """``(edges, integrals)`` of the normal-derivative jump over every
        interior edge, by Gauss-Legendre in arc length."""
        xg, wg = np.polynomial.legendre.leggauss(nodes)
        edges, P0, P1, n, _, _, D1, D2 = self._along_edges(0.5 * (xg + 1.0))
        d = np.einsum("ksij,kj->ksi", D2 - D1, n)
        length = np.hypot(*(P1 - P0).T)
        return edges, 0.5 * length * (np.hypot(d[..., 0], d[..., 1]) @ wg)

    # sampling ----------------------------------------------------------------
    def triangle_samples(self, n: int = 7) -> tuple[np.ndarray, np.ndarray]:
        """Barycentric sample points per active triangle (7-point: vertices,
        edge midpoints, centroid; larger ``n`` adds a uniform interior lattice)."""
        bary = [(1, 0, 0), (0, 1, 0), (0, 0, 1), (0.5, 0.5, 0), (0, 0.5, 0.5), (0.5, 0, 0.5), (1 / 3, 1 / 3, 1 / 3)]
        if n > 7:
            m = int(math.ceil(math.sqrt(2 * n)))
            bary += [((i + 1 / 3) / m, (j + 1 / 3) / m, 1 - (i + j + 2 / 3) / m) for i in range(m) for j in range(m - i)]
        B = np.array(bary, float)
        tris = np.flatnonzero(self.active)
        V = self.grid.vertices[self.grid.tri_vertices[tris]]  # (T, 3, 2)
        pts = np.einsum("kv,tvc->tkc", B, V)
        return tris, pts

    def triangle_min_jacobian(self, n: int = 7):
        tris, pts = self.triangle_samples(n)
        t = np.repeat(tris, pts.shape[1])
        j = self.jet_on(t, pts.reshape(-1, 2))
        J = j.jacobian
        k = int(np.argmin(J)) if len(J) else 0
        return (float(J[k]), pts.reshape(-1, 2)[k]) if len(J) else (math.inf, None)

    def constants(self, n: int = 24, region: str = "active triangles") -> ConstantsEstimate:
        tris, pts = self.triangle_samples(n)
        t = np.repeat(tris, pts.shape[1])
        j = self.jet_on(t, pts.reshape(-1, 2))
        try:
            return constants_from_jets(j.jacobian, j.D, j.D2, len(t), region)
        except NonPositiveJacobian as exc:
            k = int(np.argmin(j.jacobian))
            raise NonPositiveJacobian(str(exc), witness=pts.reshape(-1, 2)[k].tolist(), value=exc.value) from None

    # fans ------------------------------------------------------------------
    def fan(self, v: int) -> Optional[VertexFan]:
        """Fan of the active triangles around grid vertex ``v`` (None if
        there are none)."""
        tris = np.flatnonzero(np.any(self.grid.tri_vertices == v, axis=1) & self.active)
        if len(tris) == 0:
            return None
        c = self.grid.vertices[v]
        starts, ends, quads = [], [], []
        for t in tris:
            others = [w for w in self.grid.tri_vertices[t] if w != v]
            angs = [math.atan2(*(self.grid.vertices[w] - c)[::-1]) for w in others]
            a0, a1 = angs
            width = (a1 - a0) % (2 * math.pi)
            if width > math.pi:
                a0, width = a1, 2 * math.pi - width
            starts.append(a0)
            ends.append(a0 + width)
            quads.append(self.quad(int(t)))
        return VertexFan(c, np.array(starts), np.array(ends), quads)

    def vertex_ids(self) -> np.ndarray:
        return np.unique(self.grid.tri_vertices[self.active])


@dataclass
class SmoothedMap:
    """Piecewise map with blends: vertex disk, then edge strip, then the
    triangle's own quadratic."""

    base: PiecewiseQuadraticMap
    edges: dict  # edge id -> EdgeBlend
    vertices: dict  # vertex id -> VertexBlend

    def __post_init__(self):
        self._vid = np.array(sorted(self.vertices), dtype=np.int64)
        self._vR = np.array([self.vertices[v].params.R for v in self._vid])

    def edge_params(self, e: int) -> EdgeBlendParams:
        return self.edges[e].params

    def region_of(self, p) -> tuple[np.ndarray, np.ndarray]:
        """``(kind, index)`` per point: kind 2 = vertex disk, 1 = edge strip,
        0 = triangle.  The index is the vertex, edge or triangle id."""
        P = np.asarray(p, float).reshape(-1, 2)
        grid = self.base.grid
        tri = self.base.locate(P)
        kind = np.zeros(len(P), np.int8)
        idx = tri.copy()
        # vertex disks: the closest lattice vertex is the only candidate
        if len(self._vid):
            q = np.rint((P - grid.z0) / grid.side).astype(np.int64)
            vmap = {tuple(grid.vertex_ij[v]): n for n, v in enumerate(self._vid)}
            for k, key in enumerate(map(tuple, q.tolist())):
                n = vmap.get(key)
                if n is None:
                    continue
                v = self._vid[n]
                if np.hypot(*(P[k] - grid.vertices[v])) < self._vR[n]:
                    kind[k], idx[k] = 2, v
        # edge strips of the three edges of the containing triangle
        rest = np.flatnonzero(kind == 0)
        for slot in range(3):
            e_ids = grid.tri_edges[tri[rest], slot]
            for e in np.unique(e_ids):
                blend = self.edges.get(int(e))
                if blend is None:
                    continue
                sel = rest[e_ids == e]
                sel = sel[kind[sel] == 0]
                xy = blend.params.to_chart(P[sel])
                inside = (np.abs(xy[:, 0]) < blend.params.r) & (xy[:, 1] >= 0) & (xy[:, 1] <= blend.params.length)
                kind[sel[inside]], idx[sel[inside]] = 1, e
        return kind, idx

    def jet(self, p) -> Jet2:
        p = np.asarray(p, float)
        P = p.reshape(-1, 2)
        kind, idx = self.region_of(P)
        out = Jet2.stack_like(len(P))
        m = kind == 0
        if np.any(m):
            j = self.base.jet_on(idx[m], P[m])
            out.value[m], out.D[m], out.D2[m] = j.value, j.D, j.D2
        for k_val, table in ((1, self.edges), (2, self.vertices)):
            for i in np.unique(idx[kind == k_val]):
                sel = (kind == k_val) & (idx == i)
                j = table[int(i)].jet(P[sel], check_chart=False)
                out.value[sel], out.D[sel], out.D2[sel] = j.value, j.D, j.D2
        lead = p.shape[:-1]
        return Jet2(out.value.reshape(lead + (2,)), out.D.reshape(lead + (2, 2)), out.D2.reshape(lead + (2, 2, 2)))

    def value(self, p) -> np.ndarray:
        return self.jet(p).value

    __call__ = value
