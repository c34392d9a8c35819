"""Sampled norms, measures, Jacobian scans and injectivity tests.

Conventions: values use the Euclidean norm, first derivatives and second
derivatives the sum of absolute entries.  Integrals are midpoint rules.
"""

from __future__ import annotations

import math
from dataclasses import dataclass
from typing import Optional, Union

import numpy as np

from .geometry import Jet2, collision_pair, entry_sum

CHUNK = 1 << 15


@dataclass
class Quadrature:
    """Sample points with weights; ``spacing`` is the sampling step used
    to decide when two samples are genuinely apart."""

    points: np.ndarray
    weights: np.ndarray
    spacing: float

    @property
    def area(self) -> float:
        return float(self.weights.sum())


def rect_quadrature(region, grid_res: int) -> Quadrature:
    x0, y0, x1, y1 = map(float, region)
    hx, hy = (x1 - x0) / grid_res, (y1 - y0) / grid_res
    xs = x0 + (np.arange(grid_res) + 0.5) * hx
    ys = y0 + (np.arange(grid_res) + 0.5) * hy
    X, Y = np.meshgrid(xs, ys, indexing="ij")
    pts = np.stack([X.ravel(), Y.ravel()], -1)
    return Quadrature(pts, np.full(len(pts), hx * hy), max(hx, hy))


def triangle_quadrature(pq, k: int = 4, clip=None) -> Quadrature:
    """Centroids of the ``k^2`` similar sub-triangles of every active
    triangle (never on an edge).  ``clip`` drops points outside a rectangle."""
    tris = np.flatnonzero(pq.active)
    V = pq.grid.vertices[pq.grid.tri_vertices[tris]]  # (T, 3, 2)
    bary = []
    for i in range(k):
        for j in range(k - i):
            bary.append(((i + 1 / 3) / k, (j + 1 / 3) / k))  # upward sub-triangles
            if i + j < k - 1:
                bary.append(((i + 2 / 3) / k, (j + 2 / 3) / k))  # downward ones
    B = np.array(bary)
    B = np.column_stack([1 - B.sum(1), B])
    pts = np.einsum("kv,tvc->tkc", B, V).reshape(-1, 2)
    w = np.full(len(pts), 0.5 * pq.grid.side**2 / k**2)
    if clip is not None:
        x0, y0, x1, y1 = clip
        keep = (pts[:, 0] >= x0) & (pts[:, 0] <= x1) & (pts[:, 1] >= y0) & (pts[:, 1] <= y1)
        pts, w = pts[keep], w[keep]
    return Quadrature(pts, w, pq.grid.side / k)


RegionLike = Union[tuple, list, np.ndarray, Quadrature]


def as_quadrature(region: RegionLike, grid_res: int) -> Quadrature:
    return region if isinstance(region, Quadrature) else rect_quadrature(region, grid_res)


def _values(m, p) -> np.ndarray:
    fn = getattr(m, "value", None)
    return np.asarray(fn(p) if fn is not None else m(p), float)


def _chunks(n: int, chunk: int = CHUNK):
    for s in range(0, n, chunk):
        yield slice(s, min(s + chunk, n))


# --------------------------------------------------------------------------
# norms


def linf_diff(f, g, region: RegionLike, grid_res: int = 256) -> float:
    q = as_quadrature(region, grid_res)
    out = 0.0
    for sl in _chunks(len(q.points)):
        d = _values(f, q.points[sl]) - _values(g, q.points[sl])
        out = max(out, float(np.hypot(d[:, 0], d[:, 1]).max(initial=0.0)))
    return out


def w21_density(jf: Jet2, jg: Jet2) -> np.ndarray:
    dv = jf.value - jg.value
    return np.hypot(dv[..., 0], dv[..., 1]) + entry_sum(jf.D - jg.D, 2) + entry_sum(jf.D2 - jg.D2, 3)


def w21_error(f, g, region: RegionLike, grid_res: int = 256) -> float:
    """Midpoint rule for ``int |f-g| + |Df-Dg| + |D^2 f - D^2 g|``."""
    if f is g:
        return 0.0
    q = as_quadrature(region, grid_res)
    total = 0.0
    for sl in _chunks(len(q.points)):
        p = q.points[sl]
        total += float(np.dot(w21_density(f.jet(p), g.jet(p)), q.weights[sl]))
    return total


def singular_measure(pq) -> float:
    """Total normal-derivative jump over the interior edges."""
    return float(pq.jump_integrals()[1].sum())


def jacobian_scan(m, region: RegionLike, grid_res: int = 256):
    """``(min J, witness)`` over the samples."""
    q = as_quadrature(region, grid_res)
    best, arg = math.inf, None
    for sl in _chunks(len(q.points)):
        J = m.jet(q.points[sl]).jacobian
        if len(J) == 0:
            continue
        k = int(np.argmin(J))
        if J[k] < best:
            best, arg = float(J[k]), q.points[sl][k]
    return best, arg


@dataclass
class InjectivityResult:
    ok: bool
    witness: Optional[tuple] = None
    distance: Optional[float] = None

    def __bool__(self) -> bool:
        return self.ok

    def as_dict(self) -> dict:
        w = None if self.witness is None else [list(map(float, p)) for p in self.witness]
        return {"ok": self.ok, "witness": w, "image_distance": self.distance}


def injectivity_test(m, region: RegionLike, grid_res: int = 256, rel_tol: float = 1e-12) -> InjectivityResult:
    """Fail iff two samples at least two cells apart have images within
    ``rel_tol * diam(image)`` of each other."""
    q = as_quadrature(region, grid_res)
    img = np.concatenate([_values(m, q.points[sl]) for sl in _chunks(len(q.points))])
    diam = float(np.ptp(img, axis=0).max()) if len(img) else 0.0
    pts, h = q.points, q.spacing

    def apart(a, b):
        return np.abs(pts[a] - pts[b]).max(axis=1) >= 1.5 * h

    hit = collision_pair(pts, img, rel_tol * diam, apart)
    if hit is None:
        return InjectivityResult(True)
    i, j, dist = hit
    return InjectivityResult(False, (pts[i].copy(), pts[j].copy()), dist)


# --------------------------------------------------------------------------
# smoothed maps: strips and disks are far thinner than any bulk grid


def _strip_samples(smap, e: int, nx: int, ny: int):
    """Chart grid over an edge strip outside the end disks; returns chart
    points, world points, cell area and the side index (0 = Q1)."""
    blend = smap.edges[e]
    p = blend.params
    E = smap.base.grid.edges[e]
    lo = smap.vertices[E.v0].params.R if E.v0 in smap.vertices else 0.0
    hi = p.length - (smap.vertices[E.v1].params.R if E.v1 in smap.vertices else 0.0)
    xs = -p.r + (np.arange(nx) + 0.5) * (2 * p.r / nx)
    ys = lo + (np.arange(ny) + 0.5) * ((hi - lo) / ny)
    X, Y = np.meshgrid(xs, ys, indexing="ij")
    xy = np.stack([X.ravel(), Y.ravel()], -1)
    return xy, p.to_world(xy), (2 * p.r / nx) * ((hi - lo) / ny), (xy[:, 0] >= 0).astype(int)


def strip_terms(smap, e: int, nx: int = 8, ny: int = 256, src=None) -> dict:
    """Integrals over one edge strip (outside the end disks):
    ``d2_diff = int |D^2 g - D^2 A|`` and, given ``src``,
    ``w21_corr = int (|f - g|_W - |f - A|_W)``."""
    blend = smap.edges[e]
    xy, world, cell, side = _strip_samples(smap, e, nx, ny)
    g = blend.chart_jet(xy, relative=False).rotate_domain(blend.params.chart_rotation.T)
    t12 = np.array(smap.base.edge_sides(e))
    a = smap.base.jet_on(t12[side], world)
    out = {"d2_diff": float(entry_sum(g.D2 - a.D2, 3).sum() * cell)}
    if src is not None:
        f = src.jet(world)
        out["w21_corr"] = float((w21_density(f, g) - w21_density(f, a)).sum() * cell)
    return out


def _disk_samples(vb, n_t: int, n_theta: int):
    from .vertex import _fan_angles

    R = vb.params.R
    t = (np.arange(n_t) + 0.5) * (R / n_t)
    th = _fan_angles(vb.fan, n_theta)
    T, TH = np.meshgrid(t, th, indexing="ij")
    z = np.stack([T * np.cos(TH), T * np.sin(TH)], -1).reshape(-1, 2)
    w = (T * (R / n_t) * (2 * math.pi / n_theta)).ravel()
    return z, w


def disk_terms(smap, v: int, n_t: int = 64, n_theta: int = 256, src=None) -> dict:
    """Same integrals over ``B(a, R)``: polar midpoint grid plus the thin
    blend bands, which the polar grid cannot resolve."""
    from .vertex import band_points

    vb = smap.vertices[v]
    c = vb.fan.center
    z, w = _disk_samples(vb, n_t, n_theta)
    bp, ba = band_points(vb, 8, 64)
    out = {"d2_diff": 0.0}
    if src is not None:
        out["w21_corr"] = 0.0
    for pts, wts in ((z, w), (bp, ba)):
        if len(pts) == 0:
            continue
        g = vb.local_jet(pts)
        a = vb.fan.local_jet(pts)
        out["d2_diff"] += float(np.dot(entry_sum(g.D2 - a.D2, 3), wts))
        if src is not None:
            f = src.jet(pts + c)
            f = Jet2(f.value - vb.fan.base, f.D, f.D2)
            out["w21_corr"] += float(np.dot(w21_density(f, g) - w21_density(f, a), wts))
    return out


def w21_smoothed(src, smap, bulk: Quadrature, strip_res=(8, 256), disk_res=(64, 256)) -> dict:
    """W^{2,1} distance from ``src`` to a smoothed map, split into parts."""
    base = w21_error(src, smap.base, bulk)
    strips = sum(strip_terms(smap, e, *strip_res, src=src)["w21_corr"] for e in sorted(smap.edges))
    disks = sum(disk_terms(smap, v, *disk_res, src=src)["w21_corr"] for v in sorted(smap.vertices))
    return {"total": base + strips + disks, "piecewise": base, "strip_correction": strips, "disk_correction": disks}


def smoothing_linf(smap, strip_res=(8, 256), disk_res=(64, 256)) -> dict:
    """Largest ``|g - A|`` inside strips and disks (zero elsewhere)."""
    strip_max, disk_max = 0.0, 0.0
    for e in sorted(smap.edges):
        blend = smap.edges[e]
        xy, world, _, side = _strip_samples(smap, e, *strip_res)
        g = blend.chart_jet(xy).value
        t12 = np.array(smap.base.edge_sides(e))
        a = smap.base.jet_on(t12[side], world).value - blend.base
        strip_max = max(strip_max, float(np.hypot(*(g - a).T).max(initial=0.0)))
    for v in sorted(smap.vertices):
        vb = smap.vertices[v]
        z, _ = _disk_samples(vb, *disk_res)
        d = vb.local_jet(z).value - vb.fan.local_jet(z).value
        disk_max = max(disk_max, float(np.hypot(*d.T).max(initial=0.0)))
    return {"strip": strip_max, "disk": disk_max, "total": max(strip_max, disk_max)}
