"""Shifted triangulated grids, (d, L, M) estimation and good/bad square
classification."""

from __future__ import annotations

import math
from dataclasses import dataclass, field

import numpy as np

from .errors import EmptyDomain, NonPositiveJacobian
from .geometry import entry_sum, op_norm
from .quadmap import MapSource, Triangle

SAFETY = 0.05


# --------------------------------------------------------------------------
# grids


@dataclass(frozen=True)
class GridEdge:
    key: tuple  # ("h" | "v" | "d", i, j)
    v0: int  # vertex ids, v0 -> v1 runs left-to-right / bottom-to-top
    v1: int
    anchor: int  # vertex id carrying the tangential condition
    direction: tuple
    triangles: tuple  # incident triangle ids (1 or 2)


@dataclass
class TriGrid:
    """Squares ``[z0 + 2 r0 k, z0 + 2 r0 (k + 1)]`` each cut by its (-1, 1)
    diagonal into a lower triangle (even id) and an upper triangle (odd id)."""

    domain: tuple
    r0: float
    z0: np.ndarray
    eta_margin: float
    squares: np.ndarray  # (S, 2) integer lattice indices
    vertex_ij: np.ndarray = field(init=False)
    vertices: np.ndarray = field(init=False)
    edges: list = field(init=False)
    tri_edges: np.ndarray = field(init=False)  # (T, 3) edge ids: horizontal, diagonal, vertical
    tri_vertices: np.ndarray = field(init=False)  # (T, 3) vertex ids in scheme order

    def __post_init__(self):
        self.z0 = np.asarray(self.z0, float)
        sq = np.asarray(self.squares, dtype=np.int64).reshape(-1, 2)
        self.squares = sq
        self._square_index = {tuple(k): s for s, k in enumerate(sq.tolist())}
        vid: dict = {}

        def vertex(i, j):
            key = (i, j)
            if key not in vid:
                vid[key] = len(vid)
            return vid[key]

        edge_ids: dict = {}
        edge_data: list = []

        def edge(kind, i, j, a, b, anchor, direction, tri):
            key = (kind, i, j)
            if key not in edge_ids:
                edge_ids[key] = len(edge_data)
                edge_data.append([key, a, b, anchor, direction, []])
            e = edge_ids[key]
            edge_data[e][5].append(tri)
            return e

        T = 2 * len(sq)
        tri_edges = np.empty((T, 3), dtype=np.int64)
        tri_vertices = np.empty((T, 3), dtype=np.int64)
        for s, (i, j) in enumerate(sq.tolist()):
            ll, lr, ul, ur = vertex(i, j), vertex(i + 1, j), vertex(i, j + 1), vertex(i + 1, j + 1)
            lo, up = 2 * s, 2 * s + 1
            tri_vertices[lo] = (ll, lr, ul)
            tri_vertices[up] = (lr, ur, ul)
            diag = edge("d", i, j, lr, ul, ul, (-1.0, 1.0), lo)
            edge_data[diag][5].append(up)
            tri_edges[lo] = (edge("h", i, j, ll, lr, ll, (1.0, 0.0), lo), diag, edge("v", i, j, ll, ul, ul, (0.0, -1.0), lo))
            tri_edges[up] = (
                edge("h", i, j + 1, ul, ur, ul, (1.0, 0.0), up),
                diag,
                edge("v", i + 1, j, lr, ur, ur, (0.0, -1.0), up),
            )
        ij = np.array(sorted(vid, key=vid.get), dtype=np.int64).reshape(-1, 2)
        self.vertex_ij = ij
        self.vertices = self.z0 + self.side * ij
        self._vertex_index = vid
        self.edges = [GridEdge(k, a, b, an, d, tuple(ts)) for k, a, b, an, d, ts in edge_data]
        self.tri_edges = tri_edges
        self.tri_vertices = tri_vertices

    # basic geometry -----------------------------------------------------
    @property
    def side(self) -> float:
        return 2.0 * self.r0

    @property
    def n_squares(self) -> int:
        return len(self.squares)

    @property
    def n_triangles(self) -> int:
        return 2 * len(self.squares)

    def square_corner(self, s) -> np.ndarray:
        return self.z0 + self.side * self.squares[s]

    def square_corners(self) -> np.ndarray:
        return self.z0 + self.side * self.squares

    def triangle(self, t: int) -> Triangle:
        corner = tuple(self.square_corner(t // 2))
        return Triangle(corner, self.side, "lower" if t % 2 == 0 else "upper")

    def triangle_points(self, t: int) -> np.ndarray:
        return self.vertices[self.tri_vertices[t]]

    def vertex_id(self, i: int, j: int) -> int:
        return self._vertex_index[(i, j)]

    def square_id(self, i: int, j: int):
        return self._square_index.get((i, j))

    def edge_points(self, e: int) -> np.ndarray:
        E = self.edges[e]
        return self.vertices[[E.v0, E.v1]]

    def interior_edges(self, triangle_mask=None) -> list:
        """Edges whose two incident triangles are both present (and masked in)."""
        out = []
        for e, E in enumerate(self.edges):
            if len(E.triangles) == 2 and (triangle_mask is None or all(triangle_mask[t] for t in E.triangles)):
                out.append(e)
        return out

    def locate(self, p) -> np.ndarray:
        """Triangle id containing each point, or -1 when outside the grid."""
        p = np.asarray(p, float).reshape(-1, 2)
        q = (p - self.z0) / self.side
        k = np.floor(q).astype(np.int64)
        frac = q - k
        out = np.full(len(p), -1, dtype=np.int64)
        for n, (i, j) in enumerate(k.tolist()):
            s = self._square_index.get((i, j))
            if s is not None:
                out[n] = 2 * s + (1 if frac[n, 0] + frac[n, 1] > 1.0 else 0)
        return out

    def square_lookup(self) -> tuple[np.ndarray, np.ndarray, np.ndarray]:
        """Dense lookup table: (imin, jmin, table[i - imin, j - jmin] = square id or -1)."""
        lo = self.squares.min(axis=0)
        hi = self.squares.max(axis=0)
        table = np.full(tuple(hi - lo + 1), -1, dtype=np.int64)
        table[self.squares[:, 0] - lo[0], self.squares[:, 1] - lo[1]] = np.arange(len(self.squares))
        return lo, hi, table

    def locate_fast(self, p) -> np.ndarray:
        p = np.asarray(p, float).reshape(-1, 2)
        lo, hi, table = self.square_lookup()
        q = (p - self.z0) / self.side
        k = np.floor(q).astype(np.int64)
        frac = q - k
        inside = np.all((k >= lo) & (k <= hi), axis=1)
        out = np.full(len(p), -1, dtype=np.int64)
        kk = k[inside] - lo
        s = table[kk[:, 0], kk[:, 1]]
        upper = (frac[inside, 0] + frac[inside, 1]) > 1.0
        out[inside] = np.where(s >= 0, 2 * s + upper, -1)
        return out


def build_grid(domain, r0: float, z0=(0.0, 0.0), eta_margin: float = 0.0) -> TriGrid:
    """All squares of the shifted lattice whose interior meets the domain
    shrunk by ``eta_margin``."""
    x0, y0, x1, y1 = map(float, domain)
    z0 = np.asarray(z0, float)
    if not r0 > 0:
        raise ValueError("r0 must be positive")
    if np.any(np.abs(z0) > r0 * (1 + 1e-12)):
        raise ValueError("shift must lie in [-r0, r0]^2")
    a = np.array([x0 + eta_margin, y0 + eta_margin])
    b = np.array([x1 - eta_margin, y1 - eta_margin])
    if np.any(b <= a):
        raise EmptyDomain("domain shrunk by the margin is empty")
    side = 2.0 * r0
    kmin = np.floor((a - z0) / side).astype(int) - 1
    kmax = np.ceil((b - z0) / side).astype(int) + 1
    ks = []
    for i in range(kmin[0], kmax[0] + 1):
        cx = z0[0] + side * i
        if not (cx < b[0] and cx + side > a[0]):
            continue
        for j in range(kmin[1], kmax[1] + 1):
            cy = z0[1] + side * j
            if cy < b[1] and cy + side > a[1]:
                ks.append((i, j))
    return TriGrid((x0, y0, x1, y1), float(r0), z0, float(eta_margin), np.array(ks, dtype=np.int64))


# --------------------------------------------------------------------------
# constants


@dataclass(frozen=True)
class ConstantsEstimate:
    """Sampled bounds ``J >= d``, ``|Df| <= L`` (operator norm) and
    ``|D^2 f| <= M`` (sum of absolute entries), with 5% safety."""

    d: float
    L: float
    M: float
    samples: int = 0
    region: str = ""

    def __post_init__(self):
        if self.d > self.L**2 * (1 + 1e-12):
            raise ValueError(f"inconsistent constants: d={self.d} exceeds L^2={self.L**2}")

    def as_dict(self) -> dict:
        return {"d": self.d, "L": self.L, "M": self.M, "samples": self.samples, "region": self.region}


def constants_from_jets(J, D, D2, samples: int, region: str = "", safety: float = SAFETY) -> ConstantsEstimate:
    jac = D[..., 0, 0] * D[..., 1, 1] - D[..., 0, 1] * D[..., 1, 0]
    k = int(np.argmin(jac))
    if jac.ravel()[k] <= 0:
        raise NonPositiveJacobian(f"sampled Jacobian {jac.ravel()[k]:.3g} <= 0", value=float(jac.ravel()[k]))
    d = float(jac.min()) * (1 - safety)
    L = float(op_norm(D).max()) * (1 + safety)
    M = float(entry_sum(D2, 3).max()) * (1 + safety)
    return ConstantsEstimate(d, L, M, samples, region)


def sample_rectangle(region, samples: int) -> np.ndarray:
    x0, y0, x1, y1 = map(float, region)
    xs = x0 + (np.arange(samples) + 0.5) * (x1 - x0) / samples
    ys = y0 + (np.arange(samples) + 0.5) * (y1 - y0) / samples
    X, Y = np.meshgrid(xs, ys, indexing="ij")
    return np.stack([X.ravel(), Y.ravel()], axis=-1)


def estimate_constants(src: MapSource, region, samples: int = 64) -> ConstantsEstimate:
    """Estimate (d, L, M) of ``src`` on a rectangle (``samples`` per side)
    or on an explicit ``(n, 2)`` array of points."""
    region_arr = np.asarray(region, float)
    if region_arr.ndim == 2:
        pts, tag = region_arr, f"{len(region_arr)} points"
    else:
        pts, tag = sample_rectangle(region_arr, samples), "rect " + ",".join(f"{v:g}" for v in region_arr)
    j = src.jet(pts)
    try:
        return constants_from_jets(j.jacobian, j.D, j.D2, len(pts), tag)
    except NonPositiveJacobian as exc:
        k = int(np.argmin(j.jacobian))
        raise NonPositiveJacobian(str(exc), witness=pts[k].tolist(), value=exc.value) from None


# --------------------------------------------------------------------------
# classification


@dataclass(frozen=True)
class ClassificationParams:
    """Thresholds of the good-square test; validated against
    ``0 < eps < min{C0 delta^2, eta_margin, delta^2/8, delta^2/(4 C1)}``."""

    nu: float
    eta_margin: float
    delta: float
    eps: float
    r0: float
    C0: float = 1e-2
    C1: float = 3.0
    taylor_res: int = 32
    osc_res: int = 48

    def __post_init__(self):
        if not (0 < self.delta < 1):
            raise ValueError("delta must lie in (0, 1)")
        if not (self.nu > 0 and self.r0 > 0 and self.eta_margin > 0):
            raise ValueError("nu, r0 and eta_margin must be positive")
        if not (0 < self.eps < self.eps_bound()):
            raise ValueError(f"eps={self.eps} violates 0 < eps < {self.eps_bound():.6g}")
        if self.taylor_res < 32 or self.osc_res < 1:
            raise ValueError("taylor_res must be at least 32")

    def eps_bound(self) -> float:
        d2 = self.delta**2
        return min(self.C0 * d2, self.eta_margin, d2 / 8, d2 / (4 * self.C1))

    @classmethod
    def derive(cls, nu: float, delta: float, r0: float, domain, C0: float = 1e-2, C1: float = 3.0,
               safety: float = 0.9, **kw) -> "ClassificationParams":
        """Margin so the boundary band has area below nu/2, then eps at
        ``safety`` times its admissible maximum."""
        x0, y0, x1, y1 = map(float, domain)
        perimeter = 2 * ((x1 - x0) + (y1 - y0))
        eta_margin = safety * 0.5 * nu / perimeter
        d2 = delta**2
        eps = safety * min(C0 * d2, eta_margin, d2 / 8, d2 / (4 * C1))
        return cls(nu, eta_margin, delta, eps, r0, C0, C1, **kw)

    def as_dict(self) -> dict:
        return {k: getattr(self, k) for k in ("nu", "eta_margin", "delta", "eps", "r0", "C0", "C1", "taylor_res", "osc_res")}


@dataclass
class Classification:
    good: np.ndarray  # per square
    vertex_good: np.ndarray
    bad_measure: float
    vertex_stats: dict

    @property
    def n_good(self) -> int:
        return int(self.good.sum())

    @property
    def n_bad(self) -> int:
        return int((~self.good).sum())


def _vertex_tests(src: MapSource, Z: np.ndarray, params: ClassificationParams) -> dict:
    h = 3.0 * params.r0
    tg = np.linspace(-h, h, params.taylor_res)
    TX, TY = np.meshgrid(tg, tg, indexing="ij")
    toff = np.stack([TX.ravel(), TY.ravel()], -1)
    tnorm = np.hypot(toff[:, 0], toff[:, 1])
    keep = tnorm > 0
    toff, tnorm = toff[keep], tnorm[keep]
    og = -h + (np.arange(params.osc_res) + 0.5) * (2 * h / params.osc_res)
    OX, OY = np.meshgrid(og, og, indexing="ij")
    ooff = np.stack([OX.ravel(), OY.ravel()], -1)

    jz = src.jet(Z)
    fw = src.value(Z[:, None, :] + toff[None])
    lin = jz.value[:, None, :] + np.einsum("vij,nj->vni", jz.D, toff)
    taylor = (np.hypot(*np.moveaxis(fw - lin, -1, 0)) / tnorm).max(axis=1)
    jw = src.jet(Z[:, None, :] + ooff[None])
    osc1 = entry_sum(jw.D - jz.D[:, None], 2).mean(axis=1)
    osc2 = entry_sum(jw.D2 - jz.D2[:, None], 3).mean(axis=1)
    return {"J": jz.jacobian, "normDf": op_norm(jz.D), "taylor": taylor, "osc1": osc1, "osc2": osc2}


def vertex_stats(src: MapSource, Z: np.ndarray, params: ClassificationParams, chunk: int = 64) -> dict:
    """Per-vertex test quantities; vertices whose evaluation fails get NaN."""
    keys = ("J", "normDf", "taylor", "osc1", "osc2")
    out = {k: np.full(len(Z), np.nan) for k in keys}
    for s in range(0, len(Z), chunk):
        sl = slice(s, min(s + chunk, len(Z)))
        try:
            res = _vertex_tests(src, Z[sl], params)
        except (ValueError, ArithmeticError):
            res = {k: np.full(sl.stop - sl.start, np.nan) for k in keys}
            for n in range(sl.start, sl.stop):
                try:
                    one = _vertex_tests(src, Z[n : n + 1], params)
                except (ValueError, ArithmeticError):
                    continue
                for k in keys:
                    res[k][n - sl.start] = one[k][0]
        for k in keys:
            out[k][sl] = res[k]
    return out


def vertex_verdicts(stats: dict, params: ClassificationParams) -> np.ndarray:
    with np.errstate(invalid="ignore"):
        ok = (
            (stats["J"] > params.delta)
            & (stats["normDf"] < 1.0 / params.delta)
            & (stats["taylor"] < params.eps)
            & (stats["osc1"] < params.eps)
            & (stats["osc2"] < params.eps)
        )
    return np.where(np.isnan(stats["taylor"]) | np.isnan(stats["J"]), False, ok)


def classify_squares(src: MapSource, grid: TriGrid, params: ClassificationParams) -> Classification:
    """A square is good when all four corners pass every vertex test."""
    stats = vertex_stats(src, grid.vertices, params)
    vg = vertex_verdicts(stats, params)
    ij = grid.squares
    corner_ids = np.array(
        [[grid.vertex_id(i, j), grid.vertex_id(i + 1, j), grid.vertex_id(i, j + 1), grid.vertex_id(i + 1, j + 1)] for i, j in ij.tolist()],
        dtype=np.int64,
    ).reshape(-1, 4)
    good = vg[corner_ids].all(axis=1) if len(corner_ids) else np.zeros(0, bool)
    bad_measure = float((~good).sum()) * grid.side**2
    return Classification(good, vg, bad_measure, stats)


def select_shift(src: MapSource, domain, r0: float, params: ClassificationParams, trials: int = 4, seed: int = 0):
    """Best of ``trials`` random shifts in ``[-r0, r0]^2`` by good-vertex count.

    Returns ``(z0, counts)``; ties go to the lowest trial index.
    """
    if trials < 1:
        raise ValueError("trials must be at least 1")
    rng = np.random.default_rng(seed)
    cands = rng.uniform(-r0, r0, size=(trials, 2))
    counts = []
    for z0 in cands:
        grid = build_grid(domain, r0, z0, params.eta_margin)
        stats = vertex_stats(src, grid.vertices, params)
        counts.append(int(vertex_verdicts(stats, params).sum()))
    best = int(np.argmax(counts))  # argmax returns the first maximiser
    return cands[best], counts


def inradius(leg: float) -> float:
    return leg * (2.0 - math.sqrt(2.0)) / 2.0
