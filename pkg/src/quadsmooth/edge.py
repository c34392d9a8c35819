"""Smoothing the derivative jump across one interior edge.

Work happens in the edge chart ``[-rho0, rho0] x [0, length]``: ``y`` runs
along the edge from its first endpoint and ``x`` along the clockwise
normal, so ``Q1`` lives on ``x < 0`` and ``Q2`` on ``x > 0``.  The edge is
cut into ``N`` rectangles of height ``2 rho``.  On each rectangle the map
is ``(1 - s) Q1 + s Q2`` with ``s = eta(x / r)`` (type a) or
``s = eta(x / r + 1)`` (type b); the type depends on which side pushes
harder in the clockwise direction.  Where neighbouring rectangles change
type, the lower half of the upper rectangle slides the offset between 0
and 1 with ``eta(y / rho - 2i)``.
"""

from __future__ import annotations

import math
from dataclasses import dataclass, field, replace
from typing import Optional

import numpy as np

from .diagnostics import Diagnostics
from .errors import ConstraintUnsatisfiable, DegenerateConstants, OutOfChart
from .geometry import Jet2, SJet, check_finite, collision_pair, cw_perp, entry_sum, eta_all, op_norm
from .mesh import ConstantsEstimate
from .quadmap import QuadraticMap, edge_jump, poly_jet, poly_values, require_continuity

N_CAP = 10**6
SAFETY_R = 0.9
SLACK = 0.05


def rho_bound(consts: ConstantsEstimate, rho0: float) -> float:
    """Upper bound on the rectangle half-height; M = 0 terms are dropped."""
    d, L, M = consts.d, consts.L, consts.M
    terms = [rho0, d / (1000 * (M + 1) * (L + 1))]
    if M > 0:
        terms.append(d * d / (320 * M * L**3))
    return min(terms)


def smallest_N(length: float, bound: float, n_min: int = 4) -> int:
    """Smallest ``N >= n_min`` with ``length / (2N) < bound`` (strict)."""
    if not bound > 0:
        raise DegenerateConstants("rectangle bound is not positive")
    N = max(n_min, int(math.floor(length / (2 * bound))))
    while N > n_min and length / (2 * (N - 1)) < bound:
        N -= 1
    while not length / (2 * N) < bound:
        N += 1
    if N > N_CAP:
        raise ConstraintUnsatisfiable(f"edge needs N={N} rectangles, above the cap {N_CAP}")
    return N


def r_caps(rho: float, consts: ConstantsEstimate) -> dict:
    L, M = consts.L, consts.M
    caps = {"rho^2/(2(L+1))": rho * rho / (2 * (L + 1)), "rho/40": rho / 40}
    if M > 0:
        caps["2M rho^2/L"] = 2 * M * rho * rho / L
    return caps


@dataclass(frozen=True)
class EdgeBlendParams:
    P0: np.ndarray
    P1: np.ndarray
    length: float
    N: int
    rho: float
    r: float
    rho0: float
    r0_geom: float
    consts: ConstantsEstimate
    types: np.ndarray  # 0 = a, 1 = b, one per rectangle
    v_frames: np.ndarray
    u_frames: np.ndarray
    bounds: dict = field(default_factory=dict)

    @property
    def tangent(self) -> np.ndarray:
        return (self.P1 - self.P0) / self.length

    @property
    def normal(self) -> np.ndarray:
        return cw_perp(self.tangent)

    @property
    def chart_rotation(self) -> np.ndarray:
        """Columns (normal, tangent): world = P0 + R @ (x, y)."""
        return np.stack([self.normal, self.tangent], axis=1)

    def to_chart(self, p) -> np.ndarray:
        return (np.asarray(p, float) - self.P0) @ self.chart_rotation

    def to_world(self, xy) -> np.ndarray:
        return self.P0 + np.asarray(xy, float) @ self.chart_rotation.T

    def with_r(self, r: float) -> "EdgeBlendParams":
        if not 0 < r <= self.r * (1 + 1e-12):
            raise ValueError("only shrinking r keeps the parameters admissible")
        return replace(self, r=float(r))

    def ledger(self) -> dict:
        return {
            "P0": self.P0.tolist(),
            "P1": self.P1.tolist(),
            "length": self.length,
            "N": self.N,
            "rho": self.rho,
            "r": self.r,
            "rho0": self.rho0,
            "r0_geom": self.r0_geom,
            "type_b_count": int(self.types.sum()),
            "bounds": dict(self.bounds),
        }


def _chart_maps(Q1: QuadraticMap, Q2: QuadraticMap, P0, R):
    return Q1.reframe(P0, R), Q2.reframe(P0, R)


def rectangle_frames(Q1c: QuadraticMap, Q2c: QuadraticMap, rho: float, N: int):
    """Types and frames at the rectangle centres ``(0, (2i - 1) rho)``."""
    y = (2 * np.arange(1, N + 1) - 1) * rho
    pts = np.stack([np.zeros_like(y), y], -1)
    D1 = poly_jet(Q1c.coeffs, pts).D  # column 0 = d/dx, column 1 = d/dy
    D2 = poly_jet(Q2c.coeffs, pts).D
    vy = D1[:, :, 1]
    v = vy / np.hypot(vy[:, 0], vy[:, 1])[:, None]
    u = cw_perp(v)
    lhs = np.sum(D2[:, :, 0] * u, -1)
    rhs = np.sum(D1[:, :, 0] * u, -1)
    types = np.where(lhs >= rhs, 0, 1).astype(np.int8)
    return types, v, u


def classify_rect_type(params: EdgeBlendParams, i: int) -> str:
    """Type of rectangle ``i`` (1-based)."""
    if not 1 <= i <= params.N:
        raise IndexError("rectangle index out of range")
    return "ab"[int(params.types[i - 1])]


def _piecewise_image(Q1c, Q2c, xy):
    left = xy[:, 0] < 0
    out = np.empty_like(xy)
    out[left] = poly_values(Q1c.coeffs, xy[left], relative=True)
    out[~left] = poly_values(Q2c.coeffs, xy[~left], relative=True) + (Q2c.a[0] - Q1c.a[0], Q2c.b[0] - Q1c.b[0])
    return out


def geometric_radius(Q1c, Q2c, length, rho0, half_width, L, samples: int = 512) -> float:
    """Distance between the images of the short ends ``[-w, w] x {0, length}``
    and the images of the opposite boundary parts, divided by ``2L``."""
    from scipy.spatial import cKDTree

    s = np.linspace(0.0, 1.0, samples)
    end = np.linspace(-half_width, half_width, samples)
    left = np.stack([np.full(samples, -rho0), s * length], -1)
    right = np.stack([np.full(samples, rho0), s * length], -1)
    bottom = np.stack([np.linspace(-rho0, rho0, samples), np.zeros(samples)], -1)
    top = np.stack([np.linspace(-rho0, rho0, samples), np.full(samples, length)], -1)
    dmin = np.inf
    for e_y, opposite in ((0.0, (left, right, top)), (length, (left, right, bottom))):
        seg = _piecewise_image(Q1c, Q2c, np.stack([end, np.full(samples, e_y)], -1))
        other = _piecewise_image(Q1c, Q2c, np.concatenate(opposite))
        dist, _ = cKDTree(other).query(seg)
        dmin = min(dmin, float(dist.min()))
    return dmin / (2 * L)


def select_edge_params(Q1: QuadraticMap, Q2: QuadraticMap, edge, consts: ConstantsEstimate, rho0: float,
                       N: Optional[int] = None, r_cap: Optional[float] = None, extra_rho_bound: Optional[float] = None
                       ) -> EdgeBlendParams:
    """Smallest admissible N (unless given), then 0.9 times the largest
    admissible blend half-width."""
    if not consts.d > 0:
        raise DegenerateConstants(f"d={consts.d} must be positive")
    P0, P1 = (check_finite(p, "edge end") for p in edge)
    require_continuity(Q1, Q2, (P0, P1))
    length = float(np.hypot(*(P1 - P0)))
    bound = rho_bound(consts, rho0)
    if extra_rho_bound is not None:
        bound = min(bound, extra_rho_bound)
    if N is None:
        N = smallest_N(length, bound)
    elif not (N >= 4 and length / (2 * N) < bound):
        raise ConstraintUnsatisfiable(f"N={N} gives rho={length / (2 * N):.3g} not below {bound:.3g}")
    rho = length / (2 * N)
    t = (P1 - P0) / length
    R = np.stack([cw_perp(t), t], axis=1)
    Q1c, Q2c = _chart_maps(Q1, Q2, P0, R)
    caps = r_caps(rho, consts)
    w = min(caps.values())
    r0_geom = geometric_radius(Q1c, Q2c, length, rho0, w, consts.L)
    caps["r0_geom"] = r0_geom
    if r_cap is not None:
        caps["external"] = r_cap
    r = SAFETY_R * min(caps.values())
    if not r > 0:
        raise ConstraintUnsatisfiable("no positive blend half-width")
    types, v, u = rectangle_frames(Q1c, Q2c, rho, N)
    bounds = {"rho_bound": bound, **{"r<" + k: v_ for k, v_ in caps.items()}}
    return EdgeBlendParams(P0, P1, length, int(N), rho, float(r), float(rho0), float(r0_geom), consts, types, v, u, bounds)


class EdgeBlend:
    """Evaluator of the blended map around one edge."""

    def __init__(self, params: EdgeBlendParams, Q1: QuadraticMap, Q2: QuadraticMap):
        self.params = params
        self.Q1, self.Q2 = Q1, Q2
        R = params.chart_rotation
        self.Q1c, self.Q2c = _chart_maps(Q1, Q2, params.P0, R)
        dC = self.Q2c.coeffs - self.Q1c.coeffs
        dC[:, [0, 2, 5]] = 0.0  # the two maps agree on x = 0
        self.dC = dC
        self.base = self.Q1c.coeffs[:, 0].copy()  # Q1(P0)
        self.offset2 = self.Q2c.coeffs[:, 0] - self.base

    # offset field phi(y) ---------------------------------------------------
    def phi(self, y):
        p = self.params
        rho, types = p.rho, p.types.astype(float)
        k = np.clip(np.floor(y / (2 * rho)).astype(np.int64), 0, p.N - 1)
        local = y - 2 * k * rho
        prev = np.where(k > 0, types[np.maximum(k - 1, 0)], types[k])
        cur = types[k]
        trans = (k > 0) & (prev != cur) & (local < rho)
        e0, e1, e2 = eta_all(np.where(trans, local / rho, 0.0))
        up = cur > prev  # a -> b
        sign = np.where(up, 1.0, -1.0)
        val = np.where(trans, np.where(up, e0, 1.0 - e0), cur)
        d1 = np.where(trans, sign * e1 / rho, 0.0)
        d2 = np.where(trans, sign * e2 / rho**2, 0.0)
        return val, d1, d2

    def weight(self, xy) -> SJet:
        x, y = xy[..., 0], xy[..., 1]
        f0, f1, f2 = self.phi(y)
        r = self.params.r
        g = np.stack([np.full_like(x, 1.0 / r), f1], -1)
        H = np.zeros(x.shape + (2, 2))
        H[..., 1, 1] = f2
        return SJet(x / r + f0, g, H).eta()

    def chart_jet(self, xy, relative: bool = True) -> Jet2:
        """Jets in chart coordinates (both domain and derivative axes).

        With ``relative`` the value is ``g - Q1(P0)``, which keeps full
        precision for strips far thinner than the edge.
        """
        xy = np.asarray(xy, float)
        s = self.weight(xy)
        j1 = poly_jet(self.Q1c.coeffs, xy, relative=True)
        jd = poly_jet(self.dC, xy, relative=True)
        sv, sg, sH = s.v[..., None], s.g, s.H
        val = j1.value + sv * jd.value
        D = j1.D + sv[..., None] * jd.D + jd.value[..., :, None] * sg[..., None, :]
        D2 = (
            j1.D2
            + sv[..., None, None] * jd.D2
            + jd.D[..., :, :, None] * sg[..., None, None, :]
            + jd.D[..., :, None, :] * sg[..., None, :, None]
            + jd.value[..., :, None, None] * sH[..., None, :, :]
        )
        one = s.v >= 1.0
        if np.any(one):
            j2 = poly_jet(self.Q2c.coeffs, xy[one], relative=True)
            val[one] = j2.value + self.offset2
            D[one] = j2.D
            D2[one] = j2.D2
        zero = s.v <= 0.0
        if np.any(zero):
            val[zero] = j1.value[zero]
            D[zero] = j1.D[zero]
            D2[zero] = j1.D2[zero]
        if not relative:
            val = val + self.base
        return Jet2(val, D, D2)

    def in_chart(self, xy, tol: float = 1e-12) -> np.ndarray:
        p = self.params
        x, y = xy[..., 0], xy[..., 1]
        return (np.abs(x) <= p.rho0 * (1 + tol)) & (y >= -tol * p.length) & (y <= p.length * (1 + tol))

    def jet(self, pts, check_chart: bool = True) -> Jet2:
        """World-frame jets at world points.  Outside the strip the
        original quadratic's jet is returned unchanged."""
        pts = np.asarray(pts, float)
        single = pts.ndim == 1
        P = pts.reshape(-1, 2)
        xy = self.params.to_chart(P)
        if check_chart and not np.all(self.in_chart(xy)):
            raise OutOfChart("point outside the edge chart")
        s = self.weight(xy).v
        out = Jet2.stack_like(len(P))
        m1, m2 = s <= 0.0, s >= 1.0
        mid = ~(m1 | m2)
        if np.any(m1):
            j = self.Q1.jet(P[m1])
            out.value[m1], out.D[m1], out.D2[m1] = j.value, j.D, j.D2
        if np.any(m2):
            j = self.Q2.jet(P[m2])
            out.value[m2], out.D[m2], out.D2[m2] = j.value, j.D, j.D2
        if np.any(mid):
            j = self.chart_jet(xy[mid], relative=False).rotate_domain(self.params.chart_rotation.T)
            out.value[mid], out.D[mid], out.D2[mid] = j.value, j.D, j.D2
        return out[0] if single else out


def edge_blend_eval(params: EdgeBlendParams, Q1: QuadraticMap, Q2: QuadraticMap, p) -> Jet2:
    """Jet of the blended map at world point(s) ``p``."""
    return EdgeBlend(params, Q1, Q2).jet(p)


def _strip_grid(params: EdgeBlendParams, res: int, y_range=None):
    r = params.r
    y0, y1 = (0.0, params.length) if y_range is None else y_range
    xs = -r + (np.arange(res) + 0.5) * (2 * r / res)
    ys = y0 + (np.arange(res) + 0.5) * ((y1 - y0) / res)
    X, Y = np.meshgrid(xs, ys, indexing="ij")
    return np.stack([X.ravel(), Y.ravel()], -1), (2 * r / res) * ((y1 - y0) / res)


def strip_d2_integral(blend: EdgeBlend, res: int = 256, chunk: int = 1 << 16) -> float:
    """Midpoint quadrature of ``|D^2 g|`` (world frame, entry sum) over the strip."""
    xy, cell = _strip_grid(blend.params, res)
    F = blend.params.chart_rotation.T
    total = 0.0
    for s in range(0, len(xy), chunk):
        j = blend.chart_jet(xy[s : s + chunk]).rotate_domain(F)
        total += float(entry_sum(j.D2, 3).sum())
    return total * cell


def verify_edge(params: EdgeBlendParams, Q1: QuadraticMap, Q2: QuadraticMap, grid_res: int = 512,
                injectivity_res: int = 256, slack: float = SLACK, strict: bool = False, chunk: int = 1 << 16
                ) -> Diagnostics:
    """Sampled checks of the blended strip against the proven bounds."""
    blend = EdgeBlend(params, Q1, Q2)
    d, L, M = params.consts.d, params.consts.L, params.consts.M
    xy, cell = _strip_grid(params, grid_res)
    F = params.chart_rotation.T
    minJ, argJ = np.inf, None
    minU, argU = np.inf, None
    maxD, argD = -np.inf, None
    d2sum = 0.0
    for s in range(0, len(xy), chunk):
        pts = xy[s : s + chunk]
        j = blend.chart_jet(pts)
        J = j.jacobian
        k = int(np.argmin(J))
        if J[k] < minJ:
            minJ, argJ = float(J[k]), pts[k]
        # clockwise perpendicular of the edge direction's image
        yu, inv = np.unique(pts[:, 1], return_inverse=True)
        vy = poly_jet(blend.Q1c.coeffs, np.stack([np.zeros(len(yu)), yu], -1)).D[:, :, 1]
        u = cw_perp(vy / np.hypot(vy[:, 0], vy[:, 1])[:, None])[inv]
        du = np.sum(j.D[:, :, 0] * u, -1)
        k = int(np.argmin(du))
        if du[k] < minU:
            minU, argU = float(du[k]), pts[k]
        nd = op_norm(j.D)
        k = int(np.argmax(nd))
        if nd[k] > maxD:
            maxD, argD = float(nd[k]), pts[k]
        d2sum += float(entry_sum(j.rotate_domain(F).D2, 3).sum())
    d2int = d2sum * cell
    jump = edge_jump(Q1, Q2, (params.P0, params.P1)).integral
    budget = jump + M * params.length * params.r
    diag = Diagnostics()
    w = lambda xy_: params.to_world(xy_).tolist()  # noqa: E731
    diag.add("min_jacobian", minJ, 0.8 * d * (1 - slack), ">=", w(argJ))
    diag.add("min_normal_push", minU, 0.9 * d / L * (1 - slack), ">=", w(argU))
    diag.add("max_derivative", maxD, 8 * L, "<=", w(argD))
    # injectivity at sampling resolution: separated samples must not collide
    # the strip is narrower than 1e-12, so the collision radius is capped by
    # half the image spacing of neighbouring samples across the strip
    ixy, _ = _strip_grid(params, injectivity_res)
    img = np.concatenate([blend.chart_jet(ixy[s : s + chunk]).value for s in range(0, len(ixy), chunk)])
    across = img.reshape(injectivity_res, injectivity_res, 2)
    spacing = float(np.hypot(*np.diff(across, axis=0).reshape(-1, 2).T).min())
    tol = min(1e-12, 0.5 * spacing)
    sep = 1e-3 * params.length
    hit = collision_pair(ixy, img, tol, lambda a, b: np.hypot(*(ixy[a] - ixy[b]).T) > sep)
    diag.add("strip_injective", hit is None, 1, "bool", None if hit is None else w(ixy[hit[0]]) + w(ixy[hit[1]]))
    diag.measured.update(
        {
            "d2_integral": d2int,
            "jump_integral": jump,
            "budget": budget,
            "d2_ratio": d2int / budget if budget > 0 else (0.0 if d2int == 0 else math.inf),
            "grid_res": grid_res,
        }
    )
    if strict:
        diag.raise_on_violation()
    return diag
