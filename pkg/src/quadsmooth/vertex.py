"""Smoothing a fan of quadratics around a grid vertex by a polar blend.

Around the vertex ``a`` write ``F(z) = f(a + z) - f(a)`` in polar form
``F = R_f (cos psi, sin psi)``.  The smoothed map is
``g = f(a) + R_g (cos Phi, sin Phi)`` where

* ``R_g = (1 - s_R) lam t + s_R R_f`` with ``s_R = eta((8t - 7R)/R)``,
* ``Phi = theta + s_phi * (psi - theta)`` with ``s_phi = eta((8t - 6R)/R)``,

so ``g = lam z`` for ``t <= 6R/8`` and ``g = f`` for ``t >= R``.  The angle
is blended as a lifted angle, which keeps ``|(cos Phi, sin Phi)| = 1``.
Across each interior ray the fan is first replaced, inside the thin
rectangle ``O_i``, by the same eta-blend used along edges.
"""

from __future__ import annotations

import math
from dataclasses import dataclass, field
from typing import Optional, Sequence

import numpy as np

from .diagnostics import Diagnostics
from .errors import ConstraintUnsatisfiable, DegenerateConstants, EdgeMismatch, OutOfChart
from .geometry import (
    Jet2,
    SJet,
    ccw_perp,
    collision_pair,
    cw_perp,
    entry_sum,
    modulus_and_argument,
    op_norm,
    polar_jets,
)
from .mesh import ConstantsEstimate, constants_from_jets
from .quadmap import QuadraticMap, coeffs_from_jet, poly_jet, poly_values

TWO_PI = 2.0 * math.pi
SAFETY_R = 0.9


# --------------------------------------------------------------------------
# fans


@dataclass
class VertexFan:
    """Quadratics on angular sectors ``[start_k, end_k]`` around ``center``.

    Sectors are sorted counter-clockwise starting from angle 0.  A fan
    whose sectors cover the full circle is closed; otherwise it is the
    boundary fan of a vertex on the edge of the region.
    """

    center: np.ndarray
    starts: np.ndarray
    ends: np.ndarray
    quads: list
    ray_tol: float = 1e-10

    def __post_init__(self):
        self.center = np.asarray(self.center, float)
        starts = np.mod(np.asarray(self.starts, float), TWO_PI)
        widths = np.asarray(self.ends, float) - np.asarray(self.starts, float)
        if np.any(widths <= 0) or widths.sum() > TWO_PI + 1e-9:
            raise ValueError("sector widths must be positive and add up to at most 2 pi")
        order = np.argsort(starts, kind="stable")
        self.starts = starts[order]
        self.ends = self.starts + widths[order]
        self.quads = [self.quads[k] for k in order]
        # local copies expanded about the centre keep relative values exact
        self.local_coeffs = np.stack([q.reframe(self.center).coeffs for q in self.quads])
        self.base = self.quads[0](self.center)
        self._rays = self._find_rays()
        self._check_rays()

    @classmethod
    def closed(cls, center, angles: Sequence[float], quads: Sequence[QuadraticMap]) -> "VertexFan":
        """Fan from ``omega_0 < ... < omega_N = omega_0 + 2 pi``; ``quads[i]``
        lives on ``[omega_i, omega_{i+1}]``."""
        angles = np.asarray(angles, float)
        if len(angles) != len(quads) + 1 or np.any(np.diff(angles) <= 0):
            raise ValueError("need strictly increasing angles, one more than quadratics")
        if abs(angles[-1] - angles[0] - TWO_PI) > 1e-9:
            raise ValueError("a closed fan must span exactly 2 pi")
        return cls(center, angles[:-1], angles[1:], list(quads))

    @property
    def n_sectors(self) -> int:
        return len(self.quads)

    @property
    def is_closed(self) -> bool:
        return abs(np.sum(self.ends - self.starts) - TWO_PI) < 1e-9

    @property
    def widths(self) -> np.ndarray:
        return self.ends - self.starts

    @property
    def omega_star(self) -> float:
        return float(min(math.pi / 8, self.widths.min()))

    def _find_rays(self) -> list:
        """Interior rays as (angle, cw sector index, ccw sector index)."""
        rays = []
        n = self.n_sectors
        for k in range(n):
            nxt = (k + 1) % n
            gap = np.mod(self.starts[nxt] - self.ends[k] + math.pi, TWO_PI) - math.pi
            if abs(gap) < 1e-9 and (n > 1 or self.is_closed):
                rays.append((float(np.mod(self.ends[k], TWO_PI)), k, nxt))
        return rays

    @property
    def rays(self) -> list:
        return list(self._rays)

    def _check_rays(self):
        for ang, k_cw, k_ccw in self._rays:
            w = np.array([math.cos(ang), math.sin(ang)])
            pts = np.linspace(0.0, 1.0, 11)[:, None] * w
            a = poly_values(self.local_coeffs[k_cw], pts, relative=True)
            b = poly_values(self.local_coeffs[k_ccw], pts, relative=True)
            scale = 1.0 + np.abs(a).max()
            if np.abs(a - b).max() > self.ray_tol * scale:
                raise EdgeMismatch(f"neighbouring quadratics disagree on the ray at angle {ang:.6f}")

    def sector_of(self, theta) -> np.ndarray:
        """Sector index for each angle, -1 when the angle is in a gap."""
        theta = np.mod(np.asarray(theta, float), TWO_PI)
        out = np.full(theta.shape, -1, dtype=np.int64)
        for k in range(self.n_sectors):
            rel = np.mod(theta - self.starts[k], TWO_PI)
            inside = rel <= self.widths[k] + 1e-12
            if self.widths[k] >= TWO_PI - 1e-12:
                inside = np.ones_like(inside)
            out = np.where((out < 0) & inside, k, out)
        return out

    def local_jet(self, z) -> Jet2:
        """Piecewise-quadratic jets of ``f(a + z) - f(a)``."""
        z = np.asarray(z, float)
        sec = self.sector_of(np.arctan2(z[..., 1], z[..., 0]))
        if np.any(sec < 0):
            raise OutOfChart("point lies outside every sector of the fan")
        return poly_jet(self.local_coeffs[sec], z, relative=True)

    def sample(self, radius: float, n: int, rng, margin: float = 0.0):
        """Random points in the fan within ``radius`` (angles kept ``margin``
        away from sector boundaries)."""
        k = rng.integers(0, self.n_sectors, n)
        frac = rng.uniform(0, 1, n)
        ang = self.starts[k] + margin + frac * (self.widths[k] - 2 * margin)
        t = radius * np.sqrt(rng.uniform(0, 1, n))
        return np.stack([t * np.cos(ang), t * np.sin(ang)], -1), k


def fan_constants(fan: VertexFan, radius: float, samples: int = 4096, seed: int = 0) -> ConstantsEstimate:
    rng = np.random.default_rng(seed)
    z, _ = fan.sample(radius, samples, rng)
    j = fan.local_jet(z)
    return constants_from_jets(j.jacobian, j.D, j.D2, samples, "fan")


# --------------------------------------------------------------------------
# parameters


def rho_chain_bound(consts: ConstantsEstimate, rho0: float) -> float:
    d, L, M = consts.d, consts.L, consts.M
    terms = [rho0, min(d, d * d) / (1000 * (M + 1) * (L + 1) ** 4), L / (8 * (M + 1))]
    if M > 0:
        terms.append(d * d / (320 * M * L**3))
    return min(terms)


def r_cap(R: float, rho: float, consts: ConstantsEstimate, omega_star: float) -> dict:
    d, L = consts.d, consts.L
    return {
        "d^2R/(432L^4)": d * d * R / (432 * L**4),
        "Rd/(1200L^2)": R * d / (1200 * L * L),
        "rho^2/(2(L+1))": rho * rho / (2 * (L + 1)),
        "(R/2)tan(w*/3)": 0.5 * R * math.tan(omega_star / 3),
    }


def choose_R(rhos, R_cap: Optional[float] = None) -> float:
    rhos = np.asarray(rhos, float)
    if len(rhos) == 0 or not np.all(rhos > 0):
        raise ConstraintUnsatisfiable("need positive ray lengths to choose R")
    R = SAFETY_R * 0.5 * float(rhos.min())
    if R_cap is not None:
        R = min(R, SAFETY_R * R_cap)
    if not R > 0:
        raise ConstraintUnsatisfiable("no positive R")
    return R


@dataclass(frozen=True)
class VertexBlendParams:
    R: float
    lam: float
    rhos: np.ndarray  # per interior ray
    rs: np.ndarray
    ray_angles: np.ndarray
    types: np.ndarray  # 0 = a, 1 = b per interior ray
    v_frames: np.ndarray
    u_frames: np.ndarray
    consts: ConstantsEstimate
    omega_star: float
    rho0: float
    chain_ok: bool
    caps: dict = field(default_factory=dict)

    def ledger(self) -> dict:
        return {
            "R": self.R,
            "lambda": self.lam,
            "rho": self.rhos.tolist(),
            "r": self.rs.tolist(),
            "ray_angles": self.ray_angles.tolist(),
            "types": "".join("ab"[int(t)] for t in self.types),
            "omega_star": self.omega_star,
            "chain_ok": self.chain_ok,
        }


def ray_types(fan: VertexFan, rhos, hints=None):
    """Blend type of every interior ray, decided at distance ``rho_i``.

    ``Q1`` is the quadratic on the counter-clockwise side, ``Q2`` the one
    on the clockwise side, and the blend coordinate is the clockwise
    normal of the ray.  ``hints`` (the types of the adjoining edge blends)
    take precedence, so the two constructions coincide even where the
    comparison is a rounding-level tie.  Returns the types, the frames
    and the types the comparison alone would give.
    """
    types, vs, us, printed = [], [], [], []
    for i, (ang, k_cw, k_ccw) in enumerate(fan.rays):
        w = np.array([math.cos(ang), math.sin(ang)])
        x_dir = cw_perp(w)
        p = rhos[i] * w
        D1 = poly_jet(fan.local_coeffs[k_ccw], p).D
        D2 = poly_jet(fan.local_coeffs[k_cw], p).D
        v = D1 @ w
        v = v / np.hypot(*v)
        u = cw_perp(v)
        lhs, rhs = float(np.dot(D2 @ x_dir, u)), float(np.dot(D1 @ x_dir, u))
        t = 0 if lhs >= rhs else 1
        tie = abs(lhs - rhs) <= 1e-12 * (1.0 + abs(lhs) + abs(rhs))
        if hints is not None:
            types.append(int(hints[i]))
            printed.append(int(hints[i]) if tie else t)
        else:
            types.append(t)
            printed.append(t)
        vs.append(v)
        us.append(u)
    return (np.array(types, dtype=np.int8), np.array(vs).reshape(-1, 2), np.array(us).reshape(-1, 2),
            np.array(printed, dtype=np.int8))


def select_vertex_params(fan: VertexFan, consts: ConstantsEstimate, rhos, rs=None, rho0: Optional[float] = None,
                         R_cap: Optional[float] = None, type_hints=None) -> VertexBlendParams:
    """``R`` at 0.9 of its admissible maximum ``min(rho_i)/2``; ray
    half-widths ``rs`` (or 0.9 of their caps) checked against the caps."""
    if not consts.d > 0:
        raise DegenerateConstants(f"d={consts.d} must be positive")
    rays = fan.rays
    rhos = np.asarray(rhos, float).reshape(-1)
    if len(rhos) != len(rays):
        raise ValueError(f"need one rho per interior ray ({len(rays)})")
    rho0 = float(rhos.max() * 4 if rho0 is None else rho0)
    R = choose_R(rhos, R_cap) if len(rays) else SAFETY_R * 0.5 * (R_cap if R_cap else rho0)
    w_star = fan.omega_star
    caps = [min(r_cap(R, rho, consts, w_star).values()) for rho in rhos]
    if rs is None:
        rs = SAFETY_R * np.asarray(caps)
    rs = np.asarray(rs, float).reshape(-1)
    for i, (ri, ci) in enumerate(zip(rs, caps)):
        if not 0 < ri <= ci * (1 + 1e-12):
            raise ConstraintUnsatisfiable(f"ray {i}: r={ri:.3g} exceeds its cap {ci:.3g}")
    # rectangles O_i must not overlap: compare angular half-widths with gaps
    angs = np.array([a for a, _, _ in rays])
    if len(angs) > 1:
        half = np.arctan2(rs, 0.5 * R)
        order = np.argsort(angs)
        a_sorted, h_sorted = angs[order], half[order]
        gaps = np.diff(np.concatenate([a_sorted, [a_sorted[0] + TWO_PI]]))
        need = h_sorted + np.roll(h_sorted, -1)
        if np.any(gaps <= need):
            raise ConstraintUnsatisfiable("blend rectangles around the vertex overlap")
    chain = rho_chain_bound(consts, rho0)
    chain_ok = bool(len(rhos) == 0 or (2 * R < rhos.min() < chain))
    types, v, u, printed = ray_types(fan, rhos, type_hints)
    return VertexBlendParams(
        float(R), consts.d / (4 * consts.L), rhos, rs, angs, types, v, u, consts, w_star, rho0, chain_ok,
        {"rho_chain_bound": chain, "r_caps": [float(c) for c in caps],
         "type_disagreements": int(np.sum(types != printed))},
    )


# --------------------------------------------------------------------------
# evaluation


class VertexBlend:
    """Evaluator of ``f~`` and of the polar blend ``g`` around one vertex."""

    def __init__(self, fan: VertexFan, params: VertexBlendParams):
        self.fan, self.params = fan, params
        self.ray_data = []
        for i, (ang, k_cw, k_ccw) in enumerate(fan.rays):
            w = np.array([math.cos(ang), math.sin(ang)])
            Rm = np.stack([cw_perp(w), w], axis=1)  # chart (X, Y) -> local z
            C1 = _rotate_coeffs(fan.local_coeffs[k_ccw], Rm)
            C2 = _rotate_coeffs(fan.local_coeffs[k_cw], Rm)
            dC = C2 - C1
            dC[:, [0, 2, 5]] = 0.0
            self.ray_data.append((Rm, C1, C2, dC))
        self.delta0 = self._reference_angle_offset()

    # f~ -------------------------------------------------------------------
    def ray_chart(self, i: int, z):
        Rm = self.ray_data[i][0]
        return z @ Rm

    def in_rect(self, i: int, z) -> np.ndarray:
        p = self.params
        XY = self.ray_chart(i, z)
        return (np.abs(XY[..., 0]) <= p.rs[i]) & (XY[..., 1] >= 0.5 * p.R) & (XY[..., 1] <= p.rhos[i])

    def _ray_blend(self, i: int, z) -> Jet2:
        Rm, C1, C2, dC = self.ray_data[i]
        p = self.params
        XY = z @ Rm
        r = p.rs[i]
        arg = SJet(
            XY[..., 0] / r + float(p.types[i]),
            np.broadcast_to(np.array([1.0 / r, 0.0]), XY.shape).copy(),
            np.zeros(XY.shape[:-1] + (2, 2)),
        )
        s = arg.eta()
        j1 = poly_jet(C1, XY, relative=True)
        jd = poly_jet(dC, XY, relative=True)
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
            j2 = poly_jet(C2, XY[one], relative=True)
            val[one], D[one], D2[one] = j2.value, j2.D, j2.D2
        zero = s.v <= 0.0
        if np.any(zero):
            val[zero], D[zero], D2[zero] = j1.value[zero], j1.D[zero], j1.D2[zero]
        return Jet2(val, D, D2).rotate_domain(Rm.T)

    def tilde_local(self, z) -> Jet2:
        """Jets of ``f~(a + z) - f(a)``."""
        z = np.asarray(z, float)
        out = self.fan.local_jet(z)
        for i in range(len(self.ray_data)):
            m = self.in_rect(i, z)
            if np.any(m):
                j = self._ray_blend(i, z[m])
                out.value[m], out.D[m], out.D2[m] = j.value, j.D, j.D2
        return out

    # polar blend ------------------------------------------------------------
    def _reference_angle_offset(self) -> float:
        k = 0
        ang = self.fan.starts[k] + 0.5 * self.fan.widths[k]
        z = self.params.R * np.array([[math.cos(ang), math.sin(ang)]])
        F = self.fan.local_jet(z).value[0]
        return float(np.angle(complex(F[0], F[1]) / complex(z[0, 0], z[0, 1])))

    def polar_parts(self, z):
        """``(R_g, Phi)`` as scalar jets at local points (``|z| > 0``)."""
        p = self.params
        tj, th = polar_jets(z)
        F = self.tilde_local(z)
        rf, psi = modulus_and_argument(F)
        raw = psi.v - th.v - self.delta0
        lifted = self.delta0 + np.mod(raw + math.pi, TWO_PI) - math.pi
        delta = SJet(lifted, psi.g - th.g, psi.H - th.H)
        sR = (tj * (8.0 / p.R) + (-7.0)).eta()
        sP = (tj * (8.0 / p.R) + (-6.0)).eta()
        lt = tj * p.lam
        Rg = lt + sR * (rf - lt)
        Phi = th + sP * delta
        return Rg, Phi, F

    def local_jet(self, z) -> Jet2:
        """Jets of ``g(a + z) - f(a)``."""
        z = np.asarray(z, float)
        shape = z.shape[:-1]
        P = z.reshape(-1, 2)
        p = self.params
        t = np.hypot(P[:, 0], P[:, 1])
        out = Jet2.stack_like(len(P))
        core = t <= 0.75 * p.R
        outer = t >= p.R
        mid = ~(core | outer)
        if np.any(core):
            out.value[core] = p.lam * P[core]
            out.D[core] = p.lam * np.eye(2)
        if np.any(outer):
            j = self.tilde_local(P[outer])
            out.value[outer], out.D[outer], out.D2[outer] = j.value, j.D, j.D2
        if np.any(mid):
            Rg, Phi, _ = self.polar_parts(P[mid])
            j = polar_to_jet(Rg, Phi)
            out.value[mid], out.D[mid], out.D2[mid] = j.value, j.D, j.D2
        return Jet2(out.value.reshape(shape + (2,)), out.D.reshape(shape + (2, 2)), out.D2.reshape(shape + (2, 2, 2)))

    def jet(self, pts, check_chart: bool = True) -> Jet2:
        pts = np.asarray(pts, float)
        z = pts - self.fan.center
        if check_chart and np.any(np.hypot(z[..., 0], z[..., 1]) > 2 * self.params.R * (1 + 1e-12)):
            raise OutOfChart("point farther than 2R from the vertex")
        j = self.local_jet(z)
        return Jet2(j.value + self.fan.base, j.D, j.D2)


def polar_to_jet(Rg: SJet, Phi: SJet) -> Jet2:
    c, s = np.cos(Phi.v), np.sin(Phi.v)
    e = np.stack([c, s], -1)
    ep = np.stack([-s, c], -1)
    val = Rg.v[..., None] * e
    D = e[..., :, None] * Rg.g[..., None, :] + Rg.v[..., None, None] * ep[..., :, None] * Phi.g[..., None, :]
    gg = Phi.g[..., :, None] * Phi.g[..., None, :]
    cross = Rg.g[..., :, None] * Phi.g[..., None, :]
    cross = cross + np.swapaxes(cross, -1, -2)
    D2 = (
        e[..., :, None, None] * Rg.H[..., None, :, :]
        + ep[..., :, None, None] * cross[..., None, :, :]
        + Rg.v[..., None, None, None] * (ep[..., :, None, None] * Phi.H[..., None, :, :] - e[..., :, None, None] * gg[..., None, :, :])
    )
    return Jet2(val, D, D2)


def _rotate_coeffs(C, Rm):
    """Coefficients of ``Q(Rm @ xi)`` from those of ``Q`` (both about 0)."""
    j = poly_jet(C, np.zeros(2)).rotate_domain(Rm)
    return coeffs_from_jet(j.value, j.D, j.D2)


def tilde_f_eval(fan: VertexFan, params: VertexBlendParams, p) -> Jet2:
    p = np.asarray(p, float)
    z = p - fan.center
    if np.any(np.hypot(z[..., 0], z[..., 1]) > 2 * params.R * (1 + 1e-12)):
        raise OutOfChart("point farther than 2R from the vertex")
    j = VertexBlend(fan, params).tilde_local(z)
    return Jet2(j.value + fan.base, j.D, j.D2)


def vertex_blend_eval(fan: VertexFan, params: VertexBlendParams, p) -> Jet2:
    return VertexBlend(fan, params).jet(p)


# --------------------------------------------------------------------------
# verification


def _fan_angles(fan: VertexFan, n: int) -> np.ndarray:
    th = TWO_PI * (np.arange(n) + 0.5) / n
    return th[fan.sector_of(th) >= 0]


def band_points(blend: VertexBlend, nx: int = 32, ny: int = 128, t_lo: float = 0.75, t_hi: float = 1.0):
    """Samples across every blend rectangle for radii in ``[t_lo R, t_hi R]``
    (cell-centred); returns points, cell areas."""
    p = blend.params
    pts, areas = [], []
    for i in range(len(blend.ray_data)):
        Rm = blend.ray_data[i][0]
        r = p.rs[i]
        X = -r + (np.arange(nx) + 0.5) * (2 * r / nx)
        Y = t_lo * p.R + (np.arange(ny) + 0.5) * ((t_hi - t_lo) * p.R / ny)
        XX, YY = np.meshgrid(X, Y, indexing="ij")
        XY = np.stack([XX.ravel(), YY.ravel()], -1)
        pts.append(XY @ Rm.T)
        areas.append(np.full(len(XY), (2 * r / nx) * ((t_hi - t_lo) * p.R / ny)))
    if not pts:
        return np.zeros((0, 2)), np.zeros(0)
    return np.concatenate(pts), np.concatenate(areas)


def disk_d2_integral(blend: VertexBlend, n_t: int = 128, n_theta: int = 512) -> float:
    """``int_{B(0,R)} |D^2 g|`` by polar midpoint rule plus the thin bands."""
    p = blend.params
    lo = 0.75 * p.R  # g is linear inside
    t = lo + (np.arange(n_t) + 0.5) * ((p.R - lo) / n_t)
    th = _fan_angles(blend.fan, n_theta)
    T, TH = np.meshgrid(t, th, indexing="ij")
    z = np.stack([T * np.cos(TH), T * np.sin(TH)], -1).reshape(-1, 2)
    w = (T * ((p.R - lo) / n_t) * (TWO_PI / n_theta)).ravel()
    total = float(np.dot(entry_sum(blend.local_jet(z).D2, 3), w))
    bp, ba = band_points(blend)
    if len(bp):
        total += float(np.dot(entry_sum(blend.local_jet(bp).D2, 3), ba))
    return total


def monotonicity(blend: VertexBlend, n_t: int = 256, n_theta: int = 1024, chunk: int = 1 << 16):
    """Minimum over samples of ``d R_g / dt`` and ``d Phi / d theta``.

    The polar grid covers ``t in (0, R]``; extra samples resolve the thin
    blend rectangles.  Points on the linear core use the exact values
    ``lam`` and 1.
    """
    p = blend.params
    t = p.R * np.arange(1, n_t + 1) / n_t
    th = _fan_angles(blend.fan, n_theta)
    T, TH = np.meshgrid(t, th, indexing="ij")
    z = np.stack([T * np.cos(TH), T * np.sin(TH)], -1).reshape(-1, 2)
    bp, _ = band_points(blend)
    z = np.concatenate([z, bp]) if len(bp) else z
    minR, argR, minP, argP = math.inf, None, math.inf, None
    core = np.hypot(z[:, 0], z[:, 1]) <= 0.75 * p.R
    if np.any(core):
        minR, argR = p.lam, z[np.argmax(core)]
        minP, argP = 1.0, z[np.argmax(core)]
    zz = z[~core]
    for s in range(0, len(zz), chunk):
        zc = zz[s : s + chunk]
        Rg, Phi, _ = blend.polar_parts(zc)
        tt = np.hypot(zc[:, 0], zc[:, 1])
        dR = np.sum(Rg.g * zc, -1) / tt
        dP = np.sum(Phi.g * ccw_perp(zc), -1)
        k = int(np.argmin(dR))
        if dR[k] < minR:
            minR, argR = float(dR[k]), zc[k]
        k = int(np.argmin(dP))
        if dP[k] < minP:
            minP, argP = float(dP[k]), zc[k]
    return minR, argR, minP, argP


def unwrapped_angle_slope(blend: VertexBlend, t: float, n_theta: int = 4096) -> float:
    """Smallest finite-difference slope of the unwrapped image angle on the
    circle of radius ``t`` (closed fans only)."""
    th = TWO_PI * np.arange(n_theta + 1) / n_theta
    z = t * np.stack([np.cos(th), np.sin(th)], -1)
    v = blend.local_jet(z).value
    ang = np.unwrap(np.arctan2(v[:, 1], v[:, 0]))
    return float((np.diff(ang) / np.diff(th)).min())


def fan_inequalities(fan: VertexFan, consts: ConstantsEstimate, radius: float, samples: int = 1000, seed: int = 0) -> Diagnostics:
    """Pointwise inequalities for a quadratic fan with ``f(a) = 0`` and its
    piecewise-linear part ``h``."""
    d, L, M = consts.d, consts.L, consts.M
    rng = np.random.default_rng(seed)
    z, k = fan.sample(radius, samples, rng)
    tz = np.hypot(z[:, 0], z[:, 1])
    j = fan.local_jet(z)
    lin = np.stack([fan.quads[i].jet(fan.center).D for i in range(fan.n_sectors)])[k]
    h = np.einsum("nij,nj->ni", lin, z)
    w_ang = rng.uniform(0, TWO_PI, samples)
    w = np.stack([np.cos(w_ang), np.sin(w_ang)], -1)
    Dw = np.einsum("nij,nj->ni", j.D, w)
    nDw = np.hypot(Dw[:, 0], Dw[:, 1])
    diag = Diagnostics()
    tiny = 1e-12
    diag.add("derivative_lower", float((nDw - d / L).min()), -tiny, ">=")
    diag.add("derivative_upper", float((L - nDw).min()), -tiny, ">=")
    becca = np.hypot(*(h - j.value).T) - 0.5 * M * tz**2
    diag.add("taylor_value", float(becca.max()), tiny, "<=")
    lim = d / (L * M) if M > 0 else math.inf
    near = tz <= lim
    nf = np.hypot(j.value[:, 0], j.value[:, 1])
    if np.any(near):
        diag.add("growth_lower", float((nf - d / (2 * L) * tz)[near].min()), -tiny, ">=")
        diag.add("growth_upper", float((L * tz - nf)[near].min()), -tiny, ">=")
    ella = op_norm(j.D - lin) - M * tz
    diag.add("taylor_derivative", float(ella.max()), tiny, "<=")
    Dv = np.einsum("nij,nj->ni", j.D, w)
    uvec = cw_perp(Dv / np.hypot(Dv[:, 0], Dv[:, 1])[:, None])
    Du = np.einsum("nij,nj->ni", j.D, cw_perp(w))
    diag.add("clockwise_push", float((np.sum(Du * uvec, -1) - d / L).min()), -tiny, ">=")
    diag.measured["samples"] = samples
    return diag


def partials_identity(fan: VertexFan, radius: float, samples: int = 200, h: float = 1e-6, seed: int = 1) -> float:
    """Largest relative error of ``<d_theta phi, phi_perp> = (t/R_f) <D_{theta_perp} f, phi_perp>``
    where ``phi = f/|f|``; the left side uses central differences."""
    rng = np.random.default_rng(seed)
    z, _ = fan.sample(radius, samples, rng, margin=100 * h)
    t = np.hypot(z[:, 0], z[:, 1])
    th = np.arctan2(z[:, 1], z[:, 0])

    def phi_at(angle):
        pts = t[:, None] * np.stack([np.cos(angle), np.sin(angle)], -1)
        v = fan.local_jet(pts).value
        return v / np.hypot(v[:, 0], v[:, 1])[:, None]

    dphi = (phi_at(th + h) - phi_at(th - h)) / (2 * h)
    j = fan.local_jet(z)
    phi = j.value / np.hypot(j.value[:, 0], j.value[:, 1])[:, None]
    perp = ccw_perp(phi)
    lhs = np.sum(dphi * perp, -1)
    Rf = np.hypot(j.value[:, 0], j.value[:, 1])
    theta_perp = np.stack([-np.sin(th), np.cos(th)], -1)
    rhs = t / Rf * np.sum(np.einsum("nij,nj->ni", j.D, theta_perp) * perp, -1)
    return float(np.max(np.abs(lhs - rhs) / np.maximum(np.abs(rhs), 1e-300)))


def verify_vertex(fan: VertexFan, params: VertexBlendParams, grid_res: int = 256, polar=(256, 1024),
                  inequality_radius: Optional[float] = None, strict: bool = False) -> Diagnostics:
    blend = VertexBlend(fan, params)
    p = params
    diag = Diagnostics()
    minR, argR, minP, argP = monotonicity(blend, *polar)
    c = fan.center
    diag.add("radial_monotone", minR, 0.0, ">", (argR + c).tolist())
    diag.add("angular_monotone", minP, 0.0, ">", (argP + c).tolist())
    # Jacobian and injectivity over B(0, 2R)
    g1 = -2 * p.R + (np.arange(grid_res) + 0.5) * (4 * p.R / grid_res)
    X, Y = np.meshgrid(g1, g1, indexing="ij")
    z = np.stack([X.ravel(), Y.ravel()], -1)
    keep = (np.hypot(z[:, 0], z[:, 1]) <= 2 * p.R) & (fan.sector_of(np.arctan2(z[:, 1], z[:, 0])) >= 0)
    z = z[keep]
    idx = np.argwhere(keep.reshape(grid_res, grid_res))
    bp, _ = band_points(blend, t_lo=0.75, t_hi=2.0)
    j = blend.local_jet(np.concatenate([z, bp]) if len(bp) else z)
    J = j.jacobian
    k = int(np.argmin(J))
    zz = np.concatenate([z, bp]) if len(bp) else z
    diag.add("min_jacobian", float(J[k]), 0.0, ">", (zz[k] + c).tolist())
    img = j.value[: len(z)]
    diam = float(np.ptp(img, axis=0).max()) if len(img) else 0.0
    hit = collision_pair(z, img, 1e-12 * diam, lambda a, b: np.abs(idx[a] - idx[b]).max(axis=1) >= 2)
    diag.add("injective", hit is None, 1, "bool", None if hit is None else (z[hit[0]] + c).tolist() + (z[hit[1]] + c).tolist())
    d2 = disk_d2_integral(blend)
    diag.measured.update({"d2_disk_integral": d2, "d2_ratio_over_R": d2 / p.R, "R": p.R, "lambda": p.lam})
    # inequalities of the underlying fan
    rad = inequality_radius if inequality_radius is not None else min(p.rho0, 2 * p.R)
    ineq = fan_inequalities(fan, p.consts, rad)
    for chk in ineq.checks:
        chk.name = "fan_" + chk.name
        diag.checks.append(chk)
    diag.measured["partials_rel_err"] = partials_identity(fan, rad)
    diag.add("partials_identity", diag.measured["partials_rel_err"], 1e-4, "<")
    if strict:
        diag.raise_on_violation()
    return diag
