"""Quadratic maps, the averaged six-condition triangle interpolant and
edge jump measures.

A quadratic map is ``f(x, y) = (a . m, b . m)`` with monomials
``m = (1, x, y, x^2, xy, y^2)`` written in a local frame.  Each grid square
is cut by its (-1, 1) diagonal into a lower and an upper right isosceles
triangle.  Every triangle is interpolated from six numbers: averaged values
at its three vertices and one averaged tangential derivative per edge,
taken at a vertex and direction fixed globally per edge (the anchor
scheme).  Two triangles sharing an edge therefore see the same three
conditions on that edge, which pins down the common quadratic trace.
"""

from __future__ import annotations

from dataclasses import dataclass, field
from typing import Callable, Optional

import numpy as np

from .errors import EdgeMismatch, SingularSystem
from .geometry import Jet2, check_finite, disk_average, fd_jet

AVERAGING_FRACTION = 0.1  # averaging radius as a fraction of the leg length


# --------------------------------------------------------------------------
# polynomial kernels (batched)


def poly_values(C: np.ndarray, xi: np.ndarray, relative: bool = False) -> np.ndarray:
    """Evaluate coefficient arrays ``C[..., 2, 6]`` at local points ``xi[..., 2]``."""
    x, y = xi[..., 0], xi[..., 1]
    lin = C[..., 1] * x[..., None] + C[..., 2] * y[..., None]
    quad = (C[..., 3] * x[..., None] + C[..., 4] * y[..., None]) * x[..., None] + C[..., 5] * (y * y)[..., None]
    out = lin + quad
    return out if relative else out + C[..., 0]


def poly_jet(C: np.ndarray, xi: np.ndarray, relative: bool = False) -> Jet2:
    """Jets in local coordinates; ``relative`` drops the constant term."""
    x, y = xi[..., 0, None], xi[..., 1, None]
    val = poly_values(C, xi, relative)
    dx = C[..., 1] + 2 * C[..., 3] * x + C[..., 4] * y
    dy = C[..., 2] + C[..., 4] * x + 2 * C[..., 5] * y
    D = np.stack([dx, dy], axis=-1)
    H = np.stack(
        [np.stack([2 * C[..., 3], C[..., 4]], -1), np.stack([C[..., 4], 2 * C[..., 5]], -1)], -2
    )
    D2 = np.broadcast_to(H, D.shape[:-1] + (2, 2)).copy()
    return Jet2(val, D, D2)


def coeffs_from_jet(value, D, D2) -> np.ndarray:
    """Local coefficients (..., 2, 6) of the quadratic with the given jet at 0."""
    value, D, D2 = (np.asarray(v, float) for v in (value, D, D2))
    return np.stack(
        [value, D[..., 0], D[..., 1], 0.5 * D2[..., 0, 0], 0.5 * (D2[..., 0, 1] + D2[..., 1, 0]), 0.5 * D2[..., 1, 1]],
        axis=-1,
    )


# --------------------------------------------------------------------------
# QuadraticMap


@dataclass(frozen=True)
class QuadraticMap:
    """Quadratic map in a local frame ``xi = R^T (p - origin)``."""

    a: np.ndarray
    b: np.ndarray
    origin: np.ndarray = field(default_factory=lambda: np.zeros(2))
    rotation: np.ndarray = field(default_factory=lambda: np.eye(2))

    def __post_init__(self):
        for name in ("a", "b", "origin", "rotation"):
            object.__setattr__(self, name, check_finite(getattr(self, name), name).copy())
        if self.a.shape != (6,) or self.b.shape != (6,):
            raise ValueError("a and b need six coefficients each")

    @property
    def coeffs(self) -> np.ndarray:
        return np.stack([self.a, self.b])

    @classmethod
    def from_coeffs(cls, C, origin=None, rotation=None) -> "QuadraticMap":
        C = np.asarray(C, float)
        return cls(C[0], C[1], np.zeros(2) if origin is None else origin, np.eye(2) if rotation is None else rotation)

    @classmethod
    def from_jet(cls, origin, value, D, D2, rotation=None) -> "QuadraticMap":
        R = np.eye(2) if rotation is None else np.asarray(rotation, float)
        loc = Jet2(np.asarray(value, float), np.asarray(D, float), np.asarray(D2, float)).rotate_domain(R)
        return cls.from_coeffs(coeffs_from_jet(loc.value, loc.D, loc.D2), origin, R)

    @classmethod
    def affine(cls, A, b=(0.0, 0.0)) -> "QuadraticMap":
        A = np.asarray(A, float)
        return cls.from_jet(np.zeros(2), np.asarray(b, float), A, np.zeros((2, 2, 2)))

    def local(self, p) -> np.ndarray:
        return (np.asarray(p, float) - self.origin) @ self.rotation

    def values(self, p, relative: bool = False) -> np.ndarray:
        return poly_values(self.coeffs, self.local(p), relative)

    def __call__(self, p) -> np.ndarray:
        return self.values(p)

    def jet(self, p, relative: bool = False) -> Jet2:
        """Exact jets in world coordinates.  ``relative`` subtracts Q(origin)."""
        j = poly_jet(self.coeffs, self.local(p), relative)
        return j.rotate_domain(self.rotation.T)

    def reframe(self, origin, rotation=None) -> "QuadraticMap":
        """Same map, coefficients re-expanded about a new frame."""
        origin = np.asarray(origin, float)
        R = np.eye(2) if rotation is None else np.asarray(rotation, float)
        j = self.jet(origin)
        return QuadraticMap.from_jet(origin, j.value, j.D, j.D2, R)

    def hessian_entry_sum(self) -> float:
        return float(np.abs(self.jet(self.origin).D2).sum())


# --------------------------------------------------------------------------
# map sources


@dataclass(frozen=True)
class MapSource:
    """A planar map given by a vectorised value function and optional jets.

    Without ``jet_fn`` the jets come from central differences with step
    ``default_step(scale, order)``.
    """

    value_fn: Callable[[np.ndarray], np.ndarray]
    jet_fn: Optional[Callable[[np.ndarray], Jet2]] = None
    name: str = "map"
    scale: float = 1.0
    fd_step: Optional[float] = None

    @property
    def uses_fd(self) -> bool:
        return self.jet_fn is None

    def value(self, p) -> np.ndarray:
        p = np.asarray(p, float)
        return check_finite(self.value_fn(p.reshape(-1, 2)), self.name).reshape(p.shape)

    def __call__(self, p) -> np.ndarray:
        return self.value(p)

    def jet(self, p) -> Jet2:
        p = np.asarray(p, float)
        flat = p.reshape(-1, 2)
        if self.jet_fn is not None:
            j = self.jet_fn(flat)
        else:
            j = fd_jet(self.value_fn, flat, self.fd_step, self.scale)
        j.check(self.name)
        lead = p.shape[:-1]
        return Jet2(j.value.reshape(lead + (2,)), j.D.reshape(lead + (2, 2)), j.D2.reshape(lead + (2, 2, 2)))

    @classmethod
    def from_quadratic(cls, Q: QuadraticMap, name: str = "quadratic") -> "MapSource":
        return cls(Q.values, Q.jet, name)


# --------------------------------------------------------------------------
# interpolation conditions


@dataclass(frozen=True)
class AnchorScheme:
    """Geometry of the six conditions for one triangle kind (leg 1).

    ``vertices`` are local positions with the square's lower-left corner at
    the origin.  ``anchors`` holds, for the horizontal, diagonal and
    vertical edge in that order, the anchor vertex index and direction.
    """

    kind: str
    vertices: tuple
    anchors: tuple

    def vertex_array(self, r: float) -> np.ndarray:
        return r * np.asarray(self.vertices, float)


# Horizontal edges: left endpoint, +x.  Vertical edges: upper endpoint, -y.
# Diagonals: upper-left endpoint, direction (-1, 1).
LOWER = AnchorScheme("lower", ((0, 0), (1, 0), (0, 1)), ((0, (1, 0)), (2, (-1, 1)), (2, (0, -1))))
UPPER = AnchorScheme("upper", ((1, 0), (1, 1), (0, 1)), ((2, (1, 0)), (2, (-1, 1)), (1, (0, -1))))
SCHEMES = {"lower": LOWER, "upper": UPPER}


def _value_row(x: float, y: float) -> np.ndarray:
    return np.array([1.0, x, y, x * x, x * y, y * y])


def _deriv_row(x: float, y: float, d) -> np.ndarray:
    dx, dy = d
    return dx * np.array([0.0, 1.0, 0.0, 2 * x, y, 0.0]) + dy * np.array([0.0, 0.0, 1.0, 0.0, x, 2 * y])


@dataclass(frozen=True)
class InterpolationSystem:
    """The 6x6 condition matrix of one triangle kind at leg length ``r``."""

    M: np.ndarray
    r: float
    scheme: AnchorScheme

    @classmethod
    def assemble(cls, r: float, scheme: AnchorScheme = LOWER) -> "InterpolationSystem":
        if not r > 0:
            raise ValueError("leg length must be positive")
        V = scheme.vertex_array(r)
        rows = [_value_row(*V[j]) for j in range(3)]
        rows += [_deriv_row(*V[j], d) for j, d in scheme.anchors]
        return cls(np.array(rows), float(r), scheme)

    def condition_number(self) -> float:
        """2-norm condition number in the scaled variable ``xi = p / r``
        (columns divided by ``r^degree``, derivative rows times ``r``), so the
        value does not depend on ``r``."""
        r = self.r
        S = self.M * np.array([1, 1, 1, r, r, r])[:, None] / np.array([1, r, r, r * r, r * r, r * r])
        with np.errstate(divide="ignore"):
            return float(np.linalg.cond(S))

    def inverse(self) -> np.ndarray:
        if not self.condition_number() < 1e12:
            raise SingularSystem(f"interpolation matrix is singular ({self.scheme.kind}, r={self.r})")
        return np.linalg.inv(self.M)


def solve_coefficients(c1, c2, r: float, scheme: AnchorScheme = LOWER, origin=(0.0, 0.0)) -> QuadraticMap:
    """Quadratic map meeting the six conditions ``c1`` (first component)
    and ``c2`` (second component) on a triangle with legs ``r``."""
    system = InterpolationSystem.assemble(r, scheme)
    c = np.stack([check_finite(c1, "conditions"), check_finite(c2, "conditions")])
    if not system.condition_number() < 1e12:
        raise SingularSystem(f"interpolation matrix is singular ({scheme.kind}, r={r})")
    coef = np.linalg.solve(system.M, c.T).T
    resid = np.abs(coef @ system.M.T - c).max()
    if resid > 1e-10 * max(1.0, np.abs(c).max()):
        raise SingularSystem(f"interpolation residual {resid:.3g} too large")
    return QuadraticMap.from_coeffs(coef, origin)


def condition_values(src: MapSource, corner, r: float, scheme: AnchorScheme, fraction: float = AVERAGING_FRACTION):
    """The six averaged conditions (2, 6) of ``src`` on one triangle."""
    corner = np.asarray(corner, float)
    V = corner + scheme.vertex_array(r)
    s = fraction * r
    vals = disk_average(src.value, V, s)  # (3, 2)
    anchors = np.array([V[j] for j, _ in scheme.anchors])
    dirs = np.array([d for _, d in scheme.anchors], float)
    Dm = disk_average(lambda q: src.jet(q).D, anchors, s)  # (3, 2, 2)
    ders = np.einsum("kij,kj->ki", Dm, dirs)
    return np.concatenate([vals.T, ders.T], axis=1)


@dataclass(frozen=True)
class Triangle:
    """A grid triangle: square corner, leg length and kind (lower/upper)."""

    corner: tuple
    r: float
    kind: str

    @property
    def scheme(self) -> AnchorScheme:
        return SCHEMES[self.kind]

    @property
    def vertices(self) -> np.ndarray:
        return np.asarray(self.corner, float) + self.scheme.vertex_array(self.r)


def build_interpolant(src: MapSource, tri: Triangle, fraction: float = AVERAGING_FRACTION) -> QuadraticMap:
    """Averaged six-condition quadratic interpolant of ``src`` on ``tri``."""
    c = condition_values(src, tri.corner, tri.r, tri.scheme, fraction)
    Q = solve_coefficients(c[0], c[1], tri.r, tri.scheme, origin=np.zeros(2))
    return QuadraticMap(Q.a, Q.b, np.asarray(tri.corner, float))


# --------------------------------------------------------------------------
# edges


def _edge_frame(edge):
    P0, P1 = (np.asarray(p, float) for p in edge)
    vec = P1 - P0
    length = float(np.hypot(*vec))
    t = vec / length
    n = np.array([t[1], -t[0]])
    return P0, P1, length, t, n


@dataclass(frozen=True)
class EdgeJump:
    """Pointwise normal-derivative jump along an edge and its integral."""

    edge: tuple
    integral: float
    nodes: np.ndarray
    values: np.ndarray
    _fn: Callable = field(repr=False, compare=False)

    def __call__(self, s) -> np.ndarray:
        """Jump at arc-length parameter(s) ``s`` in [0, length]."""
        return self._fn(np.asarray(s, float))


def edge_jump(Q1: QuadraticMap, Q2: QuadraticMap, edge, nodes: int = 16) -> EdgeJump:
    """``|D_n Q2 - D_n Q1|`` along ``edge`` and its Gauss-Legendre integral."""
    nodes = max(int(nodes), 16)
    P0, _, length, t, n = _edge_frame(edge)

    def jump(s):
        pts = P0 + np.asarray(s)[..., None] * t
        d = Q2.jet(pts).D @ n - Q1.jet(pts).D @ n
        return np.hypot(d[..., 0], d[..., 1])

    xg, wg = np.polynomial.legendre.leggauss(nodes)
    s = 0.5 * length * (xg + 1.0)
    vals = jump(s)
    return EdgeJump(tuple(map(tuple, (np.asarray(edge[0], float), np.asarray(edge[1], float)))),
                    float(0.5 * length * np.dot(wg, vals)), s, vals, jump)


def tangential_jump(Q1: QuadraticMap, Q2: QuadraticMap, edge, samples: int = 100) -> float:
    P0, _, length, t, _ = _edge_frame(edge)
    pts = P0 + np.linspace(0, length, samples)[:, None] * t
    d = Q2.jet(pts).D @ t - Q1.jet(pts).D @ t
    return float(np.abs(d).max())


def verify_edge_continuity(Q1: QuadraticMap, Q2: QuadraticMap, edge, samples: int = 100) -> float:
    """Largest sampled ``|Q1 - Q2|`` on the edge."""
    P0, P1 = (np.asarray(p, float) for p in edge)
    s = np.linspace(0.0, 1.0, max(int(samples), 2))[:, None]
    pts = P0 + s * (P1 - P0)
    d = Q1(pts) - Q2(pts)
    return float(np.hypot(d[:, 0], d[:, 1]).max())


def require_continuity(Q1: QuadraticMap, Q2: QuadraticMap, edge, tol: float = 1e-10) -> float:
    mismatch = verify_edge_continuity(Q1, Q2, edge)
    scale = max(1.0, float(np.abs(Q1(np.asarray(edge, float))).max()))
    if mismatch > tol * scale:
        raise EdgeMismatch(f"quadratics differ by {mismatch:.3g} on the shared edge")
    return mismatch
