"""Shared primitives: the transition function, jets, disk quadrature and
finite-difference derivative oracles.

Arrays follow one convention everywhere: points have a trailing axis of
length 2, first derivatives are ``D[..., i, j] = d f_i / d x_j`` and second
derivatives are ``D2[..., i, j, k] = d^2 f_i / d x_j d x_k``.
"""

from __future__ import annotations

from dataclasses import dataclass
from functools import lru_cache
from typing import Callable

import numpy as np
from scipy.special import expit

from .errors import NonFiniteValue

ArrayFn = Callable[[np.ndarray], np.ndarray]


def check_finite(arr, what: str = "value") -> np.ndarray:
    arr = np.asarray(arr, dtype=float)
    if not np.all(np.isfinite(arr)):
        bad = np.argwhere(~np.isfinite(arr))
        raise NonFiniteValue(f"non-finite {what} at index {tuple(bad[0])}")
    return arr


# --------------------------------------------------------------------------
# transition function


def eta_all(x):
    """Return ``(eta, eta', eta'')`` of the quotient transition at ``x``.

    The function is ``g(x) / (g(x) + g(1 - x))`` with ``g(t) = exp(-1/t)``.
    It is rewritten as a logistic of ``1/x - 1/(1-x)`` so that no overflow
    or 0/0 occurs near the end points.  All three outputs are exactly
    0 (or 1 for the value) outside the open unit interval.
    """
    x = np.asarray(x, dtype=float)
    inside = (x > 0.0) & (x < 1.0)
    xs = np.where(inside, x, 0.5)
    with np.errstate(over="ignore", invalid="ignore", divide="ignore"):  # x within ~1e-103 of an end: q underflows to 0
        u = 1.0 / xs - 1.0 / (1.0 - xs)
        e = expit(-u)
        q = expit(-u) * expit(u)  # eta * (1 - eta) without cancellation
        w = 1.0 / xs**2 + 1.0 / (1.0 - xs) ** 2
        wp = -2.0 / xs**3 + 2.0 / (1.0 - xs) ** 3
        e1 = np.where(q > 0, q * w, 0.0)
        e2 = np.where(q > 0, e1 * (1.0 - 2.0 * e) * w + q * wp, 0.0)
    val = np.where(inside, e, np.where(x >= 1.0, 1.0, 0.0))
    d1 = np.where(inside, e1, 0.0)
    d2 = np.where(inside, e2, 0.0)
    return val, d1, d2


def eta(x, order: int = 0):
    """Transition function (order 0) or its first/second derivative."""
    if order not in (0, 1, 2):
        raise ValueError("order must be 0, 1 or 2")
    out = eta_all(x)[order]
    return float(out) if np.ndim(out) == 0 else out


@lru_cache(maxsize=None)
def eta_bounds(samples: int = 200_001) -> tuple[float, float]:
    """Measured ``(sup eta', sup |eta''|)`` on a dense grid of [0, 1]."""
    x = np.linspace(0.0, 1.0, samples)
    _, d1, d2 = eta_all(x)
    return float(d1.max()), float(np.abs(d2).max())


# --------------------------------------------------------------------------
# jets


@dataclass(frozen=True)
class Jet2:
    """Value, first and second derivative of a planar map (batched)."""

    value: np.ndarray
    D: np.ndarray
    D2: np.ndarray

    @property
    def jacobian(self) -> np.ndarray:
        D = self.D
        return D[..., 0, 0] * D[..., 1, 1] - D[..., 0, 1] * D[..., 1, 0]

    def __getitem__(self, idx) -> "Jet2":
        return Jet2(self.value[idx], self.D[idx], self.D2[idx])

    def check(self, what: str = "jet") -> "Jet2":
        check_finite(self.value, what + " value")
        check_finite(self.D, what + " derivative")
        check_finite(self.D2, what + " second derivative")
        return self

    def rotate_domain(self, F: np.ndarray) -> "Jet2":
        """Jets of ``p -> self(F @ p)`` given jets of ``self`` (F constant)."""
        F = np.asarray(F, float)
        return Jet2(self.value, self.D @ F, F.T @ self.D2 @ F)

    @staticmethod
    def stack_like(n: int) -> "Jet2":
        return Jet2(np.zeros((n, 2)), np.zeros((n, 2, 2)), np.zeros((n, 2, 2, 2)))


def op_norm(D) -> np.ndarray:
    """Largest singular value of (batched) 2x2 matrices, closed form."""
    D = np.asarray(D, dtype=float)
    fro2 = np.sum(D * D, axis=(-1, -2))
    det = D[..., 0, 0] * D[..., 1, 1] - D[..., 0, 1] * D[..., 1, 0]
    disc = np.sqrt(np.maximum(fro2 * fro2 - 4.0 * det * det, 0.0))
    return np.sqrt(0.5 * (fro2 + disc))


def min_singular(D) -> np.ndarray:
    D = np.asarray(D, dtype=float)
    fro2 = np.sum(D * D, axis=(-1, -2))
    det = D[..., 0, 0] * D[..., 1, 1] - D[..., 0, 1] * D[..., 1, 0]
    disc = np.sqrt(np.maximum(fro2 * fro2 - 4.0 * det * det, 0.0))
    return np.sqrt(np.maximum(0.5 * (fro2 - disc), 0.0))


def entry_sum(T, ndim: int) -> np.ndarray:
    """Sum of absolute entries over the trailing ``ndim`` axes."""
    return np.sum(np.abs(T), axis=tuple(range(-ndim, 0)))


def det_in_basis(D, u, v, ubar, vbar) -> np.ndarray:
    """``<D_u f, ubar><D_v f, vbar> - <D_u f, vbar><D_v f, ubar>``.

    For positively oriented orthonormal bases this equals ``det D``.
    """
    Du = np.einsum("...ij,...j->...i", D, u)
    Dv = np.einsum("...ij,...j->...i", D, v)
    dot = lambda a, b: np.sum(a * b, axis=-1)  # noqa: E731
    return dot(Du, ubar) * dot(Dv, vbar) - dot(Du, vbar) * dot(Dv, ubar)


def cw_perp(v) -> np.ndarray:
    """Rotate vectors by -90 degrees: (vx, vy) -> (vy, -vx)."""
    v = np.asarray(v, dtype=float)
    return np.stack([v[..., 1], -v[..., 0]], axis=-1)


def ccw_perp(v) -> np.ndarray:
    v = np.asarray(v, dtype=float)
    return np.stack([-v[..., 1], v[..., 0]], axis=-1)


# --------------------------------------------------------------------------
# scalar second-order jets (forward mode) used by the polar blend


@dataclass(frozen=True)
class SJet:
    """Scalar field with gradient and Hessian, batched over leading axes."""

    v: np.ndarray
    g: np.ndarray
    H: np.ndarray

    def __add__(self, o):
        if isinstance(o, SJet):
            return SJet(self.v + o.v, self.g + o.g, self.H + o.H)
        return SJet(self.v + o, self.g, self.H)

    __radd__ = __add__

    def __neg__(self):
        return SJet(-self.v, -self.g, -self.H)

    def __sub__(self, o):
        return self + (-o)

    def __rsub__(self, o):
        return (-self) + o

    def __mul__(self, o):
        if isinstance(o, SJet):
            a, b = self, o
            g = a.v[..., None] * b.g + b.v[..., None] * a.g
            H = (
                a.v[..., None, None] * b.H
                + b.v[..., None, None] * a.H
                + a.g[..., :, None] * b.g[..., None, :]
                + b.g[..., :, None] * a.g[..., None, :]
            )
            return SJet(a.v * b.v, g, H)
        o = np.asarray(o, dtype=float)
        return SJet(self.v * o, self.g * o[..., None], self.H * o[..., None, None])

    __rmul__ = __mul__

    def compose(self, f0, f1, f2) -> "SJet":
        """Jets of ``phi(self)`` given ``phi, phi', phi''`` evaluated at ``self.v``."""
        gg = self.g[..., :, None] * self.g[..., None, :]
        return SJet(f0, f1[..., None] * self.g, f2[..., None, None] * gg + f1[..., None, None] * self.H)

    def eta(self) -> "SJet":
        return self.compose(*eta_all(self.v))

    @staticmethod
    def coordinate(z: np.ndarray, k: int) -> "SJet":
        n = z.shape[:-1]
        g = np.zeros(n + (2,))
        g[..., k] = 1.0
        return SJet(z[..., k].copy(), g, np.zeros(n + (2, 2)))

    @staticmethod
    def constant(c, shape) -> "SJet":
        return SJet(np.broadcast_to(np.asarray(c, float), shape).copy(), np.zeros(shape + (2,)), np.zeros(shape + (2, 2)))


def polar_jets(z: np.ndarray) -> tuple[SJet, SJet]:
    """Jets of ``t = |z|`` and ``theta = atan2(y, x)`` (z must avoid 0)."""
    x, y = z[..., 0], z[..., 1]
    t2 = x * x + y * y
    t = np.sqrt(t2)
    zh = z / t[..., None]
    eye = np.eye(2)
    Ht = (eye - zh[..., :, None] * zh[..., None, :]) / t[..., None, None]
    tj = SJet(t, zh, Ht)
    t4 = t2 * t2
    gth = np.stack([-y / t2, x / t2], axis=-1)
    Hth = np.empty(z.shape[:-1] + (2, 2))
    Hth[..., 0, 0] = 2 * x * y / t4
    Hth[..., 1, 1] = -2 * x * y / t4
    Hth[..., 0, 1] = Hth[..., 1, 0] = (y * y - x * x) / t4
    return tj, SJet(np.arctan2(y, x), gth, Hth)


def modulus_and_argument(J: Jet2) -> tuple[SJet, SJet]:
    """Jets of ``|F|`` and ``atan2(F_2, F_1)`` for a vector jet ``F``."""
    F, DF, D2F = J.value, J.D, J.D2
    rho2 = np.sum(F * F, axis=-1)
    rho = np.sqrt(rho2)
    grad = np.einsum("...ij,...i->...j", DF, F) / rho[..., None]
    H = (
        np.einsum("...ij,...ik->...jk", DF, DF) + np.einsum("...i,...ijk->...jk", F, D2F)
    ) / rho[..., None, None] - grad[..., :, None] * grad[..., None, :] / rho[..., None, None]
    F1, F2 = F[..., 0], F[..., 1]
    c = F1[..., None] * DF[..., 1, :] - F2[..., None] * DF[..., 0, :]
    dc = (
        DF[..., 0, None, :] * DF[..., 1, :, None]
        + F1[..., None, None] * D2F[..., 1, :, :]
        - DF[..., 1, None, :] * DF[..., 0, :, None]
        - F2[..., None, None] * D2F[..., 0, :, :]
    )  # dc[..., j, k] = d_k c_j
    gpsi = c / rho2[..., None]
    Hpsi = dc / rho2[..., None, None] - 2.0 * gpsi[..., :, None] * grad[..., None, :] / rho[..., None, None]
    Hpsi = 0.5 * (Hpsi + np.swapaxes(Hpsi, -1, -2))
    return SJet(rho, grad, H), SJet(np.arctan2(F2, F1), gpsi, Hpsi)


# --------------------------------------------------------------------------
# disk averages


@lru_cache(maxsize=None)
def _disk_rule(n_radial: int = 4, n_angular: int = 8) -> tuple[np.ndarray, np.ndarray]:
    """Unit-disk product rule: offsets (n, 2) and weights summing to 1."""
    xg, wg = np.polynomial.legendre.leggauss(n_radial)
    rad = 0.5 * (xg + 1.0)
    wr = 0.5 * wg * rad  # includes the polar Jacobian
    ang = 2.0 * np.pi * np.arange(n_angular) / n_angular
    R, A = np.meshgrid(rad, ang, indexing="ij")
    W = np.repeat(wr[:, None], n_angular, axis=1)
    offsets = np.stack([R * np.cos(A), R * np.sin(A)], axis=-1).reshape(-1, 2)
    weights = (W / W.sum()).ravel()
    return offsets, weights


def disk_average(field: ArrayFn, center, radius: float) -> np.ndarray:
    """Mean of ``field`` over the disk ``B(center, radius)``.

    ``field`` maps an ``(n, 2)`` array of points to an ``(n, ...)`` array.
    ``center`` may be a single point or an ``(m, 2)`` batch.  The rule
    (4 Gauss-Legendre radii times 8 equispaced angles) integrates every
    polynomial of total degree at most 4 exactly.
    """
    if not radius > 0:
        raise ValueError("radius must be positive")
    center = check_finite(center, "disk center")
    offsets, weights = _disk_rule()
    single = center.ndim == 1
    c = center.reshape(-1, 2)
    pts = c[:, None, :] + radius * offsets[None, :, :]
    vals = np.asarray(field(pts.reshape(-1, 2)), dtype=float)
    vals = check_finite(vals, "field sample").reshape((c.shape[0], offsets.shape[0]) + vals.shape[1:])
    out = np.tensordot(weights, vals, axes=([0], [1]))
    return out[0] if single else out


# --------------------------------------------------------------------------
# finite differences


def default_step(scale: float = 1.0, order: int = 1) -> float:
    """1e-5 * scale for first derivatives; second differences divide by h^2,
    so they use 1e-4 * scale (about eps^(1/4)) to keep cancellation small."""
    return float(np.clip((1e-5 if order == 1 else 1e-4) * scale, 1e-9, 1e-2))


_STENCIL = np.array([[0, 0], [1, 0], [-1, 0], [0, 1], [0, -1], [1, 1], [1, -1], [-1, 1], [-1, -1]], dtype=float)


def _stencil_values(fn: ArrayFn, P: np.ndarray, h: float) -> list:
    pts = P[:, None, :] + h * _STENCIL[None, :, :]
    f = check_finite(fn(pts.reshape(-1, 2)), "map sample").reshape(P.shape[0], 9, 2)
    return [f[:, k] for k in range(9)]


def fd_jet(fn: ArrayFn, p, h: float | None = None, scale: float = 1.0) -> Jet2:
    """Central-difference jet of a vectorised planar map at ``p``.

    Both derivative orders have O(h^2) truncation error; the mixed partial
    comes from the four-corner stencil so D2 is symmetric by construction.
    An explicit ``h`` is used for both orders.
    """
    if h is not None and not h > 0:
        raise ValueError("step must be positive")
    h1 = default_step(scale, 1) if h is None else h
    h2 = default_step(scale, 2) if h is None else h
    p = check_finite(p, "stencil centre")
    single = p.ndim == 1
    P = p.reshape(-1, 2)
    f0, fxp, fxm, fyp, fym, fpp, fpm, fmp, fmm = _stencil_values(fn, P, h1)
    D = np.stack([(fxp - fxm) / (2 * h1), (fyp - fym) / (2 * h1)], axis=-1)
    value = f0
    if h2 != h1:
        f0, fxp, fxm, fyp, fym, fpp, fpm, fmp, fmm = _stencil_values(fn, P, h2)
    dxx = (fxp - 2 * f0 + fxm) / h2**2
    dyy = (fyp - 2 * f0 + fym) / h2**2
    dxy = (fpp - fpm - fmp + fmm) / (4 * h2 * h2)
    D2 = np.empty((P.shape[0], 2, 2, 2))
    D2[..., 0, 0] = dxx
    D2[..., 1, 1] = dyy
    D2[..., 0, 1] = dxy
    D2[..., 1, 0] = dxy
    jet = Jet2(value, D, D2)
    return jet[0] if single else jet


# --------------------------------------------------------------------------
# sampled injectivity


def collision_pair(domain_pts: np.ndarray, image_pts: np.ndarray, threshold: float, separated):
    """First pair of samples whose images lie within ``threshold`` while
    ``separated(i, j)`` says the domain points are genuinely apart.

    Returns ``None`` or ``(i, j, image distance)``.
    """
    from scipy.spatial import cKDTree

    tree = cKDTree(image_pts)
    pairs = tree.query_pairs(threshold, output_type="ndarray")
    if len(pairs) == 0:
        return None
    pairs = pairs[np.lexsort((pairs[:, 1], pairs[:, 0]))]
    mask = separated(pairs[:, 0], pairs[:, 1])
    if not np.any(mask):
        return None
    i, j = pairs[np.argmax(mask)]
    return int(i), int(j), float(np.hypot(*(image_pts[i] - image_pts[j])))
