"""Built-in test maps and the sampled-grid input format.

Map strings look like ``shear(0.2)``, ``shear:0.2``, ``linear(2,0,0,3,0,0)``
or ``grid:path/to/file.txt``.

Sampled-grid files: one header line ``nx ny x0 y0 dx dy`` followed by
``nx*ny`` lines ``fx fy``, with the x index running fastest.  Lines that
start with ``#`` are ignored.
"""

from __future__ import annotations

import math
import re
from dataclasses import dataclass, field
from pathlib import Path
from typing import Callable, Optional

import numpy as np

from .geometry import Jet2
from .quadmap import MapSource, QuadraticMap

DEFAULT_DOMAIN = (0.0, 0.0, 1.0, 1.0)


def _center(domain) -> np.ndarray:
    x0, y0, x1, y1 = domain
    return np.array([(x0 + x1) / 2, (y0 + y1) / 2])


def identity(domain, *args) -> MapSource:
    if args:
        raise ValueError("identity takes no parameters")
    return MapSource.from_quadratic(QuadraticMap.affine(np.eye(2)), "identity")


def linear(domain, *args) -> MapSource:
    if len(args) not in (4, 6):
        raise ValueError("linear takes a11 a12 a21 a22 [b1 b2]")
    A = np.array(args[:4], float).reshape(2, 2)
    b = np.array(args[4:6] if len(args) == 6 else (0.0, 0.0), float)
    return MapSource.from_quadratic(QuadraticMap.affine(A, b), "linear")


def shear(domain, amp: float = 0.2) -> MapSource:
    """``(x + amp sin(pi y), y)``."""
    amp = float(amp)

    def value(p):
        return np.stack([p[:, 0] + amp * np.sin(np.pi * p[:, 1]), p[:, 1]], -1)

    def jet(p):
        n = len(p)
        D = np.zeros((n, 2, 2))
        D[:, 0, 0] = D[:, 1, 1] = 1.0
        D[:, 0, 1] = amp * np.pi * np.cos(np.pi * p[:, 1])
        D2 = np.zeros((n, 2, 2, 2))
        D2[:, 0, 1, 1] = -amp * np.pi**2 * np.sin(np.pi * p[:, 1])
        return Jet2(value(p), D, D2)

    return MapSource(value, jet, f"shear({amp:g})")


def radial(domain, c: float = 0.3) -> MapSource:
    """``zc + (1 + c |z - zc|^2)(z - zc)`` about the domain centre."""
    c = float(c)
    zc = _center(domain)

    def value(p):
        w = p - zc
        return zc + (1 + c * np.sum(w * w, -1))[:, None] * w

    def jet(p):
        w = p - zc
        s = 1 + c * np.sum(w * w, -1)
        eye = np.eye(2)
        D = s[:, None, None] * eye + 2 * c * w[:, :, None] * w[:, None, :]
        D2 = 2 * c * (
            eye[None, :, :, None] * w[:, None, None, :]
            + eye[None, :, None, :] * w[:, None, :, None]
            + w[:, :, None, None] * eye[None, None, :, :]
        )
        return Jet2(value(p), D, D2)

    return MapSource(value, jet, f"radial({c:g})")


def quadratic(domain, *coeffs) -> MapSource:
    """Twelve coefficients: ``(1, x, y, x^2, xy, y^2)`` for each component."""
    if len(coeffs) != 12:
        raise ValueError("quadratic takes 12 coefficients")
    Q = QuadraticMap.from_coeffs(np.array(coeffs, float).reshape(2, 6))
    return MapSource.from_quadratic(Q, "quadratic")


def degenerate(domain, slope: float = 0.01) -> MapSource:
    """Jacobian ``2|x - x_c| + slope``: nearly singular on the line ``x = x_c``."""
    slope = float(slope)
    xc = _center(domain)[0]

    def value(p):
        u = p[:, 0] - xc
        return np.stack([u * np.abs(u) + slope * u + xc, p[:, 1]], -1)

    def jet(p):
        u = p[:, 0] - xc
        n = len(p)
        D = np.zeros((n, 2, 2))
        D[:, 0, 0] = 2 * np.abs(u) + slope
        D[:, 1, 1] = 1.0
        D2 = np.zeros((n, 2, 2, 2))
        D2[:, 0, 0, 0] = 2 * np.sign(u)
        return Jet2(value(p), D, D2)

    return MapSource(value, jet, f"degenerate({slope:g})")


REGISTRY: dict[str, Callable[..., MapSource]] = {
    "identity": identity,
    "linear": linear,
    "shear": shear,
    "radial": radial,
    "quadratic": quadratic,
    "degenerate": degenerate,
}


# --------------------------------------------------------------------------
# sampled grids


@dataclass(frozen=True)
class SampledGrid:
    nx: int
    ny: int
    x0: float
    y0: float
    dx: float
    dy: float
    values: np.ndarray  # (nx, ny, 2)

    @property
    def extent(self) -> tuple:
        return (self.x0, self.y0, self.x0 + (self.nx - 1) * self.dx, self.y0 + (self.ny - 1) * self.dy)

    def write(self, path) -> None:
        lines = [f"{self.nx} {self.ny} {self.x0!r} {self.y0!r} {self.dx!r} {self.dy!r}"]
        flat = self.values.transpose(1, 0, 2).reshape(-1, 2)  # x fastest
        lines += [f"{a!r} {b!r}" for a, b in flat.tolist()]
        Path(path).write_text("\n".join(lines) + "\n")

    @classmethod
    def from_source(cls, src: MapSource, nx: int, ny: int, x0: float, y0: float, dx: float, dy: float) -> "SampledGrid":
        X, Y = np.meshgrid(x0 + dx * np.arange(nx), y0 + dy * np.arange(ny), indexing="ij")
        vals = src.value(np.stack([X, Y], -1))
        return cls(nx, ny, x0, y0, dx, dy, vals)

    def source(self, name: str = "grid") -> MapSource:
        from scipy.interpolate import RectBivariateSpline

        xs = self.x0 + self.dx * np.arange(self.nx)
        ys = self.y0 + self.dy * np.arange(self.ny)
        k = min(3, self.nx - 1, self.ny - 1)
        splines = [RectBivariateSpline(xs, ys, self.values[:, :, c], kx=k, ky=k) for c in range(2)]

        def value(p):
            return np.stack([s.ev(p[:, 0], p[:, 1]) for s in splines], -1)

        return MapSource(value, None, name, scale=min(self.dx, self.dy))


def read_sampled_grid(path) -> SampledGrid:
    rows = [ln.split() for ln in Path(path).read_text().splitlines() if ln.strip() and not ln.lstrip().startswith("#")]
    if not rows or len(rows[0]) != 6:
        raise ValueError("header must be: nx ny x0 y0 dx dy")
    nx, ny = int(rows[0][0]), int(rows[0][1])
    x0, y0, dx, dy = map(float, rows[0][2:])
    if nx < 2 or ny < 2 or dx <= 0 or dy <= 0:
        raise ValueError("need nx, ny >= 2 and positive spacings")
    body = rows[1:]
    if len(body) != nx * ny or any(len(r) != 2 for r in body):
        raise ValueError(f"expected {nx * ny} rows of two values")
    vals = np.array(body, float).reshape(ny, nx, 2).transpose(1, 0, 2)
    if not np.all(np.isfinite(vals)):
        raise ValueError("non-finite sample in grid file")
    return SampledGrid(nx, ny, x0, y0, dx, dy, vals)


# --------------------------------------------------------------------------
# specs

_CALL = re.compile(r"^\s*([a-z_]+)\s*(?:\((.*)\)|:(.*))?\s*$")


@dataclass(frozen=True)
class MapSpec:
    kind: str
    params: tuple = ()
    domain: Optional[tuple] = None
    path: Optional[str] = None
    extra: dict = field(default_factory=dict)

    @classmethod
    def parse(cls, text: str, domain=None) -> "MapSpec":
        if text.startswith("grid:"):
            return cls("grid", (), None if domain is None else tuple(map(float, domain)), text[5:])
        m = _CALL.match(text)
        if not m or m.group(1) not in REGISTRY:
            raise ValueError(f"unknown map {text!r}; choose from {sorted(REGISTRY)} or grid:<file>")
        raw = m.group(2) if m.group(2) is not None else m.group(3)
        params = tuple(float(v) for v in re.split(r"[,\s]+", raw.strip())) if raw and raw.strip() else ()
        return cls(m.group(1), params, None if domain is None else tuple(map(float, domain)))

    def resolved_domain(self) -> tuple:
        if self.domain is not None:
            return tuple(self.domain)
        if self.kind == "grid":
            return read_sampled_grid(self.path).extent
        return DEFAULT_DOMAIN

    def source(self) -> MapSource:
        if self.kind == "grid":
            return read_sampled_grid(self.path).source(f"grid:{Path(self.path).name}")
        return REGISTRY[self.kind](self.resolved_domain(), *self.params)

    def describe(self) -> str:
        if self.kind == "grid":
            return f"grid:{self.path}"
        return f"{self.kind}({','.join(repr(p) for p in self.params)})"
