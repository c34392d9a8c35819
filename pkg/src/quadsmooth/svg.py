"""Deterministic SVG pictures of grids, image meshes, bad squares and
witness points."""

from __future__ import annotations

from dataclasses import dataclass
from pathlib import Path
from typing import Optional, Sequence

import numpy as np

STROKE = 0.002  # as a fraction of the larger viewBox side


@dataclass(frozen=True)
class GridLayer:
    grid: object
    squares: Optional[Sequence[int]] = None  # None = all


@dataclass(frozen=True)
class ImageMesh:
    grid: object
    fn: object  # maps (n, 2) points to (n, 2) images
    squares: Optional[Sequence[int]] = None
    per_edge: bool = False  # fn takes (edge id, points)


@dataclass(frozen=True)
class BadSquares:
    grid: object
    squares: Sequence[int]


@dataclass(frozen=True)
class Witnesses:
    points: np.ndarray


def _edge_ids(grid, squares) -> list:
    if squares is None:
        return list(range(len(grid.edges)))
    tris = set()
    for s in squares:
        tris.update((2 * int(s), 2 * int(s) + 1))
    return [e for e, E in enumerate(grid.edges) if tris.intersection(E.triangles)]


def _polylines(grid, squares, samples: int, fn=None, per_edge: bool = False) -> list:
    s = np.linspace(0.0, 1.0, samples + 1)[:, None]
    out = []
    for e in _edge_ids(grid, squares):
        P0, P1 = grid.edge_points(e)
        pts = P0 + s * (P1 - P0)
        if fn is not None:
            pts = np.asarray(fn(e, pts) if per_edge else fn(pts), float)
        out.append(pts)
    return out


def _bounds(objects, samples: int):
    pts = []
    for ob in objects:
        if isinstance(ob, (GridLayer, BadSquares)):
            pts.append(ob.grid.vertices)
        elif isinstance(ob, ImageMesh):
            pts.extend(_polylines(ob.grid, ob.squares, samples, ob.fn, ob.per_edge))
        elif isinstance(ob, Witnesses):
            pts.append(np.asarray(ob.points, float).reshape(-1, 2))
    if not pts:
        return (0.0, 0.0, 1.0, 1.0)
    allp = np.concatenate(pts)
    lo, hi = allp.min(axis=0), allp.max(axis=0)
    pad = 0.02 * max(float((hi - lo).max()), 1e-12)
    return (lo[0] - pad, lo[1] - pad, hi[0] + pad, hi[1] + pad)


def _num(v) -> str:
    # rounding first keeps tiny negatives from printing as -0.000000
    return f"{round(float(v), 6) + 0.0:.6f}"


def render_svg(objects: Sequence, path=None, bounds=None, samples: int = 16, size: int = 800) -> str:
    """SVG text (also written to ``path`` when given).  The y axis points
    up, coordinates carry six decimals and every edge is a polyline with
    ``samples`` segments, so a domain grid and its identity image match."""
    x0, y0, x1, y1 = bounds if bounds is not None else _bounds(objects, samples)
    w, h = x1 - x0, y1 - y0
    sw = STROKE * max(w, h)

    def xy(p):
        return f"{_num(p[0] - x0)},{_num(y1 - p[1])}"

    def poly(pts, cls, stroke):
        d = "M" + " L".join(xy(p) for p in pts)
        return f'<path class="{cls}" d="{d}" fill="none" stroke="{stroke}" stroke-width="{sw:.6f}"/>'

    out = [
        '<?xml version="1.0" encoding="UTF-8"?>',
        f'<svg xmlns="http://www.w3.org/2000/svg" width="{size}" height="{int(round(size * h / w))}" '
        f'viewBox="0 0 {w:.6f} {h:.6f}">',
        f'<rect class="frame" x="0" y="0" width="{w:.6f}" height="{h:.6f}" fill="none" stroke="#999999" stroke-width="{sw:.6f}"/>',
    ]
    for ob in objects:
        if isinstance(ob, BadSquares):
            side = ob.grid.side
            for s in ob.squares:
                c = ob.grid.square_corner(int(s))
                out.append(f'<rect class="bad" x="{c[0] - x0:.6f}" y="{y1 - c[1] - side:.6f}" '
                           f'width="{side:.6f}" height="{side:.6f}" fill="#f4a6a6" stroke="none"/>')
    for ob in objects:
        if isinstance(ob, GridLayer):
            out.extend(poly(p, "edge", "#3366aa") for p in _polylines(ob.grid, ob.squares, samples))
        elif isinstance(ob, ImageMesh):
            out.extend(poly(p, "image-edge", "#222222") for p in _polylines(ob.grid, ob.squares, samples, ob.fn, ob.per_edge))
    for ob in objects:
        if isinstance(ob, Witnesses):
            for p in np.asarray(ob.points, float).reshape(-1, 2):
                out.append(f'<circle class="witness" cx="{p[0] - x0:.6f}" cy="{y1 - p[1]:.6f}" r="{3 * sw:.6f}" fill="#cc0000"/>')
    out.append("</svg>")
    text = "\n".join(out) + "\n"
    if path is not None:
        Path(path).parent.mkdir(parents=True, exist_ok=True)
        Path(path).write_text(text)
    return text
