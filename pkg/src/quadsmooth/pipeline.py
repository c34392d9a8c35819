"""End-to-end runs: classify and interpolate, then smooth; reports."""

from __future__ import annotations

import csv
import hashlib
import io
import json
import math
from dataclasses import asdict, dataclass, field, fields
from pathlib import Path
from typing import Optional

import numpy as np

from . import analysis
from .diagnostics import Diagnostics
from .edge import EdgeBlend, select_edge_params, smallest_N, verify_edge, rho_bound
from .errors import BadMeasureExceeded, EdgeMismatch, NonPositiveJacobian
from .maps import MapSpec
from .mesh import (
    ClassificationParams,
    ConstantsEstimate,
    build_grid,
    classify_squares,
    estimate_constants,
    inradius,
    select_shift,
)
from .piecewise import PiecewiseQuadraticMap, SmoothedMap, interpolate_grid
from .vertex import VertexBlend, choose_R, r_cap, rho_chain_bound, select_vertex_params, verify_vertex

SCHEMA_VERSION = 1
NORMS = {"value": "euclidean", "D": "entry-sum (W21) / operator (L)", "D2": "entry-sum"}


# --------------------------------------------------------------------------
# configuration


@dataclass
class RunConfig:
    """Every tunable of a run; a flat ``key = value`` file maps onto it."""

    map: str = "shear(0.2)"
    domain: tuple = (0.0, 0.0, 1.0, 1.0)
    nu: float = 0.1
    delta: float = 0.5
    r0: float = 1 / 16
    C0: float = 1e-2
    C1: float = 3.0
    seed: int = 0
    shift_trials: int = 0
    all_good: bool = False
    enforce_nu: bool = True
    grid_res: int = 256
    quad_k: int = 4
    verify: str = "sample"
    verify_count: int = 6
    strip_res: int = 512
    injectivity_res: int = 256
    polar_radial: int = 256
    polar_angular: int = 1024
    eps: float = 0.0
    svg_samples: int = 16

    @classmethod
    def from_text(cls, text: str, base: Optional["RunConfig"] = None) -> "RunConfig":
        cfg = base or cls()
        for n, line in enumerate(text.splitlines(), 1):
            line = line.split("#", 1)[0].strip()
            if not line:
                continue
            if "=" not in line:
                raise ValueError(f"line {n}: expected key = value")
            k, v = (s.strip() for s in line.split("=", 1))
            cfg = cfg.updated(**{k: v})
        return cfg

    def updated(self, **kw) -> "RunConfig":
        known = {f.name: f for f in fields(self)}
        data = asdict(self)
        for k, v in kw.items():
            k = k.replace("-", "_")
            if k not in known:
                raise ValueError(f"unknown config key {k!r}")
            if v is None:
                continue
            default = getattr(type(self)(), k)
            data[k] = _coerce(v, default)
        return type(self)(**data)

    def canonical(self) -> dict:
        d = asdict(self)
        d["domain"] = [float(v) for v in self.domain]
        return d

    def run_id(self) -> str:
        blob = json.dumps(self.canonical(), sort_keys=True).encode()
        return hashlib.sha256(blob).hexdigest()[:16]

    def spec(self) -> MapSpec:
        return MapSpec.parse(self.map, self.domain)

    def params(self) -> ClassificationParams:
        return ClassificationParams.derive(self.nu, self.delta, self.r0, self.domain, self.C0, self.C1)


def _coerce(v, default):
    if isinstance(default, bool):
        if isinstance(v, str):
            if v.lower() in ("1", "true", "yes", "on"):
                return True
            if v.lower() in ("0", "false", "no", "off"):
                return False
            raise ValueError(f"not a boolean: {v!r}")
        return bool(v)
    if isinstance(default, int):
        return int(v)
    if isinstance(default, float):
        if isinstance(v, str) and "/" in v:
            a, b = v.split("/")
            return float(a) / float(b)
        return float(v)
    if isinstance(default, tuple):
        parts = v.replace(",", " ").split() if isinstance(v, str) else list(v)
        if len(parts) != 4:
            raise ValueError("domain needs x0 y0 x1 y1")
        return tuple(float(p) for p in parts)
    return str(v)


# --------------------------------------------------------------------------
# reports


def _clean(x):
    if isinstance(x, dict):
        return {str(k): _clean(v) for k, v in x.items()}
    if isinstance(x, (list, tuple)):
        return [_clean(v) for v in x]
    if isinstance(x, np.ndarray):
        return _clean(x.tolist())
    if isinstance(x, (bool, np.bool_)):
        return bool(x)
    if isinstance(x, (int, np.integer)):
        return int(x)
    if isinstance(x, (float, np.floating)):
        x = float(x)
        return x if math.isfinite(x) else ("inf" if x > 0 else "-inf" if x < 0 else "nan")
    return x


@dataclass
class Report:
    """Versioned, deterministic run record (no timestamps)."""

    data: dict = field(default_factory=dict)

    @classmethod
    def start(cls, cfg: RunConfig, stage: str) -> "Report":
        return cls({"schema_version": SCHEMA_VERSION, "run_id": cfg.run_id(), "stage": stage,
                    "config": cfg.canonical(), "norms": NORMS, "checks": []})

    def check(self, name, value, bound, relation) -> bool:
        d = Diagnostics()
        c = d.add(name, value, bound, relation)
        self.data["checks"].append(c.as_dict())
        return c.ok

    def add_diagnostics(self, prefix: str, diag: Diagnostics) -> None:
        for c in diag.checks:
            row = c.as_dict()
            row["name"] = f"{prefix}.{c.name}"
            self.data["checks"].append(row)

    @property
    def ok(self) -> bool:
        return all(c["ok"] for c in self.data["checks"])

    def failures(self) -> list:
        return [c for c in self.data["checks"] if not c["ok"]]

    def to_json(self) -> str:
        out = dict(self.data)
        out["ok"] = self.ok
        return json.dumps(_clean(out), sort_keys=True, indent=2) + "\n"

    def to_csv(self) -> str:
        """Flat ``key,value`` table of every scalar (nested keys dotted)."""
        rows = []

        def walk(prefix, x):
            if isinstance(x, dict):
                for k in sorted(x):
                    walk(f"{prefix}.{k}" if prefix else str(k), x[k])
            elif isinstance(x, list) and x and all(isinstance(v, dict) for v in x):
                for i, v in enumerate(x):
                    walk(f"{prefix}[{i}]", v)
            elif isinstance(x, list):
                rows.append((prefix, json.dumps(x)))
            else:
                rows.append((prefix, x))

        walk("", json.loads(self.to_json()))
        buf = io.StringIO()
        w = csv.writer(buf, lineterminator="\n")
        w.writerow(["key", "value"])
        w.writerows(rows)
        return buf.getvalue()

    def write(self, path, fmt: str = "json") -> Path:
        path = Path(path)
        path.parent.mkdir(parents=True, exist_ok=True)
        path.write_text(self.to_json() if fmt == "json" else self.to_csv())
        return path


# --------------------------------------------------------------------------
# approximation


@dataclass
class Approximation:
    pq: PiecewiseQuadraticMap
    bad_squares: list
    report: Report
    src: object
    classification: object


def good_measure(grid, good: np.ndarray, domain) -> float:
    """Area of the good squares inside the domain."""
    x0, y0, x1, y1 = domain
    c = grid.square_corners()[good]
    w = np.clip(np.minimum(c[:, 0] + grid.side, x1) - np.maximum(c[:, 0], x0), 0, None)
    h = np.clip(np.minimum(c[:, 1] + grid.side, y1) - np.maximum(c[:, 1], y0), 0, None)
    return float(np.sum(w * h))


def run_approximate(cfg: RunConfig, params: Optional[ClassificationParams] = None, src=None) -> Approximation:
    """Classify squares, interpolate on the good ones and measure.

    ``bad measure`` is the area of the domain not covered by good squares.
    With ``cfg.enforce_nu`` a bad measure of at least ``nu`` raises
    :class:`BadMeasureExceeded` after the report has been filled in (it
    is attached to the exception).
    """
    spec = cfg.spec()
    domain = spec.resolved_domain()
    src = src if src is not None else spec.source()
    params = params or cfg.params()
    rep = Report.start(cfg, "approximate")
    rep.data["map"] = spec.describe()
    rep.data["classification_params"] = params.as_dict()
    try:
        rep.data["constants_source"] = estimate_constants(src, domain).as_dict()
    except NonPositiveJacobian as exc:
        rep.data["constants_source"] = {"error": str(exc), "witness": exc.witness}

    if cfg.shift_trials > 0:
        z0, counts = select_shift(src, domain, params.r0, params, cfg.shift_trials, cfg.seed)
        rep.data["shift"] = {"z0": z0, "good_vertex_counts": counts}
    else:
        z0 = np.zeros(2)
        rep.data["shift"] = {"z0": z0}
    grid = build_grid(domain, params.r0, z0, params.eta_margin)
    if cfg.all_good:
        cls = None
        good = np.ones(grid.n_squares, bool)
    else:
        cls = classify_squares(src, grid, params)
        good = cls.good
    area = (domain[2] - domain[0]) * (domain[3] - domain[1])
    bad_measure = area - good_measure(grid, good, domain)
    bad = [tuple(int(v) for v in grid.squares[s]) for s in np.flatnonzero(~good)]
    rep.data["classification"] = {
        "squares": grid.n_squares,
        "good": int(good.sum()),
        "bad": int((~good).sum()),
        "bad_square_area": float((~good).sum() * grid.side**2),
        "bad_measure": bad_measure,
        "all_good_override": cfg.all_good,
        "bad_squares": bad,
    }
    rep.check("bad_measure_below_nu", bad_measure, params.nu, "<")

    pq = interpolate_grid(src, grid, triangle_mask=np.repeat(good, 2))
    measure_interpolant(rep, src, pq, domain, cfg)
    result = Approximation(pq, bad, rep, src, cls)
    if cfg.enforce_nu and not bad_measure < params.nu:
        exc = BadMeasureExceeded(bad_measure, params.nu)
        exc.result = result
        raise exc
    return result


def measure_interpolant(rep: Report, src, pq: PiecewiseQuadraticMap, domain, cfg: RunConfig) -> None:
    m = {"triangles": int(pq.active.sum())}
    if pq.active.any():
        quad = analysis.triangle_quadrature(pq, cfg.quad_k, clip=domain)
        m["continuity_mismatch"] = pq.max_mismatch()
        m["min_jacobian_7pt"], w = pq.triangle_min_jacobian(7)
        m["min_jacobian_witness"] = w
        m["linf_error"] = analysis.linf_diff(src, pq, quad)
        m["w21_error"] = analysis.w21_error(src, pq, quad)
        m["singular_measure"] = analysis.singular_measure(pq)
        m["max_jump"] = pq.max_jump()
        inj = analysis.injectivity_test(pq, quad)
        m["injectivity"] = inj.as_dict()
        rep.check("continuity", m["continuity_mismatch"], 1e-9, "<=")
        rep.check("interpolant_jacobian_positive", m["min_jacobian_7pt"], 0.0, ">")
        rep.check("interpolant_injective", inj.ok, 1, "bool")
    rep.data["interpolant"] = m


# --------------------------------------------------------------------------
# smoothing


@dataclass
class Smoothing:
    smap: SmoothedMap
    report: Report


def _ray_edges(pq: PiecewiseQuadraticMap, v: int, fan, edges: list) -> list:
    """Interior edge id for every interior ray of the fan at vertex ``v``."""
    grid = pq.grid
    by_angle = {}
    for e in edges:
        E = grid.edges[e]
        if v not in (E.v0, E.v1):
            continue
        other = E.v1 if E.v0 == v else E.v0
        d = grid.vertices[other] - grid.vertices[v]
        by_angle[e] = math.atan2(d[1], d[0]) % (2 * math.pi)
    out = []
    for ang, _, _ in fan.rays:
        diffs = {e: abs(((a - ang + math.pi) % (2 * math.pi)) - math.pi) for e, a in by_angle.items()}
        e = min(diffs, key=diffs.get)
        if diffs[e] > 1e-9:
            raise EdgeMismatch(f"no grid edge along the ray at angle {ang:.6f}")
        out.append(e)
    return out


def global_rectangle_count(consts: ConstantsEstimate, rho0: float, max_length: float) -> tuple[int, float]:
    """Common ``N``: the smallest with ``max_length / N`` below every bound."""
    d, L, M = consts.d, consts.L, consts.M
    bound = min(rho0, min(d, d * d) / (2000 * (M + 1) * (L + 1) ** 4), 2 * rho_bound(consts, rho0),
                2 * rho_chain_bound(consts, rho0))
    return smallest_N(max_length, bound / 2), bound


def _pick(items: list, count: int) -> list:
    if count <= 0 or len(items) <= count:
        return list(items)
    idx = np.unique(np.linspace(0, len(items) - 1, count).round().astype(int))
    return [items[i] for i in idx]


def run_smooth(pq: PiecewiseQuadraticMap, cfg: RunConfig, consts: Optional[ConstantsEstimate] = None, src=None) -> Smoothing:
    """Global parameter choice, edge and vertex blends, verification."""
    rep = Report.start(cfg, "smooth")
    mismatch = pq.max_mismatch()
    if mismatch > 1e-9:
        raise EdgeMismatch(f"piecewise map is discontinuous across an edge (mismatch {mismatch:.3g})")
    minJ, wJ = pq.triangle_min_jacobian(7)
    if not minJ > 0:
        raise NonPositiveJacobian(f"piecewise map has Jacobian {minJ:.3g} <= 0", witness=None if wJ is None else wJ.tolist(), value=minJ)
    consts = consts or pq.constants()
    grid = pq.grid
    rho0 = 0.9 * inradius(grid.side)
    edges = pq.interior_edges()
    lengths = {e: float(np.hypot(*np.diff(grid.edge_points(e), axis=0)[0])) for e in edges}
    rep.data["constants"] = consts.as_dict()
    rep.data["rho0"] = rho0
    smap_edges, smap_vertices = {}, {}
    if not edges:
        rep.data["global"] = {"N": 0, "edges": 0, "vertices": 0}
        return Smoothing(SmoothedMap(pq, {}, {}), rep)

    N, bound = global_rectangle_count(consts, rho0, max(lengths.values()))
    rhos = {e: lengths[e] / (2 * N) for e in edges}
    I = len(pq.vertex_ids())
    R_cap = cfg.eps / (I * (consts.M + 1)) if cfg.eps > 0 else None
    rep.data["global"] = {"N": N, "length_over_N_bound": bound, "edges": len(edges), "R_cap": R_cap}

    # vertex radii and the r caps they impose on their edges
    fans, ray_edges, radii = {}, {}, {}
    edge_cap = {e: math.inf for e in edges}
    for v in pq.vertex_ids().tolist():
        fan = pq.fan(v)
        if fan is None or not fan.rays:
            continue
        re_ = _ray_edges(pq, v, fan, edges)
        R = choose_R([rhos[e] for e in re_], R_cap)
        for e in re_:
            edge_cap[e] = min(edge_cap[e], min(r_cap(R, rhos[e], consts, fan.omega_star).values()))
        fans[v], ray_edges[v], radii[v] = fan, re_, R

    for e in edges:
        t1, t2 = pq.edge_sides(e)
        Q1, Q2 = pq.quad(t1), pq.quad(t2)
        P = grid.edge_points(e)
        params = select_edge_params(Q1, Q2, (P[0], P[1]), consts, rho0, N=N, r_cap=edge_cap[e])
        smap_edges[e] = EdgeBlend(params, Q1, Q2)

    disagreements = 0
    for v, fan in fans.items():
        re_ = ray_edges[v]
        hints = []
        for e in re_:
            p = smap_edges[e].params
            at_start = grid.edges[e].v0 == v
            hints.append(int(p.types[0]) if at_start else 1 - int(p.types[-1]))
        vp = select_vertex_params(fan, consts, [rhos[e] for e in re_], [smap_edges[e].params.r for e in re_],
                                  rho0=rho0, R_cap=R_cap, type_hints=hints)
        disagreements += vp.caps["type_disagreements"]
        smap_vertices[v] = VertexBlend(fan, vp)
    smap = SmoothedMap(pq, smap_edges, smap_vertices)
    rep.data["global"].update({"vertices": len(smap_vertices), "vertex_type_disagreements": disagreements})
    rep.data["edges"] = {str(e): smap_edges[e].params.ledger() for e in sorted(smap_edges)}
    rep.data["vertices"] = {str(v): smap_vertices[v].params.ledger() for v in sorted(smap_vertices)}
    _verify_smoothed(rep, smap, cfg, consts)
    _measure_smoothed(rep, smap, cfg, consts, src)
    return Smoothing(smap, rep)


def _verify_smoothed(rep: Report, smap: SmoothedMap, cfg: RunConfig, consts: ConstantsEstimate) -> None:
    if cfg.verify == "none":
        rep.data["verification"] = {"level": "none"}
        return
    count = 0 if cfg.verify == "full" else cfg.verify_count
    ver = {"level": cfg.verify, "edges": {}, "vertices": {}}
    for e in _pick(sorted(smap.edges), count):
        b = smap.edges[e]
        d = verify_edge(b.params, b.Q1, b.Q2, grid_res=cfg.strip_res, injectivity_res=cfg.injectivity_res)
        ver["edges"][str(e)] = d.as_dict()
        rep.add_diagnostics(f"edge[{e}]", d)
    for v in _pick(sorted(smap.vertices), count):
        vb = smap.vertices[v]
        d = verify_vertex(vb.fan, vb.params, grid_res=cfg.injectivity_res, polar=(cfg.polar_radial, cfg.polar_angular))
        ver["vertices"][str(v)] = d.as_dict()
        rep.add_diagnostics(f"vertex[{v}]", d)
    rep.data["verification"] = ver


def seam_mismatch(smap: SmoothedMap, samples: int = 64, rel: float = 1e-7) -> float:
    """Largest value jump across the disk circles and strip sides."""
    worst = 0.0
    th = 2 * math.pi * (np.arange(samples) + 0.5) / samples
    for v in sorted(smap.vertices):
        vb = smap.vertices[v]
        R = vb.params.R
        u = np.stack([np.cos(th), np.sin(th)], -1)
        keep = vb.fan.sector_of(th) >= 0
        for radius in (0.75 * R, 0.875 * R, R):
            a = vb.local_jet(u[keep] * radius * (1 - rel)).value
            b = vb.local_jet(u[keep] * radius * (1 + rel)).value
            worst = max(worst, float(np.abs(a - b).max(initial=0.0)))
    for e in sorted(smap.edges):
        b = smap.edges[e]
        p = b.params
        y = p.length * (np.arange(samples) + 0.5) / samples
        for sgn in (-1.0, 1.0):
            inner = b.chart_jet(np.stack([np.full(samples, sgn * p.r * (1 - rel)), y], -1)).value
            outer = b.chart_jet(np.stack([np.full(samples, sgn * p.r * (1 + rel)), y], -1)).value
            worst = max(worst, float(np.abs(inner - outer).max()))
    return worst


def _measure_smoothed(rep: Report, smap: SmoothedMap, cfg: RunConfig, consts: ConstantsEstimate, src) -> None:
    pq = smap.base
    domain = cfg.spec().resolved_domain()
    quad = analysis.triangle_quadrature(pq, cfg.quad_k, clip=domain)
    m = {}
    kind, _ = smap.region_of(quad.points)
    bulk = kind == 0
    a = pq.jet_on(pq.locate(quad.points[bulk]), quad.points[bulk]).value
    g = smap.jet(quad.points[bulk]).value
    m["untouched_max_diff"] = float(np.abs(a - g).max(initial=0.0))
    m["seam_mismatch"] = seam_mismatch(smap)
    lin = analysis.smoothing_linf(smap)
    Rmax = max((vb.params.R for vb in smap.vertices.values()), default=0.0)
    rmax = max((b.params.r for b in smap.edges.values()), default=0.0)
    C = max((analysis.smoothing_linf(SmoothedMap(pq, {}, {v: vb}))["disk"] / vb.params.R
             for v, vb in smap.vertices.items()), default=0.0)
    m["linf_A_minus_g"] = lin
    m["linf_bound"] = {"C_measured": C, "max_R": Rmax, "max_r": rmax, "bound": C * Rmax + 8 * consts.L * rmax}
    d2s = sum(analysis.strip_terms(smap, e, 8, 128)["d2_diff"] for e in sorted(smap.edges))
    d2d = sum(analysis.disk_terms(smap, v, 32, 128)["d2_diff"] for v in sorted(smap.vertices))
    m["d2_difference"] = {"strips": d2s, "disks": d2d, "total": d2s + d2d, "singular_measure": analysis.singular_measure(pq)}
    minJ, w = analysis.jacobian_scan(smap, quad)
    m["min_jacobian_bulk"], m["min_jacobian_bulk_witness"] = minJ, w
    inj = analysis.injectivity_test(smap, quad)
    m["injectivity_bulk"] = inj.as_dict()
    if src is not None:
        m["w21_error"] = analysis.w21_smoothed(src, smap, quad, (8, 128), (32, 128))
        # bulk samples never land in a strip, so add the blend deviation
        m["linf_error_upper"] = analysis.linf_diff(src, smap, quad) + lin["total"]
    rep.data["smoothed"] = m
    rep.check("untouched_outside_blends", m["untouched_max_diff"], 1e-12, "<=")
    rep.check("seam_continuity", m["seam_mismatch"], 1e-9, "<=")
    rep.check("bulk_jacobian_positive", minJ, 0.0, ">")
    rep.check("bulk_injective", inj.ok, 1, "bool")
