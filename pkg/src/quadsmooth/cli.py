"""Command line: ``quadsmooth approximate|smooth|verify|render``.

Exit codes: 0 when every recorded check passes, 2 when a verification
bound fails (the report is still written), 1 on hard errors.
"""

from __future__ import annotations

import argparse
import logging
import sys
from pathlib import Path

import numpy as np

from .errors import BadMeasureExceeded, QuadSmoothError
from .pipeline import RunConfig, run_approximate, run_smooth
from .svg import BadSquares, GridLayer, ImageMesh, Witnesses, render_svg

log = logging.getLogger("quadsmooth")


def build_parser() -> argparse.ArgumentParser:
    common = argparse.ArgumentParser(add_help=False)
    common.add_argument("--config", type=Path, help="flat key = value file; flags override it")
    common.add_argument("--map", help="identity | linear(a11,a12,a21,a22[,b1,b2]) | shear(amp) | radial(c) | "
                                      "quadratic(12 coeffs) | degenerate[(slope)] | grid:<file>")
    common.add_argument("--domain", nargs=4, type=float, metavar=("X0", "Y0", "X1", "Y1"))
    common.add_argument("--nu", type=float)
    common.add_argument("--delta", type=float)
    common.add_argument("--r0", type=float)
    common.add_argument("--grid-res", type=int)
    common.add_argument("--seed", type=int)
    common.add_argument("--shift-trials", type=int)
    common.add_argument("--all-good", action="store_const", const=True, default=None,
                        help="skip classification and treat every square as good")
    common.add_argument("--no-enforce-nu", dest="enforce_nu", action="store_const", const=False, default=None,
                        help="keep going when the bad measure is not below nu")
    common.add_argument("--verify-level", dest="verify", choices=("none", "sample", "full"))
    common.add_argument("--out-dir", type=Path, default=Path("out"))
    common.add_argument("--report", choices=("json", "csv"), default="json")
    common.add_argument("-v", "--verbose", action="store_true")
    p = argparse.ArgumentParser(prog="quadsmooth", description="Piecewise quadratic approximation and smoothing of planar maps.")
    sub = p.add_subparsers(dest="command", required=True)
    sub.add_parser("approximate", parents=[common], help="classify squares and interpolate")
    sub.add_parser("smooth", parents=[common], help="approximate, then smooth edges and vertices")
    sub.add_parser("verify", parents=[common], help="smooth with full verification of every blend")
    sub.add_parser("render", parents=[common], help="SVG of the grid, bad squares and the image mesh")
    return p


def config_from_args(args) -> RunConfig:
    cfg = RunConfig()
    if args.config is not None:
        cfg = RunConfig.from_text(args.config.read_text(), cfg)
    over = {k: getattr(args, k) for k in ("map", "nu", "delta", "r0", "grid_res", "seed", "shift_trials", "all_good",
                                          "enforce_nu", "verify")}
    if args.domain is not None:
        over["domain"] = tuple(args.domain)
    if args.command == "verify":
        over["verify"] = "full"
    return cfg.updated(**over)


def _write(report, out_dir: Path, stage: str, fmt: str) -> Path:
    path = report.write(out_dir / f"report-{stage}.{fmt}", fmt)
    log.info("wrote %s", path)
    return path


def main(argv=None) -> int:
    args = build_parser().parse_args(argv)
    logging.basicConfig(level=logging.INFO if args.verbose else logging.WARNING, format="%(message)s")
    try:
        cfg = config_from_args(args)
        try:
            ap = run_approximate(cfg)
        except BadMeasureExceeded as exc:
            _write(exc.result.report, args.out_dir, "approximate", args.report)
            print(f"error: {exc}; shrink r0", file=sys.stderr)
            return 1
        _write(ap.report, args.out_dir, "approximate", args.report)
        reports = [ap.report]
        if args.command == "render":
            g = ap.pq.grid
            good_sq = np.flatnonzero(ap.pq.active[::2])
            bad_sq = np.flatnonzero(~ap.pq.active[::2])
            bounds = cfg.spec().resolved_domain()
            pad = 0.05 * max(bounds[2] - bounds[0], bounds[3] - bounds[1])
            view = (bounds[0] - pad, bounds[1] - pad, bounds[2] + pad, bounds[3] + pad)
            objs = [BadSquares(g, bad_sq), GridLayer(g)]
            inj = ap.report.data.get("interpolant", {}).get("injectivity", {})
            if inj.get("witness"):
                objs.append(Witnesses(np.array(inj["witness"])))
            render_svg(objs, args.out_dir / "grid.svg", view, cfg.svg_samples)
            img = [ImageMesh(g, ap.pq.edge_values, good_sq, per_edge=True)] if len(good_sq) else []
            render_svg(img, args.out_dir / "image.svg", None, cfg.svg_samples)
            log.info("wrote %s and %s", args.out_dir / "grid.svg", args.out_dir / "image.svg")
        elif args.command in ("smooth", "verify"):
            sm = run_smooth(ap.pq, cfg, src=ap.src)
            _write(sm.report, args.out_dir, "smooth", args.report)
            reports.append(sm.report)
    except (QuadSmoothError, ValueError, OSError) as exc:
        print(f"error: {exc}", file=sys.stderr)
        return 1
    failed = [c["name"] for r in reports for c in r.failures()]
    if failed:
        print(f"{len(failed)} check(s) failed: {', '.join(failed[:10])}", file=sys.stderr)
        return 2
    return 0


if __name__ == "__main__":  # pragma: no cover
    sys.exit(main())
