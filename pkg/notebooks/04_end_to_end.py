# ---
# jupyter:
#   jupytext:
#     formats: ipynb,py:percent
#     text_representation:
#       extension: .py
#       format_name: percent
#       format_version: '1.3'
#   kernelspec:
#     display_name: Python 3
#     language: python
#     name: python3
# ---

# %% [markdown]
# # End to end, and where it stops
#
# A full run classifies squares, interpolates on the good ones, smooths,
# verifies and writes a report.  The CLI does the same with
# `quadsmooth smooth --map shear(0.2) --r0 0.125 --all-good`.

# %%
from pathlib import Path

from quadsmooth import RunConfig, render_svg, run_approximate, run_smooth
from quadsmooth.errors import BadMeasureExceeded
from quadsmooth.svg import BadSquares, GridLayer

out = Path("notebook-out")

# %% [markdown]
# With the classification switched on, the shear map has no good squares at
# `r0 = 1/64`: the bad measure is the whole unit square and the run stops.
# The report is still written.

# %%
cfg = RunConfig(map="shear(0.2)", r0=1 / 64, nu=0.1)
try:
    run_approximate(cfg)
except BadMeasureExceeded as exc:
    rep = exc.result.report
    print(exc)
    print(rep.data["classification"]["good"], "good squares;", rep.failures()[0]["name"])
    g = exc.result.pq.grid
    render_svg([BadSquares(g, range(g.n_squares)), GridLayer(g)], out / "shear-bad.svg")

# %% [markdown]
# Treating every square as good shows what the rest of the pipeline does
# with the map.  The strips add a term comparable to the edge-jump mass of
# the piecewise map: inside a strip the jump turns into an ordinary second
# derivative of size `jump / r` on a set of width `2r`.  The disks add little.

# %%
cfg = RunConfig(map="shear(0.2)", r0=1 / 8, all_good=True, enforce_nu=False)
ap = run_approximate(cfg)
sm = run_smooth(ap.pq, cfg, src=ap.src)
w = sm.report.data["smoothed"]["w21_error"]
print({k: round(v, 6) for k, v in w.items()})
print("report ok:", sm.report.ok)
sm.report.write(out / "report-smooth.json")
