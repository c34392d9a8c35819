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
# # Good and bad squares
#
# A square is good when all four corners pass a Jacobian floor `delta`, a
# derivative bound and three small-scale tests: the Taylor remainder and
# two mean oscillations of the derivative, each measured against a
# threshold `eps`.  The thresholds are tied together: `eps` sits at 90% of
# the smallest of `C0 delta**2`, `delta**2 / 8` and `delta**2 / (4 C1)`.

# %%
import numpy as np

from quadsmooth import ClassificationParams, MapSpec, build_grid, classify_squares

UNIT = (0.0, 0.0, 1.0, 1.0)

# %% [markdown]
# With the default `C0 = 0.01` and `delta = 0.5`, `eps` is about `2.2e-3`.
# The oscillation statistics for the shear map are two orders of magnitude
# larger at `r0 = 1/64` and only halve with each halving of `r0`, so no
# square is good at any grid a laptop can hold.

# %%
src = MapSpec.parse("shear(0.2)").source()
for r0 in (1 / 32, 1 / 64, 1 / 128):
    p = ClassificationParams.derive(0.1, 0.5, r0, UNIT)
    c = classify_squares(src, build_grid(UNIT, r0), p)
    st = c.vertex_stats
    print(f"r0=1/{round(1 / r0)}: eps={p.eps:.2e} good={int(c.good.sum())}/{len(c.good)} "
          + " ".join(f"{k}~{np.nanmedian(v):.3g}" for k, v in st.items() if k.startswith(("taylor", "osc"))))

# %% [markdown]
# Near a line where the Jacobian drops below `delta` the picture is the
# intended one.  On a thin window around the degenerate line of
# `degenerate(0.6)` and with a looser `eps`, squares near the line are bad
# and squares away from it are good.  Tightening `eps` only ever turns good
# squares bad.

# %%
window, r0 = (0.4, 0.0, 0.6, 0.2), 1 / 256
g = build_grid(window, r0)
s = MapSpec.parse("degenerate(0.6)").source()
for eps in (0.02, 0.012, 0.005):
    c = classify_squares(s, g, ClassificationParams(0.1, 0.03, 0.5, eps, r0, C0=0.1))
    xs = g.square_corners()[c.good][:, 0] + g.side / 2
    near = np.abs(xs - 0.5)
    print(f"eps={eps}: good {int(c.good.sum())}/{len(c.good)}, closest good square centre "
          f"{near.min() if len(near) else float('nan'):.4f} from the line")
