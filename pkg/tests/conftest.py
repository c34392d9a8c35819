import math
import sys

import numpy as np
import pytest
from hypothesis import settings

from quadsmooth.quadmap import QuadraticMap
from quadsmooth.vertex import VertexFan

settings.register_profile("quick", max_examples=30, deadline=None)
settings.load_profile("quick")


def random_fan(seed=0, center=(0.3, 0.4), amp=0.15, hess=0.3, angles=None):
    """Closed fan of quadratics sharing one Hessian, continuous on the rays.

    Each sector is the affine map sending the two bounding ray directions to
    perturbed images, plus a common quadratic part, so neighbours agree on
    their shared ray.
    """
    rng = np.random.default_rng(seed)
    if angles is None:
        angles = [0, math.pi / 2, 3 * math.pi / 4, math.pi, 3 * math.pi / 2, 7 * math.pi / 4, 2 * math.pi]
    angs = np.asarray(angles, float)
    dirs = np.stack([np.cos(angs), np.sin(angs)], -1)
    imgs = dirs + amp * rng.normal(size=dirs.shape)
    imgs[-1] = imgs[0]
    H = hess * rng.normal(size=(2, 2, 2))
    H = 0.5 * (H + H.transpose(0, 2, 1))
    c = np.asarray(center, float)
    quads = []
    for k in range(len(angs) - 1):
        A = np.column_stack([imgs[k], imgs[k + 1]]) @ np.linalg.inv(np.column_stack([dirs[k], dirs[k + 1]]))
        quads.append(QuadraticMap.from_jet(c, np.array([1.0, 2.0]), A, H))
    return VertexFan.closed(c, angs, quads)


def identity_fan(n=8, center=(0.0, 0.0)):
    angs = np.linspace(0, 2 * math.pi, n + 1)
    quads = [QuadraticMap.affine(np.eye(2)) for _ in range(n)]
    return VertexFan.closed(np.asarray(center, float), angs, quads)


@pytest.fixture
def rng():
    return np.random.default_rng(12345)


def pytest_terminal_summary(terminalreporter):
    mod = sys.modules.get("test_acceptance")
    if mod is None or not getattr(mod, "RESULTS", None):
        return
    terminalreporter.section("acceptance criteria")
    for n in sorted(mod.RESULTS):
        terminalreporter.write_line(mod.RESULTS[n])
