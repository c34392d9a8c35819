import math

import numpy as np
import pytest
from conftest import identity_fan, random_fan
from hypothesis import given
from hypothesis import strategies as st

from quadsmooth.errors import ConstraintUnsatisfiable, EdgeMismatch, OutOfChart
from quadsmooth.mesh import ConstantsEstimate
from quadsmooth.quadmap import QuadraticMap
from quadsmooth.vertex import (
    VertexBlend,
    VertexFan,
    disk_d2_integral,
    fan_constants,
    fan_inequalities,
    monotonicity,
    partials_identity,
    r_cap,
    rho_chain_bound,
    select_vertex_params,
    unwrapped_angle_slope,
    verify_vertex,
)

RHO0 = 0.05


def params_for(fan, scale=0.9):
    consts = fan_constants(fan, RHO0)
    rho = scale * rho_chain_bound(consts, RHO0)
    return consts, select_vertex_params(fan, consts, [rho] * len(fan.rays), rho0=RHO0)


def ring(t, n=720, offset=1e-3):
    th = 2 * math.pi * np.arange(n) / n + offset
    return t * np.stack([np.cos(th), np.sin(th)], -1)


@pytest.fixture(scope="module", params=[0, 1, 2])
def fan_case(request):
    fan = random_fan(request.param)
    consts, p = params_for(fan)
    return fan, consts, p, VertexBlend(fan, p)


def test_identity_fan_example():
    fan = identity_fan()
    p = select_vertex_params(fan, ConstantsEstimate(1.0, 1.0, 0.0), [1 / 1000] * 8, rho0=RHO0)
    assert p.lam == 0.25
    assert p.R == pytest.approx(0.9 * 0.5 / 1000, rel=1e-15)
    assert set(p.types.tolist()) == {0}
    b = VertexBlend(fan, p)
    z = ring(0.5 * p.R, 16)
    assert np.allclose(b.local_jet(z).value, 0.25 * z, rtol=0, atol=1e-18)
    # the identity is its own smoothing outside B(0, R)
    z = ring(1.5 * p.R, 16)
    assert np.array_equal(b.local_jet(z).value, z)


def test_linear_core_and_untouched_outside(fan_case):
    fan, _, p, b = fan_case
    rng = np.random.default_rng(5)
    t = np.concatenate([rng.uniform(0.01, 0.75, 200) * p.R, [0.75 * p.R]])
    th = rng.uniform(0, 2 * math.pi, len(t))
    z = np.stack([t * np.cos(th), t * np.sin(th)], -1)
    j = b.local_jet(z)
    assert np.array_equal(j.value, p.lam * z)
    assert np.array_equal(j.D, np.broadcast_to(p.lam * np.eye(2), j.D.shape)) and not j.D2.any()
    t = rng.uniform(1.0, 2.0, 300) * p.R
    th = rng.uniform(0, 2 * math.pi, 300)
    z = t[:, None] * np.stack([np.cos(th), np.sin(th)], -1)
    g, ft = b.local_jet(z), b.tilde_local(z)
    assert np.array_equal(g.value, ft.value) and np.array_equal(g.D, ft.D) and np.array_equal(g.D2, ft.D2)


def test_rectangles_only_change_the_fan_inside(fan_case):
    fan, _, p, b = fan_case
    rng = np.random.default_rng(6)
    z = ring(1.5 * p.R, 2000, 0.0)
    inside = np.zeros(len(z), bool)
    for i in range(len(fan.rays)):
        inside |= b.in_rect(i, z)
    assert inside.any() and not inside.all()
    ft, f = b.tilde_local(z), fan.local_jet(z)
    assert np.array_equal(ft.value[~inside], f.value[~inside])
    # on each ray the blend reduces to the common value of the two quadratics
    for i, (ang, _, _) in enumerate(fan.rays):
        t = rng.uniform(0.5, 1.0, 50) * p.rhos[i]
        on = t[:, None] * np.array([math.cos(ang), math.sin(ang)])
        scale = np.abs(f.value).max()
        assert np.abs(b.tilde_local(on).value - fan.local_jet(on).value).max() < 1e-12 * scale


def test_seams_continuous(fan_case):
    _, _, p, b = fan_case
    for t in (0.75 * p.R, p.R):
        lo, hi = b.local_jet(ring(t * (1 - 1e-10))), b.local_jet(ring(t * (1 + 1e-10)))
        assert np.abs(lo.value - hi.value).max() < 1e-8 * p.R
        assert np.abs(lo.D - hi.D).max() < 1e-6
        assert np.abs(lo.D2 - hi.D2).max() * p.R < 1e-5


def test_blend_jets_match_finite_differences(fan_case):
    _, _, p, b = fan_case
    rng = np.random.default_rng(7)
    t = rng.uniform(0.76, 0.99, 100) * p.R
    th = rng.uniform(0, 2 * math.pi, 100)
    z = np.stack([t * np.cos(th), t * np.sin(th)], -1)
    j = b.local_jet(z)
    h = 1e-6 * p.R
    for k in range(2):
        e = np.zeros(2)
        e[k] = h
        jp, jm = b.local_jet(z + e), b.local_jet(z - e)
        assert np.abs((jp.value - jm.value) / (2 * h) - j.D[..., k]).max() < 1e-5 * np.abs(j.D).max()
        assert np.abs((jp.D - jm.D) / (2 * h) - j.D2[..., k]).max() < 1e-4 * np.abs(j.D2).max()


def test_monotone_in_both_polar_directions(fan_case):
    _, _, p, b = fan_case
    minR, _, minP, _ = monotonicity(b, 128, 512)
    assert minR > 0 and minP > 0
    # the image winds once around the vertex at every radius
    for t in (0.8 * p.R, 0.95 * p.R):
        v = b.local_jet(ring(t, 4096, 0.0)).value
        winding = np.unwrap(np.arctan2(v[:, 1], v[:, 0]))
        assert winding[-1] - winding[0] == pytest.approx(2 * math.pi * (1 - 1 / 4096), abs=1e-2)
        assert unwrapped_angle_slope(b, t, 4096) > 0


def test_verification_passes(fan_case):
    fan, consts, p, _ = fan_case
    d = verify_vertex(fan, p, grid_res=128, polar=(128, 512))
    assert d.ok, [c.as_dict() for c in d.failures()]
    assert p.chain_ok and p.lam == consts.d / (4 * consts.L)


def test_symmetric_four_sector_cap():
    fan = identity_fan(4)
    consts = fan_constants(fan, RHO0)
    assert fan.omega_star == pytest.approx(math.pi / 8)
    R = 1e-3
    caps = r_cap(R, 0.01, consts, fan.omega_star)
    assert caps["(R/2)tan(w*/3)"] == pytest.approx(0.5 * R * math.tan(math.pi / 24), rel=1e-14)
    # a narrow sector tightens the angular cap
    narrow = [0, 0.1, math.pi / 2, math.pi, 3 * math.pi / 2, 2 * math.pi]
    fan5 = VertexFan.closed(np.zeros(2), narrow, [QuadraticMap.affine(np.eye(2))] * 5)
    assert fan5.omega_star == pytest.approx(0.1)


def test_requested_half_width_above_cap_rejected():
    fan = identity_fan(4)
    consts = fan_constants(fan, RHO0)
    p = select_vertex_params(fan, consts, [1e-3] * 4, rho0=RHO0)
    with pytest.raises(ConstraintUnsatisfiable):
        select_vertex_params(fan, consts, [1e-3] * 4, rs=2 * p.rs, rho0=RHO0)
    with pytest.raises(ValueError):
        select_vertex_params(fan, consts, [1e-3] * 3, rho0=RHO0)


def test_d2_integral_scales_like_R():
    fan = random_fan(3)
    consts, p = params_for(fan)
    rho = p.rhos.tolist()
    ratios = []
    for k in range(3):
        cap = p.R / 2**k / 0.9
        pk = select_vertex_params(fan, consts, rho, rho0=RHO0, R_cap=cap)
        assert pk.R == pytest.approx(p.R / 2**k, rel=1e-12)
        ratios.append(disk_d2_integral(VertexBlend(fan, pk), 96, 384) / pk.R)
    assert all(np.isfinite(ratios))
    assert max(ratios) / min(ratios) < 2


@given(st.integers(0, 10_000))
def test_partials_identity_holds(seed):
    fan = random_fan(seed)
    assert partials_identity(fan, 0.02) < 1e-4


@pytest.mark.parametrize("seed", [0, 4, 9])
def test_fan_inequalities(seed):
    fan = random_fan(seed)
    consts = fan_constants(fan, RHO0)
    d = fan_inequalities(fan, consts, min(RHO0, consts.d / (consts.L * max(consts.M, 1e-12))))
    assert d.ok, [c.as_dict() for c in d.failures()]


def test_boundary_fan_gaps():
    half = [QuadraticMap.affine(np.eye(2))] * 2
    fan = VertexFan(np.zeros(2), [0.0, math.pi / 2], [math.pi / 2, math.pi], half)
    assert not fan.is_closed and len(fan.rays) == 1
    with pytest.raises(OutOfChart):
        fan.local_jet(np.array([[0.0, -1e-3]]))
    consts = fan_constants(fan, RHO0)
    p = select_vertex_params(fan, consts, [1e-3], rho0=RHO0)
    d = verify_vertex(fan, p, grid_res=64, polar=(64, 256))
    assert d["min_jacobian"].ok and d["injective"].ok


def test_discontinuous_fan_rejected():
    a = QuadraticMap.affine(np.eye(2))
    b = QuadraticMap.affine(np.diag([1.0, 2.0]))  # disagrees on the ray at pi/2
    with pytest.raises(EdgeMismatch):
        VertexFan.closed(np.zeros(2), [0, math.pi / 2, 2 * math.pi], [a, b])
