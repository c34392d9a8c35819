import numpy as np
import pytest

from quadsmooth.edge import (
    EdgeBlend,
    classify_rect_type,
    edge_blend_eval,
    rho_bound,
    select_edge_params,
    smallest_N,
    strip_d2_integral,
    verify_edge,
)
from quadsmooth.errors import DegenerateConstants, EdgeMismatch, OutOfChart
from quadsmooth.geometry import entry_sum, eta
from quadsmooth.mesh import ConstantsEstimate, constants_from_jets
from quadsmooth.quadmap import QuadraticMap, edge_jump

EDGE = (np.array([0.0, 0.0]), np.array([0.0, 1.0]))  # chart x = world x
RHO0 = 0.2


def quad(C):
    return QuadraticMap.from_coeffs(np.asarray(C, float))


BASE = [[0, 1, 0.1, 0.05, 0, 0], [0, 0, 1, 0, 0.05, 0]]


def with_extra(extra):
    return quad(np.array(BASE) + np.array(extra))


def pair_constants(Q1, Q2, n=2000):
    rng = np.random.default_rng(0)
    p = np.column_stack([rng.uniform(-RHO0, RHO0, n), rng.uniform(0, 1, n)])
    left = p[:, 0] < 0
    D = np.where(left[:, None, None], Q1.jet(p).D, Q2.jet(p).D)
    D2 = np.where(left[:, None, None, None], Q1.jet(p).D2, Q2.jet(p).D2)
    return constants_from_jets(None, D, D2, n, "pair")


def sign_change_pair(c=0.2):
    # Q2 = Q1 + c x (y - 1/2) e1: equal on x = 0, jump changes sign at y = 1/2
    Q1 = quad(BASE)
    Q2 = with_extra([[0, -c / 2, 0, 0, c, 0], [0, 0, 0, 0, 0, 0]])
    return Q1, Q2


@pytest.fixture(scope="module")
def mixed():
    Q1, Q2 = sign_change_pair()
    consts = pair_constants(Q1, Q2)
    params = select_edge_params(Q1, Q2, EDGE, consts, RHO0)
    return Q1, Q2, consts, params


def test_rho_bound_and_N_example():
    consts = ConstantsEstimate(1.0, 1.0, 0.0)
    bound = rho_bound(consts, 0.5)
    assert bound == pytest.approx(1 / 2000)
    assert smallest_N(1.0, bound) == 1001


def test_admissible_output_relations(mixed):
    Q1, Q2, consts, p = mixed
    assert 2 * p.N * p.rho == pytest.approx(p.length, rel=1e-15)
    assert p.rho < rho_bound(consts, RHO0)
    assert p.r <= 0.9 * min(p.rho**2 / (2 * (consts.L + 1)), p.rho / 40, 2 * consts.M * p.rho**2 / consts.L) * (1 + 1e-12)
    assert smallest_N(p.length, rho_bound(consts, RHO0)) == p.N


def test_degenerate_and_mismatch_errors():
    Q1, Q2 = sign_change_pair()
    with pytest.raises(DegenerateConstants):
        select_edge_params(Q1, Q2, EDGE, ConstantsEstimate(0.0, 1.0, 0.0), RHO0)
    shifted = with_extra([[0.01, 0, 0, 0, 0, 0], [0, 0, 0, 0, 0, 0]])
    with pytest.raises(EdgeMismatch):
        select_edge_params(Q1, shifted, EDGE, pair_constants(Q1, shifted), RHO0)


def test_equal_quadratics_give_identity_blend():
    Q = quad(BASE)
    consts = pair_constants(Q, Q)
    p = select_edge_params(Q, Q, EDGE, consts, RHO0)
    assert set(p.types.tolist()) == {0}
    rng = np.random.default_rng(1)
    pts = np.column_stack([rng.uniform(-p.r, p.r, 200), rng.uniform(0, 1, 200)])
    g, q = edge_blend_eval(p, Q, Q, pts), Q.jet(pts)
    assert np.allclose(g.value, q.value, atol=1e-14) and np.allclose(g.D, q.D, atol=1e-12)
    assert np.allclose(g.D2, q.D2, atol=1e-12)
    d = verify_edge(p, Q, Q, grid_res=128, injectivity_res=64)
    assert d["min_jacobian"].value == pytest.approx(Q.jet(np.zeros(2)).jacobian, rel=0.2)
    strip_area = 2 * p.r * p.length
    assert strip_d2_integral(EdgeBlend(p, Q, Q), res=64) == pytest.approx(Q.hessian_entry_sum() * strip_area, rel=1e-9)


@pytest.mark.parametrize("sign,label", [(1.0, "a"), (-1.0, "b")])
def test_bump_sign_sets_type(sign, label):
    Q1 = quad(BASE)
    Q2 = with_extra([[0, sign * 0.1, 0, 0, 0, 0], [0, 0, 0, 0, 0, 0]])
    p = select_edge_params(Q1, Q2, EDGE, pair_constants(Q1, Q2), RHO0)
    assert {classify_rect_type(p, i) for i in range(1, p.N + 1)} == {label}


def test_mixed_types_switch_at_middle(mixed):
    _, _, _, p = mixed
    y = (2 * np.arange(1, p.N + 1) - 1) * p.rho
    assert np.all(p.types[y > 0.5 + 1e-9] == 0) and np.all(p.types[y < 0.5 - 1e-9] == 1)
    with pytest.raises(IndexError):
        classify_rect_type(p, 0)


def test_outside_strip_is_bit_exact(mixed):
    Q1, Q2, _, p = mixed
    rng = np.random.default_rng(2)
    y = rng.uniform(0, 1, 300)
    far = np.column_stack([-rng.uniform(p.r, RHO0, 300), y])
    near = np.column_stack([rng.uniform(p.r, RHO0, 300), y])
    for pts, Q in ((far, Q1), (near, Q2)):
        g, q = edge_blend_eval(p, Q1, Q2, pts), Q.jet(pts)
        assert np.array_equal(g.value, q.value) and np.array_equal(g.D, q.D) and np.array_equal(g.D2, q.D2)
    g = edge_blend_eval(p, Q1, Q2, np.array([-RHO0, 0.3]))
    assert np.array_equal(g.value, Q1(np.array([-RHO0, 0.3])))
    with pytest.raises(OutOfChart):
        edge_blend_eval(p, Q1, Q2, np.array([2 * RHO0, 0.3]))


def test_seams_are_continuous(mixed):
    Q1, Q2, _, p = mixed
    blend = EdgeBlend(p, Q1, Q2)
    rng = np.random.default_rng(3)
    # rectangle boundaries y = 2 i rho, including the type switch
    i = np.concatenate([rng.integers(1, p.N, 500), np.flatnonzero(np.diff(p.types)) + 1])
    x = rng.uniform(-p.r, p.r, len(i))
    y = 2 * i * p.rho
    h = 1e-9 * p.rho
    lo = blend.chart_jet(np.column_stack([x, y - h]))
    hi = blend.chart_jet(np.column_stack([x, y + h]))
    assert np.abs(lo.value - hi.value).max() < 1e-9
    # strip sides x = +-r
    y = rng.uniform(0, 1, 500)
    for side in (-1, 1):
        a = blend.chart_jet(np.column_stack([np.full_like(y, side * p.r * (1 - 1e-9)), y]))
        b = blend.chart_jet(np.column_stack([np.full_like(y, side * p.r * (1 + 1e-9)), y]))
        assert np.abs(a.value - b.value).max() < 1e-9


def test_boundary_line_formula():
    # on y = 2 i rho the transition argument collapses: eta(x/r + eta(0)) = eta(x/r)
    x = np.linspace(-1, 1, 101)
    assert np.array_equal(eta(x + eta(0.0)), eta(x))


def test_jets_match_finite_differences(mixed):
    Q1, Q2, _, p = mixed
    blend = EdgeBlend(p, Q1, Q2)
    rng = np.random.default_rng(4)
    k = np.flatnonzero(np.diff(p.types))[0] + 1
    # a transition rectangle and some plain ones
    y = np.concatenate([2 * k * p.rho + rng.uniform(0.05, 0.95, 40) * p.rho, rng.uniform(0.1, 0.9, 40)])
    xy = np.column_stack([rng.uniform(-0.9, 0.9, 80) * p.r, y])
    j = blend.chart_jet(xy)
    # the strip is ~1e-8 wide: values need a coarse x step to avoid cancellation,
    # first derivatives are O(1) and take a fine one
    for axis, h1, h2 in ((0, 1e-3 * p.r, 1e-5 * p.r), (1, 1e-4 * p.rho, 1e-5 * p.rho)):
        e1, e2 = np.zeros(2), np.zeros(2)
        e1[axis], e2[axis] = h1, h2
        fdD = (blend.chart_jet(xy + e1).value - blend.chart_jet(xy - e1).value) / (2 * h1)
        fdD2 = (blend.chart_jet(xy + e2).D - blend.chart_jet(xy - e2).D) / (2 * h2)
        assert np.abs(fdD - j.D[:, :, axis]).max() < 1e-5 * np.abs(j.D).max()
        assert np.abs(fdD2 - j.D2[:, :, :, axis]).max() < 1e-5 * np.abs(j.D2).max()


def test_verification_passes(mixed):
    Q1, Q2, consts, p = mixed
    d = verify_edge(p, Q1, Q2, grid_res=512, injectivity_res=256)
    assert d.ok, [c.as_dict() for c in d.failures()]
    assert d["min_jacobian"].value >= 0.8 * consts.d * 0.95
    assert d["max_derivative"].value <= 8 * consts.L


def test_d2_ratio_bounded_as_r_shrinks():
    Q1 = quad(BASE)
    Q2 = with_extra([[0, 0.1, 0, 0, 0, 0], [0, 0, 0, 0, 0, 0]])  # constant jump c = 0.1
    p = select_edge_params(Q1, Q2, EDGE, pair_constants(Q1, Q2), RHO0)
    jump = edge_jump(Q1, Q2, EDGE).integral
    assert jump == pytest.approx(0.1, rel=1e-9)
    ratios = []
    for k in range(3):
        pk = p.with_r(p.r / 2**k)
        ratios.append(strip_d2_integral(EdgeBlend(pk, Q1, Q2), res=256) / jump)
    assert max(ratios) / min(ratios) < 2
    assert all(np.isfinite(ratios))
    with pytest.raises(ValueError):
        p.with_r(2 * p.r)


def test_integrand_convention_is_entry_sum(mixed):
    Q1, Q2, _, p = mixed
    blend = EdgeBlend(p, Q1, Q2)
    pts = np.array([[0.0, 0.3], [0.5 * p.r, 0.7]])
    j = blend.chart_jet(pts).rotate_domain(p.chart_rotation.T)
    assert np.allclose(entry_sum(j.D2, 3), np.abs(j.D2).reshape(2, -1).sum(1))
