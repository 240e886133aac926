import math

import numpy as np
import pytest
from hypothesis import given, strategies as st

from hardypot.capacity import (
    Ball,
    Cap,
    CapacityProblem,
    CapacityQuadrature,
    SigmaCap,
    TargetSet,
    cap_dual_lower,
    cap_primal_upper,
    capacity_bounds,
    riesz_sigma_cap,
    vartheta,
)
from hardypot.geometry import DomainError, DomainModel, spectral_params

C1 = (-1.0, 0.0, 0.0)
C2 = (0.0, 1.0, 0.0)
FLOOR = 2.0**-9


@pytest.mark.parametrize(
    "p,ap,expected",
    [(2.0, 2.0, 0.5), (1.5, 2.0, 1.0), (1.5, 3.0, 2.0 / 3.0), (3.0, 2.0, 0.0)],
)
def test_vartheta_examples(p, ap, expected):
    assert vartheta(p, ap) == pytest.approx(expected, abs=1e-15)


@given(st.floats(1.1, 5.0), st.floats(1.01, 4.0))
def test_vartheta_zero_at_p_plus(ap, eps):
    assert vartheta((ap + 1) / (ap - 1), ap) == pytest.approx(0.0, abs=1e-12)


def test_vartheta_validation():
    with pytest.raises(DomainError):
        vartheta(1.0, 2.0)


def test_target_sample_nested():
    big = TargetSet([Cap(C1, 0.25)], floor=FLOOR)
    small = TargetSet([Cap(C1, 0.125)], floor=FLOOR)
    rows = {tuple(p) for p in big.points}
    assert all(tuple(p) in rows for p in small.points)


def test_target_floor_validation():
    with pytest.raises(DomainError):
        TargetSet([Cap(C1, 0.1)], floor=0.2)


@pytest.mark.parametrize("comp,dim", [(Cap(C1, 0.2), 2), (Ball((0.0, 0.0, 0.0), 0.3), 3)])
def test_target_weights_total(comp, dim):
    # weights integrate the flat measure of the component: radius^dim
    t = TargetSet([comp])
    assert t.weights.sum() == pytest.approx(comp.radius**dim, rel=1e-12)


def test_target_validation():
    with pytest.raises(DomainError):
        TargetSet([Cap((0.5, 0.0, 0.0), 0.1)])
    with pytest.raises(DomainError):
        TargetSet([Ball((0.9, 0.0, 0.0), 0.2)])
    with pytest.raises(DomainError):
        TargetSet([SigmaCap((0.0, 0.0, 0.0, 1.0), 0.1, 1)])


def test_sigma_cap_on_sigma():
    t = TargetSet([SigmaCap((1.0, 0.0, 0.0, 0.0), 0.1, 1)])
    np.testing.assert_allclose(np.linalg.norm(t.points, axis=1), 1.0, atol=1e-12)
    np.testing.assert_array_equal(t.points[:, 2:], 0.0)


@pytest.fixture(scope="module")
def setup3():
    dom = DomainModel(3, 0)
    par = spectral_params(dom, 2.0)
    p = 2.0
    args = dict(alpha=2 * par.alpha_minus, b=p + 1, theta=-par.alpha_minus * (p + 1), s=p / (p - 1))
    quad = CapacityQuadrature(dom, [C1, C2], args["b"], args["theta"])

    def problem(comps):
        return CapacityProblem(dom, TargetSet(comps, floor=FLOOR), quadrature=quad, **args)

    return dom, args, problem


def test_empty_set_zero(setup3):
    dom, args, _ = setup3
    prob = CapacityProblem(dom, TargetSet([]), **args)
    assert cap_dual_lower(prob).value == 0.0
    assert cap_primal_upper(prob).value == 0.0


def test_problem_validation(setup3):
    dom, args, _ = setup3
    with pytest.raises(DomainError):
        CapacityProblem(dom, TargetSet([]), **{**args, "s": 1.0})
    with pytest.raises(DomainError):
        CapacityProblem(dom, TargetSet([]), **{**args, "alpha": 4.0})


def test_sandwich_and_feasibility(setup3):
    _, _, problem = setup3
    prob = problem([Cap(C1, 0.125)])
    res = capacity_bounds(prob)
    assert 0 < res["lower"] <= res["upper"] <= 10 * res["lower"]
    hi = cap_primal_upper(prob)
    assert prob.potential(hi.phi).min() >= 1.0 - 1e-12
    assert hi.value == pytest.approx(prob.energy(hi.phi), rel=1e-12)


def test_monotone_exact(setup3):
    _, _, problem = setup3
    big = problem([Cap(C1, 0.25)])
    hb = cap_primal_upper(big)
    small = problem([Cap(C1, 0.125)])
    hs = cap_primal_upper(small, candidates=[hb.phi])
    assert hs.value <= hb.value
    assert cap_dual_lower(small).value <= cap_dual_lower(big).value


def test_subadditive_exact(setup3):
    _, _, problem = setup3
    ha = cap_primal_upper(problem([Cap(C1, 0.125)]))
    hb = cap_primal_upper(problem([Cap(C2, 0.125)]))
    union = problem([Cap(C1, 0.125), Cap(C2, 0.125)])
    hu = cap_primal_upper(union, candidates=[np.maximum(ha.phi, hb.phi)])
    assert hu.value <= ha.value + hb.value
    assert cap_dual_lower(union).value <= hu.value


def test_riesz_scaling_exact():
    # Cap(rE) = r^{k - theta s} Cap(E) holds exactly on the scaled grid
    k, theta, s = 2, 0.5, 2.0
    a = riesz_sigma_cap(k, 0.1, theta, s, n_grid=16)
    b = riesz_sigma_cap(k, 0.05, theta, s, n_grid=16)
    assert b[1] / a[1] == pytest.approx(0.5 ** (k - theta * s), rel=1e-9)
    assert b[0] / a[0] == pytest.approx(0.5 ** (k - theta * s), rel=1e-9)


def test_riesz_sandwich_and_refinement():
    lo, hi = riesz_sigma_cap(1, 0.1, 0.2, 2.0, n_grid=24)
    lo2, hi2 = riesz_sigma_cap(1, 0.1, 0.2, 2.0, n_grid=48)
    assert lo <= hi <= 1.2 * lo
    assert abs(hi2 - hi) / hi < 0.02


def test_riesz_monotone_in_radius():
    small = riesz_sigma_cap(1, 0.05, 0.2, 2.0)
    big = riesz_sigma_cap(1, 0.1, 0.2, 2.0)
    assert small[1] < big[1] and small[0] < big[0]


def test_riesz_two_components_exceed_one():
    one = riesz_sigma_cap(1, 0.1, 0.2, 2.0, n_grid=48, extent=8.0)
    two = riesz_sigma_cap(1, 0.1, 0.2, 2.0, n_grid=48, extent=8.0, centres=((0.0,), (0.5,)))
    assert two[0] > one[1]


@pytest.mark.parametrize("k,theta,s", [(1, 0.6, 2.0), (2, 2.0, 2.0), (1, 0.0, 2.0)])
def test_riesz_degenerate_raises(k, theta, s):
    with pytest.raises(DomainError):
        riesz_sigma_cap(k, 0.1, theta, s)


def test_riesz_consistency_on_sigma():
    # N_alpha capacity of Sigma caps against the Riesz capacity with exponent
    # vartheta: the ratio stays bounded across scales
    dom = DomainModel(4, 1)
    par = spectral_params(dom, 1.0)
    p = 2.0
    a, b, th, s = 2 * par.alpha_minus, p + 1, -par.alpha_minus * (p + 1), p / (p - 1)
    c = (1.0, 0.0, 0.0, 0.0)
    quad = CapacityQuadrature(dom, [c], b, th, n_r=80, n_dir=800, r_min=1e-6)
    ratios = []
    for r in (0.02, 0.01, 0.005):
        prob = CapacityProblem(dom, TargetSet([SigmaCap(c, r, 1)]), a, b, th, s, quadrature=quad)
        upper = cap_primal_upper(prob).value
        ratios.append(upper / riesz_sigma_cap(1, r, vartheta(p, par.alpha_plus), s)[1])
    assert max(ratios) / min(ratios) < 1.25
