import math

import numpy as np
import pytest

from hardypot.geometry import DomainError, DomainModel, dist_boundary, dist_sigma, spectral_params
from hardypot.structure import (
    LocalQuadrature,
    check_condition_24,
    check_doubling,
    check_quasimetric,
    check_volume_regimes,
    measure_ball,
    point_at,
    quasi_distance,
    volume_regimes,
)


def test_quasi_distance_zero_on_diagonal(dom3):
    x = np.array([[0.1, 0.2, 0.3]])
    assert quasi_distance(dom3, 1.0, x, x)[0] == 0.0


def test_quasi_distance_symmetric(dom3, par3):
    rng = np.random.default_rng(1)
    x = rng.uniform(-0.5, 0.5, (50, 3))
    y = rng.uniform(-0.5, 0.5, (50, 3))
    a = 2 * par3.alpha_minus
    np.testing.assert_allclose(quasi_distance(dom3, a, x, y), quasi_distance(dom3, a, y, x), rtol=1e-14)


def test_triangle_with_z_equal_x(dom3):
    # d(x,y) / (d(x,x) + d(x,y)) is exactly one
    rng = np.random.default_rng(2)
    x = rng.uniform(-0.5, 0.5, (20, 3))
    y = rng.uniform(-0.5, 0.5, (20, 3))
    dxy = quasi_distance(dom3, 2.0, x, y)
    ratio = dxy / (quasi_distance(dom3, 2.0, x, x) + quasi_distance(dom3, 2.0, x, y))
    np.testing.assert_allclose(ratio, 1.0)


def test_alpha_zero_deep_interior_bound():
    # far from the boundary and Sigma, 1/N_0 = |x-y|^N / max(|x-y|, d)^2 and
    # the triangle constant of t^{N-2} on small scales is at most 2^{N-3}
    dom = DomainModel(3, 0)
    rng = np.random.default_rng(3)
    n = 20000
    centre = np.array([-0.2, 0.0, 0.0])
    x = centre + rng.uniform(-0.05, 0.05, (n, 3))
    y = centre + rng.uniform(-0.05, 0.05, (n, 3))
    z = centre + rng.uniform(-0.05, 0.05, (n, 3))
    r = quasi_distance(dom, 0.0, x, y) / (quasi_distance(dom, 0.0, x, z) + quasi_distance(dom, 0.0, z, y))
    assert r.max() <= 2.0 ** (dom.N - 1)


@pytest.mark.parametrize("N,k,mu", [(3, 0, 2.0), (4, 1, 1.0), (5, 2, 1.5)])
def test_check_quasimetric_finite(N, k, mu):
    dom = DomainModel(N, k)
    par = spectral_params(dom, mu)
    rep = check_quasimetric(dom, 2 * par.alpha_minus, n_triples=5000, seed=0, stability=0.5)
    assert math.isfinite(rep.values["max_ratio"])
    assert rep.values["max_ratio"] >= 1.0 - 1e-12


def test_check_quasimetric_alpha_too_large(dom3):
    with pytest.raises(DomainError):
        check_quasimetric(dom3, 4.0, n_triples=10)


def test_point_at_distances():
    for dom in (DomainModel(3, 0), DomainModel(4, 1)):
        x = point_at(dom, 0.01, 0.2)
        assert dist_boundary(dom, x[None, :])[0] == pytest.approx(0.01, rel=1e-12)
        assert dist_sigma(dom, x[None, :])[0] == pytest.approx(0.2, rel=1e-9)


def test_point_at_validation(dom3):
    with pytest.raises(DomainError):
        point_at(dom3, 0.3, 0.1)


def test_euclidean_ball_mass_at_centre(dom3):
    # int_{|y|<s} (1 - |y|) dy = 4 pi (s^3/3 - s^4/4)
    s = np.array([0.05, 0.1, 0.2, 0.4])
    m = measure_ball(dom3, np.zeros(3), s, 1.0, 0.0, alpha=None, n_r=6000, n_dir=50)
    exact = 4 * math.pi * (s**3 / 3 - s**4 / 4)
    np.testing.assert_allclose(m, exact, rtol=1e-2)


def test_euclidean_ball_slope_N(dom3):
    s = np.logspace(-4, -2, 9)
    m = measure_ball(dom3, np.zeros(3), s, 1.0, 0.0, alpha=None, n_r=600, n_dir=300)
    slope = np.polyfit(np.log(s), np.log(m), 1)[0]
    assert slope == pytest.approx(3.0, abs=0.02)


def test_full_domain_mass(dom3):
    # int_B (1 - |y|) dy = pi/3
    quad = LocalQuadrature(dom3, np.zeros(3), 1.0, 0.0, None, n_r=800, n_dir=600)
    assert quad.mass(np.array([10.0]))[0] == pytest.approx(math.pi / 3, rel=1e-2)


def test_wolff_matches_direct_integral(dom3):
    quad = LocalQuadrature(dom3, np.zeros(3), 1.0, 0.0, None, n_r=400, n_dir=200)
    r = 0.3
    s = np.linspace(1e-6, r, 20001)
    direct = np.trapezoid(quad.mass(s) / s**2, s)
    assert float(quad.wolff(np.array(r))) == pytest.approx(direct, rel=1e-2)


def test_local_quadrature_validation(dom3):
    with pytest.raises(DomainError):
        LocalQuadrature(dom3, np.zeros(3), 0.0, 0.0, None)
    with pytest.raises(DomainError):
        LocalQuadrature(dom3, np.zeros(3), 1.0, -5.0, None)


def test_volume_regimes_breakpoints(dom3, par3):
    a = 2 * par3.alpha_minus
    x = point_at(dom3, 1e-3, 1e-1)
    reg = volume_regimes(dom3, x, 3.0, -3.0, a)
    assert [r[2] for r in reg] == pytest.approx([3.0, 2.0, 3.0])
    assert reg[0][1] == pytest.approx(1e-9 * 1e2, rel=1e-6)
    assert reg[1][1] == pytest.approx(0.1, rel=1e-6)


def test_check_volume_regimes_pass(dom3, par3):
    p = 2.0
    b, theta, a = p + 1, -par3.alpha_minus * (p + 1), 2 * par3.alpha_minus
    x = point_at(dom3, 1e-5, 1e-3)
    rep = check_volume_regimes(dom3, x, b, theta, a)
    assert rep.verdict == "pass", rep.values
    for f in rep.values["regimes"]:
        assert 0 < f["lower_constant"] <= f["upper_constant"]


def test_check_volume_regimes_theta_validation(dom3):
    with pytest.raises(DomainError):
        check_volume_regimes(dom3, np.zeros(3), 1.0, -10.0, 2.0)


def test_doubling_and_condition24(dom3, par3):
    p = 2.0
    b, theta, a = p + 1, -par3.alpha_minus * (p + 1), 2 * par3.alpha_minus
    rep = check_doubling(dom3, b, theta, a, n_centres=8, radii_per_centre=4)
    assert rep.passed and rep.values["max_ball_ratio"] >= 1.0
    rep24 = check_condition_24(dom3, b, theta, a, n_samples=6, n_y=2)
    assert rep24.passed
    assert rep24.as_dict()["pass"] is True
