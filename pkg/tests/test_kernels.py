import numpy as np
import pytest
from hypothesis import given
from hypothesis import strategies as st

from hardypot.geometry import DomainError, DomainModel, dist_boundary, dist_sigma, phi_surrogate, spectral_params
from hardypot.kernels import (
    VARIANTS,
    KernelSingularityError,
    KernelSpec,
    eps_kernel,
    evaluate,
    green_est,
    green_terms,
    martin_est,
    n_alpha,
    quasi_dist,
)

from .conftest import ball_points

DOM = DomainModel(3, 0)
PAR2 = spectral_params(DOM, 2.0)
PAR0 = spectral_params(DOM, 0.0)
PARH = spectral_params(DOM, 2.25)


def _pairs(N=3, n=10_000, seed=0):
    rng = np.random.default_rng(seed)
    return ball_points(N, n, rng), ball_points(N, n, rng)


@pytest.mark.parametrize("par", [PAR0, PAR2, PARH], ids=["mu0", "mu2", "muH2"])
def test_green_symmetric_and_positive(par):
    x, y = _pairs()
    spec = KernelSpec("green", DOM, par)
    g1, g2 = green_est(spec, x, y), green_est(spec, y, x)
    assert np.all(g1 > 0)
    assert np.allclose(g1, g2, rtol=1e-13, atol=0)


def test_green_reduces_at_mu_zero():
    x, y = _pairs()
    r = np.linalg.norm(x - y, axis=1)
    ref = np.minimum(r ** (2 - 3), dist_boundary(DOM, x) * dist_boundary(DOM, y) * r**-3)
    assert np.allclose(green_est(KernelSpec("green", DOM, PAR0), x, y), ref, rtol=1e-13)


def test_green_far_field_slope():
    # two points at depth 1e-6 separated along the far side of the sphere
    t = np.logspace(-3, -1, 9)
    d = 1e-6
    xi = np.stack([-np.cos(t / 2), np.sin(t / 2), 0 * t], axis=1)
    eta = np.stack([-np.cos(t / 2), -np.sin(t / 2), 0 * t], axis=1)
    x, y = (1 - d) * xi, (1 - d) * eta
    r = np.linalg.norm(x - y, axis=1)
    g = green_est(KernelSpec("green", DOM, PAR2), x, y)
    slope = np.polyfit(np.log(r), np.log(g), 1)[0]
    assert slope == pytest.approx(-3.0, rel=0.05)


def test_green_log_case_has_second_term():
    x, y = _pairs(n=100)
    t1, t2 = green_terms(KernelSpec("green", DOM, PARH), x, y)
    assert np.all(t2 > 0)
    _, z2 = green_terms(KernelSpec("green", DOM, PAR2), x, y)
    assert np.all(z2 == 0)


def test_coincident_points_raise():
    x = np.array([0.1, 0.2, 0.3])
    for v in ("green", "n_alpha"):
        with pytest.raises(KernelSingularityError):
            evaluate(KernelSpec(v, DOM, PAR2, alpha=2.0), x, x)
    assert quasi_dist(KernelSpec("quasi_dist", DOM, PAR2, alpha=2.0), x, x) == 0.0


def test_martin_reduces_at_mu_zero():
    rng = np.random.default_rng(1)
    x = ball_points(3, 1000, rng)
    xi = rng.normal(size=(1000, 3))
    xi /= np.linalg.norm(xi, axis=1)[:, None]
    ref = dist_boundary(DOM, x) / np.linalg.norm(x - xi, axis=1) ** 3
    assert np.allclose(martin_est(KernelSpec("martin", DOM, PAR0), x, xi), ref, rtol=1e-13)


@pytest.mark.parametrize("par", [PAR2, spectral_params(DOM, 1.0)])
def test_martin_normal_cone_slope(par):
    t = np.logspace(-6, -2, 9)
    x = (1 - t)[:, None] * DOM.sigma_point()
    K = martin_est(KernelSpec("martin", DOM, par), x, DOM.sigma_point())
    slope = np.polyfit(np.log(t), np.log(K), 1)[0]
    assert slope == pytest.approx(1 - 3 + par.alpha_minus, abs=1e-9)


def test_martin_finite_off_sigma():
    K = martin_est(KernelSpec("martin", DOM, PAR2), np.zeros(3), DOM.far_boundary_point())
    assert np.isfinite(K) and K > 0


def test_nalpha_hand_value():
    # |x - y| = 0.1 < d = 0.5 for both points, alpha = 0
    x = np.array([0.0, 0.0, 0.0])
    y = np.array([0.1, 0.0, 0.0])
    val = n_alpha(KernelSpec("n_alpha", DOM, PAR2, alpha=0.0), x, y)
    assert val == pytest.approx(1.0 / (0.1 * 1.0**2))
    # y' = -0.1 e1: d_Sigma(y') = 1.1 is the largest of the three terms
    val2 = n_alpha(KernelSpec("n_alpha", DOM, PAR2, alpha=2.0), x, -y)
    assert val2 == pytest.approx(1.1**2 / (0.1 * 1.0**2))


@given(st.floats(0.0, 3.0))
def test_nalpha_symmetric(alpha):
    x, y = _pairs(n=500, seed=3)
    spec = KernelSpec("n_alpha", DOM, PAR2, alpha=alpha)
    a, b = n_alpha(spec, x, y), n_alpha(spec, y, x)
    assert np.all(a > 0)
    assert np.allclose(a, b, rtol=1e-13)
    q = quasi_dist(KernelSpec("quasi_dist", DOM, PAR2, alpha=alpha), x, y)
    assert np.allclose(q * a, 1.0)


@pytest.mark.parametrize("mu", [0.5, 1.0, 2.0])
def test_green_matches_phi_phi_nalpha(mu):
    par = spectral_params(DOM, mu)
    x, y = _pairs()
    g = green_est(KernelSpec("green", DOM, par), x, y)
    na = n_alpha(KernelSpec("n_alpha", DOM, par, alpha=2 * par.alpha_minus), x, y)
    d_x, d_y = dist_boundary(DOM, x), dist_boundary(DOM, y)
    ratio = g / (d_x * d_y * (dist_sigma(DOM, x) * dist_sigma(DOM, y)) ** -par.alpha_minus * na)
    c = max(ratio.max(), 1 / ratio.min())
    assert c < 64
    assert np.allclose(phi_surrogate(DOM, par, x), d_x * dist_sigma(DOM, x) ** -par.alpha_minus)


@pytest.mark.parametrize("eps", [0.25, 1.0, 1.75])
def test_eps_chain(eps):
    x, y = _pairs(seed=4)
    g = green_est(KernelSpec("green", DOM, PARH), x, y)
    ge = eps_kernel(KernelSpec("g_h2_eps", DOM, PARH, eps=eps), x, y)
    gt = eps_kernel(KernelSpec("g_tilde_h2_eps", DOM, PARH, eps=eps), x, y)
    assert np.max(g / ge) < 50
    assert np.max(ge / gt) < 50


def test_eps_factor_tends_to_one():
    x, y = _pairs(n=200, seed=5)
    mx = np.maximum(np.linalg.norm(x - y, axis=1), np.maximum(dist_boundary(DOM, x), dist_boundary(DOM, y)))
    dev = [np.max(np.abs(mx ** (-e) - 1.0)) for e in (1.0, 0.1, 0.01, 0.001)]
    assert all(a > b for a, b in zip(dev, dev[1:]))
    assert dev[-1] < 0.05


@pytest.mark.parametrize("variant", ["n_one_eps", "n_Nminus_eps", "g_h2_eps", "g_tilde_h2_eps"])
def test_eps_variants_symmetric(variant):
    x, y = _pairs(n=2000, seed=6)
    spec = KernelSpec(variant, DOM, PARH, eps=0.5)
    assert np.allclose(eps_kernel(spec, x, y), eps_kernel(spec, y, x), rtol=1e-13)


def test_k_eps_kernel_matches_martin_order():
    # K_{H^2, eps} is comparable with the Martin kernel near Sigma
    t = np.logspace(-5, -2, 7)
    x = (1 - t)[:, None] * DOM.sigma_point() + t[:, None] * np.array([0.0, 0.5, 0.0])
    xi = np.tile(DOM.sigma_point(), (7, 1))
    k = eps_kernel(KernelSpec("k_h2_eps", DOM, PARH, eps=0.5), x, xi)
    m = martin_est(KernelSpec("martin", DOM, PARH), x, xi)
    assert np.all(k > 0) and np.all(np.isfinite(m / k))


@pytest.mark.parametrize(
    "variant,kw,par",
    [
        ("n_alpha", {}, PAR2),
        ("n_alpha", {"alpha": 4.0}, PAR2),
        ("g_h2_eps", {"eps": 0.5}, PAR2),
        ("g_h2_eps", {"eps": 2.0}, PARH),
        ("nonsense", {}, PAR2),
    ],
)
def test_spec_validation(variant, kw, par):
    with pytest.raises(DomainError):
        KernelSpec(variant, DOM, par, **kw)


def test_branch_selection_total():
    for mu in np.linspace(0, 2.25, 10):
        par = spectral_params(DOM, mu)
        br = KernelSpec("green", DOM, par).branch
        assert br == ("log" if par.critical_hardy else "power")
    assert set(VARIANTS) >= {"green", "martin", "k_h2_eps"}
