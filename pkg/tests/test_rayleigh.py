import math

import pytest

from hardypot.geometry import DomainError, DomainModel
from hardypot.rayleigh import grid_operator, rayleigh_lambda_estimate

DOM = DomainModel(3, 0)


def test_dirichlet_eigenvalue_of_ball():
    # j_{1/2,1} = pi: first Dirichlet eigenvalue of the unit ball in R^3 is pi^2
    rep = rayleigh_lambda_estimate(DOM, 0.0, h=0.1)
    assert rep.value == pytest.approx(math.pi**2, rel=5e-3)
    assert abs(rep.delta) < 0.05
    assert rep.label == "estimate"


def test_estimate_decreases_with_mu():
    vals = [rayleigh_lambda_estimate(DOM, mu, h=0.2).value for mu in (0.0, 0.5, 1.0, 1.5, 2.0)]
    assert all(a > b for a, b in zip(vals, vals[1:]))


def test_near_critical_mu_stays_positive():
    coarse = rayleigh_lambda_estimate(DOM, 2.2, h=0.2)
    fine = rayleigh_lambda_estimate(DOM, 2.2, h=0.1)
    assert coarse.value > 0 and fine.value > 0


def test_grid_operator_sign_structure():
    # Shortley-Weller rows are not symmetric near the sphere, but off-diagonals are nonpositive
    import numpy as np

    A, _ = grid_operator(DOM, 0.0, 0.25)
    A = A.tocoo()
    off = A.row != A.col
    assert np.all(A.data[off] <= 0)
    assert np.all(A.diagonal() > 0)


@pytest.mark.parametrize("h", [0.0, 0.6])
def test_bad_spacing(h):
    with pytest.raises(DomainError):
        rayleigh_lambda_estimate(DOM, 0.0, h=h)


def test_warns_when_positivity_unsupported(monkeypatch):
    import hardypot.rayleigh as ray

    values = iter([(0.5, 3), (-0.1, 3)])
    monkeypatch.setattr(ray, "_smallest", lambda A, tol, max_iter: next(values))
    with pytest.warns(UserWarning, match="does not support"):
        rep = ray.rayleigh_lambda_estimate(DomainModel(3, 0), 2.0, h=0.5)
    assert rep.delta == pytest.approx(-0.6)
