"""Model domain, spectral parameters and reference weights.

The domain is the unit ball of R^N.  The singular set Sigma is the great
k-sphere ``{|x'| = 1, x'' = 0}`` of the boundary, where ``x'`` collects the
first ``k + 1`` coordinates.  Two cases are special:

* ``k == 0``: Sigma is the single point ``e_1`` (the "north pole");
* ``k == N - 1``: Sigma is the whole boundary sphere.

All distance functions accept arrays of shape ``(..., N)`` and are
vectorised over the leading axes.
"""
from __future__ import annotations

import math
from dataclasses import dataclass

import numpy as np

__all__ = [
    "DomainError",
    "DomainModel",
    "CriticalExponents",
    "SpectralParams",
    "WeightSpec",
    "alpha_pm",
    "critical_exponents",
    "spectral_params",
    "dist_boundary",
    "dist_sigma",
    "geodesic_to_sigma",
    "dist_sigma_tilde",
    "phi_surrogate",
    "cutoff_eta",
    "weight_W",
    "weight_Wtilde",
    "ExpansionReport",
    "strip_points",
    "check_distance_expansions",
]

_H2_RTOL = 1e-12


class DomainError(ValueError):
    """Raised when an argument lies outside the admissible parameter set."""


@dataclass(frozen=True)
class DomainModel:
    """Unit ball in R^N with a great k-subsphere Sigma on its boundary."""

    N: int
    k: int
    beta0: float = 0.25

    def __post_init__(self):
        if int(self.N) != self.N or self.N < 3:
            raise DomainError(f"N must be an integer >= 3, got {self.N}")
        if int(self.k) != self.k or not 0 <= self.k <= self.N - 1:
            raise DomainError(f"k must satisfy 0 <= k <= N-1, got {self.k}")
        if not 0.0 < self.beta0 <= 0.5:
            raise DomainError(f"beta0 must lie in (0, 1/2], got {self.beta0}")

    @property
    def H(self) -> float:
        return (self.N - self.k) / 2.0

    @property
    def volume(self) -> float:
        """Lebesgue measure of the unit ball."""
        return math.pi ** (self.N / 2) / math.gamma(self.N / 2 + 1)

    @property
    def sphere_area(self) -> float:
        """Surface measure of the unit sphere S^{N-1}."""
        return self.N * self.volume

    def sigma_point(self) -> np.ndarray:
        """A reference point of Sigma (``e_1``)."""
        e = np.zeros(self.N)
        e[0] = 1.0
        return e

    def far_boundary_point(self) -> np.ndarray:
        """A boundary point at maximal distance from Sigma."""
        e = np.zeros(self.N)
        if self.k == self.N - 1:
            raise DomainError("Sigma is the whole boundary; no point off Sigma")
        if self.k == 0:
            e[0] = -1.0
        else:
            e[-1] = 1.0
        return e

    def on_sigma(self, xi, atol: float = 1e-12) -> np.ndarray:
        """Boolean mask of boundary points lying on Sigma."""
        return dist_sigma(self, xi) <= atol


@dataclass(frozen=True)
class CriticalExponents:
    p_boundary: float
    p_sigma: float
    p_plus: float
    p_minus: float

    def as_dict(self) -> dict:
        return {
            "p_boundary": self.p_boundary,
            "p_sigma": self.p_sigma,
            "p_plus": self.p_plus,
            "p_minus": self.p_minus,
        }


@dataclass(frozen=True)
class SpectralParams:
    mu: float
    H: float
    alpha_minus: float
    alpha_plus: float
    critical: CriticalExponents
    lambda_estimate: float | None = None

    @property
    def critical_hardy(self) -> bool:
        """True when mu equals H^2 (logarithmic regime)."""
        return math.isclose(self.mu, self.H**2, rel_tol=_H2_RTOL, abs_tol=_H2_RTOL)


@dataclass(frozen=True)
class WeightSpec:
    """Cut-off used to blend W into the constant 1 away from Sigma."""

    beta0: float = 0.25
    log_case: bool = False

    def eta(self, dtilde):
        return cutoff_eta(dtilde, self.beta0)


def alpha_pm(mu: float, N: int, k: int) -> tuple[float, float]:
    """Roots of ``a^2 - (N-k) a + mu = 0``.

    Raises :class:`DomainError` when ``mu > ((N-k)/2)^2``.
    """
    H = (N - k) / 2.0
    disc = H * H - mu
    if disc < 0:
        if disc >= -_H2_RTOL * max(1.0, H * H):
            disc = 0.0
        else:
            raise DomainError(f"supercritical Hardy parameter mu={mu} > H^2={H * H}")
    root = math.sqrt(disc)
    if root == 0.0:
        return H, H
    # product form for the small root avoids cancellation when mu << H^2
    a_plus = H + root
    a_minus = mu / a_plus
    return a_minus, a_plus


def critical_exponents(N: int, alpha_minus: float, alpha_plus: float) -> CriticalExponents:
    inf = math.inf
    p_boundary = (N + 1) / (N - 1)
    p_sigma = inf if alpha_minus >= N - 1 else (N - alpha_minus + 1) / (N - alpha_minus - 1)
    p_plus = inf if alpha_plus <= 1 else (alpha_plus + 1) / (alpha_plus - 1)
    p_minus = inf if alpha_minus <= 1 else (alpha_minus + 1) / (alpha_minus - 1)
    return CriticalExponents(p_boundary, p_sigma, p_plus, p_minus)


def spectral_params(domain: DomainModel, mu: float) -> SpectralParams:
    am, ap = alpha_pm(mu, domain.N, domain.k)
    return SpectralParams(
        mu=float(mu),
        H=domain.H,
        alpha_minus=am,
        alpha_plus=ap,
        critical=critical_exponents(domain.N, am, ap),
    )


def _norm(x):
    return np.sqrt(np.einsum("...i,...i->...", x, x))


def dist_boundary(domain: DomainModel, x) -> np.ndarray:
    """``1 - |x|``."""
    x = np.asarray(x, dtype=float)
    return 1.0 - _norm(x)


def dist_sigma(domain: DomainModel, x) -> np.ndarray:
    """Euclidean distance to Sigma."""
    x = np.asarray(x, dtype=float)
    N, k = domain.N, domain.k
    if k == N - 1:
        return np.abs(1.0 - _norm(x))
    if k == 0:
        e = np.zeros(N)
        e[0] = 1.0
        return _norm(x - e)
    xp = _norm(x[..., : k + 1])
    xpp = _norm(x[..., k + 1 :])
    return np.sqrt((xp - 1.0) ** 2 + xpp**2)


def geodesic_to_sigma(domain: DomainModel, xi) -> np.ndarray:
    """Geodesic distance on the unit sphere from the direction of ``xi`` to Sigma."""
    xi = np.asarray(xi, dtype=float)
    r = _norm(xi)
    N, k = domain.N, domain.k
    if k == N - 1:
        return np.zeros_like(r)
    # atan2 stays well conditioned near Sigma, where arccos loses half the digits
    par = xi[..., 0] if k == 0 else _norm(xi[..., : k + 1])
    perp = _norm(xi[..., k + 1 :])
    return np.arctan2(perp, par)


def dist_sigma_tilde(domain: DomainModel, x, *, strict: bool = True) -> np.ndarray:
    """Distance-like function ``sqrt(geo^2 + (1-|x|)^2)``.

    ``geo`` is the boundary geodesic distance from the radial projection
    ``x/|x|`` to Sigma.  With ``strict`` the point must be interior and
    different from the origin.
    """
    x = np.asarray(x, dtype=float)
    r = _norm(x)
    if strict and (np.any(r <= 0.0) or np.any(r >= 1.0)):
        raise DomainError("dist_sigma_tilde needs 0 < |x| < 1")
    geo = geodesic_to_sigma(domain, x)
    return np.sqrt(geo**2 + (1.0 - r) ** 2)


def phi_surrogate(domain: DomainModel, params: SpectralParams, x) -> np.ndarray:
    """``d_bdry * d_Sigma^{-alpha_minus}``, the profile of the first eigenfunction."""
    d = dist_boundary(domain, x)
    ds = dist_sigma(domain, x)
    if np.any(d <= 0.0):
        raise DomainError("phi_surrogate needs interior points")
    if np.any(ds <= 0.0):
        raise DomainError("phi_surrogate is infinite on Sigma")
    return d * ds ** (-params.alpha_minus)


def _smootherstep(t):
    t = np.clip(t, 0.0, 1.0)
    return t * t * t * (t * (6.0 * t - 15.0) + 10.0)


def cutoff_eta(dtilde, beta0: float) -> np.ndarray:
    """C^2 cut-off: 1 below ``beta0/4``, 0 above ``beta0/2``."""
    q = beta0 / 4.0
    return 1.0 - _smootherstep((np.asarray(dtilde, dtype=float) - q) / q)


def weight_W(domain: DomainModel, params: SpectralParams, spec: WeightSpec | None, x) -> np.ndarray:
    """Boundary growth profile ``(d + dt^2) dt^{-alpha_plus}``.

    In the logarithmic regime ``mu = H^2`` the profile is
    ``(d + dt^2) d_Sigma^{-H} |ln dt|``.  ``spec`` is accepted for symmetry
    with :func:`weight_Wtilde` and may be ``None``.
    """
    x = np.asarray(x, dtype=float)
    if params.mu > params.H**2 * (1 + _H2_RTOL):
        raise DomainError("weight_W requires mu <= H^2")
    d = dist_boundary(domain, x)
    dt = dist_sigma_tilde(domain, x)
    if params.critical_hardy:
        if np.any(dt >= 1.0):
            raise DomainError("logarithmic weight needs dist_sigma_tilde < 1")
        ds = dist_sigma(domain, x)
        return (d + dt**2) * ds ** (-params.H) * np.abs(np.log(dt))
    return (d + dt**2) * dt ** (-params.alpha_plus)


def weight_Wtilde(domain: DomainModel, params: SpectralParams, spec: WeightSpec | None, x) -> np.ndarray:
    """``(1 - eta) + eta * W``; equals 1 away from the Sigma tube."""
    spec = spec or WeightSpec(beta0=domain.beta0, log_case=params.critical_hardy)
    x = np.asarray(x, dtype=float)
    r = _norm(x)
    out = np.ones(r.shape)
    # eta vanishes wherever dist_sigma_tilde >= beta0/2, in particular for |x| <= 1/2
    near = (r > 0.5) & (r < 1.0)
    if np.any(near):
        xn = x[near]
        dt = dist_sigma_tilde(domain, xn)
        eta = spec.eta(dt)
        active = eta > 0.0
        vals = np.ones(dt.shape)
        if np.any(active):
            W = weight_W(domain, params, spec, xn[active])
            vals[active] = (1.0 - eta[active]) + eta[active] * W
        out[near] = vals
    return out if out.ndim else float(out)


@dataclass
class ExpansionReport:
    """Fitted constants for the near-Sigma expansions of ``dist_sigma_tilde``."""

    c_grad: float
    c_lap: float
    cross_max: float
    ratio_range: tuple[float, float]
    n_points: int

    def as_dict(self) -> dict:
        return {
            "c_grad": self.c_grad,
            "c_lap": self.c_lap,
            "cross_max": self.cross_max,
            "ratio_range": list(self.ratio_range),
            "n_points": self.n_points,
        }


def strip_points(domain: DomainModel, n: int, rng, width: float, d_min: float = 1e-3) -> np.ndarray:
    """Random points with ``d_min <= d_bdry < 1/2`` and ``dist_sigma_tilde < width``."""
    N, k = domain.N, domain.k
    out = []
    have = 0
    while have < n:
        m = 4 * (n - have) + 64
        d = np.exp(rng.uniform(np.log(d_min), np.log(0.5), m))
        geo = rng.uniform(0.0, width, m)
        # boundary point at geodesic distance geo from Sigma
        xi = np.zeros((m, N))
        if k == N - 1:
            g = rng.normal(size=(m, N))
            xi = g / np.linalg.norm(g, axis=1)[:, None]
        else:
            a = rng.normal(size=(m, k + 1))
            a /= np.linalg.norm(a, axis=1)[:, None]
            b = rng.normal(size=(m, N - k - 1))
            b /= np.linalg.norm(b, axis=1)[:, None]
            xi[:, : k + 1] = np.cos(geo)[:, None] * a
            xi[:, k + 1 :] = np.sin(geo)[:, None] * b
        x = (1.0 - d)[:, None] * xi
        keep = dist_sigma_tilde(domain, x) < width
        out.append(x[keep])
        have += int(keep.sum())
    return np.concatenate(out)[:n]


def check_distance_expansions(domain: DomainModel, n: int = 2000, seed: int = 0, width: float | None = None) -> ExpansionReport:
    """Central-difference check of the expansions of ``dist_sigma_tilde``.

    Fits ``C`` in ``||grad dt|^2 - 1| <= C dt`` and
    ``|dt Lap dt - (N-k-1)| <= C dt`` and records the largest deviation of
    ``grad d . grad dt`` from ``d / dt``.  The step per point is
    ``1e-4 * min(d, d_Sigma)``.
    """
    rng = np.random.default_rng(seed)
    width = domain.beta0 if width is None else width
    x = strip_points(domain, n, rng, width)
    N = domain.N
    d = dist_boundary(domain, x)
    h = 1e-4 * np.minimum(d, dist_sigma(domain, x))
    f0 = dist_sigma_tilde(domain, x)
    grad = np.zeros_like(x)
    gd = np.zeros_like(x)
    lap = np.zeros(x.shape[0])
    for c in range(N):
        e = np.zeros(N)
        e[c] = 1.0
        xp = x + h[:, None] * e
        xm = x - h[:, None] * e
        fp = dist_sigma_tilde(domain, xp)
        fm = dist_sigma_tilde(domain, xm)
        grad[:, c] = (fp - fm) / (2 * h)
        gd[:, c] = (dist_boundary(domain, xp) - dist_boundary(domain, xm)) / (2 * h)
        lap += (fp - 2 * f0 + fm) / h**2
    g2 = np.einsum("ij,ij->i", grad, grad)
    cross = np.abs(np.einsum("ij,ij->i", gd, grad) - d / f0)
    ratio = f0 / dist_sigma(domain, x)
    return ExpansionReport(
        c_grad=float(np.max(np.abs(g2 - 1.0) / f0)),
        c_lap=float(np.max(np.abs(f0 * lap - (N - domain.k - 1)) / f0)),
        cross_max=float(np.max(cross)),
        ratio_range=(float(ratio.min()), float(ratio.max())),
        n_points=int(x.shape[0]),
    )
