"""Explicit two-sided kernel formulas evaluated with implicit constant 1.

Every kernel here is written in terms of a handful of point features:
``r = |x - y|``, the boundary distances ``dx, dy`` and the distances to
Sigma ``sx, sy``.  The ``*_features`` functions operate on arrays of those
features and are shared with the block backends in :mod:`hardypot.backend`.

On the model ball the quantity ``|x|`` appearing in the point-singularity
formulas (Sigma = {0} in a flat chart) becomes ``d_Sigma(x)``.
"""
from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from .geometry import DomainError, DomainModel, SpectralParams, dist_boundary, dist_sigma

__all__ = [
    "VARIANTS",
    "KernelSpec",
    "KernelSingularityError",
    "green_features",
    "green_terms_features",
    "martin_features",
    "nalpha_features",
    "green_est",
    "green_terms",
    "martin_est",
    "n_alpha",
    "quasi_dist",
    "eps_kernel",
    "evaluate",
]

VARIANTS = (
    "green",
    "martin",
    "n_alpha",
    "quasi_dist",
    "n_one_eps",
    "n_Nminus_eps",
    "g_h2_eps",
    "g_tilde_h2_eps",
    "k_h2_eps",
)
_EPS_VARIANTS = VARIANTS[4:]
_LOG_FLOOR = 1e-300


class KernelSingularityError(ValueError):
    """Raised when a kernel is evaluated on its diagonal."""


@dataclass(frozen=True)
class KernelSpec:
    variant: str
    domain: DomainModel
    params: SpectralParams
    alpha: float | None = None
    eps: float | None = None

    def __post_init__(self):
        if self.variant not in VARIANTS:
            raise DomainError(f"unknown kernel variant {self.variant!r}")
        if self.variant in ("n_alpha", "quasi_dist"):
            if self.alpha is None:
                raise DomainError(f"{self.variant} needs alpha")
            if self.alpha > self.domain.N:
                raise DomainError("alpha must not exceed N")
        if self.variant in _EPS_VARIANTS:
            if self.eps is None or not 0.0 < self.eps < 2.0:
                raise DomainError("eps must lie in (0, 2)")
            if not self.log_case:
                raise DomainError("eps kernels need k = 0 and mu = N^2/4")

    @property
    def log_case(self) -> bool:
        """Point singularity at the critical Hardy constant."""
        return self.domain.k == 0 and self.params.critical_hardy

    @property
    def branch(self) -> str:
        if self.variant in ("green", "martin"):
            return "log" if self.log_case else "power"
        return self.variant


def _features(domain, x, y):
    x = np.asarray(x, dtype=float)
    y = np.asarray(y, dtype=float)
    diff = x - y
    r = np.sqrt(np.einsum("...i,...i->...", diff, diff))
    return r, dist_boundary(domain, x), dist_boundary(domain, y), dist_sigma(domain, x), dist_sigma(domain, y)


def _check_offdiag(r):
    if np.any(r <= 0.0):
        raise KernelSingularityError("kernel evaluated at coincident points")


def _abs_log(t):
    t = np.asarray(t, dtype=float)
    if np.any(t < _LOG_FLOOR):
        raise DomainError("logarithm argument below 1e-300")
    return np.abs(np.log(t))


def green_terms_features(r, dx, dy, sx, sy, alpha_minus, N, log_case=False):
    """Return the two addends of the Green estimate.

    The second addend is zero outside the logarithmic case.
    """
    base = np.minimum(r ** (2.0 - N), dx * dy * r ** (-float(N)))
    a = N / 2.0 if log_case else alpha_minus
    if a != 0.0:
        base = base * (((sx + r) * (sy + r)) / (sx * sy)) ** a
    if not log_case:
        return base, np.zeros_like(base)
    arg = np.minimum(r ** -2.0, 1.0 / (dx * dy))
    extra = dx * dy / (sx * sy) ** (N / 2.0) * _abs_log(arg)
    return base, extra


def green_features(r, dx, dy, sx, sy, alpha_minus, N, log_case=False):
    t1, t2 = green_terms_features(r, dx, dy, sx, sy, alpha_minus, N, log_case)
    return t1 + t2


def martin_features(r, dx, sx, alpha_minus, N, log_case=False):
    a = N / 2.0 if log_case else alpha_minus
    val = dx * r ** (-float(N))
    if a != 0.0:
        val = val * ((sx + r) ** 2 / sx) ** a
    if log_case:
        val = val + dx / sx ** (N / 2.0) * _abs_log(r)
    return val


def nalpha_features(r, dx, dy, sx, sy, alpha, N):
    num = np.maximum(np.maximum(r, sx), sy) ** alpha
    den = r ** (N - 2.0) * np.maximum(np.maximum(r, dx), dy) ** 2
    return num / den


def green_est(spec: KernelSpec, x, y):
    """Green kernel estimate; symmetric and positive."""
    r, dx, dy, sx, sy = _features(spec.domain, x, y)
    _check_offdiag(r)
    return green_features(r, dx, dy, sx, sy, spec.params.alpha_minus, spec.domain.N, spec.log_case)


def green_terms(spec: KernelSpec, x, y):
    """Both addends of the Green estimate, for inspection in the log case."""
    r, dx, dy, sx, sy = _features(spec.domain, x, y)
    _check_offdiag(r)
    return green_terms_features(r, dx, dy, sx, sy, spec.params.alpha_minus, spec.domain.N, spec.log_case)


def martin_est(spec: KernelSpec, x, xi):
    """Martin kernel estimate at interior ``x`` and boundary point ``xi``."""
    x = np.asarray(x, dtype=float)
    xi = np.asarray(xi, dtype=float)
    diff = x - xi
    r = np.sqrt(np.einsum("...i,...i->...", diff, diff))
    _check_offdiag(r)
    dx = dist_boundary(spec.domain, x)
    sx = dist_sigma(spec.domain, x)
    return martin_features(r, dx, sx, spec.params.alpha_minus, spec.domain.N, spec.log_case)


def _alpha(spec, alpha):
    a = spec.alpha if alpha is None else alpha
    if a is None:
        a = 2.0 * spec.params.alpha_minus
    return float(a)


def n_alpha(spec: KernelSpec, x, y, alpha: float | None = None):
    """Kernel ``max{r, sx, sy}^alpha / (r^{N-2} max{r, dx, dy}^2)``."""
    r, dx, dy, sx, sy = _features(spec.domain, x, y)
    _check_offdiag(r)
    return nalpha_features(r, dx, dy, sx, sy, _alpha(spec, alpha), spec.domain.N)


def quasi_dist(spec: KernelSpec, x, y, alpha: float | None = None):
    """Reciprocal of :func:`n_alpha`; zero on the diagonal."""
    r, dx, dy, sx, sy = _features(spec.domain, x, y)
    out = np.zeros(np.shape(r))
    off = r > 0
    if np.ndim(r) == 0:
        if off:
            out = 1.0 / nalpha_features(r, dx, dy, sx, sy, _alpha(spec, alpha), spec.domain.N)
        return float(out)
    out[off] = 1.0 / nalpha_features(
        r[off], dx[off], dy[off], sx[off], sy[off], _alpha(spec, alpha), spec.domain.N
    )
    return out


def eps_kernel(spec: KernelSpec, x, y):
    """Regularised kernels used at ``k = 0``, ``mu = N^2/4``.

    For ``k_h2_eps`` the second argument is a boundary point.
    """
    if spec.variant not in _EPS_VARIANTS:
        raise DomainError(f"{spec.variant} is not an eps kernel")
    N = spec.domain.N
    eps = spec.eps
    r, dx, dy, sx, sy = _features(spec.domain, x, y)
    _check_offdiag(r)
    mx = np.maximum(np.maximum(r, dx), dy)
    ms = np.maximum(np.maximum(r, sx), sy)
    n_nme = ms ** (N - eps) / (r ** (N - 2.0) * mx**2)
    v = spec.variant
    if v == "n_Nminus_eps":
        return n_nme
    if v == "n_one_eps":
        return ms**N / (r ** (N - 2.0) * mx**2) + mx ** (-eps)
    if v == "g_h2_eps":
        t1 = r ** (2.0 - N) * np.minimum(1.0, dx * dy / r**2) * np.minimum(1.0, sx * sy / r**2) ** (-N / 2.0)
        return t1 + dx * dy / (sx * sy) ** (N / 2.0) * mx ** (-eps)
    if v == "g_tilde_h2_eps":
        return dx * dy * (sx * sy) ** (-N / 2.0) * n_nme
    # k_h2_eps: boundary point y has dy = 0
    return dx * sx ** (-N / 2.0) * n_nme


def evaluate(spec: KernelSpec, x, y):
    """Evaluate ``spec`` at ``(x, y)`` and return ``(value, branch)``."""
    v = spec.variant
    if v == "green":
        val = green_est(spec, x, y)
    elif v == "martin":
        val = martin_est(spec, x, y)
    elif v == "n_alpha":
        val = n_alpha(spec, x, y)
    elif v == "quasi_dist":
        val = quasi_dist(spec, x, y)
    else:
        val = eps_kernel(spec, x, y)
    return val, spec.branch

