"""Local barrier supersolutions near a boundary point and Keller-Osserman checks.

The barrier on ``{x : d_z(x) < R}`` is::

    w = Lambda (R^2 - d_z^2)^{-b} exp(M d) d  dt^{-gamma}                 (mu < H^2)
    w = Lambda (R^2 - d_z^2)^{-b} exp(M d) d  dt^{-H} sqrt(-ln(dt/(16 R0)))   (mu = H^2)

with ``d_z(x) = sqrt(d(x)^2 + |x/|x| - z|^2)`` and ``dt`` the tilde distance
to Sigma.  The supersolution inequality ``-Delta w - mu w / d_Sigma^2 + w^p >= 0``
is checked with central differences at multi-scale probes, each with its
own step ``h = c * (local length scale)``.  Because ``Lambda`` is searched
over powers of two, ``FD[Lambda w] = Lambda FD[w]`` holds bit for bit, so
one set of differences verifies every candidate exactly.
"""
from __future__ import annotations

import math
from dataclasses import dataclass, field

import numpy as np

from .geometry import (
    DomainError,
    DomainModel,
    SpectralParams,
    dist_boundary,
    dist_sigma,
    cutoff_eta,
    dist_sigma_tilde,
    geodesic_to_sigma,
)
from .measures import Field
from .structure import CheckReport

__all__ = [
    "BarrierSpec",
    "BarrierField",
    "BarrierConstructionError",
    "dz_distance",
    "default_radius",
    "b_threshold",
    "build_barrier",
    "barrier_probes",
    "supersolution_residual",
    "verify_supersolution",
    "boundary_ratio_check",
    "ko_check",
    "ko_stability",
]

EPS = np.finfo(float).eps


class BarrierConstructionError(RuntimeError):
    pass


def default_radius(domain: DomainModel) -> float:
    """``beta_2 / 2`` with ``beta_2 = min(beta_1, beta_0) / 16`` and ``beta_1 = beta_0``."""
    return domain.beta0 / 32.0


def b_threshold(p: float, gamma: float) -> float:
    """``(2(p+1) - 2(p-1) min(gamma, 0)) / (p-1)``; ``b`` must exceed it."""
    return (2.0 * (p + 1.0) - 2.0 * (p - 1.0) * min(gamma, 0.0)) / (p - 1.0)


def dz_distance(domain: DomainModel, x, z) -> np.ndarray:
    """``sqrt(d(x)^2 + |x/|x| - z|^2)`` for ``x`` in the boundary strip."""
    x = np.asarray(x, dtype=float)
    z = np.asarray(z, dtype=float)
    r = np.linalg.norm(x, axis=-1)
    d = 1.0 - r
    if np.any(d >= domain.beta0) or np.any(d < 0):
        raise DomainError("dz_distance needs 0 <= d < beta0")
    proj = x / r[..., None]
    return np.sqrt(d**2 + np.sum((proj - z) ** 2, axis=-1))


@dataclass(frozen=True)
class BarrierSpec:
    z: tuple
    R: float
    gamma: float
    b: float
    M: float
    Lambda: float = 1.0
    log_case: bool = False
    R0: float | None = None

    def validate(self, domain: DomainModel, params: SpectralParams, p: float):
        if not 0 < self.R <= 2.0 * default_radius(domain):
            raise DomainError("R must lie in (0, beta_2]")
        if not self.M < 0:
            raise DomainError("M must be negative")
        if not self.Lambda > 0:
            raise DomainError("Lambda must be positive")
        if self.log_case != params.critical_hardy:
            raise DomainError("log_case must match mu = H^2")
        if not self.log_case and not params.alpha_minus < self.gamma < params.alpha_plus:
            raise DomainError("gamma must lie strictly between alpha_- and alpha_+")
        if not self.b > b_threshold(p, self.gamma):
            raise DomainError("b must exceed the threshold b_0")
        z = np.asarray(self.z, dtype=float)
        if abs(np.linalg.norm(z) - 1.0) > 1e-12:
            raise DomainError("z must be a boundary point")

    @classmethod
    def default(cls, domain: DomainModel, params: SpectralParams, p: float, z=None, R=None, gamma=None, **kw):
        z = domain.sigma_point() if z is None else np.asarray(z, dtype=float)
        gamma = domain.H if gamma is None else gamma
        b = b_threshold(p, gamma) + 1.0
        R = default_radius(domain) if R is None else R
        return cls(tuple(float(v) for v in z), R, gamma, b, -(domain.N - 1.0), log_case=params.critical_hardy,
                   R0=2.0 * default_radius(domain), **kw)


@dataclass
class BarrierField:
    domain: DomainModel
    params: SpectralParams
    p: float
    spec: BarrierSpec
    search: list = field(default_factory=list)

    def __call__(self, x) -> np.ndarray:
        return self.spec.Lambda * _profile(self.domain, self.spec, x)

    def inside(self, x) -> np.ndarray:
        return dz_distance(self.domain, x, self.spec.z) < self.spec.R


def _profile(domain, spec, x):
    x = np.asarray(x, dtype=float)
    d = dist_boundary(domain, x)
    dz = dz_distance(domain, x, spec.z)
    dt = dist_sigma_tilde(domain, x)
    with np.errstate(invalid="ignore", divide="ignore"):
        core = (spec.R**2 - dz**2) ** (-spec.b) * np.exp(spec.M * d) * d
        if spec.log_case:
            return core * dt ** (-domain.H) * np.sqrt(-np.log(dt / (16.0 * spec.R0)))
        return core * dt ** (-spec.gamma)


def barrier_probes(domain: DomainModel, spec: BarrierSpec, n: int, seed: int = 0, depth_decades: float = 3.0) -> np.ndarray:
    """Multi-scale probes in ``{d_z < R}``: log-uniform depth and log-uniform
    tangential offset from ``z``, both between ``R 10^{-decades}`` and ``R``."""
    rng = np.random.default_rng(seed)
    z = np.asarray(spec.z, dtype=float)
    N = domain.N
    q, _ = np.linalg.qr(np.column_stack([z, np.eye(N)]))
    T = q[:, 1:N]
    out = []
    have = 0
    while have < n:
        m = 2 * (n - have) + 32
        t = spec.R * 10.0 ** rng.uniform(-depth_decades, 0.0, m)
        rho = spec.R * 10.0 ** rng.uniform(-depth_decades, 0.0, m)
        g = rng.standard_normal((m, N - 1))
        g /= np.linalg.norm(g, axis=1)[:, None]
        psi = 2.0 * np.arcsin(np.minimum(rho / 2.0, 1.0))
        omega = np.cos(psi)[:, None] * z[None, :] + np.sin(psi)[:, None] * (g @ T.T)
        x = (1.0 - t)[:, None] * omega
        keep = np.sqrt(t**2 + rho**2) < spec.R * (1.0 - 1e-3)
        out.append(x[keep])
        have += int(keep.sum())
    return np.vstack(out)[:n]


def supersolution_residual(domain: DomainModel, params: SpectralParams, p: float, spec: BarrierSpec, x, c: float = 1.0 / 16.0):
    """Central-difference pieces of ``-Delta w - mu w / d_Sigma^2 + w^p`` at ``Lambda = 1``.

    Returns ``(lin, wp, tau, scale)``: the linear part ``-L_mu w``, the
    power ``w^p``, the FD tolerance ``N h^2 M4 / 12 + roundoff`` and a
    magnitude scale, all per probe.  The step is ``c`` times the smallest of
    ``d``, ``d_Sigma`` and ``R - d_z``.
    """
    spec1 = BarrierSpec(spec.z, spec.R, spec.gamma, spec.b, spec.M, 1.0, spec.log_case, spec.R0)
    x = np.asarray(x, dtype=float)
    N = domain.N
    d = dist_boundary(domain, x)
    ds = dist_sigma(domain, x)
    dz = dz_distance(domain, x, spec.z)
    L = np.minimum(np.minimum(d, ds), spec.R - dz)
    h = c * L
    w0 = _profile(domain, spec1, x)
    lap = np.zeros_like(w0)
    m4 = np.zeros_like(w0)
    for a in range(N):
        e = np.zeros(N)
        e[a] = 1.0
        wp1 = _profile(domain, spec1, x + h[:, None] * e)
        wm1 = _profile(domain, spec1, x - h[:, None] * e)
        wp2 = _profile(domain, spec1, x + 2.0 * h[:, None] * e)
        wm2 = _profile(domain, spec1, x - 2.0 * h[:, None] * e)
        lap += (wp1 - 2.0 * w0 + wm1) / h**2
        m4 = np.maximum(m4, np.abs(wp2 - 4.0 * wp1 + 6.0 * w0 - 4.0 * wm1 + wm2) / h**4)
    lin = -lap - params.mu * w0 / ds**2
    # the distances carry absolute errors ~ EPS, so w has relative noise ~ EPS / L
    tau = N * h**2 * m4 / 12.0 + 64.0 * N * EPS * np.abs(w0) / (h**2 * L)
    scale = np.abs(lap) + params.mu * w0 / ds**2
    return lin, w0**p, tau, scale, w0


def _evaluate(lin, wp, tau, scale, w0, Lambda, p):
    r = Lambda * lin + Lambda**p * wp
    viol = r < -Lambda * tau
    sc = Lambda * scale + Lambda**p * wp
    worst = float(np.max(np.maximum(-r, 0.0) / sc)) if r.size else 0.0
    return r, viol, worst


def verify_supersolution(
    domain: DomainModel,
    params: SpectralParams,
    p: float,
    barrier: BarrierField,
    n_probe: int = 20000,
    c: float = 1.0 / 16.0,
    seed: int = 0,
    max_fraction: float = 1e-3,
    shrink: float = 3.0,
) -> CheckReport:
    """Check ``-L_mu w + w^p >= -tau(h)`` at probes, then again with ``h/2``.

    Passes when fewer than ``max_fraction`` of the probes violate at both
    steps and the worst relative negative residual shrinks by ``shrink``
    (or is already at roundoff level).
    """
    spec = barrier.spec
    x = barrier_probes(domain, spec, n_probe, seed)
    parts_h = supersolution_residual(domain, params, p, spec, x, c)
    parts_h2 = supersolution_residual(domain, params, p, spec, x, c / 2.0)
    return _verdict(parts_h, parts_h2, spec.Lambda, p, x, max_fraction, shrink)


def _verdict(parts_h, parts_h2, Lambda, p, x, max_fraction, shrink):
    finite = np.all(np.isfinite(np.vstack(parts_h + parts_h2)), axis=0)
    discarded = int((~finite).sum())
    parts_h = tuple(a[finite] for a in parts_h)
    parts_h2 = tuple(a[finite] for a in parts_h2)
    x = x[finite]
    r1, v1, worst1 = _evaluate(*parts_h, Lambda, p)
    r2, v2, worst2 = _evaluate(*parts_h2, Lambda, p)
    n = r1.size
    frac1, frac2 = v1.sum() / n, v2.sum() / n
    floor = 1e-9
    shrunk = worst1 <= floor or worst2 * shrink <= worst1
    ok = frac1 < max_fraction and frac2 < max_fraction and shrunk
    i = int(np.argmin(r1 + parts_h[2] * Lambda)) if n else 0
    return CheckReport(
        "supersolution",
        "pass" if ok else "fail",
        {
            "Lambda": Lambda,
            "probes": n,
            "discarded": discarded,
            "violating_fraction": float(frac1),
            "violating_fraction_half_step": float(frac2),
            "worst_relative_violation": worst1,
            "worst_relative_violation_half_step": worst2,
            "worst_point": [float(v) for v in x[i]] if n else [],
        },
    )


def build_barrier(
    domain: DomainModel,
    params: SpectralParams,
    p: float,
    spec: BarrierSpec,
    n_probe: int = 20000,
    c: float = 1.0 / 16.0,
    seed: int = 0,
    max_log2: int = 60,
    log2_start: int = 0,
) -> tuple[BarrierField, CheckReport]:
    """Smallest ``Lambda = 2^j`` (``j = log2_start, ...``) passing :func:`verify_supersolution`."""
    spec.validate(domain, params, p)
    x = barrier_probes(domain, spec, n_probe, seed)
    parts_h = supersolution_residual(domain, params, p, spec, x, c)
    parts_h2 = supersolution_residual(domain, params, p, spec, x, c / 2.0)
    search = []
    for j in range(log2_start, max_log2 + 1):
        Lam = 2.0**j
        rep = _verdict(parts_h, parts_h2, Lam, p, x, 1e-3, 3.0)
        search.append({"log2_Lambda": j, "violating_fraction": rep.values["violating_fraction"]})
        if rep.passed:
            new = BarrierSpec(spec.z, spec.R, spec.gamma, spec.b, spec.M, Lam, spec.log_case, spec.R0)
            return BarrierField(domain, params, p, new, search), rep
    raise BarrierConstructionError(f"no Lambda up to 2^{max_log2}; worst point {rep.values['worst_point']}")


def _profile_dxi(domain, params, spec, d, xi):
    """Barrier and ``W~`` in boundary coordinates ``x = (1 - d) xi``.

    Working with ``d`` directly keeps depths far below machine epsilon
    representable.
    """
    z = np.asarray(spec.z, dtype=float)
    geo = float(geodesic_to_sigma(domain, xi))
    dz2 = d**2 + float(np.sum((xi - z) ** 2))
    dt = np.sqrt(geo**2 + d**2)
    with np.errstate(over="ignore"):
        core = spec.Lambda * (spec.R**2 - dz2) ** (-spec.b) * np.exp(spec.M * d) * d
    if spec.log_case:
        ds = np.sqrt(geo**2 + d**2)
        w = core * dt ** (-domain.H) * np.sqrt(-np.log(dt / (16.0 * spec.R0)))
        W = (d + dt**2) * ds ** (-params.H) * np.abs(np.log(dt))
    else:
        w = core * dt ** (-spec.gamma)
        W = (d + dt**2) * dt ** (-params.alpha_plus)
    eta = cutoff_eta(dt, domain.beta0)
    return w, (1.0 - eta) + eta * W


def boundary_ratio_check(barrier: BarrierField, n_seq: int = 8, depth_min: float = 1e-60, steps: int = 64, seed: int = 0) -> dict:
    """``w / W~`` along ``n_seq`` inward normals ending at boundary points of
    the barrier ball away from Sigma (at distance ``R/2`` from ``z``).

    Depths run geometrically from ``R/4`` down to ``depth_min``; returns the
    ratios at the closest sample and whether every sequence decreases.
    """
    dom, spec = barrier.domain, barrier.spec
    rng = np.random.default_rng(seed)
    z = np.asarray(spec.z, dtype=float)
    N = dom.N
    q, _ = np.linalg.qr(np.column_stack([z, np.eye(N)]))
    T = q[:, 1:N]
    g = rng.standard_normal((n_seq, N - 1))
    g /= np.linalg.norm(g, axis=1)[:, None]
    psi = 2.0 * math.asin(spec.R / 4.0)
    xi = math.cos(psi) * z[None, :] + math.sin(psi) * (g @ T.T)
    depths = np.geomspace(spec.R / 4.0, depth_min, steps)
    ratios = []
    for e in xi:
        w, Wt = _profile_dxi(dom, barrier.params, spec, depths, e)
        ratios.append(w / Wt)
    ratios = np.array(ratios)
    return {
        "closest_depth": float(depths[-1]),
        "final_ratios": ratios[:, -1].tolist(),
        "max_final_ratio": float(ratios[:, -1].max()),
        "decreasing": bool(np.all(np.diff(ratios, axis=1) < 0)),
    }


def ko_check(u: Field, p: float, params: SpectralParams | None = None, F=None) -> CheckReport:
    """Fit the smallest ``C`` in ``u <= C d^{-2/(p-1)}`` over the cloud.

    With ``F`` (points of Sigma) and ``params`` also fit the refined bound
    ``u <= C d d_Sigma^{-alpha_-} d_F^{-2/(p-1) + alpha_- - 1}``.
    """
    vals = np.asarray(u.values, dtype=float)
    if np.any(np.isnan(vals)):
        raise ValueError("field contains NaN")
    cloud = u.cloud
    d = cloud.d
    C = float(np.max(vals * d ** (2.0 / (p - 1.0))))
    out = {"C": C, "exponent": -2.0 / (p - 1.0)}
    if F is not None:
        if params is None:
            raise DomainError("refined bound needs spectral parameters")
        F = np.atleast_2d(np.asarray(F, dtype=float))
        dF = np.min(np.linalg.norm(cloud.points[:, None, :] - F[None, :, :], axis=2), axis=1)
        am = params.alpha_minus
        bound = d * cloud.s ** (-am) * dF ** (-2.0 / (p - 1.0) + am - 1.0)
        out["C_refined"] = float(np.max(vals / bound))
    ok = math.isfinite(C) and (F is None or math.isfinite(out["C_refined"]))
    return CheckReport("keller_osserman", "pass" if ok else "fail", out)


def ko_stability(coarse: CheckReport, fine: CheckReport, tol: float = 0.25) -> CheckReport:
    """Compare fitted constants from two cloud resolutions."""
    out = {}
    ok = True
    for key in ("C", "C_refined"):
        if key in coarse.values and key in fine.values:
            a, b = coarse.values[key], fine.values[key]
            change = abs(b - a) / a if a > 0 else (0.0 if b == 0 else math.inf)
            out[key] = {"coarse": a, "fine": b, "relative_change": change}
            ok &= change <= tol
    return CheckReport("keller_osserman_stability", "pass" if ok else "fail", out)
