"""Monotone fixed-point solvers for the source and absorption integral equations.

Source problem (transformed variable)::

    v = N_alpha[psi^{p+1} v^p] + sigma N_alpha[nu],     u = psi v,

with ``psi = d d_Sigma^{-a}`` and ``(alpha, a) = (2 alpha_-, alpha_-)``, or
``(N - eps, N/2)`` for the point singularity at the critical constant.

Absorption problem::

    u + G[u^p] = K[nu].

Dirac atoms of ``nu`` make the integrands singular at the atom.  Cloud
nodes inside a small ball around each atom are removed from the source sum
and that ball is integrated semi-analytically: the iterate is written as
``c * kernel(., xi)`` there, ``c`` being read off the hole nodes, and the
remaining radial integral is computed with dyadic annulus quadrature plus a
geometric tail.  When that tail does not converge the ball carries infinite
mass, which is how the continuous nonexistence mechanism shows up.
"""
from __future__ import annotations

import math
import time
from dataclasses import dataclass, field

import numpy as np
from scipy.spatial import cKDTree

from .geometry import DomainError, DomainModel, SpectralParams, dist_boundary, dist_sigma
from .kernels import KernelSpec, martin_est, nalpha_features
from .measures import BoundaryMeasure, Field, SampleCloud, annulus_mass, lp_phi_norm
from .operators import green_handle, martin_op, nalpha_handle, nalpha_measure

__all__ = [
    "IterationReport",
    "SourceProblem",
    "AbsorptionProblem",
    "ThresholdReport",
    "solve_source",
    "solve_absorption",
    "sigma_threshold",
    "hole_integral",
]

HOLE_NEIGHBOURS = 16
HOLE_DYADS = 12


@dataclass
class IterationReport:
    status: str
    iterations: int
    residual_sup: float
    residual_l1phi: float
    history: list = field(default_factory=list)
    sigma: float = 0.0
    wall_time: float = 0.0
    reason: str = ""
    damping: float = 1.0
    monotone: bool = True
    probe: dict | None = None

    def as_dict(self, include_time: bool = False) -> dict:
        out = {
            "status": self.status,
            "iterations": self.iterations,
            "residual_sup": _num(self.residual_sup),
            "residual_l1phi": _num(self.residual_l1phi),
            "history": [_num(h) for h in self.history],
            "sigma": _num(self.sigma),
            "reason": self.reason,
            "damping": self.damping,
            "monotone": self.monotone,
        }
        if self.probe is not None:
            out["probe"] = self.probe
        if include_time:
            out["wall_time"] = self.wall_time
        return out


def _num(x):
    x = float(x)
    if math.isnan(x):
        return "nan"
    if math.isinf(x):
        return "inf" if x > 0 else "-inf"
    return x


def hole_integral(domain: DomainModel, xi, integrand, eps: float, dyads: int = HOLE_DYADS, tol: float = 1e-3) -> float:
    """Integral of ``integrand`` over ``B(xi, eps)`` inside the ball.

    Dyadic annuli are summed and the part below the last one is extrapolated
    geometrically with the ratio of the last two annuli.  A ratio of at
    least ``1 - tol`` means the annular masses do not decay, and ``inf`` is
    returned.
    """
    ts = eps * 2.0 ** -np.arange(1, dyads + 1, dtype=float)
    with np.errstate(over="ignore", divide="ignore", invalid="ignore"):
        A = np.array([annulus_mass(domain, xi, integrand, t, 2 * t) for t in ts])
    if not np.all(np.isfinite(A)):
        return math.inf
    if A[-1] <= 0.0:
        return float(A.sum())
    ratio = A[-1] / A[-2]
    if ratio >= 1.0 - tol:
        return math.inf
    return float(A.sum() + A[-1] * ratio / (1.0 - ratio))


class _Holes:
    """Bookkeeping for the excluded balls around Dirac atoms."""

    def __init__(self, cloud: SampleCloud, nu: BoundaryMeasure, column_fn, hole_integrand_fn):
        self.keep = np.ones(cloud.n, dtype=bool)
        self.atoms = []
        if nu.points.shape[0] == 0:
            return
        tree = cKDTree(cloud.points)
        k = min(HOLE_NEIGHBOURS, cloud.n)
        for xi, m, atom in zip(nu.points, nu.masses, nu.is_atom):
            if not atom or m <= 0:
                continue
            dist, idx = tree.query(xi, k=k)
            eps = float(dist[-1]) * (1.0 + 1e-9)
            inside = np.asarray(idx)
            self.keep[inside] = False
            column = column_fn(cloud.points, xi)
            H = hole_integral(cloud.domain, xi, hole_integrand_fn(xi), eps)
            self.atoms.append({"xi": xi, "mass": m, "eps": eps, "inside": inside, "column": column, "H": H})

    def contribution(self, values, p):
        """Hole terms for the current iterate; ``inf`` entries flag divergence."""
        out = 0.0
        for a in self.atoms:
            ratio = values[a["inside"]] / a["column"][a["inside"]]
            c = float(np.median(ratio))
            if c <= 0.0:
                continue
            if math.isinf(a["H"]):
                return math.inf
            out = out + a["column"] * (c**p * a["H"])
        return out

    def summary(self):
        return [{"eps": a["eps"], "hole_integral": _num(a["H"]), "nodes": int(a["inside"].size)} for a in self.atoms]


class SourceProblem:
    """Precomputed operator data for ``v = N[psi^{p+1} v^p] + sigma N[nu]``.

    The kernel matrix depends only on the cloud and exponent, so one
    instance serves a whole sigma scan.
    """

    def __init__(
        self,
        domain: DomainModel,
        params: SpectralParams,
        p: float,
        nu: BoundaryMeasure,
        cloud: SampleCloud,
        eps: float = 0.5,
        threads: int = 1,
    ):
        if p <= 1:
            raise DomainError("p must exceed 1")
        self.domain, self.params, self.p, self.nu, self.cloud = domain, params, p, nu, cloud
        N = domain.N
        if domain.k == 0 and params.critical_hardy:
            if not 0.0 < eps < 2.0:
                raise DomainError("eps must lie in (0, 2)")
            self.alpha, self.a = N - eps, N / 2.0
        else:
            self.alpha, self.a = 2.0 * params.alpha_minus, params.alpha_minus
        self.handle = nalpha_handle(cloud, params, self.alpha, threads=threads)
        self.psi = cloud.d * cloud.s ** (-self.a)
        self.weight = self.psi ** (p + 1)
        self.base = nalpha_measure(domain, self.alpha, cloud.points, nu)
        alpha, a = self.alpha, self.a

        def column(points, xi):
            return nalpha_measure(domain, alpha, points, BoundaryMeasure.dirac(xi))

        def integrand_for(xi):
            def f(x):
                d = dist_boundary(domain, x)
                s = dist_sigma(domain, x)
                col = column(x, xi)
                return (d * s ** (-a)) ** (p + 1) * col**p

            return f

        self.holes = _Holes(cloud, nu, column, integrand_for)

    def operator(self, v, sigma):
        """One application of the fixed-point map."""
        with np.errstate(over="ignore", invalid="ignore"):
            g = self.weight * v**self.p
            out = self.handle.apply(g, mask=self.holes.keep)
            hole = self.holes.contribution(v, self.p)
        return out + hole + sigma * self.base

    def transformed_residual(self, v, sigma, probes) -> float:
        """Max relative residual of the transformed equation at ``probes``,
        recomputed with float64 kernel rows."""
        g = self.weight * v**self.p
        hole = self.holes.contribution(v, self.p)
        worst = 0.0
        for i in probes:
            rhs = self.handle.row64(int(i), g, mask=self.holes.keep) + sigma * self.base[i]
            rhs += hole[i] if np.ndim(hole) else hole
            worst = max(worst, abs(v[i] - rhs) / max(abs(v[i]), 1e-300))
        return worst

    def solve(self, sigma: float, tol: float = 1e-8, max_iter: int = 500, blowup: float = 1e12, omega: float = 1.0, n_probe: int = 32):
        return _picard(self, sigma, tol, max_iter, blowup, omega, n_probe)


def _picard(prob: SourceProblem, sigma, tol, max_iter, blowup, omega, n_probe):
    t0 = time.perf_counter()
    cloud = prob.cloud
    n = cloud.n
    if sigma == 0.0 or prob.nu.total_mass == 0.0:
        rep = IterationReport("converged", 1, 0.0, 0.0, [0.0], sigma, time.perf_counter() - t0, "zero data")
        return Field(cloud, np.zeros(n)), rep
    v = sigma * prob.base
    scale0 = float(np.max(v))
    history = [scale0]
    status, reason = "max_iter", "iteration budget exhausted"
    monotone = True
    res = math.inf
    it = 0
    for it in range(1, max_iter + 1):
        tv = prob.operator(v, sigma)
        new = tv if omega == 1.0 else (1.0 - omega) * v + omega * tv
        if not np.all(np.isfinite(new)):
            status, reason = "diverged", "non-finite iterate (singular integral or overflow)"
            history.append(math.inf)
            break
        if np.any(new < v):
            monotone = False
            raise AssertionError("Picard iterate decreased: operator positivity violated")
        top = float(np.max(new))
        res = float(np.max(new - v)) / top
        v = new
        history.append(top)
        if res < tol:
            status, reason = "converged", ""
            break
        if top > blowup * scale0:
            status, reason = "diverged", "blow-up threshold exceeded"
            break
        if len(history) > 21:
            last = np.asarray(history[-21:])
            if np.all(last[1:] / last[:-1] > 1.05):
                status, reason = "diverged", "sustained growth over 20 steps"
                break
    u = prob.psi * v if np.all(np.isfinite(v)) else np.where(np.isfinite(v), prob.psi * v, np.inf)
    probe = None
    l1 = math.nan
    if status == "converged":
        probes = _probe_indices(prob, n_probe)
        probe = {
            "count": int(len(probes)),
            "transformed_residual": prob.transformed_residual(v, sigma, probes),
            "holes": prob.holes.summary(),
        }
        diff = np.abs(prob.operator(v, sigma) - v)
        l1 = float(np.dot(cloud.weights, diff * prob.psi * cloud.d)) / max(float(np.dot(cloud.weights, v * prob.psi * cloud.d)), 1e-300)
    rep = IterationReport(status, it, res, l1, history, sigma, time.perf_counter() - t0, reason, omega, monotone, probe)
    field_u = Field(cloud, np.nan_to_num(u, nan=np.inf, posinf=np.finfo(float).max))
    return field_u, rep


def _probe_indices(prob, n_probe):
    keep = np.nonzero(prob.holes.keep)[0]
    if keep.size <= n_probe:
        return keep
    return keep[np.linspace(0, keep.size - 1, n_probe).astype(int)]


def solve_source(domain, params, p, nu, sigma, cloud, **kw):
    """Solve the source problem for one ``sigma``; returns ``(Field u, IterationReport)``."""
    solve_kw = {k: kw.pop(k) for k in ("tol", "max_iter", "blowup", "omega", "n_probe") if k in kw}
    return SourceProblem(domain, params, p, nu, cloud, **kw).solve(sigma, **solve_kw)


@dataclass
class ThresholdReport:
    threshold: float
    bracket: tuple
    verdict: str
    runs: list
    anomaly: bool = False
    label: str = "surrogate threshold"

    def as_dict(self) -> dict:
        return {
            "threshold": _num(self.threshold),
            "bracket": [_num(b) for b in self.bracket],
            "verdict": self.verdict,
            "runs": self.runs,
            "anomaly": self.anomaly,
            "label": self.label,
        }


def sigma_threshold(
    domain,
    params,
    p,
    nu,
    cloud,
    lo: float = 1e-6,
    hi: float = 1e3,
    rel_tol: float = 1e-2,
    critical_tol: float = 1e-6,
    problem: SourceProblem | None = None,
    **solve_kw,
) -> ThresholdReport:
    """Bisection in ``log sigma`` between converged and non-converged runs."""
    if nu.total_mass == 0.0:
        return ThresholdReport(math.inf, (hi, math.inf), "zero data: every sigma converges", [])
    prob = problem or SourceProblem(domain, params, p, nu, cloud)
    runs = []

    def converged(s):
        _, rep = prob.solve(s, **solve_kw)
        runs.append({"sigma": s, "status": rep.status, "iterations": rep.iterations})
        return rep.status == "converged"

    if not converged(lo):
        return ThresholdReport(0.0, (0.0, lo), "no small-sigma existence detected", runs)
    if converged(hi):
        return ThresholdReport(math.inf, (hi, math.inf), "converged on the whole range", runs)
    a, b = math.log(lo), math.log(hi)
    while b - a > math.log1p(rel_tol):
        m = 0.5 * (a + b)
        if converged(math.exp(m)):
            a = m
        else:
            b = m
    # monotone classification check: everything below the bracket converged
    anomaly = any(r["status"] == "converged" and r["sigma"] > math.exp(b) for r in runs)
    anomaly |= any(r["status"] != "converged" and r["sigma"] < math.exp(a) for r in runs)
    verdict = "existence for small sigma"
    if math.exp(b) - math.exp(a) < critical_tol:
        verdict = "critical"
    return ThresholdReport(math.exp(0.5 * (a + b)), (math.exp(a), math.exp(b)), verdict, runs, anomaly)


class AbsorptionProblem:
    """Precomputed data for ``u + G[u^p] = K[nu]``."""

    def __init__(self, domain, params, p, nu, cloud, threads: int = 1):
        if p <= 1:
            raise DomainError("p must exceed 1")
        self.domain, self.params, self.p, self.nu, self.cloud = domain, params, p, nu, cloud
        self.handle = green_handle(cloud, params, threads=threads)
        self.base = martin_op(domain, params, cloud.points, nu)
        spec = KernelSpec("martin", domain, params)
        a = domain.N / 2.0 if spec.log_case else params.alpha_minus

        def column(points, xi):
            return martin_est(spec, points, xi)

        def integrand_for(xi):
            def f(x):
                d = dist_boundary(domain, x)
                s = dist_sigma(domain, x)
                return d * s ** (-a) * martin_est(spec, x, xi) ** p

            return f

        self.holes = _Holes(cloud, nu, column, integrand_for)

    def operator(self, u):
        with np.errstate(over="ignore", invalid="ignore"):
            g = np.abs(u) ** self.p
            out = self.handle.apply(g, mask=self.holes.keep)
            hole = self.holes.contribution(u, self.p)
        return out + hole

    def step(self, u):
        return np.maximum(self.base - self.operator(u), 0.0)

    def solve(self, tol: float = 1e-8, max_iter: int = 500):
        return _alternate(self, tol, max_iter)


def _alternate(prob: AbsorptionProblem, tol, max_iter, max_pure=100):
    t0 = time.perf_counter()
    cloud = prob.cloud
    if prob.nu.total_mass == 0.0:
        rep = IterationReport("converged", 1, 0.0, 0.0, [0.0], 1.0, time.perf_counter() - t0, "zero data")
        return Field(cloud, np.zeros(cloud.n)), rep
    if any(math.isinf(a["H"]) for a in prob.holes.atoms):
        # K[nu]^p is not integrable at an atom: no solution for Dirac data
        rep = IterationReport("diverged", 0, math.inf, math.inf, [], 1.0, time.perf_counter() - t0,
                              "Dirac data in the supercritical range (infinite hole integral)")
        rep.probe = {"holes": prob.holes.summary()}
        return Field(cloud, np.full(cloud.n, np.inf)), rep
    scale = float(np.max(prob.base))
    upper = prob.base.copy()
    lower = prob.step(upper)
    history = []
    status, reason = "max_iter", "bracket did not contract"
    method = "alternating"
    width = math.inf
    it = 1
    for it in range(1, min(max_iter, max_pure) + 1):
        width = float(np.max(upper - lower)) / scale
        history.append(width)
        if width < tol:
            status, reason = "converged", ""
            break
        new_upper = prob.step(lower)
        new_lower = prob.step(new_upper)
        if np.any(new_upper > upper) or np.any(new_lower < lower):
            raise AssertionError("alternating bracket lost monotonicity")
        upper, lower = new_upper, new_lower
        if it >= 20 and history[-1] > 0.99 * history[-20]:
            break
    u = 0.5 * (upper + lower)
    if status != "converged" and it < max_iter:
        # the antitone map is not a contraction: polish with Newton-Krylov,
        # then measure the bracket of two alternating sweeps from the result
        method = "alternating+newton_krylov"
        u, polished, n_newton = _newton_polish(prob, u, scale, tol, max_iter - it)
        it += n_newton
        lower = prob.step(u)
        upper = prob.step(lower)
        width = float(np.max(np.abs(upper - lower))) / scale
        history.append(width)
        if polished and width < tol:
            status, reason = "converged", ""
        else:
            reason = "Newton-Krylov polish did not reach the bracket tolerance"
    res = float(np.max(np.abs(u + prob.operator(u) - prob.base))) / scale
    rep = IterationReport(status, it, width, res, history, 1.0, time.perf_counter() - t0, reason)
    rep.probe = {"equation_residual": res, "method": method, "holes": prob.holes.summary()}
    return Field(cloud, u), rep


def _newton_polish(prob, u0, scale, tol, budget):
    """Returns ``(u, converged, residual evaluations)``."""
    from scipy.optimize import NoConvergence, newton_krylov

    calls = [0]

    def F(u):
        calls[0] += 1
        return (u + prob.operator(np.maximum(u, 0.0)) - prob.base) / scale

    try:
        u = newton_krylov(F, u0, f_tol=tol * 1e-3, maxiter=max(budget, 1), method="lgmres")
        return np.maximum(u, 0.0), True, calls[0]
    except NoConvergence as exc:
        return np.maximum(exc.args[0], 0.0), False, calls[0]


def solve_absorption(domain, params, p, nu, cloud, tol: float = 1e-8, max_iter: int = 500, threads: int = 1):
    """Solve ``u + G[u^p] = K[nu]`` by the alternating bracket; returns ``(Field, IterationReport)``."""
    return AbsorptionProblem(domain, params, p, nu, cloud, threads=threads).solve(tol, max_iter)
