"""Phase scans over ``(p, mu)`` or ``(p, sigma)`` with theoretical overlays."""
from __future__ import annotations

import math
from dataclasses import dataclass, field

import numpy as np

from .geometry import DomainError, DomainModel, spectral_params
from .measures import BoundaryMeasure, integrability_scan, make_cloud
from .solvers import SourceProblem

__all__ = ["PhaseDiagram", "phase_scan", "exponent_table", "theory_curve"]

MAX_CELLS_PER_AXIS = 20


def exponent_table(N: int, k: int, mu: float, p_samples=(1.25, 1.5, 2.0, 2.5, 3.0)) -> dict:
    """Spectral exponents, critical exponents and ``vartheta(p)`` samples."""
    from .capacity import vartheta

    par = spectral_params(DomainModel(N, k), mu)
    crit = par.critical
    return {
        "N": N,
        "k": k,
        "mu": mu,
        "H": par.H,
        "alpha_minus": par.alpha_minus,
        "alpha_plus": par.alpha_plus,
        "critical": {key: _num(v) for key, v in crit.as_dict().items()},
        "vartheta": [{"p": p, "value": vartheta(p, par.alpha_plus)} for p in p_samples],
    }


def _num(x):
    x = float(x)
    return "inf" if math.isinf(x) else x


def theory_curve(domain: DomainModel, mu: float, target: str) -> float:
    """Critical ``p`` for Dirac data on Sigma (``target='sigma'``) or off it."""
    crit = spectral_params(domain, mu).critical
    if target == "sigma":
        return crit.p_sigma
    if target == "boundary":
        return crit.p_boundary
    raise DomainError(f"unknown target {target!r}")


@dataclass
class PhaseDiagram:
    axis: str
    target: str
    mode: str
    p_grid: list
    y_grid: list
    verdicts: list  # verdicts[i][j] for p_grid[i], y_grid[j]
    curves: dict
    agreement: float
    failures: list = field(default_factory=list)

    def as_dict(self) -> dict:
        return {
            "schema": 1,
            "axis": self.axis,
            "target": self.target,
            "mode": self.mode,
            "p_grid": self.p_grid,
            "y_grid": self.y_grid,
            "verdicts": self.verdicts,
            "curves": self.curves,
            "agreement": self.agreement,
            "failures": self.failures,
        }

    def csv_rows(self) -> list[tuple]:
        rows = []
        for i, p in enumerate(self.p_grid):
            for j, y in enumerate(self.y_grid):
                rows.append((p, y, self.verdicts[i][j]))
        return rows


def _agreement(p_grid, y_grid, verdicts, curve_of_y, ok_below, ok_above):
    p = np.asarray(p_grid)
    dp = float(np.min(np.diff(p))) if p.size > 1 else math.inf
    hits = total = 0
    for j, y in enumerate(y_grid):
        pc = curve_of_y(y)
        for i, pv in enumerate(p_grid):
            if abs(pv - pc) <= dp:
                continue  # one-cell critical band
            total += 1
            v = verdicts[i][j]
            hits += v in (ok_below if pv < pc else ok_above)
    return hits / total if total else math.nan


def phase_scan(
    domain: DomainModel,
    p_grid,
    y_grid,
    axis: str = "mu",
    target: str = "sigma",
    mode: str = "fast",
    mu: float | None = None,
    resolution: int = 2000,
    seed: int = 0,
    threads: int = 1,
    max_iter: int = 200,
) -> PhaseDiagram:
    """Verdict grid over ``p`` and ``mu`` (fast mode, integrability scan at the
    Dirac point) or over ``p`` and ``sigma`` (full mode, Picard solves).

    The Dirac point is ``e1`` on Sigma (``target='sigma'``) or the boundary
    point farthest from Sigma (``target='boundary'``).
    """
    p_grid = [float(v) for v in p_grid]
    y_grid = [float(v) for v in y_grid]
    if len(p_grid) > MAX_CELLS_PER_AXIS or len(y_grid) > MAX_CELLS_PER_AXIS:
        raise DomainError("at most 20 cells per axis")
    z = domain.sigma_point() if target == "sigma" else domain.far_boundary_point()
    failures = []
    verdicts = [["" for _ in y_grid] for _ in p_grid]
    if axis == "mu":
        if mode != "fast":
            raise DomainError("the mu axis is scanned in fast mode")
        for j, m in enumerate(y_grid):
            par = spectral_params(domain, m)
            for i, p in enumerate(p_grid):
                try:
                    rep = integrability_scan(domain, par, p, z)
                    verdicts[i][j] = "critical" if rep.critical else ("diverged" if rep.verdict == "divergent" else "converged")
                except (DomainError, FloatingPointError) as exc:
                    verdicts[i][j] = "failed"
                    failures.append({"p": p, "y": m, "error": str(exc)})
        curves = {f"{name}": [_num(getattr(spectral_params(domain, m).critical, name)) for m in y_grid]
                  for name in ("p_boundary", "p_sigma", "p_plus", "p_minus")}
        score = _agreement(p_grid, y_grid, verdicts, lambda m: theory_curve(domain, m, target),
                           ("converged", "critical"), ("diverged", "critical"))
    elif axis == "sigma":
        if mu is None:
            raise DomainError("sigma axis needs mu")
        par = spectral_params(domain, mu)
        cloud = make_cloud(domain, resolution, seed=seed)
        nu = BoundaryMeasure.dirac(z)
        for i, p in enumerate(p_grid):
            try:
                prob = SourceProblem(domain, par, p, nu, cloud, threads=threads)
            except DomainError as exc:
                failures.append({"p": p, "error": str(exc)})
                for j in range(len(y_grid)):
                    verdicts[i][j] = "failed"
                continue
            for j, sg in enumerate(y_grid):
                _, rep = prob.solve(sg, max_iter=max_iter)
                verdicts[i][j] = "converged" if rep.status == "converged" else "diverged"
            prob.handle.release()
        curves = {name: _num(getattr(par.critical, name)) for name in ("p_boundary", "p_sigma", "p_plus", "p_minus")}
        pc = theory_curve(domain, mu, target)
        # column verdict: some sigma converges below the curve, none above it
        col = [["converged" if any(v == "converged" for v in row) else "diverged"] for row in verdicts]
        score = _agreement(p_grid, [0.0], col, lambda _: pc, ("converged",), ("diverged",))
    else:
        raise DomainError(f"unknown axis {axis!r}")
    return PhaseDiagram(axis, target, mode, p_grid, y_grid, verdicts, curves, score, failures)
