"""Finite-difference estimate of the first eigenvalue of ``-Delta - mu/d_Sigma^2``.

The discretisation is a Cartesian grid cloud restricted to the ball with
Shortley-Weller stencils along each axis (Dirichlet data imposed where the
axis segment leaves the ball).  The Hardy term is lumped on the diagonal.
The stencil matrix is a Z-matrix, so its eigenvalue of least real part is
real with a positive eigenvector; inverse iteration is shifted down until
the iterate converges to such a positive vector.
"""
from __future__ import annotations

import math
import warnings
from dataclasses import dataclass

import numpy as np
import scipy.sparse as sp
from scipy.sparse.linalg import splu

from .geometry import DomainError, DomainModel, dist_sigma

__all__ = ["RayleighReport", "RayleighConvergenceError", "grid_operator", "rayleigh_lambda_estimate"]


class RayleighConvergenceError(RuntimeError):
    pass


@dataclass
class RayleighReport:
    value: float
    coarse_value: float
    delta: float
    h: float
    nodes: int
    iterations: int
    label: str = "estimate"

    def as_dict(self) -> dict:
        return {
            "value": self.value,
            "coarse_value": self.coarse_value,
            "delta": self.delta,
            "h": self.h,
            "nodes": self.nodes,
            "iterations": self.iterations,
            "label": self.label,
        }


def _grid_nodes(N: int, h: float):
    m = int(math.floor(1.0 / h))
    axis = np.arange(-m, m + 1)
    idx = np.stack(np.meshgrid(*([axis] * N), indexing="ij"), axis=-1).reshape(-1, N)
    pts = idx * h
    inside = np.einsum("ij,ij->i", pts, pts) < 1.0 - 1e-12
    return idx[inside], pts[inside], m


def grid_operator(domain: DomainModel, mu: float, h: float):
    """Sparse matrix of ``-Delta - mu d_Sigma^{-2}`` on interior grid nodes."""
    N = domain.N
    idx, pts, m = _grid_nodes(N, h)
    n = pts.shape[0]
    width = 2 * m + 1
    key = np.ravel_multi_index((idx + m).T, (width,) * N)
    lookup = -np.ones(width**N, dtype=np.int64)
    lookup[key] = np.arange(n)
    rows, cols, vals = [], [], []
    diag = np.zeros(n)
    sq = np.einsum("ij,ij->i", pts, pts)
    for c in range(N):
        arms = []
        nbrs = []
        for sgn in (1, -1):
            nb_idx = idx.copy()
            nb_idx[:, c] += sgn
            valid = np.all(np.abs(nb_idx) <= m, axis=1)
            nb = -np.ones(n, dtype=np.int64)
            nb[valid] = lookup[np.ravel_multi_index((nb_idx[valid] + m).T, (width,) * N)]
            xc = sgn * pts[:, c]
            # distance along the axis to the sphere
            t_wall = -xc + np.sqrt(xc * xc + 1.0 - sq)
            arm = np.where(nb >= 0, h, np.minimum(t_wall, h))
            arms.append(arm)
            nbrs.append(nb)
        hp, hm = arms
        diag += 2.0 / (hp * hm)
        for arm, other, nb in ((hp, hm, nbrs[0]), (hm, hp, nbrs[1])):
            ok = nb >= 0
            rows.append(np.nonzero(ok)[0])
            cols.append(nb[ok])
            vals.append(-2.0 / (arm[ok] * (arm[ok] + other[ok])))
    ds = dist_sigma(domain, pts)
    diag -= mu / ds**2
    rows.append(np.arange(n))
    cols.append(np.arange(n))
    vals.append(diag)
    A = sp.csc_matrix(
        (np.concatenate(vals), (np.concatenate(rows), np.concatenate(cols))), shape=(n, n)
    )
    return A, pts


def _inverse_iteration(A, shift, tol, max_iter):
    n = A.shape[0]
    lu = splu((A - shift * sp.identity(n, format="csc")).tocsc())
    x = np.ones(n) / math.sqrt(n)
    lam = shift
    for it in range(1, max_iter + 1):
        y = lu.solve(x)
        y /= np.linalg.norm(y)
        if y.sum() < 0:
            y = -y
        new = float(y @ (A @ y))
        delta = np.linalg.norm(y - x)
        x = y
        if abs(new - lam) <= tol * max(1.0, abs(new)) and delta < math.sqrt(tol):
            return new, x, it
        lam = new
    raise RayleighConvergenceError(f"inverse iteration did not converge in {max_iter} steps")


def _smallest(A, tol, max_iter):
    shift = 0.0
    total = 0
    for _ in range(40):
        lam, vec, it = _inverse_iteration(A, shift, tol, max_iter)
        total += it
        if np.all(vec > -1e-10 * np.abs(vec).max()):
            return lam, total
        shift = min(shift, lam) - max(1.0, abs(lam))
    raise RayleighConvergenceError("no positive eigenvector found while lowering the shift")


def rayleigh_lambda_estimate(
    domain: DomainModel,
    mu: float,
    h: float = 0.1,
    refine: bool = True,
    tol: float = 1e-10,
    max_iter: int = 500,
) -> RayleighReport:
    """Estimate ``lambda_{mu,Sigma}`` on grids of spacing ``h`` and ``h/2``.

    The returned value comes from the finer grid; ``delta`` is the change
    between the two grids.  The number is an estimate, not a certified bound.
    """
    if not 0.0 < h <= 0.5:
        raise DomainError("grid spacing must lie in (0, 1/2]")
    A, _ = grid_operator(domain, mu, h)
    coarse, its = _smallest(A, tol, max_iter)
    if not refine:
        return RayleighReport(coarse, coarse, math.nan, h, A.shape[0], its)
    A2, _ = grid_operator(domain, mu, h / 2)
    fine, its2 = _smallest(A2, tol, max_iter)
    if fine - abs(fine - coarse) <= 0.0:
        warnings.warn(f"lambda estimate {fine:.4g} does not support lambda > 0 (refinement change {fine - coarse:.2g})",
                      stacklevel=2)
    return RayleighReport(fine, coarse, fine - coarse, h / 2, A2.shape[0], its + its2)
