"""Quadrature realisations of the Green, Martin and N_alpha potential operators.

Fields are integrated against a dense float32 kernel matrix (products are
accumulated in double precision by the backend).  Sources closer than their
cell radius see the ``|x - y|^{2-N}`` factor replaced by the potential of
the uniform cell ball, which equals ``r^{2-N}`` outside the ball.  When
targets and sources are the same cloud, a local singular correction on a
ball of a few cell radii around each node makes the discrete sum integrate
constants exactly there (see :func:`near_corrections`).
"""
from __future__ import annotations

import math
import warnings
from dataclasses import dataclass, field

import numpy as np

from . import backend
from .geometry import DomainError, DomainModel, SpectralParams, dist_boundary, dist_sigma
from .kernels import martin_features, nalpha_features
from .measures import BoundaryMeasure, Field, SampleCloud

__all__ = [
    "OperatorHandle",
    "green_handle",
    "nalpha_handle",
    "green_op",
    "martin_op",
    "nalpha_op",
    "nalpha_measure",
    "cell_radii",
    "near_corrections",
]

_COINCIDE = 1e-12


def cell_radii(cloud: SampleCloud) -> np.ndarray:
    """Radius of the ball whose volume is the quadrature weight."""
    return (cloud.weights / cloud.domain.volume) ** (1.0 / cloud.domain.N)


def near_corrections(cloud: SampleCloud, kind: int, a: float, factor: float = 6.0, n_r: int = 16, n_dir: int = 64):
    """Self-interaction coefficients and near-row rescalings for every node.

    Around node ``i`` take the ball ``B_i`` of radius ``factor * rho_i``
    (``rho_i`` the cell radius).  The kernel integral ``I_i`` over ``B_i``
    inside the domain is computed with a local product rule (Gauss-Legendre
    in the radius, antipodal equal-weight directions) and compared with the
    discrete sum ``S_i`` over the neighbours in ``B_i``.  When ``S_i < I_i``
    the difference becomes the diagonal coefficient; otherwise the
    neighbour entries of row ``i`` are scaled by ``I_i / S_i``.  Either way
    constant fields are integrated exactly on ``B_i`` and all entries stay
    nonnegative.

    Returns ``(diag, rescale)`` with ``rescale`` a dict ``i -> (js, factor)``.
    """
    from scipy.spatial import cKDTree

    from ._core_py import _blob, _entries

    dom = cloud.domain
    N = dom.N
    pts, d, s, w = cloud.points, cloud.d, cloud.s, cloud.weights
    rho = cell_radii(cloud)
    R = factor * rho
    dirs, dw = _directions(N, n_dir)
    xr, wr = np.polynomial.legendre.leggauss(n_r)
    t = 0.5 * (xr + 1.0)
    wt = 0.5 * wr * t ** (N - 1)
    exact = np.zeros(cloud.n)
    block = 128
    for i0 in range(0, cloud.n, block):
        sl = slice(i0, min(i0 + block, cloud.n))
        rr = R[sl, None] * t[None, :]
        y = (pts[sl, None, None, :] + rr[:, :, None, None] * dirs[None, None, :, :]).reshape(-1, N)
        inside = np.einsum("ij,ij->i", y, y) < 1.0
        r = np.broadcast_to(rr[:, :, None], (rr.shape[0], n_r, dirs.shape[0])).reshape(-1)
        ii = np.repeat(np.arange(sl.start, sl.stop), n_r * dirs.shape[0])[inside]
        yi = y[inside]
        vals = np.zeros(y.shape[0])
        with np.errstate(all="ignore"):
            vals[inside] = _entries(kind, r[inside], d[ii], dist_boundary(dom, yi), s[ii], dist_sigma(dom, yi), a, N)
        exact[sl] = R[sl] ** N * np.einsum("irk,r,k->i", vals.reshape(rr.shape[0], n_r, -1), wt, dw)
    diag = exact.copy()
    rescale = {}
    tree = cKDTree(pts)
    for i, js in enumerate(tree.query_ball_point(pts, R)):
        js = np.asarray([j for j in js if j != i], dtype=np.int64)
        if not js.size:
            continue
        r = np.linalg.norm(pts[js] - pts[i], axis=1)
        with np.errstate(all="ignore"):
            k = _entries(kind, r, d[i], d[js], s[i], s[js], a, N) * _blob(r, rho[js], N)
        near = float(np.dot(w[js], k.astype(np.float32).astype(float)))
        if near <= exact[i]:
            diag[i] = exact[i] - near
        else:
            diag[i] = 0.0
            rescale[i] = (js, exact[i] / near)
    return diag, rescale


def _directions(N, n):
    from .measures import sphere_directions

    dirs, dw = sphere_directions(N, n)
    if N >= 3:
        # antipodal pairs cancel the odd part of the integrand
        dirs = np.vstack([dirs, -dirs])
        dw = np.concatenate([dw, dw]) / 2.0
    return dirs, dw


@dataclass(eq=False)
class OperatorHandle:
    """Kernel operator from a source cloud to target points.

    ``kind`` is ``"green"`` or ``"nalpha"``.  The kernel matrix is built on
    first use and cached.
    """

    kind: str
    domain: DomainModel
    params: SpectralParams
    source: SampleCloud
    alpha: float | None = None
    target_points: np.ndarray | None = None
    threads: int = 1
    _matrix: np.ndarray | None = field(default=None, repr=False)
    _diag: np.ndarray | None = field(default=None, repr=False)
    _rescale: dict | None = field(default=None, repr=False)

    def __post_init__(self):
        if self.kind not in ("green", "nalpha"):
            raise DomainError(f"unknown operator kind {self.kind!r}")
        if self.kind == "nalpha":
            if self.alpha is None:
                raise DomainError("nalpha operator needs alpha")
            if self.alpha > self.domain.N:
                raise DomainError("alpha must not exceed N")

    @property
    def same(self) -> bool:
        return self.target_points is None

    @property
    def log_case(self) -> bool:
        return self.domain.k == 0 and self.params.critical_hardy

    @property
    def kernel_kind(self) -> tuple[int, float]:
        if self.kind == "nalpha":
            return backend.KIND_NALPHA, float(self.alpha)
        if self.log_case:
            return backend.KIND_GREEN_LOG, self.domain.N / 2.0
        return backend.KIND_GREEN, float(self.params.alpha_minus)

    def targets(self):
        if self.same:
            return self.source.points, self.source.d, self.source.s
        t = np.ascontiguousarray(self.target_points, dtype=float)
        return t, dist_boundary(self.domain, t), dist_sigma(self.domain, t)

    @property
    def matrix(self) -> np.ndarray:
        if self._matrix is None:
            kind, a = self.kernel_kind
            xt, dt, st = self.targets()
            src = self.source
            M = backend.kernel_block(
                kind, xt, dt, st, src.points, src.d, src.s, cell_radii(src), a, self.domain.N, self.same, self.threads
            )
            if self.same:
                _ = self.diag
                for i, (js, lam) in self._rescale.items():
                    M[i, js] *= np.float32(lam)
            self._matrix = M
        return self._matrix

    @property
    def diag(self) -> np.ndarray:
        """Per-node coefficient of the self-cell contribution (zero off-cloud)."""
        if self._diag is None:
            if not self.same:
                self._diag = np.zeros(self.targets()[0].shape[0])
            else:
                kind, a = self.kernel_kind
                self._diag, self._rescale = near_corrections(self.source, kind, a)
        return self._diag

    def apply(self, values, mask=None) -> np.ndarray:
        """``sum_j w_j K(x_i, y_j) f_j`` plus the self-cell term.

        ``mask`` optionally zeroes sources (and their self-cell terms).
        """
        f = np.asarray(values, dtype=float)
        if mask is not None:
            f = np.where(mask, f, 0.0)
        g = np.ascontiguousarray(self.source.weights * f)
        out = backend.matvec(self.matrix, g, self.threads)
        if self.same:
            out += self.diag * f
        return out

    def row64(self, i: int, values, mask=None) -> float:
        """Float64 evaluation of ``apply(values)[i]`` from a fresh kernel row."""
        kind, a = self.kernel_kind
        xt, dt, st = self.targets()
        src = self.source
        f = np.asarray(values, dtype=float)
        if mask is not None:
            f = np.where(mask, f, 0.0)
        row = backend.kernel_row64(
            kind, xt[i], float(dt[i]), float(st[i]), src.points, src.d, src.s, cell_radii(src), a, self.domain.N
        )
        if self.same:
            row[i] = 0.0
            _ = self.diag
            if i in self._rescale:
                js, lam = self._rescale[i]
                row[js] *= lam
        val = float(np.dot(row, src.weights * f))
        if self.same:
            val += float(self.diag[i] * f[i])
        return val

    def release(self):
        self._matrix = None


def green_handle(cloud: SampleCloud, params: SpectralParams, target_points=None, threads: int = 1) -> OperatorHandle:
    return OperatorHandle("green", cloud.domain, params, cloud, target_points=target_points, threads=threads)


def nalpha_handle(cloud: SampleCloud, params: SpectralParams, alpha: float, target_points=None, threads: int = 1) -> OperatorHandle:
    return OperatorHandle("nalpha", cloud.domain, params, cloud, alpha=alpha, target_points=target_points, threads=threads)


def green_op(handle: OperatorHandle, f: Field) -> Field | np.ndarray:
    """Apply the Green operator; returns a Field on the cloud or an array at probes."""
    if handle.kind != "green":
        raise DomainError("green_op needs a green handle")
    out = handle.apply(f.values)
    if not np.all(np.isfinite(out)):
        raise FloatingPointError("green_op overflow")
    return Field(handle.source, out) if handle.same else out


def _boundary_distances(points, domain: DomainModel, nu: BoundaryMeasure):
    diff = points[:, None, :] - nu.points[None, :, :]
    r = np.sqrt(np.einsum("ijk,ijk->ij", diff, diff))
    if np.any(r < _COINCIDE):
        warnings.warn("boundary atom coincides with a cloud point; perturbing distance", RuntimeWarning)
        r = np.maximum(r, _COINCIDE)
    return r


def martin_op(domain: DomainModel, params: SpectralParams, points, nu: BoundaryMeasure) -> np.ndarray:
    """``sum_a m_a K(x, xi_a)`` at ``points``."""
    points = np.atleast_2d(np.asarray(points, dtype=float))
    if nu.points.shape[0] == 0:
        return np.zeros(points.shape[0])
    r = _boundary_distances(points, domain, nu)
    dx = dist_boundary(domain, points)[:, None]
    sx = dist_sigma(domain, points)[:, None]
    log_case = domain.k == 0 and params.critical_hardy
    K = martin_features(r, dx, sx, params.alpha_minus, domain.N, log_case)
    return K @ nu.masses


def nalpha_measure(domain: DomainModel, alpha: float, points, nu: BoundaryMeasure) -> np.ndarray:
    """``N_alpha[nu]`` at interior ``points`` for a boundary measure ``nu``.

    For ``y`` on the boundary ``d(y) = 0`` so the kernel is finite whenever
    ``x`` is interior.
    """
    points = np.atleast_2d(np.asarray(points, dtype=float))
    if nu.points.shape[0] == 0:
        return np.zeros(points.shape[0])
    r = _boundary_distances(points, domain, nu)
    dx = dist_boundary(domain, points)[:, None]
    sx = dist_sigma(domain, points)[:, None]
    sy = dist_sigma(domain, nu.points)[None, :]
    K = nalpha_features(r, dx, np.zeros_like(sy), sx, sy, alpha, domain.N)
    return K @ nu.masses


def nalpha_op(handle: OperatorHandle, b: float, theta: float, f: Field | None = None):
    """``N_alpha[d^b d_Sigma^theta f dx]`` (``f = 1`` when omitted)."""
    if handle.kind != "nalpha":
        raise DomainError("nalpha_op needs an nalpha handle")
    dom = handle.domain
    if not b > 0 or not theta + b > dom.k - dom.N:
        raise DomainError("need b > 0 and theta + b > k - N")
    src = handle.source
    dens = src.d**b * src.s**theta
    if f is not None:
        dens = dens * f.values
    out = handle.apply(dens)
    return Field(src, out) if handle.same else out
