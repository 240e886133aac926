"""Boundary measures, interior quadrature clouds, sampled fields and
near-boundary annulus quadrature.
"""
from __future__ import annotations

import json
import math
import struct
from dataclasses import dataclass, field
from functools import cached_property

import numpy as np
from scipy.special import ndtri
from scipy.stats import qmc

from .geometry import (
    DomainError,
    DomainModel,
    SpectralParams,
    dist_boundary,
    dist_sigma,
    phi_surrogate,
)
from .kernels import KernelSpec, martin_est

__all__ = [
    "SampleCloud",
    "Field",
    "BoundaryMeasure",
    "make_cloud",
    "lp_phi_norm",
    "integrate",
    "sphere_directions",
    "annulus_mass",
    "IntegrabilityReport",
    "integrability_scan",
    "write_cloud",
    "read_cloud",
    "write_field",
    "read_field",
]

MAGIC = b"HBVP"
FORMAT_VERSION = 1


@dataclass(frozen=True, eq=False)
class SampleCloud:
    """Weighted interior point cloud on the unit ball.

    Attributes
    ----------
    domain : DomainModel
    points : ndarray, shape (n, N)
    weights : ndarray, shape (n,)
        Positive quadrature weights summing to about ``|B_N|``.
    q : float
        Radial grading exponent toward the boundary.
    seed : int
    """

    domain: DomainModel
    points: np.ndarray
    weights: np.ndarray
    q: float = 3.0
    seed: int = 0

    def __post_init__(self):
        pts = np.ascontiguousarray(self.points, dtype=float)
        w = np.ascontiguousarray(self.weights, dtype=float)
        if pts.ndim != 2 or pts.shape[1] != self.domain.N or w.shape != (pts.shape[0],):
            raise DomainError("cloud points/weights have inconsistent shapes")
        if np.any(w <= 0):
            raise DomainError("cloud weights must be positive")
        object.__setattr__(self, "points", pts)
        object.__setattr__(self, "weights", w)

    @property
    def n(self) -> int:
        return self.points.shape[0]

    @cached_property
    def d(self) -> np.ndarray:
        d = dist_boundary(self.domain, self.points)
        if np.any(d <= 0):
            raise DomainError("cloud contains non-interior points")
        return d

    @cached_property
    def s(self) -> np.ndarray:
        return dist_sigma(self.domain, self.points)

    def total_weight(self) -> float:
        return float(np.sum(self.weights))

    def shell_counts(self, depth: int = 8, to: str = "boundary") -> np.ndarray:
        """Points per dyadic shell ``2^{-j-1} <= dist < 2^{-j}``, ``j < depth``."""
        dist = self.d if to == "boundary" else self.s
        j = np.floor(-np.log2(dist)).astype(int)
        return np.bincount(j[(j >= 0) & (j < depth)], minlength=depth)

    def subset(self, mask) -> "SampleCloud":
        return SampleCloud(self.domain, self.points[mask], self.weights[mask], self.q, self.seed)


@dataclass(frozen=True, eq=False)
class Field:
    cloud: SampleCloud
    values: np.ndarray

    def __post_init__(self):
        v = np.asarray(self.values, dtype=float)
        if v.shape != (self.cloud.n,):
            raise DomainError("field length differs from its cloud")
        if np.any(np.isnan(v)):
            raise DomainError("field contains NaN")
        object.__setattr__(self, "values", v)


@dataclass(frozen=True, eq=False)
class BoundaryMeasure:
    """Finite nonnegative measure on the unit sphere.

    Atoms and density samples are both stored as weighted points; ``is_atom``
    records which entries are Dirac masses (the solvers treat those with a
    singular-neighbourhood correction).
    """

    points: np.ndarray
    masses: np.ndarray
    is_atom: np.ndarray = field(default=None)

    def __post_init__(self):
        pts = np.atleast_2d(np.asarray(self.points, dtype=float))
        m = np.atleast_1d(np.asarray(self.masses, dtype=float))
        if pts.size == 0:
            pts = pts.reshape(0, pts.shape[-1] if pts.ndim == 2 else 0)
        if m.shape != (pts.shape[0],):
            raise DomainError("measure points/masses have inconsistent shapes")
        if np.any(m < 0) or not np.all(np.isfinite(m)):
            raise DomainError("measure masses must be finite and nonnegative")
        if pts.shape[0] and np.any(np.abs(np.linalg.norm(pts, axis=1) - 1.0) > 1e-9):
            raise DomainError("measure support must lie on the unit sphere")
        atom = np.ones(m.shape, dtype=bool) if self.is_atom is None else np.asarray(self.is_atom, dtype=bool)
        object.__setattr__(self, "points", pts)
        object.__setattr__(self, "masses", m)
        object.__setattr__(self, "is_atom", atom)

    @classmethod
    def zero(cls, N: int) -> "BoundaryMeasure":
        return cls(np.zeros((0, N)), np.zeros(0))

    @classmethod
    def dirac(cls, point, mass: float = 1.0) -> "BoundaryMeasure":
        return cls(np.asarray(point, dtype=float)[None, :], [mass])

    @classmethod
    def uniform_on_sigma(cls, domain: DomainModel, n: int, total_mass: float = 1.0, seed: int = 0):
        """Equal-weight samples of the k-sphere Sigma (a single atom when k = 0)."""
        if domain.k == 0:
            return cls.dirac(domain.sigma_point(), total_mass)
        g = qmc.Halton(domain.k + 1, scramble=True, rng=seed).random(n)
        z = ndtri(np.clip(g, 1e-12, 1 - 1e-12))
        z /= np.linalg.norm(z, axis=1)[:, None]
        pts = np.zeros((n, domain.N))
        pts[:, : domain.k + 1] = z
        return cls(pts, np.full(n, total_mass / n), np.zeros(n, dtype=bool))

    @property
    def total_mass(self) -> float:
        return float(np.sum(self.masses))

    def __add__(self, other: "BoundaryMeasure") -> "BoundaryMeasure":
        return BoundaryMeasure(
            np.vstack([self.points, other.points]),
            np.concatenate([self.masses, other.masses]),
            np.concatenate([self.is_atom, other.is_atom]),
        )

    def scaled(self, c: float) -> "BoundaryMeasure":
        return BoundaryMeasure(self.points, c * self.masses, self.is_atom)

    def split(self, mask) -> tuple["BoundaryMeasure", "BoundaryMeasure"]:
        """Return ``(1_E nu, 1_{E^c} nu)`` for a boolean mask over the support."""
        mask = np.asarray(mask, dtype=bool)
        a = BoundaryMeasure(self.points[mask], self.masses[mask], self.is_atom[mask])
        b = BoundaryMeasure(self.points[~mask], self.masses[~mask], self.is_atom[~mask])
        return a, b

    def support_kind(self, domain: DomainModel, atol: float = 1e-12) -> str:
        pos = self.masses > 0
        if not np.any(pos):
            return "empty"
        on = domain.on_sigma(self.points[pos], atol=atol)
        if np.all(on):
            return "sigma"
        if not np.any(on):
            return "off_sigma"
        return "mixed"


def _graded_density(r, q, N, volume):
    """Density of ``x = (1 - (1 - rho)^q) xi`` for ``rho xi`` uniform on the ball."""
    rho = 1.0 - (1.0 - r) ** (1.0 / q)
    jac = q * (1.0 - rho) ** (q - 1.0) * (r / rho) ** (N - 1)
    return 1.0 / (volume * jac)


def _ball_points(N, n, rng_seed, q):
    u = qmc.Halton(N + 1, scramble=True, rng=rng_seed).random(n)
    rho = np.clip(u[:, 0] ** (1.0 / N), 1e-12, 1.0 - 1e-12 ** (1.0 / q))
    g = ndtri(np.clip(u[:, 1:], 1e-12, 1 - 1e-12))
    g /= np.linalg.norm(g, axis=1)[:, None]
    r = 1.0 - (1.0 - rho) ** q
    return g * r[:, None], r


def make_cloud(
    domain: DomainModel, resolution: int, q: float = 3.0, seed: int = 0, uniform_fraction: float = 0.5
) -> SampleCloud:
    """Graded quasi-random quadrature cloud on the unit ball.

    Two scrambled Halton point sets are combined: an equal-volume one and a
    graded one pushed toward the boundary by ``r = 1 - (1 - rho)^q``.  Each
    point is weighted by the reciprocal of the combined sampling density, so
    the weights sum to ``|B_N|`` up to quadrature error while the interior
    keeps a usable point density.
    """
    if resolution < 1000:
        raise DomainError("resolution must be at least 1000 points")
    if not q > 0:
        raise DomainError("grading exponent q must be positive")
    if not 0.0 <= uniform_fraction < 1.0:
        raise DomainError("uniform_fraction must lie in [0, 1)")
    N = domain.N
    n = int(resolution)
    n_u = int(round(uniform_fraction * n))
    n_g = n - n_u
    s_u, s_g = np.random.SeedSequence(seed).spawn(2)
    parts = []
    if n_u:
        parts.append(_ball_points(N, n_u, np.random.default_rng(s_u), 1.0))
    parts.append(_ball_points(N, n_g, np.random.default_rng(s_g), q))
    pts = np.concatenate([p[0] for p in parts])
    r = np.concatenate([p[1] for p in parts])
    dens = n_g * _graded_density(r, q, N, domain.volume) + n_u / domain.volume
    return SampleCloud(domain, pts, 1.0 / dens, q=q, seed=seed)


def integrate(field: Field) -> float:
    return float(np.dot(field.cloud.weights, field.values))


def lp_phi_norm(field: Field, p: float, params: SpectralParams) -> float:
    """``(sum_i w_i |u_i|^p phi(x_i))^{1/p}``."""
    if p < 1:
        raise DomainError("p must be >= 1")
    if field.cloud.n == 0:
        raise DomainError("empty field")
    phi = phi_surrogate(field.cloud.domain, params, field.cloud.points)
    return float(np.dot(field.cloud.weights, np.abs(field.values) ** p * phi) ** (1.0 / p))


def sphere_directions(dim: int, n: int, seed: int = 0) -> tuple[np.ndarray, np.ndarray]:
    """Quadrature directions on ``S^{dim-1}`` with equal weights.

    ``dim == 1`` gives the two signs, ``dim == 2`` equispaced angles and
    higher dimensions scrambled Halton points pushed through the Gaussian map.
    """
    area = 2.0 * math.pi ** (dim / 2) / math.gamma(dim / 2)
    if dim == 1:
        return np.array([[1.0], [-1.0]]), np.array([1.0, 1.0])
    if dim == 2:
        th = 2.0 * math.pi * (np.arange(n) + 0.5) / n
        return np.stack([np.cos(th), np.sin(th)], axis=1), np.full(n, area / n)
    g = ndtri(np.clip(qmc.Halton(dim, scramble=True, rng=seed).random(n), 1e-12, 1 - 1e-12))
    g /= np.linalg.norm(g, axis=1)[:, None]
    return g, np.full(n, area / n)


def _frame(z):
    """Orthonormal frame whose first vector is the inward normal ``-z``."""
    N = z.shape[0]
    m = np.eye(N)
    m[:, 0] = -z
    qm, _ = np.linalg.qr(m)
    if qm[:, 0] @ (-z) < 0:
        qm[:, 0] *= -1
    return qm


def annulus_mass(
    domain: DomainModel,
    z,
    integrand,
    t_lo: float,
    t_hi: float,
    aperture: float = 0.0,
    n_t: int = 8,
    n_psi: int = 24,
    n_az: int = 16,
) -> float:
    """Integral of ``integrand`` over ``{t_lo <= |x - z| <= t_hi}`` inside the cone.

    The cone at the boundary point ``z`` is ``{d(x) > aperture * |x - z|}``;
    ``aperture = 0`` gives the whole ball.  On the unit sphere its section at
    radius ``t`` is the cap ``cos(psi) > aperture + t (1 - aperture^2) / 2``
    around the inward normal.  Log-radial and polar Gauss-Legendre nodes are
    combined with an azimuthal rule.
    """
    z = np.asarray(z, dtype=float)
    N = domain.N
    frame = _frame(z)
    az, az_w = sphere_directions(N - 1, n_az)
    xs, ws = np.polynomial.legendre.leggauss(n_t)
    ls = 0.5 * (math.log(t_hi) - math.log(t_lo)) * (xs + 1.0) + math.log(t_lo)
    ts = np.exp(ls)
    wt = 0.5 * (math.log(t_hi) - math.log(t_lo)) * ws * ts**N  # dt t^{N-1} = t^N d(log t)
    xp, wp = np.polynomial.legendre.leggauss(n_psi)
    total = 0.0
    for t, w_t in zip(ts, wt):
        cstar = aperture + t * (1.0 - aperture**2) / 2.0
        if cstar >= 1.0:
            continue
        pmax = math.acos(cstar)
        psi = 0.5 * pmax * (xp + 1.0)
        w_psi = 0.5 * pmax * wp * np.sin(psi) ** (N - 2)
        dirs = (
            np.cos(psi)[:, None, None] * frame[:, 0][None, None, :]
            + np.sin(psi)[:, None, None] * (az @ frame[:, 1:].T)[None, :, :]
        )
        x = z[None, None, :] + t * dirs
        vals = integrand(x.reshape(-1, N)).reshape(n_psi, -1)
        total += w_t * float(w_psi @ vals @ az_w)
    return total


@dataclass
class IntegrabilityReport:
    z: list
    p: float
    aperture: float
    t: np.ndarray
    mass: np.ndarray
    slope: float
    verdict: str
    critical: bool
    reference_exponent: float
    margin: float = 0.1

    def summary(self) -> dict:
        return {
            "z": [float(v) for v in self.z],
            "p": float(self.p),
            "aperture": float(self.aperture),
            "slope": float(self.slope),
            "verdict": self.verdict,
            "critical": bool(self.critical),
            "reference_exponent": float(self.reference_exponent),
            "margin": float(self.margin),
            "dyads": int(len(self.t)),
        }

    def csv_rows(self) -> list[tuple[float, float]]:
        return [(float(a), float(b)) for a, b in zip(self.t, self.mass)]


def reference_exponent(domain: DomainModel, params: SpectralParams, p: float, on_sigma: bool) -> float:
    """Power of ``t`` in ``K(x, z)^p phi(x)`` times ``t^{N-1}`` inside the cone."""
    N = domain.N
    if on_sigma:
        a = N / 2.0 if (domain.k == 0 and params.critical_hardy) else params.alpha_minus
        return N - a - (N - a - 1) * p
    return N - (N - 1) * p


def integrability_scan(
    domain: DomainModel,
    params: SpectralParams,
    p: float,
    z,
    aperture: float = 0.5,
    j_min: int = 3,
    j_max: int = 12,
    margin: float = 0.1,
) -> IntegrabilityReport:
    """Dyadic scan of ``K(., z)^p phi`` in the cone at ``z``.

    ``A(t_j)`` is the integral over ``t_j <= |x - z| <= 2 t_j`` with
    ``t_j = 2^{-j}``; the returned slope is the least-squares slope of
    ``log2(A(t)/t)`` against ``log2 t``, i.e. the radial density exponent.
    The integral diverges at ``z`` when that exponent is at most ``-1``.
    """
    if not 0.0 < aperture < 1.0:
        raise DomainError("cone aperture must lie in (0, 1)")
    z = np.asarray(z, dtype=float)
    if abs(np.linalg.norm(z) - 1.0) > 1e-12:
        raise DomainError("scan centre must be a boundary point")
    spec = KernelSpec("martin", domain, params)

    def integrand(x):
        return martin_est(spec, x, z) ** p * phi_surrogate(domain, params, x)

    js = np.arange(j_min, j_max + 1)
    ts = 2.0 ** (-js.astype(float))
    with np.errstate(over="ignore"):
        A = np.array([annulus_mass(domain, z, integrand, t, 2 * t, aperture) for t in ts])
    ok = np.isfinite(A) & (A > 0)
    if ok.sum() < 4:
        raise DomainError("fewer than 4 usable dyads")
    slope = float(np.polyfit(np.log2(ts[ok]), np.log2(A[ok] / ts[ok]), 1)[0])
    on = bool(domain.on_sigma(z[None, :], atol=1e-12)[0])
    return IntegrabilityReport(
        z=list(z),
        p=p,
        aperture=aperture,
        t=ts[ok],
        mass=A[ok],
        slope=slope,
        verdict="divergent" if slope <= -1.0 + margin else "convergent",
        critical=abs(slope + 1.0) <= margin,
        reference_exponent=reference_exponent(domain, params, p, on),
        margin=margin,
    )


def _write_columns(path, kind: str, meta: dict, cols: list[np.ndarray]):
    header = json.dumps({"kind": kind, **meta}, sort_keys=True).encode()
    nrows = cols[0].shape[0] if cols else 0
    with open(path, "wb") as fh:
        fh.write(MAGIC)
        fh.write(struct.pack("<II", FORMAT_VERSION, len(header)))
        fh.write(header)
        fh.write(struct.pack("<QI", nrows, len(cols)))
        for c in cols:
            fh.write(np.ascontiguousarray(c, dtype="<f8").tobytes())


def _read_columns(path):
    with open(path, "rb") as fh:
        if fh.read(4) != MAGIC:
            raise ValueError(f"{path}: not an HBVP file")
        version, hlen = struct.unpack("<II", fh.read(8))
        if version != FORMAT_VERSION:
            raise ValueError(f"{path}: unsupported version {version}")
        meta = json.loads(fh.read(hlen).decode())
        nrows, ncols = struct.unpack("<QI", fh.read(12))
        cols = [np.frombuffer(fh.read(8 * nrows), dtype="<f8").astype(float) for _ in range(ncols)]
    return meta, cols


def write_cloud(path, cloud: SampleCloud):
    d = cloud.domain
    meta = {"N": d.N, "k": d.k, "beta0": d.beta0, "q": cloud.q, "seed": cloud.seed}
    _write_columns(path, "cloud", meta, [cloud.points[:, i] for i in range(d.N)] + [cloud.weights])


def read_cloud(path) -> SampleCloud:
    meta, cols = _read_columns(path)
    if meta["kind"] != "cloud":
        raise ValueError(f"{path}: expected a cloud file")
    dom = DomainModel(meta["N"], meta["k"], meta["beta0"])
    pts = np.stack(cols[:-1], axis=1)
    return SampleCloud(dom, pts, cols[-1], q=meta["q"], seed=meta["seed"])


def write_field(path, f: Field, name: str = "u"):
    """Field file: cloud columns followed by the value column."""
    c = f.cloud
    d = c.domain
    meta = {"N": d.N, "k": d.k, "beta0": d.beta0, "q": c.q, "seed": c.seed, "name": name}
    cols = [c.points[:, i] for i in range(d.N)] + [c.weights, f.values]
    _write_columns(path, "field", meta, cols)


def read_field(path) -> Field:
    meta, cols = _read_columns(path)
    if meta["kind"] != "field":
        raise ValueError(f"{path}: expected a field file")
    dom = DomainModel(meta["N"], meta["k"], meta["beta0"])
    cloud = SampleCloud(dom, np.stack(cols[: dom.N], axis=1), cols[dom.N], q=meta["q"], seed=meta["seed"])
    return Field(cloud, cols[dom.N + 1])
