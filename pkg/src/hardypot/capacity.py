"""Upper and lower estimates of weighted ``N_alpha`` capacities.

For a set ``E`` (a finite union of boundary caps or interior balls)::

    Cap(E) = inf { int phi^s d^b d_Sigma^theta dx : N_alpha[d^b d_Sigma^theta phi] >= 1 on E }.

Both bounds are computed for the same discrete problem: a quadrature
``(y_j, m_j)`` of the weighted measure ``d^b d_Sigma^theta dx`` and a
finite sample of ``E``.  The primal side returns the energy of a feasible
density, hence an upper bound of the discrete capacity; the dual side
normalises trial measures on the sample so that
``|| N_alpha[omega] ||_{L^{s'}} = 1`` and returns ``omega(E)^s``, a lower
bound by Hoelder's inequality.

The quadrature is a union of log-radial product grids centred at the set
components plus a uniform Halton component, combined with weights
``1 / sum_c density_c(y)`` so that every component can be refined without
breaking the others.
"""
from __future__ import annotations

import math
from dataclasses import dataclass, field

import numpy as np
from scipy.integrate import quad
from scipy.stats import qmc

from .geometry import DomainError, DomainModel, dist_boundary, dist_sigma
from .kernels import nalpha_features
from .measures import sphere_directions

__all__ = [
    "Cap",
    "Ball",
    "SigmaCap",
    "TargetSet",
    "CapacityQuadrature",
    "CapacityProblem",
    "CapacityResult",
    "cap_primal_upper",
    "cap_dual_lower",
    "capacity_bounds",
    "vartheta",
    "riesz_sigma_cap",
]


def vartheta(p: float, alpha_plus: float) -> float:
    """``(alpha_+ + 1 - p (alpha_+ - 1)) / p``."""
    if not p > 1:
        raise DomainError("p must exceed 1")
    return (alpha_plus + 1.0 - p * (alpha_plus - 1.0)) / p


@dataclass(frozen=True)
class Cap:
    """Boundary cap ``{xi in dOmega : |xi - centre| <= radius}``."""

    centre: tuple
    radius: float


@dataclass(frozen=True)
class SigmaCap:
    """Cap of the k-sphere Sigma: ``{xi in Sigma : |xi - centre| <= radius}``.

    Sigma spans the first ``k + 1`` coordinates; ``k >= 1``.
    """

    centre: tuple
    radius: float
    k: int


@dataclass(frozen=True)
class Ball:
    """Closed interior ball (must stay inside the domain)."""

    centre: tuple
    radius: float


def _tangent_basis(c):
    N = c.shape[0]
    q, _ = np.linalg.qr(np.column_stack([c, np.eye(N)]))
    return q[:, 1:N]


class TargetSet:
    """Finite union of caps and balls with a nested log-polar sample.

    Each component is sampled on rings at radii ``radius * 2^{-i/rings}``
    for ``i < rings * levels`` plus the centre, with ``n_ang`` directions
    per ring.  With an absolute ``floor`` the rings instead stop at the
    last radius ``>= floor``; a cap of half the radius about the same centre
    then reuses exactly the inner rings, so samples of nested dyadic caps
    are nested.
    """

    def __init__(self, components, rings: int = 4, levels: int = 6, n_ang: int = 24, floor: float | None = None):
        self.components = tuple(components)
        pts, wts, owner = [], [], []
        for c_idx, comp in enumerate(self.components):
            n_rings = rings * levels
            if floor is not None:
                if not 0 < floor <= comp.radius:
                    raise DomainError("floor must lie in (0, radius]")
                n_rings = int(math.floor(rings * math.log2(comp.radius / floor) + 1e-9)) + 1
            p, w = self._sample(comp, rings, n_rings, n_ang)
            pts.append(p)
            wts.append(w)
            owner.append(np.full(p.shape[0], c_idx))
        if pts:
            self.points = np.vstack(pts)
            self.weights = np.concatenate(wts)
            self.owner = np.concatenate(owner)
        else:
            self.points = np.zeros((0, 0))
            self.weights = np.zeros(0)
            self.owner = np.zeros(0, dtype=int)

    @property
    def empty(self) -> bool:
        return len(self.components) == 0

    @staticmethod
    def _sample(comp, rings, n_rings, n_ang):
        c = np.asarray(comp.centre, dtype=float)
        N = c.shape[0]
        radii = comp.radius * 2.0 ** (-np.arange(n_rings) / rings)
        if isinstance(comp, SigmaCap):
            k = comp.k
            if not 1 <= k < N or abs(np.linalg.norm(c) - 1.0) > 1e-12 or np.any(c[k + 1 :] != 0):
                raise DomainError("Sigma cap centre must lie on Sigma (k >= 1)")
            dirs, _ = sphere_directions(k, n_ang, seed=0)
            T = np.zeros((N, k))
            T[: k + 1] = _tangent_basis(c[: k + 1])
            pts = [c]
            for rho in radii:
                psi = 2.0 * math.asin(min(rho / 2.0, 1.0))
                pts.append(np.cos(psi) * c[None, :] + np.sin(psi) * dirs @ T.T)
            dim = k
        elif isinstance(comp, Cap):
            if abs(np.linalg.norm(c) - 1.0) > 1e-12:
                raise DomainError("cap centre must lie on the unit sphere")
            dirs, _ = sphere_directions(N - 1, n_ang, seed=0)
            T = _tangent_basis(c)
            pts = [c]
            for rho in radii:
                # chordal radius rho -> polar angle psi
                psi = 2.0 * math.asin(min(rho / 2.0, 1.0))
                pts.append(np.cos(psi) * c[None, :] + np.sin(psi) * dirs @ T.T)
            dim = N - 1
        else:
            if np.linalg.norm(c) + comp.radius >= 1.0:
                raise DomainError("ball must lie inside the domain")
            dirs, _ = sphere_directions(N, n_ang, seed=0)
            pts = [c] + [c[None, :] + rho * dirs for rho in radii]
            dim = N
        # ring weights: measure of the annulus between ring midpoints
        inner = radii[-1] * 2.0 ** (-0.5 / rings)
        edges = np.concatenate([[comp.radius], np.sqrt(radii[:-1] * radii[1:]), [inner]])
        ann = edges[:-1] ** dim - edges[1:] ** dim
        n_d = pts[1].shape[0]
        w = [np.array([inner**dim])] + [np.full(n_d, a / n_d) for a in ann]
        return np.vstack([np.atleast_2d(p) for p in pts]), np.concatenate(w)

    def mask_for(self, comps) -> np.ndarray:
        """Sample indices belonging to the given component indices."""
        return np.isin(self.owner, list(comps))


class CapacityQuadrature:
    """Quadrature of ``d^b d_Sigma^theta dx`` on the unit ball.

    Components: one log-radial grid per centre (radii ``[r_min, 2]``,
    ``n_r`` cells, ``n_dir`` directions) and ``n_uniform`` Halton points.
    """

    def __init__(self, domain: DomainModel, centres, b: float, theta: float, n_r: int = 40,
                 n_dir: int = 400, r_min: float = 1e-4, n_uniform: int = 4000, seed: int = 0):
        if not b > 0 or not theta + b > domain.k - domain.N:
            raise DomainError("need b > 0 and theta + b > k - N")
        N = domain.N
        self.domain, self.b, self.theta = domain, b, theta
        centres = [np.asarray(c, dtype=float) for c in centres]
        dirs, _ = sphere_directions(N, n_dir, seed)
        L = math.log(2.0 / r_min)
        u = np.log(r_min) + (np.arange(n_r) + 0.5) * L / n_r
        r = np.exp(u)
        chunks = []
        for c in centres:
            pts = (c[None, None, :] + r[:, None, None] * dirs[None, :, :]).reshape(-1, N)
            chunks.append(pts[np.einsum("ij,ij->i", pts, pts) < 1.0])
        if n_uniform:
            h = qmc.Halton(N + 1, scramble=True, rng=seed).random(n_uniform)
            from scipy.special import ndtri

            g = ndtri(np.clip(h[:, :N], 1e-12, 1 - 1e-12))
            g /= np.linalg.norm(g, axis=1)[:, None]
            chunks.append(g * h[:, N : N + 1] ** (1.0 / N))
        pts = np.vstack(chunks)
        d = dist_boundary(domain, pts)
        keep = d > 0
        pts = pts[keep]
        area = domain.sphere_area
        dens = np.zeros(pts.shape[0])
        for c in centres:
            rr = np.linalg.norm(pts - c, axis=1)
            inside = (rr > r_min) & (rr < 2.0)
            dens += np.where(inside, n_r * n_dir / (L * area * np.maximum(rr, r_min) ** N), 0.0)
        if n_uniform:
            dens += n_uniform / domain.volume
        self.points = pts
        self.volume_weights = 1.0 / dens
        self.d = dist_boundary(domain, pts)
        self.s = dist_sigma(domain, pts)
        self.masses = self.volume_weights * self.d**b * self.s**theta

    @property
    def n(self) -> int:
        return self.points.shape[0]


@dataclass
class CapacityProblem:
    """Discretised capacity problem ``Cap_{N_alpha, s}^{b, theta}(E)``."""

    domain: DomainModel
    target: TargetSet
    alpha: float
    b: float
    theta: float
    s: float
    quadrature: CapacityQuadrature | None = None
    tol: float = 1e-6
    max_iter: int = 400
    _A: np.ndarray | None = field(default=None, repr=False)

    def __post_init__(self):
        if not self.s > 1:
            raise DomainError("s must exceed 1")
        if self.alpha > self.domain.N:
            raise DomainError("alpha must not exceed N")
        if not self.b > 0 or not self.theta + self.b > self.domain.k - self.domain.N:
            raise DomainError("need b > 0 and theta + b > k - N")
        if self.quadrature is None and not self.target.empty:
            centres = [c.centre for c in self.target.components]
            self.quadrature = CapacityQuadrature(self.domain, centres, self.b, self.theta)

    @property
    def kernel(self) -> np.ndarray:
        """``N_alpha(e_i, y_j)`` for samples ``e_i`` of ``E`` and nodes ``y_j``."""
        if self._A is None:
            e = self.target.points
            q = self.quadrature
            r = np.linalg.norm(e[:, None, :] - q.points[None, :, :], axis=2)
            de = dist_boundary(self.domain, e)[:, None]
            se = dist_sigma(self.domain, e)[:, None]
            with np.errstate(divide="ignore"):
                K = nalpha_features(np.maximum(r, 1e-300), de, q.d[None, :], se, q.s[None, :], self.alpha, self.domain.N)
            self._A = K
        return self._A

    def potential(self, phi, rows=None) -> np.ndarray:
        """``N_alpha[d^b d_Sigma^theta phi]`` at the samples of ``E``."""
        K = self.kernel if rows is None else self.kernel[rows]
        return K @ (self.quadrature.masses * phi)

    def energy(self, phi) -> float:
        return float(np.dot(self.quadrature.masses, phi**self.s))


@dataclass
class CapacityResult:
    value: float
    iterations: int
    feasible: bool
    phi: np.ndarray | None = field(default=None, repr=False)
    detail: dict = field(default_factory=dict)

    def as_dict(self) -> dict:
        return {"value": self.value, "iterations": self.iterations, "feasible": self.feasible, **self.detail}


def _restore(problem, phi, rows):
    m = float(np.min(problem.potential(phi, rows)))
    if m <= 0:
        return None
    return phi / m


def _dual_candidates(problem):
    """Trial measures on the sample: uniform on each component and on the union,
    and edge-weighted profiles ``(1 - |e - c|^2 / R^2)^{-g}``."""
    t = problem.target
    comps = range(len(t.components))
    out = []
    for gamma in (0.0, 0.25, 0.5):
        base = np.zeros(t.weights.shape[0])
        for ci in comps:
            sel = t.owner == ci
            comp = t.components[ci]
            rel = np.linalg.norm(t.points[sel] - np.asarray(comp.centre), axis=1) / comp.radius
            prof = np.maximum(1.0 - rel**2, 0.1)
            base[sel] = t.weights[sel] * prof ** (-gamma)
        out.append(base)
        for ci in comps:
            out.append(np.where(t.owner == ci, base, 0.0))
    return out


def cap_dual_lower(problem: CapacityProblem) -> CapacityResult:
    """Best ``omega(E)^s`` over the trial family with ``||N_alpha[omega]||_{L^{s'}} = 1``.

    The trial family covers uniform and edge-weighted measures on each
    component and on the union, plus two-component mixtures.
    """
    if problem.target.empty:
        return CapacityResult(0.0, 0, True)
    sp = problem.s / (problem.s - 1.0)
    K = problem.kernel
    m = problem.quadrature.masses
    cands = _dual_candidates(problem)
    ncomp = len(problem.target.components)
    if ncomp > 1:
        singles = cands[1 : 1 + ncomp]
        for lam in (0.25, 0.5, 0.75):
            for i in range(ncomp):
                for j in range(i + 1, ncomp):
                    cands.append(lam * singles[i] / singles[i].sum() + (1 - lam) * singles[j] / singles[j].sum())
    best, best_w = 0.0, None
    for w in cands:
        pot = w @ K
        norm = float(np.dot(m, pot**sp)) ** (1.0 / sp)
        if norm == 0.0:
            raise DomainError("dual constraint norm vanishes (degenerate set)")
        if not math.isfinite(norm):
            continue
        val = (w.sum() / norm) ** problem.s
        if val > best:
            best, best_w = val, w / norm
    return CapacityResult(best, len(cands), True, detail={"measure_mass": float(best_w.sum()) if best_w is not None else 0.0})


def cap_primal_upper(problem: CapacityProblem, candidates=(), penalty: float = 10.0) -> CapacityResult:
    """Feasible-density upper bound.

    Starts from the density dual to the best trial measure,
    ``phi = N_alpha^*[omega]^{s'-1}``, then runs projected gradient on
    ``energy + (lambda/2) sum_i (1 - A phi)_+^2`` with a diagonal metric and
    backtracking, raising ``lambda`` between stages.  Every iterate is
    rescaled to exact feasibility before its energy is recorded, so the
    returned value is always an upper bound.  Extra feasible densities in
    ``candidates`` (for the same quadrature) join the comparison.
    """
    if problem.target.empty:
        return CapacityResult(0.0, 0, True, np.zeros(0))
    q = problem.quadrature
    s = problem.s
    sp = s / (s - 1.0)
    K = problem.kernel
    m = q.masses
    w = problem.target.weights
    pool = []
    for c in _dual_candidates(problem)[:1]:
        pot = c @ K
        pool.append(pot ** (sp - 1.0))
    pool.extend(np.asarray(c, dtype=float) for c in candidates)
    best_phi, best = None, math.inf
    for c in pool:
        phi = _restore(problem, c, None)
        if phi is not None and problem.energy(phi) < best:
            best, best_phi = problem.energy(phi), phi
    if best_phi is None:
        return CapacityResult(math.inf, 0, False, detail={"gap": "no feasible start"})
    phi = best_phi.copy()
    lam = penalty * best / max(float(np.sum(w)), 1e-300)
    it = 0
    step = 1.0
    wn = w / w.sum()

    def objective(f):
        viol = np.maximum(1.0 - K @ (m * f), 0.0)
        return problem.energy(f) + 0.5 * lam * float(np.dot(wn, viol**2)) * best

    for stage in range(4):
        val = objective(phi)
        for _ in range(problem.max_iter // 4):
            it += 1
            viol = np.maximum(1.0 - K @ (m * phi), 0.0)
            # gradient divided by the node masses
            g = s * phi ** (s - 1.0) - lam * best * ((wn * viol) @ K)
            while True:
                trial = np.maximum(phi - step * g * np.maximum(phi, 1e-12) ** (2.0 - s), 0.0)
                tv = objective(trial)
                if tv <= val - 1e-4 * step * float(np.dot(g * m, g * np.maximum(phi, 1e-12) ** (2.0 - s))) or step < 1e-12:
                    break
                step *= 0.5
            converged = abs(val - tv) <= problem.tol * abs(val)
            phi, val = trial, tv
            step = min(step * 2.0, 1.0)
            restored = _restore(problem, phi, None)
            if restored is not None:
                e = problem.energy(restored)
                if e < best:
                    best, best_phi = e, restored
            if converged:
                break
        lam *= 10.0
    return CapacityResult(best, it, True, best_phi)


def capacity_bounds(problem: CapacityProblem) -> dict:
    lo = cap_dual_lower(problem)
    hi = cap_primal_upper(problem)
    return {
        "lower": lo.value,
        "upper": hi.value,
        "ratio": hi.value / lo.value if lo.value > 0 else math.inf,
        "iterations": hi.iterations,
        "feasible": hi.feasible,
    }


def riesz_sigma_cap(
    k: int,
    radius: float,
    theta: float,
    s: float,
    n_grid: int = 24,
    extent: float = 4.0,
    centres=((0.0,),),
    n_iter: int = 200,
) -> tuple[float, float]:
    """Riesz capacity ``inf ||f||_{L^s(R^k)}^s`` subject to ``|.|^{theta-k} * f >= 1``
    on a union of ``k``-balls of the given radius (flat chart of Sigma).

    Densities live on a uniform grid covering ``extent`` radii around each
    centre; the constraint is imposed at the grid nodes inside the balls.
    The dual norm adds the analytic tail of the potential outside the grid.
    Returns ``(lower, upper)``.
    """
    if not 0 < theta:
        raise DomainError("theta must be positive")
    if theta >= k or theta * s >= k:
        raise DomainError("theta * s >= k: every nonempty set has positive capacity")
    centres = [np.resize(np.asarray(c, dtype=float), k) for c in centres]
    h = 2.0 * extent * radius / n_grid
    axis = (np.arange(n_grid) + 0.5) * h - extent * radius
    grid = np.stack(np.meshgrid(*([axis] * k), indexing="ij"), axis=-1).reshape(-1, k)
    nodes = np.unique(np.vstack([c + grid for c in centres]).round(14), axis=0)
    inside = np.zeros(nodes.shape[0], dtype=bool)
    for c in centres:
        inside |= np.linalg.norm(nodes - c, axis=1) <= radius
    e = nodes[inside]
    r = np.linalg.norm(e[:, None, :] - nodes[None, :, :], axis=2)
    # kernel averaged over the source cell; the self cell uses the exact mean
    with np.errstate(divide="ignore"):
        K = np.where(r > 0, r ** (theta - k), h ** (theta - k) * _cube_riesz(k, theta))
    vol = h**k
    sp = s / (s - 1.0)
    tail = _riesz_tail(k, theta, sp, centres, radius, extent * radius)

    def dual(omega):
        pot = omega @ K
        norm = (vol * float(np.sum(pot**sp)) + tail * omega.sum() ** sp) ** (1.0 / sp)
        return (omega.sum() / norm) ** s, pot

    omega = np.full(e.shape[0], vol)
    lower, pot = dual(omega)
    upper = math.inf
    for _ in range(n_iter):
        phi = pot ** (sp - 1.0)
        phi = phi / float(np.min(K @ (vol * phi)))
        upper = min(upper, vol * float(np.sum(phi**s)))
        # multiplicative reweighting toward the equilibrium measure
        omega = omega * np.clip(1.0 / (K @ (vol * phi)), 0.5, 2.0) ** 0.5
        val, pot = dual(omega)
        lower = max(lower, val)
    return lower, upper


def _riesz_tail(k, theta, sp, centres, radius, half_width):
    """Bound of ``int |x - y|^{(theta-k) sp} dx`` outside the grid, uniform in ``y`` in ``E``.

    Outside the grid ``|x - c0| >= half_width`` and ``|x - y| >= |x - c0| - rho``
    with ``rho`` the largest distance from ``c0`` to ``E``.
    """
    c0 = centres[0]
    rho = max(float(np.linalg.norm(c - c0)) for c in centres) + radius
    if rho >= half_width:
        raise DomainError("grid extent must exceed the set diameter")
    area = 2.0 * math.pi ** (k / 2) / math.gamma(k / 2)
    q = (theta - k) * sp
    val, _ = quad(lambda t: (t - rho) ** q * t ** (k - 1), half_width, math.inf)
    return area * val


def _cube_riesz(k, theta, n=64):
    """``int_{[-1/2,1/2]^k} |x|^{theta-k} dx`` by midpoint rule on a graded split."""
    # scale invariance: I = sum over dyadic shells, each a factor 2^{-theta} of the previous
    axis = (np.arange(n) + 0.5) / n - 0.5
    g = np.stack(np.meshgrid(*([axis] * k), indexing="ij"), axis=-1).reshape(-1, k)
    rr = np.linalg.norm(g, axis=1)
    outer = np.abs(g).max(axis=1) >= 0.25
    shell = float(np.sum(rr[outer] ** (theta - k))) / n**k
    return shell / (1.0 - 2.0**-theta)
