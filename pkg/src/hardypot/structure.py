"""Sampling checks of the quasi-metric and volume-growth structure behind the
``N_alpha`` kernel.

Quasi-metric balls ``B(x, s) = {y : 1/N_alpha(x, y) < s}`` are measured with
a local spherical quadrature centred at ``x`` (log-spaced radii times
quasi-random directions).  Sorting the nodes by quasi-distance turns one
quadrature into the whole function ``s -> omega(B(x, s))`` and into the
integrals ``int_0^r omega(B(x, s)) s^{-2} ds``.
"""
from __future__ import annotations

import math
from dataclasses import dataclass, field

import numpy as np

from .geometry import DomainError, DomainModel, SpectralParams, dist_boundary, dist_sigma
from .kernels import nalpha_features
from .measures import sphere_directions

__all__ = [
    "CheckReport",
    "LocalQuadrature",
    "quasi_distance",
    "check_quasimetric",
    "measure_ball",
    "volume_regimes",
    "check_volume_regimes",
    "check_doubling",
    "check_condition_24",
    "point_at",
]


@dataclass
class CheckReport:
    name: str
    verdict: str
    values: dict = field(default_factory=dict)

    @property
    def passed(self) -> bool:
        return self.verdict == "pass"

    def as_dict(self) -> dict:
        return {"name": self.name, "verdict": self.verdict, "pass": self.passed, **self.values}


def quasi_distance(domain: DomainModel, alpha: float, x, y) -> np.ndarray:
    """``1 / N_alpha(x, y)`` for rows of ``x`` and ``y`` (broadcast)."""
    x = np.atleast_2d(np.asarray(x, dtype=float))
    y = np.atleast_2d(np.asarray(y, dtype=float))
    r = np.linalg.norm(x - y, axis=-1)
    with np.errstate(divide="ignore"):
        val = nalpha_features(
            r, dist_boundary(domain, x), dist_boundary(domain, y), dist_sigma(domain, x), dist_sigma(domain, y), alpha, domain.N
        )
        return np.where(r > 0, 1.0 / val, 0.0)


def point_at(domain: DomainModel, d: float, ds: float) -> np.ndarray:
    """Interior point with ``d_boundary = d`` and ``d_Sigma`` equal to ``ds``.

    The point lies in the plane spanned by ``e1`` and the last axis
    (``e2`` when ``k = 0``).  Requires ``d <= ds`` and ``k < N - 1``.
    """
    if not 0 < d <= ds or domain.k == domain.N - 1:
        raise DomainError("need 0 < d <= d_Sigma and k < N - 1")
    rad = 1.0 - d
    e1 = np.eye(domain.N)[0]
    e2 = np.eye(domain.N)[1 if domain.k == 0 else -1]
    lo, hi = 0.0, math.pi
    for _ in range(200):
        phi = 0.5 * (lo + hi)
        x = rad * (math.cos(phi) * e1 + math.sin(phi) * e2)
        if dist_sigma(domain, x) < ds:
            lo = phi
        else:
            hi = phi
    return x


class LocalQuadrature:
    """Quadrature of ``d^b d_Sigma^theta dy`` on the domain, centred at ``x``.

    Radii are log-spaced in ``[r_min, r_max]`` (midpoint rule in ``log r``);
    the inner ball of radius ``r_min`` is lumped into one node at ``x``.
    """

    def __init__(self, domain: DomainModel, x, b: float, theta: float, alpha: float | None,
                 r_min: float = 1e-10, r_max: float = 2.0, n_r: int = 800, n_dir: int = 1500, seed: int = 0):
        if not b > 0 or not theta + b > domain.k - domain.N:
            raise DomainError("need b > 0 and theta + b > k - N")
        self.domain, self.x, self.b, self.theta, self.alpha = domain, np.asarray(x, dtype=float), b, theta, alpha
        N = domain.N
        dirs, dw = sphere_directions(N, n_dir, seed)
        u = np.linspace(math.log(r_min), math.log(r_max), n_r + 1)
        du = np.diff(u)
        uc = 0.5 * (u[1:] + u[:-1])
        r = np.exp(uc)
        pts = self.x[None, None, :] + r[:, None, None] * dirs[None, :, :]
        pts = pts.reshape(-1, N)
        w = (r**N * du)[:, None] * dw[None, :]
        w = w.reshape(-1)
        inside = np.einsum("ij,ij->i", pts, pts) < 1.0
        pts, w = pts[inside], w[inside]
        dens = dist_boundary(domain, pts) ** b * dist_sigma(domain, pts) ** theta
        x0 = self.x[None, :]
        w0 = domain.volume * r_min**N * (dist_boundary(domain, x0) ** b * dist_sigma(domain, x0) ** theta)[0]
        self.points = np.vstack([x0, pts])
        self.masses = np.concatenate([[w0], w * dens])
        if alpha is None:
            key = np.linalg.norm(self.points - self.x, axis=1)
            key[0] = r_min
        else:
            key = quasi_distance(domain, alpha, self.x[None, :], self.points)
            key[0] = quasi_distance(domain, alpha, self.x[None, :], (self.x + r_min * dirs[0])[None, :])[0]
        order = np.argsort(key, kind="stable")
        self.key = key[order]
        self.cum = np.cumsum(self.masses[order])
        self._inv = np.cumsum((self.masses[order] / self.key)[::-1])[::-1]

    def mass(self, s) -> np.ndarray:
        """``omega(B(x, s))`` for an array of radii."""
        s = np.asarray(s, dtype=float)
        i = np.searchsorted(self.key, s, side="left")
        return np.where(i > 0, self.cum[np.maximum(i - 1, 0)], 0.0)

    def wolff(self, r) -> np.ndarray:
        """``int_0^r omega(B(x, s)) s^{-2} ds = sum_{key_j < r} m_j (1/key_j - 1/r)``."""
        r = np.asarray(r, dtype=float)
        i = np.searchsorted(self.key, r, side="left")
        head = np.where(i > 0, self.cum[np.maximum(i - 1, 0)], 0.0)
        tail_inv = np.concatenate([self._inv, [0.0]])
        inv_sum = self._inv[0] - tail_inv[i]
        return inv_sum - head / r


def measure_ball(domain: DomainModel, x, s, b: float, theta: float, alpha: float | None = None, **quad_kw):
    """``omega(B(x, s))`` with ``d omega = d^b d_Sigma^theta dy``.

    ``alpha=None`` uses the Euclidean ball, otherwise the quasi-metric ball
    of ``1/N_alpha``.
    """
    return LocalQuadrature(domain, x, b, theta, alpha, **quad_kw).mass(s)


def _fibre_triples(domain, n, rng):
    """Multi-scale triples: ``x`` graded toward the boundary, ``y`` and ``z``
    at log-uniform offsets from ``x`` or ``z`` close to the segment."""
    N = domain.N

    def ball(m):
        g = rng.standard_normal((m, N))
        g /= np.linalg.norm(g, axis=1)[:, None]
        depth = 10.0 ** rng.uniform(-6, 0, m)
        return g * (1.0 - depth)[:, None]

    def offset(base):
        g = rng.standard_normal(base.shape)
        g /= np.linalg.norm(g, axis=1)[:, None]
        return base + g * (10.0 ** rng.uniform(-6, 0.3, base.shape[0]))[:, None]

    out = []
    need = n
    while need > 0:
        m = 2 * need + 16
        x = ball(m)
        y = offset(x)
        z = offset(x)
        # a third of the triples put z near the segment [x, y], where the
        # triangle ratio of a power of |x - y| peaks
        seg = rng.random(m) < 1.0 / 3.0
        t = rng.random(m)[:, None]
        jitter = rng.standard_normal((m, N)) * (np.linalg.norm(y - x, axis=1) * 10.0 ** rng.uniform(-4, -1, m))[:, None]
        z[seg] = (x + t * (y - x) + jitter)[seg]
        ok = (np.einsum("ij,ij->i", y, y) < 1.0) & (np.einsum("ij,ij->i", z, z) < 1.0)
        ok &= (dist_sigma(domain, x) > 0) & (dist_sigma(domain, y) > 0) & (dist_sigma(domain, z) > 0)
        ok &= (np.linalg.norm(x - y, axis=1) > 0) & (np.linalg.norm(x - z, axis=1) > 0) & (np.linalg.norm(y - z, axis=1) > 0)
        out.append((x[ok][:need], y[ok][:need], z[ok][:need]))
        need -= int(min(ok.sum(), need))
    return tuple(np.vstack([o[i] for o in out]) for i in range(3))


def _max_ratio(domain, alpha, n, seed):
    rng = np.random.default_rng(seed)
    x, y, z = _fibre_triples(domain, n, rng)
    dxy = quasi_distance(domain, alpha, x, y)
    dxz = quasi_distance(domain, alpha, x, z)
    dzy = quasi_distance(domain, alpha, z, y)
    ratio = dxy / (dxz + dzy)
    return float(np.max(ratio))


def check_quasimetric(domain: DomainModel, alpha: float, n_triples: int = 100_000, seed: int = 0, stability: float = 0.2) -> CheckReport:
    """Max of ``d(x,y) / (d(x,z) + d(z,y))`` over ``n`` and ``2n`` triples."""
    if alpha > domain.N:
        raise DomainError("alpha must not exceed N")
    c1 = _max_ratio(domain, alpha, n_triples, seed)
    c2 = _max_ratio(domain, alpha, 2 * n_triples, seed + 1)
    change = abs(c2 - c1) / c1
    ok = math.isfinite(c1) and math.isfinite(c2) and change < stability
    return CheckReport(
        "quasimetric",
        "pass" if ok else "fail",
        {"alpha": alpha, "max_ratio": c1, "max_ratio_doubled": c2, "relative_change": change, "triples": n_triples},
    )


def volume_regimes(domain: DomainModel, x, b: float, theta: float, alpha: float):
    """Analytic regimes ``[(lo, hi, slope), ...]`` for ``s -> omega(B(x, s))``."""
    N = domain.N
    d = float(dist_boundary(domain, np.atleast_2d(x))[0])
    ds = float(dist_sigma(domain, np.atleast_2d(x))[0])
    s1 = d**N * ds ** (-alpha)
    s2 = ds ** (N - alpha)
    top = 1.0  # balls of quasi-radius ~ 1 reach across the domain
    return [
        (0.0, s1, N / (N - 2.0)),
        (s1, s2, (b + N) / N),
        (s2, top, (b + theta + N) / (N - alpha)),
    ]


def check_volume_regimes(
    domain: DomainModel,
    x,
    b: float,
    theta: float,
    alpha: float,
    per_decade: int = 4,
    decades_below: float = 3.0,
    margin: float = 2.0,
    tol: float = 0.1,
    min_scales: int = 4,
    **quad_kw,
) -> CheckReport:
    """Fit ``log omega(B(x,s))`` against ``log s`` in each regime."""
    if not theta > max(domain.k - domain.N - b, -b - alpha):
        raise DomainError("need theta > max(k - N - b, -b - alpha)")
    regimes = volume_regimes(domain, x, b, theta, alpha)
    s_lo = regimes[0][1] * 10.0**-decades_below
    s_hi = regimes[-1][1]
    quad = LocalQuadrature(domain, x, b, theta, alpha, **quad_kw)
    n_s = int(round(per_decade * math.log10(s_hi / s_lo))) + 1
    s = np.logspace(math.log10(s_lo), math.log10(s_hi), n_s)
    m = quad.mass(s)
    fits = []
    verdict = "pass"
    for lo, hi, expected in regimes:
        lo_m = max(lo * margin, s_lo)
        hi_m = hi / margin
        sel = (s >= lo_m) & (s <= hi_m) & (m > 0)
        entry = {"lo": lo, "hi": hi, "expected": expected, "scales": int(sel.sum())}
        if sel.sum() < min_scales:
            entry.update(slope=None, verdict="inconclusive")
            if verdict == "pass":
                verdict = "inconclusive"
        else:
            slope = float(np.polyfit(np.log(s[sel]), np.log(m[sel]), 1)[0])
            ok = abs(slope - expected) <= tol * abs(expected)
            # two-sided constants c s^e <= omega(B) <= C s^e over the regime
            ratio = m[sel] / s[sel] ** expected
            entry.update(slope=slope, verdict="pass" if ok else "fail",
                         lower_constant=float(ratio.min()), upper_constant=float(ratio.max()))
            if not ok:
                verdict = "fail"
        fits.append(entry)
    return CheckReport("volumes", verdict, {"b": b, "theta": theta, "alpha": alpha, "regimes": fits})


def _random_centres(domain, n, rng):
    g = rng.standard_normal((n, domain.N))
    g /= np.linalg.norm(g, axis=1)[:, None]
    return g * (1.0 - 10.0 ** rng.uniform(-4, -0.3, n))[:, None]


def check_doubling(
    domain: DomainModel,
    b: float,
    theta: float,
    alpha: float,
    n_centres: int = 100,
    radii_per_centre: int = 10,
    seed: int = 0,
    bound: float = 1e4,
    **quad_kw,
) -> CheckReport:
    """Doubling ratios ``omega(B(x,2s))/omega(B(x,s))`` and the integrated form
    ``I_x(2r)/I_x(r)`` with ``I_x(r) = int_0^r omega(B(x,s)) s^{-2} ds``."""
    quad_kw.setdefault("n_r", 240)
    quad_kw.setdefault("n_dir", 300)
    quad_kw.setdefault("r_min", 1e-7)
    rng = np.random.default_rng(seed)
    centres = _random_centres(domain, n_centres, rng)
    worst_ball, worst_int = 0.0, 0.0
    for x in centres:
        quad = LocalQuadrature(domain, x, b, theta, alpha, seed=seed, **quad_kw)
        s = quad.key[len(quad.key) // 50] * 10.0 ** rng.uniform(0, 3, radii_per_centre)
        s = np.minimum(s, 0.5)
        mb = quad.mass(s)
        worst_ball = max(worst_ball, float(np.max(quad.mass(2 * s) / mb)))
        worst_int = max(worst_int, float(np.max(quad.wolff(2 * s) / quad.wolff(s))))
    ok = math.isfinite(worst_ball) and worst_int < bound
    return CheckReport(
        "doubling",
        "pass" if ok else "fail",
        {"max_ball_ratio": worst_ball, "max_integral_ratio": worst_int, "samples": n_centres * radii_per_centre},
    )


def check_condition_24(
    domain: DomainModel,
    b: float,
    theta: float,
    alpha: float,
    n_samples: int = 100,
    n_y: int = 4,
    seed: int = 0,
    bound: float = 1e4,
    **quad_kw,
) -> CheckReport:
    """``sup_{y in B(x,r)} I_y(r) / I_x(r)`` over random ``(x, r)``; ``y`` is drawn
    from the quadrature nodes inside the ball, always including the farthest."""
    quad_kw.setdefault("n_r", 200)
    quad_kw.setdefault("n_dir", 200)
    quad_kw.setdefault("r_min", 1e-7)
    rng = np.random.default_rng(seed)
    centres = _random_centres(domain, n_samples, rng)
    worst = 0.0
    for x in centres:
        qx = LocalQuadrature(domain, x, b, theta, alpha, seed=seed, **quad_kw)
        r = min(float(qx.key[len(qx.key) // 50] * 10.0 ** rng.uniform(0, 3)), 0.5)
        order = np.argsort(quasi_distance(domain, alpha, x[None, :], qx.points))
        inside = order[: int(np.searchsorted(np.sort(qx.key), r))]
        inside = inside[inside > 0]
        if inside.size == 0:
            continue
        picks = np.unique(np.concatenate([[inside[-1]], rng.choice(inside, size=min(n_y - 1, inside.size), replace=False)]))
        ix = float(qx.wolff(r))
        for j in picks:
            qy = LocalQuadrature(domain, qx.points[j], b, theta, alpha, seed=seed, **quad_kw)
            worst = max(worst, float(qy.wolff(r)) / ix)
    ok = math.isfinite(worst) and worst < bound
    return CheckReport("condition_24", "pass" if ok else "fail", {"max_ratio": worst, "samples": n_samples})
