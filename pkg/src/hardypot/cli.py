"""Command-line entry point.

Every subcommand prints one JSON report (sorted keys, ``"schema": 1``) and
writes it to ``--out DIR`` when given.  Exit codes: 0 ok, 1 configuration
error, 2 diverged, 3 inconclusive or iteration budget exhausted.
"""
from __future__ import annotations

import argparse
import csv
import json
import math
import sys
from pathlib import Path

import numpy as np

from .config import SCENARIO_KEYS, ConfigError, RunConfig, load_config
from .geometry import DomainError
from .kernels import VARIANTS

EXIT_OK, EXIT_CONFIG, EXIT_DIVERGED, EXIT_INCONCLUSIVE = 0, 1, 2, 3


def _clean(obj):
    """JSON-safe copy: numpy scalars to Python, non-finite floats to strings."""
    if isinstance(obj, dict):
        return {str(k): _clean(v) for k, v in obj.items()}
    if isinstance(obj, (list, tuple)):
        return [_clean(v) for v in obj]
    if isinstance(obj, np.ndarray):
        return [_clean(v) for v in obj.tolist()]
    if isinstance(obj, (np.bool_, bool)):
        return bool(obj)
    if isinstance(obj, (np.integer,)):
        return int(obj)
    if isinstance(obj, (float, np.floating)):
        x = float(obj)
        if math.isnan(x):
            return "nan"
        if math.isinf(x):
            return "inf" if x > 0 else "-inf"
        return x
    return obj


def dumps(report: dict) -> str:
    return json.dumps(_clean({"schema": 1, **report}), sort_keys=True, indent=2) + "\n"


def _vec(text: str) -> np.ndarray:
    return np.array([float(t) for t in text.split(",")])


def _emit(args, name: str, report: dict, csv_rows=None, csv_header=None):
    text = dumps(report)
    sys.stdout.write(text)
    if args.out:
        out = Path(args.out)
        out.mkdir(parents=True, exist_ok=True)
        (out / f"{name}.json").write_text(text)
        if csv_rows is not None:
            with open(out / f"{name}.csv", "w", newline="") as fh:
                w = csv.writer(fh)
                if csv_header:
                    w.writerow(csv_header)
                w.writerows(csv_rows)


def _config(args) -> RunConfig:
    cfg = load_config(args.config) if args.config else RunConfig()
    for key in ("N", "k", "mu", "resolution"):
        val = getattr(args, key, None)
        if val is not None:
            setattr(cfg, key, val)
    if args.seed is not None:
        cfg.seed = args.seed
    if args.out is None and cfg.out_dir:
        args.out = cfg.out_dir
    for key in SCENARIO_KEYS:
        val = getattr(args, key, None)
        if val is not None:
            cfg.scenario[key] = val
    return cfg.validate()


def _nu(cfg, spec: str):
    from .measures import BoundaryMeasure

    dom = cfg.domain()
    kind, _, rest = spec.partition(":")
    if kind == "zero":
        return BoundaryMeasure.zero(dom.N)
    if kind == "dirac":
        where, _, mass = rest.partition(":")
        mass = float(mass) if mass else 1.0
        if where in ("", "sigma"):
            return BoundaryMeasure.dirac(dom.sigma_point(), mass)
        if where == "far":
            return BoundaryMeasure.dirac(dom.far_boundary_point(), mass)
        pt = _vec(where)
        return BoundaryMeasure.dirac(pt / np.linalg.norm(pt), mass)
    if kind == "uniform":
        return BoundaryMeasure.uniform_on_sigma(dom, int(rest or 64), 1.0, seed=cfg.seed)
    raise ConfigError(f"unknown measure {spec!r}")


# subcommands -----------------------------------------------------------------


def cmd_exponents(args, cfg):
    from .scan import exponent_table

    _emit(args, "exponents", exponent_table(cfg.N, cfg.k, cfg.mu))
    return EXIT_OK


def cmd_kernel(args, cfg):
    from .kernels import KernelSpec, evaluate

    spec = KernelSpec(args.variant, cfg.domain(), cfg.params(), alpha=args.alpha, eps=args.eps)
    x = _vec(args.x)
    y = _vec(args.y)
    val, branch = evaluate(spec, x[None, :], y[None, :])
    _emit(args, "kernel", {"variant": args.variant, "x": x, "y": y, "value": float(np.ravel(val)[0]), "branch": branch})
    return EXIT_OK


def cmd_check(args, cfg):
    from . import structure as st

    dom, par = cfg.domain(), cfg.params()
    sc = cfg.scenario
    alpha = sc.get("alpha", 2.0 * par.alpha_minus)
    p = sc.get("p", 2.0)
    b = sc.get("b", p + 1.0)
    theta = sc.get("theta", -par.alpha_minus * (p + 1.0))
    if args.what == "quasimetric":
        rep = st.check_quasimetric(dom, alpha, sc.get("samples", 100_000), cfg.seed)
    elif args.what == "volumes":
        x = st.point_at(dom, 1e-5, 1e-3)
        rep = st.check_volume_regimes(dom, x, b, theta, alpha, seed=cfg.seed)
    elif args.what == "doubling":
        rep = st.check_doubling(dom, b, theta, alpha, n_centres=max(sc.get("samples", 1000) // 10, 1), seed=cfg.seed)
    elif args.what == "condition24":
        rep = st.check_condition_24(dom, b, theta, alpha, n_samples=sc.get("samples", 100), seed=cfg.seed)
    else:
        from .geometry import check_distance_expansions

        er = check_distance_expansions(dom, n=sc.get("samples", 2000), seed=cfg.seed)
        _emit(args, "check_expansions", {"config": cfg.as_dict(), "report": er.as_dict()})
        return EXIT_OK
    _emit(args, f"check_{args.what}", {"config": cfg.as_dict(), "report": rep.as_dict()})
    return {"pass": EXIT_OK, "fail": EXIT_INCONCLUSIVE, "inconclusive": EXIT_INCONCLUSIVE}[rep.verdict]


def _parse_set(text: str, N: int):
    from .capacity import Ball, Cap

    kind, centre, radius = text.split(":")
    c = tuple(float(v) for v in centre.split(","))
    if len(c) != N:
        raise ConfigError("set centre has the wrong dimension")
    if kind == "cap":
        v = np.array(c)
        return Cap(tuple(v / np.linalg.norm(v)), float(radius))
    if kind == "ball":
        return Ball(c, float(radius))
    raise ConfigError(f"unknown set kind {kind!r}")


def cmd_capacity(args, cfg):
    from .capacity import CapacityProblem, TargetSet, cap_dual_lower, cap_primal_upper

    dom, par = cfg.domain(), cfg.params()
    sc = cfg.scenario
    p = sc.get("p", 2.0)
    alpha = sc.get("alpha", 2.0 * par.alpha_minus)
    b = sc.get("b", p + 1.0)
    theta = sc.get("theta", -par.alpha_minus * (p + 1.0))
    s = sc.get("s", p / (p - 1.0))
    sets = [_parse_set(t, dom.N) for t in (args.set or [])]
    prob = CapacityProblem(dom, TargetSet(sets), alpha, b, theta, s)
    lo = cap_dual_lower(prob)
    hi = cap_primal_upper(prob)
    report = {
        "config": cfg.as_dict(),
        "sets": [{"kind": type(c).__name__.lower(), "centre": list(c.centre), "radius": c.radius} for c in sets],
        "lower": lo.value,
        "upper": hi.value,
        "iterations": hi.iterations,
        "feasible": hi.feasible,
    }
    _emit(args, "capacity", report)
    return EXIT_OK if hi.feasible else EXIT_INCONCLUSIVE


def cmd_solve(args, cfg):
    from .measures import lp_phi_norm, make_cloud, write_field
    from .solvers import SourceProblem, sigma_threshold, solve_absorption

    dom, par = cfg.domain(), cfg.params()
    sc = cfg.scenario
    p = sc.get("p", 2.0)
    nu = _nu(cfg, sc.get("nu", "dirac:sigma"))
    cloud = make_cloud(dom, cfg.resolution, q=cfg.q, seed=cfg.seed, uniform_fraction=cfg.uniform_fraction)
    tol = sc.get("tol", 1e-8)
    max_iter = sc.get("max_iter", 500)
    report = {"config": cfg.as_dict(), "problem": args.problem}
    if args.problem == "threshold":
        prob = SourceProblem(dom, par, p, nu, cloud, threads=args.threads)
        tr = sigma_threshold(dom, par, p, nu, cloud, problem=prob, tol=tol, max_iter=max_iter)
        report["threshold"] = tr.as_dict()
        _emit(args, "solve_threshold", report)
        if tr.threshold == 0.0:
            return EXIT_DIVERGED
        return EXIT_OK
    if args.problem == "source":
        prob = SourceProblem(dom, par, p, nu, cloud, eps=sc.get("eps", 0.5), threads=args.threads)
        u, rep = prob.solve(sc.get("sigma", 1e-2), tol=tol, max_iter=max_iter)
    else:
        u, rep = solve_absorption(dom, par, p, nu, cloud, tol=tol, max_iter=max_iter, threads=args.threads)
    report["iteration"] = rep.as_dict()
    if rep.status == "converged":
        report["lp_phi_norm"] = lp_phi_norm(u, p, par)
        if args.out:
            Path(args.out).mkdir(parents=True, exist_ok=True)
            write_field(Path(args.out) / f"{args.problem}_field.hbvp", u)
    _emit(args, f"solve_{args.problem}", report)
    return {"converged": EXIT_OK, "diverged": EXIT_DIVERGED, "max_iter": EXIT_INCONCLUSIVE}[rep.status]


def cmd_barrier(args, cfg):
    from .barriers import BarrierField, BarrierSpec, boundary_ratio_check, build_barrier, verify_supersolution

    dom, par = cfg.domain(), cfg.params()
    sc = cfg.scenario
    p = sc.get("p", 2.0)
    z = _vec(args.z) if args.z else None
    spec = BarrierSpec.default(dom, par, p, z=z, R=sc.get("R"), gamma=sc.get("gamma"))
    n_probe = sc.get("samples", 20000)
    if args.action == "build":
        bf, rep = build_barrier(dom, par, p, spec, n_probe=n_probe, seed=cfg.seed)
        report = {"config": cfg.as_dict(), "spec": bf.spec.__dict__, "verification": rep.as_dict(),
                  "search": bf.search, "boundary_ratio": boundary_ratio_check(bf, seed=cfg.seed)}
        code = EXIT_OK
    else:
        spec.validate(dom, par, p)
        rep = verify_supersolution(dom, par, p, BarrierField(dom, par, p, spec), n_probe=n_probe, seed=cfg.seed)
        report = {"config": cfg.as_dict(), "spec": spec.__dict__, "verification": rep.as_dict()}
        code = EXIT_OK if rep.passed else EXIT_INCONCLUSIVE
    _emit(args, f"barrier_{args.action}", report)
    return code


def cmd_scan(args, cfg):
    from .scan import phase_scan

    dom = cfg.domain()
    sc = cfg.scenario
    p_grid = sc.get("p_grid", list(np.round(np.arange(1.2, 4.01, 0.2), 6)))
    axis = sc.get("axis", "mu")
    if axis == "mu":
        y_grid = sc.get("mu_grid", list(np.round(np.linspace(0.0, dom.H**2 * 0.95, 8), 6)))
    else:
        y_grid = sc.get("sigma_grid", [1e-4, 1e-3, 1e-2, 1e-1])
    diagram = phase_scan(dom, p_grid, y_grid, axis=axis, target=sc.get("target", "sigma"), mode=sc.get("mode", "fast"),
                         mu=cfg.mu, resolution=cfg.resolution, seed=cfg.seed, threads=args.threads)
    report = {"config": cfg.as_dict(), **diagram.as_dict()}
    _emit(args, "scan", report, diagram.csv_rows(), ("p", axis, "verdict"))
    return EXIT_OK


# parser ----------------------------------------------------------------------


def build_parser() -> argparse.ArgumentParser:
    common = argparse.ArgumentParser(add_help=False)
    common.add_argument("--config", help="key = value configuration file")
    common.add_argument("--seed", type=int, help="base seed")
    common.add_argument("--out", help="directory for JSON/CSV/field outputs")
    common.add_argument("--threads", type=int, default=1, help="threads for kernel assembly")
    common.add_argument("--N", type=int)
    common.add_argument("--k", type=int)
    common.add_argument("--mu", type=float)
    common.add_argument("--resolution", type=int, help="cloud size")

    ap = argparse.ArgumentParser(prog="hardypot", description="Hardy-potential kernel and solver diagnostics")
    sub = ap.add_subparsers(dest="command", required=True)

    sp = sub.add_parser("exponents", parents=[common], help="critical exponent table")
    sp.set_defaults(func=cmd_exponents)

    sp = sub.add_parser("kernel", parents=[common], help="evaluate one kernel")
    sp.add_argument("--variant", default="green", choices=VARIANTS)
    sp.add_argument("--x", required=True, help="comma-separated point")
    sp.add_argument("--y", required=True, help="comma-separated point")
    sp.add_argument("--alpha", type=float)
    sp.add_argument("--eps", type=float)
    sp.set_defaults(func=cmd_kernel)

    sp = sub.add_parser("check", parents=[common], help="structure checks")
    sp.add_argument("what", choices=["quasimetric", "doubling", "volumes", "condition24", "expansions"])
    sp.add_argument("--alpha", type=float)
    sp.add_argument("--b", type=float)
    sp.add_argument("--theta", type=float)
    sp.add_argument("--p", type=float)
    sp.add_argument("--samples", type=int)
    sp.set_defaults(func=cmd_check)

    sp = sub.add_parser("capacity", parents=[common], help="capacity bounds")
    sp.add_argument("--set", action="append", help="cap:x,y,z:radius or ball:x,y,z:radius (repeatable)")
    sp.add_argument("--alpha", type=float)
    sp.add_argument("--b", type=float)
    sp.add_argument("--theta", type=float)
    sp.add_argument("--s", type=float)
    sp.add_argument("--p", type=float)
    sp.set_defaults(func=cmd_capacity)

    sp = sub.add_parser("solve", parents=[common], help="fixed-point solvers")
    sp.add_argument("problem", choices=["source", "absorption", "threshold"])
    sp.add_argument("--p", type=float)
    sp.add_argument("--sigma", type=float)
    sp.add_argument("--nu", help="zero | dirac:sigma | dirac:far | dirac:x,y,z[:mass] | uniform:n")
    sp.add_argument("--tol", type=float)
    sp.add_argument("--max-iter", dest="max_iter", type=int)
    sp.add_argument("--eps", type=float)
    sp.set_defaults(func=cmd_solve)

    sp = sub.add_parser("barrier", parents=[common], help="barrier construction and verification")
    sp.add_argument("action", choices=["build", "verify"])
    sp.add_argument("--z", help="boundary point, comma-separated")
    sp.add_argument("--R", type=float)
    sp.add_argument("--gamma", type=float)
    sp.add_argument("--p", type=float)
    sp.add_argument("--samples", type=int)
    sp.set_defaults(func=cmd_barrier)

    sp = sub.add_parser("scan", parents=[common], help="phase scans")
    sp.add_argument("--mode", choices=["fast", "full"])
    sp.add_argument("--axis", choices=["mu", "sigma"])
    sp.add_argument("--target", choices=["sigma", "boundary"])
    sp.set_defaults(func=cmd_scan)
    return ap


def main(argv=None) -> int:
    ap = build_parser()
    args = ap.parse_args(argv)
    try:
        cfg = _config(args)
        return args.func(args, cfg)
    except (ConfigError, DomainError) as exc:
        sys.stderr.write(f"hardypot: error: {exc}\n")
        return EXIT_CONFIG


if __name__ == "__main__":  # pragma: no cover
    sys.exit(main())
