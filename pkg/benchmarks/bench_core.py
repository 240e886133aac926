"""Compare the compiled core against its numpy twin.

Usage: ``python3 benchmarks/bench_core.py [--n 4000] [--repeat 3] [--threads 1]``
"""
from __future__ import annotations

import argparse
import time

import numpy as np

from hardypot import DomainModel, spectral_params
from hardypot.backend import KIND_GREEN, implementation
from hardypot.measures import make_cloud
from hardypot.operators import cell_radii


def _best(fn, repeat):
    times = []
    for _ in range(repeat):
        t0 = time.perf_counter()
        out = fn()
        times.append(time.perf_counter() - t0)
    return min(times), out


def main(argv=None):
    ap = argparse.ArgumentParser(description=__doc__)
    ap.add_argument("--n", type=int, default=4000)
    ap.add_argument("--repeat", type=int, default=3)
    ap.add_argument("--threads", type=int, default=1)
    args = ap.parse_args(argv)

    dom = DomainModel(3, 0)
    par = spectral_params(dom, 2.0)
    cloud = make_cloud(dom, args.n, seed=0)
    x, d, s = cloud.points, cloud.d, cloud.s
    rs = cell_radii(cloud)
    g = np.random.default_rng(0).random(args.n)

    results = {}
    for name in ("python", "cython"):
        try:
            core = implementation(name)
        except ImportError:
            print(f"{name:>7}: unavailable")
            continue
        tb, K = _best(lambda: core.kernel_block(KIND_GREEN, x, d, s, x, d, s, rs, par.alpha_minus, dom.N,
                                                True, args.threads), args.repeat)
        tm, y = _best(lambda: core.matvec(K, g, args.threads), args.repeat)
        results[name] = (K, y)
        print(f"{name:>7}: kernel_block {tb * 1e3:9.1f} ms   matvec {tm * 1e3:8.2f} ms")
    if len(results) == 2:
        Kp, yp = results["python"]
        Kc, yc = results["cython"]
        rel = np.max(np.abs(Kp.astype(float) - Kc) / np.maximum(np.abs(Kc), 1e-30))
        print(f"max relative kernel difference {rel:.2e}, matvec difference {np.max(np.abs(yp - yc) / np.abs(yc).max()):.2e}")


if __name__ == "__main__":
    main()
