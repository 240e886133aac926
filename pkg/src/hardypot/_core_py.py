"""Pure-numpy twin of the compiled core (same functions, same results up to rounding)."""
from __future__ import annotations

import numpy as np

from .kernels import green_features, nalpha_features

KIND_NALPHA = 0
KIND_GREEN = 1
KIND_GREEN_LOG = 2

_ROWS = 256


def _entries(kind, r, dx, dy, sx, sy, a, N):
    if kind == KIND_NALPHA:
        return nalpha_features(r, dx, dy, sx, sy, a, N)
    return green_features(r, dx, dy, sx, sy, a, N, log_case=kind == KIND_GREEN_LOG)


def _blob(r, rho, N):
    q = np.minimum(r / np.where(rho > 0, rho, 1.0), 1.0)
    b = 0.5 * N * q ** (N - 2) * (1.0 - (N - 2.0) / N * q * q)
    return np.where(r < rho, b, 1.0)


def kernel_block(kind, xt, dt, st, xs, ds, ss, rs, a, N, same=False, threads=1):
    m, n = xt.shape[0], xs.shape[0]
    out = np.empty((m, n), dtype=np.float32)
    sq_s = np.einsum("ij,ij->i", xs, xs)
    for i0 in range(0, m, _ROWS):
        i1 = min(i0 + _ROWS, m)
        blk = xt[i0:i1]
        r2 = np.einsum("ij,ij->i", blk, blk)[:, None] + sq_s[None, :] - 2.0 * (blk @ xs.T)
        # exact differences where the expansion loses digits
        close = r2 < 1e-6 * (1.0 + sq_s[None, :])
        if np.any(close):
            ii, jj = np.nonzero(close)
            dd = blk[ii] - xs[jj]
            r2[ii, jj] = np.einsum("ij,ij->i", dd, dd)
        r = np.sqrt(np.maximum(r2, 0.0))
        zero = r <= 0.0
        if same:
            idx = np.arange(i0, i1)
            zero[idx - i0, idx] = True
        r_safe = np.where(zero, 1.0, r)
        with np.errstate(all="ignore"):
            vals = _entries(kind, r_safe, dt[i0:i1, None], ds[None, :], st[i0:i1, None], ss[None, :], a, N)
            vals *= _blob(r_safe, rs[None, :], N)
        vals[zero] = 0.0
        out[i0:i1] = vals
    return out


def kernel_row64(kind, x, dx, sx, xs, ds, ss, rs, a, N):
    diff = xs - x[None, :]
    r = np.sqrt(np.einsum("ij,ij->i", diff, diff))
    zero = r <= 0.0
    r_safe = np.where(zero, 1.0, r)
    vals = _entries(kind, r_safe, dx, ds, sx, ss, a, N) * _blob(r_safe, rs, N)
    vals[zero] = 0.0
    return vals


def matvec(K, g, threads=1):
    out = np.empty(K.shape[0], dtype=np.float64)
    for i0 in range(0, K.shape[0], _ROWS):
        out[i0 : i0 + _ROWS] = K[i0 : i0 + _ROWS].astype(np.float64) @ g
    return out
