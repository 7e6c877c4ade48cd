"""Pure-Python/numpy implementations of the sequential kernels.

These mirror ``_kernels.pyx`` function for function.  Renormalization is by
powers of two so the unit parts are exact rescalings of the raw products.
"""
import math

import numpy as np

BACKEND = "python"


def _check_finite(value, k):
    if not math.isfinite(value) or value == 0.0:
        raise FloatingPointError(f"degenerate product at step {k}")


def cumprod_scaled(mats, right=False):
    """Running products P_0 = I, P_{k+1} = A_k P_k (``right``: P_k A_k).

    Returns ``(units, exps)`` with P_k = units[k] * 2**exps[k] and the
    Frobenius norm of every unit part in [1, 2).
    """
    mats = np.ascontiguousarray(mats, dtype=np.float64)
    n, m, _ = mats.shape
    units = np.empty((n + 1, m, m))
    exps = np.zeros(n + 1, dtype=np.int64)
    P = np.eye(m)
    units[0] = P
    e = 0
    for k in range(n):
        P = P @ mats[k] if right else mats[k] @ P
        f = math.sqrt(float(np.sum(P * P)))
        _check_finite(f, k)
        shift = math.frexp(f)[1] - 1
        P = np.ldexp(P, -shift)
        e += shift
        units[k + 1] = P
        exps[k + 1] = e
    return units, exps


def qr_accumulate(mats, stride=1):
    """Sum of log R-diagonals of the re-orthonormalized QR recursion.

    Returns ``(sums, trace)``; ``trace[j]`` holds the partial sums after
    ``(j + 1) * stride`` steps, in column order (not sorted).
    """
    mats = np.ascontiguousarray(mats, dtype=np.float64)
    n, m, _ = mats.shape
    stride = max(1, int(stride))
    trace = np.empty((n // stride, m))
    sums = np.zeros(m)
    Q = np.eye(m)
    for k in range(n):
        Q, R = np.linalg.qr(mats[k] @ Q)
        d = np.diagonal(R)
        signs = np.where(d < 0.0, -1.0, 1.0)
        Q = Q * signs
        ad = np.abs(d)
        if not np.all(ad > 0.0):
            raise FloatingPointError(f"rank loss at step {k}")
        sums += np.log(ad)
        if (k + 1) % stride == 0:
            trace[(k + 1) // stride - 1] = sums
    return sums, trace


def power_growth(mats, v0, stride=1):
    """Accumulated log growth of ``v0`` under the sequence ``mats``."""
    mats = np.ascontiguousarray(mats, dtype=np.float64)
    n = mats.shape[0]
    stride = max(1, int(stride))
    v = np.array(v0, dtype=np.float64)
    v /= np.linalg.norm(v)
    total = 0.0
    trace = np.empty(n // stride)
    for k in range(n):
        v = mats[k] @ v
        nv = math.sqrt(float(v @ v))
        _check_finite(nv, k)
        total += math.log(nv)
        v /= nv
        if (k + 1) % stride == 0:
            trace[(k + 1) // stride - 1] = total
    return total, trace


def markov_chain(cumulative, uniforms, start):
    """Sample a chain from row-cumulative transition probabilities."""
    cumulative = np.asarray(cumulative, dtype=np.float64)
    n = len(uniforms)
    out = np.empty(n + 1, dtype=np.int64)
    s = int(start)
    out[0] = s
    rows = [list(row) for row in cumulative]
    for t in range(n):
        row = rows[s]
        u = uniforms[t]
        j = 0
        while j < len(row) - 1 and u >= row[j]:
            j += 1
        s = j
        out[t + 1] = s
    return out


def toral_orbit(matrix, x0, n):
    """Iterate x -> matrix @ x mod 1, returning the first ``n`` points."""
    L = np.asarray(matrix, dtype=np.float64)
    d = L.shape[0]
    out = np.empty((n, d))
    x = np.array(x0, dtype=np.float64)
    rows = [list(r) for r in L]
    xs = list(x)
    for k in range(n):
        out[k] = xs
        nxt = []
        for r in rows:
            s = 0.0
            for a, b in zip(r, xs):
                s += a * b
            s -= math.floor(s)
            if s >= 1.0:
                s = 0.0
            nxt.append(s)
        xs = nxt
    return out


def identity_residual(mats, units, exps):
    """Residuals of P_j = (A_{j-1}...A_k) P_k over 1 <= k < j <= n, where
    (units, exps) are the scaled prefix products of ``mats``.

    Returns (worst ||diff||_F / ||P_j||_F, worst ||diff||_F / (||Q||_F ||P_k||_F))
    with Q = A_{j-1}...A_k.
    """
    mats = np.ascontiguousarray(mats, dtype=np.float64)
    n = len(mats)
    fro = np.linalg.norm(units, axis=(1, 2))
    worst = worst_nw = 0.0
    for k in range(1, n):
        Uk, Ek = cumprod_scaled(mats[k:])
        rhs = Uk[1:] @ units[k]
        shift = (Ek[1:] + exps[k]) - exps[k + 1:]
        diff = np.linalg.norm(units[k + 1:] - np.ldexp(rhs, shift[:, None, None]), axis=(1, 2))
        worst = max(worst, float(np.max(diff / fro[k + 1:])))
        scale = np.linalg.norm(Uk[1:], axis=(1, 2)) * fro[k]
        worst_nw = max(worst_nw, float(np.max(np.ldexp(diff / scale, -shift))))
    return worst, worst_nw
