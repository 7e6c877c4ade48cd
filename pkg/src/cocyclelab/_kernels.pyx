# cython: language_level=3, boundscheck=False, wraparound=False, cdivision=True
"""Compiled sequential kernels; see ``_kernels_py`` for the reference versions."""
import numpy as np

from libc.math cimport sqrt, log, frexp, ldexp, floor, isfinite

BACKEND = "cython"


cdef inline void _matmul(const double[:, ::1] A, const double[:, ::1] B,
                         double[:, ::1] out, Py_ssize_t m) noexcept nogil:
    cdef Py_ssize_t i, j, l
    cdef double s
    for i in range(m):
        for j in range(m):
            s = 0.0
            for l in range(m):
                s = s + A[i, l] * B[l, j]
            out[i, j] = s


def cumprod_scaled(mats, bint right=False):
    cdef const double[:, :, ::1] A = np.ascontiguousarray(mats, dtype=np.float64)
    cdef Py_ssize_t n = A.shape[0], m = A.shape[1]
    units = np.empty((n + 1, m, m))
    exps = np.zeros(n + 1, dtype=np.int64)
    cdef double[:, :, ::1] U = units
    cdef long long[::1] E = exps
    cdef double[:, ::1] P = np.eye(m)
    cdef double[:, ::1] T = np.empty((m, m))
    cdef Py_ssize_t k, i, j
    cdef double f
    cdef int ex
    cdef long long e = 0
    cdef bint bad = False
    with nogil:
        for i in range(m):
            for j in range(m):
                U[0, i, j] = P[i, j]
        for k in range(n):
            if right:
                _matmul(P, A[k], T, m)
            else:
                _matmul(A[k], P, T, m)
            f = 0.0
            for i in range(m):
                for j in range(m):
                    f = f + T[i, j] * T[i, j]
            f = sqrt(f)
            if not isfinite(f) or f == 0.0:
                bad = True
                break
            frexp(f, &ex)
            ex = ex - 1
            e = e + ex
            for i in range(m):
                for j in range(m):
                    P[i, j] = ldexp(T[i, j], -ex)
                    U[k + 1, i, j] = P[i, j]
            E[k + 1] = e
    if bad:
        raise FloatingPointError(f"degenerate product at step {k}")
    return units, exps


def qr_accumulate(mats, Py_ssize_t stride=1):
    cdef const double[:, :, ::1] A = np.ascontiguousarray(mats, dtype=np.float64)
    cdef Py_ssize_t n = A.shape[0], m = A.shape[1]
    if stride < 1:
        stride = 1
    trace = np.empty((n // stride, m))
    sums_arr = np.zeros(m)
    cdef double[:, ::1] tr = trace
    cdef double[::1] sums = sums_arr
    cdef double[:, ::1] Q = np.eye(m)
    cdef double[:, ::1] Z = np.empty((m, m))
    cdef Py_ssize_t k, i, j, c, sweep
    cdef double r, nrm
    cdef bint bad = False
    with nogil:
        for k in range(n):
            _matmul(A[k], Q, Z, m)
            # modified Gram-Schmidt, two passes; columns of Z become Q
            for j in range(m):
                for sweep in range(2):
                    for c in range(j):
                        r = 0.0
                        for i in range(m):
                            r = r + Z[i, c] * Z[i, j]
                        for i in range(m):
                            Z[i, j] = Z[i, j] - r * Z[i, c]
                nrm = 0.0
                for i in range(m):
                    nrm = nrm + Z[i, j] * Z[i, j]
                nrm = sqrt(nrm)
                if not (nrm > 0.0) or not isfinite(nrm):
                    bad = True
                    break
                sums[j] = sums[j] + log(nrm)
                for i in range(m):
                    Z[i, j] = Z[i, j] / nrm
            if bad:
                break
            for i in range(m):
                for j in range(m):
                    Q[i, j] = Z[i, j]
            if (k + 1) % stride == 0:
                for j in range(m):
                    tr[(k + 1) // stride - 1, j] = sums[j]
    if bad:
        raise FloatingPointError(f"rank loss at step {k}")
    return sums_arr, trace


def power_growth(mats, v0, Py_ssize_t stride=1):
    cdef const double[:, :, ::1] A = np.ascontiguousarray(mats, dtype=np.float64)
    cdef Py_ssize_t n = A.shape[0], m = A.shape[1]
    if stride < 1:
        stride = 1
    v_arr = np.array(v0, dtype=np.float64)
    v_arr /= np.linalg.norm(v_arr)
    cdef double[::1] v = v_arr
    cdef double[::1] w = np.empty(m)
    trace = np.empty(n // stride)
    cdef double[::1] tr = trace
    cdef double total = 0.0, s, nv
    cdef Py_ssize_t k, i, l
    cdef bint bad = False
    with nogil:
        for k in range(n):
            nv = 0.0
            for i in range(m):
                s = 0.0
                for l in range(m):
                    s = s + A[k, i, l] * v[l]
                w[i] = s
                nv = nv + s * s
            nv = sqrt(nv)
            if not isfinite(nv) or nv == 0.0:
                bad = True
                break
            total = total + log(nv)
            for i in range(m):
                v[i] = w[i] / nv
            if (k + 1) % stride == 0:
                tr[(k + 1) // stride - 1] = total
    if bad:
        raise FloatingPointError(f"degenerate product at step {k}")
    return total, trace


def markov_chain(cumulative, uniforms, long long start):
    cdef const double[:, ::1] cum = np.ascontiguousarray(cumulative, dtype=np.float64)
    cdef const double[::1] u = np.ascontiguousarray(uniforms, dtype=np.float64)
    cdef Py_ssize_t n = u.shape[0], k = cum.shape[1], t, j
    out = np.empty(n + 1, dtype=np.int64)
    cdef long long[::1] o = out
    cdef long long s = start
    o[0] = s
    with nogil:
        for t in range(n):
            j = 0
            while j < k - 1 and u[t] >= cum[s, j]:
                j = j + 1
            s = j
            o[t + 1] = s
    return out


def toral_orbit(matrix, x0, Py_ssize_t n):
    cdef const double[:, ::1] L = np.ascontiguousarray(matrix, dtype=np.float64)
    cdef Py_ssize_t d = L.shape[0], k, i, j
    out = np.empty((n, d))
    cdef double[:, ::1] o = out
    cdef double[::1] x = np.array(x0, dtype=np.float64)
    cdef double[::1] y = np.empty(d)
    cdef double s
    with nogil:
        for k in range(n):
            for i in range(d):
                o[k, i] = x[i]
            for i in range(d):
                s = 0.0
                for j in range(d):
                    s = s + L[i, j] * x[j]
                s = s - floor(s)
                if s >= 1.0:
                    s = 0.0
                y[i] = s
            for i in range(d):
                x[i] = y[i]
    return out


def identity_residual(mats, units, exps):
    """Residuals of P_j = (A_{j-1}...A_k) P_k over 1 <= k < j <= n, where
    (units, exps) are the scaled prefix products of ``mats``.

    Returns (worst ||diff||_F / ||P_j||_F, worst ||diff||_F / (||Q||_F ||P_k||_F))
    with Q = A_{j-1}...A_k.
    """
    cdef const double[:, :, ::1] A = np.ascontiguousarray(mats, dtype=np.float64)
    cdef const double[:, :, ::1] U = np.ascontiguousarray(units, dtype=np.float64)
    cdef const long long[::1] E = np.ascontiguousarray(exps, dtype=np.int64)
    cdef Py_ssize_t n = A.shape[0], m = A.shape[1]
    cdef double[:, ::1] Q = np.empty((m, m))
    cdef double[:, ::1] T = np.empty((m, m))
    cdef Py_ssize_t k, j, i, l
    cdef double f, num, den, d, qn, un, worst = 0.0, worst_nw = 0.0
    cdef int ex
    cdef long long e, sh
    cdef bint bad = False
    with nogil:
        for k in range(1, n):
            for i in range(m):
                for l in range(m):
                    Q[i, l] = 1.0 if i == l else 0.0
            e = 0
            un = 0.0
            for i in range(m):
                for l in range(m):
                    un = un + U[k, i, l] * U[k, i, l]
            un = sqrt(un)
            for j in range(k, n):
                _matmul(A[j], Q, T, m)
                f = 0.0
                for i in range(m):
                    for l in range(m):
                        f = f + T[i, l] * T[i, l]
                f = sqrt(f)
                if not isfinite(f) or f == 0.0:
                    bad = True
                    break
                frexp(f, &ex)
                ex = ex - 1
                e = e + ex
                qn = 0.0
                for i in range(m):
                    for l in range(m):
                        Q[i, l] = ldexp(T[i, l], -ex)
                        qn = qn + Q[i, l] * Q[i, l]
                _matmul(Q, U[k], T, m)
                sh = e + E[k] - E[j + 1]
                num = 0.0
                den = 0.0
                for i in range(m):
                    for l in range(m):
                        d = U[j + 1, i, l] - ldexp(T[i, l], <int>sh)
                        num = num + d * d
                        den = den + U[j + 1, i, l] * U[j + 1, i, l]
                d = sqrt(num / den)
                if d > worst:
                    worst = d
                d = ldexp(sqrt(num) / (sqrt(qn) * un), <int>(-sh))
                if d > worst_nw:
                    worst_nw = d
            if bad:
                break
    if bad:
        raise FloatingPointError("degenerate product")
    return worst, worst_nw
