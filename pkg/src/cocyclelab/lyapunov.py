"""Lyapunov spectra, periodic exponents, Oseledets splittings and Lyapunov norms."""
import math
from dataclasses import dataclass, field

import numpy as np
from scipy.linalg import eigh
from scipy.stats import linregress

from . import kernels
from .errors import DegenerateSpectrumError, PreconditionError
from .matrix_kit import MAX_DIM, compound

CONVERGED_SLOPE = 1e-4
RESOLVE_FACTOR = math.log(1e6)


@dataclass
class LyapunovSpectrum:
    exponents: np.ndarray
    n: int
    method: str
    diagnostics: dict = field(default_factory=dict)
    trace: np.ndarray = None        # rows: (steps, running exponents ascending)

    def as_dict(self):
        return {"exponents": [float(v) for v in self.exponents], "n": self.n,
                "method": self.method, "diagnostics": self.diagnostics}


def _orbit_start(orbit_or_point):
    if isinstance(orbit_or_point, list):
        return orbit_or_point[0], len(orbit_or_point)
    arr = np.asarray(orbit_or_point) if not hasattr(orbit_or_point, "coords") else None
    if arr is not None and arr.dtype != object and arr.ndim == 2:
        return arr[0], len(arr)
    return orbit_or_point, None


def _diagnostics(trace, stride, n, det_sum, total):
    """Convergence diagnostics from a running-sum trace (rows = checkpoints)."""
    steps = stride * np.arange(1, len(trace) + 1)
    running = np.sort(trace / steps[:, None], axis=1)
    out = {"det_identity_error": float(abs(total - det_sum) / n)}
    tail = steps >= steps[-1] / 10
    if tail.sum() >= 3:
        slopes = [linregress(steps[tail], running[tail, i]).slope for i in range(trace.shape[1])]
        out["tail_slope"] = float(np.max(np.abs(slopes)))
    else:
        out["tail_slope"] = float("nan")
    out["converged"] = bool(out["tail_slope"] < CONVERGED_SLOPE)
    # batch means of per-checkpoint increments
    inc = np.diff(np.vstack([np.zeros(trace.shape[1]), trace]), axis=0) / stride
    nb = min(20, len(inc))
    if nb >= 2:
        batches = np.array_split(np.sort(inc, axis=1), nb)
        means = np.array([b.mean(axis=0) for b in batches])
        out["noise"] = float(np.max(means.std(axis=0, ddof=1)) / math.sqrt(nb))
    else:
        out["noise"] = float("nan")
    return out, np.column_stack([steps, running])


def spectrum_qr(gen, orbit, n=None, stride=None):
    """Exponents from the re-orthonormalized QR recursion, ascending.

    ``orbit`` is either a sampled orbit (list of points or (n, d) array) or
    a single point together with ``n``.
    """
    x, length = _orbit_start(orbit)
    n = n or length
    if not n:
        raise PreconditionError("orbit length required")
    A = gen.evaluate_orbit(x, n)
    stride = stride or max(1, n // 1000)
    sums, trace = kernels.qr_accumulate(A, stride)
    det_sum = float(np.sum(np.linalg.slogdet(A)[1]))
    diag, tr = _diagnostics(trace, stride, n, det_sum, float(np.sum(sums)))
    exps = np.sort(sums / n)
    diag["det_rate"] = det_sum / n
    return LyapunovSpectrum(exps, n, "qr", diag, tr)


def spectrum_via_compounds(gen, orbit, n=None, stride=None, seed=0):
    """Exponents from top growth rates of exterior powers, by successive differences."""
    x, length = _orbit_start(orbit)
    n = n or length
    m = gen.m
    if m > MAX_DIM:
        raise PreconditionError(f"m = {m} exceeds {MAX_DIM}")
    A = gen.evaluate_orbit(x, n)
    stride = stride or max(1, n // 1000)
    rng = np.random.default_rng(seed)
    tops = np.zeros(m + 1)
    traces = []
    for i in range(1, m):
        S = math.comb(m, i)
        Ci = np.empty((n, S, S))
        for s in range(0, n, 8192):
            Ci[s: s + 8192] = compound(A[s: s + 8192], i)
        total, tr = kernels.power_growth(Ci, rng.normal(size=S), stride)
        tops[i] = total
        traces.append(tr)
    logdet = np.linalg.slogdet(A)[1]
    tops[m] = float(np.sum(logdet))
    det_trace = np.cumsum(logdet)[stride - 1:: stride][: n // stride]
    traces.append(det_trace)
    T = np.column_stack(traces)
    # cumulative top rates -> individual exponents (descending), then ascending
    indiv = np.diff(tops) / n
    itrace = np.diff(np.column_stack([np.zeros(len(T)), T]), axis=1)
    diag, tr = _diagnostics(itrace, stride, n, tops[m], tops[m])
    diag["compound_top_rates"] = [float(t / n) for t in tops[1:]]
    return LyapunovSpectrum(np.sort(indiv), n, "compounds", diag, tr)


def periodic_spectrum(gen, p, n):
    """(1/n) log of eigenvalue moduli of A(p, n), ascending.

    The i-th partial sum is the top eigenvalue of the i-th compound of the
    period product, so each level is computed in scaled arithmetic.
    """
    if not gen.system.is_periodic(p, n):
        raise PreconditionError("point is not periodic with the given period")
    A = gen.evaluate_orbit(p, n)
    m = gen.m
    tops = np.zeros(m + 1)
    for i in range(1, m):
        U, E = kernels.cumprod_scaled(compound(A, i))
        lead = float(np.max(np.abs(np.linalg.eigvals(U[-1]))))
        tops[i] = math.log(lead) + E[-1] * math.log(2.0)
    tops[m] = float(np.sum(np.linalg.slogdet(A)[1]))
    exps = np.sort(np.diff(tops) / n)
    return LyapunovSpectrum(exps, n, "periodic", {"period": n})


# --------------------------------------------------------------------------
# Oseledets splitting


@dataclass
class OseledetsSplittingEstimate:
    x: object
    exponents: list                 # per subspace, descending order of growth
    bases: list                     # per subspace, (m, d_i) orthonormal at x
    window: int
    angle_error: list
    merged: bool
    noise: float
    invariance_angle: list = None
    gen: object = field(default=None, repr=False)
    _along: dict = field(default_factory=dict, repr=False)

    @property
    def dims(self):
        return [b.shape[1] for b in self.bases]

    def splitting_matrix(self):
        return np.hstack(self.bases)

    def as_dict(self):
        return {"exponents": [float(c) for c in self.exponents], "dims": self.dims,
                "window": self.window, "angle_error": [float(a) for a in self.angle_error],
                "merged": self.merged, "noise": self.noise,
                "invariance_angle": self.invariance_angle}


def _random_orthogonal(m, rng):
    Q, R = np.linalg.qr(rng.normal(size=(m, m)))
    return Q * np.sign(np.diagonal(R))


def _qr_flow(mats, Q):
    """Push Q through mats with QR; returns the Q after each step and log|diag R|."""
    Qs = np.empty((len(mats),) + Q.shape)
    logs = np.empty((len(mats), Q.shape[1]))
    for t, M in enumerate(mats):
        Q, R = np.linalg.qr(M @ Q)
        d = np.diagonal(R)
        Q = Q * np.where(d < 0, -1.0, 1.0)
        logs[t] = np.log(np.abs(d))
        Qs[t] = Q
    return Qs, logs


def _subspace_angle(U, V):
    """Largest principal angle between equal-dimensional column spaces."""
    s = np.linalg.svd(U.T @ V, compute_uv=False)
    return float(np.arccos(np.clip(s[-1], -1.0, 1.0)))


def _splitting_along(gen, x, lo, hi, window, seed=0, merge=True):
    """Oseledets bases at f^j x for j in [lo, hi)."""
    m = gen.m
    rng = np.random.default_rng(seed)
    A = gen.evaluate_orbit(x, hi - lo + 2 * window, start=lo - window)
    # A[t] = A(f^(lo - window + t) x)
    Qf, logs = _qr_flow(A[: window + hi - lo], _random_orthogonal(m, rng))
    # Qf[t] lives at f^(lo - window + t + 1) x
    fast = Qf[window - 1: window - 1 + hi - lo]
    At = np.swapaxes(A[window: ][::-1], 1, 2)     # A(f^t x)^T for t = hi + window - 1 .. lo
    Qa, _ = _qr_flow(At, _random_orthogonal(m, rng))
    # Qa[s] lives at f^(hi + window - 1 - s) x
    adj = Qa[::-1][: hi - lo]

    nb = min(20, len(logs))
    means = np.array([b.mean(axis=0) for b in np.array_split(logs, nb)])
    noise = float(np.max(means.std(axis=0, ddof=1)) / math.sqrt(nb)) if nb > 1 else 0.0
    rates = logs.mean(axis=0)
    thresh = max(3.0 * noise, RESOLVE_FACTOR / window)
    groups = [[0]]
    merged = False
    for c in range(1, m):
        gap = rates[c - 1] - rates[c]
        if gap < thresh:
            if not merge:
                raise DegenerateSpectrumError(
                    f"exponent gap {gap:.3g} below resolution {thresh:.3g}")
            groups[-1].append(c)
            merged = merged or gap > 1e-12
        else:
            groups.append([c])
    dims = [len(g) for g in groups]
    cum = np.concatenate([[0], np.cumsum(dims)])
    bases = [[] for _ in groups]
    angle_err = np.zeros(len(groups))
    for j in range(hi - lo):
        for i in range(len(groups)):
            G = fast[j][:, : cum[i + 1]]
            F = adj[j][:, cum[i]:]
            U, s, _ = np.linalg.svd(F.T @ G)
            B = F @ U[:, : dims[i]]
            B, _ = np.linalg.qr(B)
            bases[i].append(B)
            angle_err[i] = max(angle_err[i], float(np.arccos(np.clip(s[dims[i] - 1], -1, 1))))
    chis = [float(rates[g].mean()) for g in groups]
    if np.any(angle_err > 0.5):
        raise DegenerateSpectrumError("filtrations do not intersect transversally")
    return {"bases": [np.array(b) for b in bases], "chis": chis, "noise": noise,
            "angle_error": angle_err.tolist(), "merged": merged, "A": A, "offset": lo - window}


def oseledets_splitting(gen, x, window=300, seed=0, merge=True, check_invariance=True):
    """Estimate E_i(x) by intersecting forward-fast and adjoint-slow QR filtrations."""
    data = _splitting_along(gen, x, 0, 2 if check_invariance else 1, window, seed, merge)
    bases = [b[0] for b in data["bases"]]
    inv = None
    if check_invariance:
        A0 = data["A"][window]
        inv = []
        for b in data["bases"]:
            img, _ = np.linalg.qr(A0 @ b[0])
            inv.append(_subspace_angle(img, b[1]))
    return OseledetsSplittingEstimate(x, data["chis"], bases, window, data["angle_error"],
                                      data["merged"], data["noise"], inv, gen)


# --------------------------------------------------------------------------
# Lyapunov metric


class LyapunovMetric:
    """Truncated epsilon-Lyapunov scalar products on an orbit segment.

    For each Oseledets subspace the cocycle is replaced by its restriction
    Lambda_j = B(f^{j+1}x)^T A(f^j x) B(f^j x) in orthonormal bases; the
    normalized products Psi(j) = e^{-chi j} Lambda_{j-1}...Lambda_0 then give
    every Gram matrix on the segment without tracking slow directions
    through fast ones in floating point.
    """

    def __init__(self, gen, x, epsilon, N, n_max=0, window=300, seed=0):
        if epsilon <= 0:
            raise PreconditionError("epsilon must be positive")
        self.gen, self.x, self.eps, self.N, self.n_max = gen, x, float(epsilon), int(N), int(n_max)
        self.m = gen.m
        R = self.N + self.n_max
        self.lo = -R
        data = _splitting_along(gen, x, -R, R + 2, window, seed)
        self.window = window
        self.merged = data["merged"]
        self.angle_error = data["angle_error"]
        bases = data["bases"]                 # index j - lo
        A = data["A"]
        off = data["offset"]
        self.bases = bases
        self.psi = []
        self.chis = []
        for B in bases:
            d = B.shape[2]
            lam = np.einsum("jab,jac,jcd->jbd", B[1:], A[self.lo - off: R + 1 - off], B[:-1])
            logdet = np.linalg.slogdet(lam)[1]
            chi = float(np.sum(logdet) / (d * len(lam)))
            self.chis.append(chi)
            psi = np.empty((2 * R + 1, d, d))
            psi[R] = np.eye(d)
            for j in range(R):
                psi[R + j + 1] = lam[R + j] @ psi[R + j] * math.exp(-chi)
                psi[R - j - 1] = np.linalg.solve(lam[R - j - 1], psi[R - j]) * math.exp(chi)
            self.psi.append(psi)
        self._ends = self._tail_ratios()

    def _idx(self, j):
        return j - self.lo

    def _tail_ratios(self):
        """Geometric decay ratio of the summands at both ends of the segment."""
        out = []
        k = min(20, self.N // 2) or 1
        for psi in self.psi:
            nrm = np.linalg.norm(psi, 2, axis=(1, 2)) ** 2
            hi = (nrm[-1] / nrm[-1 - k]) ** (1.0 / k) * math.exp(-self.eps)
            lo = (nrm[0] / nrm[k]) ** (1.0 / k) * math.exp(-self.eps)
            out.append((lo, hi))
        return out

    def _weighted(self, i, n):
        """m * sum_{|k|<=N} e^{-eps|k|} Psi(n+k)^T Psi(n+k) and its tail estimate."""
        psi = self.psi[i]
        k = np.arange(-self.N, self.N + 1)
        P = psi[self._idx(n + k)]
        w = self.m * np.exp(-self.eps * np.abs(k))
        H = np.einsum("k,kab,kac->bc", w, P, P)
        lo_r, hi_r = self._ends[i]
        t_hi = w[-1] * np.linalg.norm(P[-1], 2) ** 2
        t_lo = w[0] * np.linalg.norm(P[0], 2) ** 2
        tail = 0.0
        for t, r in ((t_lo, lo_r), (t_hi, hi_r)):
            tail += t * r / (1.0 - r) if r < 1.0 else math.inf
        lam_min = float(np.linalg.eigvalsh(H)[0])
        return H, tail / lam_min

    def gram(self, i, n=0):
        """Gram matrix of subspace i at f^n x, in the orthonormal basis there."""
        H, tail = self._weighted(i, n)
        Pn = self.psi[i][self._idx(n)]
        Pinv = np.linalg.inv(Pn)
        return Pinv.T @ H @ Pinv, tail

    def splitting_matrix(self, n=0):
        return np.hstack([B[self._idx(n)] for B in self.bases])

    def coordinates(self, u, n=0):
        """Coordinates of u along the splitting at f^n x, one block per subspace."""
        c = np.linalg.solve(self.splitting_matrix(n), np.asarray(u, dtype=float))
        dims = [B.shape[2] for B in self.bases]
        return np.split(c, np.cumsum(dims)[:-1])

    def norm_matrix(self, n=0):
        """L with ||u||_{f^n x} = ||L u||, and the worst relative tail."""
        blocks, tails = [], []
        for i in range(len(self.bases)):
            G, t = self.gram(i, n)
            w, V = eigh(G)
            blocks.append((V * np.sqrt(np.maximum(w, 0))) @ V.T)
            tails.append(t)
        D = np.zeros((self.m, self.m))
        s = 0
        for b in blocks:
            d = b.shape[0]
            D[s: s + d, s: s + d] = b
            s += d
        return D @ np.linalg.inv(self.splitting_matrix(n)), max(tails)

    def inner(self, u, v, n=0):
        cu, cv = self.coordinates(u, n), self.coordinates(v, n)
        total = 0.0
        tail = 0.0
        for i in range(len(self.bases)):
            G, t = self.gram(i, n)
            total += float(cu[i] @ G @ cv[i])
            tail = max(tail, t)
        return total, tail

    def K(self, n=0):
        """sup ||u||_{f^n x} / ||u|| (exact largest singular value of the norm matrix)."""
        L, tail = self.norm_matrix(n)
        s = np.linalg.svd(L, compute_uv=False)
        return float(s[0]), float(s[-1]), tail


def lyapunov_inner(gen, splitting, u, v, epsilon, N):
    """Truncated epsilon-Lyapunov scalar product at the splitting's base point.

    Vectors in different estimated subspaces give 0 (flagged); general
    vectors are decomposed along the splitting.
    """
    metric = _metric_for(gen, splitting, epsilon, N, 0)
    cu, cv = metric.coordinates(u), metric.coordinates(v)
    support_u = [i for i, c in enumerate(cu) if np.linalg.norm(c) > 1e-12 * np.linalg.norm(u)]
    support_v = [i for i, c in enumerate(cv) if np.linalg.norm(c) > 1e-12 * np.linalg.norm(v)]
    value, tail = metric.inner(u, v)
    flag = "same-subspace"
    if len(support_u) == 1 and len(support_v) == 1 and support_u != support_v:
        flag = "cross-subspace"
        value = 0.0
    elif len(support_u) > 1 or len(support_v) > 1:
        flag = "mixed"
    return {"value": value, "tail_bound": tail * abs(value), "relative_tail": tail,
            "flag": flag, "m_factor": gen.m}


def _metric_for(gen, splitting, epsilon, N, n_max):
    key = (float(epsilon), int(N), int(n_max))
    cache = splitting._along if splitting is not None else {}
    if key not in cache:
        x = splitting.x
        cache[key] = LyapunovMetric(gen, x, epsilon, N, n_max, window=splitting.window)
    return cache[key]


def regularity_constant(gen, splitting, epsilon, N):
    """K_eps estimate at the splitting's base point with its relative tail."""
    metric = _metric_for(gen, splitting, epsilon, N, 0)
    K, lower, tail = metric.K(0)
    return {"K": K, "lower": lower, "relative_tail": tail, "epsilon": epsilon, "N": N,
            "m_factor": gen.m}


def verify_lyapunov_inequalities(gen, splitting, epsilon, N, n_range, n_random=20, seed=0):
    """Check the Lyapunov-norm inequalities along the orbit; margins in log scale.

    A margin is pass when it is >= -(tail slack).  Reported per inequality:
    the worst margin and its slack.
    """
    ns = sorted(set(int(n) for n in n_range))
    n_max = max(abs(n) for n in ns)
    metric = _metric_for(gen, splitting, epsilon, N, n_max)
    eps = float(epsilon)
    rng = np.random.default_rng(seed)
    chi_top = max(metric.chis)
    K0, low0, tail0 = metric.K(0)
    L0, _ = metric.norm_matrix(0)
    L0inv = np.linalg.inv(L0)
    rows = []

    def add(name, n, margin, slack):
        rows.append({"inequality": name, "n": n, "margin": float(margin), "slack": float(slack)})

    H0 = [metric._weighted(i, 0) for i in range(len(metric.bases))]
    for n in ns:
        Hn = [metric._weighted(i, n) for i in range(len(metric.bases))]
        slack_n = max(t for _, t in Hn) + max(t for _, t in H0)
        slack = math.log1p(slack_n) if math.isfinite(slack_n) else math.inf
        # estAEi: generalized eigenvalues of (H_n, H_0) bound the norm ratio squared
        for i, ((Hi, _), (Hz, _)) in enumerate(zip(Hn, H0)):
            r = eigh(Hi, Hz, eigvals_only=True)
            add(f"AEi[{i}]-lower", n, 0.5 * math.log(r[0]) + eps * abs(n), slack)
            add(f"AEi[{i}]-upper", n, eps * abs(n) - 0.5 * math.log(r[-1]), slack)
        Kn, lown, tailn = metric.K(n)
        Ln, _ = metric.norm_matrix(n)
        # estLnorm at f^n x: the lower bound; the upper bound is the definition of K
        add("Lnorm-lower", n, math.log(lown), slack)
        # estK
        add("K-upper", n, math.log(K0) + eps * abs(n) - math.log(Kn), slack)
        add("K-lower", n, math.log(Kn) - math.log(K0) + eps * abs(n), slack)
        if n >= 0:
            # estAnorm, blockwise: the cocycle preserves the splitting
            lognorm = -math.inf
            for i, ((Hi, _), (Hz, _)) in enumerate(zip(Hn, H0)):
                r = eigh(Hi, Hz, eigvals_only=True)
                lognorm = max(lognorm, metric.chis[i] * n + 0.5 * math.log(r[-1]))
            add("Anorm-upper", n, chi_top * n + eps * n - lognorm, slack)
            add("Anorm-lower", n, lognorm - chi_top * n + eps * n, slack)
            # estMnorm for A(x, n) and for random matrices, y = f^n x
            if n > 0:
                U, E = kernels.cumprod_scaled(gen.evaluate_orbit(splitting.x, n))
                plain = math.log(np.linalg.norm(U[-1], 2)) + E[-1] * math.log(2.0)
            else:
                plain = 0.0
            add("Mnorm-lower[A(x,n)]", n, lognorm - (plain - math.log(K0)), slack)
            add("Mnorm-upper[A(x,n)]", n, plain + math.log(Kn) - lognorm, slack)
        for _ in range(n_random):
            M = rng.normal(size=(gen.m, gen.m))
            ly = math.log(np.linalg.norm(Ln @ M @ L0inv, 2))
            pl = math.log(np.linalg.norm(M, 2))
            add("Mnorm-lower[random]", n, ly - (pl - math.log(K0)), slack)
            add("Mnorm-upper[random]", n, pl + math.log(Kn) - ly, slack)

    worst = {}
    for r in rows:
        w = worst.get(r["inequality"])
        if w is None or r["margin"] < w["margin"]:
            worst[r["inequality"]] = r
    failing = [r for r in rows if r["margin"] < -r["slack"] - 1e-12]
    nonzero = [r for r in rows if r["n"] != 0 and r["inequality"] not in ("Lnorm-lower",)]
    return {
        "pass": not failing,
        "worst": worst,
        "failures": failing,
        "min_margin_nonzero_n": min((r["margin"] for r in nonzero), default=None),
        "chis": metric.chis,
        "K0": K0,
        "epsilon": eps,
        "N": N,
        "m_factor": gen.m,
        "rows": rows,
    }
