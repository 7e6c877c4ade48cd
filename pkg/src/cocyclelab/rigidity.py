"""Periodic-data audits, periodic approximation of exponents, growth bounds,
uniform times, shadowing residuals and boundedness audits."""
import math
from dataclasses import dataclass, field
from fractions import Fraction

import numpy as np
from scipy.stats import linregress

from . import kernels
from .base_systems import (
    RationalPoint,
    SymbolicPoint,
    SymbolicSystem,
    ToralSystem,
    agreement_radii,
)
from .errors import PreconditionError
from .lyapunov import spectrum_qr
from .matrix_kit import compound
from .parallel import parallel_map

LN2 = math.log(2.0)
HUGE_EXP = 900          # beyond 2**HUGE_EXP dense values are not formed
TRIVIAL_TOL = 1e-6
CHI_TOL = 1e-3
PLATEAU_TOL = 0.01
HEURISTIC_LABEL = "heuristic bound, periods <= {}"


# --------------------------------------------------------------------------
# batched periodic products


def _periodic_data(gen, reps, n):
    """Orbit data (K, n + 1, w) for K periodic orbits of period n."""
    sys = gen.system
    if isinstance(sys, SymbolicSystem):
        words = np.asarray(reps, dtype=np.int64)
        R = gen._radius
        idx = (np.arange(n + 1)[:, None] + np.arange(-R, R + 1)[None, :]) % n
        return words[:, idx]
    Q, D = reps
    Q = np.asarray(Q, dtype=np.int64 if D < 2**62 // (sys.d * int(np.abs(sys.L).max()) + 1)
                   else object)
    out = np.empty((len(Q), n + 1, sys.d))
    cur = Q.copy()
    for t in range(n + 1):
        out[:, t] = (cur / D).astype(float) if cur.dtype == object else cur / D
        cur = (cur @ sys.L.T.astype(cur.dtype)) % D
    return out


def _batched_product(A):
    """Products A[:, n-1] ... A[:, 0] of a (K, n, s, s) stack as (units, exps)."""
    K, n, s, _ = A.shape
    P = np.broadcast_to(np.eye(s), (K, s, s)).copy()
    E = np.zeros(K, dtype=np.int64)
    for t in range(n):
        P = A[:, t] @ P
        _, e = np.frexp(np.max(np.abs(P), axis=(1, 2)))
        P = np.ldexp(P, -e[:, None, None])
        E += e
    return P, E


def periodic_batch(gen, reps, n):
    """Period products and exponents for a batch of orbits of period ``n``.

    ``reps`` is a (K, n) word array for subshifts or ``(Q, D)`` for tori.
    Returns dict of arrays: exponents (K, m) ascending, norm_minus_id, d_group.
    """
    m = gen.m
    data = _periodic_data(gen, reps, n)
    K, _, w = data.shape
    if gen.constant is not None:
        A = np.broadcast_to(gen.constant, (K, n, m, m)).copy()
    else:
        fdata = data[:, 1:].reshape(K * n, w) if gen.conj is not None else None
        A = gen.evaluate_pairs(data[:, :n].reshape(K * n, w), fdata).reshape(K, n, m, m)
    U, E = _batched_product(A)
    tops = np.zeros((K, m + 1))
    for i in range(1, m):
        Ui, Ei = _batched_product(compound(A, i)) if i > 1 else (U, E)
        lead = np.max(np.abs(np.linalg.eigvals(Ui)), axis=1)
        tops[:, i] = np.log(lead) + Ei * LN2
    tops[:, m] = np.sum(np.linalg.slogdet(A)[1], axis=1)
    exps = np.sort(np.diff(tops, axis=1) / n, axis=1)
    nid = np.full(K, np.inf)
    dg = np.full(K, np.inf)
    # the inverse product is accumulated from inverse factors, not by inverting P
    Ui, Ei = _batched_product(np.linalg.inv(A)[:, ::-1])
    ok = E < HUGE_EXP
    if ok.any():
        I = np.eye(m)
        nid[ok] = np.linalg.norm(np.ldexp(U[ok], E[ok][:, None, None]) - I, 2, axis=(1, 2))
    ok &= Ei < HUGE_EXP
    if ok.any():
        Pi = np.ldexp(Ui[ok], Ei[ok][:, None, None])
        dg[ok] = nid[ok] + np.linalg.norm(Pi - np.eye(m), 2, axis=(1, 2))
    return {"exponents": exps, "norm_minus_id": nid, "d_group": dg}


def _rep_label(p):
    if isinstance(p, SymbolicPoint):
        return "".join(map(str, p.word.tolist()))
    return "(" + ",".join(str(q) for q in p.q) + f")/{p.D}"


def _orbits_by_period(system, max_period):
    groups = {}
    for p, n in system.periodic_orbits(max_period):
        groups.setdefault(n, []).append(p)
    return groups


def _batch_reps(system, pts):
    if isinstance(system, SymbolicSystem):
        return np.stack([p.word for p in pts])
    return np.array([p.q for p in pts], dtype=object if pts[0].D >= 2**62 else np.int64), pts[0].D


# --------------------------------------------------------------------------
# periodic data audit


@dataclass
class PeriodicDataAudit:
    max_period: int
    records: list
    chi_min: float
    chi_max: float
    classification: str
    tolerance: float
    max_norm_minus_id: float
    max_d_group: float
    label: str
    sensitivity: list = field(default_factory=list)

    def as_dict(self, records=True):
        out = {"max_period": self.max_period, "chi_min": self.chi_min, "chi_max": self.chi_max,
               "classification": self.classification, "tolerance": self.tolerance,
               "max_norm_minus_id": self.max_norm_minus_id, "max_d_group": self.max_d_group,
               "label": self.label, "orbits": len(self.records),
               "sensitivity": self.sensitivity}
        if records:
            out["records"] = self.records
        return out


def audit_periodic_data(gen, max_period, tolerance=TRIVIAL_TOL, chi_tol=CHI_TOL,
                        plateau_ratio=1.5, chunk=4096):
    """Exhaustive audit of period products over all orbits of period <= max_period.

    trivial: every ||A(p, n) - Id|| <= tolerance.  bounded: all exponents
    within ``chi_tol`` of 0 and the largest d(A(p, n), Id) over periods up to
    max_period exceeds that over periods up to max_period / 2 by at most the
    factor ``plateau_ratio``.  Otherwise general.
    """
    if max_period < 1:
        raise PreconditionError("max_period must be positive")
    system = gen.system
    groups = _orbits_by_period(system, max_period)
    records = []
    per_n = {}
    for n in sorted(groups):
        pts = groups[n]
        for s in range(0, len(pts), chunk):
            part = pts[s: s + chunk]
            res = periodic_batch(gen, _batch_reps(system, part), n)
            for j, p in enumerate(part):
                ex = res["exponents"][j]
                with np.errstate(over="ignore"):
                    mod = np.exp(n * ex)
                records.append({"period": n, "orbit": _rep_label(p),
                                "norm_minus_id": float(res["norm_minus_id"][j]),
                                "d_group": float(res["d_group"][j]),
                                "eigen_moduli": [float(v) for v in mod],
                                "exponents": [float(v) for v in ex]})
            agg = per_n.setdefault(n, [math.inf, -math.inf, 0.0, 0.0])
            agg[0] = min(agg[0], float(res["exponents"].min()))
            agg[1] = max(agg[1], float(res["exponents"].max()))
            agg[2] = max(agg[2], float(res["norm_minus_id"].max()))
            agg[3] = max(agg[3], float(res["d_group"].max()))
    if not records:
        raise PreconditionError("no periodic orbits up to the requested period")
    sens, lo, hi, nid, dg = [], math.inf, -math.inf, 0.0, 0.0
    for n in range(1, max_period + 1):
        if n in per_n:
            lo, hi = min(lo, per_n[n][0]), max(hi, per_n[n][1])
            nid, dg = max(nid, per_n[n][2]), max(dg, per_n[n][3])
        sens.append({"max_period": n, "chi_min": lo, "chi_max": hi,
                     "max_norm_minus_id": nid, "max_d_group": dg})
    half = sens[max(0, (max_period + 1) // 2 - 1)]["max_d_group"]
    if nid <= tolerance:
        cls = "trivial"
    elif max(abs(lo), abs(hi)) <= chi_tol and math.isfinite(dg) and (
            half > 0 and dg <= plateau_ratio * half):
        cls = "bounded"
    else:
        cls = "general"
    return PeriodicDataAudit(max_period, records, lo, hi, cls, tolerance, nid, dg,
                             HEURISTIC_LABEL.format(max_period), sens)


# --------------------------------------------------------------------------
# periodic approximation of exponents


@dataclass
class ApproximationResult:
    success: bool
    epsilon: float
    target: list
    period: int = None
    orbit: str = None
    point: object = None
    periodic_exponents: list = None
    gaps: list = None
    stats: dict = field(default_factory=dict)

    @property
    def max_gap(self):
        return max(self.gaps) if self.gaps else math.inf

    def as_dict(self):
        return {"success": self.success, "epsilon": self.epsilon, "target": self.target,
                "period": self.period, "orbit": self.orbit,
                "periodic_exponents": self.periodic_exponents, "gaps": self.gaps,
                "max_gap": self.max_gap, "stats": self.stats}


def geometric_ladder(max_period, ratio=2 ** 0.25):
    out, v = set(), 1.0
    while round(v) <= max_period:
        out.add(int(round(v)))
        v *= ratio
    out.add(int(max_period))
    return sorted(out)


def _minimal_rotation(word):
    n = len(word)
    doubled = np.concatenate([word, word])
    best = 0
    for s in range(1, n):
        a, b = doubled[s: s + n], doubled[best: best + n]
        diff = np.nonzero(a != b)[0]
        if len(diff) and a[diff[0]] < b[diff[0]]:
            best = s
    return doubled[best: best + n]


def approximate_exponents_by_periodic(gen, epsilon, budget=1_000_000, max_period=24,
                                      measure=None, seed=0, target_length=100_000,
                                      chunk=65_536, per_chunk=64, ladder=None, target=None):
    """Scan a typical orbit for pseudo-returns, close them, compare periodic exponents.

    The orbit is processed in whole chunks, so a larger budget scans a superset
    of candidates in the same order and the best gap never gets worse.
    """
    if epsilon <= 0:
        raise PreconditionError("epsilon must be positive")
    system = gen.system
    sym = isinstance(system, SymbolicSystem)
    if target is None:
        x0 = gen.base_point(seed, length=target_length, past=0)
        target = spectrum_qr(gen, x0, target_length).exponents
    target = np.sort(np.asarray(target, dtype=float))
    ladder = ladder or geometric_ladder(max_period)
    nchunks = max(1, int(budget) // chunk)
    delta0 = system.closing.delta0
    stats = {"orbit_steps": nchunks * chunk, "chunks_scanned": 0, "returns_examined": 0,
             "candidates_evaluated": 0, "best_delta": None, "ladder": ladder}
    best = ApproximationResult(False, epsilon, [float(v) for v in target], stats=stats)
    best_gap = math.inf
    seen = set()
    pad = max(ladder) + 1
    if sym:
        seq = system.sample_sequence(nchunks * chunk + 2 * pad, seed=seed + 1)
    else:
        rng = np.random.default_rng(seed + 1)
        orbit = system.orbit(rng.random(system.d), nchunks * chunk + pad)
    for c in range(nchunks):
        lo = c * chunk
        dists, ns, idx = [], [], []
        for n in ladder:
            if sym:
                window = seq[lo: lo + chunk + n + 2 * pad]
                r, _ = agreement_radii(window, n)
                # agreement beyond one period adds nothing to the closing
                r = np.minimum(r[pad: pad + chunk], n)
                dist = system.base ** (-r.astype(float))
            else:
                P = orbit[lo: lo + chunk + n]
                diff = P[n:] - P[:-n]
                diff -= np.round(diff)
                dist = np.sqrt(np.sum(diff * diff, axis=1))[:chunk]
            hit = np.nonzero(dist < delta0)[0]
            stats["returns_examined"] += int(len(hit))
            dists.append(dist[hit])
            ns.append(np.full(len(hit), n))
            idx.append(hit)
        dists, ns, idx = (np.concatenate(v) for v in (dists, ns, idx))
        order = np.lexsort((idx, -ns, dists))
        picked = {}
        count = 0
        for o in order:
            d, n, i = float(dists[o]), int(ns[o]), int(idx[o])
            if sym:
                block = seq[lo + pad + i: lo + pad + i + n]
                key = (n, tuple(_minimal_rotation(block).tolist()))
                if key in seen:
                    continue
                seen.add(key)
                rep = block
            else:
                rep = lo + i
            picked.setdefault(n, []).append((d, rep))
            count += 1
            if count >= per_chunk:
                break
        for n in sorted(picked):
            items = picked[n]
            if sym:
                reps = np.stack([r for _, r in items])
                labels = ["".join(map(str, r.tolist())) for _, r in items]
                points = [SymbolicPoint.periodic(r) for _, r in items]
            else:
                triples = [system.close_pseudo_return(orbit[r], n) for _, r in items]
                pts = [t.p if isinstance(t.p, RationalPoint) else _rational_of(system, t.p, n)
                       for t in triples]
                D = pts[0].D
                reps = (np.array([p.q for p in pts], dtype=np.int64 if D < 2**40 else object), D)
                labels = [_rep_label(p) for p in pts]
                points = pts
            res = periodic_batch(gen, reps, n)
            stats["candidates_evaluated"] += len(items)
            gaps = np.abs(res["exponents"] - target[None, :])
            worst = gaps.max(axis=1)
            j = int(np.argmin(worst))
            if worst[j] < best_gap:
                best_gap = float(worst[j])
                best.period, best.orbit, best.point = n, labels[j], points[j]
                best.periodic_exponents = [float(v) for v in res["exponents"][j]]
                best.gaps = [float(v) for v in gaps[j]]
                stats["best_delta"] = float(items[j][0])
        stats["chunks_scanned"] = c + 1
        if best_gap < epsilon:
            best.success = True
            break
    return best


def _rational_of(system, x, n):
    """Exact periodic point from a float orbit point that returns exactly."""
    xs = [Fraction(float(v)).limit_denominator(system.count_periodic(n)) for v in np.asarray(x)]
    D = system.count_periodic(n)
    return RationalPoint(tuple(int(v * D) % D for v in xs), D)


# --------------------------------------------------------------------------
# sample grids


def sample_points(gen, count, length, seed=0, past=0):
    """``count`` independent typical points supporting ``length`` forward steps."""
    rng = np.random.default_rng(seed)
    seeds = rng.integers(0, 2**62, size=count)
    return [gen.base_point(int(s), length=length, past=past) for s in seeds]


def _log_norms(U, E):
    return np.log(np.linalg.norm(U, 2, axis=(1, 2))) + E * LN2


def _forward_inverse_lognorms(gen, x, n):
    """log ||A(x, j)|| and log ||A(x, j)^-1|| for j = 0..n."""
    A = gen.evaluate_orbit(x, n)
    U, E = kernels.cumprod_scaled(A)
    Ui, Ei = kernels.cumprod_scaled(np.linalg.inv(A), right=True)
    return _log_norms(U, E), _log_norms(Ui, Ei)


@dataclass
class GrowthBoundReport:
    epsilon: float
    chi_min: float
    chi_max: float
    c_epsilon: float
    log_c_epsilon: float
    passed: bool
    drift: float
    n_max: int
    points: int
    argmax_n: int
    margin_trace: list = field(default_factory=list)
    uniform_time: int = None

    def as_dict(self):
        return {k: getattr(self, k) for k in ("epsilon", "chi_min", "chi_max", "c_epsilon",
                                              "log_c_epsilon", "passed", "drift", "n_max",
                                              "points", "argmax_n", "uniform_time")}


def verify_growth_bound(gen, chi_min, chi_max, epsilon, points=64, n_max=None, seed=0,
                        drift_tol=1e-9, workers=1):
    """Smallest c_eps with ||A(x,n)|| <= c e^{n(chi_max+eps)} and
    ||A(x,n)^-1|| <= c e^{n(-chi_min+eps)} over the sample grid.

    Passes when c_eps is finite and the worst excess over n in the second half
    of the range does not exceed that over the first half (no upward drift).
    ``margin_trace[n]`` is the worst excess at step n; the slack of every
    grid point against the fitted constant is therefore nonnegative.
    """
    if epsilon <= 0:
        raise PreconditionError("epsilon must be positive")
    n_max = int(n_max or max(200, math.ceil(20.0 / epsilon)))
    pts = sample_points(gen, points, n_max, seed)
    j = np.arange(n_max + 1)
    rows = parallel_map(lambda x: _forward_inverse_lognorms(gen, x, n_max), pts, workers)
    worst = np.full(n_max + 1, -np.inf)
    for fwd, inv in rows:
        worst = np.maximum(worst, fwd - j * (chi_max + epsilon))
        worst = np.maximum(worst, inv + j * (chi_min - epsilon))
    logc = float(np.max(worst))
    half = n_max // 2
    drift = float(np.max(worst[half:]) - np.max(worst[: half + 1]))
    finite = math.isfinite(logc)
    return GrowthBoundReport(epsilon, chi_min, chi_max, math.exp(logc) if finite else math.inf,
                             logc, bool(finite and drift <= drift_tol), drift, n_max, points,
                             int(np.argmax(worst)), [float(v) for v in worst])


# --------------------------------------------------------------------------
# uniform time from subadditivity


@dataclass
class UniformTimeResult:
    N: int
    found: bool
    epsilon: float
    chi_max: float
    max_a_trace: list
    subadditivity: dict
    b_relation: dict
    points: int
    n_max: int

    def as_dict(self):
        return {"N": self.N, "found": self.found, "epsilon": self.epsilon,
                "chi_max": self.chi_max, "points": self.points, "n_max": self.n_max,
                "subadditivity": self.subadditivity, "b_relation": self.b_relation,
                "max_a_trace": self.max_a_trace}


def _a_rows(gen, x, n_max, shifts, rate):
    """a_n(f^s x) for s < shifts, n = 0..n_max, as a (shifts, n_max + 1) array."""
    A = gen.evaluate_orbit(x, n_max + shifts)
    j = np.arange(n_max + 1)
    out = np.empty((shifts, n_max + 1))
    for s in range(shifts):
        U, E = kernels.cumprod_scaled(A[s: s + n_max])
        out[s] = _log_norms(U, E) - rate * j
    return out


def uniform_time_trace(gen, chi_max, epsilon, points, n_max, seed, shifts=1, workers=1):
    """max over the sample of a_n(x) = log||A(x,n)|| - (chi_max + eps) n, n = 0..n_max."""
    pts = sample_points(gen, points, n_max + shifts, seed)
    rate = chi_max + epsilon
    rows = parallel_map(lambda x: _a_rows(gen, x, n_max, shifts, rate).max(axis=0), pts,
                        workers)
    return np.max(np.stack(rows), axis=0), pts


def find_uniform_time(gen, chi_max, epsilon, points=1000, n_max=400, seed=0, shifts=8,
                      triples=200, workers=1):
    """Smallest N <= n_max with a_N(x) < 0 at every sampled point.

    Each sample point also contributes ``shifts`` points along its orbit.  The
    subadditivity relation a_{n+k}(x) <= a_n(f^k x) + a_k(x) and the
    b-relation are checked on random triples (x, n, k).
    """
    if epsilon <= 0:
        raise PreconditionError("epsilon must be positive")
    trace, pts = uniform_time_trace(gen, chi_max, epsilon, points, n_max, seed, shifts, workers)
    neg = np.nonzero(trace[1:] < 0)[0]
    found = len(neg) > 0
    N = int(neg[0]) + 1 if found else None
    sub, brel = check_subadditivity(gen, chi_max, epsilon, pts, n_max, triples, seed)
    return UniformTimeResult(N, found, epsilon, chi_max, [float(v) for v in trace], sub, brel,
                             points, n_max)


def check_subadditivity(gen, chi_max, epsilon, pts, n_max, triples=200, seed=0):
    """Worst excess of the subadditivity relations over random (x, n, k) with n + k <= n_max.

    b_k(x) = log ||A(x,k)^-1||.  The relation a_n(x) <= a_{n+k}(x) + b_k(f^n x)
    only holds after adding (chi_max + eps) k, the term a_{n+k} subtracts; both
    the literal and the corrected forms are reported.
    """
    rng = np.random.default_rng(seed + 7)
    rate = chi_max + epsilon
    worst_sub, worst_b, worst_lit = -math.inf, -math.inf, -math.inf
    lit_fail = 0
    for _ in range(triples):
        x = pts[int(rng.integers(len(pts)))]
        n = int(rng.integers(1, n_max))
        k = int(rng.integers(1, n_max - n + 1))
        A = gen.evaluate_orbit(x, n + k)
        U, E = kernels.cumprod_scaled(A)
        ln = _log_norms(U, E)
        Uk, Ek = kernels.cumprod_scaled(A[k:])
        a_n_fk = _log_norms(Uk[n:n + 1], Ek[n:n + 1])[0] - rate * n
        a_k = ln[k] - rate * k
        a_nk = ln[n + k] - rate * (n + k)
        a_n = ln[n] - rate * n
        worst_sub = max(worst_sub, a_nk - a_n_fk - a_k)
        Ui, Ei = kernels.cumprod_scaled(np.linalg.inv(A[n:n + k]), right=True)
        b_k = _log_norms(Ui[-1:], Ei[-1:])[0]
        lit = a_n - a_nk - b_k
        worst_lit = max(worst_lit, lit)
        lit_fail += lit > 1e-10
        worst_b = max(worst_b, lit - rate * k)
    sub = {"triples": triples, "worst_excess": worst_sub, "holds": bool(worst_sub <= 1e-10)}
    brel = {"triples": triples, "worst_excess": worst_b, "holds": bool(worst_b <= 1e-10),
            "literal_worst_excess": worst_lit, "literal_failures": int(lit_fail)}
    return sub, brel


def check_uniform_time(gen, chi_max, epsilon, N, points=1000, seed=1, workers=1):
    """max a_N over a fresh sample; negative means N generalizes."""
    pts = sample_points(gen, points, N, seed)
    rate = chi_max + epsilon
    vals = parallel_map(lambda x: _a_rows(gen, x, N, 1, rate)[0, N], pts, workers)
    return float(np.max(vals))


# --------------------------------------------------------------------------
# shadowing residuals


def _products_along(gen, pt, n):
    A = gen.evaluate_orbit(pt, n)
    U, E = kernels.cumprod_scaled(A)
    return U, E


def _relative_gap(Ua, Ea, Ub, Eb, left):
    """||Ua^-1 (Ub - Ua)|| (left) or ||(Ua - Ub) Ub^-1|| (right) on aligned scales."""
    if left:
        diff = np.ldexp(Ub, int(Eb - Ea)) - Ua
        return float(np.linalg.norm(np.linalg.solve(Ua, diff), 2))
    diff = Ua - np.ldexp(Ub, int(Eb - Ea))
    return float(np.linalg.norm(np.linalg.solve(Ub.T, diff.T).T, 2) * 2.0 ** float(Ea - Eb))


def shadowing_residual(gen, triple, epsilon=0.05, c=None):
    """Residuals of the closing triple (x, p, y):

    residual_sp = ||A(p,n)^-1 A(y,n) - Id||, the pair close at the start;
    residual_xu = ||A(x,n) A(y,n)^-1 - Id||, the pair close at the end.
    Both are computed as ||A^-1 (B - A)|| so equal products give exactly 0.
    ``egrow`` reports max_j log||A(., j)|| - eps j along the three orbits.
    """
    n = triple.n
    Up, Ep = _products_along(gen, triple.p, n)
    Uy, Ey = _products_along(gen, triple.y, n)
    Ux, Ex = _products_along(gen, triple.x, n)
    sp = _relative_gap(Up[-1], Ep[-1], Uy[-1], Ey[-1], left=True)
    xu = _relative_gap(Ux[-1], Ex[-1], Uy[-1], Ey[-1], left=False)
    j = np.arange(n + 1)
    logc = max(float(np.max(_log_norms(U, E) - epsilon * j))
               for U, E in ((Up, Ep), (Uy, Ey), (Ux, Ex)))
    out = {"residual_sp": sp, "residual_xu": xu, "n": n, "delta": triple.delta,
           "egrow": {"epsilon": epsilon, "log_c": logc, "holds": math.isfinite(logc)}}
    if c is not None:
        bound = c * triple.delta ** gen.alpha
        out["bound"] = bound
        out["passed"] = bool(max(sp, xu) <= bound)
    return out


def constructed_return(system, r, n, rng, window):
    """A point x with dist(x, f^n x) of order base^-r (subshift), or a torus point
    with closing delta of order base^-r.  Returns (x, n)."""
    if isinstance(system, SymbolicSystem):
        if n < 2 * r:
            raise PreconditionError("need n >= 2r")
        for _ in range(1000):
            seq = system.sample_sequence(n + 2 * window, seed=int(rng.integers(2**62)))
            o = window
            seq[o + n - r + 1: o + n + r] = seq[o - r + 1: o + r]
            if seq[o + n + r] == seq[o + r] and system.k > 1:
                seq[o + n + r] = (seq[o + r] + 1) % system.k
            if system.is_admissible(seq):
                return SymbolicPoint(seq, o), n
        raise PreconditionError("could not build an admissible return")
    d = system.d
    Ln = np.array([[int(v) for v in row] for row in _matpow(system, n)], dtype=float)
    M = Ln - np.eye(d)
    k = rng.integers(-3, 4, size=d)
    pt = np.linalg.solve(M, k)
    u = rng.normal(size=d)
    u /= np.linalg.norm(M @ u)
    t = 2.0 ** (-r) / system.closing.c
    return np.mod(pt + t * u, 1.0), n


def _matpow(system, n):
    from .base_systems import _int_matpow
    return _int_matpow(system.L_int, n)


def growth_precondition(gen, length=20_000, seed=0):
    """Exponent spread chi_max - chi_min along a typical orbit against lambda * alpha.

    The residual bound needs ||A(x, i)|| ||A(x, i)^-1|| <= c e^{2 eps i} with
    2 eps < lambda alpha; the measured spread is the smallest usable 2 eps.
    """
    x = gen.base_point(seed, length=length, past=0)
    ex = spectrum_qr(gen, x, length).exponents
    spread = float(ex[-1] - ex[0])
    lam_alpha = gen.system.closing.lam * gen.alpha
    return {"spread": spread, "lambda_alpha": lam_alpha, "met": bool(spread < lam_alpha)}


def shadowing_sweep(gen, exponents=range(4, 11), n=None, trials=20, seed=0, epsilon=0.05):
    """Residuals over a sweep delta = base^-r; log-log slope of residual vs delta.

    Each level reports the worst residual and the geometric mean over trials;
    the slope is fitted to the geometric means.  ``precondition`` compares the
    exponent spread with lambda * alpha; past it the residuals need not decay.
    """
    system = gen.system
    exponents = list(exponents)
    if n is None:
        n = 2 * max(exponents) + 2 if isinstance(system, SymbolicSystem) else 8
    rng = np.random.default_rng(seed)
    window = gen.window + n + 8
    rows = []
    for r in exponents:
        res = []
        for _ in range(trials):
            x, nn = constructed_return(system, r, n, rng, window)
            t = system.close_pseudo_return(x, nn)
            if t.delta == 0.0:
                continue
            out = shadowing_residual(gen, t, epsilon)
            res.append((t.delta, out["residual_sp"], out["residual_xu"]))
        res = np.array(res)
        worst = res[:, 1:].max(axis=1)
        with np.errstate(divide="ignore"):
            typical = float(np.exp(np.mean(np.log(worst)))) if np.all(worst > 0) else 0.0
        rows.append({"r": int(r), "delta": float(np.exp(np.mean(np.log(res[:, 0])))),
                     "residual_sp": float(res[:, 1].max()), "residual_xu": float(res[:, 2].max()),
                     "residual_max": float(worst.max()), "residual": typical})
    d = np.array([row["delta"] for row in rows])
    v = np.array([row["residual"] for row in rows])
    vmax = np.array([row["residual_max"] for row in rows])
    out = {"rows": rows, "alpha": gen.alpha, "slope": None, "c_fit": None, "zero": False,
           "precondition": growth_precondition(gen, seed=seed)}
    if np.all(vmax == 0):
        out["zero"] = True
        out["passed"] = True
        return out
    keep = v > 0
    if keep.sum() < 2:
        out["passed"] = False
        return out
    # regression on the per-level geometric mean; the constant is the envelope
    fit = linregress(np.log(d[keep]), np.log(v[keep]))
    out["slope"] = float(fit.slope)
    out["c_fit"] = float(np.max(vmax / d ** gen.alpha))
    out["passed"] = bool(fit.slope >= 0.8 * gen.alpha)
    return out


# --------------------------------------------------------------------------
# boundedness audit


def _log_dg_trace(gen, x, n_max):
    """log d(A(x, n), Id) for n = 1..n_max (-inf where the product is Id)."""
    A = gen.evaluate_orbit(x, n_max)
    U, E = kernels.cumprod_scaled(A)
    Ui, Ei = kernels.cumprod_scaled(np.linalg.inv(A), right=True)
    U, E, Ui, Ei = U[1:], E[1:], Ui[1:], Ei[1:]
    out = np.empty(n_max)
    small = (E < HUGE_EXP) & (Ei < HUGE_EXP)
    I = np.eye(gen.m)
    if small.any():
        P = np.ldexp(U[small], E[small][:, None, None])
        Pi = np.ldexp(Ui[small], Ei[small][:, None, None])
        dg = np.linalg.norm(P - I, 2, axis=(1, 2)) + np.linalg.norm(Pi - I, 2, axis=(1, 2))
        with np.errstate(divide="ignore"):
            out[small] = np.log(dg)
    big = ~small
    if big.any():
        out[big] = np.logaddexp(_log_norms(U[big], E[big]), _log_norms(Ui[big], Ei[big]))
    return out


def boundedness_audit(gen, points=8, n_max=10_000, seed=0, plateau_tol=PLATEAU_TOL,
                      audit=None, workers=1):
    """Running sup of d(A(x, n), Id) over sampled orbits.

    Bounded iff the sup at n_max exceeds the sup at n_max / 2 by less than
    ``plateau_tol`` (relative).  The trace is reported as log sup.
    """
    pts = sample_points(gen, points, n_max, seed)
    rows = parallel_map(lambda x: _log_dg_trace(gen, x, n_max), pts, workers)
    log_sup = np.maximum.accumulate(np.max(np.stack(rows), axis=0))
    half = log_sup[n_max // 2 - 1]
    end = log_sup[-1]
    if not math.isfinite(end) and end < 0:
        bounded, rel = True, 0.0
    else:
        rel = math.expm1(min(end - half, 700.0)) if math.isfinite(half) else math.inf
        bounded = bool(rel < plateau_tol)
    pre = None if audit is None else audit.classification in ("trivial", "bounded")
    with np.errstate(over="ignore"):
        sup = float(np.exp(end))
    return {"bounded": bounded, "sup": sup, "log_sup_end": float(end),
            "log_sup_half": float(half), "relative_increase": rel, "n_max": n_max,
            "points": points, "plateau_tol": plateau_tol, "precondition_met": pre,
            "log_sup_trace": [float(v) for v in log_sup]}
