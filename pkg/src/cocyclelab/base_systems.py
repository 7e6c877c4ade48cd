"""Hyperbolic base systems: two-sided subshifts of finite type and toral automorphisms.

Each system offers iteration, a metric, periodic-point enumeration, a
constructive closing lemma with a verifier, dense-orbit nets and orbit
sampling from a natural invariant measure.
"""
import math
from dataclasses import dataclass, field
from fractions import Fraction
from functools import reduce

import mpmath
import numpy as np
from scipy.spatial import cKDTree

from . import kernels
from .errors import (
    CoverageError,
    EnumerationLimitError,
    PreconditionError,
    WindowExhaustedError,
)

DEFAULT_ENUM_CAP = 2_000_000
DEFAULT_WINDOW = 64


@dataclass(frozen=True)
class ClosingSpec:
    c: float
    lam: float
    delta0: float

    def as_dict(self):
        return {"c": self.c, "lambda": self.lam, "delta0": self.delta0}


@dataclass
class ShadowingTriple:
    x: object
    p: object
    y: object
    n: int
    delta: float
    # exact data kept by the toral construction: p = q / D with L^n q = q mod D
    certificate: dict = field(default_factory=dict)


# --------------------------------------------------------------------------
# symbolic points


class SymbolicPoint:
    """A bi-infinite symbol sequence given by a finite word plus optional periodic tails.

    Coordinate ``i`` lives at word index ``origin + i``.  Indices past the end
    of ``word`` read ``right`` periodically, indices below zero read ``left``
    periodically (aligned so that index -1 is ``left[-1]``).  A missing tail
    means the coordinate is undefined there.
    """

    __slots__ = ("word", "origin", "left", "right")

    def __init__(self, word, origin=0, left=None, right=None):
        self.word = np.asarray(word, dtype=np.int64)
        self.origin = int(origin)
        self.left = None if left is None else np.asarray(left, dtype=np.int64)
        self.right = None if right is None else np.asarray(right, dtype=np.int64)

    @classmethod
    def periodic(cls, block, offset=0):
        """The periodization of ``block``; coordinate 0 reads ``block[offset]``."""
        b = np.asarray(block, dtype=np.int64)
        return cls(b, offset % len(b), b, b)

    def shifted(self, k):
        return SymbolicPoint(self.word, self.origin + int(k), self.left, self.right)

    def defined_range(self):
        """Coordinates ``[lo, hi)`` where the point is defined (may be infinite)."""
        lo = -math.inf if self.left is not None else -self.origin
        hi = math.inf if self.right is not None else len(self.word) - self.origin
        return lo, hi

    def coords(self, lo, hi):
        """Symbols at coordinates lo, ..., hi - 1."""
        j = np.arange(self.origin + lo, self.origin + hi)
        n = len(self.word)
        out = np.empty(len(j), dtype=np.int64)
        mid = (j >= 0) & (j < n)
        out[mid] = self.word[j[mid]]
        hi_mask = j >= n
        if hi_mask.any():
            if self.right is None:
                raise WindowExhaustedError(
                    f"coordinate {int(j[hi_mask][-1]) - self.origin} beyond right window")
            out[hi_mask] = self.right[(j[hi_mask] - n) % len(self.right)]
        lo_mask = j < 0
        if lo_mask.any():
            if self.left is None:
                raise WindowExhaustedError(
                    f"coordinate {int(j[lo_mask][0]) - self.origin} beyond left window")
            out[lo_mask] = self.left[j[lo_mask] % len(self.left)]
        return out

    def __getitem__(self, i):
        return int(self.coords(i, i + 1)[0])

    def _tail_span(self):
        periods = [len(t) for t in (self.left, self.right) if t is not None]
        return len(self.word) + reduce(math.lcm, periods, 1)

    def key(self, radius):
        return tuple(self.coords(-radius, radius + 1).tolist())

    def __repr__(self):
        lo, hi = self.defined_range()
        shown = self.coords(max(lo, -4), min(hi, 5))
        return f"SymbolicPoint(...{''.join(map(str, shown))}..., origin={self.origin})"


def _first_disagreement(a, b, upper=False):
    """Smallest |i| with a_i != b_i; ``math.inf`` for equal points.

    Returns ``(radius, exact)``.  If the points agree wherever both are
    defined, ``upper=True`` returns the first undefined radius with
    ``exact=False``; otherwise ``WindowExhaustedError`` is raised.
    """
    la, ha = a.defined_range()
    lb, hb = b.defined_range()
    R = min(-la, -lb, ha - 1, hb - 1)
    if math.isinf(R):
        # beyond every word both points are periodic, so agreement over one
        # joint period past the words is agreement forever
        span = a._tail_span() + b._tail_span()
        span += abs(a.origin) + abs(b.origin)
        cap = span + math.lcm(*(len(t) for t in (a.left, a.right, b.left, b.right)))
    else:
        cap = int(R)
    r = 8
    while True:
        r = min(r, cap)
        ca = a.coords(-r, r + 1)
        cb = b.coords(-r, r + 1)
        diff = np.nonzero(ca != cb)[0]
        if len(diff):
            return int(np.min(np.abs(diff - r))), True
        if r >= cap:
            break
        r *= 2
    if math.isinf(R):
        return math.inf, True
    if upper:
        return cap + 1, False
    raise WindowExhaustedError(
        f"points agree on all {cap} jointly defined coordinates; distance undecidable")


# --------------------------------------------------------------------------
# dense nets


@dataclass
class DenseOrbitNet:
    system: object
    z: object
    length: int
    mesh: float
    points: object          # symbolic: list of SymbolicPoint; toral: (L, d) array
    radius: int = 0         # symbolic: agreement radius certifying the mesh
    lookup: dict = field(default_factory=dict, repr=False)
    tree: object = field(default=None, repr=False)

    def point(self, k):
        return self.points[k]

    def nearest(self, x):
        """Orbit index of the nearest net point (ties: smallest index)."""
        if self.length == 0:
            raise PreconditionError("empty net")
        if self.tree is not None:
            _, k = self.tree.query(np.mod(np.asarray(x, dtype=float), 1.0))
            return int(k)
        if self.radius == 0:
            return 0
        key = x.key(self.radius - 1)
        cand = self.lookup.get(key)
        if not cand:
            raise PreconditionError("point lies outside the net's cylinder cover")
        if len(cand) == 1:
            return cand[0]
        best, best_r = cand[0], -1
        for k in cand:
            r, _ = _first_disagreement(self.points[k], x, upper=True)
            if r > best_r:
                best, best_r = k, r
        return best


# --------------------------------------------------------------------------
# subshifts of finite type


def _is_primitive(T):
    k = T.shape[0]
    P = (T > 0).astype(np.int64)
    M = P.copy()
    # Wielandt bound on the primitivity exponent
    for _ in range((k - 1) ** 2 + 1):
        if np.all(M > 0):
            return True
        M = ((M @ P) > 0).astype(np.int64)
    return bool(np.all(M > 0))


class SymbolicSystem:
    """Two-sided subshift of finite type with metric ``base**(-first disagreement)``."""

    kind = "sft"

    def __init__(self, transitions, base=2.0):
        T = np.asarray(transitions, dtype=np.int64)
        if T.ndim != 2 or T.shape[0] != T.shape[1] or T.shape[0] < 1:
            raise PreconditionError("transition matrix must be square")
        if not np.isin(T, (0, 1)).all():
            raise PreconditionError("transition matrix must be 0/1")
        if not _is_primitive(T):
            raise PreconditionError("transition matrix must be primitive")
        if base <= 1:
            raise PreconditionError("metric base must exceed 1")
        self.T = T
        self.k = T.shape[0]
        self.base = float(base)
        self.closing = ClosingSpec(1.0, math.log(self.base), 1.0 / self.base)
        self.diameter = 1.0
        ev, vr = np.linalg.eig(T.astype(float))
        i = int(np.argmax(ev.real))
        self.entropy_rate = float(ev[i].real)
        v = np.abs(vr[:, i].real)
        evl, vl = np.linalg.eig(T.T.astype(float))
        u = np.abs(vl[:, int(np.argmax(evl.real))].real)
        P = T * v[None, :] / (self.entropy_rate * v[:, None])
        self._markov = P / P.sum(axis=1, keepdims=True)
        pi = u * v
        self._stationary = pi / pi.sum()

    def spec(self):
        return {"type": "sft", "alphabet": self.k, "transitions": self.T.tolist(),
                "base": self.base}

    def __repr__(self):
        return f"SymbolicSystem(k={self.k}, T={self.T.tolist()})"

    # iteration and metric

    def step(self, x, k=1):
        return x.shifted(k)

    def orbit(self, x, n, start=0):
        return [x.shifted(start + i) for i in range(n)]

    def orbit_coords(self, x, n, radius, start=0):
        """(n, 2 radius + 1) array: row i holds f^(start+i) x on [-radius, radius]."""
        seq = x.coords(start - radius, start + n + radius)
        return np.lib.stride_tricks.sliding_window_view(seq, 2 * radius + 1)[:n]

    def distance(self, a, b, upper=False):
        r, _ = _first_disagreement(a, b, upper=upper)
        return 0.0 if math.isinf(r) else self.base ** (-r)

    def is_admissible(self, word, cyclic=False):
        w = np.asarray(word, dtype=np.int64)
        if np.any((w < 0) | (w >= self.k)):
            return False
        ok = bool(np.all(self.T[w[:-1], w[1:]] == 1))
        if cyclic and len(w):
            ok = ok and self.T[w[-1], w[0]] == 1
        return ok

    def validate(self, x, lo, hi):
        return self.is_admissible(x.coords(lo, hi))

    # periodic points

    def count_periodic(self, n):
        return int(np.trace(np.linalg.matrix_power(self.T.astype(object), n)))

    def admissible_words(self, length):
        """All admissible words of the given length, lexicographic, shape (N, length)."""
        words = np.arange(self.k, dtype=np.int64)[:, None]
        for _ in range(length - 1):
            last = words[:, -1]
            rows, nxt = np.nonzero(self.T[last])
            words = np.concatenate([words[rows], nxt[:, None]], axis=1)
        return words

    def enumerate_periodic(self, n, cap=DEFAULT_ENUM_CAP):
        """All points with f^n p = p as (point, minimal period) pairs."""
        if n < 1:
            raise PreconditionError("period must be positive")
        count = self.count_periodic(n)
        if count > cap:
            raise EnumerationLimitError(f"{count} points of period {n} exceed cap {cap}",
                                        estimate=count)
        words = self.admissible_words(n)
        words = words[self.T[words[:, -1], words[:, 0]] == 1]
        mins = _minimal_periods(words)
        return [(SymbolicPoint.periodic(w), int(q)) for w, q in zip(words, mins)]

    def periodic_orbits(self, max_period, cap=DEFAULT_ENUM_CAP):
        """One representative per periodic orbit of minimal period <= max_period."""
        out = []
        total = 0
        for n in range(1, max_period + 1):
            total += self.count_periodic(n)
            if total > cap:
                raise EnumerationLimitError(
                    f"{total} periodic points up to period {n} exceed cap {cap}", estimate=total)
            words = self.admissible_words(n)
            words = words[self.T[words[:, -1], words[:, 0]] == 1]
            if not len(words):
                continue
            words = words[_minimal_periods(words) == n]
            rots = np.stack([np.roll(words, -s, axis=1) for s in range(n)], axis=1)
            is_min = np.ones(len(words), dtype=bool)
            for s in range(1, n):
                cmp = _lex_compare(rots[:, s], words)
                is_min &= cmp > 0
            out.extend((SymbolicPoint.periodic(w), n) for w in words[is_min])
        return out

    def is_periodic(self, x, n):
        if x.left is None or x.right is None:
            return False
        span = x._tail_span() + abs(x.origin) + n
        a = x.coords(-span, span)
        return bool(np.all(a[n:] == a[:-n]))

    # closing lemma

    def close_pseudo_return(self, x, n):
        """Periodic p and heteroclinic y shadowing the pseudo-return of ``x``."""
        if n < 1:
            raise PreconditionError("n must be positive")
        xn = x.shifted(n)
        d = self.distance(x, xn)
        if d >= self.closing.delta0:
            raise PreconditionError(
                f"dist(x, f^n x) = {d} is not below delta0 = {self.closing.delta0}")
        if d == 0.0:
            return ShadowingTriple(x, x, x, n, 0.0)
        block = x.coords(0, n)
        # the wrap x_{n-1} -> x_0 = x_n is admissible because x_n = x_0
        assert self.T[block[-1], block[0]] == 1
        p = SymbolicPoint.periodic(block)
        lo, _ = x.defined_range()
        if math.isinf(lo):
            past = x.coords(-x._tail_span() - abs(x.origin), 0)
            left = x.left
            y = SymbolicPoint(np.concatenate([past, block]), len(past), left, block)
        else:
            past = x.coords(int(lo), 0)
            y = SymbolicPoint(np.concatenate([past, block]), len(past), None, block)
        return ShadowingTriple(x, p, y, n, self.closing.c * d)

    def verify_shadowing(self, triple, closing=None):
        cs = closing or self.closing
        n = triple.n
        dist = lambda a, b: self.distance(a, b, upper=True)
        rows = []
        for i in range(n + 1):
            fx, fp, fy = triple.x.shifted(i), triple.p.shifted(i), triple.y.shifted(i)
            rows.append(("x-p", i, dist(fx, fp), triple.delta * math.exp(-cs.lam * min(i, n - i))))
            rows.append(("p-y", i, dist(fp, fy), triple.delta * math.exp(-cs.lam * i)))
            rows.append(("y-x", i, dist(fy, fx), triple.delta * math.exp(-cs.lam * (n - i))))
        rows.append(("period", n, self.distance(triple.p, triple.p.shifted(n)), 0.0))
        return _shadowing_report(rows)

    # nets and sampling

    def dense_net(self, delta, max_length=1_000_000):
        if delta <= 0:
            raise PreconditionError("delta must be positive")
        if delta >= self.diameter:
            z = SymbolicPoint.periodic(self.admissible_cycle())
            return DenseOrbitNet(self, z, 1, self.diameter, [z], radius=0)
        r = max(1, math.ceil(-math.log(delta) / math.log(self.base) - 1e-12))
        width = 2 * r - 1
        seq = self._covering_sequence(width, max_length)
        z = SymbolicPoint.periodic(seq)
        L = len(seq)
        lookup = {}
        # win[k] is the central word of f^k z on [-(r-1), r-1]
        win = z.coords(-(r - 1), L + r - 1)
        win = np.lib.stride_tricks.sliding_window_view(win, width)
        for k in range(L):
            lookup.setdefault(tuple(win[k].tolist()), []).append(k)
        expected = len(self.admissible_words(width))
        if len(lookup) < expected:
            raise CoverageError("covering sequence missed some cylinders",
                                achieved_mesh=self.diameter)
        points = [z.shifted(k) for k in range(L)]
        return DenseOrbitNet(self, z, L, self.base ** (-r), points, radius=r, lookup=lookup)

    def admissible_cycle(self):
        """A short admissible cyclic word (used as a default base point)."""
        for n in range(1, self.k + 1):
            words = self.admissible_words(n)
            ok = words[self.T[words[:, -1], words[:, 0]] == 1]
            if len(ok):
                return ok[0]
        raise PreconditionError("no periodic orbit found")

    def _covering_sequence(self, width, max_length):
        """Cyclic admissible sequence containing every admissible word of ``width``.

        Greedy: extend by a symbol reaching an unseen word when possible,
        otherwise walk a shortest path in the word graph to the nearest unseen
        word; finally close the cycle through a shortest connecting path.
        """
        words = self.admissible_words(width)
        index = {tuple(w.tolist()): i for i, w in enumerate(words)}
        nw = len(words)
        succ = [[] for _ in range(nw)]
        for i, w in enumerate(words):
            for s in np.nonzero(self.T[w[-1]])[0]:
                succ[i].append(index[tuple(w[1:].tolist()) + (int(s),)])
        seen = np.zeros(nw, dtype=bool)
        cur = 0
        seq = list(words[0].tolist())
        seen[0] = True
        remaining = nw - 1
        while remaining:
            nxt = next((j for j in succ[cur] if not seen[j]), None)
            if nxt is not None:
                path = [nxt]
            else:
                path = _bfs_path(succ, cur, lambda j: not seen[j])
            for j in path:
                seq.append(int(words[j][-1]))
                if not seen[j]:
                    seen[j] = True
                    remaining -= 1
                cur = j
            if len(seq) > max_length:
                raise CoverageError(
                    f"covering sequence exceeds max_length {max_length}",
                    achieved_mesh=self.base ** (-((width + 1) // 2 - 1)) if width > 1 else 1.0)
        # close the cycle back to the opening word
        back = _bfs_path(succ, cur, lambda j: j == 0)
        for j in back:
            seq.append(int(words[j][-1]))
        # the final width symbols repeat the opening word; drop them
        seq = np.asarray(seq[: len(seq) - width], dtype=np.int64)
        if len(seq) == 0:
            seq = words[0][:1]
        if len(seq) > max_length:
            raise CoverageError(f"covering sequence exceeds max_length {max_length}",
                                achieved_mesh=1.0)
        return seq

    def sample_orbit(self, measure="max-entropy", length=1, seed=0, window=DEFAULT_WINDOW):
        """Orbit x, fx, ... of a Parry-typical point defined on a finite window."""
        if measure not in ("max-entropy", "parry"):
            raise PreconditionError(f"unknown measure {measure!r} for a subshift")
        base = SymbolicPoint(self.sample_sequence(length + 2 * window, seed), window)
        return [base.shifted(i) for i in range(length)]

    def sample_sequence(self, total, seed=0):
        """A stationary Parry-Markov symbol sequence of the given length."""
        rng = np.random.default_rng(seed)
        s0 = int(rng.choice(self.k, p=self._stationary))
        cum = np.cumsum(self._markov, axis=1)
        return kernels.markov_chain(cum, rng.random(total - 1), s0)

    def random_point(self, rng, window=DEFAULT_WINDOW):
        return self.sample_orbit(length=1, seed=int(rng.integers(2**63)), window=window)[0]

    def perturb(self, x, r, rng, window=DEFAULT_WINDOW):
        """A point agreeing with ``x`` on |i| < r, resampled (Markov) elsewhere.

        The result is at distance at most ``base**(-r)`` from ``x`` and is
        defined on [-window, window].
        """
        r = int(r)
        window = max(window, r)
        if r <= 0:
            return self.random_point(rng, window=window)
        core = x.coords(-(r - 1), r)
        cum = np.cumsum(self._markov, axis=1)
        fwd = kernels.markov_chain(cum, rng.random(window - r + 1), int(core[-1]))[1:]
        pi = self._stationary
        rev = (self._markov * pi[:, None]).T / pi[:, None]
        back = kernels.markov_chain(np.cumsum(rev, axis=1), rng.random(window - r + 1),
                                    int(core[0]))[1:]
        word = np.concatenate([back[::-1], core, fwd])
        return SymbolicPoint(word, window)


def _bfs_path(succ, start, target):
    prev = {start: None}
    frontier = [start]
    while frontier:
        nxt = []
        for u in frontier:
            for v in succ[u]:
                if v in prev:
                    continue
                prev[v] = u
                if target(v):
                    path = [v]
                    while prev[path[-1]] != start:
                        path.append(prev[path[-1]])
                    return path[::-1]
                nxt.append(v)
        frontier = nxt
    raise CoverageError("word graph is not strongly connected")


def _lex_compare(a, b):
    """Row-wise sign of lexicographic comparison of a against b."""
    diff = a != b
    first = np.argmax(diff, axis=1)
    rows = np.arange(len(a))
    any_diff = diff.any(axis=1)
    s = np.sign(a[rows, first] - b[rows, first])
    return np.where(any_diff, s, 0)


def _minimal_periods(words):
    n = words.shape[1]
    out = np.full(len(words), n, dtype=np.int64)
    for d in sorted(d for d in range(1, n) if n % d == 0)[::-1]:
        same = np.all(np.roll(words, -d, axis=1) == words, axis=1)
        out[same] = d
    return out


def _shadowing_report(rows):
    worst = {}
    violations = []
    for name, i, d, bound in rows:
        if bound == 0.0:
            slack = 0.0 if d == 0.0 else math.inf
        else:
            slack = float(d / bound)
        if slack > 1.0 + 1e-12:
            violations.append({"inequality": name, "index": i, "distance": float(d),
                               "bound": float(bound)})
        if slack > worst.get(name, -1.0):
            worst[name] = slack
    return {
        "pass": not violations,
        "max_slack": max(worst.values()),
        "slack_by_inequality": worst,
        "violations": violations,
        "count": len(rows) - 1,
    }


# --------------------------------------------------------------------------
# toral automorphisms


@dataclass(frozen=True)
class RationalPoint:
    """Exact torus point q / D (used for periodic orbits)."""

    q: tuple
    D: int

    @property
    def coords(self):
        return np.array([qi / self.D for qi in self.q])

    def __array__(self, dtype=None, copy=None):
        return self.coords if dtype is None else self.coords.astype(dtype)


class ToralSystem:
    """Hyperbolic automorphism x -> L x mod 1 of the d-torus."""

    kind = "toral"

    def __init__(self, matrix):
        L = np.asarray(matrix)
        if L.ndim != 2 or L.shape[0] != L.shape[1]:
            raise PreconditionError("toral matrix must be square")
        if not np.all(L == np.round(L)):
            raise PreconditionError("toral matrix must be integer")
        self.L_int = [[int(v) for v in row] for row in np.round(L).astype(np.int64)]
        self.L = np.array(self.L_int, dtype=np.int64)
        self.d = self.L.shape[0]
        det = _int_det(self.L_int)
        if abs(det) != 1:
            raise PreconditionError(f"|det L| must be 1, got {det}")
        self.Linv_int = _int_inverse_unimodular(self.L_int, det)
        self.Lf = self.L.astype(float)
        self.Linv = np.array(self.Linv_int, dtype=float)
        mu, V = np.linalg.eig(self.Lf)
        mods = np.abs(mu)
        if np.any(np.abs(np.log(mods)) < 1e-9):
            raise PreconditionError("L has an eigenvalue on the unit circle")
        V = V / np.linalg.norm(V, axis=0)
        kappa = float(np.linalg.cond(V))
        if not math.isfinite(kappa) or kappa > 1e8:
            raise PreconditionError("L is not diagonalizable")
        self.eigenvalues = mu
        self.eigenvectors = V
        self.unstable = mods > 1
        self.lam = float(np.min(np.abs(np.log(mods))))
        self.mu_max = float(np.max(mods))
        c = 2.0 * kappa / (1.0 - math.exp(-self.lam))
        self.closing = ClosingSpec(c, self.lam, min(0.5, 1.0 / (2.0 * c)))
        self.kappa = kappa
        self.diameter = math.sqrt(self.d) / 2.0
        Vi = np.linalg.inv(V)
        self.P_unstable = (V[:, self.unstable] @ Vi[self.unstable]).real

    def spec(self):
        return {"type": "toral", "matrix": self.L_int}

    def __repr__(self):
        return f"ToralSystem(L={self.L_int})"

    # iteration and metric

    def _power(self, k):
        M = self.L_int if k >= 0 else self.Linv_int
        return _int_matpow(M, abs(k))

    def step(self, x, k=1):
        if isinstance(x, RationalPoint):
            P = self._power(k)
            q = tuple(sum(P[i][j] * x.q[j] for j in range(self.d)) % x.D
                      for i in range(self.d))
            return RationalPoint(q, x.D)
        if _is_mp(x):
            P = self._power(k)
            return _mp_mod1([mpmath.fsum(P[i][j] * x[j] for j in range(self.d))
                             for i in range(self.d)])
        P = np.array(self._power(k), dtype=float)
        return np.mod(P @ np.asarray(x, dtype=float), 1.0)

    def orbit(self, x, n, start=0):
        """(n, d) float array of f^(start+i) x; exact when x is rational or mp."""
        if start:
            x = self.step(x, start)
        if isinstance(x, RationalPoint):
            q = np.array(x.q, dtype=np.int64)
            out = np.empty((n, self.d))
            for i in range(n):
                out[i] = q / x.D
                q = (self.L @ q) % x.D
            return out
        if _is_mp(x):
            out = np.empty((n, self.d))
            cur = list(x)
            for i in range(n):
                out[i] = [float(v) for v in cur]
                cur = _mp_mod1([mpmath.fsum(self.L_int[r][j] * cur[j] for j in range(self.d))
                                for r in range(self.d)])
            return out
        return kernels.toral_orbit(self.Lf, np.mod(np.asarray(x, dtype=float), 1.0), n)

    def distance(self, a, b, upper=False):
        if _is_mp(a) or _is_mp(b):
            diff = [mpmath.mpf(ai) - mpmath.mpf(bi) for ai, bi in zip(_mp_coords(a), _mp_coords(b))]
            diff = [v - mpmath.nint(v) for v in diff]
            return mpmath.sqrt(mpmath.fsum(v * v for v in diff))
        diff = np.asarray(a, dtype=float) - np.asarray(b, dtype=float)
        diff -= np.round(diff)
        return float(np.sqrt(np.sum(diff * diff)))

    # periodic points

    def count_periodic(self, n):
        M = _int_matpow(self.L_int, n)
        M = [[M[i][j] - (i == j) for j in range(self.d)] for i in range(self.d)]
        return abs(_int_det(M))

    def enumerate_periodic(self, n, cap=DEFAULT_ENUM_CAP):
        """All x with L^n x = x mod 1, exact, as (RationalPoint, minimal period)."""
        if n < 1:
            raise PreconditionError("period must be positive")
        D = self.count_periodic(n)
        if D > cap:
            raise EnumerationLimitError(f"{D} points of period {n} exceed cap {cap}",
                                        estimate=D)
        Q = self._fixed_group(n)
        periods = self._exact_periods(Q, D, n)
        return [(RationalPoint(tuple(int(v) for v in q), D), int(t)) for q, t in zip(Q, periods)]

    def _fixed_group(self, n):
        """Integer vectors q (mod D) with (L^n - I) q / D integral: the group M^-1 Z^d / Z^d."""
        M = _int_matpow(self.L_int, n)
        M = [[M[i][j] - (i == j) for j in range(self.d)] for i in range(self.d)]
        det = _int_det(M)
        D = abs(det)
        adj = _int_adjugate(M)
        sign = 1 if det > 0 else -1
        gens = [np.array([(sign * adj[i][j]) % D for i in range(self.d)], dtype=np.int64)
                for j in range(self.d)]
        H = np.zeros((1, self.d), dtype=np.int64)
        weights = np.array([D ** (self.d - 1 - i) for i in range(self.d)], dtype=np.int64)
        for g in gens:
            keys = np.sort(H @ weights)
            mult = [np.zeros(self.d, dtype=np.int64)]
            cur = g % D
            while True:
                k = int(cur @ weights)
                pos = np.searchsorted(keys, k)
                if pos < len(keys) and keys[pos] == k:
                    break
                mult.append(cur.copy())
                cur = (cur + g) % D
            mult = np.array(mult)
            H = ((H[:, None, :] + mult[None, :, :]) % D).reshape(-1, self.d)
        order = np.argsort(H @ weights)
        H = H[order]
        if len(H) != D:
            raise AssertionError("fixed-point group has the wrong order")
        return H

    def _exact_periods(self, Q, D, n):
        periods = np.zeros(len(Q), dtype=np.int64)
        cur = Q.copy()
        for t in range(1, n + 1):
            cur = (cur @ self.L.T) % D
            back = np.all(cur == Q, axis=1) & (periods == 0)
            periods[back] = t
        return periods

    def periodic_orbits(self, max_period, cap=DEFAULT_ENUM_CAP):
        out = []
        total = 0
        for n in range(1, max_period + 1):
            D = self.count_periodic(n)
            total += D
            if total > cap:
                raise EnumerationLimitError(
                    f"{total} periodic points up to period {n} exceed cap {cap}", estimate=total)
            Q = self._fixed_group(n)
            periods = self._exact_periods(Q, D, n)
            Q = Q[periods == n]
            if not len(Q):
                continue
            weights = np.array([D ** (self.d - 1 - i) for i in range(self.d)], dtype=object)
            keys = [int(k) for k in (Q.astype(object) @ weights)]
            best = list(keys)
            cur = Q.copy()
            for _ in range(n - 1):
                cur = (cur @ self.L.T) % D
                ck = [int(k) for k in (cur.astype(object) @ weights)]
                best = [min(a, b) for a, b in zip(best, ck)]
            reps = [q for q, k, b in zip(Q, keys, best) if k == b]
            out.extend((RationalPoint(tuple(int(v) for v in q), D), n) for q in reps)
        return out

    def is_periodic(self, x, n):
        if isinstance(x, RationalPoint):
            return self.step(x, n) == x
        return self.distance(self.step(x, n), x) < 1e-9

    # closing lemma

    def _exact(self, x):
        if isinstance(x, RationalPoint):
            return [Fraction(qi, x.D) for qi in x.q]
        return [Fraction(float(v)) % 1 for v in np.asarray(x, dtype=float)]

    def close_pseudo_return(self, x, n):
        if n < 1:
            raise PreconditionError("n must be positive")
        xs = self._exact(x)
        Ln = _int_matpow(self.L_int, n)
        img = [sum(Ln[i][j] * xs[j] for j in range(self.d)) for i in range(self.d)]
        k = [round(img[i] - xs[i]) for i in range(self.d)]
        disp = [img[i] - xs[i] - k[i] for i in range(self.d)]
        d = math.sqrt(float(sum(v * v for v in disp)))
        if d >= self.closing.delta0:
            raise PreconditionError(
                f"dist(x, f^n x) = {d} is not below delta0 = {self.closing.delta0}")
        if d == 0.0:
            return ShadowingTriple(x, x, x, n, 0.0)
        M = [[Ln[i][j] - (i == j) for j in range(self.d)] for i in range(self.d)]
        det = _int_det(M)
        adj = _int_adjugate(M)
        # lifted periodic point: M p~ = k
        pt = [Fraction(sum(adj[i][j] * k[j] for j in range(self.d)), det) for i in range(self.d)]
        e = [pt[i] - xs[i] for i in range(self.d)]
        D = abs(det)
        q = tuple(int((pt[i] * D) % D) for i in range(self.d))
        p = RationalPoint(q, D)
        dps = 30 + int(2 * n * math.log10(max(self.mu_max, 2.0)))
        with mpmath.workdps(dps):
            Pu = self._mp_unstable_projection()
            em = [mpmath.mpf(v.numerator) / v.denominator for v in e]
            xm = [mpmath.mpf(v.numerator) / v.denominator for v in xs]
            y = _mp_mod1([xm[i] + mpmath.fsum(Pu[i, j] * em[j] for j in range(self.d))
                          for i in range(self.d)])
        cert = {"q": q, "D": D, "k": k, "dps": dps}
        return ShadowingTriple(x, p, y, n, self.closing.c * d, certificate=cert)

    def _mp_unstable_projection(self):
        A = mpmath.matrix(self.L_int)
        E, ER = mpmath.eig(A)
        EL = mpmath.inverse(ER)
        d = self.d
        P = mpmath.matrix(d, d)
        for t in range(d):
            if abs(E[t]) > 1:
                for i in range(d):
                    for j in range(d):
                        P[i, j] += ER[i, t] * EL[t, j]
        return mpmath.matrix([[mpmath.re(P[i, j]) for j in range(d)] for i in range(d)])

    def verify_shadowing(self, triple, closing=None):
        cs = closing or self.closing
        n = triple.n
        dps = triple.certificate.get("dps", 30 + int(2 * n * math.log10(max(self.mu_max, 2.0))))
        rows = []
        with mpmath.workdps(dps):
            fx = [mpmath.mpf(v.numerator) / v.denominator for v in self._exact(triple.x)]
            fp = [mpmath.mpf(v.numerator) / v.denominator for v in self._exact(triple.p)]
            fy = _mp_coords(triple.y)
            for i in range(n + 1):
                delta = triple.delta
                rows.append(("x-p", i, self.distance(fx, fp),
                             delta * math.exp(-cs.lam * min(i, n - i))))
                rows.append(("p-y", i, self.distance(fp, fy), delta * math.exp(-cs.lam * i)))
                rows.append(("y-x", i, self.distance(fy, fx), delta * math.exp(-cs.lam * (n - i))))
                if i < n:
                    fx, fp, fy = (self.step(v, 1) for v in (fx, fp, fy))
            rows = [(a, i, float(d), b) for a, i, d, b in rows]
        if isinstance(triple.p, RationalPoint):
            back = 0.0 if self.step(triple.p, n) == triple.p else 1.0
        else:
            back = self.distance(self.step(triple.p, n), triple.p)
        rows.append(("period", n, back, 0.0))
        return _shadowing_report(rows)

    # nets and sampling

    def dense_net(self, delta, max_length=2_000_000, seed=0):
        if delta <= 0:
            raise PreconditionError("delta must be positive")
        rng = np.random.default_rng(seed)
        z = rng.random(self.d)
        if delta >= self.diameter:
            pts = z[None, :]
            return DenseOrbitNet(self, z, 1, self.diameter, pts, tree=cKDTree(pts, boxsize=1.0))
        h = delta / 2.0
        g = max(2, math.ceil(1.0 / h))
        axes = [(np.arange(g) + 0.5) / g for _ in range(self.d)]
        grid = np.stack(np.meshgrid(*axes, indexing="ij"), axis=-1).reshape(-1, self.d)
        cell = math.sqrt(self.d) / (2.0 * g)
        L = 4 * g ** self.d
        while True:
            L = min(L, max_length)
            pts = kernels.toral_orbit(self.Lf, z, L)
            tree = cKDTree(pts, boxsize=1.0)
            gap, _ = tree.query(grid)
            mesh = float(gap.max()) + cell
            if mesh <= delta:
                return DenseOrbitNet(self, z, L, mesh, pts, tree=tree)
            if L >= max_length:
                raise CoverageError(f"orbit of length {L} only reaches mesh {mesh:.4g}",
                                    achieved_mesh=mesh)
            L *= 2

    def sample_orbit(self, measure="lebesgue", length=1, seed=0, window=None):
        if measure != "lebesgue":
            raise PreconditionError(f"unknown measure {measure!r} for a toral system")
        rng = np.random.default_rng(seed)
        return self.orbit(rng.random(self.d), length)

    def random_point(self, rng, window=None):
        return rng.random(self.d)

    def perturb(self, x, eps, rng, window=None):
        """A point at distance exactly ``eps`` (< 1/2) in a random direction."""
        u = rng.normal(size=self.d)
        return np.mod(np.asarray(x, dtype=float) + eps * u / np.linalg.norm(u), 1.0)


# --------------------------------------------------------------------------
# exact integer helpers


def _int_det(M):
    n = len(M)
    if n == 1:
        return M[0][0]
    if n == 2:
        return M[0][0] * M[1][1] - M[0][1] * M[1][0]
    A = [[Fraction(v) for v in row] for row in M]
    det = Fraction(1)
    for c in range(n):
        piv = next((r for r in range(c, n) if A[r][c] != 0), None)
        if piv is None:
            return 0
        if piv != c:
            A[c], A[piv] = A[piv], A[c]
            det = -det
        det *= A[c][c]
        for r in range(c + 1, n):
            f = A[r][c] / A[c][c]
            for j in range(c, n):
                A[r][j] -= f * A[c][j]
    return int(det)


def _int_adjugate(M):
    n = len(M)
    if n == 1:
        return [[1]]
    adj = [[0] * n for _ in range(n)]
    for i in range(n):
        for j in range(n):
            minor = [[M[r][c] for c in range(n) if c != j] for r in range(n) if r != i]
            adj[j][i] = (-1) ** (i + j) * _int_det(minor)
    return adj


def _int_inverse_unimodular(M, det):
    return [[v * det for v in row] for row in _int_adjugate(M)]


def _int_matmul(A, B):
    n, m, p = len(A), len(B), len(B[0])
    return [[sum(A[i][k] * B[k][j] for k in range(m)) for j in range(p)] for i in range(n)]


def _int_matpow(M, k):
    n = len(M)
    R = [[int(i == j) for j in range(n)] for i in range(n)]
    P = [list(row) for row in M]
    while k:
        if k & 1:
            R = _int_matmul(R, P)
        P = _int_matmul(P, P)
        k >>= 1
    return R


def _is_mp(x):
    return isinstance(x, (list, tuple)) and len(x) and isinstance(x[0], mpmath.mpf) or (
        isinstance(x, np.ndarray) and x.dtype == object)


def _mp_coords(x):
    if isinstance(x, RationalPoint):
        return [mpmath.mpf(q) / x.D for q in x.q]
    return [v if isinstance(v, mpmath.mpf) else mpmath.mpf(float(v)) for v in x]


def _mp_mod1(v):
    return [vi - mpmath.floor(vi) for vi in v]


# --------------------------------------------------------------------------
# functional interface


def system_from_spec(spec):
    kind = spec.get("type")
    if kind == "sft":
        T = spec["transitions"]
        if "alphabet" in spec and spec["alphabet"] != len(T):
            raise PreconditionError("alphabet size does not match transition matrix")
        return SymbolicSystem(T, base=spec.get("base", 2.0))
    if kind == "toral":
        return ToralSystem(spec["matrix"])
    raise PreconditionError(f"unknown system type {kind!r}")


def full_shift(k=2):
    return SymbolicSystem(np.ones((k, k), dtype=np.int64))


def golden_mean_shift():
    return SymbolicSystem([[1, 1], [1, 0]])


def cat_map():
    return ToralSystem([[2, 1], [1, 1]])


def step(system, x, k):
    return system.step(x, k)


def distance(system, a, b):
    return system.distance(a, b)


def enumerate_periodic(system, n, cap=DEFAULT_ENUM_CAP):
    return system.enumerate_periodic(n, cap=cap)


def close_pseudo_return(system, x, n):
    return system.close_pseudo_return(x, n)


def verify_shadowing(system, triple, closing=None):
    return system.verify_shadowing(triple, closing=closing)


def dense_net(system, delta, max_length=2_000_000):
    return system.dense_net(delta, max_length)


def sample_orbit(system, measure, length, seed, **kw):
    return system.sample_orbit(measure, length, seed, **kw)


def agreement_radii(seq, n):
    """For each i, the smallest |j| with seq[i+j] != seq[i+n+j].

    Returns ``(r, exact)`` over i in [0, len(seq) - n); where a run of
    agreement reaches the end of ``seq`` the radius is only a lower bound.
    """
    seq = np.asarray(seq)
    eq = seq[:-n] == seq[n:]
    L = len(eq)
    pos = np.arange(L)
    nxt = np.minimum.accumulate(np.where(eq, L, pos)[::-1])[::-1]
    prv = np.maximum.accumulate(np.where(eq, -1, pos))
    fwd = nxt - pos
    back = np.empty(L, dtype=np.int64)
    back[0] = 0
    back[1:] = pos[:-1] - prv[:-1] + 1
    r = np.minimum(fwd, back)
    left_known = np.zeros(L, dtype=bool)
    left_known[1:] = prv[:-1] >= 0
    exact = np.where(fwd <= back, nxt < L, left_known) | ~eq
    return r, exact


def find_pseudo_returns(system, orbit_points, n_values, delta0=None, limit=None):
    """Scan orbit pairs (i, i + n) for returns closer than ``delta0``.

    Returns a list of (i, n, distance) sorted by distance, then larger n.
    """
    delta0 = system.closing.delta0 if delta0 is None else delta0
    hits = []
    if isinstance(system, ToralSystem):
        P = np.asarray(orbit_points)
        for n in n_values:
            if n >= len(P):
                continue
            diff = P[n:] - P[:-n]
            diff -= np.round(diff)
            dist = np.sqrt(np.sum(diff * diff, axis=1))
            for i in np.nonzero(dist < delta0)[0]:
                hits.append((int(i), int(n), float(dist[i])))
    elif _common_word(orbit_points):
        seq = orbit_points[0].word
        o = orbit_points[0].origin
        for n in n_values:
            if n >= len(orbit_points) or o + n >= len(seq):
                continue
            r, exact = agreement_radii(seq, n)
            r, exact = r[o: o + len(orbit_points) - n], exact[o: o + len(orbit_points) - n]
            dist = system.base ** (-r.astype(float))
            for i in np.nonzero(exact & (dist < delta0))[0]:
                hits.append((int(i), int(n), float(dist[i])))
    else:
        for n in n_values:
            for i in range(len(orbit_points) - n):
                try:
                    dd = system.distance(orbit_points[i], orbit_points[i + n])
                except WindowExhaustedError:
                    continue
                if dd < delta0:
                    hits.append((i, int(n), dd))
    hits.sort(key=lambda h: (h[2], -h[1], h[0]))
    return hits[:limit] if limit else hits


def _common_word(points):
    """True when all points are consecutive shifts of one finite-window sequence."""
    if not points or not isinstance(points[0], SymbolicPoint):
        return False
    x0 = points[0]
    if x0.left is not None or x0.right is not None:
        return False
    return all(p.word is x0.word and p.origin == x0.origin + i for i, p in enumerate(points))


def sample_pseudo_returns(system, count, seed=0, max_n=16, length=None):
    """``count`` pseudo-returns (x, n) drawn at random from the returns found
    along a typical orbit, ordered by orbit position."""
    length = length or max(4096, 40 * count)
    n_values = range(1, max_n + 1)
    for _ in range(8):
        orbit = system.sample_orbit(length=length, seed=seed)
        hits = find_pseudo_returns(system, orbit, n_values)
        if len(hits) >= count:
            break
        length *= 4
    else:
        raise CoverageError(f"only {len(hits)} pseudo-returns on an orbit of length {length}")
    rng = np.random.default_rng(seed)
    pick = np.sort(rng.choice(len(hits), size=count, replace=False))
    chosen = sorted((hits[k] for k in pick), key=lambda h: (h[0], h[1]))
    return [(orbit[i], n) for i, n, _ in chosen]
