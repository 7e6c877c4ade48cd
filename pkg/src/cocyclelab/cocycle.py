"""Cocycle generators, scaled products and ground-truth families."""
import math
from dataclasses import dataclass

import numpy as np
from scipy.linalg import expm
from scipy.stats import linregress

from . import kernels
from .base_systems import SymbolicSystem, ToralSystem
from .errors import PreconditionError, SingularMatrixError
from .matrix_kit import CONDITION_CAP, ScaledMatrix, as_matrix, operator_norm

CHUNK = 8192
SERIES_TOL = 1e-12

FAMILIES = ("identity", "constant", "locally-constant", "random-holder", "coboundary",
            "conjugated-orthogonal", "conjugated-unipotent", "derivative")


# --------------------------------------------------------------------------
# matrix-valued fields on the base
#
# A field maps a batch of "orbit data" to a stack of matrices.  Symbolic
# data are (n, 2R + 1) integer windows centred on each point, toral data are
# (n, d) coordinate rows.  ``radius`` is the symbolic half-width a field reads.


class SymbolicSeries:
    """S(x) = B + sum_{|j| <= J} base^(-alpha |j|) phi_j(x_j) H_j."""

    def __init__(self, k, m, alpha, rng, scale=1.0, base=2.0, drift=None, tol=SERIES_TOL,
                 self_similar=False):
        self.k, self.m, self.alpha = k, m, float(alpha)
        H0 = rng.normal(size=(m, m)) / math.sqrt(m)
        norm_h = float(np.linalg.norm(H0, 2)) * scale
        q = base ** (-self.alpha)
        # tail past J is at most 2 * q^(J+1) * norm_h / (1 - q)
        J = 0
        while 2.0 * q ** (J + 1) * max(norm_h, 1e-300) / (1.0 - q) >= tol:
            J += 1
        self.radius = J
        j = np.arange(-J, J + 1)
        self.weights = q ** np.abs(j)
        # every coordinate varies over the full range [-1, 1], so the
        # modulus of continuity is comparable to base^(-alpha r) at every r
        profile = np.linspace(-1.0, 1.0, k) if k > 1 else np.zeros(1)
        if self_similar:
            # one profile and one direction per side: the same modulus
            # constant at every scale, still non-commuting across sides
            self.phi = np.tile(rng.permutation(profile), (2 * J + 1, 1))
            side = np.sign(j) + 1
            H = (rng.normal(size=(3, m, m)) / math.sqrt(m))[side]
        else:
            self.phi = np.stack([rng.permutation(profile) for _ in range(2 * J + 1)])
            H = rng.normal(size=(2 * J + 1, m, m)) / math.sqrt(m)
        H *= scale * np.linalg.norm(H0, 2) / np.linalg.norm(H, 2, axis=(1, 2))[:, None, None]
        self.H = H
        self.drift = np.zeros((m, m)) if drift is None else as_matrix(drift)

    def __call__(self, data):
        c = data.shape[1] // 2
        W = data[:, c - self.radius: c + self.radius + 1]
        coef = np.take_along_axis(self.phi.T, W, axis=0) * self.weights
        out = coef @ self.H.reshape(len(self.weights), -1)
        return out.reshape(-1, self.m, self.m) + self.drift


class TrigSeries:
    """Smooth field S(x) = B + sum_q (a_q cos 2 pi <k_q, x> + b_q sin 2 pi <k_q, x>) H_q."""

    radius = 0

    def __init__(self, d, m, rng, scale=1.0, modes=3, drift=None):
        self.m = m
        self.K = rng.integers(-2, 3, size=(modes, d))
        self.K[np.all(self.K == 0, axis=1), 0] = 1
        self.ab = rng.uniform(-1.0, 1.0, size=(modes, 2)) / modes
        H = rng.normal(size=(modes, m, m)) / math.sqrt(m)
        self.H = H * scale
        self.drift = np.zeros((m, m)) if drift is None else as_matrix(drift)
        self.alpha = 1.0

    def __call__(self, data):
        ph = 2.0 * np.pi * (data @ self.K.T)
        coef = self.ab[:, 0] * np.cos(ph) + self.ab[:, 1] * np.sin(ph)
        out = coef @ self.H.reshape(len(self.K), -1)
        return out.reshape(-1, self.m, self.m) + self.drift


class FunctionSeries:
    """Wrap a user callable ``data -> (n, m, m)`` as a series."""

    def __init__(self, fn, m, radius=0, alpha=1.0):
        self.fn, self.m, self.radius, self.alpha = fn, m, radius, alpha

    def __call__(self, data):
        return np.asarray(self.fn(data), dtype=np.float64).reshape(-1, self.m, self.m)


class ExpField:
    """x -> expm(S(x)); with ``skew`` the exponent is S - S^T (orthogonal values)."""

    def __init__(self, series, skew=False):
        self.series, self.skew = series, skew
        self.m, self.radius = series.m, series.radius

    def exponent(self, data):
        S = self.series(data)
        return S - np.swapaxes(S, 1, 2) if self.skew else S

    def __call__(self, data):
        return expm(self.exponent(data))

    def inverse(self, data):
        return expm(-self.exponent(data))


class UnipotentField:
    """x -> I + strictly upper part of (offset + S(x))."""

    def __init__(self, series, offset=1.0):
        self.series, self.m, self.radius = series, series.m, series.radius
        self.offset = offset

    def __call__(self, data):
        N = np.triu(self.series(data) + self.offset, 1)
        return N + np.eye(self.m)

    def inverse(self, data):
        return np.linalg.inv(self(data))


class TableField:
    """Locally constant field: the matrix depends on the word x_{-r} ... x_r."""

    def __init__(self, k, radius, table):
        self.k, self.radius = k, radius
        self.table = np.asarray(table, dtype=np.float64)
        self.m = self.table.shape[-1]
        self.powers = k ** np.arange(2 * radius, -1, -1)

    def __call__(self, data):
        c = data.shape[1] // 2
        W = data[:, c - self.radius: c + self.radius + 1]
        return self.table[W @ self.powers]

    def inverse(self, data):
        return np.linalg.inv(self(data))


class ConstantField:
    radius = 0

    def __init__(self, M):
        self.M = as_matrix(M)
        self.m = self.M.shape[0]
        self.Minv = np.linalg.inv(self.M)

    def __call__(self, data):
        return np.broadcast_to(self.M, (len(data), self.m, self.m)).copy()

    def inverse(self, data):
        return np.broadcast_to(self.Minv, (len(data), self.m, self.m)).copy()


def _inverse(field, data):
    inv = getattr(field, "inverse", None)
    return inv(data) if inv is not None else np.linalg.inv(field(data))


# --------------------------------------------------------------------------
# generators


class CocycleGenerator:
    """A Hoelder map x -> A(x) in GL(m, R) over a base system.

    ``core`` is the field evaluated at x.  With ``conj`` set the generator is
    A(x) = conj(fx) core(x) conj(x)^-1, which is how coboundaries and the
    conjugated families are realised.
    """

    def __init__(self, system, core, conj=None, alpha=1.0, kind="custom", params=None,
                 seed=None, constant=None, cap=CONDITION_CAP):
        self.system = system
        self.core = core
        self.conj = conj
        self.m = core.m if core is not None else conj.m
        self.alpha = float(alpha)
        self.kind = kind
        self.params = dict(params or {})
        self.seed = seed
        self.constant = None if constant is None else as_matrix(constant)
        self.cap = cap
        r = max(getattr(core, "radius", 0), getattr(conj, "radius", 0) if conj else 0)
        # conj(fx) reads one coordinate further
        self.window = r + (1 if conj is not None else 0)
        self._radius = r
        self.c_true = conj

    @property
    def symbolic(self):
        return isinstance(self.system, SymbolicSystem)

    def spec(self):
        return {"kind": self.kind, "m": self.m, "alpha": self.alpha, "seed": self.seed,
                "params": self.params}

    def __repr__(self):
        return f"CocycleGenerator(kind={self.kind!r}, m={self.m}, alpha={self.alpha})"

    # orbit data

    def orbit_data(self, x, n, start=0):
        """Base data for f^(start+i) x, i < n, as consumed by the fields."""
        if self.symbolic:
            return self.system.orbit_coords(x, n, self._radius, start)
        return self.system.orbit(x, n, start)

    def _eval_data(self, data, n):
        if self.constant is not None:
            return np.broadcast_to(self.constant, (n, self.m, self.m)).copy()
        return self.evaluate_pairs(data[:n], data[1: n + 1] if self.conj is not None else None)

    def evaluate_pairs(self, data, fdata=None):
        """A at points with data ``data`` whose images have data ``fdata``."""
        n = len(data)
        if self.constant is not None:
            return np.broadcast_to(self.constant, (n, self.m, self.m)).copy()
        if self.conj is None:
            A = self.core(data)
        else:
            C = self.conj(fdata)
            Ci = _inverse(self.conj, data)
            A = C @ Ci if self.core is None else C @ self.core(data) @ Ci
        self._check(A)
        return A

    def _check(self, A):
        if not np.all(np.isfinite(A)):
            raise SingularMatrixError("non-finite generator value")
        fro = np.linalg.norm(A, axis=(1, 2))
        det = np.abs(np.linalg.det(A))
        with np.errstate(divide="ignore", over="ignore"):
            cheap = fro ** self.m / det
        bad = ~(cheap <= self.cap)
        if bad.any():
            cond = np.linalg.cond(A[bad])
            if np.any(~(cond <= self.cap)):
                raise SingularMatrixError(
                    f"generator condition number {float(np.max(cond)):.3g} exceeds cap {self.cap:.3g}")

    def evaluate_orbit(self, x, n, start=0):
        """Stack (n, m, m) of A(f^(start+i) x)."""
        if n == 0:
            return np.empty((0, self.m, self.m))
        if self.constant is not None:
            return self._eval_data(None, n)
        look = 1 if self.conj is not None else 0
        data = self.orbit_data(x, n + look, start)
        out = np.empty((n, self.m, self.m))
        for s in range(0, n, CHUNK):
            c = min(CHUNK, n - s)
            out[s: s + c] = self._eval_data(data[s: s + c + look], c)
        return out

    def evaluate(self, x):
        return self.evaluate_orbit(x, 1)[0]

    def evaluate_many(self, points):
        """Evaluate at unrelated points (list of symbolic points or (N, d) array)."""
        if self.symbolic:
            return np.stack([self.evaluate(p) for p in points]) if len(points) else \
                np.empty((0, self.m, self.m))
        P = np.asarray(points, dtype=float).reshape(-1, self.system.d)
        if self.constant is not None:
            return self._eval_data(None, len(P))
        if self.conj is None:
            return self._eval_data(P, len(P))
        return self.evaluate_pairs(P, np.mod(P @ self.system.Lf.T, 1.0))

    def sample_orbit(self, length, seed, measure=None):
        """Typical orbit with enough symbolic window for this generator."""
        if self.symbolic:
            return self.system.sample_orbit(measure or "max-entropy", length, seed,
                                            window=self.window + 2)
        return self.system.sample_orbit(measure or "lebesgue", length, seed)

    def base_point(self, seed, length=1, past=None):
        """A typical point whose window supports ``length`` forward and ``past``
        backward steps (``past`` defaults to ``length``)."""
        past = length if past is None else past
        if self.symbolic:
            pts = self.system.sample_orbit("max-entropy", past + 1, seed,
                                           window=self.window + 2 + max(length, 1))
            return pts[past]
        return np.random.default_rng(seed).random(self.system.d)

    def inverse_generator_over_inverse(self):
        """The generator x -> A(f^-1 x)^-1 of the inverse cocycle over f^-1."""
        return InverseGenerator(self)


class InverseGenerator:
    """A(f^-1 x)^-1 over f^-1; products are computed with the forward machinery."""

    def __init__(self, gen):
        self.gen = gen
        self.m = gen.m
        self.system = gen.system

    def evaluate_orbit(self, x, n, start=0):
        # (f^-1)^i x = f^-i x ; generator value A(f^(-i-1) x)^-1
        A = self.gen.evaluate_orbit(x, n, start=-(start + n))
        return np.linalg.inv(A[::-1])


@dataclass
class CocycleValue:
    value: ScaledMatrix
    x: object
    n: int

    def log_norm(self):
        return self.value.log_norm()

    def matrix(self):
        return self.value.value()


def scaled_products(gen, x, n, start=0):
    """All forward products A(x, j), j = 0..n, as (units, exps) with power-of-two scales."""
    A = gen.evaluate_orbit(x, n, start)
    return kernels.cumprod_scaled(A)


def product(gen, x, n):
    """A(x, n) for any integer n, as a CocycleValue."""
    n = int(n)
    if n == 0:
        return CocycleValue(ScaledMatrix.identity(gen.m), x, 0)
    if n > 0:
        U, E = kernels.cumprod_scaled(gen.evaluate_orbit(x, n))
        return CocycleValue(ScaledMatrix(U[-1], E[-1]), x, n)
    # A(x, -k) = A(f^-k x, k)^-1 = A(f^-k x)^-1 ... A(f^-1 x)^-1
    k = -n
    A = gen.evaluate_orbit(x, k, start=-k)
    U, E = kernels.cumprod_scaled(np.linalg.inv(A), right=True)
    return CocycleValue(ScaledMatrix(U[-1], E[-1]), x, n)


def verify_cocycle_identity(gen, x, n, k):
    """Residual of A(x, n + k) against A(f^k x, n) A(x, k), relative to
    ||A(f^k x, n)|| ||A(x, k)||, the scale floating-point products control.

    Returns a dict with that ``residual`` and the ``plain_relative`` residual
    (relative to ||A(x, n + k)||), which can be larger by the cancellation
    factor ||A(f^k x, n)|| ||A(x, k)|| / ||A(x, n + k)||.
    """
    lhs = product(gen, x, n + k).value
    a = product(gen, gen.system.step(x, k), n).value
    b = product(gen, x, k).value
    plain = lhs.relative_distance(a @ b)
    scale = operator_norm(lhs.unit) / (operator_norm(a.unit) * operator_norm(b.unit))
    return {"residual": math.ldexp(plain * scale, lhs.exp - a.exp - b.exp),
            "plain_relative": plain}


def cocycle_identity_sweep(gen, x, max_total):
    """Worst residuals over all n, k >= 1 with n + k <= max_total (Frobenius norms);
    same two normalizations as ``verify_cocycle_identity``."""
    A = gen.evaluate_orbit(x, max_total)
    U, E = kernels.cumprod_scaled(A)
    plain, normwise = kernels.identity_residual(A, U, E)
    return {"residual": normwise, "plain_relative": plain}


# --------------------------------------------------------------------------
# families


def _series(system, m, alpha, rng, scale, drift=None, self_similar=False):
    if isinstance(system, SymbolicSystem):
        return SymbolicSeries(system.k, m, alpha, rng, scale=scale, base=system.base, drift=drift,
                              self_similar=self_similar)
    if alpha != 1.0:
        raise PreconditionError("toral families are smooth; use alpha = 1")
    return TrigSeries(system.d, m, rng, scale=scale, drift=drift)


def make_coboundary(system, c_field, alpha=1.0, kind="coboundary", params=None, seed=None,
                    core=None):
    """A(x) = C(fx) C(x)^-1 (or C(fx) core(x) C(x)^-1); keeps C for ground truth.

    ``c_field`` may be a field (callable on orbit data with ``m`` and
    ``radius``) or a series, in which case C = expm(series).
    """
    if isinstance(c_field, (SymbolicSeries, TrigSeries, FunctionSeries)):
        c_field = ExpField(c_field)
    return CocycleGenerator(system, core, conj=c_field, alpha=alpha, kind=kind,
                            params=params, seed=seed)


def make_family(system, kind, m=2, alpha=1.0, params=None, seed=0):
    """Build a generator of a named family; see ``FAMILIES``."""
    params = dict(params or {})
    rng = np.random.default_rng(seed)
    scale = float(params.get("scale", 0.5))
    sym = isinstance(system, SymbolicSystem)
    if kind not in FAMILIES:
        raise PreconditionError(f"unknown family {kind!r}")
    if kind == "identity":
        return CocycleGenerator(system, ConstantField(np.eye(m)), alpha=alpha, kind=kind,
                                params=params, seed=seed, constant=np.eye(m))
    if kind == "constant":
        M = as_matrix(params["matrix"])
        return CocycleGenerator(system, ConstantField(M), alpha=alpha, kind=kind,
                                params=params, seed=seed, constant=M)
    if kind == "derivative":
        if not isinstance(system, ToralSystem):
            raise PreconditionError("the derivative family needs a toral system")
        L = system.Lf
        return CocycleGenerator(system, ConstantField(L), alpha=1.0, kind=kind,
                                params=params, seed=seed, constant=L)
    if kind == "locally-constant":
        if not sym:
            raise PreconditionError("locally-constant family needs a symbolic system")
        r = int(params.get("radius", 0))
        nwords = system.k ** (2 * r + 1)
        if "table" in params:
            table = np.asarray(params["table"], dtype=float)
            if table.shape[0] != nwords:
                raise PreconditionError(f"table needs {nwords} matrices")
            m = table.shape[-1]
        else:
            table = expm(scale * rng.normal(size=(nwords, m, m)) / math.sqrt(m))
        return CocycleGenerator(system, TableField(system.k, r, table), alpha=alpha,
                                kind=kind, params=params, seed=seed)
    drift = params.get("drift")
    if kind == "random-holder":
        return CocycleGenerator(system, ExpField(_series(system, m, alpha, rng, scale, drift)),
                                alpha=alpha, kind=kind, params=params, seed=seed)
    profile = params.get("conj_profile", "self-similar")
    if profile not in ("self-similar", "random"):
        raise PreconditionError("conj_profile must be 'self-similar' or 'random'")
    C = ExpField(_series(system, m, alpha, rng, float(params.get("conj_scale", scale)),
                         self_similar=profile == "self-similar"))
    if kind == "coboundary":
        return make_coboundary(system, C, alpha, kind, params, seed)
    if kind == "conjugated-orthogonal":
        R = ExpField(_series(system, m, alpha, rng, float(params.get("rotation_scale", 1.0))),
                     skew=True)
        return make_coboundary(system, C, alpha, kind, params, seed, core=R)
    # conjugated-unipotent
    N = UnipotentField(_series(system, m, alpha, rng, float(params.get("nilpotent_scale", 0.3))),
                       offset=float(params.get("offset", 0.5)))
    return make_coboundary(system, C, alpha, kind, params, seed, core=N)


def generator_from_spec(system, spec):
    return make_family(system, spec["kind"], m=int(spec.get("m", 2)),
                       alpha=float(spec.get("alpha", 1.0)), params=spec.get("params"),
                       seed=spec.get("seed", 0))


# --------------------------------------------------------------------------
# Hoelder estimation


def estimate_holder(gen, pair_count=400, seed=0, max_radius=None):
    """Regress log ||A(x) - A(y)|| on log dist(x, y) over random close pairs.

    Returns a dict with ``alpha_hat`` (None when the generator is flat),
    its 95% band, ``c_fit`` (regression intercept), ``c_hat`` (envelope
    max ||A(x)-A(y)|| / dist^alpha at the declared alpha), and flags.
    """
    if pair_count < 100:
        raise PreconditionError("need at least 100 pairs")
    rng = np.random.default_rng(seed)
    system = gen.system
    sym = gen.symbolic
    dists, diffs = [], []
    if sym:
        rmax = max_radius or 24
        W = gen.window + rmax + 2
        for _ in range(pair_count):
            x = system.random_point(rng, window=W)
            r = int(rng.integers(0, rmax + 1))
            y = system.perturb(x, r, rng, window=W)
            dists.append(system.distance(x, y, upper=True))
            diffs.append(np.linalg.norm(gen.evaluate(x) - gen.evaluate(y), 2))
    else:
        X = rng.random((pair_count, system.d))
        eps = 10.0 ** rng.uniform(-6, -1, size=pair_count)
        Y = np.stack([system.perturb(x, e, rng) for x, e in zip(X, eps)])
        dists = [system.distance(a, b) for a, b in zip(X, Y)]
        diffs = np.linalg.norm(gen.evaluate_many(X) - gen.evaluate_many(Y), 2, axis=(1, 2))
    dists = np.asarray(dists, dtype=float)
    diffs = np.asarray(diffs, dtype=float)
    if np.all(dists == 0):
        raise PreconditionError("degenerate sample: all pairs coincide")
    x0 = system.random_point(rng, window=gen.window + 2)
    tiny = 1e-13 * max(1.0, float(np.max(np.abs(gen.evaluate(x0)))))
    keep = (diffs > tiny) & (dists > 0)
    zero = ~keep & (dists > 0)
    out = {"pairs": int(len(dists)), "alpha_declared": gen.alpha, "flat": False,
           "locally_constant": False, "alpha_hat": None, "alpha_band": None,
           "c_fit": 0.0, "c_hat": 0.0, "constancy_radius": None}
    if not keep.any():
        out["flat"] = True
        return out
    out["c_hat"] = float(np.max(diffs[keep] / dists[keep] ** gen.alpha))
    if zero.any() and np.max(dists[zero]) < np.min(dists[keep]):
        # differences vanish below a fixed distance
        out["locally_constant"] = True
        if sym:
            out["constancy_radius"] = int(round(-math.log(np.min(dists[keep]), system.base)))
    if len(np.unique(dists[keep])) < 3:
        return out
    fit = linregress(np.log(dists[keep]), np.log(diffs[keep]))
    out["alpha_hat"] = float(fit.slope)
    out["alpha_band"] = (float(fit.slope - 2 * fit.stderr), float(fit.slope + 2 * fit.stderr))
    out["c_fit"] = float(math.exp(fit.intercept))
    return out
