"""Small dense GL(m, R) utilities.

Everything here works on float64 numpy arrays of shape (m, m) with m <= 8.
"""
import math
from itertools import combinations

import numpy as np

from .errors import PreconditionError, SingularMatrixError

MAX_DIM = 8
CONDITION_CAP = 1e12


def as_matrix(M):
    A = np.asarray(M, dtype=np.float64)
    if A.ndim == 0:
        A = A.reshape(1, 1)
    if A.ndim != 2 or A.shape[0] != A.shape[1]:
        raise PreconditionError(f"expected a square matrix, got shape {A.shape}")
    if not np.all(np.isfinite(A)):
        raise PreconditionError("matrix has non-finite entries")
    return A


def operator_norm(M):
    """Spectral norm (largest singular value)."""
    A = as_matrix(M)
    return float(np.linalg.norm(A, 2))


def check_invertible(M, cap=CONDITION_CAP):
    """Return the inverse of ``M``; raise if the condition number exceeds ``cap``."""
    A = as_matrix(M)
    s = np.linalg.svd(A, compute_uv=False)
    if s[-1] == 0.0 or s[0] / s[-1] > cap:
        cond = math.inf if s[-1] == 0.0 else s[0] / s[-1]
        raise SingularMatrixError(f"condition number {cond:.3g} exceeds cap {cap:.3g}")
    return np.linalg.inv(A)


def group_distance(A, B, cap=CONDITION_CAP):
    """d(A, B) = ||A - B|| + ||A^-1 - B^-1|| in operator norm."""
    A = as_matrix(A)
    B = as_matrix(B)
    Ai = check_invertible(A, cap)
    Bi = check_invertible(B, cap)
    return operator_norm(A - B) + operator_norm(Ai - Bi)


def distance_to_identity(A, cap=CONDITION_CAP):
    A = as_matrix(A)
    return group_distance(A, np.eye(A.shape[0]), cap)


def subsets(m, i):
    """Index subsets of size ``i`` in lexicographic order (the compound basis)."""
    return list(combinations(range(m), i))


def compound(M, i):
    """i-th compound matrix: all i x i minors, rows/cols in lexicographic order.

    Accepts a stack (..., m, m) and returns (..., C(m,i), C(m,i)).
    """
    A = np.asarray(M, dtype=np.float64)
    if A.ndim < 2 or A.shape[-1] != A.shape[-2]:
        raise PreconditionError("compound expects square matrices")
    m = A.shape[-1]
    if not 1 <= i <= m:
        raise PreconditionError(f"compound order {i} outside [1, {m}]")
    if i == 1:
        return A.copy()
    if i == m:
        return np.linalg.det(A)[..., None, None]
    idx = np.array(subsets(m, i))
    # sub[..., r, c, :, :] = A[..., idx[r], :][..., idx[c]]
    rows = A[..., idx, :]                       # (..., S, i, m)
    sub = np.take(rows, idx, axis=-1)           # (..., S, i, S, i)
    sub = np.moveaxis(sub, -2, -3)              # (..., S, S, i, i)
    return np.linalg.det(sub)


def eigen_moduli(M):
    """Eigenvalue moduli, ascending, with multiplicity."""
    A = as_matrix(M)
    try:
        ev = np.linalg.eigvals(A)
    except np.linalg.LinAlgError as exc:
        raise ArithmeticError(f"eigenvalue iteration failed: {exc}") from exc
    return np.sort(np.abs(ev))


def qr_factor(M):
    """QR with a positive diagonal on R."""
    A = as_matrix(M)
    Q, R = np.linalg.qr(A)
    d = np.diagonal(R)
    scale = np.max(np.abs(A)) if A.size else 0.0
    if np.any(np.abs(d) <= 1e-14 * max(scale, 1e-300) * A.shape[0]):
        raise SingularMatrixError("matrix is rank deficient")
    s = np.where(d < 0, -1.0, 1.0)
    return Q * s, R * s[:, None]


def check_perturbation_bound(A, B, M, xi):
    """Evaluate d(A, B) <= 3(M + 1) xi given d(A, Id) <= M and a relative gap xi < 1/2.

    Returns a dict with ``holds``, ``lhs``, ``rhs`` and ``applicable``.  When a
    precondition fails the result is marked not applicable rather than failed.
    """
    A = as_matrix(A)
    B = as_matrix(B)
    I = np.eye(A.shape[0])
    rhs = 3.0 * (M + 1.0) * xi
    out = {"lhs": None, "rhs": rhs, "holds": None, "applicable": False, "reason": ""}
    try:
        Ai = check_invertible(A)
        Bi = check_invertible(B)
    except SingularMatrixError as exc:
        out["reason"] = str(exc)
        return out
    lhs = operator_norm(A - B) + operator_norm(Ai - Bi)
    out["lhs"] = lhs
    dA = operator_norm(A - I) + operator_norm(Ai - I)
    close = min(operator_norm(Ai @ B - I), operator_norm(A @ Bi - I))
    if dA > M:
        out["reason"] = f"d(A, Id) = {dA:.6g} exceeds M"
    elif not xi < 0.5:
        out["reason"] = "xi must be below 1/2"
    elif close > xi:
        out["reason"] = f"relative perturbation {close:.6g} exceeds xi"
    else:
        out["applicable"] = True
        out["holds"] = bool(lhs <= rhs)
    return out


class ScaledMatrix:
    """A matrix stored as ``unit * 2**exp`` with ``||unit||`` in [1/2, 1).

    The exponent is an integer so renormalization never perturbs the unit
    part; ``log_scale`` is ``exp * log 2``.
    """

    __slots__ = ("unit", "exp")

    def __init__(self, unit, exp=0):
        U = np.array(unit, dtype=np.float64)
        if U.ndim == 0:
            U = U.reshape(1, 1)
        nrm = float(np.linalg.norm(U, 2))
        if not math.isfinite(nrm) or nrm == 0.0:
            raise SingularMatrixError("cannot scale a zero or non-finite matrix")
        shift = math.frexp(nrm)[1]
        self.unit = np.ldexp(U, -shift)
        self.exp = int(exp) + shift

    @classmethod
    def identity(cls, m):
        return cls(np.eye(m))

    @classmethod
    def from_parts(cls, unit, exp):
        """Wrap an already 2-adically scaled pair (e.g. from the kernels)."""
        return cls(unit, exp)

    @property
    def m(self):
        return self.unit.shape[0]

    @property
    def log_scale(self):
        return self.exp * math.log(2.0)

    def log_norm(self):
        return math.log(operator_norm(self.unit)) + self.log_scale

    def value(self):
        """Dense value; may overflow for large scales."""
        return np.ldexp(self.unit, self.exp)

    def __matmul__(self, other):
        if isinstance(other, ScaledMatrix):
            return ScaledMatrix(self.unit @ other.unit, self.exp + other.exp)
        return ScaledMatrix(self.unit @ np.asarray(other, dtype=np.float64), self.exp)

    def __rmatmul__(self, other):
        return ScaledMatrix(np.asarray(other, dtype=np.float64) @ self.unit, self.exp)

    def inverse(self):
        Ui = check_invertible(self.unit, cap=math.inf)
        return ScaledMatrix(Ui, -self.exp)

    def relative_distance(self, other):
        """||self - other|| / ||self|| computed on aligned scales."""
        d = other.exp - self.exp
        diff = self.unit - np.ldexp(other.unit, d)
        return operator_norm(diff) / operator_norm(self.unit)

    def distance_to(self, M):
        """Absolute operator-norm distance to a dense matrix (may overflow to inf)."""
        return operator_norm(self.value() - np.asarray(M, dtype=np.float64))

    def __repr__(self):
        return f"ScaledMatrix(log_scale={self.log_scale:.6g}, unit={self.unit.tolist()})"
