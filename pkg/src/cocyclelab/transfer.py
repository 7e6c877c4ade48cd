"""Transfer functions for cocycles with trivial periodic data.

C is tabulated along a dense orbit by C(f^k z) = A(z, k) and extended to
the whole space by the nearest net point.
"""
import csv
import json
import math
from dataclasses import dataclass, field
from pathlib import Path

import numpy as np
from scipy.spatial import cKDTree
from scipy.stats import linregress

from . import kernels
from .base_systems import DenseOrbitNet, SymbolicPoint, SymbolicSystem, system_from_spec
from .cocycle import generator_from_spec
from .errors import AuditRefusal, PreconditionError
from .rigidity import TRIVIAL_TOL, audit_periodic_data, sample_points

BUNDLE_VERSION = 1
PREDICATES = ("special-linear", "orthogonal", "symplectic")


@dataclass
class TransferFunction:
    gen: object
    net: DenseOrbitNet
    units: np.ndarray           # (L, m, m)
    exps: np.ndarray            # (L,) powers of two
    alpha_hat: float = None
    alpha_band: tuple = None
    c_hat: float = 0.0
    sup_d_group: float = 0.0
    sup_norm: float = 0.0
    sup_inv_norm: float = 0.0
    chain: dict = field(default_factory=dict)
    audit: object = None

    @property
    def length(self):
        return len(self.exps)

    @property
    def mesh(self):
        return self.net.mesh

    def values(self):
        return np.ldexp(self.units, self.exps[:, None, None])

    def value(self, k):
        """Dense value at net index ``k`` (an integer or an index array)."""
        if np.ndim(k):
            k = np.asarray(k)
            return np.ldexp(self.units[k], self.exps[k][:, None, None])
        return np.ldexp(self.units[k], int(self.exps[k]))

    def extension_error(self):
        return self.c_hat * self.mesh ** self.gen.alpha

    def summary(self):
        return {"length": self.length, "mesh": self.mesh, "alpha_hat": self.alpha_hat,
                "alpha_band": self.alpha_band, "c_hat": self.c_hat,
                "sup_d_group": self.sup_d_group, "sup_norm": self.sup_norm,
                "sup_inv_norm": self.sup_inv_norm, "chain": self.chain,
                "extension_error": self.extension_error()}


def _d_group_stack(P, Q=None):
    """d(P_i, Q_i) (Q defaults to Id) for stacks of matrices."""
    m = P.shape[-1]
    Q = np.broadcast_to(np.eye(m), P.shape) if Q is None else Q
    return (np.linalg.norm(P - Q, 2, axis=(1, 2))
            + np.linalg.norm(np.linalg.inv(P) - np.linalg.inv(Q), 2, axis=(1, 2)))


def build_transfer(gen, net, audit=None, tolerance=TRIVIAL_TOL, max_period=12, pairs=2000,
                   seed=0):
    """Tabulate C(f^k z) = A(z, k) along the net after a triviality audit."""
    if net.length == 0:
        raise PreconditionError("empty net")
    if audit is None:
        audit = audit_periodic_data(gen, max_period, tolerance=tolerance)
    if audit.classification != "trivial":
        raise AuditRefusal(
            f"periodic data are {audit.classification} (max ||A(p,n) - Id|| = "
            f"{audit.max_norm_minus_id:.3g}); a transfer function needs trivial data", audit)
    A = gen.evaluate_orbit(net.z, net.length)
    U, E = kernels.cumprod_scaled(A)
    C = TransferFunction(gen, net, U[: net.length].copy(), E[: net.length].copy(), audit=audit)
    _attach_bounds(C, pairs, seed)
    return C


def _attach_bounds(C, pairs=2000, seed=0):
    V = C.values()
    norms = np.linalg.norm(V, 2, axis=(1, 2))
    inv = np.linalg.norm(np.linalg.inv(V), 2, axis=(1, 2))
    C.sup_norm, C.sup_inv_norm = float(norms.max()), float(inv.max())
    C.sup_d_group = float(_d_group_stack(V).max())
    h = holder_estimate_transfer(C, pairs=pairs, seed=seed)
    C.alpha_hat, C.alpha_band, C.c_hat = h["alpha_hat"], h["alpha_band"], h["c_hat"]
    # chain bound: c3 bounds d(A(x, n), Id) over net returns, c4 bounds d(C, Id)
    c3, c4 = h["return_sup"], C.sup_d_group
    C.chain = {"c3": c3, "c4": c4, "bound": c3 + c4 + c3 * c4}


# --------------------------------------------------------------------------
# extension and verification


@dataclass
class TransferValue:
    matrix: np.ndarray
    index: int
    error_bound: float


def evaluate_transfer(C, x):
    """C at the nearest net point (smallest orbit index on ties)."""
    if C.mesh > C.gen.system.closing.delta0:
        raise PreconditionError(f"net mesh {C.mesh:.4g} exceeds delta0")
    k = C.net.nearest(x)
    return TransferValue(C.value(k), k, C.extension_error())


def _residual_points(gen, C, samples, seed):
    system = gen.system
    if isinstance(system, SymbolicSystem):
        need = max(gen.window, C.net.radius) + 2
        return [gen.base_point(int(s), length=need, past=need)
                for s in np.random.default_rng(seed).integers(0, 2**62, size=samples)]
    return list(np.random.default_rng(seed).random((samples, system.d)))


def coboundary_bound(C):
    """c * mesh^alpha with c = c_hat (sup||C|| + sup||C^-1||)."""
    return C.c_hat * (C.sup_norm + C.sup_inv_norm) * C.mesh ** C.gen.alpha


def verify_coboundary(gen, C, samples=1000, seed=0, points=None, slack=1e-9):
    """Residual ||A(x) - C(fx) C(x)^-1|| over sampled x."""
    pts = points if points is not None else _residual_points(gen, C, samples, seed)
    system = gen.system
    A = np.stack([gen.evaluate(x) for x in pts]) if isinstance(system, SymbolicSystem) \
        else gen.evaluate_many(np.asarray(pts))
    res = np.empty(len(pts))
    for i, x in enumerate(pts):
        u = C.net.nearest(x)
        v = C.net.nearest(system.step(x, 1))
        res[i] = np.linalg.norm(A[i] - C.value(v) @ np.linalg.inv(C.value(u)), 2)
    bound = coboundary_bound(C)
    return {"max_residual": float(res.max()), "mean_residual": float(res.mean()),
            "samples": len(pts), "bound": bound, "mesh": C.mesh,
            "passed": bool(res.max() <= bound + slack)}


def construction_residual(C):
    """max_k ||C(f^{k+1} z) - A(f^k z) C(f^k z)|| / ||C(f^{k+1} z)|| along the net."""
    if C.length < 2:
        return 0.0
    A = C.gen.evaluate_orbit(C.net.z, C.length - 1)
    lhs = C.units[1:]
    rhs = A @ C.units[:-1]
    rhs = np.ldexp(rhs, (C.exps[:-1] - C.exps[1:])[:, None, None])
    num = np.linalg.norm(lhs - rhs, 2, axis=(1, 2))
    return float(np.max(num / np.linalg.norm(lhs, 2, axis=(1, 2))))


def _net_pairs(C, pairs, rng):
    """Index pairs of distinct net points closer than delta0, with their distances."""
    net, system = C.net, C.gen.system
    delta0 = system.closing.delta0
    out = []
    if net.tree is not None:
        P = np.asarray(net.points)
        radius = min(delta0, 0.49)
        for _ in range(20 * pairs):
            if len(out) >= pairs:
                break
            u = int(rng.integers(net.length))
            # log-uniform target distance between the mesh scale and delta0
            r = math.exp(rng.uniform(math.log(max(net.mesh / 8, 1e-12)), math.log(radius)))
            near = net.tree.query_ball_point(P[u], r)
            near = [k for k in near if k != u]
            if not near:
                continue
            v = int(near[int(rng.integers(len(near)))])
            d = system.distance(P[u], P[v])
            if 0 < d < delta0:
                out.append((u, v, d))
        return out
    if net.radius == 0:
        return out
    z = net.z
    L = net.length
    width_keys = {}
    for j in range(1, net.radius + 1):
        win = z.coords(-(j - 1), L + j - 1)
        win = np.lib.stride_tricks.sliding_window_view(win, 2 * j - 1)[:L]
        groups = {}
        for k, w in enumerate(map(bytes, win.astype(np.uint8))):
            groups.setdefault(w, []).append(k)
        width_keys[j] = [g for g in groups.values() if len(g) > 1]
    levels = [j for j in width_keys if width_keys[j]]
    for _ in range(20 * pairs):
        if len(out) >= pairs or not levels:
            break
        j = levels[int(rng.integers(len(levels)))]
        g = width_keys[j][int(rng.integers(len(width_keys[j])))]
        a, b = rng.choice(len(g), size=2, replace=False)
        u, v = int(g[a]), int(g[b])
        d = system.distance(z.shifted(u), z.shifted(v))
        if 0 < d < delta0:
            out.append((u, v, d))
    return out


def holder_estimate_transfer(C, pairs=2000, seed=0):
    """Regress log d(C(u), C(v)) on log dist(u, v) over net pairs below delta0."""
    rng = np.random.default_rng(seed)
    P = _net_pairs(C, pairs, rng)
    if len(P) < 10:
        raise PreconditionError("degenerate pair set: too few close net pairs")
    u = np.array([p[0] for p in P])
    v = np.array([p[1] for p in P])
    d = np.array([p[2] for p in P])
    Vu, Vv = C.value(u), C.value(v)
    dg = _d_group_stack(Vu, Vv)
    # d(A(x, n), Id) for x = f^u z, n = v - u: the return products of the chain
    ret = _d_group_stack(Vv @ np.linalg.inv(Vu))
    alpha = C.gen.alpha
    out = {"pairs": len(P), "alpha_hat": None, "alpha_band": None,
           "c_hat": float(np.max(dg / d ** alpha)), "return_sup": float(ret.max()),
           "flat": False}
    scale = max(1.0, C.sup_norm)
    keep = dg > 1e-12 * scale
    if not keep.any():
        out["flat"] = True
        out["c_hat"] = 0.0
        return out
    if len(np.unique(d[keep])) >= 3:
        fit = linregress(np.log(d[keep]), np.log(dg[keep]))
        out["alpha_hat"] = float(fit.slope)
        out["alpha_band"] = (float(fit.slope - 2 * fit.stderr), float(fit.slope + 2 * fit.stderr))
    return out


def uniqueness_check(C1, C2, slack=1e-9):
    """B = mean of C1(u)^-1 C2(u) over C1's net; max d(C1(u)^-1 C2(u), B)."""
    if C1.gen.spec() != C2.gen.spec() or C1.gen.system.spec() != C2.gen.system.spec():
        raise PreconditionError("transfer functions belong to different generators")
    V1 = C1.values()
    if C2.net is C1.net:
        V2 = C2.values()
        ext = 0.0
    else:
        pts = C1.net.points
        idx = [C2.net.nearest(pts[k]) for k in range(C1.length)]
        V2 = C2.values()[idx]
        ext = C2.extension_error()
    R = np.linalg.solve(V1, V2)
    B = R.mean(axis=0)
    dev = _d_group_stack(R, np.broadcast_to(B, R.shape))
    # C2 is extended off its own net; its error is amplified by ||C1^-1||
    tol = 2.0 * ext * max(1.0, C1.sup_inv_norm) + slack
    return {"B": B.tolist(), "max_deviation": float(dev.max()), "tolerance": tol,
            "passed": bool(dev.max() <= tol)}


def _defect(V, predicate):
    m = V.shape[-1]
    if predicate == "special-linear":
        return np.abs(np.linalg.det(V) - 1.0)
    if predicate == "orthogonal":
        return np.linalg.norm(np.swapaxes(V, 1, 2) @ V - np.eye(m), 2, axis=(1, 2))
    if predicate == "symplectic":
        if m % 2:
            raise PreconditionError("symplectic predicate needs even m")
        h = m // 2
        J = np.block([[np.zeros((h, h)), np.eye(h)], [-np.eye(h), np.zeros((h, h))]])
        return np.linalg.norm(np.swapaxes(V, 1, 2) @ J @ V - J, 2, axis=(1, 2))
    raise PreconditionError(f"unknown predicate {predicate!r}; expected one of {PREDICATES}")


def subgroup_check(C, predicate, generator_tol=1e-10):
    """Max predicate defect over net values.

    When every generator value along the net satisfies the predicate within
    ``generator_tol``, C values must satisfy it within n * 1e-12 at step n.
    """
    V = C.values()
    dC = _defect(V, predicate)
    A = C.gen.evaluate_orbit(C.net.z, C.length)
    dA = _defect(A, predicate)
    closed = bool(dA.max() <= generator_tol)
    bound = np.maximum(np.arange(C.length), 1) * 1e-12
    viol = int(np.sum(dC > bound)) if closed else None
    return {"predicate": predicate, "max_defect": float(dC.max()),
            "generator_max_defect": float(dA.max()), "generator_in_subgroup": closed,
            "violations": viol, "bound_at_end": float(bound[-1])}


# --------------------------------------------------------------------------
# bundles


def save_transfer(C, directory):
    """Write ``transfer.json`` and ``transfer.csv``; floats in round-trip repr."""
    d = Path(directory)
    d.mkdir(parents=True, exist_ok=True)
    gen, net = C.gen, C.net
    sym = isinstance(gen.system, SymbolicSystem)
    m = gen.m
    meta = {"version": BUNDLE_VERSION, "system": gen.system.spec(), "generator": gen.spec(),
            "net": {"length": net.length, "mesh": net.mesh, "radius": net.radius},
            "summary": C.summary()}
    if sym:
        meta["net"]["z"] = [int(v) for v in net.z.word.tolist()]
    else:
        meta["net"]["z"] = [repr(float(v)) for v in np.asarray(net.z)]
    (d / "transfer.json").write_text(json.dumps(meta, indent=2, sort_keys=True, default=_jsonable))
    coords = [] if sym else np.asarray(net.points)
    with open(d / "transfer.csv", "w", newline="") as fh:
        w = csv.writer(fh)
        pt_cols = ["word"] if sym else [f"x{i}" for i in range(gen.system.d)]
        w.writerow(["index"] + pt_cols + ["exp", "log_scale"]
                   + [f"u{i}{j}" for i in range(m) for j in range(m)])
        for k in range(C.length):
            pt = [_window_label(net, k)] if sym else [repr(float(v)) for v in coords[k]]
            e = int(C.exps[k])
            w.writerow([k] + pt + [e, repr(e * math.log(2.0))]
                       + [repr(float(v)) for v in C.units[k].ravel()])
    return d


def _window_label(net, k):
    r = max(net.radius, 1)
    return "".join(map(str, net.z.coords(k - (r - 1), k + r).tolist()))


def _jsonable(v):
    if isinstance(v, (np.floating, np.integer)):
        return v.item()
    if isinstance(v, tuple):
        return list(v)
    raise TypeError(f"cannot serialize {type(v)}")


def load_transfer(directory):
    """Rebuild the generator, net and tabulated values from a bundle."""
    d = Path(directory)
    meta = json.loads((d / "transfer.json").read_text())
    if meta.get("version") != BUNDLE_VERSION:
        raise PreconditionError(f"unsupported bundle version {meta.get('version')}")
    system = system_from_spec(meta["system"])
    gen = generator_from_spec(system, meta["generator"])
    nm = meta["net"]
    L, m = nm["length"], gen.m
    units = np.empty((L, m, m))
    exps = np.empty(L, dtype=np.int64)
    pts = []
    with open(d / "transfer.csv", newline="") as fh:
        rows = csv.reader(fh)
        header = next(rows)
        npt = header.index("exp") - 1
        for row in rows:
            k = int(row[0])
            if npt and not isinstance(system, SymbolicSystem):
                pts.append([float(v) for v in row[1: 1 + npt]])
            exps[k] = int(row[1 + npt])
            units[k] = np.array([float(v) for v in row[3 + npt:]]).reshape(m, m)
    if isinstance(system, SymbolicSystem):
        z = SymbolicPoint.periodic(np.array(nm["z"], dtype=np.int64))
        r = nm["radius"]
        lookup = {}
        if r:
            win = z.coords(-(r - 1), L + r - 1)
            win = np.lib.stride_tricks.sliding_window_view(win, 2 * r - 1)
            for k in range(L):
                lookup.setdefault(tuple(win[k].tolist()), []).append(k)
        net = DenseOrbitNet(system, z, L, nm["mesh"], [z.shifted(k) for k in range(L)],
                            radius=r, lookup=lookup)
    else:
        P = np.array(pts)
        z = np.array([float(v) for v in nm["z"]])
        net = DenseOrbitNet(system, z, L, nm["mesh"], P, tree=cKDTree(P, boxsize=1.0))
    s = meta["summary"]
    C = TransferFunction(gen, net, units, exps, s["alpha_hat"],
                         tuple(s["alpha_band"]) if s["alpha_band"] else None, s["c_hat"],
                         s["sup_d_group"], s["sup_norm"], s["sup_inv_norm"], s["chain"])
    return C


def transfer_from_values(C, values):
    """A transfer function over the same net with given dense values (e.g. C B)."""
    V = np.asarray(values, dtype=float)
    fro = np.max(np.abs(V), axis=(1, 2))
    _, e = np.frexp(fro)
    T = TransferFunction(C.gen, C.net, np.ldexp(V, -e[:, None, None]), e.astype(np.int64))
    _attach_bounds(T)
    return T


def mesh_sweep(gen, deltas, samples=500, seed=0, **net_kw):
    """verify_coboundary residuals over nets of decreasing mesh; log-log slope."""
    rows = []
    audit = None
    for delta in deltas:
        net = gen.system.dense_net(delta, **net_kw)
        C = build_transfer(gen, net, audit=audit, seed=seed)
        audit = C.audit
        res = verify_coboundary(gen, C, samples=samples, seed=seed)
        rows.append({"delta": float(delta), "mesh": C.mesh, "length": C.length,
                     "max_residual": res["max_residual"], "mean_residual": res["mean_residual"],
                     "bound": res["bound"], "passed": res["passed"]})
    mesh = np.array([r["mesh"] for r in rows])
    out = {"rows": rows, "alpha": gen.alpha, "slope": None, "slope_max": None,
           "zero": bool(all(r["max_residual"] <= 1e-14 for r in rows)), "last": C}
    if out["zero"]:
        return out
    for key, name in (("mean_residual", "slope"), ("max_residual", "slope_max")):
        v = np.array([r[key] for r in rows])
        keep = v > 0
        if keep.sum() >= 2:
            out[name] = float(linregress(np.log(mesh[keep]), np.log(v[keep])).slope)
    return out
