import math

import numpy as np
import pytest
from hypothesis import given, settings, strategies as st

from cocyclelab.base_systems import SymbolicPoint, cat_map, full_shift, golden_mean_shift
from cocyclelab.cocycle import (FAMILIES, CocycleGenerator, cocycle_identity_sweep,
                                estimate_holder, generator_from_spec, make_family, product,
                                verify_cocycle_identity)
from cocyclelab.errors import PreconditionError

S, G, T = full_shift(), golden_mean_shift(), cat_map()


def family_cases():
    out = []
    for system in (S, G):
        for kind in ("random-holder", "coboundary", "conjugated-orthogonal",
                     "conjugated-unipotent", "locally-constant"):
            out.append((system, kind, 0.5 if kind == "random-holder" else 1.0))
    for kind in ("random-holder", "coboundary", "conjugated-orthogonal", "derivative"):
        out.append((T, kind, 1.0))
    return out


@pytest.mark.parametrize("system,kind,alpha", family_cases())
def test_families_are_invertible_and_satisfy_identity(system, kind, alpha):
    gen = make_family(system, kind, m=2 if kind == "derivative" else 3, alpha=alpha, seed=1)
    x = gen.base_point(5, length=60)
    A = gen.evaluate_orbit(x, 40)
    assert np.all(np.abs(np.linalg.det(A)) > 0)
    assert cocycle_identity_sweep(gen, x, 40)["residual"] < 1e-12


def test_every_family_name_is_buildable():
    for kind in FAMILIES:
        system = T if kind == "derivative" else S
        params = {"matrix": [[2.0, 1.0], [1.0, 1.0]]} if kind == "constant" else None
        assert make_family(system, kind, m=2, params=params).kind == kind
    with pytest.raises(PreconditionError):
        make_family(S, "nope")
    with pytest.raises(PreconditionError):
        make_family(S, "derivative")
    with pytest.raises(PreconditionError):
        make_family(T, "random-holder", alpha=0.5)


def test_families_are_deterministic_in_seed():
    a = make_family(S, "random-holder", m=3, alpha=0.5, seed=4)
    b = make_family(S, "random-holder", m=3, alpha=0.5, seed=4)
    x = a.base_point(0, length=20)
    np.testing.assert_array_equal(a.evaluate_orbit(x, 20), b.evaluate_orbit(x, 20))
    c = generator_from_spec(S, a.spec())
    np.testing.assert_array_equal(a.evaluate_orbit(x, 20), c.evaluate_orbit(x, 20))


@pytest.mark.parametrize("system", [S, G, T])
def test_coboundary_products_telescope(system):
    gen = make_family(system, "coboundary", m=3, seed=2)
    x = gen.base_point(3, length=80)
    for n in (1, 7, 50):
        X = gen.orbit_data(x, n + 1)
        C = gen.c_true(X)
        expect = C[n] @ np.linalg.inv(C[0])
        got = product(gen, x, n).matrix()
        np.testing.assert_allclose(got, expect, rtol=1e-10, atol=1e-10 * np.abs(expect).max())


def test_orthogonal_core_keeps_products_bounded():
    gen = make_family(S, "conjugated-orthogonal", m=3, seed=0)
    x = gen.base_point(0, length=3000)
    norms = [product(gen, x, n).matrix() for n in (10, 1000, 3000)]
    C = gen.c_true(gen.orbit_data(x, 1))[0]
    bound = 40 * np.linalg.norm(C, 2) * np.linalg.norm(np.linalg.inv(C), 2)
    assert all(np.linalg.norm(P, 2) <= bound for P in norms)


@settings(max_examples=20)
@given(st.integers(1, 40), st.integers(1, 40), st.integers(0, 2**31))
def test_identity_pointwise(n, k, seed):
    gen = make_family(G, "random-holder", m=2, alpha=0.5, seed=seed % 7)
    x = gen.base_point(seed, length=90)
    assert verify_cocycle_identity(gen, x, n, k)["residual"] < 1e-12


@settings(max_examples=20)
@given(st.integers(1, 30), st.integers(0, 2**31))
def test_negative_times_invert(n, seed):
    gen = make_family(S, "random-holder", m=2, alpha=0.5, seed=seed % 5)
    x = gen.base_point(seed, length=40)
    fwd = product(gen, x.shifted(-n), n).matrix()
    back = product(gen, x, -n).matrix()
    scale = np.linalg.norm(back, 2) * np.linalg.norm(fwd, 2)
    np.testing.assert_allclose(back @ fwd, np.eye(2), atol=1e-13 * scale)
    assert product(gen, x, 0).matrix().tolist() == [[1.0, 0.0], [0.0, 1.0]]


def test_products_do_not_overflow():
    gen = make_family(S, "constant", m=2, params={"matrix": [[1e3, 0.0], [0.0, 1e-3]]})
    x = SymbolicPoint.periodic([0])
    P = product(gen, x, 500)
    assert P.log_norm() == pytest.approx(500 * 3 * math.log(10), rel=1e-12)


def test_holder_estimate_random_holder():
    gen = make_family(S, "random-holder", m=2, alpha=0.5, seed=0)
    est = estimate_holder(gen, pair_count=600)
    assert abs(est["alpha_hat"] - 0.5) < 0.15
    assert est["c_hat"] > 0


def test_holder_estimate_flat_and_locally_constant():
    assert estimate_holder(make_family(S, "identity"))["flat"]
    lc = estimate_holder(make_family(S, "locally-constant", m=2, params={"radius": 1}))
    assert lc["locally_constant"] and lc["constancy_radius"] >= 1
    with pytest.raises(PreconditionError):
        estimate_holder(make_family(S, "identity"), pair_count=10)


def test_custom_generator_condition_cap():
    from cocyclelab.cocycle import ConstantField
    from cocyclelab.errors import SingularMatrixError
    gen = CocycleGenerator(S, ConstantField(np.diag([1.0, 1e-14])))
    with pytest.raises(SingularMatrixError):
        gen.evaluate_orbit(SymbolicPoint.periodic([0]), 3)
