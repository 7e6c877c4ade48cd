import math

import numpy as np
import pytest
from hypothesis import given, settings, strategies as st

from cocyclelab.base_systems import (RationalPoint, SymbolicPoint, SymbolicSystem, ToralSystem,
                                     agreement_radii, cat_map, find_pseudo_returns, full_shift,
                                     golden_mean_shift, sample_pseudo_returns, system_from_spec)
from cocyclelab.errors import (EnumerationLimitError, PreconditionError,
                               WindowExhaustedError)

words = st.lists(st.integers(0, 1), min_size=1, max_size=12)


# symbolic points

def test_symbolic_point_tails_and_window():
    x = SymbolicPoint([0, 1, 1], origin=1, left=[0], right=[1, 0])
    assert x.coords(-3, 6).tolist() == [0, 0, 0, 1, 1, 1, 0, 1, 0]
    y = SymbolicPoint([0, 1, 1], origin=1)
    with pytest.raises(WindowExhaustedError):
        y.coords(-2, 0)
    assert y.shifted(1)[0] == 1


@given(words, st.integers(-30, 30), st.integers(-30, 30))
def test_periodic_point_shift(block, k, i):
    p = SymbolicPoint.periodic(block)
    assert p.shifted(k)[i] == block[(k + i) % len(block)]
    assert p.shifted(len(block)).key(8) == p.key(8)


def test_distance_first_disagreement():
    S = full_shift()
    a = SymbolicPoint.periodic([0])
    b = SymbolicPoint([0, 0, 0, 0, 1, 0, 0, 0, 0], origin=4, left=[0], right=[0])
    assert S.distance(a, b) == 1.0
    c = SymbolicPoint([0, 0, 0, 0, 0, 0, 0, 1, 0], origin=4, left=[0], right=[0])
    assert S.distance(a, c) == 2.0 ** -3
    assert S.distance(a, a.shifted(5)) == 0.0


# systems

def test_sft_validation():
    with pytest.raises(PreconditionError):
        SymbolicSystem([[1, 0], [0, 1]])        # not primitive
    with pytest.raises(PreconditionError):
        SymbolicSystem([[1, 2], [1, 1]])
    with pytest.raises(PreconditionError):
        ToralSystem([[1, 1], [0, 1]])           # eigenvalue on the unit circle
    with pytest.raises(PreconditionError):
        ToralSystem([[2, 0], [0, 1]])
    with pytest.raises(PreconditionError):
        system_from_spec({"type": "sft", "transitions": [[1, 1], [1, 0]], "alphabet": 3})


@pytest.mark.parametrize("T", [[[1, 1], [1, 1]], [[1, 1], [1, 0]],
                               [[1, 1, 0], [0, 1, 1], [1, 0, 1]]])
def test_sft_periodic_counts_and_orbits(T):
    S = SymbolicSystem(T)
    total = 0
    for n in range(1, 8):
        pts = S.enumerate_periodic(n)
        assert len(pts) == S.count_periodic(n)
        for p, q in pts:
            assert n % q == 0 and S.is_periodic(p, q)
            assert S.is_admissible(p.coords(0, 2 * n))
    # orbit representatives: sum over q | n of q * (#orbits of period q) = #Fix(f^n)
    orbits = S.periodic_orbits(7)
    for n in range(1, 8):
        total = sum(q for _, q in orbits if n % q == 0)
        assert total == S.count_periodic(n)


def test_enumeration_cap():
    with pytest.raises(EnumerationLimitError) as e:
        full_shift().enumerate_periodic(12, cap=100)
    assert e.value.estimate == 4096


def test_cat_map_periodic_points_exact():
    C = cat_map()
    for n in range(1, 7):
        pts = C.enumerate_periodic(n)
        assert len(pts) == C.count_periodic(n)
        for p, q in pts:
            assert C.step(p, q) == p
    assert C.step(C.step(RationalPoint((1, 2), 5), 3), -3) == RationalPoint((1, 2), 5)
    orbits = C.periodic_orbits(6)
    for n in range(1, 7):
        assert sum(q for _, q in orbits if n % q == 0) == C.count_periodic(n)


def test_toral_closing_constants():
    C = cat_map()
    assert C.closing.lam == pytest.approx(math.log((3 + math.sqrt(5)) / 2))
    assert C.closing.delta0 < 0.5


# closing lemma

@pytest.mark.parametrize("system", [full_shift(), golden_mean_shift(), full_shift(3)])
def test_closing_on_sampled_returns(system):
    for x, n in sample_pseudo_returns(system, 60, seed=2):
        triple = system.close_pseudo_return(x, n)
        report = system.verify_shadowing(triple)
        assert report["pass"], report
        assert system.is_periodic(triple.p, n)


def test_closing_on_cat_map_returns():
    C = cat_map()
    for x, n in sample_pseudo_returns(C, 15, seed=4):
        triple = C.close_pseudo_return(x, n)
        assert C.verify_shadowing(triple)["pass"]
        assert C.step(triple.p, n) == triple.p


def test_closing_rejects_far_returns():
    S = full_shift()
    x = SymbolicPoint([0, 1, 0, 1, 1, 0], origin=2)
    with pytest.raises(PreconditionError):
        S.close_pseudo_return(x, 1)


# nets

@pytest.mark.parametrize("system", [full_shift(), golden_mean_shift()])
@pytest.mark.parametrize("delta", [0.5, 0.2, 2.0 ** -4])
def test_symbolic_net_mesh(system, delta):
    net = system.dense_net(delta)
    assert net.mesh <= delta
    rng = np.random.default_rng(0)
    for _ in range(200):
        x = system.random_point(rng, window=16)
        assert system.distance(net.point(net.nearest(x)), x, upper=True) <= net.mesh


def test_toral_net_mesh():
    C = cat_map()
    net = C.dense_net(0.05)
    assert net.mesh <= 0.05
    x = np.random.default_rng(1).random((500, 2))
    d = [C.distance(net.point(net.nearest(p)), p) for p in x]
    assert max(d) <= net.mesh


# pseudo-returns

def _brute_radii(seq, n):
    L = len(seq) - n
    out = []
    for i in range(L):
        r = 0
        while True:
            hit = [j for j in (r, -r) if 0 <= i + j < L and seq[i + j] != seq[i + j + n]]
            if hit:
                out.append(r)
                break
            if not (0 <= i + r < L or 0 <= i - r < L):
                out.append(None)
                break
            r += 1
    return out


@given(st.lists(st.integers(0, 1), min_size=3, max_size=40), st.integers(1, 5))
def test_agreement_radii_brute_force(seq, n):
    if n >= len(seq):
        return
    r, exact = agreement_radii(seq, n)
    for i, b in enumerate(_brute_radii(seq, n)):
        if exact[i]:
            assert b == r[i]
        elif b is not None:
            assert r[i] <= b


@settings(max_examples=15)
@given(st.integers(0, 2**31))
def test_vectorized_returns_match_pointwise(seed):
    S = golden_mean_shift()
    orbit = S.sample_orbit(length=300, seed=seed, window=8)
    fast = find_pseudo_returns(S, orbit, range(1, 6))
    # copies defeat the shared-word fast path
    slow = find_pseudo_returns(S, [SymbolicPoint(p.word.copy(), p.origin) for p in orbit],
                               range(1, 6))
    assert fast == slow


def test_sample_pseudo_returns_deterministic():
    a = sample_pseudo_returns(full_shift(), 20, seed=9)
    b = sample_pseudo_returns(full_shift(), 20, seed=9)
    assert [(x.origin, n) for x, n in a] == [(x.origin, n) for x, n in b]
    assert all(full_shift().distance(x, x.shifted(n)) < 0.5 for x, n in a)


def test_sample_orbit_parry_frequencies():
    S = golden_mean_shift()
    seq = S.sample_sequence(200_000, seed=0)
    assert S.is_admissible(seq)
    phi = (1 + math.sqrt(5)) / 2
    # Parry measure of the cylinder [1] is 1 / (1 + phi^2)
    assert np.mean(seq == 1) == pytest.approx(1 / (1 + phi ** 2), abs=5e-3)
