import os
import subprocess
import sys

import numpy as np
import pytest
from hypothesis import given, strategies as st

from cocyclelab import _kernels_py, kernels

backends = kernels.available_backends()
compiled = [b for b in backends if b.BACKEND != "python"]
pytestmark = pytest.mark.skipif(not compiled, reason="compiled extension not built")


def mats(n, m, seed, scale=1.0):
    rng = np.random.default_rng(seed)
    return np.eye(m) + scale * rng.normal(size=(n, m, m))


@given(st.integers(1, 300), st.integers(1, 5), st.integers(0, 2**31), st.booleans())
def test_cumprod_parity(n, m, seed, right):
    A = mats(n, m, seed)
    U1, E1 = _kernels_py.cumprod_scaled(A, right=right)
    U2, E2 = compiled[0].cumprod_scaled(A, right=right)
    np.testing.assert_array_equal(E1, E2)
    np.testing.assert_allclose(U1, U2, rtol=1e-9, atol=1e-12)


@given(st.integers(1, 300), st.integers(1, 5), st.integers(0, 2**31), st.integers(1, 7))
def test_qr_accumulate_parity(n, m, seed, stride):
    A = mats(n, m, seed)
    s1, t1 = _kernels_py.qr_accumulate(A, stride)
    s2, t2 = compiled[0].qr_accumulate(A, stride)
    np.testing.assert_allclose(s1, s2, rtol=1e-9, atol=1e-9)
    np.testing.assert_allclose(t1, t2, rtol=1e-9, atol=1e-9)


@given(st.integers(1, 300), st.integers(1, 5), st.integers(0, 2**31))
def test_power_growth_parity(n, m, seed):
    A = mats(n, m, seed)
    v = np.random.default_rng(seed + 1).normal(size=m)
    g1, t1 = _kernels_py.power_growth(A, v, 3)
    g2, t2 = compiled[0].power_growth(A, v, 3)
    assert g1 == pytest.approx(g2, rel=1e-10, abs=1e-10)
    np.testing.assert_allclose(t1, t2, rtol=1e-10, atol=1e-10)


@given(st.integers(0, 500), st.integers(0, 2**31))
def test_markov_chain_parity(n, seed):
    rng = np.random.default_rng(seed)
    P = rng.random((3, 3))
    cum = np.cumsum(P / P.sum(axis=1, keepdims=True), axis=1)
    u = rng.random(n)
    np.testing.assert_array_equal(_kernels_py.markov_chain(cum, u, 1),
                                  compiled[0].markov_chain(cum, u, 1))


@given(st.integers(1, 2000), st.integers(0, 2**31))
def test_toral_orbit_parity(n, seed):
    x0 = np.random.default_rng(seed).random(2)
    L = np.array([[2.0, 1.0], [1.0, 1.0]])
    a = _kernels_py.toral_orbit(L, x0, n)
    b = compiled[0].toral_orbit(L, x0, n)
    # chaotic: compare the first steps tightly, the rest stays in [0, 1)
    np.testing.assert_allclose(a[:20], b[:20], atol=1e-9)
    assert np.all((b >= 0) & (b < 1))


@given(st.integers(2, 60), st.integers(1, 4), st.integers(0, 2**31))
def test_identity_residual_parity(n, m, seed):
    A = mats(n, m, seed, 0.5)
    U, E = _kernels_py.cumprod_scaled(A)
    p1, w1 = _kernels_py.identity_residual(A, U, E)
    p2, w2 = compiled[0].identity_residual(A, U, E)
    assert max(p1, p2, w1, w2) < 1e-12


def test_degenerate_product_raises():
    A = np.zeros((3, 2, 2))
    for b in backends:
        with pytest.raises(FloatingPointError):
            b.cumprod_scaled(A)


def test_env_var_forces_fallback():
    env = dict(os.environ, COCYCLELAB_PURE_PYTHON="1")
    out = subprocess.run([sys.executable, "-c", "import cocyclelab; print(cocyclelab.BACKEND)"],
                         env=env, capture_output=True, text=True, check=True)
    assert out.stdout.strip() == "python"
    assert kernels.BACKEND == compiled[0].BACKEND
