"""The numba and numpy kernel paths must agree."""

from __future__ import annotations

import os
import subprocess
import sys

import numpy as np
import pytest

from budgetgraph import _kernels as K

needs_numba = pytest.mark.skipif(not K.HAVE_NUMBA, reason="numba not installed")


@needs_numba
def test_success_loss_parity(rng):
    f = rng.normal(0, 3, (500, 3))
    y = rng.integers(0, 2, (500, 3)).astype(float)
    for lam, m in [(0.0, 1.0), (0.5, 1.0), (2.0, 0.3)]:
        l1, g1 = K._np_success_loss_grad(f, y, lam, m)
        l2, g2 = K._nb_success_loss_grad(f, y, lam, m)
        np.testing.assert_allclose(l1, l2, rtol=1e-12, atol=1e-12)
        np.testing.assert_allclose(g1, g2, rtol=1e-12, atol=1e-12)


@needs_numba
def test_ordinal_loss_parity(rng):
    g = rng.normal(0, 3, (500, 2))
    t = rng.integers(0, 3, 500)
    w = np.array([1.0, 1.5, 3.0])
    l1, g1 = K._np_ordinal_loss_grad(g, t, w)
    l2, g2 = K._nb_ordinal_loss_grad(g, t, w)
    np.testing.assert_allclose(l1, l2, rtol=1e-12, atol=1e-12)
    np.testing.assert_allclose(g1, g2, rtol=1e-12, atol=1e-12)


@needs_numba
def test_masked_argmax_parity(rng):
    n = 5000
    dist = rng.dirichlet(np.ones(3), n)
    dist[::7] = np.round(dist[::7], 1)  # inject ties
    est = rng.choice([50.0, 100.0, 400.0, 3000.0], (n, 3))
    budget = rng.choice([10.0, 60.0, 100.0, 500.0, 1e9], n)
    a1, f1 = K._np_masked_argmax(dist, est, budget)
    a2, f2 = K._nb_masked_argmax(dist, est, budget)
    assert np.array_equal(a1, a2) and np.array_equal(f1, f2)


@needs_numba
def test_average_ranks_parity(rng):
    for _ in range(50):
        x = rng.integers(0, 10, rng.integers(1, 40)).astype(float)
        np.testing.assert_array_equal(K._np_average_ranks(x), K._nb_average_ranks(x))


def test_average_ranks_ties():
    np.testing.assert_array_equal(K.average_ranks(np.array([10.0, 20.0, 10.0, 30.0])),
                                  [1.5, 3.0, 1.5, 4.0])


def test_bce_clamp_is_finite():
    loss, grad = K.success_loss_grad(np.array([[800.0, -800.0, 0.0]]),
                                     np.array([[0.0, 1.0, 1.0]]), 0.0, 1.0)
    assert np.isfinite(loss).all() and np.isfinite(grad).all()
    assert loss[0] > 50


def test_env_flag_selects_numpy_path():
    code = "from budgetgraph import _kernels as K; print(K.USE_NUMBA)"
    env = dict(os.environ, BUDGETGRAPH_DISABLE_NUMBA="1")
    out = subprocess.run([sys.executable, "-c", code], env=env, capture_output=True,
                         text=True, check=True)
    assert out.stdout.strip() == "False"
    env["BUDGETGRAPH_DISABLE_NUMBA"] = "0"
    out = subprocess.run([sys.executable, "-c", code], env=env, capture_output=True,
                         text=True, check=True)
    assert out.stdout.strip() == str(K.HAVE_NUMBA)
