"""The compiled kernels and the pure-Python fallback must agree draw for draw."""
import subprocess
import sys

import numpy as np
import pytest
from hypothesis import given, settings, strategies as hst

from mwggm import kernels
from mwggm.gwishart import _free_index_arrays, complete_phi
from mwggm.graph import UndirectedGraph

py = kernels.python_backend
cy = kernels.compiled_backend
needs_compiled = pytest.mark.skipif(cy is None, reason="compiled extension not built")


def _random_graph(rng, m, p=0.5):
    return UndirectedGraph(m, frozenset((i, j) for i in range(1, m + 1) for j in range(i + 1, m + 1)
                                        if rng.random() < p))


def _random_phi(rng, G):
    m = G.n_vertices
    phi = np.triu(rng.standard_normal((m, m)), 1) + np.diag(rng.uniform(0.5, 2.0, m))
    return complete_phi(phi, G)


def test_selection():
    assert kernels.BACKEND in ("cython", "python")
    assert kernels.complete_rows is (cy or py).complete_rows


def test_environment_variable_forces_fallback():
    code = "import mwggm.kernels as k; print(k.BACKEND, k.compiled_backend)"
    out = subprocess.run([sys.executable, "-c", code], env={"MWGGM_PURE_PYTHON": "1", "PATH": ""},
                         capture_output=True, text=True, check=True).stdout.split()
    assert out == ["python", "None"]


@needs_compiled
@settings(max_examples=40, deadline=None)
@given(m=hst.integers(1, 7), seed=hst.integers(0, 2 ** 32 - 1), start=hst.integers(0, 6))
def test_complete_rows_agree(m, seed, start):
    rng = np.random.default_rng(seed)
    G = _random_graph(rng, m)
    adj = np.ascontiguousarray(G.adjacency)
    phi = np.triu(rng.standard_normal((m, m))) + np.diag(rng.uniform(0.5, 2.0, m))
    a, b = phi.copy(), phi.copy()
    py.complete_rows(a, adj, min(start, m))
    cy.complete_rows(b, adj, min(start, m))
    assert np.allclose(a, b, rtol=1e-13, atol=1e-13)


@needs_compiled
@settings(max_examples=40, deadline=None)
@given(m=hst.integers(1, 7), seed=hst.integers(0, 2 ** 32 - 1))
def test_mh_sweep_agrees(m, seed):
    rng = np.random.default_rng(seed)
    G = _random_graph(rng, m)
    phi = _random_phi(rng, G)
    A = rng.standard_normal((m, m))
    D = np.ascontiguousarray(A @ A.T + np.eye(m))
    fi, fj = _free_index_arrays(G)
    coef = 2.0 + G.upper_degrees.astype(float)
    normals = rng.standard_normal(len(fi))
    log_u = np.log(rng.random(len(fi)))
    adj = np.ascontiguousarray(G.adjacency)
    a, b = phi.copy(), phi.copy()
    acc_a = py.mh_sweep(a, adj, fi, fj, D, coef, 0.7, normals, log_u)
    acc_b = cy.mh_sweep(b, adj, fi, fj, D, coef, 0.7, normals, log_u)
    assert acc_a == acc_b
    assert np.allclose(a, b, rtol=1e-12, atol=1e-12)
    assert abs(py.row_quad(a, D, 0) - cy.row_quad(b, D, 0)) < 1e-9


@needs_compiled
@pytest.mark.parametrize("use_likelihood", [True, False])
@pytest.mark.parametrize("shape", [(1, 2, 3), (3, 2, 5), (2, 4, 4)])
def test_theta_sweep_agrees(shape, use_likelihood):
    rng = np.random.default_rng(sum(shape) + use_likelihood)
    mC, mS, mT = shape

    def spd(m):
        A = rng.standard_normal((m, m))
        return np.ascontiguousarray(A @ A.T / m + np.eye(m))

    KC, KS, KT = spd(mC), spd(mS), spd(mT)
    KS[0, -1] = KS[-1, 0] = 0.0  # exercise the sparsity shortcut
    theta = rng.standard_normal(shape)
    mu = rng.standard_normal(mC)
    y = rng.poisson(2.0, shape).astype(float)
    h = rng.uniform(0.5, 2.0, (mS, mT))
    n = theta.size
    normals = rng.standard_normal(n)
    log_u = np.log(rng.random(n))
    a, b = theta.copy(), theta.copy()
    acc_a = py.theta_sweep(a, mu, y, h, KC, KS, KT, 0.8, normals, log_u, use_likelihood)
    acc_b = cy.theta_sweep(b, mu, y, h, KC, KS, KT, 0.8, normals, log_u, use_likelihood)
    assert acc_a == acc_b and 0 < acc_a < n
    assert np.allclose(a, b, rtol=1e-12, atol=1e-12)


def test_theta_sweep_rejects_overflowing_proposals():
    theta = np.full((1, 1, 1), 699.9)
    for backend in filter(None, (py, cy)):
        t = theta.copy()
        acc = backend.theta_sweep(t, np.zeros(1), np.zeros((1, 1, 1)), np.ones((1, 1)), np.eye(1), np.eye(1),
                                  np.eye(1), 1.0, np.array([1.0]), np.array([-np.inf]), True)
        assert acc == 0 and t[0, 0, 0] == 699.9
