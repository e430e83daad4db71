"""Time the compiled kernels against the pure-Python fallback.

Usage::

    python benchmarks/bench_kernels.py [--repeat 5]

Each kernel is run on identical inputs under both backends; the outputs are
checked for agreement before timings are reported.
"""
from __future__ import annotations

import argparse
import timeit

import numpy as np

from mwggm import kernels
from mwggm.graph import UndirectedGraph, lattice_adjacency
from mwggm.gwishart import _free_index_arrays, complete_phi


def _graph(m: int, rng: np.random.Generator, p: float = 0.4) -> UndirectedGraph:
    edges = frozenset((i, j) for i in range(1, m + 1) for j in range(i + 1, m + 1) if rng.random() < p)
    return UndirectedGraph(m, edges)


def _spd(m: int, rng: np.random.Generator) -> np.ndarray:
    A = rng.standard_normal((m, m))
    return np.ascontiguousarray(A @ A.T / m + np.eye(m))


def mh_case(m: int, rng: np.random.Generator):
    G = _graph(m, rng)
    phi = np.triu(rng.standard_normal((m, m)), 1) + np.diag(rng.uniform(0.5, 2.0, m))
    phi = complete_phi(phi, G)
    D = _spd(m, rng)
    fi, fj = _free_index_arrays(G)
    coef = 2.0 + G.upper_degrees.astype(float)
    normals = rng.standard_normal(len(fi))
    log_u = np.log(rng.random(len(fi)))
    adj = np.ascontiguousarray(G.adjacency)

    def run(backend):
        work = phi.copy()
        backend.mh_sweep(work, adj, fi, fj, D, coef, 0.5, normals, log_u)
        return work

    return run


def theta_case(mC: int, side: int, mT: int, rng: np.random.Generator):
    W = lattice_adjacency(side, side)
    mS = W.shape[0]
    KS = np.ascontiguousarray(np.diag(W.sum(1) + 0.1) - 0.9 * W)
    KC, KT = _spd(mC, rng), _spd(mT, rng)
    shape = (mC, mS, mT)
    theta = rng.standard_normal(shape)
    mu = rng.standard_normal(mC)
    y = rng.poisson(3.0, shape).astype(float)
    h = rng.uniform(0.5, 2.0, (mS, mT))
    normals = rng.standard_normal(theta.size)
    log_u = np.log(rng.random(theta.size))

    def run(backend):
        work = theta.copy()
        backend.theta_sweep(work, mu, y, h, KC, KS, KT, 0.5, normals, log_u, True)
        return work

    return run


def main(argv=None) -> int:
    ap = argparse.ArgumentParser(description=__doc__.splitlines()[0])
    ap.add_argument("--repeat", type=int, default=5)
    args = ap.parse_args(argv)

    py, cy = kernels.python_backend, kernels.compiled_backend
    if cy is None:
        print("compiled extension not built; nothing to compare")
        return 1

    rng = np.random.default_rng(0)
    cases = [(f"mh_sweep m={m}", mh_case(m, rng)) for m in (5, 10, 20)]
    cases += [(f"theta_sweep {mC}x{s * s}x{mT}", theta_case(mC, s, mT, rng)) for mC, s, mT in ((3, 3, 10), (5, 5, 20))]

    print(f"{'kernel':<28}{'python [ms]':>14}{'cython [ms]':>14}{'speedup':>10}")
    for name, run in cases:
        if not np.allclose(run(py), run(cy), rtol=1e-12, atol=1e-12):
            raise AssertionError(f"{name}: backends disagree")
        times = []
        for backend in (py, cy):
            timer = timeit.Timer(lambda: run(backend))
            n, _ = timer.autorange()
            times.append(min(timer.repeat(args.repeat, n)) / n * 1e3)
        print(f"{name:<28}{times[0]:>14.4f}{times[1]:>14.4f}{times[0] / times[1]:>9.1f}x")
    return 0


if __name__ == "__main__":
    raise SystemExit(main())
