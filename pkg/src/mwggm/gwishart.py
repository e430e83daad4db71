"""The G-Wishart distribution ``Wis_G(delta, D)``.

Density on the cone ``P_G`` (Lebesgue measure on the free entries of ``K``)::

    p(K) = det(K) ** ((delta - 2) / 2) * exp(-<K, D> / 2) / I_G(delta, D)

Everything here works in free Cholesky coordinates: ``K = phi^T phi`` with
``phi`` upper triangular, positive diagonal, and its entries outside the
graph filled in by completion.
"""
from __future__ import annotations

import hashlib
import math
from dataclasses import dataclass, field
from functools import cached_property
from typing import Iterable

import numpy as np
from scipy.special import gammaln

from . import kernels
from .graph import Edge, UndirectedGraph, free_elements
from .tensor import inner

ZERO_TOL = 1e-10


def _is_pd(A: np.ndarray) -> bool:
    try:
        np.linalg.cholesky(A)
    except np.linalg.LinAlgError:
        return False
    return True


@dataclass(frozen=True)
class GWishartParams:
    graph: UndirectedGraph
    delta: float
    scale: np.ndarray

    def __post_init__(self) -> None:
        D = np.array(self.scale, dtype=float)
        m = self.graph.n_vertices
        if D.shape != (m, m):
            raise ValueError(f"scale must be {m}x{m}, got {D.shape}")
        if not self.delta > 2:
            raise ValueError(f"delta must exceed 2, got {self.delta}")
        if not np.allclose(D, D.T, rtol=0, atol=1e-12):
            raise ValueError("scale matrix is not symmetric")
        if not _is_pd(D):
            raise ValueError("scale matrix is not positive definite")
        D = 0.5 * (D + D.T)
        D.setflags(write=False)
        object.__setattr__(self, "scale", D)

    def with_(self, *, graph: UndirectedGraph | None = None, delta: float | None = None,
              scale: np.ndarray | None = None) -> "GWishartParams":
        return GWishartParams(graph or self.graph,
                              self.delta if delta is None else delta,
                              self.scale if scale is None else scale)


@dataclass(frozen=True, eq=False)
class CholeskyState:
    """Completed Cholesky factor of a matrix in ``P_G``."""

    graph: UndirectedGraph
    phi: np.ndarray = field(repr=False)

    def __post_init__(self) -> None:
        phi = np.ascontiguousarray(self.phi, dtype=float)
        phi.setflags(write=False)
        object.__setattr__(self, "phi", phi)

    @cached_property
    def K(self) -> np.ndarray:
        K = self.phi.T @ self.phi
        mask = self.graph.adjacency.astype(bool) | np.eye(self.graph.n_vertices, dtype=bool)
        K[~mask] = 0.0
        K.setflags(write=False)
        return K

    @property
    def m(self) -> int:
        return self.graph.n_vertices


def complete_phi(phi: np.ndarray, G: UndirectedGraph) -> np.ndarray:
    """Return a copy of ``phi`` with its bound entries recomputed for ``G``."""
    out = np.array(np.triu(phi), dtype=float, order="C")
    if np.any(np.diag(out) <= 0):
        raise ValueError("diagonal Cholesky entries must be positive")
    kernels.complete_rows(out, np.ascontiguousarray(G.adjacency), 0)
    return out


def complete_cholesky(free_values: dict[Edge, float], G: UndirectedGraph) -> CholeskyState:
    """Build ``phi`` from its free entries (1-based keys over ``nu(G)``)."""
    m = G.n_vertices
    phi = np.zeros((m, m))
    for (i, j) in free_elements(G):
        if (i, j) not in free_values:
            raise ValueError(f"missing free value for {(i, j)}")
        phi[i - 1, j - 1] = free_values[(i, j)]
    extra = set(free_values) - set(free_elements(G))
    if extra:
        raise ValueError(f"values given for non-free positions {sorted(extra)}")
    return CholeskyState(G, complete_phi(phi, G))


def state_from_K(K: np.ndarray, G: UndirectedGraph) -> CholeskyState:
    """Cholesky state of a matrix already in ``P_G``."""
    phi = np.linalg.cholesky(np.asarray(K, dtype=float)).T
    return CholeskyState(G, complete_phi(phi, G))


def in_cone(K: np.ndarray, G: UndirectedGraph, tol: float = ZERO_TOL) -> bool:
    K = np.asarray(K, dtype=float)
    m = G.n_vertices
    if K.shape != (m, m) or not np.allclose(K, K.T, rtol=0, atol=tol):
        return False
    mask = G.adjacency.astype(bool) | np.eye(m, dtype=bool)
    return bool(np.all(np.abs(K[~mask]) <= tol)) and _is_pd(K)


def log_gwishart_density_unnorm(K: np.ndarray, p: GWishartParams) -> float:
    K = np.asarray(K, dtype=float)
    if not in_cone(K, p.graph):
        raise ValueError("K is not a positive definite matrix with the graph's zero pattern")
    _, logdet = np.linalg.slogdet(K)
    return 0.5 * (p.delta - 2.0) * logdet - 0.5 * inner(K, p.scale)


def log_jacobian(state: CholeskyState) -> float:
    """``log J(K -> phi) = m log 2 + sum_i (d_i + 1) log phi_ii``."""
    d = state.graph.upper_degrees
    return state.m * math.log(2.0) + float(np.sum((d + 1) * np.log(np.diag(state.phi))))


def _free_index_arrays(G: UndirectedGraph, frozen: Iterable[Edge] = ()) -> tuple[np.ndarray, np.ndarray]:
    frozen = {tuple(sorted(e)) for e in frozen}
    pairs = [(i - 1, j - 1) for (i, j) in free_elements(G) if (i, j) not in frozen]
    fi = np.array([p[0] for p in pairs], dtype=np.intp)
    fj = np.array([p[1] for p in pairs], dtype=np.intp)
    return fi, fj


def mh_sweep(state: CholeskyState, target: GWishartParams, sd: float, rng: np.random.Generator,
             frozen: Iterable[Edge] = ()) -> tuple[CholeskyState, int, int]:
    """One sweep over the free elements; returns ``(state, accepted, proposed)``."""
    if not sd > 0:
        raise ValueError("step sd must be positive")
    if target.graph != state.graph:
        raise ValueError("target graph differs from the state's graph")
    fi, fj = _free_index_arrays(state.graph, frozen)
    n = len(fi)
    normals = rng.standard_normal(n)
    log_u = np.log(rng.random(n))
    coef = target.delta - 1.0 + state.graph.upper_degrees.astype(float)
    phi = np.array(state.phi, order="C")
    acc = kernels.mh_sweep(phi, np.ascontiguousarray(state.graph.adjacency), fi, fj,
                           np.ascontiguousarray(target.scale), coef, float(sd), normals, log_u)
    return CholeskyState(state.graph, phi), int(acc), n


def mh_update_K(state: CholeskyState, target: GWishartParams, sd: float, rng: np.random.Generator,
                frozen: Iterable[Edge] = ()) -> CholeskyState:
    """Metropolis-within-Gibbs sweep leaving ``Wis_G(delta, D)`` invariant.

    Off-diagonal free entries take a normal random-walk step; diagonal entries
    step on the log scale. Entries listed in ``frozen`` (1-based pairs) are
    left untouched, e.g. ``{(1, 1)}`` to hold ``K_11 = 1``.
    """
    return mh_sweep(state, target, sd, rng, frozen)[0]


def adapt_step(sd: float, accept_rate: float, low: float = 0.30, high: float = 0.45) -> float:
    if accept_rate < low:
        return sd * 0.8
    if accept_rate > high:
        return sd * 1.25
    return sd


# -- normalizing constant ------------------------------------------------------

def _log_I_terms(p: GWishartParams, n_mc: int, rng: np.random.Generator) -> tuple[float, np.ndarray]:
    """Closed-form part and per-draw log weights of the free-element estimator.

    With ``D^{-1} = T^T T`` and ``psi = phi T^{-1}``, the free entries of
    ``psi`` are independent (chi on the diagonal, standard normal on edges)
    and ``I_G`` equals a constant times ``E[exp(-sum_bound psi_ij^2 / 2)]``.
    """
    G = p.graph
    m = G.n_vertices
    delta = p.delta
    d = G.upper_degrees.astype(float)
    deg = np.zeros(m)
    for i, j in G.edges:
        deg[i - 1] += 1
        deg[j - 1] += 1
    T = np.linalg.cholesky(np.linalg.inv(p.scale)).T
    tdiag = np.diag(T)
    dof = delta + d
    log_const = (m * math.log(2.0)
                 + float(np.sum((delta + deg) * np.log(tdiag)))
                 + float(np.sum((dof / 2.0 - 1.0) * math.log(2.0) + gammaln(dof / 2.0)))
                 + 0.5 * len(G.edges) * math.log(2.0 * math.pi))
    adj = G.adjacency
    if len(G.edges) == m * (m - 1) // 2:
        return log_const, np.zeros(n_mc)
    psi = np.zeros((n_mc, m, m))
    phi = np.zeros((n_mc, m, m))
    for i in range(m):
        psi[:, i, i] = np.sqrt(rng.chisquare(dof[i], size=n_mc))
        for j in range(i + 1, m):
            if adj[i, j]:
                psi[:, i, j] = rng.standard_normal(n_mc)
    penalty = np.zeros(n_mc)
    for i in range(m):
        for j in range(i, m):
            if i == j or adj[i, j]:
                phi[:, i, j] = psi[:, i, i:j + 1] @ T[i:j + 1, j]
            else:
                if i == 0:
                    phi[:, i, j] = 0.0
                else:
                    phi[:, i, j] = -np.einsum("nk,nk->n", phi[:, :i, i], phi[:, :i, j]) / phi[:, i, i]
                partial = psi[:, i, i:j] @ T[i:j, j]
                psi[:, i, j] = (phi[:, i, j] - partial) / T[j, j]
                penalty += psi[:, i, j] ** 2
    return log_const, -0.5 * penalty


def estimate_log_I(p: GWishartParams, n_mc: int, rng: np.random.Generator) -> tuple[float, float]:
    """Monte Carlo estimate of ``log I_G(delta, D)`` and its standard error.

    Exact (zero error) for complete graphs, and for empty graphs when ``D``
    is diagonal.
    """
    if n_mc < 1:
        raise ValueError("n_mc must be at least 1")
    log_const, logw = _log_I_terms(p, int(n_mc), rng)
    top = float(np.max(logw))
    w = np.exp(logw - top)
    mean = float(np.mean(w))
    se = float(np.std(w, ddof=1) / (mean * math.sqrt(len(w)))) if len(w) > 1 else float("inf")
    if np.all(logw == 0.0):
        se = 0.0
    return log_const + top + math.log(mean), se


def wishart_log_I(delta: float, D: np.ndarray) -> float:
    """Closed-form ``log I`` for the complete graph (the ordinary Wishart)."""
    D = np.asarray(D, dtype=float)
    m = D.shape[0]
    n = delta + m - 1
    _, logdet = np.linalg.slogdet(D)
    j = np.arange(1, m + 1)
    log_gamma_m = 0.25 * m * (m - 1) * math.log(math.pi) + float(np.sum(gammaln((n - j + 1) / 2.0)))
    return 0.5 * n * m * math.log(2.0) - 0.5 * n * logdet + log_gamma_m


class LogNormalizerCache:
    """Memoised ``log I_G(delta, D)`` estimates.

    Each estimate uses a generator seeded from ``(seed, graph, delta, D)`` so
    cached values do not depend on the order in which they are requested.
    """

    def __init__(self, n_mc: int = 1000, seed: int = 0) -> None:
        self.n_mc = int(n_mc)
        self.seed = int(seed)
        self._store: dict[tuple, tuple[float, float]] = {}

    def _key(self, p: GWishartParams) -> tuple:
        return (p.graph.key(), float(p.delta), p.scale.tobytes())

    def _rng(self, key: tuple) -> np.random.Generator:
        h = hashlib.sha256(repr((self.seed, key[0], key[1])).encode() + key[2]).digest()
        return np.random.Generator(np.random.Philox(int.from_bytes(h[:8], "little")))

    def estimate(self, p: GWishartParams) -> tuple[float, float]:
        key = self._key(p)
        hit = self._store.get(key)
        if hit is None:
            hit = estimate_log_I(p, self.n_mc, self._rng(key))
            self._store[key] = hit
        return hit

    def __call__(self, p: GWishartParams) -> float:
        return self.estimate(p)[0]

    def __len__(self) -> int:
        return len(self._store)


def sample_prior(p: GWishartParams, burn: int, rng: np.random.Generator, sd: float = 0.5) -> np.ndarray:
    """Approximate draw from ``Wis_G(delta, D)`` by ``burn`` Metropolis sweeps from ``K = I``."""
    if burn < 1:
        raise ValueError("burn must be at least 1")
    m = p.graph.n_vertices
    state = CholeskyState(p.graph, np.eye(m))
    for _ in range(burn):
        state = mh_update_K(state, p, sd, rng)
    return np.array(state.K)
