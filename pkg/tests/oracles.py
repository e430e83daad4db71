"""Independent reference computations used by the tests.

Nothing here calls into the sampler code paths it checks: exact G-Wishart
draws by rejection, closed-form normalizing constants for decomposable
graphs, brute-force Gaussian conditioning and a small joint-distribution
(marginal vs successive conditional) harness.
"""
from __future__ import annotations

import itertools
import math
from typing import Callable

import numpy as np
from scipy.special import gammaln, multigammaln


# -- normalizing constants -----------------------------------------------------------

def wishart_log_I(delta: float, D: np.ndarray) -> float:
    """log of the integral of det(K)^{(delta-2)/2} exp(-<K,D>/2) over all pd K."""
    D = np.atleast_2d(D)
    m = D.shape[0]
    nu = delta + m - 1
    sign, logdet = np.linalg.slogdet(D)
    assert sign > 0
    return nu * m / 2 * math.log(2) - nu / 2 * logdet + multigammaln(nu / 2, m)


def empty_graph_log_I(delta: float, D: np.ndarray) -> float:
    d = np.diag(np.atleast_2d(D))
    return float(np.sum(delta / 2 * math.log(2) + gammaln(delta / 2) - delta / 2 * np.log(d)))


def _is_clique(edges: set, vs) -> bool:
    return all((a, b) in edges for a, b in itertools.combinations(sorted(vs), 2))


def decomposable_log_I(n: int, edges, delta: float, D: np.ndarray) -> float:
    """Clique/separator product for a decomposable graph on vertices 1..n.

    Uses a perfect elimination ordering found by brute force (small n only).
    """
    edges = {tuple(sorted(e)) for e in edges}
    for order in itertools.permutations(range(1, n + 1)):
        total = 0.0
        ok = True
        remaining = set(range(1, n + 1))
        for v in order:
            nb = {u for u in remaining if u != v and tuple(sorted((u, v))) in edges}
            if not _is_clique(edges, nb):
                ok = False
                break
            fam = sorted(nb | {v})
            idx = [u - 1 for u in fam]
            total += wishart_log_I(delta, D[np.ix_(idx, idx)])
            if nb:
                sidx = [u - 1 for u in sorted(nb)]
                total -= wishart_log_I(delta, D[np.ix_(sidx, sidx)])
            remaining.discard(v)
        if ok:
            return total
    raise ValueError("graph is not decomposable")


# -- exact G-Wishart draws -------------------------------------------------------------

def gwishart_exact(n: int, edges, delta: float, D: np.ndarray, rng: np.random.Generator,
                   max_tries: int = 100000) -> np.ndarray:
    """Exact draw of K ~ Wis_G(delta, D) by rejection.

    Free entries of psi = phi T^{-1} (with D^{-1} = T^T T, T upper) are drawn
    from their chi / normal proposals; the draw is kept with probability
    exp(-sum of squared bound psi entries / 2).
    """
    edges = {tuple(sorted(e)) for e in edges}
    D = np.atleast_2d(np.asarray(D, dtype=float))
    T = np.linalg.cholesky(np.linalg.inv(D)).T
    up = [sum(1 for j in range(i + 1, n + 1) if (i, j) in edges) for i in range(1, n + 1)]
    for _ in range(max_tries):
        psi = np.zeros((n, n))
        phi = np.zeros((n, n))
        pen = 0.0
        for i in range(n):
            psi[i, i] = math.sqrt(rng.chisquare(delta + up[i]))
            for j in range(i + 1, n):
                if (i + 1, j + 1) in edges:
                    psi[i, j] = rng.standard_normal()
        for i in range(n):
            for j in range(i, n):
                if i == j or (i + 1, j + 1) in edges:
                    phi[i, j] = sum(psi[i, k] * T[k, j] for k in range(i, j + 1))
                else:
                    phi[i, j] = -sum(phi[k, i] * phi[k, j] for k in range(i)) / phi[i, i] if i else 0.0
                    psi[i, j] = (phi[i, j] - sum(psi[i, k] * T[k, j] for k in range(i, j))) / T[j, j]
                    pen += psi[i, j] ** 2
        if math.log(rng.random()) < -0.5 * pen:
            K = phi.T @ phi
            for a in range(n):
                for b in range(a + 1, n):
                    if (a + 1, b + 1) not in edges:
                        K[a, b] = K[b, a] = 0.0
            return K
    raise RuntimeError("rejection sampler did not accept")


def all_graphs(n: int):
    pairs = list(itertools.combinations(range(1, n + 1), 2))
    for mask in range(1 << len(pairs)):
        yield [p for k, p in enumerate(pairs) if mask >> k & 1]


# -- Gaussian conditioning ------------------------------------------------------------------

def condition(mean: np.ndarray, cov: np.ndarray, obs: np.ndarray, values: np.ndarray):
    """Moments of the unobserved block given ``x[obs] = values`` (``obs`` boolean mask)."""
    hid = ~obs
    S_hh = cov[np.ix_(hid, hid)]
    S_ho = cov[np.ix_(hid, obs)]
    S_oo = cov[np.ix_(obs, obs)]
    gain = np.linalg.solve(S_oo, S_ho.T).T
    m = mean[hid] + gain @ (values - mean[obs])
    return m, S_hh - gain @ S_ho.T


def gaussian_logpdf(x: np.ndarray, mean: np.ndarray, cov: np.ndarray) -> float:
    L = np.linalg.cholesky(cov)
    z = np.linalg.solve(L, x - mean)
    return float(-0.5 * z @ z - np.sum(np.log(np.diag(L))) - 0.5 * len(x) * math.log(2 * math.pi))


# -- effective sample size / joint-distribution harness ---------------------------------------

def batch_means_se(x: np.ndarray, n_batches: int = 50) -> float:
    """Standard error of the mean from non-overlapping batch means."""
    x = np.asarray(x, dtype=float)
    b = len(x) // n_batches
    means = x[: b * n_batches].reshape(n_batches, b).mean(axis=1)
    return float(means.std(ddof=1) / math.sqrt(n_batches))


def joint_distribution_test(draw_prior: Callable, draw_data: Callable, sweep: Callable,
                            stats: Callable, n_iter: int, rng: np.random.Generator):
    """Marginal-conditional and successive-conditional statistic traces.

    ``draw_prior(rng) -> params``; ``draw_data(params, rng) -> data``;
    ``sweep(params, data, rng) -> params``; ``stats(params, data) -> dict``.
    """
    marg: dict[str, list[float]] = {}
    succ: dict[str, list[float]] = {}
    for _ in range(n_iter):
        p = draw_prior(rng)
        x = draw_data(p, rng)
        for k, v in stats(p, x).items():
            marg.setdefault(k, []).append(v)
    p = draw_prior(rng)
    x = draw_data(p, rng)
    for _ in range(n_iter):
        p = sweep(p, x, rng)
        x = draw_data(p, rng)
        for k, v in stats(p, x).items():
            succ.setdefault(k, []).append(v)
    return ({k: np.array(v) for k, v in marg.items()}, {k: np.array(v) for k, v in succ.items()})


class JointGaussian:
    """Brute-force joint law of (x_0..x_T, y_1..y_T) with x_t = vec(Theta_t)."""

    def __init__(self, spec, Ks):
        m = int(np.prod(spec.dims))
        s, T = spec.s, spec.T
        K = np.ones((1, 1))
        for Kl in Ks:
            K = np.kron(Kl, K)
        Sigma = np.linalg.inv(K)
        nx = m * s
        ny = m
        n_total = (T + 1) * nx + T * ny
        # stacked noise: e_0, w_1..w_T, nu_1..nu_T
        A = np.zeros((n_total, n_total))
        Q = np.zeros((n_total, n_total))
        mean = np.zeros(n_total)
        xs = lambda t: slice(t * nx, (t + 1) * nx)
        ys = lambda t: slice((T + 1) * nx + (t - 1) * ny, (T + 1) * nx + t * ny)
        Q[xs(0), xs(0)] = np.kron(spec.C0, Sigma)
        A[xs(0), xs(0)] = np.eye(nx)
        mean[xs(0)] = np.ravel(spec.M0, order="F")
        for t in range(1, T + 1):
            G = np.kron(spec.H[t - 1], np.eye(m))
            A[xs(t)] = G @ A[xs(t - 1)]
            A[xs(t), xs(t)] += np.eye(nx)
            mean[xs(t)] = G @ mean[xs(t - 1)]
            Q[xs(t), xs(t)] = np.kron(spec.W[t - 1], Sigma)
            Fm = np.kron(spec.F[t - 1][None, :], np.eye(m))
            A[ys(t)] = Fm @ A[xs(t)]
            A[ys(t), ys(t)] += np.eye(ny)
            mean[ys(t)] = Fm @ mean[xs(t)]
            Q[ys(t), ys(t)] = spec.v[t - 1] * Sigma
        self.mean, self.cov = mean, A @ Q @ A.T
        self.xs, self.ys, self.n, self.Sigma = xs, ys, n_total, Sigma

    def mask(self, *slices):
        out = np.zeros(self.n, dtype=bool)
        for sl in slices:
            out[sl] = True
        return out

    def given(self, target, observed, values):
        """Moments of ``target`` given ``observed = values``."""
        obs = self.mask(*observed)
        mu, cov = condition(self.mean, self.cov, obs, values)
        hid_idx = np.flatnonzero(~obs)
        pick = np.isin(hid_idx, np.flatnonzero(self.mask(target)))
        return mu[pick], cov[np.ix_(pick, pick)]
