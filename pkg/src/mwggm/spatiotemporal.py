"""Hierarchical Poisson model for cancer x area x year counts.

``y[c, s, t] ~ Poisson(h[s, t] exp(theta[c, s, t]))`` with the log-risk array
``theta`` array-normal around ``mu[c]`` under the separable precision
``K_T kron K_S kron K_C``. ``K_C`` carries a free graph, ``K_S`` a CAR-type
G-Wishart prior on the (fixed) neighbourhood graph with autocorrelation
``rho`` on a grid, and ``K_T`` an autoregressive graph of order 1..4.

Internally ``theta`` holds the full log-risk ``mu + effect``.
"""
from __future__ import annotations

import math
from dataclasses import dataclass, field, replace

import numpy as np

from . import gwishart as gw
from . import kernels
from . import multiway as mw
from .graph import (GraphPrior, UndirectedGraph, adjacency_graph, ar_graph, validate_adjacency)
from .sepmean import SeparableMean, update_mu
from .tensor import kron_chain, tucker_product

RHO_GRID = np.round(np.concatenate([np.arange(17) * 0.05, 0.82 + np.arange(5) * 0.02,
                                    0.91 + np.arange(9) * 0.01]), 10)
AR_ORDERS = (1, 2, 3, 4)
C, S, T = 1, 2, 3


def check_no_isolated(W: np.ndarray) -> None:
    deg = np.asarray(W).sum(axis=1)
    isolated = np.flatnonzero(deg == 0)
    if isolated.size:
        raise ValueError(f"area {int(isolated[0]) + 1} has no neighbours")


def car_scale(W: np.ndarray, rho: float, delta: float) -> np.ndarray:
    """``(delta - 2) (E_W - rho W)^{-1}`` with ``E_W`` the diagonal of row sums."""
    W = validate_adjacency(W).astype(float)
    check_no_isolated(W)
    if not 0.0 <= rho < 1.0:
        raise ValueError(f"rho must lie in [0, 1), got {rho}")
    A = np.diag(W.sum(axis=1)) - rho * W
    D = (delta - 2.0) * np.linalg.inv(A)
    return 0.5 * (D + D.T)


def separable_precision(*Ks: np.ndarray) -> np.ndarray:
    """Precision of ``vec(theta)`` (cancer index fastest): ``K_last kron ... kron K_C``."""
    return kron_chain(Ks)


@dataclass(frozen=True)
class SurveillanceData:
    y: np.ndarray
    h: np.ndarray
    W: np.ndarray

    def __post_init__(self) -> None:
        y = np.asarray(self.y)
        if y.ndim != 3:
            raise ValueError("counts must be a cancer x area x year array")
        if np.any(y < 0) or not np.all(np.equal(np.mod(y, 1), 0)):
            raise ValueError("counts must be non-negative integers")
        h = np.asarray(self.h, dtype=float)
        if h.shape != y.shape[1:]:
            raise ValueError(f"population shape {h.shape} does not match counts {y.shape[1:]}")
        if np.any(~(h > 0)):
            s, t = np.argwhere(~(h > 0))[0]
            raise ValueError(f"population at area {s + 1}, year {t + 1} must be positive")
        W = validate_adjacency(self.W)
        if W.shape[0] != y.shape[1]:
            raise ValueError(f"adjacency has {W.shape[0]} areas, counts have {y.shape[1]}")
        if W.shape[0] < 2:
            raise ValueError("at least two areas are needed")
        check_no_isolated(W)
        object.__setattr__(self, "y", np.ascontiguousarray(y, dtype=float))
        object.__setattr__(self, "h", np.ascontiguousarray(h))
        object.__setattr__(self, "W", W)

    @property
    def shape(self) -> tuple[int, int, int]:
        return self.y.shape  # type: ignore[return-value]


def init_hyperparams(data: SurveillanceData) -> tuple[float, float]:
    """``(mu0, omega)``: median and twice the interquartile range of the log rates
    over cells with a positive count."""
    rates = data.y / data.h[None, :, :]
    pos = data.y > 0
    if not pos.any():
        raise ValueError("all counts are zero")
    lr = np.log(rates[pos])
    q1, q3 = np.percentile(lr, [25, 75])
    return float(np.median(lr)), max(2.0 * float(q3 - q1), 1e-6)


# -- model context and state ---------------------------------------------------------

@dataclass
class SurveillanceConfig:
    iters: int = 2000
    burn: int = 500
    thin: int = 1
    seed: int = 0
    sigma_g: float = 0.5
    theta_sd: float = 0.5
    step_sd: float = 0.5
    n_mc: int = 1000
    rho_n_mc: int = 2000
    delta: float = 3.0
    adapt: bool = True
    adapt_every: int = 50

    def __post_init__(self) -> None:
        if self.iters < self.burn or self.burn < 0 or self.thin < 1:
            raise ValueError("need 0 <= burn <= iters and thin >= 1")
        for name in ("sigma_g", "theta_sd", "step_sd"):
            if not getattr(self, name) > 0:
                raise ValueError(f"{name} must be positive")
        if self.delta <= 2:
            raise ValueError("delta must exceed 2")


class SurveillanceModel:
    """Fixed quantities of a fit: data, hyperparameters and normalizing-constant caches."""

    def __init__(self, data: SurveillanceData, delta: float = 3.0, mu0: float | None = None,
                 omega: float | None = None, n_mc: int = 1000, rho_n_mc: int = 2000,
                 seed: int = 0, cancer_prior: GraphPrior = GraphPrior()) -> None:
        self.data = data
        mC, mS, mT = data.shape
        if mT <= 4:
            raise ValueError("need more than 4 years for the autoregressive graph family")
        if mu0 is None or omega is None:
            m0, om = init_hyperparams(data)
            mu0 = m0 if mu0 is None else mu0
            omega = om if omega is None else omega
        self.delta = float(delta)
        self.mu0 = float(mu0)
        self.omega = float(omega)
        self.cancer_prior = cancer_prior
        self.space_graph = adjacency_graph(data.W)
        Wf = data.W.astype(float)
        E = np.diag(Wf.sum(axis=1))
        for rho in RHO_GRID:
            if np.linalg.eigvalsh(E - rho * Wf)[0] <= 0:
                raise ValueError(f"E_W - rho W is not positive definite at rho={rho}")
        self.car_scales = [car_scale(data.W, float(r), self.delta) for r in RHO_GRID]
        rho_cache = gw.LogNormalizerCache(rho_n_mc, seed)
        self.rho_log_I = np.array([rho_cache(gw.GWishartParams(self.space_graph, self.delta, D))
                                   for D in self.car_scales])
        self.log_I = gw.LogNormalizerCache(n_mc, seed)
        self.ar_graphs = {q: ar_graph(mT, q) for q in AR_ORDERS}

    @property
    def shape(self) -> tuple[int, int, int]:
        return self.data.shape

    def separable_precision(self, state: "SurveillanceState") -> np.ndarray:
        return separable_precision(*state.mw.Ks())

    def mean_prior(self, mu: np.ndarray) -> SeparableMean:
        mC, mS, mT = self.shape
        return SeparableMean((mu, np.zeros(mS), np.zeros(mT)),
                             (np.full(mC, self.mu0), np.zeros(mS), np.zeros(mT)),
                             (np.eye(mC) / self.omega ** 2, np.eye(mS), np.eye(mT)))

    def rho_log_weights(self, z_S: float, K_S: np.ndarray) -> np.ndarray:
        quad = np.array([float(np.vdot(K_S, D)) for D in self.car_scales])
        return -0.5 * z_S * quad - self.rho_log_I


@dataclass(frozen=True)
class SurveillanceState:
    mu: np.ndarray
    theta: np.ndarray
    mw: mw.MultiwayState
    rho_index: int
    ar_order: int
    theta_sd: float = 0.5

    @property
    def rho(self) -> float:
        return float(RHO_GRID[self.rho_index])

    def effects(self) -> np.ndarray:
        return self.theta - self.mu[:, None, None]


def initial_state(model: SurveillanceModel, step_sd: float = 0.5, theta_sd: float = 0.5,
                  rho_index: int = 10, ar_order: int = 1) -> SurveillanceState:
    mC, mS, mT = model.shape
    y, h = model.data.y, model.data.h
    theta = np.log((y + 0.5) / h[None, :, :])
    mu = np.full(mC, model.mu0)
    d = model.delta
    dims = (
        mw.DimensionState(gw.CholeskyState(UndirectedGraph.empty(mC), np.eye(mC)), d, np.eye(mC), 1.0,
                          False, model.cancer_prior, "free", step_sd),
        mw.DimensionState(gw.CholeskyState(model.space_graph, np.eye(mS)), d,
                          model.car_scales[rho_index], 1.0, True, GraphPrior(), "fixed", step_sd),
        mw.DimensionState(gw.CholeskyState(model.ar_graphs[ar_order], np.eye(mT)), d, np.eye(mT), 1.0,
                          True, GraphPrior(), "ar", step_sd),
    )
    return SurveillanceState(mu, np.ascontiguousarray(theta), mw.MultiwayState(dims), rho_index,
                             ar_order, theta_sd)


# -- updates -----------------------------------------------------------------------------

def theta_row_conditional(state: SurveillanceState, i_S: int, i_T: int) -> tuple[np.ndarray, np.ndarray]:
    """Mean ``M_i`` and precision ``V_i`` of the log-risk row at area ``i_S``, year ``i_T`` (1-based)."""
    K_C, K_S, K_T = state.mw.Ks()
    s, t = i_S - 1, i_T - 1
    e = state.effects()
    kss = K_S[s, s] * K_T[t, t]
    U = np.einsum("j,cjk,k->c", K_S[s], e, K_T[t]) - kss * e[:, s, t]
    return state.mu - U / kss, kss * K_C


def update_theta_row(state: SurveillanceState, data: SurveillanceData, i_S: int, i_T: int,
                     sd: float, rng: np.random.Generator, use_likelihood: bool = True,
                     normals: np.ndarray | None = None, log_u: np.ndarray | None = None
                     ) -> tuple[SurveillanceState, int]:
    """Metropolis updates of ``theta[:, i_S, i_T]``, one cancer at a time.

    Returns the new state and the number of accepted proposals.
    """
    if not sd > 0:
        raise ValueError("proposal sd must be positive")
    mC = state.theta.shape[0]
    M, V = theta_row_conditional(state, i_S, i_T)
    s, t = i_S - 1, i_T - 1
    normals = rng.standard_normal(mC) if normals is None else normals
    log_u = np.log(rng.random(mC)) if log_u is None else log_u
    theta = np.array(state.theta)
    row = theta[:, s, t].copy()
    accepted = 0
    for c in range(mC):
        x = row[c]
        g = x + sd * normals[c]
        new = row.copy()
        new[c] = g
        logr = -0.5 * ((new - M) @ V @ (new - M) - (row - M) @ V @ (row - M))
        if use_likelihood:
            if g > 700.0:
                logr = -math.inf
            else:
                logr += data.y[c, s, t] * (g - x) - data.h[s, t] * (math.exp(g) - math.exp(x))
        if log_u[c] < logr:
            row = new
            accepted += 1
    theta[:, s, t] = row
    return replace(state, theta=theta), accepted


def update_theta(state: SurveillanceState, data: SurveillanceData, rng: np.random.Generator,
                 use_likelihood: bool = True) -> tuple[SurveillanceState, int, int]:
    """Sweep over all rows (area fastest, then year) using the compiled kernel."""
    mC, mS, mT = state.theta.shape
    n = mC * mS * mT
    normals = rng.standard_normal(n)
    log_u = np.log(rng.random(n))
    theta = np.array(state.theta, order="C")
    K_C, K_S, K_T = (np.ascontiguousarray(K) for K in state.mw.Ks())
    acc = kernels.theta_sweep(theta, np.ascontiguousarray(state.mu), data.y, data.h, K_C, K_S, K_T,
                              float(state.theta_sd), normals, log_u, bool(use_likelihood))
    return replace(state, theta=theta), int(acc), n


def update_mean(state: SurveillanceState, model: SurveillanceModel,
                rng: np.random.Generator) -> SurveillanceState:
    prior = model.mean_prior(state.mu)
    new = update_mu(prior, C, state.theta, state.mw.Ks(), rng)
    return replace(state, mu=new.mu[0])


def update_rho(state: SurveillanceState, model: SurveillanceModel,
               rng: np.random.Generator) -> SurveillanceState:
    """Discrete Gibbs draw of ``rho`` over the grid."""
    dim = state.mw[S]
    logw = model.rho_log_weights(dim.z, dim.K)
    p = np.exp(logw - logw.max())
    p /= p.sum()
    k = int(np.searchsorted(np.cumsum(p), rng.random() * 1.0, side="right"))
    k = min(k, len(RHO_GRID) - 1)
    new_dim = replace(dim, D=model.car_scales[k])
    return replace(state, rho_index=k, mw=state.mw.replace_dim(S, new_dim))


def _order_move_probs(q: int) -> dict[int, float]:
    if q == AR_ORDERS[0]:
        return {q + 1: 1.0}
    if q == AR_ORDERS[-1]:
        return {q - 1: 1.0}
    return {q - 1: 0.5, q + 1: 0.5}


def update_temporal_graph(state: SurveillanceState, model: SurveillanceModel, S_T: np.ndarray,
                          sigma_g: float, rng: np.random.Generator,
                          stats: mw.SweepStats | None = None) -> SurveillanceState:
    """Reversible jump between neighbouring autoregressive orders.

    Moving up adds every lag-``q+1`` edge at once; each new free entry is drawn
    around its completed value. Moving down drops them and re-completes.
    """
    q = state.ar_order
    probs = _order_move_probs(q)
    targets = sorted(probs)
    q_new = targets[0] if len(targets) == 1 or rng.random() < probs[targets[0]] else targets[1]
    if q_new not in AR_ORDERS:
        return state
    dim = state.mw[T]
    G_new = model.ar_graphs[q_new]
    is_add = q_new > q
    lag = max(q, q_new)
    changed = [(t, t + lag) for t in range(1, dim.m - lag + 1)]
    if is_add:
        phi_new = mw.propose_entries(dim, G_new, changed, sigma_g, rng)
    else:
        phi_new = gw.complete_phi(dim.chol.phi, G_new)
    log_r = mw.graph_jump_log_ratio(dim, phi_new, G_new, changed, is_add, S_T, sigma_g, model.log_I)
    log_r += math.log(_order_move_probs(q_new)[q]) - math.log(probs[q_new])
    accept = math.log(rng.random()) < log_r
    if stats is not None:
        stats.add("G_T", accept, 1)
    if not accept:
        return state
    new_dim = replace(dim, chol=gw.CholeskyState(G_new, phi_new))
    return replace(state, ar_order=q_new, mw=state.mw.replace_dim(T, new_dim))


def surveillance_sweep(state: SurveillanceState, model: SurveillanceModel, rng: np.random.Generator,
                       sigma_g: float, stats: mw.SweepStats | None = None,
                       use_likelihood: bool = True, data: SurveillanceData | None = None
                       ) -> SurveillanceState:
    """One sweep; ``data`` overrides the model's counts (used when resimulating)."""
    data = model.data if data is None else data
    state, acc, n = update_theta(state, data, rng, use_likelihood)
    if stats is not None:
        stats.add("theta", acc, n)
    state = update_mean(state, model, rng)
    effects = state.effects()[..., None]
    S_mats = {}
    for l in (C, S, T):
        S_mats[l] = mw.compute_S_l(effects, state.mw, l)
        state = replace(state, mw=mw.gibbs_update_K(state.mw, effects, l, rng, S=S_mats[l], stats=stats))
    if model.shape[0] > 1:
        state = replace(state, mw=mw.rj_edge_update(state.mw, effects, C, sigma_g, rng, model.log_I,
                                                    S=S_mats[C], stats=stats))
    state = update_temporal_graph(state, model, S_mats[T], sigma_g, rng, stats)
    state = update_rho(state, model, rng)
    for l in (S, T):
        state = replace(state, mw=mw.gibbs_update_z(state.mw, l, rng))
    return state


# -- driver ---------------------------------------------------------------------------------

@dataclass
class SurveillanceSummary:
    n_samples: int
    risk_mean: np.ndarray
    risk_sd: np.ndarray
    cancer_edge_probs: np.ndarray
    rho_posterior: np.ndarray
    ar_order_posterior: np.ndarray
    rho_samples: np.ndarray
    ar_order_samples: np.ndarray
    acceptance: dict[str, float]
    traces: dict[str, np.ndarray] = field(default_factory=dict)
    empty: bool = False

    @property
    def rho_median(self) -> float:
        if not self.n_samples:
            return float("nan")
        return float(np.quantile(self.rho_samples, 0.5, method="inverted_cdf"))

    @property
    def modal_ar_order(self) -> int:
        return int(AR_ORDERS[int(np.argmax(self.ar_order_posterior))])


def fit_surveillance(data: SurveillanceData, config: SurveillanceConfig,
                     rng: np.random.Generator | None = None,
                     model: SurveillanceModel | None = None) -> SurveillanceSummary:
    rng = rng if rng is not None else np.random.Generator(np.random.Philox(config.seed))
    model = model or SurveillanceModel(data, config.delta, n_mc=config.n_mc, rho_n_mc=config.rho_n_mc,
                                       seed=config.seed)
    state = initial_state(model, config.step_sd, config.theta_sd)
    mC, mS, mT = data.shape
    window, stats = mw.SweepStats(), mw.SweepStats()
    risk_sum = np.zeros(data.shape)
    risk_sq = np.zeros(data.shape)
    edge_sum = np.zeros((mC, mC))
    rho_rec, q_rec, mu_rec, zs_rec, zt_rec = [], [], [], [], []
    for it in range(config.iters):
        burning = it < config.burn
        state = surveillance_sweep(state, model, rng, config.sigma_g, window if burning else stats)
        if burning and config.adapt and (it + 1) % config.adapt_every == 0:
            state = replace(state, mw=mw.adapt_steps(state.mw, window),
                            theta_sd=gw.adapt_step(state.theta_sd, window.rate("theta")))
            window.reset()
        if not burning and (it - config.burn) % config.thin == 0:
            risk = np.exp(state.theta)
            risk_sum += risk
            risk_sq += risk * risk
            edge_sum += state.mw[C].graph.adjacency
            rho_rec.append(state.rho)
            q_rec.append(state.ar_order)
            mu_rec.append(np.array(state.mu))
            zs_rec.append(state.mw[S].z)
            zt_rec.append(state.mw[T].z)
    n = len(rho_rec)
    rho_arr = np.array(rho_rec, dtype=float)
    q_arr = np.array(q_rec, dtype=int)
    if n:
        risk_mean = risk_sum / n
        risk_sd = np.sqrt(np.maximum(risk_sq / n - risk_mean ** 2, 0.0))
        rho_post = np.array([(rho_arr == r).mean() for r in RHO_GRID])
        q_post = np.array([(q_arr == q).mean() for q in AR_ORDERS])
        edges = edge_sum / n
    else:
        risk_mean = np.full(data.shape, np.nan)
        risk_sd = np.full(data.shape, np.nan)
        rho_post = np.zeros(len(RHO_GRID))
        q_post = np.zeros(len(AR_ORDERS))
        edges = np.zeros((mC, mC))
    mu_arr = np.array(mu_rec).reshape(n, mC)
    traces = {"rho": rho_arr, "ar_order": q_arr.astype(float), "z_S": np.array(zs_rec),
              "z_T": np.array(zt_rec)}
    for c in range(mC):
        traces[f"mu[{c + 1}]"] = mu_arr[:, c]
    return SurveillanceSummary(n, risk_mean, risk_sd, edges, rho_post, q_post, rho_arr, q_arr,
                               stats.rates(), traces, empty=n == 0)


# -- simulation ---------------------------------------------------------------------------

def ar_precision(m_T: int, coefs: tuple[float, ...], innovation_var: float = 1.0) -> np.ndarray:
    """Precision of ``m_T`` consecutive values of a causal AR(p) process started
    from zeros: ``B^T B / var`` with ``B`` the banded differencing matrix."""
    B = np.eye(m_T)
    for k, a in enumerate(coefs, start=1):
        B -= a * np.eye(m_T, k=-k)
    return B.T @ B / innovation_var


def simulate_surveillance(W: np.ndarray, m_C: int, m_T: int, rng: np.random.Generator,
                          K_C: np.ndarray | None = None, rho: float = 0.9,
                          ar_coefs: tuple[float, ...] = (0.3, 0.5), mu: np.ndarray | None = None,
                          population: float = 1e4) -> tuple[SurveillanceData, dict]:
    """Draw counts from the model with CAR spatial and AR temporal precisions."""
    W = validate_adjacency(W)
    check_no_isolated(W)
    mS = W.shape[0]
    Wf = W.astype(float)
    K_S = np.diag(Wf.sum(axis=1)) - rho * Wf
    K_S = K_S / K_S[0, 0]
    K_T = ar_precision(m_T, ar_coefs)
    K_T = K_T / K_T[0, 0]
    K_C = np.eye(m_C) if K_C is None else np.asarray(K_C, dtype=float)
    mu = np.full(m_C, -5.0) if mu is None else np.asarray(mu, dtype=float)
    Z = rng.standard_normal((m_C, mS, m_T))
    factors = [np.linalg.cholesky(np.linalg.inv(K)) for K in (K_C, K_S, K_T)]
    theta = mu[:, None, None] + tucker_product(Z, factors)
    h = np.full((mS, m_T), float(population))
    y = rng.poisson(h[None] * np.exp(theta))
    truth = {"theta": theta, "K_C": K_C, "K_S": K_S, "K_T": K_T, "mu": mu, "rho": rho,
             "ar_order": len(ar_coefs)}
    return SurveillanceData(y, h, W), truth
