"""Multi-way Gaussian graphical models: array-normal likelihood with a
separable precision ``K_L kron ... kron K_1``, G-Wishart priors per
dimension, and the Metropolis/Gibbs/reversible-jump sampler over
``(K_l, G_l, z_l)``.

Data are stored as one ``(L+1)``-dimensional array whose last axis indexes
the ``n`` independent samples. Dimension indices ``l`` are 1-based.
"""
from __future__ import annotations

import math
from collections import defaultdict
from dataclasses import dataclass, field, replace
from typing import Callable, Sequence

import numpy as np

from . import gwishart as gw
from .graph import GraphPrior, UndirectedGraph, free_elements, log_graph_prior, neighborhoods
from .tensor import inner, mode_matricize, tucker_product

LOG_SQRT_2PI = 0.5 * math.log(2.0 * math.pi)


# -- densities -------------------------------------------------------------------

def _chol_pd(K: np.ndarray) -> np.ndarray:
    try:
        return np.linalg.cholesky(K)
    except np.linalg.LinAlgError as exc:
        raise ValueError("precision matrix is not positive definite") from exc


def log_array_normal(X: np.ndarray, Ks: Sequence[np.ndarray]) -> float:
    """Log density of the mean-zero array normal with precisions ``Ks``."""
    X = np.asarray(X, dtype=float)
    if X.ndim != len(Ks):
        X = X.reshape(tuple(np.shape(K)[0] for K in Ks), order="F")
    m = X.size
    total = -0.5 * m * math.log(2.0 * math.pi)
    for K, ml in zip(Ks, X.shape):
        L = _chol_pd(np.atleast_2d(K))
        total += 0.5 * m / ml * 2.0 * float(np.sum(np.log(np.diag(L))))
    return total - 0.5 * inner(X, tucker_product(X, [np.atleast_2d(K) for K in Ks]))


# -- state -------------------------------------------------------------------------

@dataclass(frozen=True)
class DimensionState:
    """Per-dimension sampler state: ``K_l`` (via its Cholesky state), ``z_l`` and hyperparameters.

    ``graph_mode`` is ``"free"`` (reversible-jump over all graphs) or
    ``"fixed"``; models with a restricted graph family run their own moves.
    """

    chol: gw.CholeskyState
    delta: float = 3.0
    D: np.ndarray | None = None
    z: float = 1.0
    constrained: bool = False
    graph_prior: GraphPrior = GraphPrior()
    graph_mode: str = "free"
    step_sd: float = 0.5

    def __post_init__(self) -> None:
        m = self.chol.m
        D = np.eye(m) if self.D is None else np.array(self.D, dtype=float)
        D.setflags(write=False)
        object.__setattr__(self, "D", D)
        if self.constrained and self.chol.phi[0, 0] != 1.0:
            raise ValueError("constrained dimension needs (phi)_11 == 1")

    @property
    def graph(self) -> UndirectedGraph:
        return self.chol.graph

    @property
    def K(self) -> np.ndarray:
        return self.chol.K

    @property
    def m(self) -> int:
        return self.chol.m

    @property
    def prior(self) -> gw.GWishartParams:
        return gw.GWishartParams(self.graph, self.delta, self.D)

    @property
    def frozen(self) -> tuple:
        return ((1, 1),) if self.constrained else ()


@dataclass(frozen=True)
class MultiwayState:
    dims: tuple[DimensionState, ...]

    @property
    def L(self) -> int:
        return len(self.dims)

    @property
    def shape(self) -> tuple[int, ...]:
        return tuple(d.m for d in self.dims)

    def __getitem__(self, l: int) -> DimensionState:
        return self.dims[l - 1]

    def replace_dim(self, l: int, dim: DimensionState) -> "MultiwayState":
        dims = list(self.dims)
        dims[l - 1] = dim
        return MultiwayState(tuple(dims))

    def Ks(self) -> list[np.ndarray]:
        return [d.K for d in self.dims]


def init_state(shape: Sequence[int], delta: float | Sequence[float] = 3.0,
               D: Sequence[np.ndarray | None] | None = None,
               graphs: Sequence[UndirectedGraph | None] | None = None,
               graph_prior: GraphPrior = GraphPrior(), step_sd: float = 0.5) -> MultiwayState:
    """Start every ``K_l`` at the identity; ``z_l = 1``; empty graphs unless given."""
    L = len(shape)
    deltas = [delta] * L if np.isscalar(delta) else list(delta)
    Ds = list(D) if D is not None else [None] * L
    gs = list(graphs) if graphs is not None else [None] * L
    dims = []
    for l, m in enumerate(shape, start=1):
        G = gs[l - 1] or UndirectedGraph.empty(m)
        chol = gw.CholeskyState(G, np.eye(m))
        dims.append(DimensionState(chol, float(deltas[l - 1]), Ds[l - 1], 1.0, l >= 2, graph_prior,
                                   "free", step_sd))
    return MultiwayState(tuple(dims))


class SweepStats:
    """Accept/propose counters keyed by move name."""

    def __init__(self) -> None:
        self.accepted: dict[str, int] = defaultdict(int)
        self.proposed: dict[str, int] = defaultdict(int)

    def add(self, name: str, accepted: int, proposed: int) -> None:
        self.accepted[name] += int(accepted)
        self.proposed[name] += int(proposed)

    def rate(self, name: str) -> float:
        p = self.proposed.get(name, 0)
        return self.accepted.get(name, 0) / p if p else float("nan")

    def rates(self) -> dict[str, float]:
        return {k: self.rate(k) for k in sorted(self.proposed)}

    def reset(self) -> None:
        self.accepted.clear()
        self.proposed.clear()


# -- conditional pieces --------------------------------------------------------------

def _n_samples(data: np.ndarray | None) -> int:
    return 0 if data is None else int(data.shape[-1])


def compute_S_l(data: np.ndarray | None, state: MultiwayState, l: int) -> np.ndarray:
    """``S_l = D^[l]_(l) D^[l]_(l)^T`` where ``D^[l]`` rotates every mode but ``l`` by ``phi_k``."""
    m_l = state[l].m
    if data is None or data.shape[-1] == 0:
        return np.zeros((m_l, m_l))
    L = state.L
    if data.shape[:L] != state.shape:
        raise ValueError(f"data dims {data.shape[:L]} do not match state dims {state.shape}")
    mats = [None if k == l else state[k].chol.phi for k in range(1, L + 1)] + [None]
    Dl = mode_matricize(tucker_product(data, mats), l)
    with np.errstate(over="ignore", invalid="ignore"):
        S = Dl @ Dl.T
    if not np.all(np.isfinite(S)):
        raise FloatingPointError(f"scatter matrix S_{l} is not finite")
    return 0.5 * (S + S.T)


def full_quadratic_form(data: np.ndarray, state: MultiwayState) -> float:
    """``|| D x {phi_1, ..., phi_L, I_n} ||``; equals ``<K_l, S_l>`` for every ``l``."""
    Y = tucker_product(data, [d.chol.phi for d in state.dims] + [None])
    return inner(Y, Y)


def conditional_K_params(state: MultiwayState, l: int, S: np.ndarray, n: int) -> gw.GWishartParams:
    dim = state[l]
    m = int(np.prod(state.shape))
    return gw.GWishartParams(dim.graph, m * n / dim.m + dim.delta, S + dim.z * dim.D)


def gibbs_update_K(state: MultiwayState, data: np.ndarray | None, l: int, rng: np.random.Generator,
                   S: np.ndarray | None = None, stats: SweepStats | None = None) -> MultiwayState:
    """Metropolis sweep for ``K_l | rest ~ Wis_{G_l}(mn/m_l + delta_l, S_l + z_l D_l)``."""
    dim = state[l]
    if S is None:
        S = compute_S_l(data, state, l)
    target = conditional_K_params(state, l, S, _n_samples(data))
    chol, acc, prop = gw.mh_sweep(dim.chol, target, dim.step_sd, rng, dim.frozen)
    if stats is not None:
        stats.add(f"K{l}", acc, prop)
    return state.replace_dim(l, replace(dim, chol=chol))


def gibbs_update_z(state: MultiwayState, l: int, rng: np.random.Generator) -> MultiwayState:
    """Exact Gamma draw of the auxiliary scale ``z_l`` (rate parametrisation)."""
    if l < 2:
        raise ValueError("z_1 is fixed at 1")
    dim = state[l]
    shape = dim.m * (dim.delta - 2.0) / 2.0 + len(free_elements(dim.graph))
    rate = 0.5 * inner(dim.K, dim.D)
    if not rate > 0:
        raise ValueError("<K_l, D_l> must be positive; state is corrupted")
    return state.replace_dim(l, replace(dim, z=float(rng.gamma(shape, 1.0 / rate))))


@dataclass(frozen=True)
class GraphProposal:
    graph: UndirectedGraph
    edge: tuple[int, int]
    is_add: bool
    log_q_forward: float
    log_q_reverse: float


def _side_probs(n_add: int, n_del: int) -> tuple[float, float]:
    if n_add and n_del:
        return 0.5, 0.5
    return (1.0, 0.0) if n_add else (0.0, 1.0)


def propose_graph(G: UndirectedGraph, z: float, rng: np.random.Generator) -> GraphProposal:
    """Draw a one-edge neighbour of ``G``.

    Add and delete sides are picked with probability 1/2 each; if one side
    is empty the other is used with probability 1. Within a side every
    neighbour has the same ``|nu|`` and so the same ``z`` weight, making the
    choice uniform.
    """
    add, delete = neighborhoods(G)
    if not add and not delete:
        raise ValueError("graph has no one-edge neighbours")
    p_add, p_del = _side_probs(len(add), len(delete))
    is_add = bool(rng.random() < p_add)
    side = add if is_add else delete
    edge = side[int(rng.integers(len(side)))]
    G_new = G.with_edge(*edge) if is_add else G.without_edge(*edge)
    log_fwd = math.log(p_add if is_add else p_del) - math.log(len(side))
    n_add_new = len(add) - 1 if is_add else len(add) + 1
    n_del_new = len(delete) + 1 if is_add else len(delete) - 1
    r_add, r_del = _side_probs(n_add_new, n_del_new)
    log_rev = math.log(r_del if is_add else r_add) - math.log(n_del_new if is_add else n_add_new)
    return GraphProposal(G_new, edge, is_add, log_fwd, log_rev)


def graph_jump_log_ratio(dim: DimensionState, phi_new: np.ndarray, G_new: UndirectedGraph,
                         changed: Sequence[tuple[int, int]], is_add: bool, S: np.ndarray,
                         sigma_g: float, log_I: gw.LogNormalizerCache) -> float:
    """Log acceptance ratio for adding (or deleting) the free entries ``changed``.

    Single-edge case is the usual reversible-jump ratio; a batch multiplies
    the per-entry factors. ``det K`` is unchanged because the diagonal of
    ``phi`` is untouched.
    """
    phi = dim.chol.phi
    K_new = phi_new.T @ phi_new
    K_old = phi.T @ phi
    per_entry = 0.0
    for (a, b) in changed:
        delta_phi = phi_new[a - 1, b - 1] - phi[a - 1, b - 1]
        per_entry += (math.log(sigma_g) + LOG_SQRT_2PI + math.log(phi[a - 1, a - 1]) + math.log(dim.z)
                      + delta_phi * delta_phi / (2.0 * sigma_g * sigma_g))
    if not is_add:
        per_entry = -per_entry
    log_I_old = log_I(gw.GWishartParams(dim.graph, dim.delta, dim.D))
    log_I_new = log_I(gw.GWishartParams(G_new, dim.delta, dim.D))
    prior = log_graph_prior(G_new, dim.graph_prior) - log_graph_prior(dim.graph, dim.graph_prior)
    return (per_entry + log_I_old - log_I_new + prior
            - 0.5 * inner(K_new - K_old, S + dim.z * dim.D))


def propose_entries(dim: DimensionState, G_new: UndirectedGraph, added: Sequence[tuple[int, int]],
                    sigma_g: float, rng: np.random.Generator) -> np.ndarray:
    """New ``phi`` for ``G_new``: added entries drawn around their completed values."""
    phi = np.array(dim.chol.phi)
    for (a, b) in added:
        phi[a - 1, b - 1] += sigma_g * rng.standard_normal()
    return gw.complete_phi(phi, G_new)


def rj_edge_update(state: MultiwayState, data: np.ndarray | None, l: int, sigma_g: float,
                   rng: np.random.Generator, log_I: gw.LogNormalizerCache,
                   S: np.ndarray | None = None, stats: SweepStats | None = None) -> MultiwayState:
    """Reversible-jump update of ``(K_l, G_l)`` by adding or deleting one edge."""
    if not sigma_g > 0:
        raise ValueError("sigma_g must be positive")
    dim = state[l]
    if S is None:
        S = compute_S_l(data, state, l)
    prop = propose_graph(dim.graph, dim.z, rng)
    if prop.is_add:
        phi_new = propose_entries(dim, prop.graph, [prop.edge], sigma_g, rng)
    else:
        phi_new = gw.complete_phi(dim.chol.phi, prop.graph)
    log_r = graph_jump_log_ratio(dim, phi_new, prop.graph, [prop.edge], prop.is_add, S, sigma_g, log_I)
    log_r += prop.log_q_reverse - prop.log_q_forward
    accept = math.log(rng.random()) < log_r
    if stats is not None:
        stats.add(f"G{l}", accept, 1)
    if not accept:
        return state
    return state.replace_dim(l, replace(dim, chol=gw.CholeskyState(prop.graph, phi_new)))


# -- chain driver ------------------------------------------------------------------------

@dataclass
class ChainConfig:
    iters: int = 2000
    burn: int = 500
    thin: int = 1
    seed: int = 0
    sigma_g: float = 0.5
    n_mc: int = 1000
    adapt: bool = True
    adapt_every: int = 50
    rj_moves: int = 1
    debug: bool = False

    def __post_init__(self) -> None:
        if self.iters <= self.burn:
            raise ValueError("iters must exceed burn")
        if self.burn < 0 or self.thin < 1:
            raise ValueError("need burn >= 0 and thin >= 1")
        if not self.sigma_g > 0:
            raise ValueError("sigma_g must be positive")


@dataclass
class PosteriorSummary:
    """Recorded draws and per-dimension summaries of one chain."""

    n_samples: int
    edge_probs: list[np.ndarray]
    K_samples: list[np.ndarray]
    G_samples: list[np.ndarray]
    z_samples: np.ndarray
    acceptance: dict[str, float]
    step_sd: list[float]
    extra: dict = field(default_factory=dict)

    @property
    def K_mean(self) -> list[np.ndarray]:
        return [Ks.mean(axis=0) if len(Ks) else np.full(Ks.shape[1:], np.nan) for Ks in self.K_samples]

    def traces(self) -> dict[str, np.ndarray]:
        """Scalar traces: upper-triangular ``K_l`` entries, ``z_l`` and edge counts."""
        out: dict[str, np.ndarray] = {}
        for l, Ks in enumerate(self.K_samples, start=1):
            m = Ks.shape[1]
            for i in range(m):
                for j in range(i, m):
                    out[f"K{l}[{i + 1},{j + 1}]"] = Ks[:, i, j]
            if l >= 2:
                out[f"z{l}"] = self.z_samples[:, l - 1]
            out[f"edges{l}"] = self.G_samples[l - 1].sum(axis=(1, 2)) / 2.0
        for name, values in self.extra.get("traces", {}).items():
            out[name] = np.asarray(values)
        return out


def sweep(state: MultiwayState, data: np.ndarray | None, rng: np.random.Generator,
          log_I: gw.LogNormalizerCache, sigma_g: float, rj_moves: int = 1,
          stats: SweepStats | None = None, debug: bool = False) -> MultiwayState:
    """One full sweep: for each dimension update ``K_l``, try graph moves, then ``z_l``."""
    for l in range(1, state.L + 1):
        S = compute_S_l(data, state, l)
        if debug and data is not None and data.shape[-1]:
            lhs = inner(state[l].K, S)
            rhs = full_quadratic_form(data, state)
            if abs(lhs - rhs) > 1e-8 * max(1.0, abs(rhs)):
                raise AssertionError(f"<K_{l}, S_{l}> = {lhs} but full quadratic form is {rhs}")
        state = gibbs_update_K(state, data, l, rng, S=S, stats=stats)
        if state[l].graph_mode == "free" and state[l].m > 1:
            for _ in range(rj_moves):
                state = rj_edge_update(state, data, l, sigma_g, rng, log_I, S=S, stats=stats)
        if l >= 2:
            state = gibbs_update_z(state, l, rng)
    return state


def adapt_steps(state: MultiwayState, stats: SweepStats) -> MultiwayState:
    for l in range(1, state.L + 1):
        rate = stats.rate(f"K{l}")
        if not math.isnan(rate):
            state = state.replace_dim(l, replace(state[l], step_sd=gw.adapt_step(state[l].step_sd, rate)))
    return state


def run_chain(data: np.ndarray | None, init: MultiwayState, config: ChainConfig,
              rng: np.random.Generator | None = None,
              log_I: gw.LogNormalizerCache | None = None, update: bool = True,
              on_record: Callable[[MultiwayState, np.random.Generator], None] | None = None
              ) -> PosteriorSummary:
    """Run one chain. ``update=False`` holds the state fixed (only ``on_record``
    does work); ``on_record`` is called at each recorded iteration."""
    rng = rng if rng is not None else np.random.Generator(np.random.Philox(config.seed))
    log_I = log_I if log_I is not None else gw.LogNormalizerCache(config.n_mc, config.seed)
    state = init
    window = SweepStats()
    stats = SweepStats()
    K_rec: list[list[np.ndarray]] = [[] for _ in range(state.L)]
    G_rec: list[list[np.ndarray]] = [[] for _ in range(state.L)]
    z_rec: list[list[float]] = []
    for it in range(config.iters):
        burning = it < config.burn
        if update:
            state = sweep(state, data, rng, log_I, config.sigma_g, config.rj_moves,
                          stats=window if burning else stats, debug=config.debug)
        if burning and config.adapt and (it + 1) % config.adapt_every == 0:
            state = adapt_steps(state, window)
            window.reset()
        if not burning and (it - config.burn) % config.thin == 0:
            for l in range(state.L):
                K_rec[l].append(np.array(state.dims[l].K))
                G_rec[l].append(state.dims[l].graph.adjacency)
            z_rec.append([d.z for d in state.dims])
            if on_record is not None:
                on_record(state, rng)
    K_samples = [np.array(ks).reshape(-1, d.m, d.m) for ks, d in zip(K_rec, state.dims)]
    G_samples = [np.array(gs, dtype=np.uint8).reshape(-1, d.m, d.m) for gs, d in zip(G_rec, state.dims)]
    edge_probs = [gs.mean(axis=0) if len(gs) else np.zeros(gs.shape[1:]) for gs in G_samples]
    return PosteriorSummary(
        n_samples=len(z_rec),
        edge_probs=edge_probs,
        K_samples=K_samples,
        G_samples=G_samples,
        z_samples=np.array(z_rec).reshape(-1, state.L),
        acceptance=stats.rates(),
        step_sd=[d.step_sd for d in state.dims],
        extra={"final_state": state},
    )
