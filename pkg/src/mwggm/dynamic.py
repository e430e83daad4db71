"""Array-variate dynamic linear models.

Observation ``Y_t = Theta_t x_{L+1} F_t^T + nu_t`` and evolution
``Theta_t = Theta_{t-1} x_{L+1} H_t + omega_t``, where the state ``Theta_t``
is an ``m_1 x ... x m_L x s`` array and every noise term shares the
separable precision ``K_L kron ... kron K_1`` across the first ``L`` modes.
Because the across-mode covariance is common to all terms, the filter
means, ``R_t``, ``C_t`` and ``q_t`` do not depend on the ``K_l``.
"""
from __future__ import annotations

from dataclasses import dataclass
from typing import Callable, Sequence

import numpy as np

from . import multiway as mw
from .tensor import tucker_product


@dataclass(frozen=True)
class DLMSpec:
    """``F``: ``T x s``; ``H``: ``T x s x s``; ``W``: ``T x s x s`` or ``None`` for
    discounting with factor ``beta``; ``v``: length ``T``; ``M0``: state array;
    ``C0``: ``s x s``."""

    F: np.ndarray
    H: np.ndarray
    M0: np.ndarray
    C0: np.ndarray
    W: np.ndarray | None = None
    v: np.ndarray | None = None
    beta: float = 0.95

    def __post_init__(self) -> None:
        F = np.atleast_2d(np.asarray(self.F, dtype=float))
        T, s = F.shape
        H = np.asarray(self.H, dtype=float)
        if H.ndim == 2 and H.shape == (s, s):
            H = np.broadcast_to(H, (T, s, s)).copy()
        if H.shape != (T, s, s):
            raise ValueError(f"H must be {T} x {s} x {s}")
        M0 = np.asarray(self.M0, dtype=float)
        if M0.shape[-1] != s:
            raise ValueError("last axis of M0 must have the state dimension")
        C0 = np.atleast_2d(np.asarray(self.C0, dtype=float))
        if C0.shape != (s, s) or not np.allclose(C0, C0.T):
            raise ValueError("C0 must be a symmetric s x s matrix")
        if np.linalg.eigvalsh(C0)[0] < -1e-12:
            raise ValueError("C0 must be positive semidefinite")
        v = np.ones(T) if self.v is None else np.broadcast_to(np.asarray(self.v, dtype=float), (T,)).copy()
        if np.any(v <= 0):
            raise ValueError("observation variances v_t must be positive")
        W = self.W
        if W is not None:
            W = np.asarray(W, dtype=float)
            if W.ndim == 2 and W.shape == (s, s):
                W = np.broadcast_to(W, (T, s, s)).copy()
            if W.shape != (T, s, s):
                raise ValueError(f"W must be {T} x {s} x {s}")
        elif not 0 < self.beta <= 1:
            raise ValueError("discount factor must lie in (0, 1]")
        for name, val in (("F", F), ("H", H), ("M0", M0), ("C0", C0), ("v", v), ("W", W)):
            object.__setattr__(self, name, val)

    @property
    def T(self) -> int:
        return self.F.shape[0]

    @property
    def s(self) -> int:
        return self.F.shape[1]

    @property
    def dims(self) -> tuple[int, ...]:
        return self.M0.shape[:-1]


@dataclass(frozen=True)
class FilterState:
    M: np.ndarray
    C: np.ndarray
    a: np.ndarray | None = None
    R: np.ndarray | None = None
    f: np.ndarray | None = None
    q: float | None = None
    A: np.ndarray | None = None
    e: np.ndarray | None = None


def _sym(A: np.ndarray) -> np.ndarray:
    return 0.5 * (A + A.T)


def _last_mode(X: np.ndarray, A: np.ndarray) -> np.ndarray:
    """``X x_{L+1} A`` for the trailing state axis."""
    return X @ np.asarray(A).T


def filter_step(prev: FilterState, Y: np.ndarray, F: np.ndarray, H: np.ndarray,
                W: np.ndarray | None, v: float, beta: float = 0.95) -> FilterState:
    a = _last_mode(prev.M, H)
    HCH = H @ prev.C @ H.T
    Wt = (1.0 - beta) / beta * HCH if W is None else W
    R = _sym(HCH + Wt)
    f = a @ F
    q = float(F @ R @ F + v)
    if not q > 0:
        raise ValueError(f"one-step forecast variance q_t = {q} is not positive")
    A = R @ F / q
    e = np.asarray(Y, dtype=float) - f
    M = a + e[..., None] * A
    C = _sym(R - np.outer(A, A) * q)
    return FilterState(M, C, a, R, f, q, A, e)


def run_filter(Ys: Sequence[np.ndarray], spec: DLMSpec) -> list[FilterState]:
    """Forward pass; element 0 holds the initial moments."""
    if len(Ys) != spec.T:
        raise ValueError(f"expected {spec.T} observations, got {len(Ys)}")
    states = [FilterState(spec.M0, spec.C0)]
    for t in range(spec.T):
        Y = np.asarray(Ys[t], dtype=float)
        if Y.shape != spec.dims:
            raise ValueError(f"observation {t + 1} has shape {Y.shape}, expected {spec.dims}")
        W = None if spec.W is None else spec.W[t]
        states.append(filter_step(states[-1], Y, spec.F[t], spec.H[t], W, float(spec.v[t]), spec.beta))
    return states


def log_marginal_likelihood(Ys: Sequence[np.ndarray], spec: DLMSpec, Ks: Sequence[np.ndarray],
                            history: list[FilterState] | None = None) -> float:
    history = history or run_filter(Ys, spec)
    total = 0.0
    for st in history[1:]:
        Kq = [np.atleast_2d(Ks[0]) / st.q] + [np.atleast_2d(K) for K in Ks[1:]]
        total += mw.log_array_normal(st.e, Kq)
    return total


def residual_array(Ys: Sequence[np.ndarray], spec: DLMSpec,
                   history: list[FilterState] | None = None) -> np.ndarray:
    """Scaled one-step errors ``q_t^{-1/2} (Y_t - f_t)`` stacked along a trailing time axis."""
    history = history or run_filter(Ys, spec)
    return np.stack([st.e / np.sqrt(st.q) for st in history[1:]], axis=-1)


def _psd_sqrt(C: np.ndarray) -> np.ndarray:
    w, V = np.linalg.eigh(_sym(C))
    return V * np.sqrt(np.clip(w, 0.0, None))


def sample_state(M: np.ndarray, C: np.ndarray, cov_factors: Sequence[np.ndarray],
                 rng: np.random.Generator) -> np.ndarray:
    """Draw from the array normal with mean ``M``, mode covariances ``K_l^{-1}``
    (given through ``cov_factors``) and state covariance ``C``."""
    Z = rng.standard_normal(M.shape)
    return M + tucker_product(Z, list(cov_factors) + [_psd_sqrt(C)])


def cov_factors(Ks: Sequence[np.ndarray]) -> list[np.ndarray]:
    out = []
    for K in Ks:
        L = np.linalg.cholesky(np.atleast_2d(K))
        out.append(np.linalg.inv(L).T)
    return out


def backward_moments(st: FilterState, nxt: FilterState, H_next: np.ndarray,
                     theta_next: np.ndarray) -> tuple[np.ndarray, np.ndarray]:
    """Mean and state covariance of ``Theta_t`` given ``Theta_{t+1}`` and data to ``t``."""
    try:
        B = np.linalg.solve(nxt.R, H_next @ st.C).T
    except np.linalg.LinAlgError as exc:
        raise ValueError("R_{t+1} is singular; backward sampling is undefined") from exc
    M = st.M + _last_mode(theta_next - nxt.a, B)
    C = _sym(st.C - B @ H_next @ st.C)
    return M, C


def ffbs_sample(history: list[FilterState], spec: DLMSpec, Ks: Sequence[np.ndarray],
                rng: np.random.Generator) -> list[np.ndarray]:
    """Joint draw of ``Theta_0..Theta_T`` given all data."""
    factors = cov_factors(Ks)
    T = len(history) - 1
    out: list[np.ndarray] = [None] * (T + 1)  # type: ignore[list-item]
    out[T] = sample_state(history[T].M, history[T].C, factors, rng)
    for t in range(T - 1, -1, -1):
        M, C = backward_moments(history[t], history[t + 1], spec.H[t], out[t + 1])
        out[t] = sample_state(M, C, factors, rng)
    return out


def simulate_dlm(spec: DLMSpec, Ks: Sequence[np.ndarray], rng: np.random.Generator,
                 W: np.ndarray | None = None) -> tuple[list[np.ndarray], list[np.ndarray]]:
    """Draw states and observations; ``W`` (``T x s x s``) overrides ``spec.W``."""
    W = spec.W if W is None else W
    if W is None:
        raise ValueError("simulation needs explicit evolution covariances")
    factors = cov_factors(Ks)
    theta = sample_state(spec.M0, spec.C0, factors, rng)
    thetas, Ys = [theta], []
    for t in range(spec.T):
        theta = sample_state(_last_mode(theta, spec.H[t]), W[t], factors, rng)
        thetas.append(theta)
        noise = tucker_product(rng.standard_normal(spec.dims), factors)
        Ys.append(theta @ spec.F[t] + np.sqrt(spec.v[t]) * noise)
    return Ys, thetas


def dlm_mcmc(Ys: Sequence[np.ndarray], spec: DLMSpec, init: mw.MultiwayState, config: mw.ChainConfig,
             rng: np.random.Generator | None = None, fixed_K: bool = False,
             on_record: Callable | None = None) -> mw.PosteriorSummary:
    """Alternate precision/graph updates on the scaled one-step errors with FFBS
    draws of the state trajectory. States are drawn at recorded iterations only;
    they do not feed back into the precision updates."""
    rng = rng if rng is not None else np.random.Generator(np.random.Philox(config.seed))
    history = run_filter(Ys, spec)
    data = None if fixed_K else residual_array(Ys, spec, history)
    T = spec.T
    theta_sum = [np.zeros(spec.M0.shape) for _ in range(T + 1)]
    count = [0]

    def record(state: mw.MultiwayState, rng_: np.random.Generator) -> None:
        thetas = ffbs_sample(history, spec, state.Ks(), rng_)
        for t in range(T + 1):
            theta_sum[t] += thetas[t]
        count[0] += 1
        if on_record is not None:
            on_record(state, thetas)

    if fixed_K:
        summary = mw.run_chain(None, init, config, rng, update=False, on_record=record)
    else:
        summary = mw.run_chain(data, init, config, rng, on_record=record)
    n = max(count[0], 1)
    summary.extra["smoothed_mean"] = [s / n for s in theta_sum]
    summary.extra["filtered_mean"] = [st.M for st in history]
    summary.extra["filtered_cov"] = [st.C for st in history]
    return summary
