"""Separable mean arrays ``M = M_1 + ... + M_L`` where ``M_l`` varies only
along dimension ``l``, and the conjugate Gibbs update of each ``mu_l``.
"""
from __future__ import annotations

from dataclasses import dataclass, replace
from typing import Sequence

import numpy as np
import scipy.linalg

from .tensor import mode_matricize


@dataclass(frozen=True)
class SeparableMean:
    """``mu[l-1]`` is the length-``m_l`` effect vector for dimension ``l``, with prior
    ``N(mu0[l-1], Omega[l-1]^{-1})``."""

    mu: tuple[np.ndarray, ...]
    mu0: tuple[np.ndarray, ...]
    Omega: tuple[np.ndarray, ...]

    def __post_init__(self) -> None:
        if not len(self.mu) == len(self.mu0) == len(self.Omega):
            raise ValueError("mu, mu0 and Omega need one entry per dimension")
        mus, mu0s, Oms = [], [], []
        for l, (m, m0, Om) in enumerate(zip(self.mu, self.mu0, self.Omega), start=1):
            m = np.atleast_1d(np.asarray(m, dtype=float))
            m0 = np.atleast_1d(np.asarray(m0, dtype=float))
            Om = np.atleast_2d(np.asarray(Om, dtype=float))
            if m.ndim != 1 or m0.shape != m.shape or Om.shape != (m.size, m.size):
                raise ValueError(f"dimension {l}: inconsistent mean/prior shapes")
            if not np.allclose(Om, Om.T) or np.linalg.eigvalsh(Om)[0] <= 0:
                raise ValueError(f"dimension {l}: prior precision must be symmetric positive definite")
            mus.append(m)
            mu0s.append(m0)
            Oms.append(Om)
        object.__setattr__(self, "mu", tuple(mus))
        object.__setattr__(self, "mu0", tuple(mu0s))
        object.__setattr__(self, "Omega", tuple(Oms))

    @classmethod
    def zeros(cls, shape: Sequence[int], prior_precision: float = 1.0) -> "SeparableMean":
        return cls(tuple(np.zeros(m) for m in shape), tuple(np.zeros(m) for m in shape),
                   tuple(prior_precision * np.eye(m) for m in shape))

    @property
    def shape(self) -> tuple[int, ...]:
        return tuple(m.size for m in self.mu)

    def with_mu(self, l: int, value: np.ndarray) -> "SeparableMean":
        mu = list(self.mu)
        mu[l - 1] = np.asarray(value, dtype=float)
        return replace(self, mu=tuple(mu))


def compose_mean(mean: SeparableMean) -> np.ndarray:
    """``M[i_1, ..., i_L] = sum_l mu_l[i_l]``."""
    L = len(mean.mu)
    M = np.zeros(mean.shape)
    for l, m in enumerate(mean.mu):
        shape = [1] * L
        shape[l] = m.size
        M = M + m.reshape(shape)
    return M


def center(data: np.ndarray, mean: SeparableMean) -> np.ndarray:
    """Subtract the mean array; a trailing sample axis is allowed."""
    data = np.asarray(data, dtype=float)
    shape = mean.shape
    if data.shape == shape:
        return data - compose_mean(mean)
    if data.ndim == len(shape) + 1 and data.shape[:-1] == shape:
        return data - compose_mean(mean)[..., None]
    raise ValueError(f"data shape {data.shape} does not match mean shape {shape}")


def _row_sums(K: np.ndarray) -> np.ndarray:
    return np.asarray(K, dtype=float).sum(axis=1)


def mu_conditional(mean: SeparableMean, l: int, X: np.ndarray,
                   Ks: Sequence[np.ndarray]) -> tuple[np.ndarray, np.ndarray]:
    """Mean and precision of ``mu_l | X, other mu's``.

    ``X`` has the mean's shape or an extra trailing sample axis (treated as
    a mode with identity precision). ``K_{-l} 1`` is formed from the row sums
    of the individual factors, never as a Kronecker product.
    """
    L = len(mean.mu)
    if not 1 <= l <= L:
        raise ValueError(f"dimension {l} out of range")
    X = np.asarray(X, dtype=float)
    Ks = [np.atleast_2d(np.asarray(K, dtype=float)) for K in Ks]
    if len(Ks) != L:
        raise ValueError("need one precision matrix per dimension")
    other = mean.with_mu(l, np.zeros(mean.shape[l - 1]))
    Xt = center(X, other)
    rows = [_row_sums(K) for K in Ks]
    if Xt.ndim == L + 1:
        rows.append(np.ones(Xt.shape[-1]))
    # contract every mode except l with the row-sum vector of its precision
    b = Xt
    for k in range(Xt.ndim - 1, -1, -1):
        if k != l - 1:
            b = np.tensordot(b, rows[k], axes=(k, 0))
    scale = float(np.prod([r.sum() for k, r in enumerate(rows) if k != l - 1]))
    K_l = Ks[l - 1]
    Om = mean.Omega[l - 1]
    prec = scale * K_l + Om
    prec = 0.5 * (prec + prec.T)
    try:
        cf = scipy.linalg.cho_factor(prec, lower=True)
    except np.linalg.LinAlgError as exc:
        raise ValueError(f"conditional precision of mu_{l} is singular") from exc
    m = scipy.linalg.cho_solve(cf, K_l @ b + Om @ mean.mu0[l - 1])
    return m, prec


def update_mu(mean: SeparableMean, l: int, X: np.ndarray, Ks: Sequence[np.ndarray],
              rng: np.random.Generator) -> SeparableMean:
    """Exact draw of ``mu_l`` from its normal full conditional."""
    m, prec = mu_conditional(mean, l, X, Ks)
    C = np.linalg.cholesky(prec)
    z = rng.standard_normal(m.size)
    return mean.with_mu(l, m + scipy.linalg.solve_triangular(C.T, z, lower=False))


def matricized_residual(mean: SeparableMean, l: int, X: np.ndarray) -> np.ndarray:
    """``X~_(l)``: mode-``l`` unfolding of ``X`` minus the other dimensions' mean arrays."""
    return mode_matricize(center(X, mean.with_mu(l, np.zeros(mean.shape[l - 1]))), l)
