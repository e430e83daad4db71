"""Pure-Python/numpy implementations of the hot kernels.

Same signatures and the same floating-point operation order as the compiled
module, so both backends consume identical random streams.
"""
from __future__ import annotations

import math

import numpy as np


def complete_rows(phi: np.ndarray, adj: np.ndarray, start: int = 0) -> None:
    """Fill the bound entries of upper-triangular ``phi`` in place, rows ``start..m-1``."""
    m = phi.shape[0]
    for i in range(start, m):
        pii = phi[i, i]
        for j in range(i + 1, m):
            if adj[i, j]:
                continue
            if i == 0:
                phi[0, j] = 0.0
            else:
                s = 0.0
                for k in range(i):
                    s += phi[k, i] * phi[k, j]
                phi[i, j] = -s / pii


def row_quad(phi: np.ndarray, D: np.ndarray, r: int) -> float:
    m = phi.shape[0]
    q = 0.0
    for a in range(r, m):
        pa = phi[r, a]
        if pa == 0.0:
            continue
        s = 0.0
        for b in range(r, m):
            s += D[a, b] * phi[r, b]
        q += pa * s
    return q


def mh_sweep(phi, adj, free_i, free_j, D, coef, sd, normals, log_u) -> int:
    """One Metropolis sweep over the listed free elements of ``phi``.

    Log target (up to a constant) is ``sum_i coef[i] log phi_ii - 0.5 tr(phi D phi^T)``,
    i.e. a G-Wishart density in free Cholesky coordinates including the
    Jacobian. Diagonal moves are multiplicative (log-scale random walk).
    """
    m = phi.shape[0]
    quads = [row_quad(phi, D, r) for r in range(m)]
    work = phi.copy()
    accepted = 0
    for k in range(len(free_i)):
        i = int(free_i[k])
        j = int(free_j[k])
        step = sd * normals[k]
        if i == j:
            old = phi[i, i]
            new = old * math.exp(step)
            work[i, i] = new
            logr = coef[i] * step + step
        else:
            work[i, j] = phi[i, j] + step
            logr = 0.0
        complete_rows(work, adj, i)
        new_quads = [row_quad(work, D, r) for r in range(i, m)]
        dq = 0.0
        for r in range(i, m):
            dq += new_quads[r - i] - quads[r]
        logr -= 0.5 * dq
        if log_u[k] < logr:
            phi[i:, :] = work[i:, :]
            quads[i:] = new_quads
            accepted += 1
        else:
            work[i:, :] = phi[i:, :]
    return accepted


def theta_sweep(theta, mu, y, h, KC, KS, KT, sd, normals, log_u, use_likelihood) -> int:
    """Metropolis sweep over every element of the latent log-risk array.

    ``theta`` is the ``m_C x m_S x m_T`` array of ``mu + random effect`` values,
    updated in place row by row (rows indexed by ``(s, t)``, ``s`` fastest).
    """
    mC, mS, mT = theta.shape
    accepted = 0
    r = np.empty(mC)
    kr = np.empty(mC)
    for t in range(mT):
        for s in range(mS):
            kss = KS[s, s] * KT[t, t]
            for c in range(mC):
                u = 0.0
                for tp in range(mT):
                    kt = KT[t, tp]
                    if kt == 0.0:
                        continue
                    for sp in range(mS):
                        ks = KS[s, sp]
                        if ks == 0.0:
                            continue
                        u += ks * kt * (theta[c, sp, tp] - mu[c])
                eff = theta[c, s, t] - mu[c]
                u -= kss * eff
                r[c] = eff + u / kss
            for c in range(mC):
                acc = 0.0
                for cp in range(mC):
                    acc += KC[c, cp] * r[cp]
                kr[c] = acc
            base = (t * mS + s) * mC
            for c in range(mC):
                delta = sd * normals[base + c]
                x = theta[c, s, t]
                g = x + delta
                logr = -0.5 * kss * (2.0 * delta * kr[c] + delta * delta * KC[c, c])
                if use_likelihood:
                    if g > 700.0:
                        logr = -math.inf
                    else:
                        logr += y[c, s, t] * delta - h[s, t] * (math.exp(g) - math.exp(x))
                if log_u[base + c] < logr:
                    theta[c, s, t] = g
                    r[c] += delta
                    for cp in range(mC):
                        kr[cp] += KC[cp, c] * delta
                    accepted += 1
    return accepted
