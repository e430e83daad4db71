# cython: language_level=3, boundscheck=False, wraparound=False, cdivision=True, initializedcheck=False
"""Compiled hot kernels. Mirrors mwggm.kernels._pykernels operation for operation."""

from libc.math cimport exp, INFINITY
from libc.stdlib cimport malloc, free

import numpy as np
cimport numpy as cnp

cnp.import_array()


cdef void _complete(double[:, ::1] phi, const unsigned char[:, ::1] adj, Py_ssize_t start) noexcept nogil:
    cdef Py_ssize_t m = phi.shape[0]
    cdef Py_ssize_t i, j, k
    cdef double s, pii
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


cdef double _row_quad(double[:, ::1] phi, const double[:, ::1] D, Py_ssize_t r) noexcept nogil:
    cdef Py_ssize_t m = phi.shape[0]
    cdef Py_ssize_t a, b
    cdef double q = 0.0, s, pa
    for a in range(r, m):
        pa = phi[r, a]
        if pa == 0.0:
            continue
        s = 0.0
        for b in range(r, m):
            s += D[a, b] * phi[r, b]
        q += pa * s
    return q


def complete_rows(double[:, ::1] phi, const unsigned char[:, ::1] adj, Py_ssize_t start=0):
    with nogil:
        _complete(phi, adj, start)


def row_quad(double[:, ::1] phi, const double[:, ::1] D, Py_ssize_t r):
    return _row_quad(phi, D, r)


def mh_sweep(double[:, ::1] phi, const unsigned char[:, ::1] adj,
             const Py_ssize_t[::1] free_i, const Py_ssize_t[::1] free_j,
             const double[:, ::1] D, const double[::1] coef, double sd,
             const double[::1] normals, const double[::1] log_u):
    cdef Py_ssize_t m = phi.shape[0]
    cdef Py_ssize_t n_free = free_i.shape[0]
    cdef Py_ssize_t k, i, j, r, c
    cdef double step, old, new, logr, dq
    cdef long accepted = 0
    cdef double[:, ::1] work = np.array(phi, dtype=np.float64, order="C")
    cdef double *quads = <double *> malloc(m * sizeof(double))
    cdef double *new_quads = <double *> malloc(m * sizeof(double))
    if quads == NULL or new_quads == NULL:
        free(quads)
        free(new_quads)
        raise MemoryError()
    try:
        with nogil:
            for r in range(m):
                quads[r] = _row_quad(phi, D, r)
            for k in range(n_free):
                i = free_i[k]
                j = free_j[k]
                step = sd * normals[k]
                if i == j:
                    old = phi[i, i]
                    new = old * exp(step)
                    work[i, i] = new
                    logr = coef[i] * step + step
                else:
                    work[i, j] = phi[i, j] + step
                    logr = 0.0
                _complete(work, adj, i)
                dq = 0.0
                for r in range(i, m):
                    new_quads[r] = _row_quad(work, D, r)
                    dq += new_quads[r] - quads[r]
                logr -= 0.5 * dq
                if log_u[k] < logr:
                    for r in range(i, m):
                        quads[r] = new_quads[r]
                        for c in range(m):
                            phi[r, c] = work[r, c]
                    accepted += 1
                else:
                    for r in range(i, m):
                        for c in range(m):
                            work[r, c] = phi[r, c]
    finally:
        free(quads)
        free(new_quads)
    return accepted


def theta_sweep(double[:, :, ::1] theta, const double[::1] mu, const double[:, :, ::1] y,
                const double[:, ::1] h, const double[:, ::1] KC, const double[:, ::1] KS,
                const double[:, ::1] KT, double sd, const double[::1] normals,
                const double[::1] log_u, bint use_likelihood):
    cdef Py_ssize_t mC = theta.shape[0], mS = theta.shape[1], mT = theta.shape[2]
    cdef Py_ssize_t t, s, c, cp, tp, sp, base
    cdef double kss, u, kt, ks, eff, acc, delta, x, g, logr
    cdef long accepted = 0
    cdef double *r = <double *> malloc(mC * sizeof(double))
    cdef double *kr = <double *> malloc(mC * sizeof(double))
    if r == NULL or kr == NULL:
        free(r)
        free(kr)
        raise MemoryError()
    try:
        with nogil:
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
                                logr = -INFINITY
                            else:
                                logr += y[c, s, t] * delta - h[s, t] * (exp(g) - exp(x))
                        if log_u[base + c] < logr:
                            theta[c, s, t] = g
                            r[c] += delta
                            for cp in range(mC):
                                kr[cp] += KC[cp, c] * delta
                            accepted += 1
    finally:
        free(r)
        free(kr)
    return accepted
