# cython: language_level=3, boundscheck=False, wraparound=False, cdivision=True, initializedcheck=False
"""Compiled inner loops: steered-beamformer grid search and particle likelihoods."""

import numpy as np

from libc.math cimport exp


def grid_energies(const double[:, ::1] corr, const int[:, ::1] lookup):
    """Sum over pairs of ``corr[p, lookup[g, p]]`` for every grid point."""
    cdef Py_ssize_t G = lookup.shape[0]
    cdef Py_ssize_t P = lookup.shape[1]
    cdef Py_ssize_t g, p
    cdef double acc
    out = np.empty(G, dtype=np.float64)
    cdef double[::1] e = out
    for g in range(G):
        acc = 0.0
        for p in range(P):
            acc = acc + corr[p, lookup[g, p]]
        e[g] = acc
    return out


cdef inline double _region_energy(const double[:, ::1] corr, const int[:, ::1] low,
                                  const int[:, ::1] width, Py_ssize_t g) nogil:
    cdef Py_ssize_t P = low.shape[1]
    cdef Py_ssize_t L = corr.shape[1]
    cdef Py_ssize_t p, tau
    cdef int o
    cdef double acc = 0.0, m, v
    for p in range(P):
        tau = low[g, p]
        m = corr[p, tau]
        for o in range(1, width[g, p] + 1):
            tau = tau + 1
            if tau == L:
                tau = 0
            v = corr[p, tau]
            if v > m:
                m = v
        acc = acc + m
    return acc


def region_energies(const double[:, ::1] corr, const int[:, ::1] low, const int[:, ::1] width):
    """Sum over pairs of the largest ``corr[p, low .. low + width]`` for every grid point."""
    cdef Py_ssize_t G = low.shape[0]
    cdef Py_ssize_t g
    out = np.empty(G, dtype=np.float64)
    cdef double[::1] e = out
    for g in range(G):
        e[g] = _region_energy(corr, low, width, g)
    return out


def multi_source_search(double[:, ::1] corr, const int[:, ::1] low, const int[:, ::1] width,
                        int n_sources, int halfwidth):
    """Greedy Q-source search; ``corr`` is modified in place.

    After each pass the lags ``low - halfwidth .. low + width + halfwidth``
    of the winning point are zeroed in every pair.
    """
    cdef Py_ssize_t G = low.shape[0]
    cdef Py_ssize_t P = low.shape[1]
    cdef Py_ssize_t L = corr.shape[1]
    cdef Py_ssize_t g, p, best
    cdef int q, o
    cdef Py_ssize_t tau
    cdef double acc, best_e
    idx_out = np.empty(n_sources, dtype=np.int64)
    e_out = np.empty(n_sources, dtype=np.float64)
    cdef long long[::1] idx_v = idx_out
    cdef double[::1] e_v = e_out
    for q in range(n_sources):
        best = 0
        best_e = 0.0
        for g in range(G):
            acc = _region_energy(corr, low, width, g)
            if g == 0 or acc > best_e:
                best_e = acc
                best = g
        idx_v[q] = best
        e_v[q] = best_e
        for p in range(P):
            for o in range(-halfwidth, width[best, p] + halfwidth + 1):
                tau = (low[best, p] + o) % L
                if tau < 0:
                    tau = tau + L
                corr[p, tau] = 0.0
    return idx_out, e_out


def observation_likelihoods(const double[:, ::1] particles, const double[:, ::1] obs,
                            double sigma, double norm):
    """``norm * exp(-|y_q - x_i|^2 / (2 sigma^2))``, shape ``(Q, Np)``."""
    cdef Py_ssize_t Q = obs.shape[0]
    cdef Py_ssize_t N = particles.shape[0]
    cdef Py_ssize_t q, i
    cdef double dx, dy, dz
    cdef double k = 0.5 / (sigma * sigma)
    out = np.empty((Q, N), dtype=np.float64)
    cdef double[:, ::1] o = out
    for q in range(Q):
        for i in range(N):
            dx = obs[q, 0] - particles[i, 0]
            dy = obs[q, 1] - particles[i, 1]
            dz = obs[q, 2] - particles[i, 2]
            o[q, i] = norm * exp(-k * (dx * dx + dy * dy + dz * dz))
    return out
