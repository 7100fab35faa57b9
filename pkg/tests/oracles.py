"""Independent reference implementations used as test oracles.

Each one is written from the defining formula with plain loops or a
different library, never by calling the code under test.
"""

from __future__ import annotations

import itertools

import mpmath
import numpy as np
from scipy.stats import norm


def circular_xcorr(xi, xj) -> np.ndarray:
    """``r(tau) = sum_n xi[n] xj[(n + tau) mod L]`` by direct summation."""
    L = len(xi)
    return np.array([sum(xi[n] * xj[(n + t) % L] for n in range(L)) for t in range(L)])


def weighted_time_signals(X, weights) -> np.ndarray:
    """Inverse full-length DFT of ``weights * X / |X|`` (real by symmetry)."""
    L = 2 * (X.shape[-1] - 1)
    Y = weights * X / np.abs(X)
    full = np.concatenate([Y, np.conj(Y[..., 1 : L // 2][..., ::-1])], axis=-1)
    n = np.arange(L)
    k = np.arange(L)
    basis = np.exp(2j * np.pi * np.outer(k, n) / L) / L
    return np.real(full @ basis)


def beamformer_energy(x, delays) -> float:
    """Energy of ``sum_m x_m[(n + delay_m) mod L]`` over one frame."""
    L = x.shape[1]
    y = np.zeros(L)
    for m in range(x.shape[0]):
        y += np.roll(x[m], -int(delays[m]))
    return float(np.sum(y * y))


def euler_characteristic(n_vertices: int, n_edges: int, n_faces: int) -> int:
    return n_vertices - n_edges + n_faces


def brute_force_assignment(lik, p_q, p_obs, p_new, p_false, density=1.0 / (4.0 * np.pi)):
    """Marginal assignment posteriors by enumerating every map.

    Each observation is a false alarm ("F"), a new source ("N") or one of
    the tracks, with no track used twice.
    """
    Q, M = lik.shape
    labels = ["F", "N"] + list(range(M))
    weights = {}
    for f in itertools.product(labels, repeat=Q):
        used = [j for j in f if not isinstance(j, str)]
        if len(used) != len(set(used)):
            continue
        w = 1.0
        for q, j in enumerate(f):
            if j == "F":
                w *= (1 - p_q[q]) * p_false * density
            elif j == "N":
                w *= p_q[q] * p_new * density
            else:
                w *= p_q[q] * p_obs[j] * lik[q, j]
        weights[f] = w
    total = sum(weights.values())
    p_track = np.zeros((Q, M))
    p_f = np.zeros(Q)
    p_n = np.zeros(Q)
    for f, w in weights.items():
        for q, j in enumerate(f):
            if j == "F":
                p_f[q] += w / total
            elif j == "N":
                p_n[q] += w / total
            else:
                p_track[q, j] += w / total
    return p_track, p_f, p_n


def exp1_mp(x, dps: int = 40) -> float:
    with mpmath.workdps(dps):
        return float(mpmath.e1(x))


def log_mmse_gain_mp(xi, gamma, dps: int = 40) -> float:
    """``xi/(1+xi) exp(E1(v)/2)`` with ``v = gamma xi/(1+xi)`` in high precision."""
    with mpmath.workdps(dps):
        xi = mpmath.mpf(xi)
        v = mpmath.mpf(gamma) * xi / (1 + xi)
        return float(xi / (1 + xi) * mpmath.exp(mpmath.e1(v) / 2))


def wirtinger_fd(cost, W, h: float = 1e-6) -> np.ndarray:
    """``dJ/dRe W + j dJ/dIm W`` by central differences, entry by entry."""
    g = np.zeros_like(W)
    it = np.nditer(np.zeros(W.shape), flags=["multi_index"])
    for _ in it:
        idx = it.multi_index
        e = np.zeros_like(W)
        e[idx] = h
        d_re = (cost(W + e) - cost(W - e)) / (2 * h)
        d_im = (cost(W + 1j * e) - cost(W - 1j * e)) / (2 * h)
        g[idx] = d_re + 1j * d_im
    return g


def gmm_logpdf_dropped(weights, means, variances, x, keep) -> float:
    """Diagonal GMM log-likelihood over the kept dimensions via scipy.stats."""
    keep = np.asarray(keep, dtype=bool)
    comps = [
        np.log(w) + norm.logpdf(x[keep], means[j, keep], np.sqrt(variances[j, keep])).sum()
        for j, w in enumerate(weights)
    ]
    m = max(comps)
    return float(m + np.log(sum(np.exp(c - m) for c in comps)))


def htk_mel(f) -> float:
    return 2595.0 * np.log10(1.0 + f / 700.0)
