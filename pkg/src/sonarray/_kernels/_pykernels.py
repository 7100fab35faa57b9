"""Numpy implementations of the compiled kernels, used when the extension is absent."""

import numpy as np


def grid_energies(corr, lookup):
    pairs = np.arange(corr.shape[0])
    return corr[pairs, lookup].sum(axis=1)


def region_energies(corr, low, width):
    L = corr.shape[1]
    pairs = np.arange(corr.shape[0])
    best = corr[pairs, low]
    for o in range(1, int(width.max(initial=0)) + 1):
        val = corr[pairs, (low + o) % L]
        best = np.where(o <= width, np.maximum(best, val), best)
    return best.sum(axis=1)


def multi_source_search(corr, low, width, n_sources, halfwidth):
    L = corr.shape[1]
    idx = np.empty(n_sources, dtype=np.int64)
    energies = np.empty(n_sources)
    for q in range(n_sources):
        e = region_energies(corr, low, width)
        best = int(np.argmax(e))
        idx[q] = best
        energies[q] = e[best]
        for p in range(corr.shape[0]):
            taus = np.arange(low[best, p] - halfwidth, low[best, p] + width[best, p] + halfwidth + 1)
            corr[p, taus % L] = 0.0
    return idx, energies


def observation_likelihoods(particles, obs, sigma, norm):
    d2 = (
        np.sum(obs**2, axis=1)[:, None]
        + np.sum(particles**2, axis=1)[None, :]
        - 2.0 * obs @ particles.T
    )
    return norm * np.exp(-np.maximum(d2, 0.0) / (2.0 * sigma * sigma))
