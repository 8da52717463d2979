"""Verification scores for point and probabilistic forecasts.

Observations given as NaN are treated as missing and excluded from every
score. Scores are returned on the scale of the data; multiply by 100 for
percentages of normalized capacity.
"""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from .forecast import quantile_matrix

RELIABILITY_LEVELS = tuple(np.round(np.arange(0.05, 0.951, 0.05), 2))
SHARPNESS_COVERAGES = tuple(np.round(np.arange(0.1, 0.901, 0.1), 1))


@dataclass(frozen=True)
class VerificationSet:
    """Forecast samples ``(n, L)`` paired with observations ``(n,)``.

    Pairs whose observation is missing are dropped at construction.
    """

    samples: np.ndarray
    obs: np.ndarray

    def __post_init__(self):
        s = np.atleast_2d(np.asarray(self.samples, dtype=float))
        y = np.asarray(self.obs, dtype=float).ravel()
        if s.shape[0] != y.shape[0]:
            raise ValueError(f"{s.shape[0]} forecasts but {y.shape[0]} observations")
        keep = ~np.isnan(y)
        object.__setattr__(self, "samples", s[keep])
        object.__setattr__(self, "obs", y[keep])

    def __len__(self):
        return len(self.obs)

    def point(self):
        return self.samples.mean(axis=1)


def _observed(pred, obs):
    pred = np.asarray(pred, dtype=float).ravel()
    obs = np.asarray(obs, dtype=float).ravel()
    if pred.shape != obs.shape:
        raise ValueError(f"{pred.size} forecasts but {obs.size} observations")
    keep = ~np.isnan(obs)
    if not keep.any():
        raise ValueError("no observed targets to score")
    return pred[keep], obs[keep]


def rmse(pred, obs):
    """Root mean squared error over the observed targets."""
    pred, obs = _observed(pred, obs)
    return float(np.sqrt(np.mean((obs - pred) ** 2)))


def mae(pred, obs):
    pred, obs = _observed(pred, obs)
    return float(np.mean(np.abs(obs - pred)))


def crps_empirical(samples, y):
    """CRPS of the empirical distribution of ``samples`` at observation ``y``.

    Uses ``mean|x_i - y| - (1 / 2L^2) sum_ij |x_i - x_j|``; the double sum is
    evaluated on sorted samples in O(L log L).
    """
    x = np.sort(np.asarray(samples, dtype=float).ravel())
    L = x.size
    if L == 0:
        raise ValueError("need at least one sample")
    if L == 1:
        return float(abs(x[0] - y))
    spread = np.dot(2 * np.arange(1, L + 1) - L - 1, x) / L**2
    return float(np.mean(np.abs(x - y)) - spread)


def crps_batch(samples, obs):
    """Per-pair CRPS for an ``(n, L)`` sample matrix; NaN where obs is missing."""
    s = np.sort(np.atleast_2d(np.asarray(samples, dtype=float)), axis=1)
    y = np.asarray(obs, dtype=float).ravel()
    L = s.shape[1]
    w = 2 * np.arange(1, L + 1) - L - 1
    spread = s @ w / L**2
    return np.mean(np.abs(s - y[:, None]), axis=1) - spread


def mean_crps(vset):
    if len(vset) == 0:
        raise ValueError("empty verification set")
    return float(np.mean(crps_batch(vset.samples, vset.obs)))


def reliability_diagram(vset, levels=RELIABILITY_LEVELS):
    """Empirical coverage of each nominal quantile level and the mean deviation.

    Returns ``(coverage, deviation)`` where ``coverage[i]`` is the fraction of
    observations not exceeding the forecast quantile at ``levels[i]`` and
    ``deviation`` is ``100 * mean_i |coverage[i] - levels[i]|``.
    """
    if len(vset) == 0:
        raise ValueError("empty verification set")
    levels = np.asarray(levels, dtype=float)
    q = quantile_matrix(vset.samples, levels)
    coverage = np.mean(vset.obs[:, None] <= q, axis=0)
    return coverage, float(100 * np.mean(np.abs(coverage - levels)))


def sharpness(vset, coverages=SHARPNESS_COVERAGES):
    """Mean width of central prediction intervals at each nominal coverage."""
    if len(vset) == 0:
        raise ValueError("empty verification set")
    coverages = np.asarray(coverages, dtype=float)
    beta = 1 - coverages
    lo = quantile_matrix(vset.samples, beta / 2)
    hi = quantile_matrix(vset.samples, 1 - beta / 2)
    return np.mean(hi - lo, axis=0)
