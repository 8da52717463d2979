"""Predictive distributions built from imputed target values."""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from .transform import glogit_inverse


@dataclass(frozen=True)
class PredictiveDistribution:
    """Equally weighted samples of the target, in the power domain."""

    samples: np.ndarray
    issue_time: int | None = None
    lead: int | None = None
    site: int | None = None

    def __post_init__(self):
        s = np.sort(np.asarray(self.samples, dtype=float).ravel())
        if s.size == 0:
            raise ValueError("a predictive distribution needs at least one sample")
        s.setflags(write=False)
        object.__setattr__(self, "samples", s)

    def __len__(self):
        return self.samples.size

    def mean(self):
        return point_forecast(self)

    def quantile(self, q):
        return quantile(self, q)

    def cdf(self, x):
        return np.searchsorted(self.samples, x, side="right") / self.samples.size

    def crps(self, y):
        from .metrics import crps_empirical
        return crps_empirical(self.samples, y)


def extract_target_samples(replicates, transform=None, issue_time=None, lead=None, site=None):
    """Distribution of the last entry of each completed row.

    ``replicates`` is ``(L, c)``; with a transform spec the values are mapped
    back to the power domain.
    """
    last = np.asarray(replicates, dtype=float)[..., -1]
    if transform is not None:
        last = glogit_inverse(last, transform)
    return PredictiveDistribution(np.atleast_1d(last), issue_time, lead, site)


def point_forecast(dist):
    """Sample mean."""
    return float(np.mean(dist.samples))


def _quantiles(sorted_samples, q):
    L = sorted_samples.shape[-1]
    positions = (np.arange(1, L + 1) - 0.5) / L
    return np.interp(q, positions, sorted_samples)


def quantile(dist, q):
    """Empirical quantile, interpolating order statistics at positions (i - 0.5)/L.

    Levels outside the outermost positions clamp to the sample extremes.
    """
    qa = np.asarray(q, dtype=float)
    if np.any((qa <= 0) | (qa >= 1)):
        raise ValueError(f"quantile levels must lie in (0, 1), got {q}")
    out = _quantiles(dist.samples, qa)
    return float(out) if out.ndim == 0 else out


def quantile_matrix(samples, levels):
    """Quantiles of each row of an ``(n, L)`` sample matrix at ``levels``."""
    levels = np.asarray(levels, dtype=float)
    if np.any((levels <= 0) | (levels >= 1)):
        raise ValueError("quantile levels must lie in (0, 1)")
    s = np.sort(np.atleast_2d(np.asarray(samples, dtype=float)), axis=1)
    return np.array([_quantiles(row, levels) for row in s])
