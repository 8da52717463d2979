"""Lag embedding of per-site series into the joint feature/target matrix."""

from __future__ import annotations

import logging
from dataclasses import dataclass, field

import numpy as np

log = logging.getLogger(__name__)


@dataclass(frozen=True)
class EmbeddingSpec:
    """``p`` sites, ``k`` lags per site, lead ``h`` and the 0-based target site."""

    p: int = 1
    k: int = 6
    h: int = 1
    target_site: int = 0

    def __post_init__(self):
        if self.p < 1 or self.k < 1 or self.h < 1:
            raise ValueError(f"p, k, h must all be >= 1, got {self.p}, {self.k}, {self.h}")
        if not 0 <= self.target_site < self.p:
            raise ValueError(f"target_site {self.target_site} outside [0, {self.p})")

    @property
    def n_columns(self):
        return self.p * self.k + 1

    def column_roles(self):
        """(site, lag) per feature column, lag 0 being the issue time; target is None."""
        roles = [(s, self.k - 1 - i) for s in range(self.p) for i in range(self.k)]
        return roles + [None]


@dataclass(frozen=True)
class SiteSeries:
    """One site's series; NaN marks a missing value."""

    site_id: str
    values: np.ndarray
    timestamps: np.ndarray | None = None

    def __post_init__(self):
        v = np.asarray(self.values, dtype=float)
        if np.any(np.isinf(v)):
            raise ValueError(f"site {self.site_id}: infinite values")
        object.__setattr__(self, "values", v)
        if self.timestamps is not None:
            ts = np.asarray(self.timestamps)
            if len(ts) != len(v):
                raise ValueError(f"site {self.site_id}: timestamps/values length mismatch")
            if len(ts) > 2:
                step = np.diff(ts)
                if np.any(step <= step[0] * 0) or np.any(step != step[0]):
                    raise ValueError(f"site {self.site_id}: timestamps not uniformly increasing")

    @property
    def mask(self):
        return np.isnan(self.values)


@dataclass(frozen=True)
class ObservationMatrix:
    """Embedded matrix ``z`` with its missingness mask ``m`` (True = missing).

    Cells of ``z`` under the mask hold 0.0 and carry no information. ``times``
    holds the issue-time index of each row in the source series.
    """

    z: np.ndarray
    m: np.ndarray
    spec: EmbeddingSpec
    times: np.ndarray = field(default=None)

    def __post_init__(self):
        if self.z.shape != self.m.shape:
            raise ValueError(f"z {self.z.shape} and mask {self.m.shape} differ in shape")
        if self.z.ndim != 2 or self.z.shape[1] != self.spec.n_columns:
            raise ValueError(f"expected {self.spec.n_columns} columns, got shape {self.z.shape}")
        if self.times is None:
            object.__setattr__(self, "times", np.arange(len(self.z)))
        for a in (self.z, self.m, self.times):
            a.setflags(write=False)

    @property
    def n_rows(self):
        return self.z.shape[0]

    @property
    def column_roles(self):
        return self.spec.column_roles()

    def take(self, rows):
        rows = np.asarray(rows)
        return ObservationMatrix(self.z[rows].copy(), self.m[rows].copy(), self.spec,
                                 self.times[rows].copy())

    def drop_empty_rows(self):
        """Drop rows where every cell is missing; logs how many were removed."""
        keep = ~self.m.all(axis=1)
        dropped = int((~keep).sum())
        if dropped:
            log.info("dropped %d wholly-missing rows", dropped)
        return self.take(np.flatnonzero(keep))


def _stack(series):
    if not series:
        raise ValueError("no series given")
    lengths = {len(s.values) for s in series}
    if len(lengths) != 1:
        raise ValueError(f"series lengths differ: {sorted(lengths)}")
    return np.vstack([s.values for s in series])


def build_training_matrix(series, spec):
    """Embed ``series`` into an :class:`ObservationMatrix`.

    Row ``t`` holds the ``k`` most recent values of every site up to time
    ``t`` (oldest first, site by site) followed by the target site's value at
    ``t + h``. Rows with a missing target are kept; callers decide about
    wholly-missing rows (see :meth:`ObservationMatrix.drop_empty_rows`).
    """
    y = _stack(series)
    if y.shape[0] != spec.p:
        raise ValueError(f"expected {spec.p} series, got {y.shape[0]}")
    T = y.shape[1]
    k, h = spec.k, spec.h
    if T < k + h:
        raise ValueError(f"series length {T} shorter than k + h = {k + h}")
    n = T - k - h + 1
    t = np.arange(k - 1, k - 1 + n)
    lag_idx = t[:, None] + np.arange(-k + 1, 1)[None, :]
    cols = [y[s][lag_idx] for s in range(spec.p)]
    cols.append(y[spec.target_site][t + h][:, None])
    raw = np.hstack(cols)
    m = np.isnan(raw)
    z = np.where(m, 0.0, raw)
    return ObservationMatrix(z, m, spec, t)


def build_forecast_row(windows, spec):
    """Operational row from the last ``k`` values of each site.

    ``windows`` is a sequence of ``p`` length-``k`` arrays (NaN = missing).
    Returns ``(row, mask)``; the target position is always masked.
    """
    if len(windows) != spec.p:
        raise ValueError(f"expected {spec.p} windows, got {len(windows)}")
    parts = []
    for s, w in enumerate(windows):
        w = np.asarray(w, dtype=float)
        if w.shape != (spec.k,):
            raise ValueError(f"window {s} has shape {w.shape}, expected ({spec.k},)")
        parts.append(w)
    raw = np.concatenate(parts + [[np.nan]])
    mask = np.isnan(raw)
    return np.where(mask, 0.0, raw), mask
