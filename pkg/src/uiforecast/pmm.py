"""Predictive mean matching conditionals backed by random forests."""

from __future__ import annotations

from dataclasses import dataclass

import numba
import numpy as np

from .rf import ForestConfig, RandomForestModel, fit_forest


class DonorPoolError(ValueError):
    """A column has fewer observed rows than the donor pool size."""


@numba.njit(cache=True, nogil=True)
def _pool(sorted_pred, sorted_rows, q, d):
    """Positions (into the sorted arrays) of the ``d`` donors nearest to ``q``.

    Nearness is ``|q - prediction|``; ties go to the lower row index. The
    result is ordered by (distance, row).
    """
    n = sorted_pred.shape[0]
    hi = np.searchsorted(sorted_pred, q)
    lo = hi - 1
    # widen until d taken and the next candidate is strictly farther
    taken = 0
    worst = -1.0
    while True:
        dl = q - sorted_pred[lo] if lo >= 0 else np.inf
        dr = sorted_pred[hi] - q if hi < n else np.inf
        nxt = min(dl, dr)
        if nxt == np.inf or (taken >= d and nxt > worst):
            break
        if dl <= dr:
            lo -= 1
        else:
            hi += 1
        taken += 1
        worst = nxt
    pos = np.arange(lo + 1, hi)
    dist = np.abs(q - sorted_pred[pos])
    by_row = np.argsort(sorted_rows[pos], kind="mergesort")
    pos = pos[by_row]
    dist = dist[by_row]
    by_dist = np.argsort(dist, kind="mergesort")
    return pos[by_dist[:d]]


@numba.njit(cache=True, nogil=True)
def _draw(sorted_pred, sorted_rows, sorted_vals, queries, picks, d):
    out = np.empty(queries.shape[0])
    for i in range(queries.shape[0]):
        pool = _pool(sorted_pred, sorted_rows, queries[i], d)
        out[i] = sorted_vals[pool[picks[i]]]
    return out


@dataclass(frozen=True)
class PmmColumnModel:
    """Fitted conditional model for one column of the embedded matrix.

    Attributes:
        column: index ``j`` of the modelled column.
        forest: regression of column ``j`` on all other columns.
        candidates: forest predictions for every training row.
        donor_rows: training rows where column ``j`` was observed.
        donor_values: the observed values at ``donor_rows``.
        d: donor pool size.
    """

    column: int
    forest: RandomForestModel
    candidates: np.ndarray
    donor_rows: np.ndarray
    donor_values: np.ndarray
    d: int

    def __post_init__(self):
        if self.d < 1:
            raise DonorPoolError(f"donor pool size must be >= 1, got {self.d}")
        if len(self.donor_rows) < self.d:
            raise DonorPoolError(
                f"column {self.column}: {len(self.donor_rows)} observed rows, "
                f"fewer than donor pool size {self.d}")
        pred = self.candidates[self.donor_rows]
        order = np.lexsort((self.donor_rows, pred))
        object.__setattr__(self, "_sorted", (
            np.ascontiguousarray(pred[order]),
            np.ascontiguousarray(self.donor_rows[order]),
            np.ascontiguousarray(self.donor_values[order]),
        ))

    def predict(self, features):
        """Conditional-mean prediction from the other columns."""
        return self.forest.predict(features)

    def donor_pool(self, zhat):
        """Training rows forming the donor pool of one predicted value."""
        pred, rows, _ = self._sorted
        return rows[_pool(pred, rows, float(zhat), self.d)]

    def draw(self, zhat, picks):
        """Donor values for predictions ``zhat``; ``picks[i]`` in ``[0, d)`` selects
        the donor (pool ordered by distance, then row)."""
        zhat = np.ascontiguousarray(zhat, dtype=float)
        picks = np.ascontiguousarray(picks, dtype=np.int64)
        pred, rows, vals = self._sorted
        return _draw(pred, rows, vals, zhat, picks, self.d)


def fit_pmm_column(Zc, observed_rows, j, cfg=ForestConfig(), d=5, oob=True):
    """Fit the forest for column ``j`` on its observed rows and store candidates.

    ``Zc`` must be complete (missing cells carry current imputations). The
    forest is trained on ``observed_rows`` only, but candidate predictions are
    made for all rows. With ``oob`` (and bootstrapping on) the candidates of
    the training rows are out-of-bag predictions, so a donor's candidate does
    not absorb its own noise.
    """
    Zc = np.asarray(Zc, dtype=float)
    observed_rows = np.asarray(observed_rows, dtype=np.int64)
    if len(observed_rows) < d:
        raise DonorPoolError(
            f"column {j}: {len(observed_rows)} observed rows, fewer than donor pool size {d}")
    X = np.delete(Zc, j, axis=1)
    forest = fit_forest(X[observed_rows], Zc[observed_rows, j], cfg)
    candidates = forest.predict(X)
    if oob and forest.inbag is not None:
        candidates[observed_rows] = forest.predict_oob(X[observed_rows])
    return PmmColumnModel(j, forest, candidates, observed_rows,
                          Zc[observed_rows, j].copy(), d)


def impute_pmm(model, query_features, rng):
    """PMM imputations for each row of ``query_features`` (all other columns).

    Each value is an observed value of the column, drawn uniformly from the
    ``d`` donors whose candidate predictions are nearest the query's prediction.
    """
    X = np.atleast_2d(np.asarray(query_features, dtype=float))
    zhat = model.predict(X)
    picks = rng.integers(0, model.d, size=len(zhat))
    return model.draw(zhat, picks)
