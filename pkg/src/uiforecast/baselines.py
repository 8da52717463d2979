"""Reference forecasters and impute-then-predict pipelines.

``rf_m`` fills missing features with training means, ``rf_r`` with iterative
forest predictions (the FCS engine with conditional-mean updates), and
``rf_c`` trains on complete data. ``PatternForecaster`` fits one forest per
requested missingness pattern using only the observed features.
"""

from __future__ import annotations

import logging
from dataclasses import dataclass

import numpy as np

from .fcs import FcsConfig, fit_fcs, impute_rows
from .forecast import PredictiveDistribution
from .rf import ForestConfig, fit_forest

log = logging.getLogger(__name__)

ITP_METHODS = ("rf_m", "rf_r", "rf_c")


def _zm(data):
    if isinstance(data, tuple):
        z, m = data
    else:
        z, m = data.z, data.m
    return np.asarray(z, dtype=float), np.asarray(m, dtype=bool)


def persistence_forecast(window, fallback=None):
    """Most recent observed value of ``window`` (NaN = missing).

    A fully missing window returns ``fallback`` (typically the climatological
    mean); without one it raises.
    """
    w = np.asarray(window, dtype=float)
    obs = np.flatnonzero(~np.isnan(w))
    if len(obs):
        return float(w[obs[-1]])
    if fallback is None:
        raise ValueError("window has no observed value and no fallback was given")
    log.debug("persistence: empty window, using fallback %.4f", fallback)
    return float(fallback)


def climatology_distribution(history, cap=None, rng=None):
    """Empirical distribution of the observed values in ``history``.

    With ``cap``, at most ``cap`` values are kept by uniform subsampling
    without replacement.
    """
    h = np.asarray(history, dtype=float).ravel()
    h = h[~np.isnan(h)]
    if h.size == 0:
        raise ValueError("climatology needs at least one observed value")
    if cap is not None and h.size > cap:
        h = np.random.default_rng(rng).choice(h, size=cap, replace=False)
    return PredictiveDistribution(h)


def mean_impute(data):
    """Replace every missing cell with its column's observed mean."""
    z, m = _zm(data)
    n_obs = (~m).sum(axis=0)
    if np.any(n_obs == 0):
        raise ValueError(f"columns {np.flatnonzero(n_obs == 0).tolist()} are fully missing")
    means = np.where(m, 0.0, z).sum(axis=0) / n_obs
    return np.where(m, means[None, :], z)


def regression_impute(data, cfg=FcsConfig()):
    """Iterative random-forest imputation with conditional-mean updates."""
    return fit_fcs(data, cfg, policy="mean").completed


class ItpForecaster:
    """Impute the features, then predict the target with a random forest.

    Args:
        method: ``"rf_m"`` (mean imputation), ``"rf_r"`` (regression
            imputation) or ``"rf_c"`` (no imputation; complete data required).
        forest: settings of the forecasting forest.
        fcs: settings of the regression imputer (``rf_r`` only).
    """

    def __init__(self, method, forest=ForestConfig(), fcs=FcsConfig()):
        if method not in ITP_METHODS:
            raise ValueError(f"unknown ITP method {method!r}; expected one of {ITP_METHODS}")
        self.method = method
        self.forest_cfg = forest
        self.fcs_cfg = fcs

    def _impute_features(self, x, mx):
        if self.method == "rf_c":
            if mx.any():
                raise ValueError("rf_c requires complete features")
            return x
        if self.method == "rf_m":
            return np.where(mx, self.means_[None, :], x)
        out = impute_rows(self.imputer_, x, mx, n_imputations=1, policy="mean",
                          allow_empty=True)
        return out[0]

    def fit(self, data):
        z, m = _zm(data)
        x, mx = z[:, :-1], m[:, :-1]
        if self.method == "rf_m":
            n_obs = (~mx).sum(axis=0)
            if np.any(n_obs == 0):
                raise ValueError("a feature column is fully missing")
            self.means_ = np.where(mx, 0.0, x).sum(axis=0) / n_obs
            xc = np.where(mx, self.means_[None, :], x)
        elif self.method == "rf_r":
            keep = ~mx.all(axis=1)
            self.imputer_ = fit_fcs((x[keep], mx[keep]), self.fcs_cfg, policy="mean")
            xc = np.empty_like(x)
            xc[keep] = self.imputer_.completed
            if (~keep).any():
                xc[~keep] = self._impute_features(x[~keep], mx[~keep])
        else:
            xc = self._impute_features(x, mx)
        has_target = ~m[:, -1]
        self.model_ = fit_forest(xc[has_target], z[has_target, -1], self.forest_cfg)
        return self

    def predict(self, rows, masks):
        """Point forecasts for ``(n, c)`` rows; the target cell is ignored."""
        rows = np.atleast_2d(np.asarray(rows, dtype=float))
        masks = np.atleast_2d(np.asarray(masks, dtype=bool))
        x = self._impute_features(rows[:, :-1], masks[:, :-1])
        return self.model_.predict(x)


def itp_forecaster(data, method, forest=ForestConfig(), fcs=FcsConfig()):
    return ItpForecaster(method, forest, fcs).fit(data)


def pattern_of(mask_row):
    """Pattern key of a row: observed-flags of its feature cells."""
    return tuple(bool(v) for v in ~np.asarray(mask_row, dtype=bool)[:-1])


class UnseenPatternError(KeyError):
    pass


@dataclass
class PatternForecaster:
    """One forest per requested feature pattern."""

    models: dict

    def predict(self, rows, masks):
        rows = np.atleast_2d(np.asarray(rows, dtype=float))
        masks = np.atleast_2d(np.asarray(masks, dtype=bool))
        out = np.empty(len(rows))
        for i, (r, mk) in enumerate(zip(rows, masks)):
            key = pattern_of(mk)
            if key not in self.models:
                raise UnseenPatternError(f"no model trained for pattern {key}")
            cols = np.flatnonzero(key)
            out[i] = self.models[key].predict(r[cols][None, :])[0]
        return out


def retrain_per_pattern(data, patterns, forest=ForestConfig(), min_rows=10):
    """Fit a forest for each pattern on the rows complete over its observed features.

    ``patterns`` are tuples of booleans over the feature columns (True =
    observed). Each model sees only its observed features and only training
    rows where those features and the target are observed.
    """
    z, m = _zm(data)
    models = {}
    for pat in patterns:
        key = tuple(bool(v) for v in pat)
        if len(key) != z.shape[1] - 1:
            raise ValueError(f"pattern {key} has wrong length for {z.shape[1] - 1} features")
        cols = np.flatnonzero(key)
        if len(cols) == 0:
            raise ValueError("pattern with no observed features")
        rows = ~m[:, cols].any(axis=1) & ~m[:, -1]
        if rows.sum() < min_rows:
            raise ValueError(f"pattern {key}: only {rows.sum()} complete rows (< {min_rows})")
        models[key] = fit_forest(z[rows][:, cols], z[rows, -1], forest)
    return PatternForecaster(models)
