"""Fully conditional specification: Gibbs-style training and operational imputation.

Training cycles through the columns of the embedded matrix, refitting each
column's PMM model on the current completion of the others and redrawing its
missing cells. The operational stage freezes the fitted column models and runs
the same sweeps over new rows, yielding ``L`` completed copies per row.
"""

from __future__ import annotations

import logging
import time
from dataclasses import dataclass, field

import numpy as np

from .pmm import DonorPoolError, PmmColumnModel, fit_pmm_column
from .rf import ForestConfig
from .seeding import child_rng, derive_seed

log = logging.getLogger(__name__)

POLICIES = ("pmm", "mean")


@dataclass(frozen=True)
class FcsConfig:
    """Iteration and imputation settings.

    Attributes:
        iterations: training sweeps over all columns.
        n_imputations: number ``L`` of completed copies per operational row.
        column_order: visiting order of columns; ``None`` is natural order.
        forest: settings of every column forest (its seed is overridden per
            sweep and column).
        d: donor pool size.
        seed: base seed of the whole procedure.
        forecast_iterations: operational sweeps per row.
        init: ``"zero"`` or ``"mean"`` initial fill of missing cells.
        oob_candidates: use out-of-bag forest predictions as the candidates of
            training rows (see :func:`~uiforecast.pmm.fit_pmm_column`).
    """

    iterations: int = 10
    n_imputations: int = 99
    column_order: tuple | None = None
    forest: ForestConfig = field(default_factory=ForestConfig)
    d: int = 10
    seed: int = 0
    forecast_iterations: int = 10
    init: str = "zero"
    oob_candidates: bool = True

    def __post_init__(self):
        if self.iterations < 1 or self.forecast_iterations < 1:
            raise ValueError("iteration counts must be >= 1")
        if self.n_imputations < 1:
            raise ValueError(f"n_imputations must be >= 1, got {self.n_imputations}")
        if self.init not in ("zero", "mean"):
            raise ValueError(f"init must be 'zero' or 'mean', got {self.init!r}")
        if self.column_order is not None:
            object.__setattr__(self, "column_order", tuple(int(c) for c in self.column_order))

    def order(self, n_columns):
        if self.column_order is None:
            return tuple(range(n_columns))
        if sorted(self.column_order) != list(range(n_columns)):
            raise ValueError(f"column_order {self.column_order} is not a permutation of "
                             f"0..{n_columns - 1}")
        return self.column_order


@dataclass(frozen=True)
class FcsModel:
    """One fitted PMM model per column plus the configuration that produced them.

    ``completed`` is the final completion of the training matrix and
    ``fill`` the per-column initial fill used for new rows.
    """

    columns: tuple
    config: FcsConfig
    fill: np.ndarray
    completed: np.ndarray | None = None
    policy: str = "pmm"
    timings: tuple = ()

    @property
    def n_columns(self):
        return len(self.columns)


def _initial_fill(z, m, how):
    if how == "zero":
        return np.zeros(z.shape[1])
    obs = np.where(m, np.nan, z)
    with np.errstate(invalid="ignore"):
        means = np.nanmean(obs, axis=0)
    return np.nan_to_num(means)


def _fill(z, m, fill):
    return np.where(m, fill[None, :], z)


def fit_fcs(data, cfg=FcsConfig(), policy="pmm", trace=None):
    """Estimate the column models on an :class:`ObservationMatrix` or ``(z, mask)`` pair.

    Missing cells start at the initial fill; then every sweep refits each
    column (in ``cfg.column_order``) on its observed rows given the current
    completion of the other columns and redraws its missing cells. With
    ``policy="mean"`` the redraw is replaced by the forest's prediction.

    A column without missing cells cannot change the completion, so its fit
    only matters in the last sweep; earlier refits are skipped. The forest
    seed for sweep ``eta`` and column ``j`` is derived from
    ``(cfg.seed, eta, j)``.

    ``trace``, if given, is called as ``trace(eta, j, Z_before, Z_after)``.
    """
    if policy not in POLICIES:
        raise ValueError(f"unknown policy {policy!r}")
    z, m = (data if isinstance(data, tuple) else (data.z, data.m))
    z, m = np.asarray(z, dtype=float), np.asarray(m, dtype=bool)
    if m.all(axis=1).any():
        raise ValueError("training matrix has wholly-missing rows; drop them first")
    n_cols = z.shape[1]
    order = cfg.order(n_cols)
    observed = [np.flatnonzero(~m[:, j]) for j in range(n_cols)]
    for j in range(n_cols):
        if len(observed[j]) < cfg.d:
            raise DonorPoolError(
                f"column {j}: {len(observed[j])} observed rows, fewer than donor pool "
                f"size {cfg.d}")

    fill = _initial_fill(z, m, cfg.init)
    Z = _fill(z, m, fill)
    models = [None] * n_cols
    timings = []
    for eta in range(1, cfg.iterations + 1):
        last = eta == cfg.iterations
        for j in order:
            mis = np.flatnonzero(m[:, j])
            if len(mis) == 0 and not last:
                continue
            t0 = time.perf_counter()
            before = Z.copy() if trace else None
            forest_cfg = cfg.forest.replace(seed=derive_seed(cfg.seed, eta, j))
            model = fit_pmm_column(Z, observed[j], j, forest_cfg, cfg.d, cfg.oob_candidates)
            if len(mis):
                if policy == "pmm":
                    picks = child_rng(cfg.seed, eta, j, 1).integers(0, cfg.d, size=len(mis))
                    Z[mis, j] = model.draw(model.candidates[mis], picks)
                else:
                    Z[mis, j] = model.candidates[mis]
            models[j] = model
            elapsed = time.perf_counter() - t0
            timings.append((eta, j, elapsed))
            log.debug("sweep %d column %d fitted in %.3fs", eta, j, elapsed)
            if trace:
                trace(eta, j, before, Z.copy())
    return FcsModel(tuple(models), cfg, fill, Z, policy, tuple(timings))


def impute_rows(model, rows, masks, iterations=None, n_imputations=None, seed=None,
                allow_empty=False, policy=None):
    """Complete new rows ``n_imputations`` times with the frozen column models.

    Args:
        model: fitted :class:`FcsModel`.
        rows: ``(n, c)`` values; entries under ``masks`` are ignored.
        masks: ``(n, c)`` booleans, True where missing.
        iterations: sweeps per replicate (default ``config.forecast_iterations``).
        n_imputations: replicate count ``L`` (default ``config.n_imputations``).
        seed: replicate ``l`` draws from a stream derived from ``(seed, l)``.
        allow_empty: accept rows with no observed cell. Their sweeps then run
            from the initial fill alone.
        policy: ``"pmm"`` draws donors, ``"mean"`` uses forest predictions
            (default: the policy the model was trained with).

    Returns:
        ``(L, n, c)`` array of completed rows; observed cells are copied unchanged.

    Rows with a single missing cell only need that cell drawn once, so they
    sit out all but the final sweep.
    """
    cfg = model.config
    iterations = cfg.forecast_iterations if iterations is None else iterations
    L = cfg.n_imputations if n_imputations is None else n_imputations
    seed = cfg.seed if seed is None else seed
    policy = model.policy if policy is None else policy
    if policy not in POLICIES:
        raise ValueError(f"unknown policy {policy!r}")
    rows = np.atleast_2d(np.asarray(rows, dtype=float))
    masks = np.atleast_2d(np.asarray(masks, dtype=bool))
    n, c = rows.shape
    if masks.shape != rows.shape or c != model.n_columns:
        raise ValueError(f"rows {rows.shape} / masks {masks.shape} do not match a "
                         f"{model.n_columns}-column model")
    if not allow_empty and masks.all(axis=1).any():
        bad = np.flatnonzero(masks.all(axis=1))
        raise ValueError(f"rows {bad.tolist()[:10]} have no observed cells")
    if L > 1 and policy == "mean":
        L = 1

    order = cfg.order(c)
    rngs = [child_rng(seed, ell) for ell in range(L)]
    base = _fill(rows, masks, model.fill)
    Z = np.tile(base, (L, 1))
    multi = masks.sum(axis=1) > 1
    for sweep in range(iterations):
        final = sweep == iterations - 1
        for j in order:
            active = masks[:, j] if final else masks[:, j] & multi
            local = np.flatnonzero(active)
            if len(local) == 0:
                continue
            idx = (np.arange(L)[:, None] * n + local[None, :]).ravel()
            cm = model.columns[j]
            zhat = cm.predict(np.delete(Z[idx], j, axis=1))
            if policy == "pmm":
                picks = np.concatenate([r.integers(0, cm.d, size=len(local)) for r in rngs])
                Z[idx, j] = cm.draw(zhat, picks)
            else:
                Z[idx, j] = zhat
    return Z.reshape(L, n, c)
