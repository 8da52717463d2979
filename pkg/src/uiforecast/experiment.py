"""Config-driven Monte-Carlo studies and case studies.

A study is a list of *conditions* (which series feed the model and how each
one is masked) crossed with replicates and lead times. Every random stream
is derived from ``(seed, condition, replicate, lead)``, so results do not
depend on the number of worker threads.
"""

from __future__ import annotations

import copy
import logging
import time
from concurrent.futures import ThreadPoolExecutor
from dataclasses import dataclass
from pathlib import Path

import numpy as np
import yaml

from .baselines import ItpForecaster, climatology_distribution, persistence_forecast, \
    retrain_per_pattern
from .embedding import EmbeddingSpec, SiteSeries, build_training_matrix
from .fcs import FcsConfig, fit_fcs, impute_rows
from .io import DataError, canonical_json, config_hash, read_series_csv, version_string, \
    write_json, write_table
from .metrics import (RELIABILITY_LEVELS, SHARPNESS_COVERAGES, VerificationSet, crps_batch,
                      reliability_diagram, rmse, sharpness)
from .rf import ForestConfig
from .seeding import derive_seed
from .simulate import (ArSpec, MissingnessSpec, VarSpec, chronological_split, gen_ar,
                       gen_bounded_sites, gen_var, make_mask)
from .transform import TransformSpec, glogit_forward, glogit_inverse

log = logging.getLogger(__name__)

METHODS = ("fcs", "persistence", "climatology", "rf_m", "rf_r", "rf_c", "retrain")
PROBABILISTIC = ("fcs", "climatology")
DATA_SOURCES = ("ar", "var", "bounded", "csv")


class ConfigError(ValueError):
    """The experiment configuration is invalid."""


DEFAULTS = {
    "name": "experiment",
    "seed": None,
    "replicates": 1,
    "threads": 1,
    "output_dir": None,
    "train_fraction": 0.8,
    "data": {"source": "ar", "length": 8760, "n_sites": 1, "path": None,
             "regenerate": False},
    "transform": {"enabled": False, "nu": 1.0, "eps": 1e-3},
    "embedding": {"k": 6, "leads": [1], "target_site": 0},
    "conditions": [{"label": "complete", "sites": None, "missing": []}],
    "methods": ["fcs"],
    "fcs": {"iterations": 10, "n_imputations": 99, "d": 10, "forecast_iterations": 10,
            "init": "zero", "oob_candidates": True},
    "forest": {"n_trees": 100, "min_node_size": 5, "mtry": None, "bootstrap": True},
    "climatology_cap": 2000,
    "retrain_patterns": ["complete", "last_missing"],
    "reliability_levels": [float(v) for v in RELIABILITY_LEVELS],
    "sharpness_coverages": [float(v) for v in SHARPNESS_COVERAGES],
}

RATES = [round(0.05 * i, 2) for i in range(1, 11)]


def _sporadic(sites, rate):
    return {"sites": sites, "kind": "sporadic", "rate": rate}


def _blocks(sites, count):
    return {"sites": sites, "kind": "block", "count": count, "len_min": 5, "len_max": 30}


def _presets():
    case_data = {"source": "bounded", "length": 61320, "n_sites": 1}
    case_common = {
        "transform": {"enabled": True},
        "embedding": {"k": 6, "leads": [1, 2, 3, 4, 5, 6]},
        "methods": ["persistence", "climatology", "rf_m", "rf_r", "rf_c", "retrain", "fcs"],
        "replicates": 1,
    }
    var_conditions = []
    for i, r in enumerate(RATES):
        var_conditions += [
            {"label": f"both/{r}", "sites": [0, 1], "missing": [_sporadic([0], r)], "mask_key": i},
            {"label": f"single/{r}", "sites": [0], "missing": [_sporadic([0], r)], "mask_key": i},
            {"label": f"both_missing/{r}", "sites": [0, 1],
             "missing": [_sporadic([0, 1], r)], "mask_key": i},
        ]
    aux = [{"label": "no_afs", "sites": [0], "missing": [_sporadic([0], 0.2)], "mask_key": 0},
           {"label": "afs", "sites": [0, 1, 2], "missing": [_sporadic([0], 0.2)], "mask_key": 0}]
    for r in (0.05, 0.1, 0.2):
        aux.append({"label": f"afs_{int(r * 100)}pct_missing", "sites": [0, 1, 2],
                    "missing": [_sporadic([0], 0.2), _sporadic([1, 2], r)], "mask_key": 0})
    return {
        "ar-study": {
            "name": "ar-study", "seed": 2023, "replicates": 100,
            "data": {"source": "ar", "length": 8760},
            "embedding": {"k": 2, "leads": [1]},
            "conditions": [{"label": f"rate/{r}", "missing": [_sporadic([0], r)]} for r in RATES],
            "methods": ["fcs"],
        },
        "var-study": {
            "name": "var-study", "seed": 2023, "replicates": 100,
            "data": {"source": "var", "length": 8760},
            "embedding": {"k": 2, "leads": [1]},
            "conditions": var_conditions,
            "methods": ["fcs"],
        },
        "case1-20": {**case_common, "name": "case1-20", "seed": 2023, "data": case_data,
                     "conditions": [{"label": "sporadic/0.2", "missing": [_sporadic([0], 0.2)]}]},
        "case1-10": {**case_common, "name": "case1-10", "seed": 2023, "data": case_data,
                     "conditions": [{"label": "sporadic/0.1", "missing": [_sporadic([0], 0.1)]}]},
        "case2-block": {**case_common, "name": "case2-block", "seed": 2023, "data": case_data,
                        "conditions": [{"label": "blocks/600", "missing": [_blocks([0], 600)]}]},
        "case3-aux": {**case_common, "name": "case3-aux", "seed": 2023,
                      "data": {**case_data, "n_sites": 3},
                      "embedding": {"k": 6, "leads": [1]},
                      "methods": ["climatology", "fcs"],
                      "conditions": aux},
    }


PRESETS = _presets()


def _merge(base, over):
    out = copy.deepcopy(base)
    for k, v in over.items():
        if isinstance(v, dict) and isinstance(out.get(k), dict):
            out[k] = _merge(out[k], v)
        else:
            out[k] = copy.deepcopy(v)
    return out


def resolve_config(raw=None, overrides=None):
    """Fill defaults (and a named ``preset``) into a raw config dict and validate it."""
    raw = dict(raw or {})
    preset = raw.pop("preset", None)
    base = DEFAULTS
    if preset is not None:
        if preset not in PRESETS:
            raise ConfigError(f"unknown preset {preset!r}; known: {sorted(PRESETS)}")
        base = _merge(DEFAULTS, PRESETS[preset])
    cfg = _merge(base, raw)
    if overrides:
        cfg = _merge(cfg, overrides)
    _validate(cfg)
    return cfg


def load_config(path, overrides=None):
    try:
        raw = yaml.safe_load(Path(path).read_text()) or {}
    except (OSError, yaml.YAMLError) as exc:
        raise ConfigError(f"cannot read config {path}: {exc}") from None
    if not isinstance(raw, dict):
        raise ConfigError(f"{path}: top level must be a mapping")
    return resolve_config(raw, overrides)


def _validate(cfg):
    unknown = set(cfg) - set(DEFAULTS)
    if unknown:
        raise ConfigError(f"unknown config keys: {sorted(unknown)}")
    if cfg["seed"] is None or not isinstance(cfg["seed"], int):
        raise ConfigError("an integer seed is required")
    if not cfg["methods"]:
        raise ConfigError("method list is empty")
    bad = [m for m in cfg["methods"] if m not in METHODS]
    if bad:
        raise ConfigError(f"unknown methods {bad}; known: {list(METHODS)}")
    if cfg["data"]["source"] not in DATA_SOURCES:
        raise ConfigError(f"unknown data source {cfg['data']['source']!r}")
    if cfg["data"]["source"] == "csv" and not cfg["data"]["path"]:
        raise ConfigError("csv data source needs data.path")
    if cfg["replicates"] < 1 or cfg["threads"] < 1:
        raise ConfigError("replicates and threads must be >= 1")
    if not cfg["conditions"]:
        raise ConfigError("no conditions")
    if not 0 < cfg["train_fraction"] < 1:
        raise ConfigError("train_fraction must lie in (0, 1)")
    for c in cfg["conditions"]:
        if "label" not in c:
            raise ConfigError(f"condition without label: {c}")
        for mspec in c.get("missing", []):
            if mspec.get("kind") not in ("sporadic", "block"):
                raise ConfigError(f"condition {c['label']}: bad missingness kind {mspec.get('kind')!r}")
            if mspec["kind"] == "sporadic" and not 0 <= mspec.get("rate", -1) <= 0.5:
                raise ConfigError(f"condition {c['label']}: sporadic rate must lie in [0, 0.5]")
    labels = [c["label"] for c in cfg["conditions"]]
    if len(set(labels)) != len(labels):
        raise ConfigError("condition labels must be unique")
    try:
        fcs_config(cfg)
        TransformSpec(cfg["transform"]["nu"], cfg["transform"]["eps"])
        for h in cfg["embedding"]["leads"]:
            EmbeddingSpec(1, cfg["embedding"]["k"], h, 0)
    except (TypeError, ValueError) as exc:
        raise ConfigError(str(exc)) from None


def forest_config(cfg, seed=0):
    return ForestConfig(seed=seed, **cfg["forest"])


def fcs_config(cfg, seed=0):
    return FcsConfig(forest=forest_config(cfg), seed=seed, **cfg["fcs"])


# -- data -------------------------------------------------------------------

def load_dataset(cfg, replicate=0):
    """Complete (or CSV-given) values of shape ``(p, T)``."""
    d = cfg["data"]
    key = replicate if d["regenerate"] else 0
    rng = np.random.default_rng(derive_seed(cfg["seed"], 0xDA7A, key))
    if d["source"] == "ar":
        return gen_ar(ArSpec(length=d["length"]), rng)[None, :]
    if d["source"] == "var":
        return gen_var(VarSpec(length=d["length"]), rng)
    if d["source"] == "bounded":
        return gen_bounded_sites(d["n_sites"], d["length"], rng)
    _, _, values = read_series_csv(d["path"])
    return values


def condition_mask(cfg, cidx, replicate, shape):
    cond = cfg["conditions"][cidx]
    key = cond.get("mask_key", cidx)
    mask = np.zeros(shape, dtype=bool)
    for n, ms in enumerate(cond.get("missing", [])):
        spec = MissingnessSpec(kind=ms["kind"], rate=ms.get("rate", 0.0),
                               count=ms.get("count", 600), len_min=ms.get("len_min", 5),
                               len_max=ms.get("len_max", 30), sites=tuple(ms["sites"]),
                               seed=derive_seed(cfg["seed"], key, n))
        if max(spec.sites) >= shape[0]:
            raise ConfigError(f"condition {cond['label']}: site index out of range")
        mask |= make_mask(spec, shape, replicate)
    return mask


@dataclass
class Split:
    """Embedded train/test data for one (condition, replicate, lead)."""

    spec: EmbeddingSpec
    power: object          # ObservationMatrix in the power domain, with missingness
    model: object          # same, in the modelling (possibly transformed) domain
    full: object           # complete-data ObservationMatrix (power domain)
    train: np.ndarray
    test: np.ndarray
    target_pos: int
    transform: TransformSpec | None

    @property
    def obs(self):
        te = self.test
        return np.where(self.power.m[te, -1], np.nan, self.power.z[te, -1])


def prepare_split(cfg, cidx, replicate, lead, values=None):
    cond = cfg["conditions"][cidx]
    if values is None:
        values = load_dataset(cfg, replicate)
    p_all = values.shape[0]
    sites = cond.get("sites") or list(range(p_all))
    target = cfg["embedding"]["target_site"]
    if target not in sites:
        raise ConfigError(f"condition {cond['label']}: target site {target} not among {sites}")
    mask = condition_mask(cfg, cidx, replicate, values.shape) | np.isnan(values)
    masked = np.where(mask, np.nan, values)
    spec = EmbeddingSpec(len(sites), cfg["embedding"]["k"], lead, sites.index(target))
    power = build_training_matrix([SiteSeries(str(s), masked[s]) for s in sites], spec)
    full = build_training_matrix([SiteSeries(str(s), values[s]) for s in sites], spec)
    tspec = None
    model = power
    if cfg["transform"]["enabled"]:
        tspec = TransformSpec(cfg["transform"]["nu"], cfg["transform"]["eps"])
        z = np.where(power.m, 0.0, glogit_forward(power.z, tspec))
        model = type(power)(z, power.m.copy(), spec, power.times.copy())
    train, test = chronological_split(power.n_rows, cfg["train_fraction"])
    return Split(spec, power, model, full, train, test, spec.target_site, tspec)


# -- methods ----------------------------------------------------------------

def _task_seed(cfg, cidx, replicate, lead, stream):
    return derive_seed(cfg["seed"], cidx, replicate, lead, stream)


def fit_fcs_for(cfg, split, cidx, replicate, lead):
    train = split.model.take(split.train).drop_empty_rows()
    return fit_fcs(train, fcs_config(cfg, _task_seed(cfg, cidx, replicate, lead, 1)))


def fcs_samples(cfg, model, split, cidx, replicate, lead):
    """``(n_test, L)`` samples in the power domain."""
    te = split.model.take(split.test)
    m = te.m.copy()
    m[:, -1] = True
    Z = impute_rows(model, te.z, m, allow_empty=True,
                    seed=_task_seed(cfg, cidx, replicate, lead, 2))
    y = Z[:, :, -1].T
    return glogit_inverse(y, split.transform) if split.transform else y


def _climatology(cfg, split, cidx, replicate, lead):
    tr = split.power.take(split.train)
    hist = np.where(tr.m[:, -1], np.nan, tr.z[:, -1])
    return climatology_distribution(hist, cfg["climatology_cap"],
                                    _task_seed(cfg, cidx, replicate, lead, 3))


def _persistence(split, fallback):
    te = split.power.take(split.test)
    k = split.spec.k
    cols = slice(split.target_pos * k, (split.target_pos + 1) * k)
    windows = np.where(te.m[:, cols], np.nan, te.z[:, cols])
    return np.array([persistence_forecast(w, fallback) for w in windows])


def _named_pattern(name, spec):
    pk = spec.p * spec.k
    pat = [True] * pk
    if name == "complete":
        return tuple(pat)
    if name == "last_missing":
        pat[(spec.target_site + 1) * spec.k - 1] = False
        return tuple(pat)
    raise ConfigError(f"unknown retrain pattern {name!r}")


def _point_record(pred, obs):
    vset = VerificationSet(np.asarray(pred)[:, None], obs)
    return {"n_scored": len(vset), "rmse": rmse(vset.point(), vset.obs),
            "crps": float(np.mean(crps_batch(vset.samples, vset.obs)))}


def _prob_record(samples, obs, cfg):
    vset = VerificationSet(samples, obs)
    coverage, deviation = reliability_diagram(vset, cfg["reliability_levels"])
    widths = sharpness(vset, cfg["sharpness_coverages"])
    return {"n_scored": len(vset), "rmse": rmse(vset.point(), vset.obs),
            "crps": float(np.mean(crps_batch(vset.samples, vset.obs))),
            "reliability_deviation": deviation,
            "coverage": [float(c) for c in coverage],
            "sharpness": [float(w) for w in widths]}


def run_methods(cfg, split, cidx, replicate, lead):
    """Score every configured method on one split; returns (records, timings)."""
    obs = split.obs
    records, timings = [], []
    clim = _climatology(cfg, split, cidx, replicate, lead)
    forest_seed = _task_seed(cfg, cidx, replicate, lead, 4)
    for method in cfg["methods"]:
        t0 = time.perf_counter()
        if method == "fcs":
            model = fit_fcs_for(cfg, split, cidx, replicate, lead)
            t1 = time.perf_counter()
            rec = _prob_record(fcs_samples(cfg, model, split, cidx, replicate, lead), obs, cfg)
            timings.append((method, "train", t1 - t0))
            t0 = t1
        elif method == "climatology":
            samples = np.broadcast_to(clim.samples, (len(split.test), len(clim)))
            rec = _prob_record(samples, obs, cfg)
        elif method == "persistence":
            rec = _point_record(_persistence(split, clim.mean()), obs)
        elif method in ("rf_m", "rf_r"):
            fcs_cfg = fcs_config(cfg, _task_seed(cfg, cidx, replicate, lead, 5))
            tr = split.power.take(split.train)
            f = ItpForecaster(method, forest_config(cfg, forest_seed), fcs_cfg).fit(tr)
            te = split.power.take(split.test)
            rec = _point_record(f.predict(te.z, te.m), obs)
        elif method == "rf_c":
            f = ItpForecaster("rf_c", forest_config(cfg, forest_seed)).fit(
                split.full.take(split.train))
            te = split.full.take(split.test)
            rec = _point_record(f.predict(te.z, te.m), obs)
        elif method == "retrain":
            pats = [_named_pattern(n, split.spec) for n in cfg["retrain_patterns"]]
            tr = split.power.take(split.train)
            f = retrain_per_pattern(tr, pats, forest_config(cfg, forest_seed))
            te = split.power.take(split.test)
            feat_obs = ~te.m[:, :-1]
            keep = np.zeros(len(te.z), dtype=bool)
            for pat in pats:
                keep |= np.all(feat_obs == np.array(pat)[None, :], axis=1)
            pred = np.full(len(te.z), np.nan)
            if keep.any():
                pred[keep] = f.predict(te.z[keep], te.m[keep])
            o = np.where(keep, obs, np.nan)
            if np.isnan(o).all():
                rec = {"n_scored": 0, "rmse": None, "crps": None}
            else:
                rec = _point_record(np.nan_to_num(pred), o)
        timings.append((method, "forecast", time.perf_counter() - t0))
        records.append({"method": method, **rec})
    return records, timings


def run_task(cfg, cidx, replicate, values=None):
    label = cfg["conditions"][cidx]["label"]
    out, times = [], []
    try:
        if values is None or cfg["data"]["regenerate"]:
            values = load_dataset(cfg, replicate)
        for lead in cfg["embedding"]["leads"]:
            split = prepare_split(cfg, cidx, replicate, lead, values)
            recs, tms = run_methods(cfg, split, cidx, replicate, lead)
            out += [{"condition": label, "replicate": replicate, "lead": lead, **r}
                    for r in recs]
            times += [(label, replicate, lead, *t) for t in tms]
        return out, times, None
    except ConfigError:
        raise
    except Exception as exc:  # a failed replicate must not take the study down
        log.exception("condition %s replicate %d failed", label, replicate)
        return [], times, {"condition": label, "replicate": replicate,
                           "error": f"{type(exc).__name__}: {exc}"}


# -- study ------------------------------------------------------------------

def run_study(cfg, threads=None, output_dir=None):
    """Run every (condition, replicate) task and collect a manifest.

    Tasks are executed by a thread pool of ``threads`` workers but collected
    in task order, so the manifest is identical for any worker count.
    """
    threads = threads or cfg["threads"]
    values = None if cfg["data"]["regenerate"] else load_dataset(cfg)
    tasks = [(c, r) for c in range(len(cfg["conditions"])) for r in range(cfg["replicates"])]
    if threads > 1:
        with ThreadPoolExecutor(max_workers=threads) as pool:
            results = list(pool.map(lambda t: run_task(cfg, *t, values=values), tasks))
    else:
        results = [run_task(cfg, *t, values=values) for t in tasks]

    records, timings, failures = [], [], []
    for recs, tms, fail in results:
        records += recs
        timings += tms
        if fail:
            failures.append(fail)
    manifest = {
        "name": cfg["name"],
        "config": cfg,
        "config_hash": config_hash(cfg),
        "version": version_string(),
        "complete": not failures,
        "n_tasks": len(tasks),
        "failures": failures,
        "records": records,
        "summary": summarize(records),
        "metadata": {"reliability_levels": cfg["reliability_levels"],
                     "sharpness_coverages": cfg["sharpness_coverages"],
                     "scale": "fraction of normalized capacity (x100 in tables)"},
    }
    output_dir = output_dir or cfg["output_dir"]
    if output_dir:
        write_outputs(manifest, timings, output_dir)
    return manifest


def run_simulation_study(cfg, threads=None, output_dir=None):
    if cfg["data"]["source"] not in ("ar", "var"):
        raise ConfigError("simulation studies need an 'ar' or 'var' data source")
    return run_study(cfg, threads, output_dir)


def run_case_study(cfg, threads=None, output_dir=None):
    if cfg["data"]["source"] not in ("csv", "bounded"):
        raise ConfigError("case studies need a 'csv' or 'bounded' data source")
    return run_study(cfg, threads, output_dir)


def summarize(records):
    groups = {}
    for r in records:
        groups.setdefault((r["condition"], r["lead"], r["method"]), []).append(r)
    out = []
    for (cond, lead, method), rs in groups.items():
        rs = [r for r in rs if r["rmse"] is not None]
        if not rs:
            continue
        e = np.array([r["rmse"] for r in rs])
        c = np.array([r["crps"] for r in rs])
        row = {"condition": cond, "lead": lead, "method": method, "n": len(rs),
               "rmse_mean": float(e.mean()), "rmse_var": float(e.var(ddof=1)) if len(e) > 1 else 0.0,
               "rmse_median": float(np.median(e)), "crps_mean": float(c.mean())}
        if "coverage" in rs[0]:
            row["reliability_deviation_mean"] = float(np.mean([r["reliability_deviation"] for r in rs]))
            row["coverage_mean"] = np.mean([r["coverage"] for r in rs], axis=0).tolist()
            row["sharpness_mean"] = np.mean([r["sharpness"] for r in rs], axis=0).tolist()
        out.append(row)
    return out


def write_outputs(manifest, timings, output_dir):
    out = Path(output_dir)
    out.mkdir(parents=True, exist_ok=True)
    prov = {"config_hash": manifest["config_hash"], "version": manifest["version"]}
    (out / "manifest.json").write_text(canonical_json(manifest) + "\n")
    cfg = manifest["config"]
    methods = cfg["methods"]
    summary = manifest["summary"]
    by_key = {(s["condition"], s["lead"], s["method"]): s for s in summary}
    conds = [c["label"] for c in cfg["conditions"]]
    for metric in ("rmse", "crps"):
        rows = []
        for cond in conds:
            for lead in cfg["embedding"]["leads"]:
                rows.append([cond, lead] + [
                    100 * by_key[(cond, lead, m)][f"{metric}_mean"]
                    if (cond, lead, m) in by_key else "" for m in methods])
        write_table(out / f"{metric}_table.csv", ["condition", "lead", *methods], rows, prov)
    write_table(out / "boxplot.csv",
                ["condition", "replicate", "lead", "method", "rmse_pct", "crps_pct"],
                [[r["condition"], r["replicate"], r["lead"], r["method"],
                  100 * r["rmse"], 100 * r["crps"]] for r in manifest["records"]
                 if r["rmse"] is not None], prov)
    rel_rows, sharp_rows = [], []
    for s in summary:
        if "coverage_mean" not in s:
            continue
        for lv, emp in zip(cfg["reliability_levels"], s["coverage_mean"]):
            rel_rows.append([s["condition"], s["lead"], s["method"], lv, emp])
        for cv, w in zip(cfg["sharpness_coverages"], s["sharpness_mean"]):
            sharp_rows.append([s["condition"], s["lead"], s["method"], cv, 100 * w])
    write_table(out / "reliability.csv", ["condition", "lead", "method", "nominal", "empirical"],
                rel_rows, prov)
    write_table(out / "sharpness.csv", ["condition", "lead", "method", "coverage",
                                        "mean_width_pct"], sharp_rows, prov)
    write_table(out / "timings.csv", ["condition", "replicate", "lead", "method", "phase",
                                      "seconds"], timings, prov)
    write_json(out / "failures.json", manifest["failures"])
