"""Command-line entry point: ``uiforecast <subcommand> ...``.

Exit codes: 0 success, 2 configuration error, 3 data error, 4 runtime failure.
"""

from __future__ import annotations

import argparse
import json
import logging
import sys
from dataclasses import asdict
from pathlib import Path

import numpy as np
import yaml

from .experiment import (ConfigError, PRESETS, fcs_samples, fit_fcs_for, load_config,
                         load_dataset, prepare_split, condition_mask, resolve_config, run_study)
from .forecast import quantile_matrix
from .io import (DataError, canonical_json, config_hash, load_model, save_model, version_string,
                 write_json, write_series_csv, write_table)
from .metrics import VerificationSet, crps_batch, reliability_diagram, rmse, sharpness

log = logging.getLogger("uiforecast")

EXIT_CONFIG, EXIT_DATA, EXIT_RUNTIME = 2, 3, 4
FORECAST_LEVELS = tuple(round(0.05 * i, 2) for i in range(1, 20))


class EmbeddingMismatchError(DataError):
    """A saved model was trained on a different lag embedding than requested."""


def _parse_set(items):
    """``a.b=value`` strings to a nested override dict (values parsed as YAML)."""
    out = {}
    for item in items or []:
        if "=" not in item:
            raise ConfigError(f"--set expects key=value, got {item!r}")
        key, raw = item.split("=", 1)
        node = out
        parts = key.split(".")
        for p in parts[:-1]:
            node = node.setdefault(p, {})
        node[parts[-1]] = yaml.safe_load(raw)
    return out


def _config(args):
    overrides = _parse_set(args.set)
    if args.seed is not None:
        overrides["seed"] = args.seed
    if args.threads is not None:
        overrides["threads"] = args.threads
    if args.config:
        cfg = load_config(args.config, overrides)
    elif args.preset:
        cfg = resolve_config({"preset": args.preset}, overrides)
    else:
        raise ConfigError("give --preset or --config")
    if getattr(args, "data", None):
        cfg["data"]["source"] = "csv"
        cfg["data"]["path"] = str(args.data)
    return cfg


def _condition_index(cfg, label):
    labels = [c["label"] for c in cfg["conditions"]]
    if label is None:
        return 0
    if label not in labels:
        raise ConfigError(f"unknown condition {label!r}; known: {labels}")
    return labels.index(label)


def _out_dir(args):
    out = Path(args.output_dir or ".")
    out.mkdir(parents=True, exist_ok=True)
    return out


# -- subcommands ------------------------------------------------------------

def cmd_simulate(args):
    cfg = _config(args)
    cidx = _condition_index(cfg, args.condition)
    values = load_dataset(cfg, args.replicate)
    mask = condition_mask(cfg, cidx, args.replicate, values.shape)
    out = _out_dir(args)
    tag = f"config_hash={config_hash(cfg)}"
    write_series_csv(out / "series.csv", values, comment=tag)
    write_series_csv(out / "masked.csv", np.where(mask, np.nan, values), comment=tag)
    manifest = {"config": cfg, "config_hash": config_hash(cfg), "version": version_string(),
                "condition": cfg["conditions"][cidx]["label"], "replicate": args.replicate,
                "shape": list(values.shape), "missing_per_site": mask.sum(axis=1).tolist()}
    (out / "manifest.json").write_text(canonical_json(manifest) + "\n")
    print(f"wrote {values.shape[0]} series of length {values.shape[1]} to {out}")


def _split_for(cfg, args):
    cidx = _condition_index(cfg, args.condition)
    split = prepare_split(cfg, cidx, args.replicate, args.lead)
    return cidx, split


def cmd_train(args):
    cfg = _config(args)
    cidx, split = _split_for(cfg, args)
    model = fit_fcs_for(cfg, split, cidx, args.replicate, args.lead)
    meta = {"embedding": asdict(split.spec), "config_hash": config_hash(cfg), "config": cfg,
            "condition": cfg["conditions"][cidx]["label"], "replicate": args.replicate,
            "lead": args.lead, "version": version_string()}
    out = Path(args.model)
    out.parent.mkdir(parents=True, exist_ok=True)
    save_model(out, model, meta)
    print(f"saved {model.n_columns}-column model to {out}")


def cmd_forecast(args):
    cfg = _config(args)
    model, meta = load_model(args.model)
    cidx, split = _split_for(cfg, args)
    if meta.get("embedding") != asdict(split.spec):
        raise EmbeddingMismatchError(
            f"model embedding {meta.get('embedding')} does not match requested "
            f"{asdict(split.spec)}")
    samples = fcs_samples(cfg, model, split, cidx, args.replicate, args.lead)
    obs = split.obs
    times = split.power.times[split.test]
    qs = quantile_matrix(samples, FORECAST_LEVELS)
    point = samples.mean(axis=1)
    out = _out_dir(args)
    prov = {"config_hash": config_hash(cfg), "version": version_string()}
    header = ["issue_time", "lead", "point", *(f"q{int(round(100 * q)):02d}"
                                               for q in FORECAST_LEVELS), "obs"]
    rows = [[int(t), args.lead, float(p), *map(float, q), "" if np.isnan(o) else float(o)]
            for t, p, q, o in zip(times, point, qs, obs)]
    write_table(out / "forecasts.csv", header, rows, prov)
    payload = {**prov, "lead": args.lead, "issue_time": times.tolist(),
               "obs": [None if np.isnan(o) else float(o) for o in obs],
               "samples": samples.tolist()}
    (out / "samples.json").write_text(json.dumps(payload) + "\n")
    print(f"wrote {len(rows)} forecasts to {out}")


def cmd_evaluate(args):
    try:
        payload = json.loads(Path(args.samples).read_text())
    except (OSError, json.JSONDecodeError) as exc:
        raise DataError(f"cannot read {args.samples}: {exc}") from None
    samples = np.asarray(payload.get("samples", []), dtype=float)
    obs = np.array([np.nan if o is None else o for o in payload.get("obs", [])], dtype=float)
    if samples.size == 0 or len(obs) == 0:
        raise DataError(f"{args.samples}: no forecasts to evaluate")
    if samples.ndim != 2 or len(samples) != len(obs):
        raise DataError(f"{args.samples}: samples {samples.shape} vs {len(obs)} observations")
    vset = VerificationSet(samples, obs)
    if len(vset) == 0:
        raise DataError(f"{args.samples}: no observed outcomes to score against")
    levels = [round(0.05 * i, 2) for i in range(1, 20)]
    coverages = [round(0.1 * i, 1) for i in range(1, 10)]
    coverage, deviation = reliability_diagram(vset, levels)
    widths = sharpness(vset, coverages)
    summary = {"n_scored": len(vset), "rmse": rmse(vset.point(), vset.obs),
               "crps": float(np.mean(crps_batch(vset.samples, vset.obs))),
               "reliability_deviation": deviation}
    out = _out_dir(args)
    prov = {k: payload[k] for k in ("config_hash", "version") if k in payload}
    write_json(out / "summary.json", {**prov, **summary})
    write_table(out / "reliability.csv", ["nominal", "empirical"],
                [[lv, float(c)] for lv, c in zip(levels, coverage)], prov)
    write_table(out / "sharpness.csv", ["coverage", "mean_width_pct"],
                [[cv, 100 * float(w)] for cv, w in zip(coverages, widths)], prov)
    print(json.dumps(summary))


def cmd_experiment(args):
    cfg = _config(args)
    out = args.output_dir or cfg["output_dir"] or f"results/{cfg['name']}"
    manifest = run_study(cfg, threads=cfg["threads"], output_dir=out)
    print(f"{cfg['name']}: {manifest['n_tasks']} tasks, {len(manifest['failures'])} failed; "
          f"results in {out}")
    return 0 if manifest["complete"] else EXIT_RUNTIME


# -- parser -----------------------------------------------------------------

def build_parser():
    parser = argparse.ArgumentParser(prog="uiforecast",
                                     description="Forecasting with missing data by imputation.")
    parser.add_argument("-v", "--verbose", action="store_true")
    sub = parser.add_subparsers(dest="command", required=True)

    common = argparse.ArgumentParser(add_help=False)
    src = common.add_mutually_exclusive_group()
    src.add_argument("--preset", choices=sorted(PRESETS))
    src.add_argument("--config", type=Path, help="YAML experiment config")
    common.add_argument("--seed", type=int)
    common.add_argument("--threads", type=int)
    common.add_argument("--output-dir", type=Path)
    common.add_argument("--set", action="append", metavar="KEY=VALUE",
                        help="override a config entry, e.g. forest.n_trees=25")

    task = argparse.ArgumentParser(add_help=False)
    task.add_argument("--condition", help="condition label (default: the first)")
    task.add_argument("--replicate", type=int, default=0)
    task.add_argument("--lead", type=int, default=1)
    task.add_argument("--data", type=Path, help="CSV of site series replacing the configured data")

    p = sub.add_parser("simulate", parents=[common, task], help="write synthetic series and mask")
    p.set_defaults(func=cmd_simulate)
    p = sub.add_parser("train", parents=[common, task], help="fit an FCS model")
    p.add_argument("--model", type=Path, required=True, help="output .npz path")
    p.set_defaults(func=cmd_train)
    p = sub.add_parser("forecast", parents=[common, task], help="forecast the test split")
    p.add_argument("--model", type=Path, required=True)
    p.set_defaults(func=cmd_forecast)
    p = sub.add_parser("evaluate", help="score a samples.json file")
    p.add_argument("samples", type=Path)
    p.add_argument("--output-dir", type=Path)
    p.set_defaults(func=cmd_evaluate)
    p = sub.add_parser("experiment", parents=[common], help="run a full study")
    p.set_defaults(func=cmd_experiment)
    return parser


def main(argv=None):
    args = build_parser().parse_args(argv)
    logging.basicConfig(level=logging.DEBUG if args.verbose else logging.WARNING,
                        format="%(levelname)s %(name)s: %(message)s")
    try:
        return args.func(args) or 0
    except ConfigError as exc:
        print(f"config error: {exc}", file=sys.stderr)
        return EXIT_CONFIG
    except DataError as exc:
        print(f"data error: {exc}", file=sys.stderr)
        return EXIT_DATA
    except Exception as exc:
        log.debug("failure", exc_info=True)
        print(f"error: {type(exc).__name__}: {exc}", file=sys.stderr)
        return EXIT_RUNTIME


if __name__ == "__main__":
    sys.exit(main())
