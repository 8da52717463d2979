"""File formats: series CSV, fitted FCS models, provenance-stamped tables."""

from __future__ import annotations

import csv
import hashlib
import io
import json
import subprocess
from dataclasses import asdict
from pathlib import Path

import numpy as np

from . import __version__
from .fcs import FcsConfig, FcsModel
from .pmm import PmmColumnModel
from .rf import ForestConfig, RandomForestModel

MODEL_FORMAT = 1
MISSING_TOKENS = ("", "NA", "NaN", "nan")


class DataError(ValueError):
    """Input data is malformed or inconsistent."""


def version_string():
    """Package version, plus ``git describe`` output when run from a checkout."""
    try:
        out = subprocess.run(["git", "describe", "--always", "--tags"], capture_output=True,
                             text=True, cwd=Path(__file__).parent, timeout=5)
        if out.returncode == 0 and out.stdout.strip():
            return f"{__version__}+g{out.stdout.strip()}"
    except (OSError, subprocess.SubprocessError):
        pass
    return __version__


def canonical_json(obj):
    return json.dumps(obj, sort_keys=True, separators=(",", ":"))


def config_hash(cfg_dict):
    return hashlib.sha256(canonical_json(cfg_dict).encode()).hexdigest()[:16]


# -- series CSV -------------------------------------------------------------

def read_series_csv(path):
    """Read ``timestamp, site_1, ..., site_p``; empty cells or NA are missing.

    Returns ``(timestamps, site_names, values)`` with ``values`` of shape
    ``(p, T)`` holding NaN for missing entries.
    """
    with open(path, newline="") as fh:
        rows = [r for r in csv.reader(fh) if r and not r[0].startswith("#")]
    if len(rows) < 2:
        raise DataError(f"{path}: no data rows")
    header, body = rows[0], rows[1:]
    if len(header) < 2:
        raise DataError(f"{path}: need a timestamp column and at least one site")
    stamps, values = [], []
    for lineno, r in enumerate(body, start=2):
        if len(r) != len(header):
            raise DataError(f"{path}:{lineno}: expected {len(header)} fields, got {len(r)}")
        stamps.append(r[0])
        try:
            values.append([np.nan if c.strip() in MISSING_TOKENS else float(c) for c in r[1:]])
        except ValueError as exc:
            raise DataError(f"{path}:{lineno}: {exc}") from None
    return stamps, header[1:], np.array(values, dtype=float).T.copy()


def write_series_csv(path, values, site_names=None, timestamps=None, comment=None):
    """Write ``(p, T)`` values; NaN becomes an empty cell. Values use ``repr`` so
    they read back bit-exactly."""
    values = np.atleast_2d(values)
    p, T = values.shape
    names = site_names or [f"site_{i + 1}" for i in range(p)]
    stamps = timestamps if timestamps is not None else range(T)
    with open(path, "w", newline="") as fh:
        if comment:
            fh.write(f"# {comment}\n")
        w = csv.writer(fh, lineterminator="\n")
        w.writerow(["timestamp", *names])
        for t, stamp in enumerate(stamps):
            w.writerow([stamp, *("" if np.isnan(v) else repr(float(v)) for v in values[:, t])])


def write_table(path, header, rows, provenance=None):
    """CSV table with an optional ``# key=value`` provenance line on top."""
    buf = io.StringIO()
    if provenance:
        buf.write("# " + " ".join(f"{k}={v}" for k, v in provenance.items()) + "\n")
    w = csv.writer(buf, lineterminator="\n")
    w.writerow(header)
    for r in rows:
        w.writerow([_fmt(v) for v in r])
    Path(path).write_text(buf.getvalue())


def read_table(path):
    with open(path, newline="") as fh:
        rows = [r for r in csv.reader(fh) if r and not r[0].startswith("#")]
    return rows[0], rows[1:]


def _fmt(v):
    if isinstance(v, (float, np.floating)):
        return repr(float(v))
    return v


def write_json(path, obj):
    Path(path).write_text(json.dumps(obj, indent=1, sort_keys=True) + "\n")


# -- model files -------------------------------------------------------------

def _forest_cfg_dict(cfg):
    return asdict(cfg)


def save_model(path, model, meta=None):
    """Write a fitted :class:`FcsModel` to a single ``.npz`` file.

    The file holds every column's forest arrays, candidate vector and donor
    values, plus a JSON header with the configuration and ``meta``.
    """
    cfg = model.config
    header = {
        "format": MODEL_FORMAT,
        "version": __version__,
        "policy": model.policy,
        "fcs": {**asdict(cfg), "forest": _forest_cfg_dict(cfg.forest)},
        "columns": [{"column": c.column, "d": c.d, "n_features": c.forest.n_features,
                     "forest": _forest_cfg_dict(c.forest.config)} for c in model.columns],
        "meta": meta or {},
    }
    arrays = {"header": np.frombuffer(json.dumps(header, sort_keys=True).encode(), np.uint8),
              "fill": model.fill}
    for j, c in enumerate(model.columns):
        for k, v in c.forest.to_arrays().items():
            arrays[f"c{j}_{k}"] = v
        arrays[f"c{j}_candidates"] = c.candidates
        arrays[f"c{j}_donor_rows"] = c.donor_rows
        arrays[f"c{j}_donor_values"] = c.donor_values
    with open(path, "wb") as fh:
        np.savez_compressed(fh, **arrays)


def load_model(path):
    """Inverse of :func:`save_model`; returns ``(model, meta)``."""
    try:
        data = np.load(path)
    except (OSError, ValueError) as exc:
        raise DataError(f"cannot read model file {path}: {exc}") from None
    header = json.loads(bytes(data["header"]).decode())
    if header.get("format") != MODEL_FORMAT:
        raise DataError(f"{path}: unsupported model format {header.get('format')}")
    fcs = dict(header["fcs"])
    fcs["forest"] = _forest_from_dict(fcs["forest"])
    cfg = FcsConfig(**fcs)
    columns = []
    for j, c in enumerate(header["columns"]):
        arrays = {k: data[f"c{j}_{k}"] for k in
                  ("feature", "threshold", "left", "right", "value", "roots")}
        forest = RandomForestModel.from_arrays(arrays, c["n_features"],
                                               _forest_from_dict(c["forest"]))
        columns.append(PmmColumnModel(c["column"], forest, data[f"c{j}_candidates"],
                                      data[f"c{j}_donor_rows"], data[f"c{j}_donor_values"],
                                      c["d"]))
    model = FcsModel(tuple(columns), cfg, data["fill"], None, header["policy"])
    return model, header["meta"]


def _forest_from_dict(d):
    return ForestConfig(**d)
