"""Serialization of replication records, summaries and experiment logs.

Floats are written with ``repr``, the shortest decimal string that reads back
to the same double, so CSV and JSON both round-trip exactly.
"""
from __future__ import annotations

import csv
import io as _io
import json
import math
from dataclasses import asdict, fields
from typing import Optional

import numpy as np

from .errors import ConfigError
from .model import ExperimentLog, LatentState

__all__ = [
    "format_value",
    "records_to_csv",
    "records_from_csv",
    "records_to_json",
    "records_from_json",
    "emit_results",
    "save_log",
    "load_log",
]


def format_value(v) -> str:
    if v is None:
        return ""
    if isinstance(v, bool):
        return "1" if v else "0"
    if isinstance(v, (int, np.integer)):
        return str(int(v))
    if isinstance(v, (float, np.floating)):
        return repr(float(v))
    return str(v)


def records_to_csv(records, record_type) -> str:
    cols = [f.name for f in fields(record_type)]
    buf = _io.StringIO()
    w = csv.writer(buf, lineterminator="\r\n", quoting=csv.QUOTE_MINIMAL)
    w.writerow(cols)
    for r in records:
        w.writerow([format_value(getattr(r, c)) for c in cols])
    return buf.getvalue()


def _parse_field(raw: str, typ):
    if typ is int:
        return int(raw)
    if typ is float:
        return float(raw)
    return raw


def records_from_csv(text: str, record_type) -> list:
    types = {f.name: (f.type if not isinstance(f.type, str) else
                      {"int": int, "float": float, "str": str}[f.type])
             for f in fields(record_type)}
    rows = list(csv.reader(_io.StringIO(text, newline="")))
    if not rows:
        return []
    header = rows[0]
    if header != list(types):
        raise ConfigError(f"unexpected CSV header: {header}")
    return [record_type(**{c: _parse_field(v, types[c]) for c, v in zip(header, row)})
            for row in rows[1:]]


def _jsonable(x):
    if isinstance(x, float) and not math.isfinite(x):
        return None if math.isnan(x) else ("inf" if x > 0 else "-inf")
    if isinstance(x, dict):
        return {k: _jsonable(v) for k, v in x.items()}
    if isinstance(x, (list, tuple)):
        return [_jsonable(v) for v in x]
    if isinstance(x, np.ndarray):
        return _jsonable(x.tolist())
    if isinstance(x, np.generic):
        return _jsonable(x.item())
    return x


def _unjson_float(x):
    if x is None:
        return float("nan")
    if x == "inf":
        return float("inf")
    if x == "-inf":
        return float("-inf")
    return float(x)


def records_to_json(records, summary: Optional[dict] = None) -> str:
    body = {"records": [_jsonable(asdict(r)) for r in records]}
    if summary is not None:
        body["summary"] = _jsonable(summary)
    return json.dumps(body, indent=2, allow_nan=False)


def records_from_json(text: str, record_type) -> list:
    data = json.loads(text)
    out = []
    for row in data["records"]:
        kw = {}
        for f in fields(record_type):
            t = f.type if not isinstance(f.type, str) else {"int": int, "float": float, "str": str}[f.type]
            v = row[f.name]
            kw[f.name] = _unjson_float(v) if t is float else v
        out.append(record_type(**kw))
    return out


def emit_results(records, summary, fmt: str, path, record_type) -> None:
    if fmt == "csv":
        text = records_to_csv(records, record_type)
    elif fmt == "json":
        text = records_to_json(records, summary)
    else:
        raise ConfigError(f"unknown output format {fmt!r}")
    try:
        with open(path, "w", encoding="utf-8", newline="") as fh:
            fh.write(text)
    except OSError as e:
        raise OSError(f"{path}: {e.strerror or e}") from e


# Stored log schema: treatments [N][T] int, outcomes [N][T], assign_probs
# [N][T][A], noise_sd, noise_bound (null if unknown) and an optional "truth"
# object with unit_factors, time_factors and mean_fn.

def log_to_dict(log: ExperimentLog, latent: Optional[LatentState] = None) -> dict:
    d = {
        "treatments": log.treatments.tolist(),
        "outcomes": log.outcomes.tolist(),
        "assign_probs": log.assign_probs.tolist(),
        "noise_sd": log.noise_sd,
        "noise_bound": log.noise_bound,
    }
    if latent is not None:
        d["truth"] = {
            "unit_factors": latent.unit_factors.tolist(),
            "time_factors": latent.time_factors.tolist(),
            "mean_fn": latent.mean_fn,
        }
    return _jsonable(d)


def log_from_dict(d: dict):
    try:
        log = ExperimentLog(
            np.asarray(d["treatments"], dtype=np.int64),
            np.asarray(d["outcomes"], dtype=float),
            np.asarray(d["assign_probs"], dtype=float),
            noise_bound=_unjson_float(d.get("noise_bound")),
            noise_sd=_unjson_float(d.get("noise_sd")),
        )
    except KeyError as e:
        raise ConfigError(f"stored log is missing field {e.args[0]!r}") from None
    truth = d.get("truth")
    latent = None
    if truth is not None:
        latent = LatentState(np.asarray(truth["unit_factors"], float),
                             np.asarray(truth["time_factors"], float),
                             truth.get("mean_fn", "bilinear"))
    return log, latent


def save_log(path, log: ExperimentLog, latent: Optional[LatentState] = None) -> None:
    with open(path, "w", encoding="utf-8") as fh:
        json.dump(log_to_dict(log, latent), fh, allow_nan=False)


def load_log(path):
    try:
        with open(path, "r", encoding="utf-8") as fh:
            return log_from_dict(json.load(fh))
    except FileNotFoundError:
        raise ConfigError(f"{path}: no such file") from None
    except json.JSONDecodeError as e:
        raise ConfigError(f"{path}: invalid JSON ({e})") from None
