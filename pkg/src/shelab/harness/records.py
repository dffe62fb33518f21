"""Run records and their on-disk form.

A run directory holds::

    manifest.json   seed, config (and its hash), generator and code versions
    series.csv      one row per (group, path, sample)   or series.jsonl
    summary.json    aggregated statistics and the pass/fail checks

Floats are written with ``repr`` so the files round-trip bit-exactly, and rows
are ordered by (group, path_id, time) so the bytes do not depend on the order
in which workers finished.
"""

from __future__ import annotations

import csv
import io
import json
import math
from dataclasses import dataclass, field
from pathlib import Path

import numpy as np

from .. import __version__
from ..noise import GENERATOR_VERSION
from ..solver import PathSeries
from .config import ExperimentConfig

SCHEMA_VERSION = "shelab.run/1"
FORMATS = ("csv", "jsonl")


def build_manifest(cfg: ExperimentConfig, extra: dict | None = None) -> dict:
    schedule = cfg.schedule_spec()
    manifest = {
        "schema_version": SCHEMA_VERSION,
        "name": cfg.name,
        "experiment": cfg.experiment,
        "seed": cfg.seed,
        "config_hash": cfg.config_hash(),
        "config": cfg.to_dict(),
        "generator_version": GENERATOR_VERSION,
        "code_version": __version__,
        "dt": cfg.dt,
        # unsnapped renormalisation epochs (before the dense tail)
        "epochs_unsnapped": schedule.raw_epochs(cfg.time.horizon, cfg.dt),
    }
    if extra:
        manifest.update(extra)
    return manifest


@dataclass
class RunRecord:
    """Manifest, per-path series (tagged by group) and summary of one experiment."""

    manifest: dict
    paths: list = field(default_factory=list)  # list of (group, PathSeries)
    summary: dict = field(default_factory=dict)

    def group(self, name: str) -> list[PathSeries]:
        return [p for g, p in self.paths if g == name]

    @property
    def groups(self) -> list[str]:
        seen = []
        for g, _ in self.paths:
            if g not in seen:
                seen.append(g)
        return seen


# --------------------------------------------------------------------------- serialisation


def _num(x):
    x = float(x)
    return x if math.isfinite(x) else None


def _text(x) -> str:
    return repr(float(x))


def series_rows(record: RunRecord):
    """Rows ``(group, path_id, {column: value})`` in canonical order."""
    ordered = sorted(record.paths, key=lambda gp: (record.groups.index(gp[0]), gp[1].path_id))
    for group, path in ordered:
        cols = list(path.columns)
        n = len(path.columns[cols[0]]) if cols else 0
        for i in range(n):
            yield group, path.path_id, {c: path.columns[c][i] for c in cols}


def _columns(record: RunRecord) -> list[str]:
    cols: list[str] = []
    for _, p in record.paths:
        for c in p.columns:
            if c not in cols:
                cols.append(c)
    return cols


def series_csv(record: RunRecord) -> str:
    cols = _columns(record)
    buf = io.StringIO()
    writer = csv.writer(buf, lineterminator="\n")
    writer.writerow(["schema_version", "group", "path_id", *cols])
    for group, pid, row in series_rows(record):
        writer.writerow([SCHEMA_VERSION, group, pid, *(_text(row.get(c, math.nan)) for c in cols)])
    return buf.getvalue()


def series_jsonl(record: RunRecord) -> str:
    lines = []
    for group, pid, row in series_rows(record):
        obj = {"schema_version": SCHEMA_VERSION, "group": group, "path_id": pid}
        obj.update({c: _num(v) for c, v in row.items()})
        lines.append(json.dumps(obj, allow_nan=False))
    return "\n".join(lines) + ("\n" if lines else "")


def _json_default(obj):
    if isinstance(obj, np.generic):
        return obj.item()
    if isinstance(obj, np.ndarray):
        return obj.tolist()
    raise TypeError(f"cannot serialise {type(obj).__name__}")


def _clean(obj):
    # non-finite floats become null so the JSON stays standard
    if isinstance(obj, dict):
        return {k: _clean(v) for k, v in obj.items()}
    if isinstance(obj, (list, tuple)):
        return [_clean(v) for v in obj]
    if isinstance(obj, np.ndarray):
        return [_clean(v) for v in obj.tolist()]
    if isinstance(obj, (float, np.floating)):
        return _num(obj)
    if isinstance(obj, np.integer):
        return int(obj)
    if isinstance(obj, np.bool_):
        return bool(obj)
    return obj


def dumps(obj) -> str:
    return json.dumps(_clean(obj), indent=2, sort_keys=True, allow_nan=False,
                      default=_json_default) + "\n"


def write_record(record: RunRecord, out_dir: str | Path, fmt: str = "csv") -> dict:
    """Write manifest, series and summary; returns the written paths by role."""
    if fmt not in FORMATS:
        raise ValueError(f"format must be one of {FORMATS}, got {fmt!r}")
    out = Path(out_dir)
    out.mkdir(parents=True, exist_ok=True)
    paths = {
        "manifest": out / "manifest.json",
        "series": out / f"series.{fmt}",
        "summary": out / "summary.json",
    }
    paths["manifest"].write_text(dumps(record.manifest))
    paths["series"].write_text(series_csv(record) if fmt == "csv" else series_jsonl(record))
    paths["summary"].write_text(dumps({"schema_version": SCHEMA_VERSION, **record.summary}))
    return paths


def read_series_csv(path: str | Path) -> list[dict]:
    with open(path, newline="") as fh:
        rows = list(csv.DictReader(fh))
    for r in rows:
        for k, v in r.items():
            if k not in ("schema_version", "group", "path_id"):
                r[k] = float(v)
        r["path_id"] = int(r["path_id"])
    return rows


def read_json(path: str | Path) -> dict:
    return json.loads(Path(path).read_text())
