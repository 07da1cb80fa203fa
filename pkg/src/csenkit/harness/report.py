"""Persisting experiment outputs: results.csv, config.json and plots/*.csv."""
from __future__ import annotations

import csv
import io
import json
from pathlib import Path

import numpy as np

from ..numerics import write_matrix
from .config import RECORD_FIELDS, ExperimentConfig, ExperimentRecord, format_value, parse_value


def records_to_csv(records) -> str:
    buf = io.StringIO()
    w = csv.writer(buf, lineterminator="\n")
    w.writerow(RECORD_FIELDS)
    for r in records:
        w.writerow([format_value(getattr(r, f)) for f in RECORD_FIELDS])
    return buf.getvalue()


def read_results(path) -> list[ExperimentRecord]:
    """Parse a results.csv back into records (floats round-trip exactly)."""
    with open(path, newline="") as fh:
        rows = list(csv.reader(fh))
    if not rows or tuple(rows[0]) != RECORD_FIELDS:
        raise ValueError(f"{path}: unexpected header {rows[0] if rows else None}")
    return [ExperimentRecord(**{k: parse_value(k, v) for k, v in zip(RECORD_FIELDS, row)})
            for row in rows[1:]]


def plot_csv(rows) -> str:
    buf = io.StringIO()
    w = csv.writer(buf, lineterminator="\n")
    w.writerow(("x", "y", "series"))
    for x, y, series in rows:
        w.writerow((format_value(x), format_value(y), series))
    return buf.getvalue()


def emit_report(records, out_dir, cfg: ExperimentConfig | None = None, seeds: dict | None = None,
                plots: dict | None = None, matrices: dict | None = None, timing=None) -> Path:
    """Write ``results.csv``, ``config.json`` and ``plots/*.csv`` under ``out_dir``.

    ``matrices`` (relative path -> array) are written as CSM1 files and
    ``timing`` (method, seconds) rows go to ``timing.csv``, which is kept out
    of results.csv because wall-clock numbers are not reproducible.
    OS errors propagate unchanged.
    """
    from .. import __version__

    out = Path(out_dir)
    out.mkdir(parents=True, exist_ok=True)
    (out / "results.csv").write_text(records_to_csv(records))
    meta = {
        "config": cfg.to_dict() if cfg is not None else None,
        "master_seed": cfg.master_seed if cfg is not None else None,
        "seeds": dict(seeds or {}),
        "version": __version__,
        "numpy": np.__version__,
    }
    (out / "config.json").write_text(json.dumps(meta, indent=2, sort_keys=True) + "\n")
    if plots:
        (out / "plots").mkdir(exist_ok=True)
        for name, rows in plots.items():
            (out / "plots" / f"{name}.csv").write_text(plot_csv(rows))
    for rel, M in (matrices or {}).items():
        path = out / rel
        path.parent.mkdir(parents=True, exist_ok=True)
        write_matrix(path, np.asarray(M, dtype=float))
    if timing:
        buf = io.StringIO()
        w = csv.writer(buf, lineterminator="\n")
        w.writerow(("method", "seconds_per_item"))
        w.writerows((m, format_value(s)) for m, s in timing)
        (out / "timing.csv").write_text(buf.getvalue())
    return out


def emit_output(output, out_dir, cfg: ExperimentConfig) -> Path:
    """:func:`emit_report` for an :class:`~csenkit.harness.experiments.ExperimentOutput`."""
    return emit_report(output.records, out_dir, cfg, output.seeds, output.plots, output.matrices,
                       output.timing)
