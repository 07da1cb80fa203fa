#!/usr/bin/env python3
"""Run the desk-scale experiments and write one report directory each.

    python scripts/run_experiments.py                 # everything
    python scripts/run_experiments.py se_table phase  # a subset

Each name maps to ``configs/<name>.json``; reports land in
``results/<name>/``. CSEN weights are cached in ``checkpoints/`` (keyed by
data, matrix seed, training config and proxy), so the first run trains and
later runs only evaluate. A short summary of each report is printed.
"""
import argparse
import json
import logging
import time
from pathlib import Path

import numpy as np

from csenkit.harness.config import ExperimentConfig
from csenkit.harness.experiments import borders_from_records, run_experiment
from csenkit.harness.report import emit_output

ROOT = Path(__file__).resolve().parents[1]
ORDER = ["se_table", "noise_sweep", "recovery", "phase", "dictclass"]


def summarize(name, records, timing):
    if name in ("se_table", "noise_sweep"):
        for r in records:
            snr = "clean" if r.snr_db is None else f"{r.snr_db:g} dB"
            print(f"  mr={r.mr:.2f} {snr:>6} {r.method:<6} F1={r.f1:.4f} P={r.precision:.4f} "
                  f"R={r.recall:.4f} CE={r.ce:.4f}" + (f" [{r.flag}]" if r.flag else ""))
    elif name == "recovery":
        for m in dict.fromkeys(r.method for r in records):
            rs = [r for r in records if r.method == m]
            print(f"  {m:<14} mean NMSE {np.mean([r.nmse_db for r in rs]):8.2f} dB  "
                  f"success {np.mean([r.success for r in rs]):.3f}  lambda={rs[0].lasso_lambda}")
    elif name == "phase":
        for m in dict.fromkeys(r.method for r in records):
            b = borders_from_records(records, m)
            print(f"  {m:<14} border " + " ".join(f"{mr:.2f}:{v:.3f}" for mr, v in b.items()))
    elif name == "dictclass":
        secs = dict(timing)
        for r in records:
            print(f"  {r.method:<5} accuracy {r.accuracy:.3f}  {1e3 * secs[r.method]:.2f} ms/query")


def main():
    ap = argparse.ArgumentParser(description=__doc__.splitlines()[0])
    ap.add_argument("names", nargs="*", help=f"subset of {', '.join(ORDER)} (default: all)")
    ap.add_argument("--out", type=Path, default=ROOT / "results")
    ap.add_argument("-v", "--verbose", action="store_true")
    args = ap.parse_args()
    unknown = sorted(set(args.names) - set(ORDER))
    if unknown:
        ap.error(f"unknown experiments {unknown}")
    logging.basicConfig(level=logging.INFO if args.verbose else logging.WARNING,
                        format="%(asctime)s %(name)s %(message)s")
    for name in args.names or ORDER:
        d = json.loads((ROOT / "configs" / f"{name}.json").read_text())
        if d.get("checkpoint_dir"):
            d["checkpoint_dir"] = str(ROOT / d["checkpoint_dir"])
        cfg = ExperimentConfig.from_dict(d)
        t0 = time.perf_counter()
        out = run_experiment(cfg)
        path = emit_output(out, args.out / name, cfg)
        print(f"{name}: {len(out.records)} records -> {path} ({time.perf_counter() - t0:.0f}s)")
        summarize(name, out.records, out.timing)


if __name__ == "__main__":
    main()
