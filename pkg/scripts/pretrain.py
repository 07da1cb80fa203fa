#!/usr/bin/env python3
"""Warm the checkpoint cache: the table CSENs and the per-MR phase CSENs.

    python scripts/pretrain.py            # table models, then phase models
    python scripts/pretrain.py --phase    # phase models only

Training is the expensive part of every MNIST experiment; once the cache
is warm, the experiments and the acceptance suite only evaluate.
"""
import argparse
import json
import logging
import time
from pathlib import Path

from csenkit.harness.config import ExperimentConfig
from csenkit.harness.experiments import load_dataset, phase_model, run_se_experiment

ROOT = Path(__file__).resolve().parents[1]


def config(name) -> ExperimentConfig:
    d = json.loads((ROOT / "configs" / f"{name}.json").read_text())
    d["checkpoint_dir"] = str(ROOT / d["checkpoint_dir"])
    return ExperimentConfig.from_dict(d)


def main():
    ap = argparse.ArgumentParser(description=__doc__.splitlines()[0])
    ap.add_argument("--phase", action="store_true", help="only the per-MR phase models")
    args = ap.parse_args()
    logging.basicConfig(level=logging.INFO, format="%(asctime)s %(name)s %(message)s")
    if not args.phase:
        cfg = config("se_table").replace(snr_db=None, methods=["csen2", "csen1"])
        t0 = time.perf_counter()
        for r in run_se_experiment(cfg).records:
            print(f"{r.method}: test F1 {r.f1:.4f} tau {r.tau} ({time.perf_counter() - t0:.0f}s)", flush=True)
    cfg = config("phase")
    ds = load_dataset(cfg)
    for i, mr in enumerate(cfg.mr_list):
        t0 = time.perf_counter()
        net = phase_model(cfg, ds, i)
        print(f"phase mr={mr:.2f}: val F1 {net.meta.get('val_f1'):.4f} ({time.perf_counter() - t0:.0f}s)",
              flush=True)


if __name__ == "__main__":
    main()
