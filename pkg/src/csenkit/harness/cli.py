"""Command-line entry point (``csenkit <subcommand> ...``).

Matrices and signal batches are exchanged as CSM1 files (one signal per
row). Experiment subcommands take a JSON config mirroring
:class:`~csenkit.harness.config.ExperimentConfig` and write a report
directory.
"""
from __future__ import annotations

import argparse
import csv
import json
import logging
import os
import sys
from pathlib import Path

import numpy as np

from ..csen.checkpoint import load_checkpoint, save_checkpoint
from ..csen.model import predict
from ..csen.train import TrainConfig
from ..dictclass import build_class_dictionary, crc_classify, src_classify
from ..numerics import apply_proxy, build_proxy_operator, derive_seed, gaussian_matrix, read_matrix, write_matrix
from ..sensing import SensingModel, sense
from ..solvers import fista_lasso, omp, weighted_fista_lasso, weights_from_probability
from .config import RECORD_FIELDS, ExperimentConfig, ExperimentKind, format_value
from .experiments import GRID, PHASE_MR_GRID, load_dataset, run_experiment, sensing_model, trained_csen
from .report import emit_output, read_results

log = logging.getLogger("csenkit")


def _load_config(args, kind: ExperimentKind | None = None) -> ExperimentConfig:
    d = json.loads(Path(args.config).read_text()) if args.config else {}
    if kind is not None:
        d["kind"] = kind.value
        if kind is ExperimentKind.PHASE_TRANSITION and "mr_list" not in d:
            d["mr_list"] = list(PHASE_MR_GRID)
        if kind is ExperimentKind.PHASE_TRANSITION and "methods" not in d:
            d["methods"] = ["lasso", "weighted_csen"]
        if kind is ExperimentKind.DICTCLASS_BENCH and "methods" not in d:
            d["methods"] = ["src", "crc", "csen"]
    if args.seed is not None:
        d["master_seed"] = args.seed
    if args.threads is not None:
        d["threads"] = args.threads
    if getattr(args, "trials", None) is not None:
        d["trials"] = args.trials
    if args.out is not None:
        d["out_dir"] = args.out
    return ExperimentConfig.from_dict(d)


def _run(kind: ExperimentKind):
    def handler(args) -> int:
        if getattr(args, "replay", None):
            if args.row is None:
                raise SystemExit("--replay needs --row")
            args.results_dir = args.replay
            return cmd_replay(args)
        cfg = _load_config(args, kind)
        out = run_experiment(cfg)
        path = emit_output(out, cfg.out_dir, cfg)
        print(f"{len(out.records)} records -> {path / 'results.csv'}")
        return 0
    return handler


def cmd_gen_matrix(args) -> int:
    m = args.m if args.m is not None else max(1, int(round(args.mr * args.n)))
    seed = args.seed if args.seed is not None else 0
    write_matrix(args.out, gaussian_matrix(m, args.n, seed))
    print(f"{m}x{args.n} Gaussian matrix (seed {seed}) -> {args.out}")
    return 0


def cmd_sense(args) -> int:
    model = SensingModel(read_matrix(args.matrix))
    X = read_matrix(args.signals)
    seed = args.seed if args.seed is not None else 0
    y = sense(model, X, args.snr_db, seed).y
    write_matrix(args.out, np.atleast_2d(y))
    return 0


def cmd_train(args) -> int:
    cfg = _load_config(args)
    ds = load_dataset(cfg)
    mseed = args.matrix_seed if args.matrix_seed is not None else derive_seed(cfg.master_seed, 0, 0)
    model = sensing_model(args.mr, mseed)
    a = ["csen1", "csen2"].index(args.arch)
    iseed = derive_seed(cfg.master_seed, 2, a)
    tcfg = TrainConfig(**{**cfg.train.as_dict(), "seed": iseed})
    net, tau, flag = trained_csen(args.arch, model, mseed, ds.train, ds.val, tcfg, cfg.proxy,
                                  cfg.proxy_lambda, iseed, cfg.checkpoint_dir, ds.digest)
    target = Path(args.out or f"{args.arch}.ckpt")
    if target.suffix != ".ckpt":
        target = target / f"{args.arch}.ckpt"
    target.parent.mkdir(parents=True, exist_ok=True)
    save_checkpoint(net, target)
    print(f"{args.arch} tau={tau} val_f1={net.meta.get('val_f1')} flag={flag} -> {target}")
    return 0


def cmd_estimate(args) -> int:
    net = load_checkpoint(args.checkpoint)
    D = read_matrix(args.matrix)
    op = build_proxy_operator(D, args.proxy, args.proxy_lambda, tuple(net.grid))
    Y = np.atleast_2d(read_matrix(args.measurements))
    p = predict(net, apply_proxy(op, Y)).reshape(len(Y), -1)
    tau = args.tau if args.tau is not None else float(net.meta.get("tau", 0.5))
    write_matrix(args.out, p if args.probabilities else (p > tau).astype(float))
    return 0


def cmd_recover(args) -> int:
    D = read_matrix(args.matrix)
    Y = np.atleast_2d(read_matrix(args.measurements))
    rows = []
    if args.method == "weighted":
        if not args.checkpoint:
            raise SystemExit("--checkpoint is required for weighted recovery")
        net = load_checkpoint(args.checkpoint)
        op = build_proxy_operator(D, args.proxy, args.proxy_lambda, tuple(net.grid))
        P = predict(net, apply_proxy(op, Y)).reshape(len(Y), -1)
    for i, y in enumerate(Y):
        if args.method == "lasso":
            res = fista_lasso(D, y, args.lam, args.max_iters)
        elif args.method == "weighted":
            res = weighted_fista_lasso(D, y, args.lam, weights_from_probability(P[i], args.epsilon),
                                       args.max_iters)
        else:
            res = omp(D, y, args.k)
        rows.append(res.x_hat)
    write_matrix(args.out, np.stack(rows))
    return 0


def _read_labels(path) -> np.ndarray:
    return np.array([int(s) for s in Path(path).read_text().split()], dtype=int)


def cmd_classify(args) -> int:
    if not args.features:
        return _run(ExperimentKind.DICTCLASS_BENCH)(args)
    F = read_matrix(args.features)
    labels = _read_labels(args.feature_labels)
    if len(F) != len(labels):
        raise SystemExit(f"{len(F)} feature rows but {len(labels)} labels")
    cd = build_class_dictionary({int(c): F[labels == c] for c in np.unique(labels)})
    Q = np.atleast_2d(read_matrix(args.queries))
    out = Path(args.out or "predictions.csv")
    with open(out, "w", newline="") as fh:
        w = csv.writer(fh, lineterminator="\n")
        w.writerow(("query_id", "predicted_class", "top1", "top1_score", "top2", "top2_score",
                    "top3", "top3_score"))
        for i, q in enumerate(Q):
            fn = src_classify if args.method == "src" else crc_classify
            res = fn(cd, q) if args.lam is None else fn(cd, q, args.lam)
            order = np.argsort(res.scores, kind="stable")[:3]
            cells = []
            for c in order:
                cells += [int(c), format_value(float(res.scores[c]))]
            w.writerow([i, res.label, *cells])
    print(f"{len(Q)} predictions -> {out}")
    return 0


def cmd_replay(args) -> int:
    """Re-run the cell behind one results.csv row and compare it bit-for-bit."""
    src = Path(args.results_dir)
    meta = json.loads((src / "config.json").read_text())
    cfg = ExperimentConfig.from_dict(meta["config"])
    records = read_results(src / "results.csv")
    row = records[args.row]
    out = run_experiment(cfg, only_cell=row.cell)
    match = [r for r in out.records if r.cell == row.cell and r.method == row.method]
    if not match:
        print(f"cell {row.cell}/{row.method} not produced on replay")
        return 1
    old = [format_value(getattr(row, f)) for f in RECORD_FIELDS]
    new = [format_value(getattr(match[0], f)) for f in RECORD_FIELDS]
    print(",".join(RECORD_FIELDS))
    print(",".join(old))
    print(",".join(new))
    same = old == new
    print("replay: identical" if same else "replay: MISMATCH")
    return 0 if same else 1


def _common(p: argparse.ArgumentParser) -> None:
    p.add_argument("--config", help="JSON file mirroring ExperimentConfig")
    p.add_argument("--seed", type=int, help="master seed override")
    p.add_argument("--out", help="output directory or file")
    p.add_argument("--threads", type=int, help="worker threads for experiment cells")


def build_parser() -> argparse.ArgumentParser:
    ap = argparse.ArgumentParser(prog="csenkit", description=__doc__.splitlines()[0])
    ap.add_argument("-v", "--verbose", action="store_true")
    sub = ap.add_subparsers(dest="command", required=True)

    p = sub.add_parser("gen-matrix", help="write an i.i.d. N(0, 1/m) matrix")
    _common(p)
    p.add_argument("--n", type=int, default=GRID[0] * GRID[1])
    g = p.add_mutually_exclusive_group(required=True)
    g.add_argument("--m", type=int)
    g.add_argument("--mr", type=float)
    p.set_defaults(func=cmd_gen_matrix)

    p = sub.add_parser("sense", help="measure signals (rows of a CSM1 file)")
    _common(p)
    p.add_argument("--matrix", required=True)
    p.add_argument("--signals", required=True)
    p.add_argument("--snr-db", type=float)
    p.set_defaults(func=cmd_sense)

    p = sub.add_parser("train", help="train a CSEN on the configured MNIST split")
    _common(p)
    p.add_argument("--arch", choices=["csen1", "csen2"], default="csen2")
    p.add_argument("--mr", type=float, default=0.25)
    p.add_argument("--matrix-seed", type=int)
    p.set_defaults(func=cmd_train)

    for name, fn, hlp in (("estimate", cmd_estimate, "support masks from measurements"),
                          ("recover", cmd_recover, "sparse recovery from measurements")):
        p = sub.add_parser(name, help=hlp)
        _common(p)
        p.add_argument("--matrix", required=True)
        p.add_argument("--measurements", required=True)
        p.add_argument("--checkpoint", required=(name == "estimate"))
        p.add_argument("--proxy", choices=["mc", "lmmse"], default="lmmse")
        p.add_argument("--proxy-lambda", type=float, default=1e-2)
        if name == "estimate":
            p.add_argument("--tau", type=float)
            p.add_argument("--probabilities", action="store_true")
        else:
            p.add_argument("--method", choices=["lasso", "weighted", "omp"], default="lasso")
            p.add_argument("--lam", type=float, default=1e-3)
            p.add_argument("--k", type=int, default=10)
            p.add_argument("--epsilon", type=float, default=1e-2)
            p.add_argument("--max-iters", type=int, default=5000)
        p.set_defaults(func=fn)

    for name, kind in (("se-table", ExperimentKind.SE_TABLE), ("noise-sweep", ExperimentKind.NOISE_SWEEP),
                       ("phase", ExperimentKind.PHASE_TRANSITION)):
        p = sub.add_parser(name, help=f"run the {kind.value} experiment")
        _common(p)
        p.add_argument("--trials", type=int)
        p.add_argument("--replay", metavar="RESULTS_DIR", help="re-run one row of an earlier report")
        p.add_argument("--row", type=int, help="0-based data row index for --replay")
        p.set_defaults(func=_run(kind))

    p = sub.add_parser("classify", help="SRC/CRC on a feature file, or the synthetic bench")
    _common(p)
    p.add_argument("--features", help="CSM1 dictionary features, one row per atom")
    p.add_argument("--feature-labels", help="class id per feature row, whitespace separated")
    p.add_argument("--queries", help="CSM1 query features")
    p.add_argument("--method", choices=["src", "crc"], default="src")
    p.add_argument("--lam", type=float, help="regularization (default: the method's own)")
    p.set_defaults(func=cmd_classify)

    p = sub.add_parser("replay", help="re-run the cell behind one results.csv row")
    _common(p)
    p.add_argument("results_dir")
    p.add_argument("--row", type=int, required=True, help="0-based data row index")
    p.set_defaults(func=cmd_replay)
    return ap


def main(argv=None) -> int:
    args = build_parser().parse_args(argv)
    logging.basicConfig(level=logging.INFO if args.verbose else logging.WARNING,
                        format="%(asctime)s %(name)s %(message)s")
    if args.threads:
        os.environ.setdefault("OMP_NUM_THREADS", "1")
    return args.func(args)


if __name__ == "__main__":
    sys.exit(main())
