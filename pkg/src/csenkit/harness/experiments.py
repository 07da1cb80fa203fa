"""Experiment orchestration: support-estimation tables, noise sweeps, phase
transitions, recovery comparisons and the dictionary-classification bench.

Every source of randomness is a seed derived from ``cfg.master_seed`` and the
cell indices (see :func:`csenkit.numerics.derive_seed`); the stream tags are

====  ==========================================================
 0    measurement matrix per MR index (tables, recovery)
 1    measurement noise per (MR index, SNR index)
 2    CSEN initialisation / minibatch order per architecture
 3    phase grid: fresh matrix per (MR index, trial)
 4    phase grid: digit draw per (MR index, rho index, trial)
 5    phase grid: CSEN training matrix per MR index
 6    dictionary bench: data generation
 7    dictionary bench: CSEN training
====  ==========================================================

Cells run through an ordered pool (``cfg.threads``) and results are reduced in
cell order, so output never depends on scheduling.
"""
from __future__ import annotations

import hashlib
import json
import logging
import time
from concurrent.futures import ThreadPoolExecutor
from dataclasses import dataclass, field
from pathlib import Path

import numpy as np

from ..csen.checkpoint import load_checkpoint, save_checkpoint
from ..csen.model import CsenModel, csen1_init, csen2_init, predict
from ..csen.train import DeadNetwork, LossKind, TrainConfig, TrainingDiverged, train, tune_threshold
from ..dictclass import (
    build_class_dictionary,
    crc_classify,
    csen_classify,
    src_classify,
    synthetic_classes,
)
from ..metrics import mask_metrics, nmse_db, recovery_success
from ..numerics import (
    ProxyKind,
    apply_proxy,
    build_proxy_operator,
    derive_seed,
    gaussian_matrix,
)
from ..sensing import SensingModel, sense
from ..solvers import fista_lasso_batch, lipschitz_constant, omp, weights_from_probability
from .config import ExperimentConfig, ExperimentKind, ExperimentRecord
from .idx import load_idx

log = logging.getLogger(__name__)

GRID = (28, 28)
N_PIXELS = GRID[0] * GRID[1]
PHASE_MR_GRID = [0.05, 0.10, 0.15, 0.20, 0.25, 0.30, 0.35, 0.40, 0.45, 0.50]
NOISE_SWEEP_SNR = [None, 30.0, 20.0, 15.0, 10.0, 5.0, 0.0]
_ARCH_INIT = {"csen1": csen1_init, "csen2": csen2_init}


# --------------------------------------------------------------------- data


@dataclass
class Dataset:
    X: np.ndarray       # (count, 784) pixels in [0, 1]
    labels: np.ndarray
    n_train: int
    n_val: int
    n_test: int

    @property
    def train(self) -> np.ndarray:
        return self.X[:self.n_train]

    @property
    def val(self) -> np.ndarray:
        return self.X[self.n_train:self.n_train + self.n_val]

    @property
    def test(self) -> np.ndarray:
        s = self.n_train + self.n_val
        return self.X[s:s + self.n_test]

    @property
    def digest(self) -> str:
        h = hashlib.sha256(self.X.tobytes())
        h.update(self.labels.tobytes())
        return h.hexdigest()[:16]


def load_dataset(cfg: ExperimentConfig) -> Dataset:
    """Load the IDX pair and split it, in file order, into train/val/test."""
    X, labels = load_idx(cfg.images, cfg.labels)
    need = cfg.n_train + cfg.n_val + cfg.n_test
    if len(X) < need:
        raise ValueError(f"dataset holds {len(X)} samples, split needs {need}")
    return Dataset(X, labels, cfg.n_train, cfg.n_val, cfg.n_test)


def support_masks(X: np.ndarray) -> np.ndarray:
    return np.asarray(X) > 0


def sensing_model(mr: float, seed: int, n: int = N_PIXELS) -> SensingModel:
    m = max(1, int(round(mr * n)))
    return SensingModel(gaussian_matrix(m, n, seed))


def proxy_kind(name: str) -> ProxyKind:
    return ProxyKind(name)


# ------------------------------------------------------------------ outputs


@dataclass
class ExperimentOutput:
    """Records plus everything :func:`~csenkit.harness.report.emit_report` writes."""

    records: list[ExperimentRecord] = field(default_factory=list)
    seeds: dict = field(default_factory=dict)
    plots: dict = field(default_factory=dict)      # name -> list of (x, y, series)
    matrices: dict = field(default_factory=dict)   # relative path -> ndarray (CSM1)
    timing: list = field(default_factory=list)     # non-deterministic; kept apart


def _pool_map(fn, items, threads: int):
    items = list(items)
    if threads <= 1 or len(items) <= 1:
        return [fn(it) for it in items]
    with ThreadPoolExecutor(max_workers=threads) as ex:
        return list(ex.map(fn, items))


def _wanted(only_cell: str | None, cell: str) -> bool:
    return only_cell is None or only_cell == cell


# --------------------------------------------------------------- CSEN cache


def _cache_key(payload: dict) -> str:
    blob = json.dumps(payload, sort_keys=True, default=str).encode()
    return hashlib.sha256(blob).hexdigest()[:20]


INIT_ATTEMPTS = 3


def trained_csen(arch: str, model: SensingModel, matrix_seed: int, ds_train: np.ndarray,
                 ds_val: np.ndarray, train_cfg: TrainConfig, proxy: str, proxy_lambda: float,
                 init_seed: int, checkpoint_dir: str | None, data_digest: str):
    """Train (or load from the checkpoint cache) a CSEN for one sensing matrix.

    The cache key covers everything that determines the trained weights.
    An initialisation whose output unit is dead (no gradient at all for an
    epoch) is redrawn from a derived seed, up to ``INIT_ATTEMPTS`` times.
    Returns ``(model, tau, flag)``; ``flag`` is ``"diverged"`` when training
    blew up and ``"dead"`` when every initialisation was dead (the model is
    then an untrained initialisation).
    """
    payload = {
        "arch": arch, "m": model.m, "n": model.n, "matrix_seed": matrix_seed, "proxy": proxy,
        "proxy_lambda": proxy_lambda, "train": train_cfg.as_dict(), "n_train": len(ds_train),
        "n_val": len(ds_val), "data": data_digest, "init_seed": init_seed,
    }
    key = _cache_key(payload)
    path = Path(checkpoint_dir) / f"{arch}-mr{model.mr:.4f}-{key}.ckpt" if checkpoint_dir else None
    if path is not None and path.exists():
        net = load_checkpoint(path)
        log.info("loaded cached %s from %s", arch, path)
        return net, float(net.meta["tau"]), net.meta.get("flag")
    op = build_proxy_operator(model.D, proxy, proxy_lambda, GRID)
    x_tr = apply_proxy(op, ds_train @ model.D.T)
    x_va = apply_proxy(op, ds_val @ model.D.T)
    v_tr = support_masks(ds_train).reshape(-1, *GRID).astype(float)
    v_va = support_masks(ds_val).reshape(-1, *GRID).astype(float)
    flag = None
    t0 = time.perf_counter()
    for attempt in range(INIT_ATTEMPTS):
        # attempt 0 uses init_seed itself, so healthy runs are unaffected
        seed = init_seed if attempt == 0 else derive_seed(init_seed, attempt)
        net = _ARCH_INIT[arch](GRID, seed)
        net.name = arch
        try:
            net, hist = train(net, x_tr, v_tr, train_cfg, x_va, v_va, progress=True)
            net.meta["history"] = {"train_loss": hist.train_loss, "val_loss": hist.val_loss,
                                   "val_f1": hist.val_f1}
            flag = None
            break
        except DeadNetwork as exc:
            log.warning("%s init %d is dead (%s); reinitialising", arch, attempt, exc)
            flag = "dead"
        except TrainingDiverged as exc:
            log.warning("%s training diverged: %s", arch, exc)
            flag = "diverged"
            break
    else:
        net = _ARCH_INIT[arch](GRID, init_seed)
        net.name = arch
    net.meta["init_attempts"] = attempt + 1
    p_va = predict(net, x_va)
    tau, f1 = tune_threshold(p_va, v_va)
    net.meta.update({"tau": tau, "val_f1": f1, "cache_key": key, "cache_payload": payload,
                     "flag": flag, "train_seconds": time.perf_counter() - t0})
    if path is not None:
        path.parent.mkdir(parents=True, exist_ok=True)
        save_checkpoint(net, path)
    return net, tau, flag


# ------------------------------------------------------ support-estimation


def _macro(pred: np.ndarray, truth: np.ndarray) -> tuple[float, float, float, float]:
    m = mask_metrics(pred, truth).mean(axis=0)
    return float(m[0]), float(m[1]), float(m[2]), float(m[3])


def _tuned_mask(score_val, truth_val, score_test):
    tau, _ = tune_threshold(score_val, truth_val)
    return tau, score_test > tau


def _omp_masks(D, Y, X_true):
    out = np.zeros((len(Y), D.shape[1]), dtype=bool)
    for i, (y, x) in enumerate(zip(Y, X_true)):
        k = int(min(np.count_nonzero(x), D.shape[0] - 1))
        res = omp(D, y, max(k, 1))
        out[i, res.support] = True
    return out


def _lasso_estimates(D, Y, lam, cfg: ExperimentConfig, weights=None, lipschitz=None):
    res = fista_lasso_batch(D, np.asarray(Y).T, lam, weights, cfg.lasso_max_iters, cfg.lasso_rel_tol,
                            lipschitz)
    return res.X.T


def run_se_experiment(cfg: ExperimentConfig, ds: Dataset | None = None,
                      only_cell: str | None = None) -> ExperimentOutput:
    """Support-estimation table: every method at every (MR, SNR) cell.

    CSENs train noise-free on the train split; thresholds are tuned on the
    noise-free validation split; metrics are macro-averaged over the test
    split (solver baselines use its first ``se_solver_samples`` digits).
    """
    ds = ds or load_dataset(cfg)
    out = ExperimentOutput()
    snrs = cfg.snr_db if cfg.snr_db is not None else [None]
    truth_val = support_masks(ds.val)
    truth_test = support_masks(ds.test)
    ns = min(cfg.se_solver_samples, len(ds.test))
    nv = min(cfg.lambda_select_samples, len(ds.val))
    for i, mr in enumerate(cfg.mr_list):
        cells = [(j, f"mr{i}/snr{j}") for j in range(len(snrs))]
        if not any(_wanted(only_cell, c) for _, c in cells):
            continue
        mseed = derive_seed(cfg.master_seed, 0, i)
        model = sensing_model(mr, mseed)
        out.seeds[f"matrix/mr{i}"] = mseed
        op = build_proxy_operator(model.D, cfg.proxy, cfg.proxy_lambda, GRID)
        ops = {k: build_proxy_operator(model.D, k, cfg.proxy_lambda, GRID) for k in ("mc", "lmmse")}
        nets = {}
        for a, arch in enumerate(("csen1", "csen2")):
            if arch in cfg.methods:
                iseed = derive_seed(cfg.master_seed, 2, a)
                out.seeds[f"csen_init/{arch}"] = iseed
                tcfg = TrainConfig(**{**cfg.train.as_dict(), "seed": iseed})
                nets[arch] = trained_csen(arch, model, mseed, ds.train, ds.val, tcfg, cfg.proxy,
                                          cfg.proxy_lambda, iseed, cfg.checkpoint_dir, ds.digest)
        y_val = ds.val @ model.D.T
        lip = lipschitz_constant(model.D) if "lasso" in cfg.methods else None
        lasso_val = (_lasso_estimates(model.D, y_val[:nv], cfg.lasso_lambda, cfg, lipschitz=lip)
                     if "lasso" in cfg.methods else None)

        def cell(j_cell, i=i, mr=mr, model=model, op=op, ops=ops, nets=nets, y_val=y_val,
                 lasso_val=lasso_val, lip=lip):
            j, name = j_cell
            snr = snrs[j]
            nseed = derive_seed(cfg.master_seed, 1, i, j)
            y = sense(model, ds.test, snr, nseed).y
            recs = []
            for method in cfg.methods:
                tau, flag, n_eval = None, None, len(ds.test)
                if method in nets:
                    net, tau, flag = nets[method]
                    p = predict(net, apply_proxy(op, y)).reshape(len(y), -1)
                    pred, truth = p > tau, truth_test
                elif method in ("mc", "lmmse"):
                    sv = apply_proxy(ops[method], y_val).reshape(len(y_val), -1)
                    st = apply_proxy(ops[method], y).reshape(len(y), -1)
                    tau, pred = _tuned_mask(sv, truth_val, st)
                    truth = truth_test
                elif method == "omp":
                    pred, truth, n_eval = _omp_masks(model.D, y[:ns], ds.test[:ns]), truth_test[:ns], ns
                elif method == "lasso":
                    est = _lasso_estimates(model.D, y[:ns], cfg.lasso_lambda, cfg, lipschitz=lip)
                    tau, pred = _tuned_mask(lasso_val, truth_val[:nv], est)
                    truth, n_eval = truth_test[:ns], ns
                else:
                    continue
                pr, rc, f1, ce = _macro(pred, truth)
                recs.append(ExperimentRecord(
                    cfg.kind.value, name, method, mr=mr, snr_db=snr, seed=nseed, n=n_eval,
                    precision=pr, recall=rc, f1=f1, ce=ce, tau=tau, proxy_lambda=cfg.proxy_lambda,
                    lasso_lambda=cfg.lasso_lambda if method == "lasso" else None, flag=flag))
            return recs

        todo = [c for c in cells if _wanted(only_cell, c[1])]
        for j, _ in todo:
            out.seeds[f"noise/mr{i}/snr{j}"] = derive_seed(cfg.master_seed, 1, i, j)
        for recs in _pool_map(cell, todo, cfg.threads):
            out.records.extend(recs)
    return out


def run_noise_sweep(cfg: ExperimentConfig, ds: Dataset | None = None,
                    only_cell: str | None = None) -> ExperimentOutput:
    """F1 against SNR for each method; one plot file per MR."""
    if cfg.snr_db is None:
        cfg = cfg.replace(snr_db=list(NOISE_SWEEP_SNR))
    out = run_se_experiment(cfg, ds, only_cell)
    for i, mr in enumerate(cfg.mr_list):
        rows = [(float("inf") if r.snr_db is None else r.snr_db, r.f1, r.method)
                for r in out.records if r.mr == mr]
        out.plots[f"f1_vs_snr_mr{i}"] = rows
    return out


# -------------------------------------------------------- phase transition


@dataclass(frozen=True)
class PhaseCell:
    mr: float
    rho: float
    successes: int
    trials: int
    method: str = ""

    def __post_init__(self):
        if not 0 <= self.successes <= self.trials:
            raise ValueError(f"successes {self.successes} outside [0, {self.trials}]")

    @property
    def rate(self) -> float:
        return self.successes / self.trials


def phase_border(rhos, rates) -> float:
    """Largest rho with success rate >= 0.5, linearly interpolated to the
    next grid point; 0.0 when no grid point reaches 0.5."""
    rhos = np.asarray(rhos, dtype=float)
    rates = np.asarray(rates, dtype=float)
    ok = np.flatnonzero(rates >= 0.5)
    if ok.size == 0:
        return 0.0
    b = int(ok[-1])
    if b == len(rhos) - 1:
        return float(rhos[b])
    r0, r1 = rates[b], rates[b + 1]
    return float(rhos[b] + (r0 - 0.5) / (r0 - r1) * (rhos[b + 1] - rhos[b]))


def rho_bins(X: np.ndarray, edges) -> list[np.ndarray]:
    """Indices of the signals whose sparsity ratio falls in each [lo, hi) bin."""
    rho = np.count_nonzero(X, axis=1) / X.shape[1]
    return [np.flatnonzero((rho >= lo) & (rho < hi)) for lo, hi in zip(edges[:-1], edges[1:])]


def phase_train_config(cfg: ExperimentConfig) -> TrainConfig:
    """The cheaper training recipe used for the per-MR phase-grid CSENs."""
    return TrainConfig(**{**cfg.train.as_dict(), "epochs": cfg.phase_epochs})


def phase_model(cfg: ExperimentConfig, ds: Dataset, i: int):
    """The CSEN used for weights at ``cfg.mr_list[i]`` on the phase grid.

    It is trained on the first ``phase_n_train`` training digits, measured
    through its own matrix (not one of the trial matrices).
    """
    mr = cfg.mr_list[i]
    tseed = derive_seed(cfg.master_seed, 5, i)
    iseed = derive_seed(cfg.master_seed, 2, i, 1)
    ntr = min(cfg.phase_n_train, len(ds.train))
    tcfg = TrainConfig(**{**phase_train_config(cfg).as_dict(), "seed": iseed})
    net, _, _ = trained_csen(cfg.phase_arch, sensing_model(mr, tseed), tseed, ds.train[:ntr], ds.val, tcfg,
                             cfg.proxy, cfg.proxy_lambda, iseed, cfg.checkpoint_dir, ds.digest)
    return net


def run_phase_transition(cfg: ExperimentConfig, ds: Dataset | None = None,
                         only_cell: str | None = None) -> ExperimentOutput:
    """Success counts on the (MR, rho) grid and the 50 % border per method.

    For each (MR, trial) a fresh Gaussian matrix is drawn and one test digit
    is drawn per rho bin; all methods see the same instances. The weighted
    method uses a CSEN trained for that MR on a separate matrix.
    """
    methods = [m for m in cfg.methods if m in ("lasso", "weighted_csen", "omp")]
    if not methods:
        raise ValueError("phase transition needs one of lasso, weighted_csen, omp")
    ds = ds or load_dataset(cfg)
    out = ExperimentOutput()
    edges = list(cfg.rho_edges)
    centers = [0.5 * (lo + hi) for lo, hi in zip(edges[:-1], edges[1:])]
    pools = rho_bins(ds.test, edges)
    empty = [b for b, p in enumerate(pools) if p.size == 0]
    if empty:
        raise ValueError(f"no test digits in rho bins {empty}")
    counts = {}
    for i, mr in enumerate(cfg.mr_list):
        if only_cell is not None and not only_cell.startswith(f"mr{i}/"):
            continue
        net = None
        if "weighted_csen" in methods:
            out.seeds[f"phase_train_matrix/mr{i}"] = derive_seed(cfg.master_seed, 5, i)
            net = phase_model(cfg, ds, i)

        def trial(t, i=i, mr=mr, net=net):
            aseed = derive_seed(cfg.master_seed, 3, i, t)
            model = sensing_model(mr, aseed)
            picks = [int(pools[r][derive_seed(cfg.master_seed, 4, i, r, t) % pools[r].size])
                     for r in range(len(centers))]
            X = ds.test[picks]
            Y = X @ model.D.T
            lip = lipschitz_constant(model.D)
            est = {}
            if "lasso" in methods:
                est["lasso"] = _lasso_estimates(model.D, Y, cfg.lasso_lambda, cfg, lipschitz=lip)
            if "weighted_csen" in methods:
                op = build_proxy_operator(model.D, cfg.proxy, cfg.proxy_lambda, GRID)
                p = predict(net, apply_proxy(op, Y)).reshape(len(Y), -1)
                W = np.stack([weights_from_probability(pi, cfg.epsilon).w for pi in p], axis=1)
                est["weighted_csen"] = _lasso_estimates(model.D, Y, cfg.lasso_lambda, cfg, W, lip)
            if "omp" in methods:
                est["omp"] = np.stack([omp(model.D, y, max(1, min(np.count_nonzero(x), model.m - 1))).x_hat
                                       for y, x in zip(Y, X)])
            ok = {m: [recovery_success(e, x, cfg.success_tol) for e, x in zip(est[m], X)] for m in methods}
            return aseed, picks, ok

        trials = _pool_map(trial, range(cfg.trials), cfg.threads)
        for t, (aseed, picks, ok) in enumerate(trials):
            out.seeds[f"phase_matrix/mr{i}/t{t}"] = aseed
            for r in range(len(centers)):
                for m in methods:
                    counts[(i, r, m)] = counts.get((i, r, m), 0) + int(ok[m][r])
        for r, rho in enumerate(centers):
            for m in methods:
                c = PhaseCell(mr, rho, counts[(i, r, m)], cfg.trials, m)
                out.records.append(ExperimentRecord(
                    cfg.kind.value, f"mr{i}/rho{r}", m, mr=mr, rho=rho, successes=c.successes,
                    trials=c.trials, seed=derive_seed(cfg.master_seed, 3, i, 0),
                    lasso_lambda=cfg.lasso_lambda if m != "omp" else None,
                    epsilon=cfg.epsilon if m == "weighted_csen" else None,
                    proxy_lambda=cfg.proxy_lambda))
    for m in methods:
        border = []
        for i, mr in enumerate(cfg.mr_list):
            rates = [counts[(i, r, m)] / cfg.trials for r in range(len(centers)) if (i, r, m) in counts]
            if len(rates) == len(centers):
                border.append((mr, phase_border(centers, rates), m))
        out.plots.setdefault("phase_border", []).extend(border)
        out.plots[f"phase_rate_{m}"] = [
            (r.mr, r.rho, f"{r.successes}/{r.trials}") for r in out.records if r.method == m]
    return out


def phase_cells(records) -> list[PhaseCell]:
    return [PhaseCell(r.mr, r.rho, r.successes, r.trials, r.method) for r in records
            if r.successes is not None]


def borders_from_records(records, method: str) -> dict[float, float]:
    """MR -> 50 % border for one method, from phase records."""
    by_mr: dict[float, list] = {}
    for c in phase_cells(records):
        if c.method == method:
            by_mr.setdefault(c.mr, []).append((c.rho, c.rate))
    return {mr: phase_border(*zip(*sorted(v))) for mr, v in sorted(by_mr.items())}


# ----------------------------------------------------- recovery comparison


def run_recovery_comparison(cfg: ExperimentConfig, ds: Dataset | None = None,
                            only_cell: str | None = None) -> ExperimentOutput:
    """Per-digit NMSE and success for each recovery method at ``mr_list[0]``.

    Lasso-type methods pick lambda from ``lasso_lambda_grid`` by mean NMSE on
    the first ``lambda_select_samples`` validation digits. The weighted method
    takes its weights from the table CSEN (``phase_arch``) of the same matrix.
    """
    ds = ds or load_dataset(cfg)
    out = ExperimentOutput()
    mr = cfg.mr_list[0]
    mseed = derive_seed(cfg.master_seed, 0, 0)
    out.seeds["matrix/mr0"] = mseed
    model = sensing_model(mr, mseed)
    X = ds.test[:cfg.recovery_samples]
    Xv = ds.val[:cfg.lambda_select_samples]
    Y, Yv = X @ model.D.T, Xv @ model.D.T
    lip = lipschitz_constant(model.D)
    op = build_proxy_operator(model.D, cfg.proxy, cfg.proxy_lambda, GRID)
    weights = {}
    if "weighted_csen" in cfg.methods:
        a = ["csen1", "csen2"].index(cfg.phase_arch)
        iseed = derive_seed(cfg.master_seed, 2, a)
        tcfg = TrainConfig(**{**cfg.train.as_dict(), "seed": iseed})
        net, _, _ = trained_csen(cfg.phase_arch, model, mseed, ds.train, ds.val, tcfg, cfg.proxy,
                                 cfg.proxy_lambda, iseed, cfg.checkpoint_dir, ds.digest)
        for key, YY in (("test", Y), ("val", Yv)):
            p = predict(net, apply_proxy(op, YY)).reshape(len(YY), -1)
            weights[key] = np.stack([weights_from_probability(pi, cfg.epsilon).w for pi in p], axis=1)

    def nmse_all(E, XX):
        return np.array([nmse_db(e, x) for e, x in zip(E, XX)])

    estimates, lams = {}, {}
    only_method = only_cell.split("/")[1] if only_cell else None
    for method in cfg.methods:
        if only_method is not None and method != only_method:
            continue
        if method in ("lasso", "weighted_csen"):
            wv = weights.get("val") if method == "weighted_csen" else None
            wt = weights.get("test") if method == "weighted_csen" else None
            scores = [np.mean(nmse_all(_lasso_estimates(model.D, Yv, lam, cfg, wv, lip), Xv))
                      for lam in cfg.lasso_lambda_grid]
            lam = cfg.lasso_lambda_grid[int(np.argmin(scores))]
            lams[method] = lam
            estimates[method] = _lasso_estimates(model.D, Y, lam, cfg, wt, lip)
        elif method == "omp":
            estimates[method] = np.stack([omp(model.D, y, max(1, min(np.count_nonzero(x), model.m - 1))).x_hat
                                          for y, x in zip(Y, X)])
        elif method == "lmmse":
            estimates[method] = apply_proxy(op, Y).reshape(len(Y), -1)
    for s in range(len(X)):
        for method in cfg.methods:
            if method not in estimates:
                continue
            cell = f"mr0/{method}/s{s}"
            e = estimates[method][s]
            out.records.append(ExperimentRecord(
                cfg.kind.value, cell, method, mr=mr, sample=s, seed=mseed, n=N_PIXELS,
                rho=float(np.count_nonzero(X[s]) / N_PIXELS), nmse_db=nmse_db(e, X[s]),
                success=recovery_success(e, X[s], cfg.success_tol), lasso_lambda=lams.get(method),
                epsilon=cfg.epsilon if method == "weighted_csen" else None,
                proxy_lambda=cfg.proxy_lambda))
            if s < cfg.recovery_dump:
                out.matrices[f"recon/{method}-s{s}.csm"] = e.reshape(GRID)
    for s in range(min(cfg.recovery_dump, len(X))):
        out.matrices[f"recon/truth-s{s}.csm"] = X[s].reshape(GRID)
    out.plots["nmse_per_sample"] = [(r.sample, r.nmse_db, r.method) for r in out.records]
    return out


# ---------------------------------------------------------- dictionary bench


def run_dictclass_bench(cfg: ExperimentConfig, only_cell: str | None = None) -> ExperimentOutput:
    """SRC / CRC / CSEN accuracy on synthetic class-subspace features."""
    out = ExperimentOutput()
    dseed = derive_seed(cfg.master_seed, 6)
    tseed = derive_seed(cfg.master_seed, 7)
    out.seeds.update({"dict_data": dseed, "dict_train": tseed})
    c, atoms, dim = cfg.class_count, cfg.atoms_per_class, cfg.feature_dim
    data = synthetic_classes(c, atoms, dim, cfg.queries_per_class, dseed,
                             train_queries=cfg.dict_train_queries)
    queries, labels = data.queries, data.labels
    cd = build_class_dictionary(data.samples)
    preds: dict[str, list[int]] = {}
    secs: dict[str, list[float]] = {}
    for method in cfg.methods:
        if method not in ("src", "crc", "csen") or not _wanted(only_cell, method):
            continue
        if method == "src":
            res = [src_classify(cd, q) for q in queries]
        elif method == "crc":
            res = [crc_classify(cd, q) for q in queries]
        else:
            net, op = train_dictclass_csen(cd, data.train_queries, data.train_labels, cfg, tseed)
            res = [csen_classify(net, cd, q, op) for q in queries]
        preds[method] = [r.label for r in res]
        secs[method] = [r.seconds for r in res]
        acc = float(np.mean(np.asarray(preds[method]) == labels))
        out.records.append(ExperimentRecord(cfg.kind.value, method, method, n=len(labels),
                                            accuracy=acc, seed=dseed, proxy_lambda=cfg.proxy_lambda))
        out.timing.append((method, float(np.mean(secs[method]))))
    return out


def train_dictclass_csen(cd, train_queries, train_labels, cfg: ExperimentConfig, seed: int):
    """Train a CSEN1 classifier (grouped cross-entropy) on the grid dictionary."""
    op = build_proxy_operator(cd.grid_D, "lmmse", cfg.proxy_lambda, cd.grid)
    q = train_queries / np.linalg.norm(train_queries, axis=1, keepdims=True)
    net = csen1_init(cd.grid, seed)
    tcfg = TrainConfig(lr=cfg.train.lr, epochs=cfg.dict_epochs, batch_size=32,
                       loss=LossKind.CROSS_ENTROPY_GROUPED, seed=seed)
    net, _ = train(net, apply_proxy(op, q), train_labels, tcfg, groups=cd.pixel_groups)
    return net, op


# ------------------------------------------------------------------ dispatch


RUNNERS = {
    ExperimentKind.SE_TABLE: run_se_experiment,
    ExperimentKind.NOISE_SWEEP: run_noise_sweep,
    ExperimentKind.PHASE_TRANSITION: run_phase_transition,
    ExperimentKind.RECOVERY_COMPARISON: run_recovery_comparison,
}


def run_experiment(cfg: ExperimentConfig, only_cell: str | None = None) -> ExperimentOutput:
    if cfg.kind is ExperimentKind.DICTCLASS_BENCH:
        return run_dictclass_bench(cfg, only_cell)
    return RUNNERS[cfg.kind](cfg, None, only_cell)
