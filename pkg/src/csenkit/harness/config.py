"""Experiment configuration and result records."""
from __future__ import annotations

import dataclasses
import enum
import json
import math
from dataclasses import dataclass, field, fields
from pathlib import Path

from ..csen.train import TrainConfig
from ..numerics import DEFAULT_LMMSE_LAMBDA


class ExperimentKind(str, enum.Enum):
    SE_TABLE = "se_table"
    NOISE_SWEEP = "noise_sweep"
    PHASE_TRANSITION = "phase_transition"
    RECOVERY_COMPARISON = "recovery_comparison"
    DICTCLASS_BENCH = "dictclass_bench"


SE_METHODS = ("csen1", "csen2", "mc", "lmmse", "omp", "lasso")
RECOVERY_METHODS = ("lasso", "weighted_csen", "omp", "lmmse")
CLASSIFY_METHODS = ("src", "crc", "csen")
ALL_METHODS = set(SE_METHODS) | set(RECOVERY_METHODS) | set(CLASSIFY_METHODS)

DEFAULT_DATA = Path(__file__).resolve().parents[3] / "data"


@dataclass
class ExperimentConfig:
    kind: ExperimentKind = ExperimentKind.SE_TABLE
    mr_list: list[float] = field(default_factory=lambda: [0.25])
    snr_db: list[float] | None = None
    methods: list[str] = field(default_factory=lambda: ["csen1", "csen2"])
    trials: int = 20
    master_seed: int = 0
    images: str = str(DEFAULT_DATA / "mnist10k-images-idx3-ubyte.gz")
    labels: str = str(DEFAULT_DATA / "mnist10k-labels-idx1-ubyte.gz")
    out_dir: str = "results"
    checkpoint_dir: str | None = None
    n_train: int = 8000
    n_val: int = 1000
    n_test: int = 1000
    proxy: str = "lmmse"
    proxy_lambda: float = DEFAULT_LMMSE_LAMBDA
    train: TrainConfig = field(default_factory=TrainConfig)
    tau: float | None = None
    lasso_lambda: float = 1e-3
    lasso_lambda_grid: list[float] = field(default_factory=lambda: [1e-4, 1e-3, 1e-2])
    lasso_max_iters: int = 3000
    lasso_rel_tol: float = 1e-6
    epsilon: float = 1e-2
    success_tol: float = 0.1
    rho_edges: list[float] = field(default_factory=lambda: [0.05, 0.10, 0.15, 0.20, 0.25, 0.30, 0.35])
    phase_arch: str = "csen2"
    phase_n_train: int = 3000
    phase_epochs: int = 8
    recovery_samples: int = 500
    recovery_dump: int = 2
    lambda_select_samples: int = 50
    se_solver_samples: int = 200
    class_count: int = 5
    atoms_per_class: int = 4
    feature_dim: int = 30
    queries_per_class: int = 100
    dict_train_queries: int = 200
    dict_epochs: int = 30
    threads: int = 1

    def __post_init__(self):
        self.kind = ExperimentKind(self.kind)
        if isinstance(self.train, dict):
            self.train = TrainConfig(**self.train)
        if not self.mr_list or any(not 0 < mr <= 1 for mr in self.mr_list):
            raise ValueError(f"measurement rates must lie in (0, 1]: {self.mr_list}")
        if self.trials < 1:
            raise ValueError("trials must be >= 1")
        if self.phase_arch not in ("csen1", "csen2"):
            raise ValueError(f"phase_arch must be csen1 or csen2, got {self.phase_arch!r}")
        unknown = [m for m in self.methods if m not in ALL_METHODS]
        if unknown:
            raise ValueError(f"unknown methods {unknown}; known: {sorted(ALL_METHODS)}")

    @classmethod
    def from_dict(cls, d: dict) -> "ExperimentConfig":
        known = {f.name for f in fields(cls)}
        extra = set(d) - known
        if extra:
            raise ValueError(f"unknown config keys: {sorted(extra)}")
        d = dict(d)
        if "train" in d:
            tknown = {f.name for f in fields(TrainConfig)}
            textra = set(d["train"]) - tknown
            if textra:
                raise ValueError(f"unknown train config keys: {sorted(textra)}")
        return cls(**d)

    @classmethod
    def from_json(cls, path) -> "ExperimentConfig":
        return cls.from_dict(json.loads(Path(path).read_text()))

    def to_dict(self) -> dict:
        d = dataclasses.asdict(self)
        d["kind"] = self.kind.value
        d["train"] = self.train.as_dict()
        return d

    def replace(self, **kw) -> "ExperimentConfig":
        d = self.to_dict()
        d.update(kw)
        return ExperimentConfig.from_dict(d)


RECORD_FIELDS = (
    "experiment", "cell", "method", "mr", "snr_db", "rho", "sample", "seed", "n",
    "precision", "recall", "f1", "ce", "nmse_db", "success", "successes", "trials",
    "tau", "proxy_lambda", "lasso_lambda", "epsilon", "accuracy", "flag",
)


@dataclass
class ExperimentRecord:
    """One row of results.csv. Unused fields stay ``None`` (empty in CSV)."""

    experiment: str
    cell: str
    method: str
    mr: float | None = None
    snr_db: float | None = None
    rho: float | None = None
    sample: int | None = None
    seed: int | None = None
    n: int | None = None
    precision: float | None = None
    recall: float | None = None
    f1: float | None = None
    ce: float | None = None
    nmse_db: float | None = None
    success: bool | None = None
    successes: int | None = None
    trials: int | None = None
    tau: float | None = None
    proxy_lambda: float | None = None
    lasso_lambda: float | None = None
    epsilon: float | None = None
    accuracy: float | None = None
    flag: str | None = None


def format_value(v) -> str:
    if v is None:
        return ""
    if isinstance(v, bool):
        return "1" if v else "0"
    if isinstance(v, float):
        if math.isnan(v):
            return "nan"
        return format(v, ".17g")
    return str(v)


_INT_FIELDS = {"sample", "seed", "n", "successes", "trials"}
_STR_FIELDS = {"experiment", "cell", "method", "flag"}


def parse_value(name: str, s: str):
    if s == "":
        return None
    if name in _STR_FIELDS:
        return s
    if name == "success":
        return s == "1"
    if name in _INT_FIELDS:
        return int(s)
    return float(s)
