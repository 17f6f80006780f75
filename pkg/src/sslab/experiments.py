"""Evaluation harness: methods, sweeps over costs and splits, precision curves."""

from __future__ import annotations

import csv
import hashlib
import json
import logging
import math
import os
import platform
from concurrent.futures import ProcessPoolExecutor
from dataclasses import asdict, dataclass, field
from pathlib import Path
from typing import Any, Optional, Sequence

import numpy as np

from . import __version__
from .core import Dataset, InputError, LinearModel, predict, score
from .data import (
    NAIVE_DEMO_COSTS,
    GaussianGroupSpec,
    gen_gaussian_groups,
    gen_naive_demo,
    gen_ordering_demo,
    load_tabular,
    read_dataset_csv,
    split,
)
from .selection import (
    CostSchedule,
    NoApplicants,
    base_rate_ordering,
    decide_applications,
    default_grid,
    induced_accuracy_of,
    precision_curve,
)
from .learning import VARIANTS, TrainConfig, TrainLog, train_naive, train_strategic, tune_threshold_semi

log = logging.getLogger(__name__)

DEFAULT_COSTS = tuple(round(0.65 + 0.025 * k, 3) for k in range(9))

# Per-dataset hyperparameters; lambda_perp may be a (low, high) pair
# interpolated linearly over the cost range [0.65, 0.85].
DATASET_PRESETS: dict[str, dict[str, Any]] = {
    "adult": {
        "tolerance": 0.02,
        "init_count": 5,
        "lambda_app": 1.0 / 6.0,
        "strat_parity": {"lambda_app": 1.0 / 6.0, "lambda_perp": (8.0, 16.0)},
    },
    "bank": {
        "tolerance": 0.05,
        "init_count": 10,
        "lambda_app": 1.0 / 6.0,
        "strat_parity": {"lambda_app": 1.0 / 64.0, "lambda_perp": 100.0},
    },
}
DATASET_PRESETS["bank_original"] = DATASET_PRESETS["bank"]

RESULT_COLUMNS = (
    "dataset",
    "method",
    "cost",
    "seed",
    "induced_test_accuracy",
    "no_applicants",
    "applying_group_count",
    "group_count",
    "rank_r2",
    "rank_r",
    "precision",
    "accuracy",
    "applies",
)
AGGREGATE_COLUMNS = (
    "dataset",
    "method",
    "cost",
    "splits",
    "empty_splits",
    "induced_accuracy_mean",
    "induced_accuracy_stderr",
    "applying_group_count_mean",
    "group_count",
    "rank_r2_mean",
)


def _ranks(order: Sequence[int]) -> np.ndarray:
    r = np.empty(len(order))
    r[list(order)] = np.arange(len(order))
    return r


def rank_r2(base_rates: Sequence[float], precisions: Sequence[Optional[float]]) -> tuple[Optional[float], Optional[float]]:
    """Squared and signed Pearson correlation between two group rankings.

    One ranking sorts groups by descending base rate, the other by descending
    precision with undefined precisions last; ties go to the lower group id.
    Returns ``(None, None)`` when either rank vector has zero variance.
    """
    K = len(base_rates)
    if K != len(precisions):
        raise InputError("base_rates and precisions differ in length")
    if K < 2:
        return None, None
    mu_order = sorted(range(K), key=lambda z: (-base_rates[z], z))
    prc_order = sorted(range(K), key=lambda z: (precisions[z] is None, -(precisions[z] or 0.0), z))
    a, b = _ranks(mu_order), _ranks(prc_order)
    if np.std(a) == 0 or np.std(b) == 0:
        return None, None
    r = float(np.corrcoef(a, b)[0, 1])
    return r * r, r


@dataclass
class ResultRow:
    dataset: str
    method: str
    cost: float
    seed: int
    induced_test_accuracy: Optional[float]
    applying_group_count: int
    group_count: int
    rank_r2: Optional[float]
    rank_r: Optional[float]
    precision: list[Optional[float]]
    accuracy: list[float]
    applies: list[int]

    @property
    def no_applicants(self) -> bool:
        return self.induced_test_accuracy is None

    def to_record(self) -> dict:
        d = asdict(self)
        d["no_applicants"] = self.no_applicants
        for k in ("precision", "accuracy", "applies"):
            d[k] = json.dumps(d[k])
        return {k: d[k] for k in RESULT_COLUMNS}


def evaluate(dataset: Dataset, model: LinearModel, cost: float, name: str = "", method: str = "", seed: int = 0) -> ResultRow:
    """Applications and induced accuracy of ``model`` on ``dataset`` at plain cost ``cost``."""
    yh = predict(model, dataset.features)
    profile = decide_applications(dataset, yh, CostSchedule(cost))
    try:
        acc = induced_accuracy_of(dataset, yh, CostSchedule(cost))
    except NoApplicants:
        acc = None
    r2, r = rank_r2(dataset.base_rates().tolist(), profile.precision)
    group_acc = [float(np.mean(yh[dataset.groups == g] == dataset.labels[dataset.groups == g])) for g in range(dataset.group_count)]
    return ResultRow(
        dataset=name,
        method=method,
        cost=float(cost),
        seed=int(seed),
        induced_test_accuracy=acc,
        applying_group_count=profile.applying_group_count,
        group_count=dataset.group_count,
        rank_r2=r2,
        rank_r=r,
        precision=list(profile.precision),
        accuracy=group_acc,
        applies=profile.applies.astype(int).tolist(),
    )


def method_config(base: TrainConfig, method: str, cost: float, preset: Optional[str] = None, overrides: Optional[dict] = None) -> TrainConfig:
    """Training configuration for ``method`` at ``cost`` with dataset preset and overrides applied."""
    if method not in VARIANTS:
        raise InputError(f"unknown method {method!r}; expected one of {VARIANTS}")
    kw: dict[str, Any] = {"cost": cost, "variant": method}
    if preset is not None:
        if preset not in DATASET_PRESETS:
            raise InputError(f"unknown preset {preset!r}")
        p = DATASET_PRESETS[preset]
        kw.update({k: v for k, v in p.items() if k not in VARIANTS})
        kw.update(p.get(method, {}))
    kw.update((overrides or {}).get("all", {}))
    kw.update((overrides or {}).get(method, {}))
    lp = kw.get("lambda_perp")
    if isinstance(lp, (list, tuple)):
        lo, hi = lp
        frac = min(max((cost - 0.65) / 0.2, 0.0), 1.0)
        kw["lambda_perp"] = lo + frac * (hi - lo)
    return base.updated(**kw)


def fit(train: Dataset, method: str, config: TrainConfig) -> tuple[LinearModel, Optional[TrainLog]]:
    if method == "naive":
        return train_naive(train, config), None
    if method == "semi":
        model = train_naive(train, config)
        try:
            tau = tune_threshold_semi(model, train, CostSchedule(config.cost))
        except NoApplicants:
            log.warning("semi: no threshold yields applicants on the training split; keeping threshold 0")
            tau = 0.0
        return model.with_threshold(tau), None
    return train_strategic(train, config)


def run_method(train: Dataset, test: Dataset, method: str, config: TrainConfig, name: str = "", seed: int = 0) -> ResultRow:
    model, _ = fit(train, method, config)
    return evaluate(test, model, config.cost, name=name, method=method, seed=seed)


def resolve_dataset(spec: dict, seed: int = 0) -> Dataset:
    """Build a dataset from a config entry.

    ``kind`` is one of ``tabular`` (``path`` + ``schema``), ``csv`` (exported
    dataset), ``gaussian`` (``groups``, ``per_group``), ``naive_demo``
    (``condition``) or ``ordering_demo``.
    """
    kind = spec.get("kind")
    data_seed = spec.get("seed", seed)
    if kind == "tabular":
        return load_tabular(spec["path"], spec["schema"], seed=data_seed)
    if kind == "csv":
        return read_dataset_csv(spec["path"])
    if kind == "gaussian":
        return gen_gaussian_groups(GaussianGroupSpec.random(spec.get("groups", 10), spec.get("per_group", 1000), data_seed))
    if kind == "naive_demo":
        return gen_naive_demo(spec["condition"], data_seed, spec.get("m", 10000))
    if kind == "ordering_demo":
        return gen_ordering_demo(data_seed, spec.get("m", 10000))
    raise InputError(f"unknown dataset kind {kind!r}")


@dataclass
class SweepConfig:
    name: str
    dataset: dict
    costs: tuple[float, ...] = DEFAULT_COSTS
    methods: tuple[str, ...] = VARIANTS
    seeds: tuple[int, ...] = tuple(range(10))
    train_frac: float = 0.7
    preset: Optional[str] = None
    train: dict = field(default_factory=dict)
    overrides: dict = field(default_factory=dict)

    def __post_init__(self) -> None:
        self.costs = tuple(float(c) for c in self.costs)
        self.methods = tuple(self.methods)
        self.seeds = tuple(int(s) for s in self.seeds)
        if not self.costs or not self.methods or not self.seeds:
            raise InputError("sweep needs nonempty costs, methods and seeds")
        bad = [m for m in self.methods if m not in VARIANTS]
        if bad:
            raise InputError(f"unknown methods {bad}")

    @classmethod
    def from_dict(cls, d: dict) -> "SweepConfig":
        extra = set(d) - set(cls.__dataclass_fields__)
        if extra:
            raise InputError(f"unknown sweep config keys: {sorted(extra)}")
        return cls(**d)

    def to_dict(self) -> dict:
        return asdict(self)

    def digest(self) -> str:
        return config_hash(self.to_dict())


def config_hash(obj: Any) -> str:
    return hashlib.sha256(json.dumps(obj, sort_keys=True, default=str).encode()).hexdigest()[:16]


def _cell(args: tuple) -> ResultRow:
    cfg_dict, method, cost, seed = args
    cfg = SweepConfig.from_dict(cfg_dict)
    dataset = resolve_dataset(cfg.dataset, seed)
    train, test = split(dataset, cfg.train_frac, seed)
    tc = method_config(TrainConfig(**{**cfg.train, "seed": seed}), method, cost, cfg.preset, cfg.overrides)
    row = run_method(train, test, method, tc, name=cfg.name, seed=seed)
    log.info("%s %s c=%.3f seed=%d -> %s", cfg.name, method, cost, seed, row.induced_test_accuracy)
    return row


def max_workers() -> int:
    cap = os.environ.get("SSLAB_THREADS")
    n = os.cpu_count() or 1
    return max(1, min(n, int(cap))) if cap else n


@dataclass
class AggregateRow:
    dataset: str
    method: str
    cost: float
    splits: int
    empty_splits: int
    induced_accuracy_mean: Optional[float]
    induced_accuracy_stderr: Optional[float]
    applying_group_count_mean: float
    group_count: int
    rank_r2_mean: Optional[float]


def mean_stderr(values: Sequence[float]) -> tuple[Optional[float], Optional[float]]:
    v = np.asarray(values, dtype=np.float64)
    if v.size == 0:
        return None, None
    if v.size == 1:
        return float(v[0]), None
    return float(v.mean()), float(v.std(ddof=1) / math.sqrt(v.size))


def aggregate(rows: Sequence[ResultRow]) -> list[AggregateRow]:
    """Mean and standard error per (dataset, method, cost) over splits.

    Splits without applicants are left out of accuracy and rank averages
    and counted in ``empty_splits``.
    """
    cells: dict[tuple, list[ResultRow]] = {}
    for r in rows:
        cells.setdefault((r.dataset, r.method, r.cost), []).append(r)
    out = []
    for (name, method, cost), rs in cells.items():
        accs = [r.induced_test_accuracy for r in rs if r.induced_test_accuracy is not None]
        ranks = [r.rank_r2 for r in rs if r.induced_test_accuracy is not None and r.rank_r2 is not None]
        m, se = mean_stderr(accs)
        out.append(
            AggregateRow(
                dataset=name,
                method=method,
                cost=cost,
                splits=len(rs),
                empty_splits=len(rs) - len(accs),
                induced_accuracy_mean=m,
                induced_accuracy_stderr=se,
                applying_group_count_mean=float(np.mean([r.applying_group_count for r in rs])),
                group_count=rs[0].group_count,
                rank_r2_mean=float(np.mean(ranks)) if ranks else None,
            )
        )
    return out


def sweep(config: SweepConfig, workers: Optional[int] = None) -> tuple[list[ResultRow], list[AggregateRow]]:
    jobs = [(config.to_dict(), m, c, s) for m in config.methods for c in config.costs for s in config.seeds]
    workers = max_workers() if workers is None else workers
    if workers > 1 and len(jobs) > 1:
        with ProcessPoolExecutor(max_workers=workers) as pool:
            rows = list(pool.map(_cell, jobs))
    else:
        rows = [_cell(j) for j in jobs]
    return rows, aggregate(rows)


def _fmt(v: Any) -> Any:
    if v is None:
        return ""
    if isinstance(v, float):
        return repr(v)
    return v


def write_csv(path: str | Path, records: Sequence[dict], columns: Sequence[str], config_digest: str) -> None:
    with open(path, "w", newline="") as fh:
        fh.write(f"# config_hash={config_digest}\n")
        w = csv.DictWriter(fh, fieldnames=list(columns))
        w.writeheader()
        for r in records:
            w.writerow({k: _fmt(r[k]) for k in columns})


def read_results_csv(path: str | Path) -> list[ResultRow]:
    rows = []
    with open(path, newline="") as fh:
        lines = [ln for ln in fh if not ln.startswith("#")]
    for rec in csv.DictReader(lines):
        opt = lambda k: float(rec[k]) if rec[k] != "" else None
        rows.append(
            ResultRow(
                dataset=rec["dataset"],
                method=rec["method"],
                cost=float(rec["cost"]),
                seed=int(rec["seed"]),
                induced_test_accuracy=opt("induced_test_accuracy"),
                applying_group_count=int(rec["applying_group_count"]),
                group_count=int(rec["group_count"]),
                rank_r2=opt("rank_r2"),
                rank_r=opt("rank_r"),
                precision=json.loads(rec["precision"]),
                accuracy=json.loads(rec["accuracy"]),
                applies=json.loads(rec["applies"]),
            )
        )
    return rows


def manifest(config: dict, seeds: Sequence[int], extra: Optional[dict] = None) -> dict:
    return {
        "config": config,
        "config_hash": config_hash(config),
        "seeds": list(seeds),
        "versions": {
            "sslab": __version__,
            "numpy": np.__version__,
            "python": platform.python_version(),
            "platform": platform.platform(),
        },
        **(extra or {}),
    }


def precision_curves(
    model: LinearModel, dataset: Dataset, c: float, grid: Optional[np.ndarray] = None, points: int = 201
) -> dict:
    """Per-group precision and application decision at each threshold of ``grid``.

    Undefined precisions are emitted as ``None`` so gaps survive export.
    """
    s = score(model, dataset.features)
    grid = default_grid(s, points) if grid is None else np.asarray(grid, dtype=np.float64)
    groups = []
    for z in range(dataset.group_count):
        rows = dataset.groups == z
        prc = precision_curve(s[rows], dataset.labels[rows], grid)
        groups.append(
            {
                "group": z,
                "base_rate": float(dataset.labels[rows].mean()),
                "precision": prc,
                "applies": [int(p is not None and p >= c) for p in prc],
            }
        )
    return {"cost": c, "grid": grid.tolist(), "groups": groups}


def crossings(curve: Sequence[Optional[float]], c: float) -> int:
    """Number of times a precision curve changes side of ``c``, skipping undefined points."""
    sides = [p >= c for p in curve if p is not None]
    return int(sum(a != b for a, b in zip(sides, sides[1:])))


# Default training setup for the two-group ordering construction: the cost
# is not fixed by the construction, so one high enough that the
# informative-group-only solution is strictly preferred is used.
ORDERING_DEMO_CONFIG = TrainConfig(cost=0.9, tolerance=0.02, epochs=5000, init_count=10, init_scale=1.0)


@dataclass
class NaiveDemoResult:
    condition: str
    seed: int
    cost: float
    assumed_accuracy: float
    induced_accuracy: Optional[float]
    applies: list[int]

    @property
    def gap(self) -> Optional[float]:
        if self.induced_accuracy is None:
            return None
        return self.assumed_accuracy - self.induced_accuracy


def naive_demo(condition: str, seed: int = 0, config: Optional[TrainConfig] = None) -> NaiveDemoResult:
    """Assumed (whole population) versus induced (applicants only) accuracy of a naive model.

    The model is trained and evaluated on the same full sample, so the
    published precisions are the training-sample ones.
    """
    cost = NAIVE_DEMO_COSTS[condition]
    cfg = (config or TrainConfig(epochs=3000)).updated(cost=cost, seed=seed, variant="naive")
    data = gen_naive_demo(condition, seed)
    model = train_naive(data, cfg)
    row = evaluate(data, model, cost, name=f"naive_demo:{condition}", method="naive", seed=seed)
    yh = predict(model, data.features)
    return NaiveDemoResult(
        condition=condition,
        seed=seed,
        cost=cost,
        assumed_accuracy=float(np.mean(yh == data.labels)),
        induced_accuracy=row.induced_test_accuracy,
        applies=row.applies,
    )


def ordering_demo(seed: int = 0, config: Optional[TrainConfig] = None, train_frac: float = 0.7) -> dict[str, ResultRow]:
    """Semi-strategic versus strategic training on the two-group ordering construction."""
    cfg = (config or ORDERING_DEMO_CONFIG).updated(seed=seed)
    train, test = split(gen_ordering_demo(seed), train_frac, seed)
    out = {}
    for method in ("naive", "semi", "strat_x"):
        out[method] = run_method(train, test, method, cfg.updated(variant=method), name="ordering_demo", seed=seed)
    return out
