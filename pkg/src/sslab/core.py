"""Domain types and contingency metrics.

Undefined precision or recall (zero denominator) is represented as ``None``
throughout the package, never as NaN or 0.
"""

from __future__ import annotations

import enum
from dataclasses import dataclass, field
from typing import Optional, Sequence

import numpy as np


class InputError(ValueError):
    """Raised on malformed or inconsistent inputs."""


def _frozen(a: np.ndarray) -> np.ndarray:
    a = np.array(a, copy=True)
    a.setflags(write=False)
    return a


@dataclass(frozen=True, eq=False)
class Dataset:
    """Feature matrix, binary labels and group index per example.

    ``group_cols`` lists the feature columns holding the one-hot group
    encoding (empty when group membership is not part of the features).
    ``numeric_cols`` lists columns that were min-max normalized.
    Every group must have examples unless ``allow_empty_groups`` is set,
    as for an induced applicant subset.
    """

    features: np.ndarray
    labels: np.ndarray
    groups: np.ndarray
    group_count: int
    group_cols: tuple[int, ...] = ()
    numeric_cols: tuple[int, ...] = ()
    feature_names: tuple[str, ...] = ()
    group_names: tuple[str, ...] = ()
    allow_empty_groups: bool = False

    def __post_init__(self) -> None:
        X = np.atleast_2d(np.asarray(self.features, dtype=np.float64))
        y = np.asarray(self.labels)
        z = np.asarray(self.groups)
        if y.ndim != 1 or z.ndim != 1:
            raise InputError("labels and groups must be 1-d")
        if not (X.shape[0] == y.shape[0] == z.shape[0]):
            raise InputError(
                f"row count mismatch: features {X.shape[0]}, labels {y.shape[0]}, groups {z.shape[0]}"
            )
        if X.shape[0] == 0:
            raise InputError("dataset is empty")
        if not np.all((y == 0) | (y == 1)):
            raise InputError("labels must be 0/1")
        K = int(self.group_count)
        if K < 1:
            raise InputError("group_count must be >= 1")
        if z.min() < 0 or z.max() >= K:
            raise InputError(f"group index outside [0, {K})")
        counts = np.bincount(z.astype(np.int64), minlength=K)
        if np.any(counts == 0) and not self.allow_empty_groups:
            raise InputError(f"groups without examples: {np.flatnonzero(counts == 0).tolist()}")
        if not np.all(np.isfinite(X)):
            raise InputError("features must be finite")
        d = X.shape[1]
        for c in tuple(self.group_cols) + tuple(self.numeric_cols):
            if not 0 <= c < d:
                raise InputError(f"column index {c} outside feature range [0, {d})")
        if self.feature_names and len(self.feature_names) != d:
            raise InputError("feature_names length does not match feature count")
        object.__setattr__(self, "features", _frozen(X))
        object.__setattr__(self, "labels", _frozen(y.astype(np.int64)))
        object.__setattr__(self, "groups", _frozen(z.astype(np.int64)))
        object.__setattr__(self, "group_count", K)
        object.__setattr__(self, "group_cols", tuple(int(c) for c in self.group_cols))
        object.__setattr__(self, "numeric_cols", tuple(int(c) for c in self.numeric_cols))
        object.__setattr__(self, "feature_names", tuple(self.feature_names))
        object.__setattr__(self, "group_names", tuple(self.group_names))

    @property
    def m(self) -> int:
        return self.labels.shape[0]

    @property
    def d(self) -> int:
        return self.features.shape[1]

    def group_sizes(self) -> np.ndarray:
        return np.bincount(self.groups, minlength=self.group_count)

    def base_rates(self) -> np.ndarray:
        """Per-group fraction of positives; NaN for empty groups."""
        pos = np.bincount(self.groups, weights=self.labels, minlength=self.group_count)
        n = self.group_sizes()
        return np.where(n > 0, pos / np.maximum(n, 1), np.nan)

    def base_rate(self) -> float:
        return float(self.labels.mean())

    def subset(self, rows: np.ndarray, allow_empty_groups: bool = False) -> "Dataset":
        """Rows ``rows`` of this dataset, keeping original group ids."""
        return Dataset(
            features=self.features[rows],
            labels=self.labels[rows],
            groups=self.groups[rows],
            group_count=self.group_count,
            group_cols=self.group_cols,
            numeric_cols=self.numeric_cols,
            feature_names=self.feature_names,
            group_names=self.group_names,
            allow_empty_groups=allow_empty_groups,
        )


@dataclass(frozen=True, eq=False)
class LinearModel:
    """Score function ``w.x + b`` thresholded at ``threshold``.

    When the features carry a one-hot group block, the corresponding
    weights act as per-group offsets.
    """

    weights: np.ndarray
    bias: float = 0.0
    threshold: float = 0.0

    def __post_init__(self) -> None:
        w = np.asarray(self.weights, dtype=np.float64).ravel()
        if not np.all(np.isfinite(w)) or not np.isfinite(self.bias):
            raise InputError("model parameters must be finite")
        object.__setattr__(self, "weights", _frozen(w))
        object.__setattr__(self, "bias", float(self.bias))
        object.__setattr__(self, "threshold", float(self.threshold))

    def with_threshold(self, threshold: float) -> "LinearModel":
        return LinearModel(self.weights, self.bias, threshold)

    def to_dict(self) -> dict:
        return {
            "weights": self.weights.tolist(),
            "bias": self.bias,
            "threshold": _float_to_json(self.threshold),
        }

    @classmethod
    def from_dict(cls, d: dict) -> "LinearModel":
        return cls(np.asarray(d["weights"], dtype=np.float64), d["bias"], _float_from_json(d.get("threshold", 0.0)))


def _float_to_json(x: float):
    if np.isposinf(x):
        return "inf"
    if np.isneginf(x):
        return "-inf"
    return float(x)


def _float_from_json(x) -> float:
    return float(x)


def score(model: LinearModel, features: np.ndarray) -> np.ndarray | float:
    """Score of one row (returns float) or of a matrix of rows (returns array)."""
    X = np.asarray(features, dtype=np.float64)
    if X.shape[-1] != model.weights.shape[0]:
        raise InputError(f"dimension mismatch: model has {model.weights.shape[0]} weights, input has {X.shape[-1]}")
    s = X @ model.weights + model.bias
    return float(s) if X.ndim == 1 else s


def predict(model: LinearModel, features: np.ndarray, threshold: Optional[float] = None) -> np.ndarray | int:
    """Hard prediction ``1[score > threshold]``; ties at the threshold predict 0."""
    tau = model.threshold if threshold is None else threshold
    s = score(model, features)
    if np.ndim(s) == 0:
        return int(s > tau)
    return (s > tau).astype(np.int64)


@dataclass(frozen=True)
class ContingencyTable:
    tp: int
    fp: int
    tn: int
    fn: int

    def __post_init__(self) -> None:
        for name in ("tp", "fp", "tn", "fn"):
            v = getattr(self, name)
            if int(v) != v or v < 0:
                raise InputError(f"{name} must be a nonnegative integer, got {v}")
            object.__setattr__(self, name, int(v))
        if self.total < 1:
            raise InputError("contingency table is empty")

    @property
    def total(self) -> int:
        return self.tp + self.fp + self.tn + self.fn


@dataclass(frozen=True)
class Metrics:
    precision: Optional[float]
    recall: Optional[float]
    accuracy: float
    base_rate: float

    @property
    def error(self) -> float:
        return 1.0 - self.accuracy


def _check_binary(v: np.ndarray, name: str) -> np.ndarray:
    v = np.asarray(v)
    if v.ndim != 1:
        raise InputError(f"{name} must be 1-d")
    if not np.all((v == 0) | (v == 1)):
        raise InputError(f"{name} must be 0/1")
    return v.astype(np.int64)


def contingency(labels: Sequence[int], predictions: Sequence[int]) -> ContingencyTable:
    y = _check_binary(labels, "labels")
    yh = _check_binary(predictions, "predictions")
    if y.shape != yh.shape:
        raise InputError(f"length mismatch: {y.shape[0]} labels vs {yh.shape[0]} predictions")
    if y.shape[0] == 0:
        raise InputError("need at least one example")
    tp = int(np.sum((y == 1) & (yh == 1)))
    fp = int(np.sum((y == 0) & (yh == 1)))
    fn = int(np.sum((y == 1) & (yh == 0)))
    tn = int(y.shape[0] - tp - fp - fn)
    return ContingencyTable(tp=tp, fp=fp, tn=tn, fn=fn)


def metrics(table: ContingencyTable) -> Metrics:
    n = table.total
    pp = table.tp + table.fp
    ap = table.tp + table.fn
    return Metrics(
        precision=table.tp / pp if pp > 0 else None,
        recall=table.tp / ap if ap > 0 else None,
        accuracy=(table.tp + table.tn) / n,
        base_rate=ap / n,
    )


def alvarez_residual(mu: float, rcl: Optional[float], prc: Optional[float], err: float) -> float:
    """Residual of ``mu*rcl + (mu - err)*prc - 2*mu*rcl*prc``.

    Zero (to rounding) for any base rate, recall, precision and error taken
    from a single contingency table. Undefined recall or precision counts as 0.
    """
    rcl = 0.0 if rcl is None else rcl
    prc = 0.0 if prc is None else prc
    return mu * rcl + (mu - err) * prc - 2.0 * mu * rcl * prc


class Region(enum.Enum):
    FORCED_NO_APPLY = "forced_no_apply"
    FORCED_APPLY = "forced_apply"
    UNCONSTRAINED = "unconstrained"


def application_region(acc: float, mu: float, c: float) -> Region:
    """Which application outcome a group accuracy forces, for base rate ``mu`` and cost ``c``."""
    if not 0.0 < c < 1.0:
        raise InputError(f"cost must lie in (0, 1), got {c}")
    for name, v in (("acc", acc), ("mu", mu)):
        if not 0.0 <= v <= 1.0:
            raise InputError(f"{name} must lie in [0, 1], got {v}")
    odds = 1.0 / c - 1.0
    if acc < 1.0 - mu * max(1.0, odds):
        return Region.FORCED_NO_APPLY
    if acc >= 1.0 - mu * min(1.0, odds):
        return Region.FORCED_APPLY
    return Region.UNCONSTRAINED


@dataclass(frozen=True)
class GroupMetrics:
    """Per-group and global metrics of hard predictions on a dataset."""

    base_rate: np.ndarray
    precision: tuple[Optional[float], ...]
    accuracy: np.ndarray
    recall: tuple[Optional[float], ...]
    positive_rate: np.ndarray
    global_base_rate: float
    global_precision: Optional[float]
    global_accuracy: float
    tables: tuple[ContingencyTable, ...] = field(repr=False, default=())


def group_metrics(dataset: Dataset, predictions: np.ndarray) -> GroupMetrics:
    yh = _check_binary(predictions, "predictions")
    if yh.shape[0] != dataset.m:
        raise InputError(f"length mismatch: {dataset.m} examples vs {yh.shape[0]} predictions")
    K = dataset.group_count
    y, z = dataset.labels, dataset.groups
    tables, per = [], []
    for g in range(K):
        rows = z == g
        t = contingency(y[rows], yh[rows])
        tables.append(t)
        per.append(metrics(t))
    glob = metrics(contingency(y, yh))
    sizes = dataset.group_sizes()
    return GroupMetrics(
        base_rate=np.array([p.base_rate for p in per]),
        precision=tuple(p.precision for p in per),
        accuracy=np.array([p.accuracy for p in per]),
        recall=tuple(p.recall for p in per),
        positive_rate=np.array([(t.tp + t.fp) / n for t, n in zip(tables, sizes)]),
        global_base_rate=glob.base_rate,
        global_precision=glob.precision,
        global_accuracy=glob.accuracy,
        tables=tuple(tables),
    )
