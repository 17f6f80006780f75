"""Candidate behaviour: who applies, given published per-group precision.

A group applies iff its conditional precision on the published sample
reaches its (possibly subsidized) cost. Groups with no positive predictions
have undefined precision and never apply.
"""

from __future__ import annotations

import warnings
from dataclasses import dataclass
from typing import Optional, Sequence

import numpy as np

from .core import Dataset, InputError, LinearModel, predict, score

SUBSIDY_DELTA = 1e-9


class NoApplicants(Exception):
    """No group applies under the classifier, so the induced distribution is empty."""


EmptyInducedDistribution = NoApplicants


@dataclass(frozen=True)
class CostSchedule:
    """Base cost ``c`` and per-group subsidies; effective cost is ``c - s_z``."""

    base_cost: float
    subsidies: Optional[tuple[float, ...]] = None

    def __post_init__(self) -> None:
        if not 0.0 < self.base_cost < 1.0:
            raise InputError(f"base cost must lie in (0, 1), got {self.base_cost}")
        if self.subsidies is not None:
            s = tuple(float(v) for v in self.subsidies)
            if any(v < 0 for v in s):
                raise InputError("subsidies must be nonnegative")
            eff = [self.base_cost - v for v in s]
            bad = [z for z, e in enumerate(eff) if not 0.0 < e < 1.0]
            if bad:
                raise InputError(f"effective cost outside (0, 1) for groups {bad}")
            object.__setattr__(self, "subsidies", s)

    def effective(self, group_count: int) -> np.ndarray:
        if self.subsidies is None:
            return np.full(group_count, self.base_cost)
        if len(self.subsidies) != group_count:
            raise InputError(f"{len(self.subsidies)} subsidies given for {group_count} groups")
        return self.base_cost - np.asarray(self.subsidies)

    def with_subsidy(self, group: int, amount: float, group_count: int) -> "CostSchedule":
        s = list(self.subsidies) if self.subsidies is not None else [0.0] * group_count
        s[group] = amount
        return CostSchedule(self.base_cost, tuple(s))


def as_costs(costs: CostSchedule | float) -> CostSchedule:
    return costs if isinstance(costs, CostSchedule) else CostSchedule(float(costs))


@dataclass(frozen=True, eq=False)
class ApplicationProfile:
    precision: tuple[Optional[float], ...]
    positive_rate: np.ndarray
    effective_cost: np.ndarray
    applies: np.ndarray
    applicant_indices: np.ndarray

    @property
    def applicant_count(self) -> int:
        return int(self.applicant_indices.shape[0])

    @property
    def applying_groups(self) -> list[int]:
        return np.flatnonzero(self.applies).tolist()

    @property
    def applying_group_count(self) -> int:
        return int(self.applies.sum())


def _group_counts(dataset: Dataset, predictions: np.ndarray) -> tuple[np.ndarray, np.ndarray]:
    yh = np.asarray(predictions)
    if yh.shape != (dataset.m,):
        raise InputError(f"expected {dataset.m} predictions, got shape {yh.shape}")
    K = dataset.group_count
    pp = np.bincount(dataset.groups, weights=yh, minlength=K)
    tp = np.bincount(dataset.groups, weights=yh * dataset.labels, minlength=K)
    return tp, pp


def conditional_precision(dataset: Dataset, predictions: np.ndarray) -> tuple[Optional[float], ...]:
    tp, pp = _group_counts(dataset, predictions)
    return tuple(float(t / p) if p > 0 else None for t, p in zip(tp, pp))


def decide_applications(
    dataset: Dataset, predictions: np.ndarray, costs: CostSchedule | float
) -> ApplicationProfile:
    costs = as_costs(costs)
    K = dataset.group_count
    prc = conditional_precision(dataset, predictions)
    _, pp = _group_counts(dataset, predictions)
    c_eff = costs.effective(K)
    applies = np.array([p is not None and p >= c for p, c in zip(prc, c_eff)], dtype=bool)
    return ApplicationProfile(
        precision=prc,
        positive_rate=pp / dataset.group_sizes(),
        effective_cost=c_eff,
        applies=applies,
        applicant_indices=np.flatnonzero(applies[dataset.groups]),
    )


def expected_utility(labels: np.ndarray, predictions: np.ndarray, c: float) -> float:
    """Empirical mean of ``yhat * (y - c)`` over one group."""
    y = np.asarray(labels, dtype=np.float64)
    yh = np.asarray(predictions, dtype=np.float64)
    if y.shape[0] == 0:
        raise InputError("group is empty")
    return float(np.mean(yh * (y - c)))


def brute_force_best_action(labels: np.ndarray, predictions: np.ndarray, c: float) -> int:
    """Utility-maximizing action found by evaluating both actions directly."""
    y = np.asarray(labels, dtype=np.float64)
    yh = np.asarray(predictions, dtype=np.float64)
    utilities = {a: float(np.mean(a * yh * (y - c))) for a in (0, 1)}
    return 1 if utilities[1] >= utilities[0] else 0


def induced_subset(
    dataset: Dataset, model: LinearModel, threshold: Optional[float], costs: CostSchedule | float
) -> tuple[Dataset, ApplicationProfile]:
    profile = decide_applications(dataset, predict(model, dataset.features, threshold), costs)
    if profile.applicant_count == 0:
        raise EmptyInducedDistribution("no group applies")
    return dataset.subset(profile.applicant_indices, allow_empty_groups=True), profile


def induced_accuracy_of(dataset: Dataset, predictions: np.ndarray, costs: CostSchedule | float) -> float:
    """0/1 accuracy over the rows of applying groups; raises NoApplicants."""
    profile = decide_applications(dataset, predictions, costs)
    idx = profile.applicant_indices
    if idx.shape[0] == 0:
        raise NoApplicants("no group applies")
    return float(np.mean(np.asarray(predictions)[idx] == dataset.labels[idx]))


def induced_accuracy(
    dataset: Dataset, model: LinearModel, threshold: Optional[float], costs: CostSchedule | float
) -> float:
    return induced_accuracy_of(dataset, predict(model, dataset.features, threshold), costs)


def default_grid(scores: np.ndarray, points: int = 201) -> np.ndarray:
    """Evenly spaced thresholds over the score range, padded by one step on each side."""
    lo, hi = float(np.min(scores)), float(np.max(scores))
    if points < 3:
        raise InputError("grid needs at least 3 points")
    if hi == lo:
        hi = lo + 1.0
    h = (hi - lo) / (points - 3)
    return lo - h + h * np.arange(points)


def precision_curve(scores: np.ndarray, labels: np.ndarray, grid: np.ndarray) -> list[Optional[float]]:
    """Precision of ``1[score > tau]`` for each tau in ``grid``."""
    s = np.asarray(scores, dtype=np.float64)
    y = np.asarray(labels, dtype=np.float64)
    order = np.argsort(s, kind="stable")
    s_sorted = s[order]
    y_sorted = y[order]
    # suffix sums: number of (positive) examples with score > tau
    pos_suffix = np.concatenate([np.cumsum(y_sorted[::-1])[::-1], [0.0]])
    start = np.searchsorted(s_sorted, grid, side="right")
    npos_pred = s.shape[0] - start
    tp = pos_suffix[start]
    return [float(t / n) if n > 0 else None for t, n in zip(tp, npos_pred)]


@dataclass(frozen=True)
class GroupOrdering:
    """Groups sorted by the smallest grid threshold at which they apply.

    ``crossing[z]`` is ``None`` for groups that never apply on the grid.
    """

    order: tuple[int, ...]
    crossing: tuple[Optional[float], ...]

    @property
    def never_applies(self) -> tuple[int, ...]:
        return tuple(z for z in self.order if self.crossing[z] is None)


def threshold_ordering(
    model: LinearModel, dataset: Dataset, c: float, tau_grid: Optional[np.ndarray] = None
) -> GroupOrdering:
    s = score(model, dataset.features)
    grid = default_grid(s) if tau_grid is None else np.asarray(tau_grid, dtype=np.float64)
    if np.any(np.diff(grid) < 0):
        raise InputError("threshold grid must be ascending")
    crossing: list[Optional[float]] = []
    for z in range(dataset.group_count):
        rows = dataset.groups == z
        curve = precision_curve(s[rows], dataset.labels[rows], grid)
        hit = next((float(t) for t, p in zip(grid, curve) if p is not None and p >= c), None)
        crossing.append(hit)
    order = sorted(
        range(dataset.group_count),
        key=lambda z: (crossing[z] is None, crossing[z] if crossing[z] is not None else 0.0, z),
    )
    return GroupOrdering(order=tuple(order), crossing=tuple(crossing))


def base_rate_ordering(dataset: Dataset) -> list[int]:
    mu = dataset.base_rates()
    return sorted(range(dataset.group_count), key=lambda z: (-mu[z], z))


def parity_precision(prc: float, mu: float, mu_z: float) -> float:
    """Group precision implied by predictions independent of group membership."""
    if mu <= 0:
        raise InputError("global base rate must be positive")
    value = prc * mu_z / mu
    if value > 1.0:
        warnings.warn(f"parity precision {value:.4f} exceeds 1; inputs violate the independence premise")
    return value


def subsidized_base_rate(mu_z: float, s_z: float, mu: float) -> float:
    return mu_z + s_z * mu


def subsidized_precision(prc: float, mu: float, mu_z: float, s_z: float) -> float:
    """Parity-form group precision after a subsidy ``s_z`` (in units of the global base rate)."""
    return parity_precision(prc, mu, subsidized_base_rate(mu_z, s_z, mu))


def minimal_guaranteeing_subsidy(mu_z: float, mu: float, c: float, delta: float = SUBSIDY_DELTA) -> float:
    """Smallest subsidy with ``mu_z + s*mu > c - s``; 0 when ``mu_z > c`` already."""
    if mu <= 0:
        raise InputError("global base rate must be positive")
    if mu_z > c:
        return 0.0
    return (c - mu_z) / (1.0 + mu) + delta


def parity_applications(dataset: Dataset, predictions: np.ndarray, costs: CostSchedule | float) -> np.ndarray:
    """Application decisions under the parity form of group precision.

    Group ``z`` applies iff ``prc * (mu_z + s_z * mu) / mu >= c - s_z``, with global
    precision ``prc`` and base rate ``mu``. Only meaningful when predictions are
    (close to) independent of group; no group applies without positive predictions.
    """
    costs = as_costs(costs)
    K = dataset.group_count
    yh = np.asarray(predictions)
    if yh.shape != (dataset.m,):
        raise InputError(f"expected {dataset.m} predictions, got shape {yh.shape}")
    if yh.sum() == 0:
        return np.zeros(K, dtype=bool)
    prc = float(np.sum(yh * dataset.labels) / yh.sum())
    mu = dataset.base_rate()
    s = np.zeros(K) if costs.subsidies is None else np.asarray(costs.subsidies)
    mu_s = dataset.base_rates() + s * mu
    with warnings.catch_warnings():
        warnings.simplefilter("ignore")
        prc_z = np.array([parity_precision(prc, mu, v) for v in mu_s])
    return prc_z >= costs.effective(K)


def check_score_calibration(
    scores: np.ndarray,
    labels: np.ndarray,
    tau_grid: np.ndarray,
    group_mask: Optional[np.ndarray] = None,
    tol: float = 1e-9,
    sampling_tol: float = 0.0,
) -> list[int]:
    """Grid indices ``k`` where precision drops from ``tau_grid[k]`` to ``tau_grid[k+1]``.

    An empty result means precision is monotone in the threshold on this grid,
    which is the empirical form of score-function calibration. Points with
    undefined precision (no positive predictions) are skipped.
    """
    grid = np.asarray(tau_grid, dtype=np.float64)
    if np.any(np.diff(grid) < 0):
        raise InputError("threshold grid must be ascending")
    s = np.asarray(scores, dtype=np.float64)
    y = np.asarray(labels)
    if group_mask is not None:
        s, y = s[group_mask], y[group_mask]
    curve = precision_curve(s, y, grid)
    violations = []
    for k in range(len(grid) - 1):
        a, b = curve[k], curve[k + 1]
        if a is None or b is None:
            continue
        if b < a - tol - sampling_tol:
            violations.append(k)
    return violations


def applications_on_grid(
    scores: np.ndarray, dataset: Dataset, grid: Sequence[float], costs: CostSchedule | float
) -> np.ndarray:
    """Matrix ``[len(grid), K]`` of application decisions as the threshold varies."""
    s = np.asarray(scores)
    return np.array([decide_applications(dataset, (s > t).astype(np.int64), costs).applies for t in grid])
