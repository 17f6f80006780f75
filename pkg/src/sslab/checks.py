"""Self-contained invariant suite run by ``sslab check``.

Each check draws its own random instances from a seeded generator and
returns a ``CheckResult``; none of them touch the filesystem.
"""

from __future__ import annotations

import time
from dataclasses import dataclass
from typing import Callable

import numpy as np

from .core import Dataset, alvarez_residual, contingency, metrics
from .data import with_group_block
from .learning import STRATEGIC_VARIANTS, TrainConfig, _Problem, objective_and_grad, smooth_sigmoid, soft_precision
from .selection import brute_force_best_action, decide_applications


@dataclass(frozen=True)
class CheckResult:
    name: str
    passed: bool
    detail: str
    seconds: float

    def line(self) -> str:
        return f"[{'PASS' if self.passed else 'FAIL'}] {self.name}: {self.detail} ({self.seconds:.2f}s)"


def oracle_equivalence(instances: int = 1000, seed: int = 0) -> tuple[int, int]:
    """Compare the precision rule with brute-force utility maximization.

    Returns ``(mismatches, groups_compared)``; only groups with at least one
    positive prediction are compared.
    """
    rng = np.random.default_rng(seed)
    mismatches = compared = 0
    for _ in range(instances):
        K = int(rng.integers(1, 5))
        m = int(rng.integers(K, 51))
        groups = np.concatenate([np.arange(K), rng.integers(0, K, m - K)])
        y = rng.integers(0, 2, m)
        yh = rng.integers(0, 2, m)
        c = float(rng.uniform(0.05, 0.95))
        ds = Dataset(np.zeros((m, 1)), y, groups, K)
        applies = decide_applications(ds, yh, c).applies
        for z in range(K):
            rows = groups == z
            if yh[rows].sum() == 0:
                continue
            compared += 1
            mismatches += int(applies[z]) != brute_force_best_action(y[rows], yh[rows], c)
    return mismatches, compared


def alvarez_max_residual(tables: int = 10_000, seed: int = 0) -> float:
    rng = np.random.default_rng(seed)
    worst = 0.0
    done = 0
    while done < tables:
        m = int(rng.integers(2, 200))
        y = rng.integers(0, 2, m)
        yh = rng.integers(0, 2, m)
        mt = metrics(contingency(y, yh))
        if mt.precision is None or mt.recall is None:
            continue
        worst = max(worst, abs(alvarez_residual(mt.base_rate, mt.recall, mt.precision, mt.error)))
        done += 1
    return worst


def debias_mismatches(instances: int = 1000, seed: int = 0, margin: float = 1e-9) -> tuple[int, int]:
    """Unclipped corrected proxy versus hard precision, both thresholded at ``c``.

    Instances with no positive hard prediction or with hard precision within
    ``margin`` of ``c`` are skipped. Returns ``(mismatches, compared)``.
    """
    rng = np.random.default_rng(seed)
    mismatches = compared = 0
    for _ in range(instances):
        n = int(rng.integers(1, 60))
        y = rng.integers(0, 2, n)
        soft = rng.uniform(0, 1, n)
        hard = rng.integers(0, 2, n)
        c = float(rng.uniform(0.05, 0.95))
        if hard.sum() == 0:
            continue
        prc = float(np.sum(y * hard) / hard.sum())
        if abs(prc - c) < margin:
            continue
        p, _ = soft_precision(y, soft, hard, c, clip=False)
        compared += 1
        mismatches += (p >= c) != (prc >= c)
    return mismatches, compared


def sigmoid_errors() -> dict[str, float]:
    """Worst deviations from the smooth step's anchor values and from the hard step."""
    costs = np.round(np.arange(1, 10) / 10.0, 10)
    anchors = 0.0
    for c in costs:
        anchors = max(
            anchors,
            abs(smooth_sigmoid(-c, c, 5.0)),
            abs(smooth_sigmoid(1.0 - c, c, 5.0) - 1.0),
            abs(smooth_sigmoid(0.0, c, 5.0) - 0.5),
        )
    step = 0.0
    for c in costs:
        r = np.concatenate([np.linspace(-c, -0.01, 500), np.linspace(0.01, 1.0 - c, 500)])
        step = max(step, float(np.max(np.abs(smooth_sigmoid(r, c, 1000.0) - (r > 0)))))
    return {"anchor": anchors, "step": step}


def gradient_errors(instances: int = 20, seed: int = 0, m: int = 30, h: float = 1e-5) -> float:
    """Worst relative error of the analytic gradient against central differences, over all variants."""
    rng = np.random.default_rng(seed)
    worst = 0.0
    for _ in range(instances):
        K = int(rng.integers(2, 4))
        groups = np.concatenate([np.arange(K), rng.integers(0, K, m - K)])
        y = rng.integers(0, 2, m)
        y[:K] = 1
        ds = with_group_block(rng.normal(size=(m, 2)), y, groups, K)
        for variant in STRATEGIC_VARIANTS:
            cfg = TrainConfig(
                cost=float(rng.uniform(0.3, 0.6)), variant=variant, lambda_app=0.5, lambda_perp=5.0
            )
            pb = _Problem(ds, cfg)
            w = rng.normal(size=ds.d) * 0.5 * pb.mask
            b = float(rng.normal() * 0.3)
            hard = ((ds.features @ w + b) > 0).astype(np.float64)
            _, g_w, g_b, _ = objective_and_grad(pb, w, b, hard)
            theta = np.append(w, b)
            fd = np.zeros_like(theta)
            for j in range(theta.shape[0]):
                e = np.zeros_like(theta)
                e[j] = h
                fp = objective_and_grad(pb, (theta + e)[:-1], (theta + e)[-1], hard, False)[0]
                fm = objective_and_grad(pb, (theta - e)[:-1], (theta - e)[-1], hard, False)[0]
                fd[j] = (fp - fm) / (2 * h)
            fd *= np.append(pb.mask, 1.0)
            g = np.append(g_w, g_b)
            worst = max(worst, float(np.linalg.norm(fd - g) / max(np.linalg.norm(fd), 1e-12)))
    return worst


def _timed(name: str, fn: Callable[[], tuple[bool, str]]) -> CheckResult:
    t = time.perf_counter()
    ok, detail = fn()
    return CheckResult(name, bool(ok), detail, time.perf_counter() - t)


def run_all(seed: int = 0) -> list[CheckResult]:
    def oracle():
        bad, n = oracle_equivalence(seed=seed)
        return bad == 0, f"{bad} mismatches over {n} groups"

    def alvarez():
        r = alvarez_max_residual(seed=seed)
        return r < 1e-12, f"max residual {r:.2e}"

    def debias():
        bad, n = debias_mismatches(seed=seed)
        return bad == 0, f"{bad} mismatches over {n} instances"

    def sigmoid():
        e = sigmoid_errors()
        return e["anchor"] < 1e-9 and e["step"] < 1e-3, f"anchor {e['anchor']:.1e}, step {e['step']:.1e}"

    def gradient():
        r = gradient_errors(seed=seed)
        return r <= 1e-4, f"worst relative error {r:.2e}"

    return [
        _timed("oracle_equivalence", oracle),
        _timed("alvarez_identity", alvarez),
        _timed("debias_decision", debias),
        _timed("sigmoid_contract", sigmoid),
        _timed("gradient_check", gradient),
    ]
