"""Training regimes for linear screening classifiers.

``train_naive`` fits plain logistic regression, ``tune_threshold_semi``
re-thresholds a fixed score function for induced accuracy, and
``train_strategic`` minimizes the application-weighted log-loss where each
group's weight is a smooth function of a de-biased soft precision.

All gradients are hand-derived; see ``objective_and_grad``.
"""

from __future__ import annotations

import logging
from dataclasses import asdict, dataclass, field, replace
from typing import Optional

import numpy as np

from .core import Dataset, InputError, LinearModel
from .selection import CostSchedule, NoApplicants, as_costs, decide_applications, induced_accuracy_of

log = logging.getLogger(__name__)

VARIANTS = ("naive", "semi", "strat_x", "strat_no_z", "strat_parity")
STRATEGIC_VARIANTS = ("strat_x", "strat_no_z", "strat_parity")

CLAMP_DELTA = 1e-6
# weighted-loss value used when every smoothed application is zero
EMPTY_LOSS = 1e3
_TINY = 1e-300


class TrainingError(RuntimeError):
    def __init__(self, message: str, epoch: int, init: int = 0):
        super().__init__(f"{message} (init {init}, epoch {epoch})")
        self.epoch = epoch
        self.init = init


@dataclass(frozen=True)
class TrainConfig:
    cost: float = 0.7
    tolerance: float = 0.02
    learning_rate: float = 0.1
    epochs: int = 30000
    tau_app: float = 5.0
    tau_pred: float = 2.0
    lambda_app: float = 1.0 / 6.0
    lambda_perp: float = 0.0
    init_count: int = 5
    init_scale: float = 0.01
    seed: int = 0
    variant: str = "strat_x"
    log_every: int = 1000

    def __post_init__(self) -> None:
        if self.variant not in VARIANTS:
            raise InputError(f"unknown variant {self.variant!r}; expected one of {VARIANTS}")
        if self.learning_rate <= 0:
            raise InputError("learning_rate must be positive")
        if self.epochs < 1:
            raise InputError("epochs must be >= 1")
        if not 0.0 < self.cost < 1.0:
            raise InputError("cost must lie in (0, 1)")
        if self.tolerance < 0 or self.cost + self.tolerance >= 1.0:
            raise InputError("need 0 <= tolerance and cost + tolerance < 1")
        if self.tau_app < 1.0:
            raise InputError("tau_app must be >= 1")
        if self.tau_pred <= 0:
            raise InputError("tau_pred must be positive")
        if self.lambda_app < 0 or self.lambda_perp < 0:
            raise InputError("penalty coefficients must be nonnegative")
        if self.init_count < 1:
            raise InputError("init_count must be >= 1")

    @property
    def train_cost(self) -> float:
        """Cost used inside the training objective (cost plus tolerance)."""
        return self.cost + self.tolerance

    def to_dict(self) -> dict:
        return asdict(self)

    def updated(self, **kw) -> "TrainConfig":
        return replace(self, **kw)


def _sigmoid(u):
    return np.where(u >= 0, 1.0 / (1.0 + np.exp(-np.abs(u))), np.exp(-np.abs(u)) / (1.0 + np.exp(-np.abs(u))))


def _softplus(u):
    return np.logaddexp(0.0, u)


def _logit(p):
    return np.log(p) - np.log1p(-p)


def smooth_sigmoid(r, c: float, tau_app: float):
    """Smoothed step on ``[-c, 1 - c]``: 0 at ``-c``, 0.5 at 0, 1 at ``1 - c``.

    Equals ``(1 + ((r+c)(1-c) / (c(1-(r+c))))^(-tau))^(-1)``, evaluated as a
    logistic of ``tau * (logit(r+c) - logit(c))`` with ``r+c`` clamped to
    ``[1e-6, 1 - 1e-6]``.
    """
    q = np.clip(np.asarray(r, dtype=np.float64) + c, CLAMP_DELTA, 1.0 - CLAMP_DELTA)
    out = _sigmoid(tau_app * (_logit(q) - _logit(c)))
    return float(out) if np.ndim(out) == 0 else out


def soft_precision(
    labels: np.ndarray, soft: np.ndarray, hard: np.ndarray, c: float, clip: bool = True
) -> tuple[float, bool]:
    """Corrected soft precision of one group and whether the denominator was nonpositive.

    The correction ``B = (1/c) * sum((y - c) * (hard - soft))`` makes the
    unclipped proxy cross ``c`` exactly when hard precision does.
    """
    y = np.asarray(labels, dtype=np.float64)
    yt = np.asarray(soft, dtype=np.float64)
    yh = np.asarray(hard, dtype=np.float64)
    num = float(np.sum(y * yt))
    B = float(np.sum((y - c) * (yh - yt))) / c
    den = float(np.sum(yt)) - B
    if den <= 0:
        return (1.0 if num > 0 else 0.0), True
    p = num / den
    return (min(max(p, 0.0), 1.0) if clip else p), False


@dataclass(frozen=True, eq=False)
class SoftState:
    soft: np.ndarray
    hard: np.ndarray
    soft_precision: np.ndarray
    applications: np.ndarray
    weights: np.ndarray
    m_tilde: float
    nonpositive_denominator: tuple[int, ...] = ()
    terms: dict = field(default_factory=dict)


class _Problem:
    """Precomputed arrays for one (dataset, config) pair."""

    def __init__(self, dataset: Dataset, config: TrainConfig):
        self.X = dataset.features
        self.y = dataset.labels.astype(np.float64)
        self.z = dataset.groups
        self.K = dataset.group_count
        self.m = dataset.m
        self.n = dataset.group_sizes().astype(np.float64)
        self.config = config
        self.mask = np.ones(dataset.d)
        if config.variant in ("strat_no_z", "strat_parity"):
            self.mask[list(dataset.group_cols)] = 0.0
        self.use_perp = config.variant == "strat_parity"
        self.group_rows = [np.flatnonzero(self.z == g) for g in range(self.K)]

    def bincount(self, v):
        return np.bincount(self.z, weights=v, minlength=self.K)


def objective_and_grad(
    problem: _Problem, w: np.ndarray, b: float, hard: np.ndarray, want_grad: bool = True
) -> tuple[float, Optional[np.ndarray], Optional[float], SoftState]:
    """Strategic objective at ``(w, b)`` with frozen hard predictions ``hard``.

    Returns the loss, gradients with respect to ``w`` and ``b`` and the soft state.
    """
    cfg = problem.config
    c = cfg.train_cost
    tp_, ta = cfg.tau_pred, cfg.tau_app
    y, K, n = problem.y, problem.K, problem.n
    w = w * problem.mask

    s = problem.X @ w + b
    u = tp_ * s
    yt = _sigmoid(u)
    ell = _softplus(u) - y * u

    N = problem.bincount(y * yt)
    T = problem.bincount(yt)
    B = problem.bincount((y - c) * (hard - yt)) / c
    D = T - B
    pos_den = D > 0
    raw = np.where(pos_den, N / np.where(pos_den, D, 1.0), np.where(N > 0, 1.0, 0.0))
    prc = np.clip(raw, 0.0, 1.0)
    prc_active = pos_den & (raw > 0.0) & (raw < 1.0)

    q = np.clip(prc, CLAMP_DELTA, 1.0 - CLAMP_DELTA)
    q_active = prc_active & (prc > CLAMP_DELTA) & (prc < 1.0 - CLAMP_DELTA)
    L = _logit(q) - _logit(c)
    a = _sigmoid(ta * L)
    log_a = -_softplus(-ta * L)

    Lz = problem.bincount(ell)
    M = float(np.sum(n * a))
    if M > _TINY:
        WL = float(np.sum(a * Lz) / M)
        weights = a[problem.z] / M
    else:
        WL = EMPTY_LOSS
        weights = np.zeros(problem.m)

    imax = np.array([rows[np.argmax(s[rows])] for rows in problem.group_rows])
    r_pred = float(np.mean(_softplus(-u[imax])))
    zstar = int(np.argmax(a))
    r_app = r_pred - float(log_a[zstar])
    loss = WL + cfg.lambda_app * r_app

    r_perp = 0.0
    if problem.use_perp:
        mz = T / n
        mbar = float(np.sum(T) / problem.m)
        r_perp = float(np.mean((mz - mbar) ** 2))
        loss += cfg.lambda_perp * r_perp

    state = SoftState(
        soft=yt,
        hard=hard,
        soft_precision=prc,
        applications=a,
        weights=weights,
        m_tilde=M,
        nonpositive_denominator=tuple(np.flatnonzero(~pos_den).tolist()),
        terms={"weighted_loss": WL, "r_app": r_app, "r_perp": r_perp},
    )
    if not want_grad:
        return loss, None, None, state

    dyt_ds = tp_ * yt * (1.0 - yt)
    g_s = np.zeros(problem.m)
    dloss_dprc = np.zeros(K)
    dsig_dprc = np.where(q_active, ta / (q * (1.0 - q)), 0.0)

    if M > _TINY:
        g_s += a[problem.z] / M * tp_ * (yt - y)
        dWL_da = (Lz - n * WL) / M
        dloss_dprc += dWL_da * a * (1.0 - a) * dsig_dprc

    lam = cfg.lambda_app
    np.add.at(g_s, imax, -lam / K * tp_ * (1.0 - yt[imax]))
    dloss_dprc[zstar] += -lam * (1.0 - a[zstar]) * dsig_dprc[zstar]

    # d prc / d soft_j = y_j (c D - N) / (c D^2) on the unclipped branch
    safe_D = np.where(pos_den, D, 1.0)
    dprc_dyt_pos = np.where(prc_active, (c * D - N) / (c * safe_D**2), 0.0)
    g_yt = dloss_dprc[problem.z] * dprc_dyt_pos[problem.z] * y

    if problem.use_perp:
        dev = T / n - np.sum(T) / problem.m
        g_yt = g_yt + cfg.lambda_perp * (2.0 / K) * (dev[problem.z] / n[problem.z] - np.sum(dev) / problem.m)

    g_s += g_yt * dyt_ds
    g_w = (problem.X.T @ g_s) * problem.mask
    g_b = float(np.sum(g_s))
    return loss, g_w, g_b, state


def strategic_objective(
    model: LinearModel, dataset: Dataset, config: TrainConfig, frozen: Optional[np.ndarray] = None
) -> tuple[float, SoftState]:
    """Objective value and soft state; ``frozen`` defaults to ``1[score > 0]``."""
    problem = _Problem(dataset, config)
    w = np.asarray(model.weights)
    if frozen is None:
        frozen = ((problem.X @ (w * problem.mask) + model.bias) > 0).astype(np.float64)
    loss, _, _, state = objective_and_grad(problem, w, model.bias, np.asarray(frozen, dtype=np.float64), False)
    return loss, state


def strategic_gradient(
    model: LinearModel, dataset: Dataset, config: TrainConfig, frozen: np.ndarray
) -> tuple[np.ndarray, float]:
    problem = _Problem(dataset, config)
    _, g_w, g_b, _ = objective_and_grad(problem, np.asarray(model.weights), model.bias, np.asarray(frozen, float))
    return g_w, g_b


def _init_params(rng: np.random.Generator, d: int, scale: float) -> tuple[np.ndarray, float]:
    w = scale * rng.standard_normal(d)
    b = scale * float(rng.standard_normal())
    return w, b


def train_naive(dataset: Dataset, config: TrainConfig) -> LinearModel:
    """Full-batch gradient descent on mean log-loss of ``sigmoid(score)``."""
    X, y = dataset.features, dataset.labels.astype(np.float64)
    rng = np.random.default_rng(config.seed)
    w, b = _init_params(rng, dataset.d, config.init_scale)
    lr, m = config.learning_rate, dataset.m
    for epoch in range(config.epochs):
        s = X @ w + b
        if config.log_every and epoch % config.log_every == 0:
            loss = float(np.mean(_softplus(s) - y * s))
            if not np.isfinite(loss):
                raise TrainingError("non-finite naive loss", epoch)
            log.debug("naive epoch %d loss %.6f", epoch, loss)
        g = (_sigmoid(s) - y) / m
        w = w - lr * (X.T @ g)
        b = b - lr * float(np.sum(g))
        if not np.isfinite(b):
            raise TrainingError("non-finite naive parameters", epoch)
    return LinearModel(w, b)


@dataclass
class InitRecord:
    init: int
    final_loss: float
    train_induced_accuracy: Optional[float]
    applying_groups: list[int]
    history: list[tuple[int, float]] = field(default_factory=list)


@dataclass
class TrainLog:
    inits: list[InitRecord] = field(default_factory=list)
    chosen: int = 0

    def to_dict(self) -> dict:
        return {"chosen": self.chosen, "inits": [asdict(r) for r in self.inits]}


def _hard(problem: _Problem, w: np.ndarray, b: float) -> np.ndarray:
    return ((problem.X @ (w * problem.mask) + b) > 0).astype(np.float64)


def train_strategic(dataset: Dataset, config: TrainConfig) -> tuple[LinearModel, TrainLog]:
    """Gradient descent on the strategic objective from ``init_count`` random starts.

    Hard predictions entering the precision correction are recomputed after
    every step. The returned model is the start with the best hard induced
    accuracy on ``dataset`` at the plain cost.
    """
    if config.variant not in STRATEGIC_VARIANTS:
        raise InputError(f"train_strategic needs a strategic variant, got {config.variant!r}")
    problem = _Problem(dataset, config)
    rng = np.random.default_rng(config.seed)
    costs = CostSchedule(config.cost)
    train_log = TrainLog()
    best_acc, best_model = -np.inf, None
    for init in range(config.init_count):
        w, b = _init_params(rng, dataset.d, config.init_scale)
        w = w * problem.mask
        record = InitRecord(init=init, final_loss=np.nan, train_induced_accuracy=None, applying_groups=[])
        loss = np.nan
        for epoch in range(config.epochs):
            hard = _hard(problem, w, b)
            loss, g_w, g_b, _ = objective_and_grad(problem, w, b, hard)
            if not np.isfinite(loss) or not np.all(np.isfinite(g_w)) or not np.isfinite(g_b):
                raise TrainingError("non-finite strategic loss", epoch, init)
            if config.log_every and epoch % config.log_every == 0:
                record.history.append((epoch, float(loss)))
            w = w - config.learning_rate * g_w
            b = b - config.learning_rate * g_b
        model = LinearModel(w * problem.mask, b)
        hard = _hard(problem, w, b).astype(np.int64)
        record.final_loss = float(objective_and_grad(problem, w, b, hard.astype(float), False)[0])
        try:
            acc = induced_accuracy_of(dataset, hard, costs)
        except NoApplicants:
            acc = None
        record.applying_groups = decide_applications(dataset, hard, costs).applying_groups
        record.train_induced_accuracy = acc
        train_log.inits.append(record)
        log.info("init %d: loss %.5f, train induced acc %s, applying %s", init, record.final_loss, acc, record.applying_groups)
        score_ = -np.inf if acc is None else acc
        if best_model is None or score_ > best_acc:
            best_acc, best_model, train_log.chosen = score_, model, init
    return best_model, train_log


def tune_threshold_semi(model: LinearModel, dataset: Dataset, costs: CostSchedule | float) -> float:
    """Threshold maximizing hard induced accuracy on ``dataset``.

    Candidates are ``+inf``, ``-inf`` and midpoints between consecutive
    distinct scores. Ties go to the smallest threshold.
    """
    costs = as_costs(costs)
    K = dataset.group_count
    c_eff = costs.effective(K)
    s = dataset.features @ model.weights + model.bias
    y = dataset.labels.astype(np.float64)
    order = np.argsort(-s, kind="stable")
    s_sorted = s[order]
    levels, first = np.unique(-s_sorted, return_index=True)
    # level k ends where level k+1 begins
    ends = np.append(first[1:], s.shape[0])
    onehot = np.zeros((s.shape[0], K))
    onehot[np.arange(s.shape[0]), dataset.groups[order]] = 1.0
    pp = np.vstack([np.zeros(K), np.cumsum(onehot, axis=0)[ends - 1]])
    tp = np.vstack([np.zeros(K), np.cumsum(onehot * y[order, None], axis=0)[ends - 1]])

    distinct = -levels  # descending scores
    mids = (distinct[:-1] + distinct[1:]) / 2.0
    # row k: the k highest distinct levels predicted positive
    thresholds = np.concatenate([[np.inf], mids, [-np.inf]])

    n = dataset.group_sizes().astype(np.float64)
    neg = n - np.bincount(dataset.groups, weights=y, minlength=K)
    with np.errstate(invalid="ignore", divide="ignore"):
        prc = np.where(pp > 0, tp / np.where(pp > 0, pp, 1.0), np.nan)
    applies = (pp > 0) & (prc >= c_eff)
    correct = np.sum(np.where(applies, tp + (neg - (pp - tp)), 0.0), axis=1)
    total = np.sum(np.where(applies, n, 0.0), axis=1)
    if not np.any(total > 0):
        raise NoApplicants("no threshold admits any applying group")
    acc = np.where(total > 0, correct / np.where(total > 0, total, 1.0), -np.inf)
    best = acc.max()
    candidates = np.flatnonzero(acc == best)
    return float(thresholds[candidates].min())
