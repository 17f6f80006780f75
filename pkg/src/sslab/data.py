"""Synthetic generators, tabular ingestion and train/test splitting.

Synthetic datasets append a one-hot group block to the non-group features.
Gaussians given as (mean, spread) use the spread as standard deviation unless
the field name says variance.
"""

from __future__ import annotations

import json
from dataclasses import asdict, dataclass, field
from importlib import resources
from pathlib import Path
from typing import Optional, Sequence

import numpy as np
import pandas as pd

from .core import Dataset, InputError

NAIVE_DEMO_BASE_RATES = {"same": 0.5, "lower": 0.15, "higher": 0.85}
NAIVE_DEMO_COSTS = {"same": 0.8, "lower": 0.8, "higher": 0.9}
REFERENCE_BASE_RATE = 0.5


def with_group_block(xbar: np.ndarray, labels: np.ndarray, groups: np.ndarray, K: int) -> Dataset:
    """Dataset whose features are ``xbar`` followed by a one-hot group block."""
    xbar = np.asarray(xbar, dtype=np.float64)
    if xbar.ndim == 1:
        xbar = xbar[:, None]
    dx = xbar.shape[1]
    X = np.hstack([xbar, np.eye(K)[groups]])
    return Dataset(
        features=X,
        labels=labels,
        groups=groups,
        group_count=K,
        group_cols=tuple(range(dx, dx + K)),
        feature_names=tuple(f"x{j}" for j in range(dx)) + tuple(f"grp_z{k}" for k in range(K)),
        group_names=tuple(f"z{k}" for k in range(K)),
    )


@dataclass(frozen=True)
class GaussianGroupSpec:
    """Class-conditional Gaussian parameters per group (rows) and feature (columns)."""

    mean_neg: np.ndarray
    var_neg: np.ndarray
    mean_pos: np.ndarray
    var_pos: np.ndarray
    base_rates: np.ndarray
    sizes: np.ndarray
    seed: int = 0

    def __post_init__(self) -> None:
        arrays = {}
        for name in ("mean_neg", "var_neg", "mean_pos", "var_pos"):
            a = np.asarray(getattr(self, name), dtype=np.float64)
            arrays[name] = a[:, None] if a.ndim == 1 else a
        K = arrays["mean_neg"].shape[0]
        mu = np.asarray(self.base_rates, dtype=np.float64)
        sizes = np.asarray(self.sizes, dtype=np.int64)
        if any(a.shape != arrays["mean_neg"].shape for a in arrays.values()) or mu.shape != (K,) or sizes.shape != (K,):
            raise InputError("inconsistent parameter shapes in GaussianGroupSpec")
        if np.any(arrays["var_neg"] <= 0) or np.any(arrays["var_pos"] <= 0):
            raise InputError("variances must be positive")
        if np.any((mu < 0) | (mu > 1)):
            raise InputError("base rates must lie in [0, 1]")
        if np.any(sizes < 1):
            raise InputError("every group needs at least one example")
        for name, a in arrays.items():
            object.__setattr__(self, name, a)
        object.__setattr__(self, "base_rates", mu)
        object.__setattr__(self, "sizes", sizes)

    @property
    def group_count(self) -> int:
        return self.base_rates.shape[0]

    @classmethod
    def random(cls, K: int = 10, per_group: int = 1000, seed: int = 0, features: int = 1) -> "GaussianGroupSpec":
        """Parameters drawn as negatives ~ U(0, .5), positives ~ U(.5, 1), variances ~ U(.2, .5)."""
        rng = np.random.default_rng([seed, 0])
        shape = (K, features)
        return cls(
            mean_neg=rng.uniform(0.0, 0.5, shape),
            var_neg=rng.uniform(0.2, 0.5, shape),
            mean_pos=rng.uniform(0.5, 1.0, shape),
            var_pos=rng.uniform(0.2, 0.5, shape),
            base_rates=rng.uniform(0.0, 1.0, K),
            sizes=np.full(K, per_group),
            seed=seed,
        )


def gen_gaussian_groups(spec: GaussianGroupSpec) -> Dataset:
    rng = np.random.default_rng([spec.seed, 1])
    K = spec.group_count
    groups = np.repeat(np.arange(K), spec.sizes)
    labels = (rng.random(groups.shape[0]) < spec.base_rates[groups]).astype(np.int64)
    mean = np.where(labels[:, None] == 1, spec.mean_pos[groups], spec.mean_neg[groups])
    var = np.where(labels[:, None] == 1, spec.var_pos[groups], spec.var_neg[groups])
    xbar = mean + np.sqrt(var) * rng.standard_normal(mean.shape)
    return with_group_block(xbar, labels, groups, K)


def gen_naive_demo(condition: str, seed: int = 0, m: int = 10000) -> Dataset:
    """Two groups: a reference group with base rate 0.5 and a comparison group.

    The comparison group's base rate is 0.5, 0.15 or 0.85 for ``same``,
    ``lower`` and ``higher``. Features given the label are N(-0.5, 0.5)
    and N(0.5, 0.5) in both groups.
    """
    if condition not in NAIVE_DEMO_BASE_RATES:
        raise InputError(f"condition must be one of {sorted(NAIVE_DEMO_BASE_RATES)}, got {condition!r}")
    rng = np.random.default_rng([seed, 2])
    groups = np.repeat([0, 1], [m // 2, m - m // 2])
    mu = np.array([REFERENCE_BASE_RATE, NAIVE_DEMO_BASE_RATES[condition]])
    labels = (rng.random(m) < mu[groups]).astype(np.int64)
    xbar = np.where(labels == 1, 0.5, -0.5) + 0.5 * rng.standard_normal(m)
    return with_group_block(xbar, labels, groups, 2)


# (mean_neg, mean_pos, spread) per group for the two non-group features
ORDERING_DEMO = {
    "share_first": 0.1,
    "base_rates": (0.3, 0.7),
    "x1": ((-0.3, 0.2, 0.1), (0.0, 0.0, 0.2)),
    "x2": ((-0.35, 0.25, 0.3), (-0.35, 0.25, 0.3)),
}


def gen_ordering_demo(seed: int = 0, m: int = 10000) -> Dataset:
    """Two groups where the first feature is informative only for the smaller group."""
    rng = np.random.default_rng([seed, 3])
    groups = (rng.random(m) >= ORDERING_DEMO["share_first"]).astype(np.int64)
    mu = np.asarray(ORDERING_DEMO["base_rates"])
    labels = (rng.random(m) < mu[groups]).astype(np.int64)
    cols = []
    for key in ("x1", "x2"):
        params = np.asarray(ORDERING_DEMO[key])[groups]
        loc = np.where(labels == 1, params[:, 1], params[:, 0])
        cols.append(loc + params[:, 2] * rng.standard_normal(m))
    return with_group_block(np.column_stack(cols), labels, groups, 2)


@dataclass
class TabularSchema:
    """Column roles and preprocessing rules for a delimiter-separated file.

    ``subsample`` rules are applied in order; each selects rows by
    ``group`` (raw group value) or ``label`` (0/1) and keeps ``keep_fraction``
    of them at random.
    """

    name: str
    group: str
    label: str
    positive_labels: list[str]
    numeric: list[str] = field(default_factory=list)
    binary: dict[str, dict[str, int]] = field(default_factory=dict)
    categorical: list[str] = field(default_factory=list)
    category_maps: dict[str, dict[str, str]] = field(default_factory=dict)
    group_drop: list[str] = field(default_factory=list)
    subsample: list[dict] = field(default_factory=list)
    delimiter: str = ","
    missing: list[str] = field(default_factory=lambda: ["?"])
    aliases: dict[str, str] = field(default_factory=dict)
    label_values: list[str] = field(default_factory=list)

    @classmethod
    def from_dict(cls, d: dict) -> "TabularSchema":
        known = set(cls.__dataclass_fields__)
        extra = set(d) - known
        if extra:
            raise InputError(f"unknown schema keys: {sorted(extra)}")
        return cls(**d)

    def to_dict(self) -> dict:
        return asdict(self)


PRESETS = ("adult", "bank", "bank_original")


def load_schema(name_or_path: str | Path) -> TabularSchema:
    """Shipped preset by name, or a JSON schema file."""
    if str(name_or_path) in PRESETS:
        text = resources.files("sslab.schemas").joinpath(f"{name_or_path}.json").read_text()
    else:
        path = Path(name_or_path)
        if not path.exists():
            raise InputError(f"schema {name_or_path!r} is neither a preset {PRESETS} nor an existing file")
        text = path.read_text()
    return TabularSchema.from_dict(json.loads(text))


def _minmax(col: np.ndarray) -> np.ndarray:
    lo, hi = col.min(), col.max()
    return np.zeros_like(col) if hi == lo else (col - lo) / (hi - lo)


def load_tabular(path: str | Path, schema: TabularSchema | str, seed: int = 0) -> Dataset:
    """Read, clean, subsample and encode a tabular file into a ``Dataset``.

    Numeric (and mapped binary) columns are min-max scaled to [0, 1] over
    the loaded rows; ``split`` refits the scaling on the train rows.
    Categorical columns, including the group column, become one-hot blocks.
    Group ids are assigned in sorted order of the (mapped) group values.
    """
    if isinstance(schema, str):
        schema = load_schema(schema)
    path = Path(path)
    if not path.exists():
        raise InputError(f"no such file: {path}")
    df = pd.read_csv(path, sep=schema.delimiter, dtype=str, skipinitialspace=True, comment=None)
    df.columns = [c.strip().strip('"') for c in df.columns]
    df = df.rename(columns=schema.aliases)
    needed = [schema.group, schema.label, *schema.numeric, *schema.binary, *schema.categorical]
    missing_cols = [c for c in dict.fromkeys(needed) if c not in df.columns]
    if missing_cols:
        raise InputError(f"{path.name}: missing columns {missing_cols}")
    df = df[list(dict.fromkeys(needed))].apply(lambda s: s.str.strip().str.strip('"'))
    df = df[~df.isin(schema.missing).any(axis=1)].reset_index(drop=True)

    for col, mapping in schema.category_maps.items():
        df[col] = df[col].map(lambda v, m=mapping: m.get(v, v))
    df = df[~df[schema.group].isin(schema.group_drop)].reset_index(drop=True)

    lab = df[schema.label]
    if schema.label_values:
        bad = sorted(set(lab) - set(schema.label_values))
        if bad:
            raise InputError(f"{path.name}: non-binary label values {bad}")
    elif lab.nunique() > 2:
        raise InputError(f"{path.name}: label column {schema.label!r} has {lab.nunique()} distinct values")
    y = lab.isin(schema.positive_labels).to_numpy().astype(np.int64)

    rng = np.random.default_rng(seed)
    keep = np.ones(len(df), dtype=bool)
    for rule in schema.subsample:
        if "group" in rule:
            sel = (df[schema.group] == rule["group"]).to_numpy()
        elif "label" in rule:
            sel = y == int(rule["label"])
        else:
            raise InputError(f"subsample rule needs 'group' or 'label': {rule}")
        idx = np.flatnonzero(sel & keep)
        n_keep = int(round(rule["keep_fraction"] * idx.shape[0]))
        drop = rng.choice(idx, size=idx.shape[0] - n_keep, replace=False)
        keep[drop] = False
    df, y = df[keep].reset_index(drop=True), y[keep]

    blocks, names = [], []
    numeric_cols = []
    for col in schema.numeric:
        try:
            v = df[col].astype(np.float64).to_numpy()
        except ValueError as e:
            raise InputError(f"{path.name}: numeric column {col!r} has non-numeric values") from e
        numeric_cols.append(len(names))
        blocks.append(_minmax(v)[:, None])
        names.append(col)
    for col, mapping in schema.binary.items():
        unmapped = sorted(set(df[col]) - set(mapping))
        if unmapped:
            raise InputError(f"{path.name}: unmapped values {unmapped} in binary column {col!r}")
        numeric_cols.append(len(names))
        blocks.append(_minmax(df[col].map(mapping).to_numpy(np.float64))[:, None])
        names.append(col)

    group_values = sorted(df[schema.group].unique())
    gidx = {g: k for k, g in enumerate(group_values)}
    groups = df[schema.group].map(gidx).to_numpy(np.int64)
    group_cols = ()
    for col in schema.categorical:
        cats = group_values if col == schema.group else sorted(df[col].unique())
        start = len(names)
        codes = df[col].map({v: k for k, v in enumerate(cats)}).to_numpy(np.int64)
        blocks.append(np.eye(len(cats))[codes])
        names.extend(f"{col}={v}" for v in cats)
        if col == schema.group:
            group_cols = tuple(range(start, start + len(cats)))
    if schema.group not in schema.categorical:
        raise InputError("group column must be listed as categorical")

    return Dataset(
        features=np.hstack(blocks),
        labels=y,
        groups=groups,
        group_count=len(group_values),
        group_cols=group_cols,
        numeric_cols=tuple(numeric_cols),
        feature_names=tuple(names),
        group_names=tuple(group_values),
    )


def _renormalize(train: Dataset, test: Dataset) -> tuple[Dataset, Dataset]:
    cols = list(train.numeric_cols)
    if not cols:
        return train, test
    Xtr, Xte = train.features.copy(), test.features.copy()
    lo = Xtr[:, cols].min(axis=0)
    span = Xtr[:, cols].max(axis=0) - lo
    span = np.where(span == 0, 1.0, span)
    Xtr[:, cols] = (Xtr[:, cols] - lo) / span
    Xte[:, cols] = (Xte[:, cols] - lo) / span
    rebuild = lambda ds, X: Dataset(
        X, ds.labels, ds.groups, ds.group_count, ds.group_cols, ds.numeric_cols, ds.feature_names, ds.group_names
    )
    return rebuild(train, Xtr), rebuild(test, Xte)


def split(
    dataset: Dataset, train_frac: float = 0.7, seed: int = 0, renormalize: bool = True, max_retries: int = 100
) -> tuple[Dataset, Dataset]:
    """Uniform random train/test split in which every group appears on both sides.

    Retries with ``seed + 1, seed + 2, ...`` when a group lands on one side only.
    Numeric columns are rescaled with train-split min/max when ``renormalize``.
    """
    if not 0.0 < train_frac < 1.0:
        raise InputError(f"train_frac must lie in (0, 1), got {train_frac}")
    m = dataset.m
    n_train = int(round(train_frac * m))
    if n_train in (0, m):
        raise InputError(f"split of {m} examples at {train_frac} leaves one side empty")
    K = dataset.group_count
    offender = None
    for attempt in range(max_retries + 1):
        perm = np.random.default_rng(seed + attempt).permutation(m)
        tr, te = np.sort(perm[:n_train]), np.sort(perm[n_train:])
        in_tr = np.bincount(dataset.groups[tr], minlength=K)
        in_te = np.bincount(dataset.groups[te], minlength=K)
        bad = np.flatnonzero((in_tr == 0) | (in_te == 0))
        if bad.size == 0:
            train, test = dataset.subset(tr), dataset.subset(te)
            return _renormalize(train, test) if renormalize else (train, test)
        offender = int(bad[0])
    name = dataset.group_names[offender] if dataset.group_names else offender
    raise InputError(f"could not place group {name!r} in both splits after {max_retries} retries")


def write_dataset_csv(dataset: Dataset, path: str | Path, comment: Optional[str] = None) -> None:
    """Write features, label and group columns.

    Group one-hot columns are prefixed ``grp:`` and normalized numeric columns
    ``num:``, so ``read_dataset_csv`` can restore the column roles.
    """
    names = list(dataset.feature_names) or [f"x{j}" for j in range(dataset.d)]
    header = []
    for j, n in enumerate(names):
        prefix = "grp:" if j in dataset.group_cols else "num:" if j in dataset.numeric_cols else ""
        header.append(prefix + n)
    df = pd.DataFrame(dataset.features, columns=header)
    df["label"] = dataset.labels
    df["group"] = dataset.groups
    with open(path, "w", newline="") as fh:
        if comment:
            for line in comment.splitlines():
                fh.write(f"# {line}\n")
        if dataset.group_names:
            fh.write(f"# group_names={json.dumps(list(dataset.group_names))}\n")
        df.to_csv(fh, index=False, float_format="%.17g")


def read_dataset_csv(path: str | Path) -> Dataset:
    if not Path(path).exists():
        raise InputError(f"no such file: {path}")
    group_names: tuple[str, ...] = ()
    with open(path) as fh:
        for line in fh:
            if not line.startswith("#"):
                break
            if line.startswith("# group_names="):
                group_names = tuple(json.loads(line.split("=", 1)[1]))
    df = pd.read_csv(path, comment="#", float_precision="round_trip")
    for col in ("label", "group"):
        if col not in df.columns:
            raise InputError(f"{path}: missing column {col!r}")
    feats = [c for c in df.columns if c not in ("label", "group")]
    groups = df["group"].to_numpy(np.int64)
    group_cols = tuple(j for j, c in enumerate(feats) if c.startswith("grp:"))
    numeric_cols = tuple(j for j, c in enumerate(feats) if c.startswith("num:"))
    names = tuple(c.split(":", 1)[1] if c[:4] in ("grp:", "num:") else c for c in feats)
    K = max(int(groups.max()) + 1, len(group_cols))
    return Dataset(
        features=df[feats].to_numpy(np.float64),
        labels=df["label"].to_numpy(np.int64),
        groups=groups,
        group_count=K,
        group_cols=group_cols,
        numeric_cols=numeric_cols,
        feature_names=names,
        group_names=group_names,
    )
