import json

import numpy as np
import pandas as pd
import pytest
from hypothesis import given
from hypothesis import strategies as st

from sslab.core import Dataset, InputError
from sslab.data import (
    ORDERING_DEMO,
    PRESETS,
    GaussianGroupSpec,
    TabularSchema,
    gen_gaussian_groups,
    gen_naive_demo,
    gen_ordering_demo,
    load_schema,
    load_tabular,
    read_dataset_csv,
    split,
    write_dataset_csv,
)

RACES = ["White", "Black", "Asian-Pac-Islander", "Amer-Indian-Eskimo", "Other"]


def _adult_frame(n=800, seed=0):
    rng = np.random.default_rng(seed)
    pick = lambda vals: rng.choice(vals, n)
    df = pd.DataFrame(
        {
            "age": rng.integers(17, 90, n),
            "workclass": pick(["Private", "Self-emp-not-inc", "Local-gov", "?"]),
            "fnlwgt": rng.integers(10_000, 500_000, n),
            "education": pick(["Bachelors", "HS-grad"]),
            "educational-num": rng.integers(1, 17, n),
            "marital-status": pick(["Never-married", "Married-civ-spouse", "Divorced"]),
            "occupation": pick(["Exec-managerial", "Craft-repair", "Sales", "Other-service", "Armed-Forces"]),
            "relationship": pick(["Husband", "Not-in-family", "Own-child"]),
            "race": rng.choice(RACES, n, p=[0.6, 0.15, 0.1, 0.05, 0.1]),
            "gender": pick(["Male", "Female"]),
            "capital-gain": rng.integers(0, 5000, n),
            "capital-loss": rng.integers(0, 500, n),
            "hours-per-week": rng.integers(1, 99, n),
            "native-country": pick(["United-States", "Mexico"]),
            "income": pick(["<=50K", ">50K"]),
        }
    )
    return df


@pytest.fixture
def adult_csv(tmp_path):
    path = tmp_path / "adult.csv"
    _adult_frame().to_csv(path, index=False)
    return path


def test_gaussian_generator_shapes_and_determinism():
    spec = GaussianGroupSpec.random(seed=3)
    ds = gen_gaussian_groups(spec)
    assert ds.m == 10_000 and ds.group_count == 10
    assert ds.group_sizes().tolist() == [1000] * 10
    again = gen_gaussian_groups(GaussianGroupSpec.random(seed=3))
    assert np.array_equal(ds.features, again.features)
    other = gen_gaussian_groups(GaussianGroupSpec.random(seed=4))
    assert not np.array_equal(ds.features, other.features)
    assert np.all((spec.mean_neg >= 0) & (spec.mean_neg <= 0.5))
    assert np.all((spec.mean_pos >= 0.5) & (spec.mean_pos <= 1))
    assert np.all((spec.var_neg >= 0.2) & (spec.var_pos <= 0.5))


def test_gaussian_spec_validation():
    with pytest.raises(InputError):
        GaussianGroupSpec([0.0], [-1.0], [1.0], [1.0], [0.5], [10])
    with pytest.raises(InputError):
        GaussianGroupSpec([0.0, 1.0], [1.0], [1.0], [1.0], [0.5], [10])


def test_gaussian_moments_follow_variance(rng):
    spec = GaussianGroupSpec([0.2], [0.4], [0.8], [0.25], [0.5], [200_000], seed=1)
    ds = gen_gaussian_groups(spec)
    x, y = ds.features[:, 0], ds.labels
    assert x[y == 0].var() == pytest.approx(0.4, rel=0.02)
    assert x[y == 1].var() == pytest.approx(0.25, rel=0.02)
    assert x[y == 1].mean() == pytest.approx(0.8, abs=0.01)


@pytest.mark.parametrize("condition,mu", [("same", 0.5), ("lower", 0.15), ("higher", 0.85)])
def test_naive_demo_base_rates(condition, mu):
    ds = gen_naive_demo(condition, seed=0)
    assert ds.m == 10_000 and ds.group_count == 2
    assert ds.base_rates()[0] == pytest.approx(0.5, abs=0.03)
    assert ds.base_rates()[1] == pytest.approx(mu, abs=0.03)
    with pytest.raises(InputError):
        gen_naive_demo("bogus")


def test_ordering_demo_construction():
    ds = gen_ordering_demo(seed=0)
    assert ds.m == 10_000 and ds.d == 4
    share = np.mean(ds.groups == 0)
    assert abs(share - 0.1) < 4 * np.sqrt(0.09 / ds.m)
    assert ds.base_rates().tolist() == pytest.approx([0.3, 0.7], abs=0.05)
    neg, pos, spread = ORDERING_DEMO["x1"][1]
    assert neg == pos
    x1 = ds.features[ds.groups == 1, 0]
    y1 = ds.labels[ds.groups == 1]
    assert abs(x1[y1 == 1].mean() - x1[y1 == 0].mean()) < 0.02


def test_presets_load():
    for name in PRESETS:
        schema = load_schema(name)
        assert schema.group in schema.categorical
    assert load_schema("bank").subsample == [{"label": 0, "keep_fraction": 0.7}]
    assert load_schema("bank").delimiter == ";"
    with pytest.raises(InputError):
        load_schema("nope")


def test_load_adult_like(adult_csv):
    raw = pd.read_csv(adult_csv)
    ds = load_tabular(adult_csv, "adult", seed=0)
    kept = raw[raw["workclass"] != "?"]
    merged = kept["race"].replace({"Amer-Indian-Eskimo": "Other"})
    assert ds.group_names == ("Asian-Pac-Islander", "Black", "Other", "White")
    expected = merged.value_counts()
    sizes = dict(zip(ds.group_names, ds.group_sizes().tolist()))
    assert sizes["Black"] == expected["Black"]
    assert sizes["Other"] == expected["Other"]
    assert sizes["White"] == round(0.25 * expected["White"])
    for j in ds.numeric_cols:
        assert ds.features[:, j].min() == 0.0 and ds.features[:, j].max() == 1.0
    onehot = np.array([n.startswith("race=") for n in ds.feature_names])
    assert np.all(ds.features[:, onehot].sum(axis=1) == 1)
    occ = [n for n in ds.feature_names if n.startswith("occupation=")]
    assert len(occ) <= 5
    assert np.array_equal(np.argmax(ds.features[:, list(ds.group_cols)], axis=1), ds.groups)
    again = load_tabular(adult_csv, "adult", seed=0)
    assert np.array_equal(ds.features, again.features)


def test_load_errors(tmp_path, adult_csv):
    df = _adult_frame()
    df.drop(columns=["race"]).to_csv(tmp_path / "a.csv", index=False)
    with pytest.raises(InputError, match="missing columns"):
        load_tabular(tmp_path / "a.csv", "adult")
    df2 = df.copy()
    df2.loc[df2.index[df2["workclass"] != "?"][0], "income"] = "maybe"
    df2.to_csv(tmp_path / "b.csv", index=False)
    with pytest.raises(InputError, match="non-binary"):
        load_tabular(tmp_path / "b.csv", "adult")
    with pytest.raises(InputError):
        load_tabular(tmp_path / "none.csv", "adult")


def test_load_bank_like(tmp_path):
    rng = np.random.default_rng(1)
    n = 600
    jobs = ["admin.", "technician", "unknown", "housemaid", "retired"]
    df = pd.DataFrame(
        {
            "age": rng.integers(18, 90, n),
            "job": rng.choice(jobs, n),
            "marital": rng.choice(["married", "single"], n),
            "education": rng.choice(["primary", "tertiary"], n),
            "default": rng.choice(["yes", "no"], n),
            "balance": rng.integers(-500, 5000, n),
            "housing": rng.choice(["yes", "no"], n),
            "loan": rng.choice(["yes", "no"], n),
            "contact": rng.choice(["cellular", "unknown"], n),
            "day": rng.integers(1, 31, n),
            "month": rng.choice(["may", "jun"], n),
            "duration": rng.integers(0, 2000, n),
            "campaign": rng.integers(1, 10, n),
            "pdays": rng.integers(-1, 300, n),
            "previous": rng.integers(0, 5, n),
            "poutcome": rng.choice(["unknown", "success"], n),
            "y": rng.choice(["yes", "no"], n, p=[0.2, 0.8]),
        }
    )
    path = tmp_path / "bank.csv"
    df.to_csv(path, sep=";", index=False)
    orig = load_tabular(path, "bank_original")
    assert orig.group_names == ("admin.", "retired", "technician")
    down = load_tabular(path, "bank", seed=0)
    neg_before = int(np.sum(orig.labels == 0))
    assert int(np.sum(down.labels == 0)) == round(0.7 * neg_before)
    assert down.base_rate() > orig.base_rate()
    df.loc[df.index[df["job"] == "retired"][0], "housing"] = "maybe"
    df.to_csv(path, sep=";", index=False)
    with pytest.raises(InputError, match="unmapped"):
        load_tabular(path, "bank_original")


def test_schema_roundtrip_and_unknown_keys(tmp_path):
    s = load_schema("adult")
    p = tmp_path / "s.json"
    p.write_text(json.dumps(s.to_dict()))
    assert load_schema(p) == s
    with pytest.raises(InputError):
        TabularSchema.from_dict({**s.to_dict(), "extra": 1})


def test_split_sizes_and_determinism():
    ds = Dataset(np.arange(10.0)[:, None], np.array([0, 1] * 5), np.array([0, 1] * 5), 2)
    tr, te = split(ds, 0.7, seed=0)
    assert tr.m == 7 and te.m == 3
    tr2, te2 = split(ds, 0.7, seed=0)
    assert np.array_equal(tr.features, tr2.features)
    parts = {tuple(split(ds, 0.7, seed=k)[0].features[:, 0]) for k in range(10)}
    assert len(parts) > 1
    with pytest.raises(InputError):
        split(ds, 1.0)


def test_split_retries_and_reports_group():
    X = np.zeros((5, 1))
    ds = Dataset(X, np.array([0, 1, 0, 1, 0]), np.array([0, 0, 0, 0, 1]), 2, group_names=("a", "b"))
    with pytest.raises(InputError, match="'b'"):
        split(ds, 0.5, seed=0)


@given(st.integers(0, 1000))
def test_split_covers_every_group(seed):
    ds = gen_gaussian_groups(GaussianGroupSpec.random(K=5, per_group=6, seed=2))
    tr, te = split(ds, 0.7, seed)
    assert np.all(tr.group_sizes() > 0) and np.all(te.group_sizes() > 0)
    assert tr.m + te.m == ds.m


def test_split_normalizes_with_train_statistics(adult_csv):
    ds = load_tabular(adult_csv, "adult", seed=0)
    tr, te = split(ds, 0.7, seed=0)
    for j in tr.numeric_cols:
        assert tr.features[:, j].min() == 0.0 and tr.features[:, j].max() == 1.0
    # the test side is transformed by the same affine map, so it may leave [0, 1]
    raw_tr, raw_te = split(ds, 0.7, seed=0, renormalize=False)
    j = tr.numeric_cols[0]
    lo, hi = raw_tr.features[:, j].min(), raw_tr.features[:, j].max()
    assert te.features[:, j] == pytest.approx((raw_te.features[:, j] - lo) / (hi - lo))


def test_csv_roundtrip(tmp_path):
    ds = gen_ordering_demo(seed=2, m=500)
    path = tmp_path / "d.csv"
    write_dataset_csv(ds, path, comment="config_hash=abc")
    assert path.read_text().startswith("# config_hash=abc\n")
    back = read_dataset_csv(path)
    assert np.array_equal(back.features, ds.features)
    assert np.array_equal(back.labels, ds.labels)
    assert back.group_cols == ds.group_cols
    assert back.feature_names == ds.feature_names
    assert back.group_names == ds.group_names
