import numpy as np
import pytest
from hypothesis import given, strategies as st
from hypothesis.extra.numpy import arrays

from xloop.data import (DataError, SplitConfig, load_dataset, parse_schema, prepare, preprocess,
                        read_dataset_csv, smote_rebalance, split_indices, train_test_split,
                        write_dataset_csv)
from xloop.datasets import EXPECTED_FEATURES, SCHEMAS, synthetic, write_fixture

from conftest import make_dataset

SCHEMA = {
    "age": "numerical",
    "smoker": "binary",
    "color": "nary",
    "sex": {"kind": "protected", "group_a": "F"},
    "y": {"kind": "label", "positive": "yes"},
}


def write_csv(path, lines):
    path.write_text("\n".join(lines) + "\n")
    return path


@pytest.fixture
def toy_csv(tmp_path):
    return write_csv(tmp_path / "toy.csv", [
        "age,smoker,color,sex,y",
        "30,yes,red,F,yes",
        "40,no,green,M,no",
        "50,no,blue,F,yes",
        "60,yes,red,M,no",
        "?,yes,red,M,no",
    ])


def test_load_marks_missing(toy_csv):
    raw = load_dataset(toy_csv, SCHEMA)
    assert len(raw) == 5
    assert raw.rows[4]["age"] is None
    assert len(raw.complete_rows()) == 4


def test_load_errors(tmp_path, toy_csv):
    with pytest.raises(FileNotFoundError):
        load_dataset(tmp_path / "absent.csv", SCHEMA)
    with pytest.raises(DataError, match="mismatch"):
        load_dataset(toy_csv, {**SCHEMA, "extra": "numerical"})
    empty = write_csv(tmp_path / "empty.csv", ["age,smoker,color,sex,y"])
    with pytest.raises(DataError, match="no rows"):
        load_dataset(empty, SCHEMA)
    bad = write_csv(tmp_path / "bad.csv", ["age,smoker,color,sex,y", "abc,yes,red,F,yes"])
    with pytest.raises(DataError, match="non-numeric.*age"):
        load_dataset(bad, SCHEMA)


def test_schema_needs_one_label():
    with pytest.raises(DataError, match="exactly one label"):
        parse_schema({"a": "numerical"})
    with pytest.raises(DataError, match="at most one protected"):
        parse_schema({"a": "protected", "b": "protected", "y": "label"})


def test_preprocess_encoding(toy_csv):
    ds = preprocess(load_dataset(toy_csv, SCHEMA))
    assert ds.feature_names == ("age", "smoker", "color=blue", "color=green", "color=red", "sex")
    assert ds.n == 4
    np.testing.assert_allclose(ds.X[:, 0].mean(), 0, atol=1e-12)
    np.testing.assert_allclose(ds.X[:, 0].std(), 1, atol=1e-12)
    np.testing.assert_array_equal(ds.X[:, 1], [1, -1, -1, 1])  # yes -> 1, no -> -1
    # one active category per row: sum is 2 - N
    np.testing.assert_array_equal(ds.X[:, 2:5].sum(axis=1), [-1, -1, -1, -1])
    np.testing.assert_array_equal(ds.X[0, 2:5], [-1, -1, 1])
    assert list(ds.protected) == ["A", "B", "A", "B"]
    np.testing.assert_array_equal(ds.y, [1, 0, 1, 0])
    assert ds.onehot_mask.tolist() == [False, True, True, True, True, True]


def test_mean_value_maps_to_zero(toy_csv):
    raw = load_dataset(toy_csv, SCHEMA).complete_rows()
    ds = preprocess(raw)
    test = preprocess(raw.subset([0]), ds.norm_stats)
    mu = ds.norm_stats.means["age"]
    assert mu == 45.0
    shifted = raw.subset([0])
    shifted.rows[0] = {**shifted.rows[0], "age": mu}
    assert preprocess(shifted, ds.norm_stats).X[0, 0] == 0.0
    assert test.X[0, 0] == ds.X[0, 0]


def test_preprocess_errors(tmp_path, toy_csv):
    raw = load_dataset(toy_csv, SCHEMA)
    train = preprocess(raw.subset([0, 1, 3]))
    with pytest.raises(DataError, match="unseen"):
        preprocess(raw.subset([2]), train.norm_stats)  # "blue" not in train vocabulary
    const = write_csv(tmp_path / "c.csv", ["a,y", "1,0", "1,1"])
    with pytest.raises(DataError, match="'a' has zero variance"):
        preprocess(load_dataset(const, {"a": "numerical", "y": "label"}))
    gone = write_csv(tmp_path / "g.csv", ["a,y", "?,0", "NA,1"])
    with pytest.raises(DataError, match="all rows removed"):
        preprocess(load_dataset(gone, {"a": "numerical", "y": "label"}))


def test_label_threshold_and_ignore(tmp_path):
    p = write_csv(tmp_path / "s.csv", ["a,g1,g3", "1,3,9", "2,x,10", "3,5,15"])
    ds = preprocess(load_dataset(p, {"a": "numerical", "g1": "ignore",
                                     "g3": {"kind": "label", "threshold": 10}}))
    assert ds.m == 1
    np.testing.assert_array_equal(ds.y, [0, 1, 1])


def test_split_sizes_add_up():
    raw_train = synthetic(200, 3, seed=1)
    tr, te = train_test_split(raw_train, SplitConfig(0.5, 0))
    assert tr.n + te.n == 200


@pytest.mark.parametrize("name", sorted(EXPECTED_FEATURES))
def test_feature_counts_on_fixtures(tmp_path, name):
    p = write_fixture(name, tmp_path / f"{name}.csv", n=400, seed=3)
    d = prepare(load_dataset(p, SCHEMAS[name]), SplitConfig(0.2, 0))
    assert d.train.m == EXPECTED_FEATURES[name]
    assert d.test.m == EXPECTED_FEATURES[name]


def test_split_examples():
    y = np.array([0] * 50 + [1] * 50)
    tr, te = split_indices(y, SplitConfig(0.2, 7))
    assert len(tr) == 80 and len(te) == 20
    assert np.bincount(y[te]).tolist() == [10, 10]
    assert set(tr).isdisjoint(te) and set(tr) | set(te) == set(range(100))
    tr2, te2 = split_indices(y, SplitConfig(0.2, 7))
    np.testing.assert_array_equal(te, te2)
    _, te3 = split_indices(y, SplitConfig(0.2, 8))
    assert not np.array_equal(te, te3)
    with pytest.raises(DataError):
        split_indices(np.zeros(10), SplitConfig(0.2, 0))
    with pytest.raises(DataError, match="empty side"):
        split_indices(np.array([0, 1, 0, 1]), SplitConfig(0.01, 0))


@given(n0=st.integers(2, 40), n1=st.integers(2, 40), frac=st.floats(0.1, 0.9), seed=st.integers(0, 999))
def test_split_partition_property(n0, n1, frac, seed):
    y = np.array([0] * n0 + [1] * n1)
    try:
        tr, te = split_indices(y, SplitConfig(frac, seed))
    except DataError:
        return
    assert len(np.intersect1d(tr, te)) == 0
    np.testing.assert_array_equal(np.sort(np.concatenate([tr, te])), np.arange(n0 + n1))


def test_smote_examples(rng):
    X = rng.normal(size=(30, 3))
    y = np.array([1] * 10 + [0] * 20)
    ds = make_dataset(X, y, protected=np.where(np.arange(30) % 2, "A", "B"))
    out = smote_rebalance(ds, 5, seed=0)
    assert np.bincount(out.y).tolist() == [20, 20]
    np.testing.assert_array_equal(out.X[:30], X)
    np.testing.assert_array_equal(out.protected[:30], ds.protected)
    balanced = make_dataset(X[:20], np.array([0, 1] * 10))
    assert smote_rebalance(balanced) is balanced
    with pytest.raises(DataError):
        smote_rebalance(make_dataset(X, np.zeros(30)))
    with pytest.raises(DataError, match="k_neighbors"):
        smote_rebalance(make_dataset(X[:12], [1] * 3 + [0] * 9), k_neighbors=5)


def test_smote_deterministic(rng):
    ds = make_dataset(rng.normal(size=(40, 4)), [1] * 12 + [0] * 28)
    a, b = smote_rebalance(ds, seed=3), smote_rebalance(ds, seed=3)
    np.testing.assert_array_equal(a.X, b.X)
    assert not np.array_equal(a.X, smote_rebalance(ds, seed=4).X)


@given(arrays(np.float64, (16, 3), elements=st.floats(-5, 5)), st.integers(0, 100))
def test_smote_rows_on_minority_segments(X, seed):
    y = np.array([1] * 6 + [0] * 10)
    out = smote_rebalance(make_dataset(X, y), k_neighbors=3, seed=seed)
    minority = X[:6]
    for row in out.X[16:]:
        ok = False
        for a in minority:
            for b in minority:
                d = b - a
                if np.allclose(row, a, atol=1e-9):
                    ok = True
                    break
                if d @ d == 0:
                    continue
                lam = (row - a) @ d / (d @ d)
                if -1e-9 <= lam <= 1 + 1e-9 and np.allclose(a + lam * d, row, atol=1e-9):
                    ok = True
                    break
            if ok:
                break
        assert ok


def test_csv_roundtrip(tmp_path, toy_csv):
    ds = preprocess(load_dataset(toy_csv, SCHEMA))
    write_dataset_csv(ds, tmp_path / "out.csv")
    back = read_dataset_csv(tmp_path / "out.csv")
    np.testing.assert_array_equal(back.X, ds.X)
    np.testing.assert_array_equal(back.y, ds.y)
    assert back.feature_names == ds.feature_names
    assert back.feature_origin == ds.feature_origin
    assert list(back.protected) == list(ds.protected)
    header = (tmp_path / "out.csv").read_text().splitlines()[0]
    assert header.endswith(",label,protected")


def test_dataset_is_immutable(toy_csv):
    ds = preprocess(load_dataset(toy_csv, SCHEMA))
    with pytest.raises(ValueError):
        ds.X[0, 0] = 5.0


def test_prepare_split_before_smote(tmp_path):
    p = write_fixture("heartrisk", tmp_path / "h.csv", n=300, seed=1)
    raw = load_dataset(p, SCHEMAS["heartrisk"])
    d = prepare(raw, SplitConfig(0.2, 0), smote_seed=0)
    assert d.n_dropped > 0
    assert np.bincount(d.train.y)[0] == np.bincount(d.train.y)[1]
    assert d.test.n == round(0.2 * (len(raw) - d.n_dropped))
