import json

import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st
from hypothesis.extra.numpy import arrays

from prosf.data import (CsvSchema, NormalizationRecord, SplitSpec, Standardizer, SyntheticSpec,
                        generate_synthetic, load_csv, load_dataset_csv, load_schema, normalize,
                        save_dataset_csv, split)
from prosf.model_core import Dataset, train_logistic


def test_synthetic_deterministic_and_shaped():
    a = generate_synthetic(SyntheticSpec(n=100, d=4, seed=5))
    b = generate_synthetic(SyntheticSpec(n=100, d=4, seed=5))
    assert np.array_equal(a.X, b.X) and np.array_equal(a.y, b.y)
    assert a.X.shape == (100, 4) and set(np.unique(a.y)) <= {-1, 1}
    assert not np.array_equal(a.X, generate_synthetic(SyntheticSpec(n=100, d=4, seed=6)).X)


def test_synthetic_separable_enough():
    data = generate_synthetic(SyntheticSpec(n=1000, d=2, class_separation=4.0, seed=0))
    f = train_logistic(data)
    assert np.mean(f.predict(data.X) == data.y) >= 0.95


def test_synthetic_validation():
    with pytest.raises(ValueError):
        SyntheticSpec(class_separation=0)
    with pytest.raises(ValueError):
        SyntheticSpec(label_noise=0.5)


def test_csv_toy_with_one_hot_and_missing(tmp_path):
    p = tmp_path / "toy.csv"
    p.write_text("age,city,income,label\n"
                 "30,paris,1.5,yes\n"
                 "40,rome,,no\n"
                 "25,rome,2.0,no\n"
                 "50,paris,3.0,yes\n")
    schema = CsvSchema(("age", "city", "income"), "label", "yes", ("city",), "toy")
    data = load_csv(p, schema)
    assert data.X.tolist() == [[30, 1, 0, 1.5], [25, 0, 1, 2.0], [50, 1, 0, 3.0]]
    assert data.y.tolist() == [1, -1, 1]


def test_csv_errors(tmp_path):
    schema = CsvSchema(("a",), "y", "1")
    p = tmp_path / "bad.csv"
    p.write_text("a,y\n1,1\nx,0\n")
    with pytest.raises(ValueError, match="row 3"):
        load_csv(p, schema)
    p.write_text("a,y\n1,1\n2,0\n3,2\n")
    with pytest.raises(ValueError, match="3 values"):
        load_csv(p, schema)
    p.write_text("b,y\n1,1\n")
    with pytest.raises(ValueError, match="missing"):
        load_csv(p, schema)


def test_schema_file(tmp_path):
    p = tmp_path / "s.json"
    p.write_text(json.dumps({"features": ["a"], "label": "y", "positive": 1}))
    assert load_schema(p).positive == "1"
    p.write_text(json.dumps({"features": ["a"], "label": "y", "positive": 1, "colour": "red"}))
    with pytest.raises(ValueError, match="unknown"):
        load_schema(p)


def test_dataset_csv_round_trip(tmp_path):
    data = generate_synthetic(SyntheticSpec(n=50, d=3, seed=2))
    save_dataset_csv(data, tmp_path / "d.csv")
    back = load_dataset_csv(tmp_path / "d.csv")
    assert np.array_equal(back.X, data.X) and np.array_equal(back.y, data.y)


def test_normalize_and_constant_feature():
    X = np.column_stack([np.arange(10.0), np.full(10, 7.0)])
    data = Dataset(X, np.where(np.arange(10) < 5, 1, -1))
    z, rec = normalize(data)
    assert z.X[:, 0].mean() == pytest.approx(0, abs=1e-12)
    assert z.X[:, 0].std() == pytest.approx(1, abs=1e-12)
    assert np.all(z.X[:, 1] == 0)
    assert np.allclose(rec.inverse(z.X), X)
    again = NormalizationRecord.from_dict(json.loads(json.dumps(rec.to_dict())))
    assert np.array_equal(again.transform(X), z.X)
    st_ = Standardizer().fit(X)
    assert np.allclose(st_.transform(X), z.X)
    assert np.allclose(st_.inverse_transform(st_.transform(X)), X)


@settings(max_examples=40, deadline=None)
@given(arrays(float, (12, 3), elements=st.floats(-1e3, 1e3)))
def test_normalize_inverse_property(X):
    data = Dataset(X, np.ones(12, dtype=int))
    z, rec = normalize(data)
    assert np.allclose(rec.inverse(z.X), X, atol=1e-6 * (1 + np.abs(X).max()))


def _indexed(n=100, pos=40):
    X = np.arange(n, dtype=float)[:, None]
    return Dataset(X, np.where(np.arange(n) < pos, 1, -1))


def test_split_sizes_and_stratification():
    data = _indexed()
    (tr, va, te), = split(data, SplitSpec(0.8, 0.1, 0.1, seed=3))
    assert (len(tr), len(va), len(te)) == (80, 10, 10)
    ids = np.concatenate([tr.X[:, 0], va.X[:, 0], te.X[:, 0]])
    assert sorted(ids) == list(range(100))
    assert (te.y == 1).sum() == 4 and (va.y == 1).sum() == 4
    (tr2, _, _), = split(data, SplitSpec(0.8, 0.1, 0.1, seed=3))
    assert np.array_equal(tr.X, tr2.X)


def test_kfold_tests_each_example_once():
    data = _indexed()
    folds = split(data, SplitSpec(folds=10, seed=1))
    assert len(folds) == 10
    tested = np.concatenate([te.X[:, 0] for _, _, te in folds])
    assert sorted(tested) == list(range(100))
    for tr, va, te in folds:
        assert len(tr) + len(va) + len(te) == 100
        assert not set(tr.X[:, 0]) & set(te.X[:, 0])


def test_split_validation():
    with pytest.raises(ValueError):
        SplitSpec(0.7, 0.1, 0.1)
    with pytest.raises(ValueError):
        split(_indexed(20, 3), SplitSpec(folds=5))
