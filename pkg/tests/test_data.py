import json

import numpy as np
import pytest
from hypothesis import assume, given, settings
from hypothesis import strategies as st

from metaactive.data import (DataError, Oracle, load_dataset, make_problem_suite, oracle_query,
                             partition_classes, sample_problem, standardize, suite_from_manifest)


def test_letter_shape(letter):
    assert len(letter) == 20000
    assert letter.n_features == 16
    assert len(letter.classes) == 26
    assert letter.class_names[0] == "A" and letter.class_names[-1] == "Z"


def test_small_csv(tmp_path):
    p = tmp_path / "tiny.csv"
    p.write_text("1.0,2.0,a\n3.0,4.0,b\n5.0,6.0,a\n")
    ds = load_dataset(p)
    assert len(ds) == 3 and ds.n_features == 2
    np.testing.assert_array_equal(ds.by_class[0], [0, 2])
    np.testing.assert_array_equal(ds.by_class[1], [1])


def test_csv_header_named_label(tmp_path):
    p = tmp_path / "h.csv"
    p.write_text("label,x1,x2\nu,1,2\nv,3,4\n")
    ds = load_dataset(p, label_column="label", header=True)
    np.testing.assert_array_equal(ds.X, [[1, 2], [3, 4]])
    assert ds.class_names == ("u", "v")


def test_csv_wrong_arity_names_row(tmp_path):
    p = tmp_path / "bad.csv"
    p.write_text("1,2,a\n3,4,b\n5,a\n")
    with pytest.raises(DataError, match=":3:"):
        load_dataset(p)


def test_csv_non_numeric_names_row(tmp_path):
    p = tmp_path / "bad.csv"
    p.write_text("1,2,a\n3,x,b\n")
    with pytest.raises(DataError, match=":2:"):
        load_dataset(p)


def test_libsvm_densifies(tmp_path):
    p = tmp_path / "d.svm"
    p.write_text("1 1:0.5 3:2.0\n2 2:1.5\n1 4:-1\n")
    ds = load_dataset(p, format="libsvm")
    np.testing.assert_array_equal(ds.X, [[0.5, 0, 2.0, 0], [0, 1.5, 0, 0], [0, 0, 0, -1]])
    np.testing.assert_array_equal(ds.y, [0, 1, 0])


def test_libsvm_bad_token(tmp_path):
    p = tmp_path / "d.svm"
    p.write_text("1 1:0.5\n2 nonsense\n")
    with pytest.raises(DataError, match=":2:"):
        load_dataset(p, format="libsvm")


def test_missing_file(tmp_path):
    with pytest.raises(DataError):
        load_dataset(tmp_path / "nope.csv")


# -- partitions ---------------------------------------------------------------------

def test_letter_partition(letter):
    part = partition_classes(letter, (10, 7, 9), seed=3)
    assert (len(part.train), len(part.val), len(part.test)) == (10, 7, 9)
    assert not set(part.train) & set(part.val)
    assert not set(part.train) & set(part.test)
    assert not set(part.val) & set(part.test)
    assert partition_classes(letter, (10, 7, 9), seed=3) == part


def test_partition_all_train(letter):
    part = partition_classes(letter, (26, 0, 0), seed=0)
    assert sorted(part.train) == letter.classes and part.val == () and part.test == ()


def test_partition_too_many(letter):
    with pytest.raises(DataError):
        partition_classes(letter, (20, 5, 2), seed=0)


# -- problems ---------------------------------------------------------------------

def check_problem(p, classes, P, N, M):
    assert p.P == P and len(set(p.classes)) == P and set(p.classes) <= set(classes)
    assert p.N == N and p.M == M
    assert not set(p.pool_rows.tolist()) & set(p.eval_rows.tolist())
    assert len(set(p.pool_rows.tolist())) == N and len(set(p.eval_rows.tolist())) == M
    pool_y = p.oracle.query(np.arange(N))
    assert pool_y.min() >= 0 and pool_y.max() < P
    assert p.eval_y.min() >= 0 and p.eval_y.max() < P


def test_letter_problem(letter):
    part = partition_classes(letter, (10, 7, 9), seed=0)
    p = sample_problem(letter, part.train, 2, 25, 40, seed=11)
    check_problem(p, part.train, 2, 25, 40)
    true = np.array([p.classes[i] for i in p.eval_y])
    np.testing.assert_array_equal(letter.y[p.eval_rows], true)
    np.testing.assert_array_equal(letter.X[p.pool_rows], p.pool_x)


def test_exhaustive_split(blobs):
    p = sample_problem(blobs, [0, 1], 2, 35, 25, seed=0)
    check_problem(p, [0, 1], 2, 35, 25)
    assert sorted(np.concatenate([p.pool_rows, p.eval_rows]).tolist()) == list(range(60))


def test_insufficient_examples(blobs):
    with pytest.raises(DataError):
        sample_problem(blobs, [0, 1], 2, 40, 21, seed=0)
    with pytest.raises(DataError):
        sample_problem(blobs, [0, 1], 3, 5, 5, seed=0)


def test_different_seeds_differ(letter):
    part = partition_classes(letter, (10, 7, 9), seed=0)
    for s in range(10):
        a = sample_problem(letter, part.train, 2, 25, 40, seed=2 * s)
        b = sample_problem(letter, part.train, 2, 25, 40, seed=2 * s + 1)
        assert a.pool_rows.tolist() != b.pool_rows.tolist()


def test_balanced_pool(letter):
    part = partition_classes(letter, (10, 7, 9), seed=0)
    p = sample_problem(letter, part.train, 4, 25, 40, seed=5, balanced=True)
    check_problem(p, part.train, 4, 25, 40)
    counts = np.bincount(p.oracle.query(np.arange(25)), minlength=4)
    assert counts.max() - counts.min() <= 1


@settings(max_examples=40, deadline=None)
@given(P=st.integers(1, 4), N=st.integers(1, 30), M=st.integers(1, 30), seed=st.integers(0, 2**31))
def test_problem_invariants(P, N, M, seed):
    assume(N + M <= 30 * P)
    rng = np.random.default_rng(0)
    from metaactive.data import BaseDataset
    ds = BaseDataset(rng.normal(size=(150, 3)), np.repeat(np.arange(5), 30))
    p = sample_problem(ds, range(5), P, N, M, seed)
    check_problem(p, range(5), P, N, M)


# -- suites ---------------------------------------------------------------------------

def test_letter_suite_full_size(letter):
    part = partition_classes(letter, (10, 7, 9), seed=0)
    suite = make_problem_suite(letter, part, 2, 25, 40, (2000, 500, 500), master_seed=0)
    assert (len(suite.train), len(suite.val), len(suite.test)) == (2000, 500, 500)
    for split in ("train", "val", "test"):
        allowed = set(part.split(split))
        for p in suite.split(split):
            assert set(p.classes) <= allowed
            check_problem(p, allowed, 2, 25, 40)
    seen = {s: {c for p in suite.split(s) for c in p.classes} for s in ("train", "val", "test")}
    assert not seen["train"] & seen["val"] and not seen["train"] & seen["test"]
    assert not seen["val"] & seen["test"]


def test_singleton_suite(blobs):
    part = partition_classes(blobs, (2, 2, 2), seed=1)
    suite = make_problem_suite(blobs, part, 2, 10, 10, (1, 1, 1), master_seed=4)
    assert len(suite.train) == len(suite.val) == len(suite.test) == 1
    classes = [set(suite.split(s)[0].classes) for s in ("train", "val", "test")]
    assert not classes[0] & classes[1] and not classes[0] & classes[2] and not classes[1] & classes[2]


def test_suite_determinism_and_replay(blobs):
    part = partition_classes(blobs, (2, 2, 2), seed=1)
    a = make_problem_suite(blobs, part, 2, 10, 10, (20, 5, 5), master_seed=9)
    b = make_problem_suite(blobs, part, 2, 10, 10, (20, 5, 5), master_seed=9)
    ja, jb = json.dumps(a.manifest(), sort_keys=True), json.dumps(b.manifest(), sort_keys=True)
    assert ja == jb
    c = suite_from_manifest(blobs, json.loads(ja))
    assert json.dumps(c.manifest(), sort_keys=True) == ja
    for p, q in zip(a.train, c.train):
        assert p.pool_x.tobytes() == q.pool_x.tobytes()
        assert p.eval_y.tobytes() == q.eval_y.tobytes()


def test_standardize_uses_train_classes_only(blobs):
    z = standardize(blobs, [0, 1])
    rows = np.concatenate([blobs.by_class[0], blobs.by_class[1]])
    np.testing.assert_allclose(z.X[rows].mean(axis=0), 0, atol=1e-12)
    np.testing.assert_allclose(z.X[rows].std(axis=0), 1, atol=1e-12)
    assert abs(z.X.mean(axis=0)).max() > 0.1


# -- oracle -------------------------------------------------------------------------------

def test_oracle():
    o = Oracle([2, 0, 1, 1])
    np.testing.assert_array_equal(oracle_query(o, range(4)), [2, 0, 1, 1])
    assert oracle_query(o, [2])[0] == oracle_query(o, [2])[0]
    assert oracle_query(o, []).size == 0
    with pytest.raises(IndexError):
        oracle_query(o, [4])
    with pytest.raises(IndexError):
        oracle_query(o, [-1])
