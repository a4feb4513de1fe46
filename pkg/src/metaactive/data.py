"""
Base datasets, class partitions and episodic problem sampling.

A problem is a small classification task built from a handful of classes
of the base dataset: an unlabeled pool the selector can query and a
disjoint labeled evaluation set.
"""

from __future__ import annotations

import csv
import json
from dataclasses import dataclass, field
from pathlib import Path

import numpy as np

SPLITS = ("train", "val", "test")


class DataError(ValueError):
    """Malformed input file or infeasible sampling request."""


@dataclass(frozen=True)
class BaseDataset:
    X: np.ndarray  # (n, K)
    y: np.ndarray  # (n,) integer class ids
    class_names: tuple = ()
    name: str = "dataset"
    by_class: dict = field(init=False, repr=False, compare=False)

    def __post_init__(self):
        X = np.asarray(self.X, dtype=np.float64)
        y = np.asarray(self.y, dtype=np.int64)
        if X.ndim != 2 or len(X) != len(y):
            raise DataError(f"feature matrix {X.shape} does not match {len(y)} labels")
        object.__setattr__(self, "X", X)
        object.__setattr__(self, "y", y)
        lookup = {int(c): np.flatnonzero(y == c) for c in np.unique(y)}
        object.__setattr__(self, "by_class", lookup)

    @property
    def n_features(self) -> int:
        return self.X.shape[1]

    @property
    def classes(self) -> list[int]:
        return sorted(self.by_class)

    def __len__(self) -> int:
        return len(self.y)

    def summary(self) -> str:
        return f"{self.name}: {len(self)} rows, K={self.n_features}, {len(self.classes)} classes"


def _encode_labels(raw: list[str]) -> tuple[np.ndarray, tuple]:
    names = sorted(set(raw), key=_label_sort_key)
    index = {n: i for i, n in enumerate(names)}
    return np.array([index[r] for r in raw], dtype=np.int64), tuple(names)


def _label_sort_key(s: str):
    try:
        return (0, float(s), s)
    except ValueError:
        return (1, 0.0, s)


def load_dataset(path, format: str = "csv", label_column=-1, header: bool = False,
                 delimiter: str = ",") -> BaseDataset:
    """Read a labeled dataset from CSV or LIBSVM text.

    For CSV the label lives in ``label_column``: an integer position (negative
    counts from the end) or, when ``header`` is set, a column name.
    """
    path = Path(path)
    if not path.exists():
        raise DataError(f"{path}: no such file")
    if format == "csv":
        X, labels = _read_csv(path, label_column, header, delimiter)
    elif format == "libsvm":
        X, labels = _read_libsvm(path)
    else:
        raise DataError(f"unknown format {format!r} (expected csv or libsvm)")
    if not labels:
        raise DataError(f"{path}: no data rows")
    y, names = _encode_labels(labels)
    return BaseDataset(X, y, names, name=path.stem)


def _read_csv(path: Path, label_column, header: bool, delimiter: str):
    rows, labels = [], []
    width = None
    with open(path, newline="") as fh:
        reader = csv.reader(fh, delimiter=delimiter)
        col = label_column
        for lineno, row in enumerate(reader, start=1):
            if not row or all(not c.strip() for c in row):
                continue
            if header and lineno == 1:
                if isinstance(col, str):
                    if col not in row:
                        raise DataError(f"{path}: header has no column {col!r}")
                    col = row.index(col)
                continue
            if isinstance(col, str):
                raise DataError(f"{path}: a named label column needs header=True")
            if width is None:
                width = len(row)
            elif len(row) != width:
                raise DataError(f"{path}:{lineno}: expected {width} fields, found {len(row)}")
            j = col % width
            try:
                feats = [float(v) for i, v in enumerate(row) if i != j]
            except ValueError as exc:
                raise DataError(f"{path}:{lineno}: {exc}") from None
            rows.append(feats)
            labels.append(row[j].strip())
    return np.array(rows, dtype=np.float64).reshape(len(rows), -1), labels


def _read_libsvm(path: Path):
    entries, labels = [], []
    K = 0
    with open(path) as fh:
        for lineno, line in enumerate(fh, start=1):
            line = line.split("#", 1)[0].strip()
            if not line:
                continue
            parts = line.split()
            feats = {}
            for tok in parts[1:]:
                try:
                    idx, val = tok.split(":", 1)
                    i = int(idx)
                    feats[i] = float(val)
                except ValueError:
                    raise DataError(f"{path}:{lineno}: bad feature token {tok!r}") from None
                if i < 1:
                    raise DataError(f"{path}:{lineno}: feature indices are 1-based, got {i}")
                K = max(K, i)
            labels.append(parts[0])
            entries.append(feats)
    X = np.zeros((len(entries), K))
    for r, feats in enumerate(entries):
        for i, v in feats.items():
            X[r, i - 1] = v
    return X, labels


def standardize(ds: BaseDataset, fit_classes) -> BaseDataset:
    """Z-score every feature using statistics of ``fit_classes`` rows only."""
    rows = np.concatenate([ds.by_class[c] for c in fit_classes])
    mu = ds.X[rows].mean(axis=0)
    sd = ds.X[rows].std(axis=0)
    sd[sd == 0] = 1.0
    return BaseDataset((ds.X - mu) / sd, ds.y, ds.class_names, name=ds.name)


@dataclass(frozen=True)
class ClassPartition:
    train: tuple
    val: tuple
    test: tuple

    def __post_init__(self):
        a, b, c = set(self.train), set(self.val), set(self.test)
        if a & b or a & c or b & c:
            raise DataError("class partition splits overlap")

    def split(self, name: str) -> tuple:
        return {"train": self.train, "val": self.val, "test": self.test}[name]


def partition_classes(ds: BaseDataset, counts, seed: int) -> ClassPartition:
    n_train, n_val, n_test = (int(c) for c in counts)
    total = len(ds.classes)
    if min(n_train, n_val, n_test) < 0 or n_train + n_val + n_test > total:
        raise DataError(f"partition {counts} needs more than the {total} available classes")
    perm = np.random.default_rng(seed).permutation(ds.classes)
    return ClassPartition(
        tuple(sorted(int(c) for c in perm[:n_train])),
        tuple(sorted(int(c) for c in perm[n_train:n_train + n_val])),
        tuple(sorted(int(c) for c in perm[n_train + n_val:n_train + n_val + n_test])),
    )


class Oracle:
    """Answers label queries for a pool; the only route to pool labels."""

    def __init__(self, labels):
        self._labels = np.asarray(labels, dtype=np.int64).copy()
        self._labels.setflags(write=False)
        self.n_queries = 0

    def __len__(self) -> int:
        return len(self._labels)

    def query(self, indices) -> np.ndarray:
        idx = np.asarray(indices, dtype=np.int64).reshape(-1)
        if idx.size and (idx.min() < 0 or idx.max() >= len(self._labels)):
            raise IndexError(f"pool index out of range [0, {len(self._labels)})")
        self.n_queries += idx.size
        return self._labels[idx].copy()


def oracle_query(oracle: Oracle, pool_indices) -> np.ndarray:
    return oracle.query(pool_indices)


@dataclass(frozen=True)
class Problem:
    """One episode: class subset, unlabeled pool and labeled evaluation set.

    Labels are stored as positions in ``classes`` (0..P-1); the pool labels
    are reachable only through :attr:`oracle`.
    """

    classes: tuple
    pool_x: np.ndarray
    eval_x: np.ndarray
    eval_y: np.ndarray
    pool_rows: np.ndarray
    eval_rows: np.ndarray
    seed: int
    oracle: Oracle = field(repr=False, compare=False)
    pid: str = ""

    @property
    def P(self) -> int:
        return len(self.classes)

    @property
    def N(self) -> int:
        return len(self.pool_x)

    @property
    def M(self) -> int:
        return len(self.eval_x)

    def manifest(self) -> dict:
        return {
            "id": self.pid,
            "seed": int(self.seed),
            "classes": [int(c) for c in self.classes],
            "pool_rows": [int(r) for r in self.pool_rows],
            "eval_rows": [int(r) for r in self.eval_rows],
        }


def _build_problem(ds: BaseDataset, classes, pool_rows, eval_rows, seed: int, pid: str) -> Problem:
    local = {c: i for i, c in enumerate(classes)}
    pool_y = np.array([local[int(c)] for c in ds.y[pool_rows]], dtype=np.int64)
    eval_y = np.array([local[int(c)] for c in ds.y[eval_rows]], dtype=np.int64)
    return Problem(tuple(int(c) for c in classes), ds.X[pool_rows].copy(), ds.X[eval_rows].copy(),
                   eval_y, np.asarray(pool_rows), np.asarray(eval_rows), int(seed),
                   Oracle(pool_y), pid)


def sample_problem(ds: BaseDataset, classes, P: int, N: int, M: int, seed: int,
                   balanced: bool = False, pid: str = "") -> Problem:
    """Draw P classes, then N pool rows and M disjoint eval rows from them."""
    classes = sorted(int(c) for c in classes)
    if P < 1 or P > len(classes):
        raise DataError(f"P={P} but only {len(classes)} classes are available")
    rng = np.random.default_rng(seed)
    chosen = sorted(int(c) for c in rng.choice(classes, size=P, replace=False))
    if balanced:
        pool, ev = _stratified(ds, chosen, N, M, rng)
    else:
        rows = np.concatenate([ds.by_class[c] for c in chosen])
        if len(rows) < N + M:
            raise DataError(f"classes {chosen} have {len(rows)} examples; need N+M={N + M}")
        pick = rng.choice(rows, size=N + M, replace=False)
        pool, ev = pick[:N], pick[N:]
    return _build_problem(ds, chosen, pool, ev, seed, pid)


def _stratified(ds, chosen, N, M, rng):
    P = len(chosen)
    n_pool = [N // P + (i < N % P) for i in range(P)]
    n_eval = [M // P + (i < M % P) for i in range(P)]
    pool, ev = [], []
    for c, a, b in zip(chosen, n_pool, n_eval):
        rows = ds.by_class[c]
        if len(rows) < a + b:
            raise DataError(f"class {c} has {len(rows)} examples; balanced split needs {a + b}")
        pick = rng.choice(rows, size=a + b, replace=False)
        pool.append(pick[:a])
        ev.append(pick[a:])
    pool = np.concatenate(pool)
    ev = np.concatenate(ev)
    return rng.permutation(pool), rng.permutation(ev)


def problem_seed(master_seed: int, split: str, counter: int) -> int:
    ss = np.random.SeedSequence([int(master_seed), SPLITS.index(split), int(counter)])
    return int(ss.generate_state(1, dtype=np.uint32)[0])


@dataclass
class ProblemSuite:
    train: list
    val: list
    test: list
    partition: ClassPartition
    config: dict

    def split(self, name: str) -> list:
        return {"train": self.train, "val": self.val, "test": self.test}[name]

    def manifest(self) -> dict:
        return {
            "config": self.config,
            "partition": {s: list(self.partition.split(s)) for s in SPLITS},
            "problems": {s: [p.manifest() for p in self.split(s)] for s in SPLITS},
        }


def make_problem_suite(ds: BaseDataset, partition: ClassPartition, P: int, N: int, M: int,
                       counts, master_seed: int, balanced: bool = False) -> ProblemSuite:
    per_split = dict(zip(SPLITS, (int(c) for c in counts)))
    out = {}
    for split in SPLITS:
        classes = partition.split(split)
        out[split] = [
            sample_problem(ds, classes, P, N, M, problem_seed(master_seed, split, i),
                           balanced=balanced, pid=f"{split}-{i}")
            for i in range(per_split[split])
        ]
    cfg = {"P": P, "N": N, "M": M, "counts": list(per_split.values()),
           "master_seed": int(master_seed), "balanced": bool(balanced)}
    return ProblemSuite(out["train"], out["val"], out["test"], partition, cfg)


def suite_from_manifest(ds: BaseDataset, manifest: dict) -> ProblemSuite:
    """Rebuild a suite from exported indices, without re-sampling."""
    part = ClassPartition(*(tuple(manifest["partition"][s]) for s in SPLITS))
    out = {}
    for split in SPLITS:
        out[split] = [
            _build_problem(ds, p["classes"], np.array(p["pool_rows"], dtype=np.int64),
                           np.array(p["eval_rows"], dtype=np.int64), p["seed"], p["id"])
            for p in manifest["problems"][split]
        ]
    return ProblemSuite(out["train"], out["val"], out["test"], part, dict(manifest["config"]))


def write_manifest(suite: ProblemSuite, path) -> None:
    Path(path).write_text(json.dumps(suite.manifest(), sort_keys=True))
