"""Similarity-weighted label voting over a small labeled support set."""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from .nn_core import (DimensionError, Tensor, as_tensor, cross_entropy, matmul, neg,
                      normalize_rows, pairwise_distance, reshape, softmax, transpose)

SIMILARITIES = ("cosine", "euclidean")


class EmptySupportError(ValueError):
    """Prediction was requested with no labeled examples."""


@dataclass
class LabeledSubset:
    embeddings: Tensor  # (k, L)
    onehot: np.ndarray  # (k, P)
    indices: np.ndarray  # pool positions the labels came from

    def __post_init__(self):
        self.embeddings = as_tensor(self.embeddings)
        self.onehot = np.asarray(self.onehot, dtype=np.float64)
        oh = self.onehot
        if oh.ndim != 2 or not np.isin(oh, (0.0, 1.0)).all() or not (oh.sum(axis=1) == 1).all():
            raise ValueError("support labels must be one-hot rows")
        if len(oh) != len(self.embeddings.data):
            raise DimensionError(f"{len(self.embeddings.data)} embeddings but {len(oh)} labels")

    def __len__(self) -> int:
        return len(self.onehot)

    @property
    def n_classes(self) -> int:
        return self.onehot.shape[1]

    @classmethod
    def from_labels(cls, embeddings, labels, n_classes: int, indices=None) -> "LabeledSubset":
        labels = np.asarray(labels, dtype=np.int64)
        onehot = np.zeros((len(labels), n_classes))
        onehot[np.arange(len(labels)), labels] = 1.0
        idx = np.arange(len(labels)) if indices is None else np.asarray(indices)
        return cls(embeddings, onehot, idx)


def _rows(x) -> Tensor:
    x = as_tensor(x)
    if x.ndim == 1:
        return reshape(x, (1, -1))
    return x


def similarity_matrix(queries, support, similarity: str) -> Tensor:
    """(m, n) similarities between query rows and support rows."""
    q, s = _rows(queries), _rows(support)
    if q.shape[-1] != s.shape[-1]:
        raise DimensionError(f"embedding dims differ: {q.shape[-1]} vs {s.shape[-1]}")
    if similarity == "cosine":
        return matmul(normalize_rows(q), transpose(normalize_rows(s)))
    if similarity == "euclidean":
        return neg(pairwise_distance(q, s))
    raise ValueError(f"unknown similarity {similarity!r}")


def cosine_similarity(a, b) -> Tensor:
    """dot(a, b) / (|a||b|); 0 when either vector is zero."""
    return similarity_matrix(a, b, "cosine")[0, 0]


def euclidean_similarity(a, b) -> Tensor:
    """Negated euclidean distance."""
    return similarity_matrix(a, b, "euclidean")[0, 0]


def predict(x_embedded, support: LabeledSubset, similarity: str = "euclidean",
            temperature: float = 1.0) -> Tensor:
    """Class distribution(s) for one query (L,) or a batch of queries (m, L).

    The softmax over support similarities weights the support one-hot labels.
    """
    if len(support) == 0:
        raise EmptySupportError("no labeled examples to predict from")
    single = as_tensor(x_embedded).ndim == 1
    sims = similarity_matrix(x_embedded, support.embeddings, similarity)
    weights = softmax(sims, temperature, axis=-1)
    out = matmul(weights, support.onehot)
    return out[0] if single else out


def prediction_loss(x_embedded, support: LabeledSubset, targets, similarity: str,
                    temperature: float) -> Tensor:
    """Cross-entropy summed over the evaluation rows."""
    return cross_entropy(predict(x_embedded, support, similarity, temperature), targets)


def accuracy(predictions, truths) -> float:
    """Fraction of rows whose argmax (lowest index on ties) equals the truth."""
    if isinstance(predictions, Tensor):
        preds = predictions.data
    else:
        preds = np.array([p.data if isinstance(p, Tensor) else p for p in predictions], dtype=np.float64)
    truths = np.asarray(truths, dtype=np.int64)
    if preds.ndim == 1:
        preds = preds[None, :]
    if len(preds) == 0:
        raise ValueError("accuracy of an empty prediction list")
    if len(preds) != len(truths):
        raise DimensionError(f"{len(preds)} predictions for {len(truths)} truths")
    return float((preds.argmax(axis=1) == truths).mean())
