"""Brute-force k-nearest-neighbours with deterministic tie-breaking.

Neighbours are ordered by (Euclidean distance, stored index). The vote is a
plain majority; a tie between classes goes to the class whose first member
appears earliest in that ordering.
"""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from .errors import InvalidArgument

_QUERY_CHUNK = 64


@dataclass(frozen=True, eq=False)
class KnnModel:
    k: int
    points: np.ndarray
    labels: np.ndarray
    n_classes: int

    def predict(self, X):
        return knn_predict(self, X)

    def predict_proba(self, X):
        return knn_predict_proba(self, X)


def knn_fit(features, labels, k: int, n_classes: int | None = None) -> KnnModel:
    """Store the training set. ``labels`` are class ids ``0..n_classes-1``."""
    P = np.atleast_2d(np.asarray(features, dtype=np.float64))
    y = np.asarray(labels, dtype=np.int64)
    if P.shape[0] == 0:
        raise InvalidArgument("k-NN needs at least one stored point")
    if y.shape != (P.shape[0],):
        raise InvalidArgument("one label per point is required")
    if k < 1 or k > P.shape[0]:
        raise InvalidArgument(f"k must lie in [1, {P.shape[0]}], got {k}")
    if y.min() < 0:
        raise InvalidArgument("class ids must be non-negative")
    n_classes = int(y.max()) + 1 if n_classes is None else int(n_classes)
    if y.max() >= n_classes:
        raise InvalidArgument("class id outside [0, n_classes)")
    P.flags.writeable = False
    return KnnModel(int(k), P, y, n_classes)


def sorted_neighbors(points, queries, k_max):
    """Indices of the ``k_max`` nearest stored points per query, nearest first."""
    P = np.asarray(points, dtype=np.float64)
    Q = np.atleast_2d(np.asarray(queries, dtype=np.float64))
    if Q.shape[1] != P.shape[1]:
        raise InvalidArgument(f"query dimension {Q.shape[1]} != model dimension {P.shape[1]}")
    out = np.empty((Q.shape[0], k_max), dtype=np.int64)
    for lo in range(0, Q.shape[0], _QUERY_CHUNK):
        q = Q[lo:lo + _QUERY_CHUNK]
        d2 = ((q[:, None, :] - P[None, :, :]) ** 2).sum(axis=-1)
        # stable sort keeps lower index first among equal distances
        out[lo:lo + len(q)] = np.argsort(d2, axis=1, kind="stable")[:, :k_max]
    return out


def vote(neighbor_labels, n_classes):
    """Return (winning class, vote fraction) per row of ordered neighbour labels."""
    nl = np.asarray(neighbor_labels)
    m, k = nl.shape
    onehot = nl[:, :, None] == np.arange(n_classes)[None, None, :]
    counts = onehot.sum(axis=1)
    first = np.where(onehot.any(axis=1), onehot.argmax(axis=1), k)
    score = counts * (k + 1) - first
    winner = score.argmax(axis=1)
    return winner, counts[np.arange(m), winner] / k


def knn_predict_many_k(points, labels, n_classes, queries, ks):
    """Predictions for several k at once, sharing one neighbour search."""
    nbr = sorted_neighbors(points, queries, max(ks))
    nl = np.asarray(labels)[nbr]
    return {k: vote(nl[:, :k], n_classes)[0] for k in ks}


def knn_predict_proba(model: KnnModel, X):
    Q = np.atleast_2d(np.asarray(X, dtype=np.float64))
    nbr = sorted_neighbors(model.points, Q, model.k)
    nl = model.labels[nbr]
    onehot = nl[:, :, None] == np.arange(model.n_classes)[None, None, :]
    return onehot.sum(axis=1) / model.k


def knn_predict(model: KnnModel, X):
    """Class id for a single feature vector, or an array of ids for a matrix."""
    X = np.asarray(X, dtype=np.float64)
    single = X.ndim == 1
    nbr = sorted_neighbors(model.points, np.atleast_2d(X), model.k)
    pred, _ = vote(model.labels[nbr], model.n_classes)
    return int(pred[0]) if single else pred
