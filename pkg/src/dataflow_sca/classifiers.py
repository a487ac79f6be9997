"""One classifier per hardware parameter, wrapping k-NN or random forest."""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from .errors import InvalidArgument
from .forest import RandomForestModel, rf_fit, rf_predict_proba
from .knn import KnnModel, knn_fit, sorted_neighbors, vote

TARGETS = ("folding", "quantization")


@dataclass(frozen=True, eq=False)
class ParameterClassifier:
    target: str
    classes: tuple[int, ...]
    model: KnnModel | RandomForestModel

    @property
    def kind(self):
        return "knn" if isinstance(self.model, KnnModel) else "rf"

    def predict_ids(self, X):
        return self.predict_with_confidence(X)[0]

    def predict(self, X):
        """Parameter values (e.g. folding factors), not class ids."""
        X = np.asarray(X, dtype=np.float64)
        ids = self.predict_ids(np.atleast_2d(X))
        vals = np.asarray(self.classes)[ids]
        return int(vals[0]) if X.ndim == 1 else vals

    def predict_with_confidence(self, X):
        """(class ids, confidence): vote fraction for k-NN, mean tree probability for RF."""
        X = np.atleast_2d(np.asarray(X, dtype=np.float64))
        if isinstance(self.model, KnnModel):
            nbr = sorted_neighbors(self.model.points, X, self.model.k)
            return vote(self.model.labels[nbr], self.model.n_classes)
        proba = rf_predict_proba(self.model, X)
        ids = proba.argmax(axis=1)
        return ids, proba[np.arange(len(ids)), ids]


def encode(values, classes):
    lookup = {c: i for i, c in enumerate(classes)}
    try:
        return np.array([lookup[int(v)] for v in values], dtype=np.int64)
    except KeyError as e:
        raise InvalidArgument(f"value {e.args[0]} not in class set {tuple(classes)}") from None


def fit_parameter_classifier(target, classes, kind, features, values, params, rng_seed=0,
                             n_jobs=1) -> ParameterClassifier:
    if target not in TARGETS:
        raise InvalidArgument(f"unknown target parameter {target!r}")
    classes = tuple(int(c) for c in classes)
    y = encode(values, classes)
    if kind == "knn":
        model = knn_fit(features, y, params["k"], n_classes=len(classes))
    elif kind == "rf":
        model = rf_fit(features, y, params["n_estimators"], params["min_samples_split"],
                       rng_seed=rng_seed, n_classes=len(classes), n_jobs=n_jobs)
    else:
        raise InvalidArgument(f"unknown classifier kind {kind!r}")
    return ParameterClassifier(target, classes, model)
