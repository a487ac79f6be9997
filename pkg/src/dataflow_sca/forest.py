"""Random forest of Gini decision trees.

Trees are stored as flat node arrays (``feature``, ``threshold``, ``left``,
``right``, ``value``); leaves have ``feature == -1`` and hold raw class counts
from the bootstrap sample. Each tree draws from its own RNG stream seeded by
``(rng_seed, tree_index)``, so a fit is identical whatever the worker count.
"""

from __future__ import annotations

import math
from concurrent.futures import ThreadPoolExecutor
from dataclasses import dataclass

import numpy as np

from .errors import InvalidArgument

LEAF = -1


@dataclass(frozen=True, eq=False)
class DecisionTree:
    feature: np.ndarray
    threshold: np.ndarray
    left: np.ndarray
    right: np.ndarray
    value: np.ndarray

    @property
    def n_nodes(self):
        return self.feature.shape[0]

    def apply(self, X):
        """Leaf index reached by each row of X."""
        node = np.zeros(X.shape[0], dtype=np.int64)
        active = self.feature[node] != LEAF
        while active.any():
            idx = np.nonzero(active)[0]
            n = node[idx]
            go_left = X[idx, self.feature[n]] <= self.threshold[n]
            node[idx] = np.where(go_left, self.left[n], self.right[n])
            active[idx] = self.feature[node[idx]] != LEAF
        return node

    def predict_proba(self, X):
        v = self.value[self.apply(X)]
        return v / v.sum(axis=1, keepdims=True)

    def export_text(self, feature_names=None, decimals=17):
        """Indented text dump; one line per node, children below their parent."""
        lines = []

        def name(f):
            return feature_names[f] if feature_names is not None else f"x[{f}]"

        def walk(i, depth):
            pad = "|   " * depth
            if self.feature[i] == LEAF:
                counts = ", ".join(repr(float(c)) for c in self.value[i])
                lines.append(f"{pad}leaf: [{counts}]")
                return
            thr = f"{self.threshold[i]:.{decimals}g}"
            lines.append(f"{pad}{name(self.feature[i])} <= {thr}")
            walk(self.left[i], depth + 1)
            lines.append(f"{pad}{name(self.feature[i])} > {thr}")
            walk(self.right[i], depth + 1)

        walk(0, 0)
        return "\n".join(lines)


@dataclass(frozen=True, eq=False)
class RandomForestModel:
    trees: tuple[DecisionTree, ...]
    n_estimators: int
    min_samples_split: int
    rng_seed: int
    n_classes: int
    n_features: int

    def predict_proba(self, X):
        return rf_predict_proba(self, X)

    def predict(self, X):
        return rf_predict(self, X)


def _best_split(Xn, yn, n_classes, feat_order, max_features):
    """Scan features in ``feat_order`` until ``max_features`` non-constant ones were tried.

    Returns (feature, threshold, left_mask) or None. Ties keep the first
    feature visited and the lowest threshold.
    """
    n = yn.shape[0]
    best = None
    best_imp = np.inf
    tried = 0
    onehot = (yn[:, None] == np.arange(n_classes)[None, :]).astype(np.float64)
    for f in feat_order:
        if tried >= max_features:
            break
        x = Xn[:, f]
        order = np.argsort(x, kind="stable")
        xs = x[order]
        valid = xs[1:] > xs[:-1]
        if not valid.any():
            continue
        tried += 1
        cl = np.cumsum(onehot[order], axis=0)[:-1]
        n_l = np.arange(1, n, dtype=np.float64)
        n_r = n - n_l
        cr = cl[-1] + onehot[order[-1]] - cl
        # weighted child impurity times n: n_l*(1 - sum p_l^2) + n_r*(1 - sum p_r^2)
        imp = n - (cl ** 2).sum(axis=1) / n_l - (cr ** 2).sum(axis=1) / n_r
        imp = np.where(valid, imp, np.inf)
        pos = int(np.argmin(imp))
        if imp[pos] < best_imp - 1e-12:
            best_imp = imp[pos]
            thr = (xs[pos] + xs[pos + 1]) / 2.0
            if thr >= xs[pos + 1]:
                thr = xs[pos]
            best = (f, thr)
    if best is None:
        return None
    f, thr = best
    return f, thr, Xn[:, f] <= thr


def build_tree(X, y, n_classes, min_samples_split, max_features, rng):
    n_samples, n_features = X.shape
    feature, threshold, left, right, value = [], [], [], [], []

    def new_node():
        feature.append(LEAF)
        threshold.append(0.0)
        left.append(LEAF)
        right.append(LEAF)
        value.append(None)
        return len(feature) - 1

    root = new_node()
    stack = [(root, np.arange(n_samples))]
    while stack:
        node, idx = stack.pop()
        yn = y[idx]
        counts = np.bincount(yn, minlength=n_classes).astype(np.float64)
        value[node] = counts
        if idx.size < min_samples_split or np.count_nonzero(counts) <= 1:
            continue
        split = _best_split(X[idx], yn, n_classes, rng.permutation(n_features), max_features)
        if split is None:
            continue
        f, thr, mask = split
        feature[node] = f
        threshold[node] = thr
        l, r = new_node(), new_node()
        left[node], right[node] = l, r
        # right pushed first so the left subtree is numbered first
        stack.append((r, idx[~mask]))
        stack.append((l, idx[mask]))

    return DecisionTree(np.array(feature, dtype=np.int64), np.array(threshold, dtype=np.float64),
                        np.array(left, dtype=np.int64), np.array(right, dtype=np.int64),
                        np.stack(value))


def tree_rng(rng_seed, tree_index):
    return np.random.default_rng(np.random.SeedSequence([int(rng_seed), int(tree_index)]))


def rf_fit(features, labels, n_estimators: int = 100, min_samples_split: int = 2,
           rng_seed: int = 0, n_classes: int | None = None, n_jobs: int = 1) -> RandomForestModel:
    X = np.atleast_2d(np.asarray(features, dtype=np.float64))
    y = np.asarray(labels, dtype=np.int64)
    if X.shape[0] == 0 or y.size == 0:
        raise InvalidArgument("random forest needs at least one sample")
    if y.shape != (X.shape[0],):
        raise InvalidArgument("one label per sample is required")
    if n_estimators < 1:
        raise InvalidArgument("n_estimators must be >= 1")
    if min_samples_split < 2:
        raise InvalidArgument("min_samples_split must be >= 2")
    if y.min() < 0:
        raise InvalidArgument("class ids must be non-negative")
    n_classes = int(y.max()) + 1 if n_classes is None else int(n_classes)
    if y.max() >= n_classes:
        raise InvalidArgument("class id outside [0, n_classes)")
    n, d = X.shape
    max_features = max(1, math.ceil(math.sqrt(d)))

    def grow(t):
        rng = tree_rng(rng_seed, t)
        boot = rng.integers(0, n, size=n)
        return build_tree(X[boot], y[boot], n_classes, min_samples_split, max_features, rng)

    if n_jobs > 1:
        with ThreadPoolExecutor(n_jobs) as ex:
            trees = tuple(ex.map(grow, range(n_estimators)))
    else:
        trees = tuple(grow(t) for t in range(n_estimators))
    return RandomForestModel(trees, n_estimators, min_samples_split, int(rng_seed), n_classes, d)


def rf_predict_proba(model: RandomForestModel, X):
    X = np.atleast_2d(np.asarray(X, dtype=np.float64))
    if X.shape[1] != model.n_features:
        raise InvalidArgument(f"feature dimension {X.shape[1]} != model dimension {model.n_features}")
    acc = np.zeros((X.shape[0], model.n_classes))
    for tree in model.trees:
        acc += tree.predict_proba(X)
    return acc / len(model.trees)


def rf_predict(model: RandomForestModel, X):
    """Class id (ties -> smaller id) for one vector, or an array of ids for a matrix."""
    X = np.asarray(X, dtype=np.float64)
    single = X.ndim == 1
    pred = rf_predict_proba(model, np.atleast_2d(X)).argmax(axis=1)
    return int(pred[0]) if single else pred
