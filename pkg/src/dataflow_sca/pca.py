"""Principal component analysis for fixed-length traces.

Fitting uses the thin SVD of the centered data matrix, or the eigen-
decomposition of the N x N Gram matrix when there are fewer traces than
samples (the usual case: a few thousand traces of ~1e5 samples each).
Component signs are fixed so that the largest-magnitude entry of every
component is positive, which makes repeated fits bit-identical.
"""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from .errors import InvalidArgument, RankDeficient


@dataclass(frozen=True, eq=False)
class PcaModel:
    mean: np.ndarray
    components: np.ndarray
    explained_variance: np.ndarray

    @property
    def n_comp_max(self) -> int:
        return self.components.shape[0]

    @property
    def window_len(self) -> int:
        return self.mean.shape[0]

    def transform(self, X, n_comp=None):
        return transform(self, X, n_comp)


def _fix_signs(V):
    idx = np.argmax(np.abs(V), axis=1)
    signs = np.sign(V[np.arange(V.shape[0]), idx])
    signs[signs == 0] = 1.0
    return V * signs[:, None]


def _numerical_rank(s, shape, squared=False):
    if s.size == 0 or s[0] == 0:
        return 0
    tol = max(shape) * np.finfo(np.float64).eps
    if squared:
        # Gram eigenvalues carry absolute error ~ eps * max eigenvalue
        return int(np.sum(s ** 2 > tol * s[0] ** 2))
    return int(np.sum(s > tol * s[0]))


def fit(training, n_comp_max: int = 50, method: str = "auto") -> PcaModel:
    """Fit on an (N, L) matrix or a list of equal-length traces.

    Requesting more components than the rank of the centered data (at most
    N - 1) raises ``RankDeficient``.
    """
    X = _as_matrix(training)
    n, L = X.shape
    if n < 2:
        raise InvalidArgument("PCA needs at least 2 traces")
    if n_comp_max < 1 or n_comp_max > min(n, L):
        raise InvalidArgument(f"n_comp_max must lie in [1, {min(n, L)}], got {n_comp_max}")
    if method == "auto":
        method = "gram" if L > n else "svd"

    mean = X.mean(axis=0)
    Xc = X - mean
    if method == "svd":
        _, s, Vt = np.linalg.svd(Xc, full_matrices=False)
    elif method == "gram":
        G = Xc @ Xc.T
        w, U = np.linalg.eigh(G)
        order = np.argsort(w, kind="stable")[::-1]
        w, U = w[order], U[:, order]
        s = np.sqrt(np.clip(w, 0.0, None))
        Vt = None
    else:
        raise InvalidArgument(f"unknown PCA method {method!r}")

    rank = _numerical_rank(s, X.shape, squared=(method == "gram"))
    if n_comp_max > rank:
        raise RankDeficient(n_comp_max, rank)
    s = s[:n_comp_max]
    if Vt is None:
        Vt = (Xc.T @ U[:, :n_comp_max] / s).T
        # one re-orthonormalization pass tightens the Gram-route basis
        q, r = np.linalg.qr(Vt.T)
        Vt = (q * np.sign(np.diag(r))).T
    else:
        Vt = Vt[:n_comp_max]
    components = np.ascontiguousarray(_fix_signs(Vt))
    var = np.clip(s ** 2 / (n - 1), 0.0, None)
    return PcaModel(mean, components, var)


def transform(model: PcaModel, X, n_comp: int | None = None) -> np.ndarray:
    """Project traces (1-D vector or (N, L) matrix) onto the first ``n_comp`` components."""
    n_comp = model.n_comp_max if n_comp is None else int(n_comp)
    if not 1 <= n_comp <= model.n_comp_max:
        raise InvalidArgument(f"n_comp must lie in [1, {model.n_comp_max}], got {n_comp}")
    arr = X.samples if hasattr(X, "samples") else X
    arr = np.asarray(arr, dtype=np.float64)
    if arr.shape[-1] != model.window_len:
        raise InvalidArgument(
            f"trace length {arr.shape[-1]} does not match PCA window {model.window_len}")
    return (arr - model.mean) @ model.components[:n_comp].T


def _as_matrix(training):
    if isinstance(training, np.ndarray):
        X = training.astype(np.float64, copy=False)
    else:
        rows = [t.samples if hasattr(t, "samples") else t for t in training]
        if not rows:
            raise InvalidArgument("PCA needs at least 2 traces")
        lengths = {len(r) for r in rows}
        if len(lengths) > 1:
            raise InvalidArgument(f"traces have mixed lengths {sorted(lengths)}")
        X = np.stack(rows).astype(np.float64)
    if X.ndim != 2:
        raise InvalidArgument("training data must be 2-D")
    return X
