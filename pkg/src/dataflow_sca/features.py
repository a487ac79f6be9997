"""Fixed statistical feature bank, the comparison arm to the PCA path.

It replaces a large generic time-series feature library with a short,
stable list of descriptors plus ANOVA-F top-k selection.
"""

from __future__ import annotations

from dataclasses import dataclass, field

import numpy as np

from .errors import InvalidArgument

N_BANDS = 8
ENTROPY_POINTS = 512

FEATURE_NAMES = (
    ["mean_abs_deviation", "variance", "skewness", "kurtosis", "rms", "zero_crossings",
     "acf_peak_lag", "acf_peak_value"]
    + [f"band_energy_{i}" for i in range(N_BANDS)]
    + ["sample_entropy", "longest_run_above_mean"]
)
N_FEATURES = len(FEATURE_NAMES)


def autocorrelation(x):
    """Biased autocorrelation of the mean-removed signal, normalized to acf[0] = 1."""
    x = np.asarray(x, dtype=np.float64)
    x = x - x.mean()
    n = x.size
    nfft = 1 << (2 * n - 1).bit_length()
    spec = np.fft.rfft(x, nfft)
    acf = np.fft.irfft(spec * np.conj(spec), nfft)[:n]
    if acf[0] <= 0:
        return np.zeros(n)
    return acf / acf[0]


def autocorrelation_peak(x):
    """(lag, value) of the first prominent autocorrelation peak.

    The search starts at the first non-positive lag (or the first local
    minimum when the curve never crosses zero) and stops at half the length.
    The first local maximum reaching half of the highest value in that range
    wins, which skips ripples from noise and ignores longer super-periods.
    """
    acf = autocorrelation(x)
    half = acf.size // 2
    if acf[0] == 0 or half < 2:
        return 0, 0.0
    below = np.nonzero(acf[1:half] <= 0)[0]
    if below.size:
        start = below[0] + 1
    else:
        d = np.diff(acf[:half])
        rising = np.nonzero(d > 0)[0]
        if not rising.size:
            return 0, 0.0
        start = rising[0] + 1
    seg = acf[start:half]
    top = seg.max()
    if top <= 0:
        lag = start + int(np.argmax(seg))
        return int(lag), float(acf[lag])
    inner = seg[1:-1]
    peaks = np.nonzero((inner >= seg[:-2]) & (inner >= seg[2:]) & (inner >= 0.5 * top))[0] + 1
    lag = start + (int(peaks[0]) if peaks.size else int(np.argmax(seg)))
    return int(lag), float(acf[lag])


def band_energies(x, n_bands=N_BANDS):
    x = np.asarray(x, dtype=np.float64)
    power = np.abs(np.fft.rfft(x - x.mean())) ** 2 / x.size
    nb = power.size
    edges = np.round(np.geomspace(1, nb, n_bands + 1)).astype(int)
    for i in range(1, edges.size):
        edges[i] = max(edges[i], edges[i - 1] + 1)
    edges = np.minimum(edges, nb)
    return np.array([power[edges[i]:edges[i + 1]].sum() for i in range(n_bands)])


def sample_entropy(x, m=2, r=0.2, max_points=ENTROPY_POINTS):
    """Sample entropy of the block-averaged signal (at most ``max_points`` points)."""
    x = np.asarray(x, dtype=np.float64)
    block = max(1, -(-x.size // max_points))
    n = x.size // block
    y = x[:n * block].reshape(n, block).mean(axis=1)
    sd = y.std()
    if sd == 0 or n <= m + 1:
        return 0.0
    tol = r * sd

    def matches(mm):
        emb = np.lib.stride_tricks.sliding_window_view(y, mm)[: n - m]
        d = np.abs(emb[:, None, :] - emb[None, :, :]).max(axis=2)
        return (np.count_nonzero(d <= tol) - emb.shape[0]) / 2

    b, a = matches(m), matches(m + 1)
    if a == 0 or b == 0:
        return float(np.log((n - m) * (n - m - 1) / 2))
    return float(-np.log(a / b))


def _longest_run(mask):
    if not mask.any():
        return 0
    padded = np.concatenate(([0], mask.astype(np.int8), [0]))
    d = np.diff(padded)
    return int((np.nonzero(d == -1)[0] - np.nonzero(d == 1)[0]).max())


def extract_features(trace) -> np.ndarray:
    x = np.asarray(getattr(trace, "samples", trace), dtype=np.float64)
    if x.ndim != 1 or x.size < 16:
        raise InvalidArgument("feature extraction needs a 1-D trace of at least 16 samples")
    xc = x - x.mean()
    var = float(np.mean(xc ** 2))
    if var > 0:
        skew = float(np.mean(xc ** 3) / var ** 1.5)
        kurt = float(np.mean(xc ** 4) / var ** 2 - 3.0)
    else:
        skew = kurt = 0.0
    sgn = np.sign(xc)
    sgn = sgn[sgn != 0]
    zc = int(np.count_nonzero(sgn[1:] != sgn[:-1]))
    lag, peak = autocorrelation_peak(xc)
    head = [np.mean(np.abs(xc)), var, skew, kurt, np.sqrt(np.mean(x ** 2)), zc, lag, peak]
    tail = [sample_entropy(xc), _longest_run(xc > 0)]
    return np.concatenate([head, band_energies(xc), tail]).astype(np.float64)


def extract_matrix(traces) -> np.ndarray:
    return np.stack([extract_features(t) for t in traces]) if len(traces) else np.empty((0, N_FEATURES))


def anova_f(features, labels) -> np.ndarray:
    """One-way ANOVA F per column. Constant columns score 0; zero within-class spread scores inf."""
    F = np.asarray(features, dtype=np.float64)
    y = np.asarray(labels)
    classes = np.unique(y)
    if classes.size < 2:
        raise InvalidArgument("ANOVA F needs at least two classes")
    n, k = F.shape[0], classes.size
    if n <= k:
        raise InvalidArgument("ANOVA F needs more samples than classes")
    grand = F.mean(axis=0)
    ss_between = np.zeros(F.shape[1])
    ss_within = np.zeros(F.shape[1])
    for c in classes:
        g = F[y == c]
        mu = g.mean(axis=0)
        ss_between += g.shape[0] * (mu - grand) ** 2
        ss_within += ((g - mu) ** 2).sum(axis=0)
    ms_between = ss_between / (k - 1)
    ms_within = ss_within / (n - k)
    out = np.zeros(F.shape[1])
    scale = np.maximum(np.abs(grand), 1.0) ** 2 * 1e-24
    between = ms_between > scale
    pos = between & (ms_within > scale)
    out[pos] = ms_between[pos] / ms_within[pos]
    out[between & ~pos] = np.inf
    return out


@dataclass(frozen=True, eq=False)
class FeatureBank:
    feature_names: tuple[str, ...]
    selected_indices: tuple[int, ...]
    scores: np.ndarray = field(default=None)
    center: np.ndarray = field(default=None)
    scale: np.ndarray = field(default=None)

    def __post_init__(self):
        sel = self.selected_indices
        if len(set(sel)) != len(sel) or any(not 0 <= i < len(self.feature_names) for i in sel):
            raise InvalidArgument("selected indices must be distinct and within range")

    @property
    def selected_names(self):
        return [self.feature_names[i] for i in self.selected_indices]

    def transform_matrix(self, raw, n_comp=None):
        """Selected (and standardized, if fitted) columns of a raw feature matrix."""
        raw = np.atleast_2d(raw)
        out = raw[:, list(self.selected_indices)]
        if self.center is not None:
            out = (out - self.center) / self.scale
        return out if n_comp is None else out[:, :n_comp]

    def transform(self, traces, n_comp=None):
        if hasattr(traces, "samples"):
            single = True
        elif isinstance(traces, (list, tuple)) and traces and hasattr(traces[0], "samples"):
            single = False
        else:
            single = np.ndim(traces) == 1
        raw = extract_matrix([traces] if single else traces)
        out = self.transform_matrix(raw, n_comp)
        return out[0] if single else out


def select_features(features, labels, top_k: int = 10, names=None, standardize=False) -> FeatureBank:
    """Rank columns by ANOVA F against ``labels`` and keep the ``top_k`` best."""
    F = np.atleast_2d(np.asarray(features, dtype=np.float64))
    if names is None:
        names = FEATURE_NAMES if F.shape[1] == N_FEATURES else [f"f{i}" for i in range(F.shape[1])]
    names = tuple(names)
    if not 1 <= top_k <= F.shape[1]:
        raise InvalidArgument(f"top_k must lie in [1, {F.shape[1]}], got {top_k}")
    scores = anova_f(F, labels)
    order = np.argsort(-scores, kind="stable")[:top_k]
    sel = tuple(int(i) for i in order)
    center = scale = None
    if standardize:
        sub = F[:, list(sel)]
        center = sub.mean(axis=0)
        scale = sub.std(axis=0)
        scale[scale == 0] = 1.0
    return FeatureBank(names, sel, scores, center, scale)
