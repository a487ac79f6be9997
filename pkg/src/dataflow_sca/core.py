"""Domain types shared by the simulator, preprocessing, and attack stages."""

from __future__ import annotations

import math
from collections import Counter
from dataclasses import dataclass, field
from itertools import product
from typing import Iterable, Sequence

import numpy as np

from .errors import InvalidArgument

TRAIN = "train"
TEST = "test"
SPLITS = (TRAIN, TEST)

DEFAULT_FOLDINGS = (1, 2, 4, 8)
DEFAULT_QUANTIZATIONS = (4, 6)


@dataclass(frozen=True, order=True)
class AcceleratorConfig:
    folding: int
    quantization: int

    def __str__(self):
        return f"F{self.folding}xQ{self.quantization}"


@dataclass(frozen=True)
class ConfigSpace:
    """Cartesian product of the folding and quantization spaces."""

    foldings: tuple[int, ...] = DEFAULT_FOLDINGS
    quantizations: tuple[int, ...] = DEFAULT_QUANTIZATIONS

    def __post_init__(self):
        f = tuple(sorted(set(int(v) for v in self.foldings)))
        q = tuple(sorted(set(int(v) for v in self.quantizations)))
        if not f or not q:
            raise InvalidArgument("configuration space must be non-empty")
        if any(v < 1 for v in f) or any(v < 1 for v in q):
            raise InvalidArgument("folding and quantization values must be >= 1")
        object.__setattr__(self, "foldings", f)
        object.__setattr__(self, "quantizations", q)

    @property
    def configs(self) -> list[AcceleratorConfig]:
        return [AcceleratorConfig(f, q) for q, f in product(self.quantizations, self.foldings)]

    def __len__(self):
        return len(self.foldings) * len(self.quantizations)

    def __contains__(self, cfg):
        return cfg.folding in self.foldings and cfg.quantization in self.quantizations

    def values(self, target: str) -> tuple[int, ...]:
        if target == "folding":
            return self.foldings
        if target == "quantization":
            return self.quantizations
        raise InvalidArgument(f"unknown target parameter {target!r}")


@dataclass(frozen=True, eq=False)
class Trace:
    samples: np.ndarray
    sensor_freq_hz: float
    raw_len: int | None = None

    def __post_init__(self):
        s = np.asarray(self.samples)
        if s.dtype.kind != "f":
            s = s.astype(np.float64)
        if s.ndim != 1 or s.size == 0:
            raise InvalidArgument("trace samples must be a non-empty 1-D vector")
        if not np.all(np.isfinite(s)):
            raise InvalidArgument("trace samples must be finite")
        if not self.sensor_freq_hz > 0:
            raise InvalidArgument("sensor_freq_hz must be > 0")
        if s.flags.writeable:
            s = s.copy()
            s.flags.writeable = False
        object.__setattr__(self, "samples", s)
        object.__setattr__(self, "sensor_freq_hz", float(self.sensor_freq_hz))
        object.__setattr__(self, "raw_len", int(self.raw_len) if self.raw_len is not None else s.size)

    def __len__(self):
        return self.samples.size

    def with_samples(self, samples) -> Trace:
        return Trace(samples, self.sensor_freq_hz, self.raw_len)


@dataclass(frozen=True, eq=False)
class LabeledTrace:
    trace: Trace
    label: AcceleratorConfig
    input_id: int


class AccessAudit:
    """Counts reads of each split; used to check train/test hygiene."""

    def __init__(self):
        self.reads = Counter()

    def record(self, split):
        self.reads[split] += 1

    def __getitem__(self, split):
        return self.reads[split]


@dataclass(frozen=True, eq=False)
class TraceDataset:
    traces: tuple[LabeledTrace, ...]
    config_space: ConfigSpace
    split: tuple[str, ...]
    metadata: dict = field(default_factory=dict)
    audit: AccessAudit = field(default_factory=AccessAudit)

    def __post_init__(self):
        traces = tuple(self.traces)
        split = tuple(self.split)
        object.__setattr__(self, "traces", traces)
        object.__setattr__(self, "split", split)
        if len(traces) != len(split):
            raise InvalidArgument("split must assign every trace exactly once")
        bad = set(split) - set(SPLITS)
        if bad:
            raise InvalidArgument(f"unknown split names {sorted(bad)}")
        for lt in traces:
            if lt.label not in self.config_space:
                raise InvalidArgument(f"label {lt.label} outside the configuration space")
        for name in SPLITS:
            counts = self.counts(name)
            if counts and len(set(counts.values())) > 1:
                raise InvalidArgument(f"{name} split is unbalanced: {dict(counts)}")

    def __len__(self):
        return len(self.traces)

    def counts(self, split_name: str) -> dict[AcceleratorConfig, int]:
        """Per-config trace counts of one split; every config appears if any does."""
        c = Counter(lt.label for lt, s in zip(self.traces, self.split) if s == split_name)
        if not c:
            return {}
        return {cfg: c.get(cfg, 0) for cfg in self.config_space.configs}

    def subset(self, split_name: str) -> TraceDataset:
        """Return only the traces of one split. Reads are recorded in ``audit``."""
        if split_name not in SPLITS:
            raise InvalidArgument(f"unknown split {split_name!r}")
        self.audit.record(split_name)
        keep = [lt for lt, s in zip(self.traces, self.split) if s == split_name]
        return TraceDataset(tuple(keep), self.config_space, (split_name,) * len(keep),
                            dict(self.metadata))

    def labels(self, target: str) -> np.ndarray:
        return np.array([getattr(lt.label, target) for lt in self.traces], dtype=np.int64)

    def matrix(self) -> np.ndarray:
        """Stack all sample vectors (requires equal lengths)."""
        if not self.traces:
            return np.empty((0, 0))
        lengths = {len(lt.trace) for lt in self.traces}
        if len(lengths) > 1:
            raise InvalidArgument(f"traces have mixed lengths {sorted(lengths)}")
        return np.stack([lt.trace.samples for lt in self.traces]).astype(np.float64)


@dataclass(frozen=True)
class WindowSpec:
    t_dataflow_s: float
    t_inf_s: float

    def __post_init__(self):
        if not (self.t_dataflow_s > 0 and self.t_inf_s > 0):
            raise InvalidArgument("window latencies must be strictly positive")
        if self.t_inf_s < self.t_dataflow_s:
            raise InvalidArgument("t_inf_s must be >= t_dataflow_s")


# product of two decimal floats (1.29e-3 * 1e8) lands a hair above the integer;
# snap before ceil so the sample counts match the intended value.
def _ceil_samples(seconds, freq):
    if not (seconds > 0 and freq > 0):
        raise InvalidArgument("latency and sensor frequency must be strictly positive")
    x = seconds * freq
    r = round(x)
    if math.isclose(x, r, rel_tol=1e-9, abs_tol=1e-9):
        return int(r)
    return int(math.ceil(x))


def window_length(spec: WindowSpec, sensor_freq_hz: float) -> int:
    """Normalized window size: samples covering the slowest dataflow stage."""
    return _ceil_samples(spec.t_dataflow_s, sensor_freq_hz)


def loading_length(spec: WindowSpec, sensor_freq_hz: float) -> int:
    """Samples of the dataflow loading phase to discard (one full inference)."""
    return _ceil_samples(spec.t_inf_s, sensor_freq_hz)


def dataset_cardinality(n_traces: int, config_space: ConfigSpace) -> int:
    if n_traces <= 0:
        raise InvalidArgument("n_traces must be > 0")
    if config_space is None or len(config_space) == 0:
        raise InvalidArgument("configuration space must be non-empty")
    return n_traces * len(config_space.foldings) * len(config_space.quantizations)


def stratified_split(labels: Sequence, ratio: float, rng: np.random.Generator | None = None
                     ) -> list[str]:
    """Assign round(ratio * n_c) traces of every class to training.

    Without ``rng`` the first traces of each class (acquisition order) go to
    training; with it a seeded random subset does.
    """
    if not 0.0 <= ratio <= 1.0:
        raise InvalidArgument("split ratio must lie in [0, 1]")
    by_class: dict = {}
    for i, lab in enumerate(labels):
        by_class.setdefault(lab, []).append(i)
    out = [TEST] * len(labels)
    for idx in by_class.values():
        n_train = int(round(ratio * len(idx)))
        chosen = idx if rng is None else list(rng.permutation(idx))
        for i in chosen[:n_train]:
            out[i] = TRAIN
    return out


def as_config_space(configs: Iterable[AcceleratorConfig]) -> ConfigSpace:
    configs = list(configs)
    return ConfigSpace(tuple(c.folding for c in configs), tuple(c.quantization for c in configs))
