"""Trace conditioning: trim, normalize, average."""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from .core import SPLITS, LabeledTrace, Trace, TraceDataset
from .errors import InvalidArgument, TraceTooShort


@dataclass(frozen=True)
class PreprocessConfig:
    window_samples: int
    loading_samples: int = 0
    n_average: int = 1

    def __post_init__(self):
        if self.window_samples < 1:
            raise InvalidArgument("window_samples must be >= 1")
        if self.loading_samples < 0:
            raise InvalidArgument("loading_samples must be >= 0")
        if self.n_average < 1:
            raise InvalidArgument("n_average must be >= 1")

    @property
    def required_len(self):
        return self.loading_samples + self.window_samples


def trim(trace: Trace, cfg: PreprocessConfig, trace_id=None) -> Trace:
    """Drop the loading phase and keep exactly one normalized window."""
    if len(trace) < cfg.required_len:
        raise TraceTooShort(cfg.required_len, len(trace), trace_id)
    start = cfg.loading_samples
    return trace.with_samples(trace.samples[start:start + cfg.window_samples])


def normalize(trace: Trace) -> Trace:
    s = np.asarray(trace.samples, dtype=np.float64)
    return trace.with_samples(s - s.mean())


def average(traces: list[Trace], n_average: int) -> list[Trace]:
    """Element-wise mean over consecutive groups of ``n_average``; the remainder is dropped."""
    if n_average < 1:
        raise InvalidArgument("n_average must be >= 1")
    if not traces:
        return []
    lengths = {len(t) for t in traces}
    if len(lengths) > 1:
        raise InvalidArgument(f"cannot average traces of mixed lengths {sorted(lengths)}")
    if len(traces) < n_average:
        raise InvalidArgument(f"need at least {n_average} traces to average, got {len(traces)}")
    if n_average == 1:
        return list(traces)
    n_groups = len(traces) // n_average
    X = np.stack([np.asarray(t.samples, dtype=np.float64) for t in traces[:n_groups * n_average]])
    means = X.reshape(n_groups, n_average, -1).mean(axis=1)
    return [traces[g * n_average].with_samples(means[g]) for g in range(n_groups)]


def _trim_normalize(ds: TraceDataset, cfg: PreprocessConfig):
    out = []
    for i, lt in enumerate(ds.traces):
        t = trim(lt.trace, cfg, trace_id=f"#{i} input_id={lt.input_id}")
        out.append(LabeledTrace(normalize(t), lt.label, lt.input_id))
    return out


def average_dataset(ds: TraceDataset, n_average: int) -> TraceDataset:
    """Average within (label, split) groups, in acquisition order."""
    if n_average == 1 or not ds.traces:
        return ds
    groups: dict = {}
    for lt, s in zip(ds.traces, ds.split):
        groups.setdefault((s, lt.label), []).append(lt)
    traces, split = [], []
    for s in SPLITS:
        for cfg in ds.config_space.configs:
            members = groups.get((s, cfg), [])
            n = len(members) // n_average
            if n == 0:
                continue
            avg = average([m.trace for m in members[:n * n_average]], n_average)
            for g, t in enumerate(avg):
                traces.append(LabeledTrace(t, cfg, members[g * n_average].input_id))
                split.append(s)
    return TraceDataset(tuple(traces), ds.config_space, tuple(split), dict(ds.metadata))


def preprocess_dataset(ds: TraceDataset, cfg: PreprocessConfig) -> TraceDataset:
    """trim -> normalize -> average; labels and split membership are preserved."""
    traces = _trim_normalize(ds, cfg)
    out = TraceDataset(tuple(traces), ds.config_space, ds.split, dict(ds.metadata))
    return average_dataset(out, cfg.n_average)
