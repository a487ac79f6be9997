"""Synthetic power-trace generator for a loaded dataflow accelerator.

The model reproduces the qualitative structure seen on real captures:

* steady-state activity is a periodic pattern whose frequency scales with
  the folding factor,
* the dataflow loading phase lasts ``loading_len_base / folding`` samples and
  is quieter (fewer stages active at once),
* quantization shows up as an amplitude gain plus a sub-harmonic with period
  ``period * quantization / 4``. This signature is an assumption of the
  simulator; it is deliberately weaker than the folding signature.

On top come white noise, Poisson-arriving rectangular CPU bursts and one
constant calibration offset per trace.
"""

from __future__ import annotations

from concurrent.futures import ThreadPoolExecutor
from dataclasses import asdict, dataclass, replace

import numpy as np

from .core import (AcceleratorConfig, ConfigSpace, LabeledTrace, Trace, TraceDataset,
                   as_config_space, stratified_split)
from .errors import InvalidArgument

# harmonic amplitudes / phases of the per-period activity template
_TEMPLATE_AMPS = np.array([1.0, 0.55, 0.3, 0.15])
_TEMPLATE_PHASES = np.array([0.0, 0.7, 1.9, 2.6])


def _template(theta, amps, phases):
    h = np.arange(1, len(amps) + 1)
    return np.cos(np.multiply.outer(theta, h) + phases) @ amps


def _template_p2p():
    theta = np.linspace(0, 2 * np.pi, 8192, endpoint=False)
    v = _template(theta, _TEMPLATE_AMPS, _TEMPLATE_PHASES)
    return float(v.max() - v.min())


_P2P = _template_p2p()


@dataclass(frozen=True)
class VictimModel:
    config: AcceleratorConfig
    base_period_samples: float = 512
    base_amplitude: float = 4.0
    quant_amplitude_gain: float = 1.10
    quant_harmonic: float = 0.08
    loading_len_base: int = 8192
    window_samples: int = 4096
    noise_sigma: float = 3.0
    cpu_burst_rate: float = 2.0
    burst_height: float = 3.0
    burst_width: tuple[int, int] = (16, 128)
    calib_offset_sigma: float = 5.0
    baseline: float = 64.0
    phase_jitter: float = 0.01
    microstructure: float = 0.05
    loading_noise_scale: float = 0.5
    sensor_freq_hz: float = 1e8
    rng_seed: int = 0

    def __post_init__(self):
        if self.base_period_samples < 2:
            raise InvalidArgument("base_period_samples must be >= 2")
        for name in ("base_amplitude", "quant_amplitude_gain", "quant_harmonic", "noise_sigma",
                     "cpu_burst_rate", "burst_height", "calib_offset_sigma", "phase_jitter",
                     "microstructure", "loading_noise_scale"):
            if getattr(self, name) < 0:
                raise InvalidArgument(f"{name} must be >= 0")
        if self.config.folding < 1:
            raise InvalidArgument("folding must be >= 1")
        if self.loading_len_base < 0 or self.window_samples < 1:
            raise InvalidArgument("loading_len_base must be >= 0 and window_samples >= 1")
        lo, hi = self.burst_width
        if not 1 <= lo <= hi:
            raise InvalidArgument("burst_width must satisfy 1 <= min <= max")

    @property
    def period(self) -> float:
        return self.base_period_samples / self.config.folding

    @property
    def loading_len(self) -> int:
        return int(round(self.loading_len_base / self.config.folding))

    @property
    def amplitude(self) -> float:
        return self.base_amplitude * self.quant_amplitude_gain ** (self.config.quantization - 4)

    @property
    def capture_len(self) -> int:
        """Fixed acquisition length: slowest loading phase plus one window."""
        return self.loading_len_base + self.window_samples

    def to_dict(self):
        d = asdict(self)
        d["config"] = [self.config.folding, self.config.quantization]
        d["burst_width"] = list(self.burst_width)
        return d

    @classmethod
    def from_dict(cls, d):
        d = dict(d)
        d["config"] = AcceleratorConfig(*d["config"])
        d["burst_width"] = tuple(d["burst_width"])
        return cls(**d)


def trace_rng(model: VictimModel, input_id: int) -> np.random.Generator:
    if input_id < 0:
        raise InvalidArgument("input_id must be non-negative")
    return np.random.default_rng(np.random.SeedSequence([int(model.rng_seed), int(input_id)]))


def generate_trace(model: VictimModel, input_id: int, post_loading_samples: int | None = None
                   ) -> LabeledTrace:
    """Simulate one capture of the victim running on a random input.

    ``post_loading_samples`` defaults to whatever fills the fixed capture
    length, so every configuration yields ``model.capture_len`` samples.
    """
    rng = trace_rng(model, input_id)
    n_load = model.loading_len
    n_post = model.capture_len - n_load if post_loading_samples is None else int(post_loading_samples)
    if n_post < 1:
        raise InvalidArgument("post-loading length must be >= 1")
    n = n_load + n_post
    period = model.period
    amp = model.amplitude / _P2P

    # draw order is part of the reproducibility contract; append new draws at the end
    shift = rng.normal(0.0, model.phase_jitter * period)
    micro = rng.normal(0.0, model.microstructure, size=(2, len(_TEMPLATE_AMPS)))
    noise = rng.standard_normal(n)
    offset = rng.normal(0.0, model.calib_offset_sigma) if model.calib_offset_sigma > 0 else 0.0
    n_bursts = rng.poisson(model.cpu_burst_rate) if model.cpu_burst_rate > 0 else 0
    b_start = rng.integers(n_load, n, size=n_bursts)
    b_width = rng.integers(model.burst_width[0], model.burst_width[1] + 1, size=n_bursts)
    b_height = rng.uniform(0.5, 1.5, size=n_bursts) * model.burst_height

    t = np.arange(n, dtype=np.float64) - shift
    theta = 2 * np.pi * t / period
    pattern = _template(theta, _TEMPLATE_AMPS, _TEMPLATE_PHASES)
    h = np.arange(1, len(_TEMPLATE_AMPS) + 1)
    pattern += np.cos(np.multiply.outer(theta, h)) @ micro[0] + np.sin(np.multiply.outer(theta, h)) @ micro[1]
    sub_period = period * model.config.quantization / 4
    pattern += model.quant_harmonic * _P2P * np.sin(2 * np.pi * t / sub_period)
    signal = amp * pattern

    sigma = np.full(n, model.noise_sigma)
    if n_load:
        # fewer stages active while the pipeline fills
        signal[:n_load] *= np.arange(n_load) / n_load
        sigma[:n_load] *= model.loading_noise_scale
    signal += sigma * noise
    for s, w, hgt in zip(b_start, b_width, b_height):
        signal[s:s + w] -= hgt
    signal += model.baseline + offset

    trace = Trace(signal.astype(np.float32), model.sensor_freq_hz, n)
    return LabeledTrace(trace, model.config, int(input_id))


def default_models(seed: int = 0, space: ConfigSpace | None = None, **overrides) -> list[VictimModel]:
    """One model per configuration, each with its own seed derived from ``seed``."""
    space = space or ConfigSpace()
    models = []
    for cfg in space.configs:
        sub = int(np.random.SeedSequence([int(seed), cfg.folding, cfg.quantization]).generate_state(1)[0])
        models.append(VictimModel(cfg, rng_seed=sub, **overrides))
    return models


def generate_dataset(models: list[VictimModel], n_traces: int, split_ratio: float = 0.8,
                     n_jobs: int = 1) -> TraceDataset:
    """Acquire ``n_traces`` labeled traces per configuration.

    Traces are ordered config-major, in acquisition order; input ids are
    unique within the dataset. The first ``round(ratio * n_traces)`` traces of
    every configuration form the training split.
    """
    if n_traces <= 0:
        raise InvalidArgument("n_traces must be > 0")
    if not models:
        raise InvalidArgument("at least one victim model is required")
    configs = [m.config for m in models]
    if len(set(configs)) != len(configs):
        raise InvalidArgument("duplicate configurations in victim models")
    space = as_config_space(configs)
    if len(space) != len(configs):
        raise InvalidArgument("victim models must cover a full folding x quantization product")

    jobs = [(m, ci * n_traces + i) for ci, m in enumerate(models) for i in range(n_traces)]
    if n_jobs > 1:
        with ThreadPoolExecutor(n_jobs) as ex:
            traces = list(ex.map(lambda a: generate_trace(*a), jobs))
    else:
        traces = [generate_trace(m, i) for m, i in jobs]
    split = stratified_split([lt.label for lt in traces], split_ratio)
    meta = {"simulator": [m.to_dict() for m in models], "n_traces": n_traces,
            "split_ratio": split_ratio}
    return TraceDataset(tuple(traces), space, tuple(split), meta)


def with_overrides(models, **kw):
    return [replace(m, **kw) for m in models]
