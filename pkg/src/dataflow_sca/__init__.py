"""Side-channel recovery of dataflow-accelerator folding and quantization from power traces."""

from .core import (AcceleratorConfig, ConfigSpace, LabeledTrace, Trace, TraceDataset, WindowSpec,
                   dataset_cardinality, loading_length, window_length)
from .pipeline import GridSearchSpace, TrainedAttack, attack, evaluate, prepare
from .preprocess import PreprocessConfig, preprocess_dataset
from .victim import VictimModel, default_models, generate_dataset, generate_trace

__version__ = "0.1.0"
