"""Attribute-augmented spatio-temporal forecasting of EV charging availability.

Pipeline: raw sessions are ingested into a 30-minute availability grid,
stations form a Gaussian-kernel graph, the A2Unit concatenates POI and
weather attributes, a GCN mixes stations and an Informer forecasts ahead.
"""

from .a2unit import AugmentedSample, augment, augment_dataset
from .graph import StationGraph, build_station_graph
from .ingest import ProcessedData, ingest_files, make_windows, split_dataset
from .metrics import MetricsReport, compute_metrics
from .synth import SynthConfig, generate
from .trainer import AstGin, ModelConfig, TrainConfig, evaluate, predict, train

__version__ = "0.1.0"

__all__ = [
    "AstGin", "AugmentedSample", "MetricsReport", "ModelConfig", "ProcessedData", "StationGraph",
    "SynthConfig", "TrainConfig", "augment", "augment_dataset", "build_station_graph", "compute_metrics",
    "evaluate", "generate", "ingest_files", "make_windows", "predict", "split_dataset", "train",
]
