"""GCN/GAT training engine with per-layer weight-temperature instrumentation."""
__version__ = "0.1.0"

from .kernels import BACKEND
from .engine import ModelSpec, LayerSpec, gcn_preset, gat_preset, init_params
from .data import Graph, GraphBatch, DatasetSplit, load_jsonl, synth_dataset, make_batches
from .thermometer import (SnapshotLog, layer_temperatures, per_weight_msv,
                          thermodynamic_temperature, cs_temperature)
from .experiments import TrainConfig, train_to_equilibrium, measure_window, sweep

__all__ = [
    "BACKEND", "ModelSpec", "LayerSpec", "gcn_preset", "gat_preset", "init_params",
    "Graph", "GraphBatch", "DatasetSplit", "load_jsonl", "synth_dataset", "make_batches",
    "SnapshotLog", "layer_temperatures", "per_weight_msv", "thermodynamic_temperature",
    "cs_temperature", "TrainConfig", "train_to_equilibrium", "measure_window", "sweep",
]
