"""Wide and deep heterogeneous message passing network (WIDEN)."""

from .graph import HeteroGraph, ingest, split
from .model import ModelOptions, ModelParams, forward, init_params, load_checkpoint, save_checkpoint
from .sampler import NeighborCache, sample_all
from .trainer import TrainConfig, train

__all__ = [
    "HeteroGraph",
    "ModelOptions",
    "ModelParams",
    "NeighborCache",
    "TrainConfig",
    "forward",
    "ingest",
    "init_params",
    "load_checkpoint",
    "sample_all",
    "save_checkpoint",
    "split",
    "train",
]
