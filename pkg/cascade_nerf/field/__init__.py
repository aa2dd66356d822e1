"""Radiance-field network, parameter initialization and checkpoints."""

from .checkpoint import Checkpoint, checkpoint_hash, load_checkpoint, save_checkpoint
from .network import (
    field_graph,
    init_params,
    param_count,
    param_shapes,
    prompt_layer,
    query,
    query_points,
)

__all__ = [
    "Checkpoint",
    "checkpoint_hash",
    "field_graph",
    "init_params",
    "load_checkpoint",
    "param_count",
    "param_shapes",
    "prompt_layer",
    "query",
    "query_points",
    "save_checkpoint",
]
