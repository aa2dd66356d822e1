"""Reverse-mode automatic differentiation over float64 numpy tensors."""

from .gradcheck import finite_difference_gradient, max_relative_error
from .params import ParamStore, Tensor, add_gradients
from .tape import Node, NodeId, Tape, backward, forward

__all__ = [
    "Node",
    "NodeId",
    "ParamStore",
    "Tape",
    "Tensor",
    "add_gradients",
    "backward",
    "finite_difference_gradient",
    "forward",
    "max_relative_error",
]
