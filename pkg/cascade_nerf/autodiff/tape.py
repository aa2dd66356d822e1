"""Define-then-run tape with reverse-mode differentiation.

Graphs are recorded symbolically on a Tape, evaluated by forward() against a list of
input tensors and a ParamStore, and differentiated by a single backward() sweep that
returns one gradient per parameter name.
"""

from collections.abc import Mapping, Sequence
from dataclasses import dataclass, field
from typing import Any

import numpy as np

from ..encoding import encode_array, encode_vjp
from ..errors import NonFiniteError, ShapeMismatchError, UsageError
from ..models.field import EncodingConfig
from .params import ParamStore, Tensor

NodeId = int

_LEAVES = frozenset({"input", "constant", "param"})


@dataclass(frozen=True)
class Node:
    """One recorded operation; inputs are indices of earlier nodes."""

    op: str
    inputs: tuple[NodeId, ...]
    name: str
    attrs: Mapping[str, Any] = field(default_factory=dict)


def _shape(t: Tensor) -> str:
    return str(tuple(t.shape))


class _Primitive:
    """Forward rule and vector-Jacobian product of one operation."""

    def forward(self, node: Node, args: list[Tensor]) -> Tensor:
        raise NotImplementedError

    def backward(self, node: Node, args: list[Tensor], out: Tensor, grad: Tensor) -> list[Tensor]:
        raise NotImplementedError


class _Affine(_Primitive):
    def forward(self, node: Node, args: list[Tensor]) -> Tensor:
        x, w = args[0], args[1]
        if x.ndim != 2 or w.ndim != 2 or x.shape[1] != w.shape[1]:
            raise ShapeMismatchError(node.name, f"(N, {w.shape[-1]}) @ (out, in)^T", f"{_shape(x)} @ {_shape(w)}^T")
        y = x @ w.T
        if len(args) == 3:
            b = args[2]
            if b.shape != (w.shape[0],):
                raise ShapeMismatchError(node.name, f"bias ({w.shape[0]},)", _shape(b))
            y = y + b
        return y

    def backward(self, node: Node, args: list[Tensor], out: Tensor, grad: Tensor) -> list[Tensor]:
        x, w = args[0], args[1]
        grads = [grad @ w, grad.T @ x]
        if len(args) == 3:
            grads.append(grad.sum(axis=0))
        return grads


class _Relu(_Primitive):
    def forward(self, node: Node, args: list[Tensor]) -> Tensor:
        return np.maximum(args[0], 0.0)

    def backward(self, node: Node, args: list[Tensor], out: Tensor, grad: Tensor) -> list[Tensor]:
        # subgradient at 0 is 0
        return [grad * (args[0] > 0.0)]


def _sigmoid(x: Tensor) -> Tensor:
    return 0.5 * (np.tanh(0.5 * x) + 1.0)


class _Sigmoid(_Primitive):
    def forward(self, node: Node, args: list[Tensor]) -> Tensor:
        return _sigmoid(args[0])

    def backward(self, node: Node, args: list[Tensor], out: Tensor, grad: Tensor) -> list[Tensor]:
        return [grad * out * (1.0 - out)]


class _Softplus(_Primitive):
    def forward(self, node: Node, args: list[Tensor]) -> Tensor:
        return np.logaddexp(0.0, args[0])

    def backward(self, node: Node, args: list[Tensor], out: Tensor, grad: Tensor) -> list[Tensor]:
        return [grad * _sigmoid(args[0])]


class _Exp(_Primitive):
    def forward(self, node: Node, args: list[Tensor]) -> Tensor:
        return np.exp(args[0])

    def backward(self, node: Node, args: list[Tensor], out: Tensor, grad: Tensor) -> list[Tensor]:
        return [grad * out]


class _Neg(_Primitive):
    def forward(self, node: Node, args: list[Tensor]) -> Tensor:
        return -args[0]

    def backward(self, node: Node, args: list[Tensor], out: Tensor, grad: Tensor) -> list[Tensor]:
        return [-grad]


class _Add(_Primitive):
    def forward(self, node: Node, args: list[Tensor]) -> Tensor:
        a, b = args
        if a.shape != b.shape:
            raise ShapeMismatchError(node.name, _shape(a), _shape(b))
        return a + b

    def backward(self, node: Node, args: list[Tensor], out: Tensor, grad: Tensor) -> list[Tensor]:
        return [grad, grad]


class _Mul(_Primitive):
    def forward(self, node: Node, args: list[Tensor]) -> Tensor:
        a, b = args
        if a.shape != b.shape:
            raise ShapeMismatchError(node.name, _shape(a), _shape(b))
        return a * b

    def backward(self, node: Node, args: list[Tensor], out: Tensor, grad: Tensor) -> list[Tensor]:
        a, b = args
        return [grad * b, grad * a]


class _Scale(_Primitive):
    def forward(self, node: Node, args: list[Tensor]) -> Tensor:
        return args[0] * float(node.attrs["factor"])

    def backward(self, node: Node, args: list[Tensor], out: Tensor, grad: Tensor) -> list[Tensor]:
        return [grad * float(node.attrs["factor"])]


class _Expand(_Primitive):
    """Repeat along a new trailing axis: (...) -> (..., n)."""

    def forward(self, node: Node, args: list[Tensor]) -> Tensor:
        n = int(node.attrs["n"])
        return np.repeat(args[0][..., None], n, axis=-1)

    def backward(self, node: Node, args: list[Tensor], out: Tensor, grad: Tensor) -> list[Tensor]:
        return [grad.sum(axis=-1)]


class _Concat(_Primitive):
    """Concatenate along the last axis."""

    def forward(self, node: Node, args: list[Tensor]) -> Tensor:
        lead = args[0].shape[:-1]
        for arg in args[1:]:
            if arg.shape[:-1] != lead:
                raise ShapeMismatchError(node.name, f"leading axes {lead}", f"{arg.shape[:-1]}")
        return np.concatenate(args, axis=-1)

    def backward(self, node: Node, args: list[Tensor], out: Tensor, grad: Tensor) -> list[Tensor]:
        bounds = np.cumsum([a.shape[-1] for a in args])[:-1]
        return list(np.split(grad, bounds, axis=-1))


class _Reshape(_Primitive):
    def forward(self, node: Node, args: list[Tensor]) -> Tensor:
        shape = tuple(node.attrs["shape"])
        if int(np.prod(shape)) != args[0].size:
            raise ShapeMismatchError(node.name, f"{args[0].size} elements", str(shape))
        return args[0].reshape(shape)

    def backward(self, node: Node, args: list[Tensor], out: Tensor, grad: Tensor) -> list[Tensor]:
        return [grad.reshape(args[0].shape)]


class _Sum(_Primitive):
    def forward(self, node: Node, args: list[Tensor]) -> Tensor:
        axis = node.attrs.get("axis")
        if axis is not None and not -args[0].ndim <= axis < args[0].ndim:
            raise ShapeMismatchError(node.name, f"axis within {args[0].ndim} dims", f"axis {axis}")
        return np.asarray(np.sum(args[0], axis=axis))

    def backward(self, node: Node, args: list[Tensor], out: Tensor, grad: Tensor) -> list[Tensor]:
        axis = node.attrs.get("axis")
        g = grad if axis is None else np.expand_dims(grad, axis)
        return [np.broadcast_to(g, args[0].shape).copy()]


class _CumsumExclusive(_Primitive):
    """y_i = sum_{j<i} x_j along the last axis."""

    def forward(self, node: Node, args: list[Tensor]) -> Tensor:
        x = args[0]
        inclusive = np.cumsum(x, axis=-1)
        return np.concatenate([np.zeros_like(x[..., :1]), inclusive[..., :-1]], axis=-1)

    def backward(self, node: Node, args: list[Tensor], out: Tensor, grad: Tensor) -> list[Tensor]:
        suffix = np.cumsum(grad[..., ::-1], axis=-1)[..., ::-1]
        return [np.concatenate([suffix[..., 1:], np.zeros_like(grad[..., :1])], axis=-1)]


class _Posenc(_Primitive):
    def forward(self, node: Node, args: list[Tensor]) -> Tensor:
        cfg: EncodingConfig = node.attrs["cfg"]
        return encode_array(args[0], cfg)

    def backward(self, node: Node, args: list[Tensor], out: Tensor, grad: Tensor) -> list[Tensor]:
        cfg: EncodingConfig = node.attrs["cfg"]
        return [encode_vjp(args[0], grad, cfg)]


class _Mse(_Primitive):
    def forward(self, node: Node, args: list[Tensor]) -> Tensor:
        a, b = args
        if a.shape != b.shape:
            raise ShapeMismatchError(node.name, _shape(a), _shape(b))
        return np.asarray(np.mean((a - b) ** 2))

    def backward(self, node: Node, args: list[Tensor], out: Tensor, grad: Tensor) -> list[Tensor]:
        a, b = args
        diff = (2.0 / a.size) * (a - b) * grad
        return [diff, -diff]


_PRIMITIVES: dict[str, _Primitive] = {
    "affine": _Affine(),
    "relu": _Relu(),
    "sigmoid": _Sigmoid(),
    "softplus": _Softplus(),
    "exp": _Exp(),
    "neg": _Neg(),
    "add": _Add(),
    "mul": _Mul(),
    "scale": _Scale(),
    "expand": _Expand(),
    "concat": _Concat(),
    "reshape": _Reshape(),
    "sum": _Sum(),
    "cumsum_exclusive": _CumsumExclusive(),
    "posenc": _Posenc(),
    "mse": _Mse(),
}


class Tape:
    """Recorded computation graph plus the intermediates of its last forward pass."""

    def __init__(self) -> None:
        self.nodes: list[Node] = []
        self.input_slots: list[NodeId] = []
        self.output: NodeId | None = None
        self.values: list[Tensor] | None = None
        self._params: ParamStore | None = None
        self._backward_done = False

    def __len__(self) -> int:
        return len(self.nodes)

    def _record(self, op: str, inputs: Sequence[NodeId], name: str | None, **attrs: Any) -> NodeId:
        for idx in inputs:
            if not 0 <= idx < len(self.nodes):
                raise UsageError(f"node {op} refers to unknown input {idx}")
        node_id = len(self.nodes)
        self.nodes.append(Node(op, tuple(inputs), name or f"{op}#{node_id}", attrs))
        self.values = None
        return node_id

    # leaves

    def input(self, name: str) -> NodeId:
        """Placeholder filled from forward()'s inputs list, in declaration order."""
        node_id = self._record("input", (), name)
        self.input_slots.append(node_id)
        return node_id

    def constant(self, value: Tensor, name: str | None = None) -> NodeId:
        return self._record("constant", (), name, value=np.asarray(value, dtype=np.float64))

    def param(self, name: str) -> NodeId:
        return self._record("param", (), name, param=name)

    # operations

    def affine(self, x: NodeId, weight: NodeId, bias: NodeId | None = None, name: str | None = None) -> NodeId:
        """x @ weight.T + bias with weight shaped (out, in)."""
        inputs = (x, weight) if bias is None else (x, weight, bias)
        return self._record("affine", inputs, name)

    def linear(self, x: NodeId, prefix: str, bias: bool = True) -> NodeId:
        """Affine layer reading '<prefix>.weight' and '<prefix>.bias' from the parameters."""
        b = self.param(f"{prefix}.bias") if bias else None
        return self.affine(x, self.param(f"{prefix}.weight"), b, name=prefix)

    def relu(self, x: NodeId, name: str | None = None) -> NodeId:
        return self._record("relu", (x,), name)

    def sigmoid(self, x: NodeId, name: str | None = None) -> NodeId:
        return self._record("sigmoid", (x,), name)

    def softplus(self, x: NodeId, name: str | None = None) -> NodeId:
        return self._record("softplus", (x,), name)

    def exp(self, x: NodeId, name: str | None = None) -> NodeId:
        return self._record("exp", (x,), name)

    def neg(self, x: NodeId, name: str | None = None) -> NodeId:
        return self._record("neg", (x,), name)

    def add(self, a: NodeId, b: NodeId, name: str | None = None) -> NodeId:
        return self._record("add", (a, b), name)

    def mul(self, a: NodeId, b: NodeId, name: str | None = None) -> NodeId:
        return self._record("mul", (a, b), name)

    def scale(self, x: NodeId, factor: float, name: str | None = None) -> NodeId:
        return self._record("scale", (x,), name, factor=float(factor))

    def expand(self, x: NodeId, n: int, name: str | None = None) -> NodeId:
        return self._record("expand", (x,), name, n=int(n))

    def concat(self, xs: Sequence[NodeId], name: str | None = None) -> NodeId:
        if not xs:
            raise UsageError("concat needs at least one input")
        return self._record("concat", tuple(xs), name)

    def reshape(self, x: NodeId, shape: Sequence[int], name: str | None = None) -> NodeId:
        return self._record("reshape", (x,), name, shape=tuple(int(s) for s in shape))

    def sum(self, x: NodeId, axis: int | None = None, name: str | None = None) -> NodeId:
        return self._record("sum", (x,), name, axis=axis)

    def cumsum_exclusive(self, x: NodeId, name: str | None = None) -> NodeId:
        return self._record("cumsum_exclusive", (x,), name)

    def posenc(self, x: NodeId, cfg: EncodingConfig, name: str | None = None) -> NodeId:
        return self._record("posenc", (x,), name, cfg=cfg)

    def mse(self, pred: NodeId, target: NodeId, name: str | None = None) -> NodeId:
        return self._record("mse", (pred, target), name)

    def value(self, node_id: NodeId) -> Tensor:
        """Intermediate from the last forward pass."""
        if self.values is None:
            raise UsageError("tape has not been evaluated")
        return self.values[node_id]

    def output_id(self) -> NodeId:
        if not self.nodes:
            raise UsageError("empty tape")
        return self.output if self.output is not None else len(self.nodes) - 1


def forward(tape: Tape, inputs: Sequence[Tensor], params: ParamStore) -> Tensor:
    """Evaluate every node in order and return the output node's value."""
    if len(inputs) != len(tape.input_slots):
        raise UsageError(f"tape declares {len(tape.input_slots)} inputs, got {len(inputs)}")
    slots = {node_id: i for i, node_id in enumerate(tape.input_slots)}
    values: list[Tensor] = []
    with np.errstate(all="ignore"):
        for node_id, node in enumerate(tape.nodes):
            if node.op == "input":
                value = np.asarray(inputs[slots[node_id]], dtype=np.float64)
            elif node.op == "constant":
                value = node.attrs["value"]
            elif node.op == "param":
                name = node.attrs["param"]
                if name not in params:
                    raise UsageError(f"node '{node.name}' reads missing parameter '{name}'")
                value = params[name]
            else:
                value = _PRIMITIVES[node.op].forward(node, [values[i] for i in node.inputs])
            if not np.all(np.isfinite(value)):
                raise NonFiniteError(node.name, f"{node.op} produced NaN/Inf")
            values.append(value)
    tape.values = values
    tape._params = params
    tape._backward_done = False
    return values[tape.output_id()]


def backward(tape: Tape, output_seed: Tensor | float = 1.0) -> dict[str, Tensor]:
    """Propagate output_seed back through the tape once; returns d(output)/d(param) for every parameter."""
    if tape.values is None or tape._params is None:
        raise UsageError("backward called before forward")
    if tape._backward_done:
        raise UsageError("backward already ran for this forward pass")
    values = tape.values
    out_id = tape.output_id()
    seed = np.broadcast_to(np.asarray(output_seed, dtype=np.float64), values[out_id].shape).copy()

    needs = [False] * len(tape.nodes)
    for node_id, node in enumerate(tape.nodes):
        needs[node_id] = node.op == "param" or any(needs[i] for i in node.inputs)

    grads: list[Tensor | None] = [None] * len(tape.nodes)
    grads[out_id] = seed
    param_grads = {name: np.zeros_like(t) for name, t in tape._params.items()}
    with np.errstate(all="ignore"):
        for node_id in range(out_id, -1, -1):
            grad = grads[node_id]
            grads[node_id] = None
            if grad is None or not needs[node_id]:
                continue
            node = tape.nodes[node_id]
            if node.op == "param":
                param_grads[node.attrs["param"]] += grad
                continue
            if node.op in _LEAVES:
                continue
            args = [values[i] for i in node.inputs]
            input_grads = _PRIMITIVES[node.op].backward(node, args, values[node_id], grad)
            for src, g in zip(node.inputs, input_grads, strict=True):
                if not needs[src]:
                    continue
                prev = grads[src]
                grads[src] = g if prev is None else prev + g
    tape._backward_done = True
    for name, g in param_grads.items():
        if not np.all(np.isfinite(g)):
            raise NonFiniteError(f"gradient of {name}")
    return param_grads
