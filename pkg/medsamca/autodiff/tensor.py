# purpose: dense tensor with reverse-mode automatic differentiation

import itertools
import logging
import os
import threading
from contextlib import contextmanager

import numpy as np

from medsamca.errors import ContractError
from medsamca.errors import NumericalError

logger = logging.getLogger(__name__)

_sequence = itertools.count()
_state = threading.local()
_debug = {"enabled": os.environ.get("MEDSAMCA_DEBUG", "") not in ("", "0")}


def grad_enabled() -> bool:
    "True unless the calling thread is inside no_grad()"
    return getattr(_state, "gradEnabled", True)


@contextmanager
def no_grad():
    "Evaluate without recording operations (thread local)"
    previous = grad_enabled()
    _state.gradEnabled = False
    try:
        yield
    finally:
        _state.gradEnabled = previous


@contextmanager
def trace_branches():
    """Collect the branch each non-smooth op takes (ReLU sign, argmax) while
    the block runs; yields the list being filled"""
    previous = getattr(_state, "branches", None)
    _state.branches = []
    try:
        yield _state.branches
    finally:
        _state.branches = previous


def note_branch(pattern: np.ndarray):
    branches = getattr(_state, "branches", None)
    if branches is not None:
        branches.append(pattern)


def set_debug(enabled: bool):
    "Check every forward result for NaN/Inf"
    _debug["enabled"] = bool(enabled)


def debug_enabled() -> bool:
    return _debug["enabled"]


class Node:
    "One executed operation: its inputs, its output and a backward rule"

    def __init__(self, opName: str, inputs: tuple, backwardFn):
        self.opName = opName
        self.inputs = inputs
        self.backwardFn = backwardFn
        self.seq = next(_sequence)
        self.output = None

    def __repr__(self):
        return "Node({0}, seq={1})".format(self.opName, self.seq)


class Graph:
    "Operations reachable from an output, kept in record order"

    def __init__(self, operations: list):
        self.operations = operations

    @classmethod
    def fromOutput(cls, output: "Tensor") -> "Graph":
        "Collect every recorded operation that output depends on"
        found = {}
        stack = [output]
        while stack:
            tensor = stack.pop()
            node = tensor.node
            if node is None or id(node) in found:
                continue
            found[id(node)] = node
            for parent in node.inputs:
                if parent.node is not None:
                    stack.append(parent)
        operations = sorted(found.values(), key=lambda n: n.seq)
        return cls(operations)

    def backwardOrder(self):
        "Reverse record order; every operation visited once"
        return reversed(self.operations)

    def __len__(self):
        return len(self.operations)


class Tensor:
    "N-d real array that optionally tracks gradients"

    def __init__(self, data, requires_grad: bool = False, dtype=None):
        if isinstance(data, Tensor):
            data = data.data
        if dtype is None:
            dtype = getattr(data, "dtype", None)
            if dtype not in (np.float32, np.float64):
                dtype = np.float64
        self.data = np.asarray(data, dtype=dtype)
        self.requires_grad = bool(requires_grad)
        self.grad = None
        self.node = None

    # shape helpers

    @property
    def shape(self) -> tuple:
        return self.data.shape

    @property
    def ndim(self) -> int:
        return self.data.ndim

    @property
    def size(self) -> int:
        return self.data.size

    @property
    def dtype(self):
        return self.data.dtype

    @property
    def isLeaf(self) -> bool:
        return self.node is None

    def numpy(self) -> np.ndarray:
        return self.data

    def item(self) -> float:
        if self.data.size != 1:
            raise ContractError(
                "item() needs a single element tensor, got shape {0}".format(
                    self.shape))
        return float(self.data.reshape(-1)[0])

    def detach(self) -> "Tensor":
        return Tensor(self.data.copy())

    def zeroGrad(self):
        self.grad = None

    def backward(self):
        backward(self)

    def __repr__(self):
        return "Tensor(shape={0}, dtype={1}, requires_grad={2})".format(
            self.shape, self.dtype, self.requires_grad)

    # arithmetic delegates to the functional module

    def __add__(self, other):
        return functional.add(self, other)

    def __radd__(self, other):
        return functional.add(other, self)

    def __sub__(self, other):
        return functional.sub(self, other)

    def __rsub__(self, other):
        return functional.sub(other, self)

    def __mul__(self, other):
        return functional.mul(self, other)

    def __rmul__(self, other):
        return functional.mul(other, self)

    def __truediv__(self, other):
        return functional.div(self, other)

    def __rtruediv__(self, other):
        return functional.div(other, self)

    def __neg__(self):
        return functional.mul(self, -1.0)

    def __matmul__(self, other):
        return functional.matmul(self, other)

    def reshape(self, *shape) -> "Tensor":
        if len(shape) == 1 and isinstance(shape[0], (tuple, list)):
            shape = tuple(shape[0])
        return functional.reshape(self, shape)

    def transpose(self, *axes) -> "Tensor":
        return functional.transpose(self, axes)

    def sum(self, axis=None, keepdims=False) -> "Tensor":
        return functional.sum(self, axis=axis, keepdims=keepdims)

    def mean(self, axis=None, keepdims=False) -> "Tensor":
        return functional.mean(self, axis=axis, keepdims=keepdims)


def as_tensor(value, dtype=None) -> Tensor:
    "Wrap scalars and arrays, pass tensors through"
    if isinstance(value, Tensor):
        return value
    return Tensor(value, dtype=dtype)


def record(data: np.ndarray, inputs: tuple, backwardFn, opName: str) -> Tensor:
    """Wrap an operation result, registering its backward rule when any input
    requires a gradient. backwardFn maps the output gradient to a tuple with
    one gradient (or None) per input."""
    out = Tensor(data, dtype=data.dtype)
    if debug_enabled() and not np.all(np.isfinite(out.data)):
        raise NumericalError(
            "non-finite values produced by {0}".format(opName))
    if grad_enabled() and any(t.requires_grad for t in inputs):
        out.requires_grad = True
        out.node = Node(opName, inputs, backwardFn)
        out.node.output = out
    return out


def backward(loss: Tensor):
    "Accumulate d(loss)/d(leaf) into every requires_grad leaf"
    if loss.size != 1:
        raise ContractError(
            "backward needs a scalar loss, got shape {0}".format(loss.shape))
    if not loss.requires_grad:
        raise ContractError("loss does not depend on any trainable tensor")
    if loss.node is None:
        seed = np.ones_like(loss.data)
        loss.grad = seed if loss.grad is None else loss.grad + seed
        return
    graph = Graph.fromOutput(loss)
    grads = {id(loss): np.ones_like(loss.data)}
    for node in graph.backwardOrder():
        out = node.output
        gradOut = grads.pop(id(out), None)
        if gradOut is None:
            continue
        inputGrads = node.backwardFn(gradOut)
        for parent, grad in zip(node.inputs, inputGrads):
            if grad is None or not parent.requires_grad:
                continue
            if grad.shape != parent.shape:
                raise ContractError(
                    "{0} backward returned shape {1} for input {2}".format(
                        node.opName, grad.shape, parent.shape))
            if parent.node is None:
                if parent.grad is None:
                    parent.grad = np.array(grad, dtype=parent.dtype)
                else:
                    parent.grad = parent.grad + grad
            else:
                key = id(parent)
                if key in grads:
                    grads[key] = grads[key] + grad
                else:
                    grads[key] = grad


from medsamca.autodiff import functional  # noqa: E402
