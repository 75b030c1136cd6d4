# purpose: parameter containers and the basic learned layers

import logging
from collections import OrderedDict

import numpy as np

from medsamca.autodiff import functional as F
from medsamca.autodiff.tensor import Tensor
from medsamca.errors import CheckpointError
from medsamca.errors import DimensionError

logger = logging.getLogger(__name__)


class Parameter(Tensor):
    "A leaf tensor owned by a module; trainable unless frozen"

    def __init__(self, data, requires_grad: bool = True):
        super().__init__(np.array(data, dtype=np.float64), requires_grad)


def _rng(rng):
    return rng if rng is not None else np.random.default_rng(0)


class Module:
    "Tree of named parameters, buffers and child modules"

    def __init__(self):
        object.__setattr__(self, "_parameters", OrderedDict())
        object.__setattr__(self, "_buffers", OrderedDict())
        object.__setattr__(self, "_modules", OrderedDict())

    def __setattr__(self, name, value):
        if isinstance(value, Parameter):
            self._parameters[name] = value
        elif isinstance(value, Module):
            self._modules[name] = value
        elif value is None:
            self._parameters.pop(name, None)
            self._modules.pop(name, None)
        object.__setattr__(self, name, value)

    def registerBuffer(self, name: str, array: np.ndarray):
        "Non-trainable state that still goes into checkpoints"
        tensor = Tensor(np.array(array, dtype=np.float64))
        self._buffers[name] = tensor
        object.__setattr__(self, name, tensor)

    def __call__(self, *args, **kwargs):
        return self.forward(*args, **kwargs)

    def forward(self, *args, **kwargs):
        raise NotImplementedError

    # traversal

    def namedModules(self, prefix: str = ""):
        yield prefix, self
        for name, child in self._modules.items():
            childPrefix = name if not prefix else prefix + "." + name
            yield from child.namedModules(childPrefix)

    def namedParameters(self, trainableOnly: bool = False) -> list:
        "Dotted-path (name, Parameter) pairs in construction order"
        named = []
        for prefix, module in self.namedModules():
            for name, param in module._parameters.items():
                if trainableOnly and not param.requires_grad:
                    continue
                named.append((name if not prefix else prefix + "." + name, param))
        return named

    def namedBuffers(self) -> list:
        named = []
        for prefix, module in self.namedModules():
            for name, buf in module._buffers.items():
                named.append((name if not prefix else prefix + "." + name, buf))
        return named

    def parameters(self, trainableOnly: bool = False) -> list:
        return [p for _, p in self.namedParameters(trainableOnly)]

    def countParameters(self, trainableOnly: bool = True) -> int:
        return int(sum(p.size for p in self.parameters(trainableOnly)))

    def zeroGrad(self):
        for p in self.parameters():
            p.zeroGrad()

    def setTrainable(self, trainable: bool):
        for p in self.parameters():
            p.requires_grad = bool(trainable)

    def to(self, dtype):
        "Cast every parameter and buffer in place"
        dtype = np.dtype(dtype)
        for _, tensor in self.namedParameters() + self.namedBuffers():
            tensor.data = tensor.data.astype(dtype)
            tensor.grad = None
        return self

    @property
    def dtype(self):
        params = self.parameters()
        return params[0].dtype if params else np.dtype(np.float64)

    # state

    def stateDict(self) -> "OrderedDict[str, np.ndarray]":
        state = OrderedDict()
        for name, tensor in self.namedParameters() + self.namedBuffers():
            state[name] = tensor.data.copy()
        return state

    def loadStateDict(self, state: dict):
        "Restore parameters and buffers; names and shapes must match exactly"
        own = OrderedDict(self.namedParameters() + self.namedBuffers())
        missing = [name for name in own if name not in state]
        if missing:
            raise CheckpointError("missing parameter {0}".format(missing[0]))
        unexpected = [name for name in state if name not in own]
        if unexpected:
            raise CheckpointError(
                "unexpected parameter {0}".format(unexpected[0]))
        for name, tensor in own.items():
            value = np.asarray(state[name])
            if value.shape != tensor.shape:
                raise CheckpointError(
                    "shape mismatch for {0}: checkpoint {1}, model {2}".format(
                        name, value.shape, tensor.shape))
            tensor.data = value.astype(tensor.dtype, copy=True)
            tensor.grad = None


class ModuleList(Module):
    "Children named by position: blocks.0, blocks.1, ..."

    def __init__(self, modules=()):
        super().__init__()
        for module in modules:
            self.append(module)

    def append(self, module: Module):
        setattr(self, str(len(self._modules)), module)

    def __iter__(self):
        return iter(self._modules.values())

    def __len__(self):
        return len(self._modules)

    def __getitem__(self, index: int) -> Module:
        return self._modules[str(index)]


class Conv2d(Module):
    "k x k convolution with He-normal initial weights"

    def __init__(self, inChannels: int, outChannels: int, kernel: int = 3,
                 stride: int = 1, padding: int = None, bias: bool = True,
                 rng=None):
        super().__init__()
        self.inChannels = inChannels
        self.outChannels = outChannels
        self.stride = stride
        self.padding = kernel // 2 if padding is None else padding
        fanIn = inChannels * kernel * kernel
        self.weight = Parameter(_rng(rng).normal(
            0.0, np.sqrt(2.0 / fanIn), (outChannels, inChannels, kernel, kernel)))
        self.bias = Parameter(np.zeros(outChannels)) if bias else None

    def forward(self, x):
        return F.conv2d(x, self.weight, self.bias,
                        stride=self.stride, padding=self.padding)


class Linear(Module):
    "x @ W + b over the last axis; W is [in, out]"

    def __init__(self, inFeatures: int, outFeatures: int, bias: bool = True,
                 rng=None):
        super().__init__()
        self.inFeatures = inFeatures
        self.outFeatures = outFeatures
        self.weight = Parameter(_rng(rng).normal(
            0.0, np.sqrt(1.0 / inFeatures), (inFeatures, outFeatures)))
        self.bias = Parameter(np.zeros(outFeatures)) if bias else None

    def forward(self, x):
        if x.shape[-1] != self.inFeatures:
            raise DimensionError(
                "linear expects last dim {0}, got {1}".format(
                    self.inFeatures, x.shape))
        out = F.matmul(x, self.weight)
        if self.bias is not None:
            out = F.add(out, self.bias)
        return out


class LayerNorm(Module):
    def __init__(self, dim: int, eps: float = 1e-5):
        super().__init__()
        self.eps = eps
        self.weight = Parameter(np.ones(dim))
        self.bias = Parameter(np.zeros(dim))

    def forward(self, x):
        return F.layernorm_lastdim(x, self.weight, self.bias, self.eps)


def zero_(param: Parameter):
    "Zero a parameter in place"
    param.data[...] = 0
    return param
