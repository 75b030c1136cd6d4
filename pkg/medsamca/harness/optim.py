# purpose: AdamW with decoupled weight decay

import logging
from dataclasses import dataclass
from dataclasses import field

import numpy as np

from medsamca.errors import CheckpointError
from medsamca.errors import NumericalError

logger = logging.getLogger(__name__)


@dataclass
class AdamWState:
    beta1: float = 0.9
    beta2: float = 0.999
    eps: float = 1e-8
    t: int = 0
    m: dict = field(default_factory=dict)
    v: dict = field(default_factory=dict)


def adamw_step(params, grads: dict, state: AdamWState, lr: float, wd: float):
    """One update of every (name, parameter) pair that has a gradient.

    theta <- theta - lr*wd*theta, then the bias-corrected Adam step."""
    for name, _ in params:
        g = grads.get(name)
        if g is not None and not np.all(np.isfinite(g)):
            raise NumericalError(
                "non-finite gradient for parameter {0} at step {1}".format(name, state.t + 1))
    state.t += 1
    c1 = 1.0 - state.beta1 ** state.t
    c2 = 1.0 - state.beta2 ** state.t
    for name, p in params:
        g = grads.get(name)
        if g is None:
            continue
        m = state.m.get(name)
        if m is None:
            m = state.m[name] = np.zeros_like(p.data)
            state.v[name] = np.zeros_like(p.data)
        v = state.v[name]
        m *= state.beta1
        m += (1.0 - state.beta1) * g
        v *= state.beta2
        v += (1.0 - state.beta2) * g * g
        p.data *= 1.0 - lr * wd
        p.data -= lr * (m / c1) / (np.sqrt(v / c2) + state.eps)


class AdamW:
    "Optimizer over a fixed list of (name, Parameter) pairs"

    def __init__(self, namedParams, lr: float = 1e-4, weightDecay: float = 0.01,
                 betas=(0.9, 0.999), eps: float = 1e-8):
        self.params = [(name, p) for name, p in namedParams if p.requires_grad]
        self.lr = lr
        self.weightDecay = weightDecay
        self.state = AdamWState(beta1=betas[0], beta2=betas[1], eps=eps)

    def zeroGrad(self):
        for _, p in self.params:
            p.zeroGrad()

    def step(self):
        grads = {name: p.grad for name, p in self.params}
        adamw_step(self.params, grads, self.state, self.lr, self.weightDecay)

    @property
    def parameterCount(self) -> int:
        return int(sum(p.size for _, p in self.params))

    def stateDict(self) -> dict:
        "Moment tensors keyed m.<param> / v.<param>"
        out = {}
        for name, _ in self.params:
            if name in self.state.m:
                out["m." + name] = self.state.m[name].copy()
                out["v." + name] = self.state.v[name].copy()
        return out

    def loadStateDict(self, arrays: dict, step: int):
        own = {name: p for name, p in self.params}
        self.state.m, self.state.v = {}, {}
        for key, value in arrays.items():
            kind, _, name = key.partition(".")
            if kind not in ("m", "v") or name not in own:
                raise CheckpointError("unexpected optimizer entry {0}".format(key))
            if value.shape != own[name].shape:
                raise CheckpointError(
                    "optimizer moment {0} has shape {1}, parameter has {2}".format(
                        key, value.shape, own[name].shape))
            target = self.state.m if kind == "m" else self.state.v
            target[name] = np.array(value, dtype=own[name].dtype)
        self.state.t = int(step)
