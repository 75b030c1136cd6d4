# purpose: attention-enhanced feature fusion and the plain additive variant
#   W_attn = mean_k sigmoid(conv_k([F_CBR; F_SAM]))
#   W_adj  = W_attn * (1 - b) + b,  b = sigmoid(beta)
#   fused  = W_adj * F_SAM + (1 - W_adj) * F_CBR

import enum

import numpy as np

from medsamca.autodiff import functional as F
from medsamca.errors import ConfigurationError
from medsamca.errors import DimensionError
from medsamca.nn.module import Conv2d
from medsamca.nn.module import Module
from medsamca.nn.module import ModuleList
from medsamca.nn.module import Parameter


class FusionMode(str, enum.Enum):
    ATTEFFB = "AtteFFB"
    ADD = "Add"
    NONE = "None"

    @classmethod
    def parse(cls, value) -> "FusionMode":
        if isinstance(value, cls):
            return value
        for mode in cls:
            if str(value).lower() == mode.value.lower():
                return mode
        raise ConfigurationError(
            "unknown fusion mode {0!r}; expected AtteFFB, Add or None".format(value))


def adjust_weight(wAttn, b):
    "W_adj = W_attn (1 - b) + b"
    return F.add(F.mul(wAttn, F.sub(1.0, b)), b)


def fuse(fSam, fCbr, wAdj):
    "Convex per-pixel combination of the two streams"
    if fSam.shape != fCbr.shape:
        raise DimensionError(
            "fusion streams differ: {0} vs {1}".format(fSam.shape, fCbr.shape))
    n, _, h, w = fSam.shape
    if wAdj.shape != (n, 1, h, w):
        raise DimensionError(
            "fusion weight {0} does not match {1}".format(wAdj.shape, (n, 1, h, w)))
    return F.add(F.mul(wAdj, fSam), F.mul(F.sub(1.0, wAdj), fCbr))


def _checkPair(fCbrOri, fSam):
    if fCbrOri.ndim != 4 or fSam.ndim != 4 or fCbrOri.shape[0] != fSam.shape[0] \
            or fCbrOri.shape[2:] != fSam.shape[2:]:
        raise DimensionError(
            "CBR-Net stream {0} does not pair with decoder stream {1}".format(
                fCbrOri.shape, fSam.shape))


class AtteFFB(Module):
    """Channel alignment (1x1 conv), four 3x3 attention heads and a learnable
    bias beta (b = sigmoid(beta), starting at 0.5)."""

    def __init__(self, cbrChannels: int, samChannels: int, heads: int = 4,
                 rng=None):
        super().__init__()
        self.cbrChannels = cbrChannels
        self.samChannels = samChannels
        self.align = Conv2d(cbrChannels, samChannels, 1, 1, 0, rng=rng)
        self.heads = ModuleList(
            Conv2d(2 * samChannels, 1, 3, 1, 1, rng=rng) for _ in range(heads))
        self.beta = Parameter(np.zeros(1))

    def bias(self):
        "b as a tensor in (0, 1)"
        return F.sigmoid(self.beta)

    def biasValue(self) -> float:
        return float(1.0 / (1.0 + np.exp(-self.beta.data[0])))

    def attentionWeight(self, fCbr, fSam):
        if fCbr.shape != fSam.shape:
            raise DimensionError(
                "attention inputs differ: {0} vs {1}".format(fCbr.shape, fSam.shape))
        both = F.concat_channels([fCbr, fSam])
        total = None
        for head in self.heads:
            gate = F.sigmoid(head(both))
            total = gate if total is None else F.add(total, gate)
        return F.mul(total, 1.0 / len(self.heads))

    def forward(self, fSam, fCbrOri):
        _checkPair(fCbrOri, fSam)
        fCbr = self.align(fCbrOri)
        wAdj = adjust_weight(self.attentionWeight(fCbr, fSam), self.bias())
        return fuse(fSam, fCbr, wAdj)


class AddFusion(Module):
    "Aligned elementwise addition, the stand-in when attention fusion is ablated"

    def __init__(self, cbrChannels: int, samChannels: int, rng=None):
        super().__init__()
        self.align = Conv2d(cbrChannels, samChannels, 1, 1, 0, rng=rng)

    def forward(self, fSam, fCbrOri):
        _checkPair(fCbrOri, fSam)
        return F.add(fSam, self.align(fCbrOri))


def make_fusion(mode: FusionMode, cbrChannels: int, samChannels: int, rng=None):
    "Fusion module for one site, or None when fusion is switched off"
    mode = FusionMode.parse(mode)
    if mode is FusionMode.ATTEFFB:
        return AtteFFB(cbrChannels, samChannels, rng=rng)
    if mode is FusionMode.ADD:
        return AddFusion(cbrChannels, samChannels, rng=rng)
    return None
