# purpose: the four-stage convolutional side branch and its feature pyramid

from dataclasses import dataclass

import numpy as np

from medsamca.autodiff import functional as F
from medsamca.autodiff.tensor import Tensor
from medsamca.errors import DimensionError
from medsamca.nn.blocks import CBAM
from medsamca.nn.blocks import ResidualBlock
from medsamca.nn.module import Module
from medsamca.nn.module import Parameter
from medsamca.nn.module import _rng


@dataclass
class FeaturePyramid:
    """Stage outputs of the side branch.

    f1: [N, c/4, H, W]; f2: [N, c/2, H/2, W/2];
    f3: [N, c, H/4, W/4]; f4: [N, 2c, H/8, W/8]"""
    f1: Tensor
    f2: Tensor
    f3: Tensor
    f4: Tensor

    def __iter__(self):
        return iter((self.f1, self.f2, self.f3, self.f4))

    def shapes(self) -> list:
        return [f.shape for f in self]


class CBRStage(ResidualBlock):
    "A residual block followed by CBAM; parameters sit directly under the stage"

    def __init__(self, inChannels: int, outChannels: int, stride: int, rng=None):
        super().__init__(inChannels, outChannels, stride, rng=rng)
        self.cbam = CBAM(self.outChannels, rng=rng)

    def forward(self, x):
        return self.cbam(super().forward(x))


class CBRNet(Module):
    """Stage 1 maps 3 -> c/4 at full resolution, stages 2-4 halve the
    resolution and double the channels."""

    strides = (1, 2, 4, 8)

    def __init__(self, width: int, inChannels: int = 3, rng=None):
        super().__init__()
        if width % 8:
            raise DimensionError(
                "CBR-Net width {0} must be divisible by 8".format(width))
        rng = _rng(rng)
        self.width = width
        self.inChannels = inChannels
        self.stage1 = CBRStage(inChannels, width // 4, 1, rng=rng)
        self.stage2 = CBRStage(width // 4, width // 2, 2, rng=rng)
        self.stage3 = CBRStage(width // 2, width, 2, rng=rng)
        self.stage4 = CBRStage(width, 2 * width, 2, rng=rng)

    def forward(self, image) -> FeaturePyramid:
        if image.ndim != 4 or image.shape[1] != self.inChannels:
            raise DimensionError(
                "CBR-Net expects [N,{0},H,W], got {1}".format(
                    self.inChannels, image.shape))
        h, w = image.shape[2], image.shape[3]
        if h % 8 or w % 8 or h < 16 or w < 16:
            raise DimensionError(
                "CBR-Net input {0}x{1} must be divisible by 8 and at least 16".format(h, w))
        f1 = self.stage1(image)
        f2 = self.stage2(f1)
        f3 = self.stage3(f2)
        f4 = self.stage4(f3)
        return FeaturePyramid(f1, f2, f3, f4)


def align_feature4(f4, weight, bias=None) -> Tensor:
    "Stride-2 3x3 conv taking Feature 4 from [2c, H/8] to [c, H/16]"
    if f4.ndim != 4 or f4.shape[2] % 2 or f4.shape[3] % 2:
        raise DimensionError(
            "feature 4 spatial size {0} must be even".format(f4.shape[2:]))
    return F.conv2d(f4, weight, bias, stride=2, padding=1)


class Feature4Align(Module):
    def __init__(self, width: int, rng=None):
        super().__init__()
        fanIn = 2 * width * 9
        self.weight = Parameter(_rng(rng).normal(
            0.0, np.sqrt(2.0 / fanIn), (width, 2 * width, 3, 3)))
        self.bias = Parameter(np.zeros(width))

    def forward(self, f4):
        return align_feature4(f4, self.weight, self.bias)
