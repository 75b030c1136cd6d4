# purpose: reusable learned blocks
# residual downsampling block, CBAM attention, adapter, attention and the
# pre-norm transformer block

import math

from medsamca.autodiff import functional as F
from medsamca.errors import ConfigurationError
from medsamca.errors import DimensionError
from medsamca.nn.module import Conv2d
from medsamca.nn.module import LayerNorm
from medsamca.nn.module import Linear
from medsamca.nn.module import Module
from medsamca.nn.module import zero_


class ResidualBlock(Module):
    """conv3x3(stride s) -> ReLU -> conv3x3, plus a 1x1 shortcut when the
    shape changes. Stride 2 doubles the channel count."""

    def __init__(self, inChannels: int, outChannels: int = None,
                 stride: int = 1, rng=None):
        super().__init__()
        if stride not in (1, 2):
            raise ConfigurationError("residual stride must be 1 or 2")
        if stride == 2:
            if outChannels not in (None, 2 * inChannels):
                raise ConfigurationError(
                    "stride-2 block maps {0} to {1} channels, not {2}".format(
                        inChannels, 2 * inChannels, outChannels))
            outChannels = 2 * inChannels
        elif outChannels is None:
            outChannels = inChannels
        self.inChannels = inChannels
        self.outChannels = outChannels
        self.stride = stride
        self.conv1 = Conv2d(inChannels, outChannels, 3, stride, 1, rng=rng)
        self.conv2 = Conv2d(outChannels, outChannels, 3, 1, 1, rng=rng)
        self.shortcut = None
        if inChannels != outChannels or stride == 2:
            self.shortcut = Conv2d(inChannels, outChannels, 1, stride, 0, rng=rng)

    def forward(self, x):
        h, w = x.shape[2], x.shape[3]
        if h % self.stride or w % self.stride:
            raise DimensionError(
                "residual block input {0}x{1} not divisible by {2}".format(
                    h, w, self.stride))
        out = self.conv2(F.relu(self.conv1(x)))
        skip = x if self.shortcut is None else self.shortcut(x)
        return F.add(out, skip)


class CBAM(Module):
    "Channel attention then spatial attention"

    def __init__(self, channels: int, reduction: int = None,
                 spatialKernel: int = 7, rng=None):
        super().__init__()
        if reduction is None:
            reduction = 8 if channels >= 8 else min(4, channels)
        if channels % reduction:
            raise ConfigurationError(
                "CBAM channels {0} not divisible by reduction {1}".format(
                    channels, reduction))
        self.channels = channels
        self.reduction = reduction
        hidden = channels // reduction
        # shared by the average- and max-pooled descriptors
        self.mlp1 = Linear(channels, hidden, rng=rng)
        self.mlp2 = Linear(hidden, channels, rng=rng)
        self.spatial = Conv2d(2, 1, spatialKernel, 1, spatialKernel // 2, rng=rng)

    def channelMlp(self, descriptor):
        return self.mlp2(F.relu(self.mlp1(descriptor)))

    def channelGate(self, x):
        "Mc(x): [N,C,1,1] in (0,1)"
        n, c = x.shape[0], x.shape[1]
        avg = F.reshape(F.global_avg_pool(x), (n, c))
        mx = F.reshape(F.global_max_pool(x), (n, c))
        gate = F.sigmoid(F.add(self.channelMlp(avg), self.channelMlp(mx)))
        return F.reshape(gate, (n, c, 1, 1))

    def spatialGate(self, x):
        "Ms(x): [N,1,H,W] in (0,1)"
        pooled = F.concat_channels([F.mean(x, axis=1, keepdims=True),
                                    F.max_reduce(x, axis=1, keepdims=True)])
        return F.sigmoid(self.spatial(pooled))

    def forward(self, x):
        if x.ndim != 4 or x.shape[1] != self.channels:
            raise DimensionError(
                "CBAM expects {0} channels, got {1}".format(self.channels, x.shape))
        refined = F.mul(x, self.channelGate(x))
        return F.mul(refined, self.spatialGate(refined))


class Adapter(Module):
    """Bottleneck d -> ceil(d/4) -> d with a residual add. The up-projection
    starts at zero, so a fresh adapter is the identity."""

    def __init__(self, dim: int, ratio: float = 0.25, rng=None):
        super().__init__()
        hidden = int(math.ceil(dim * ratio))
        self.down = Linear(dim, hidden, rng=rng)
        self.up = Linear(hidden, dim, rng=rng)
        zero_(self.up.weight)
        zero_(self.up.bias)

    def forward(self, x):
        return F.add(x, self.up(F.relu(self.down(x))))


class MultiHeadAttention(Module):
    "Scaled dot-product attention; keys/values come from context when given"

    def __init__(self, dim: int, heads: int, contextDim: int = None, rng=None):
        super().__init__()
        if dim % heads:
            raise ConfigurationError(
                "embed dim {0} not divisible by {1} heads".format(dim, heads))
        contextDim = dim if contextDim is None else contextDim
        self.dim = dim
        self.heads = heads
        self.query = Linear(dim, dim, rng=rng)
        self.key = Linear(contextDim, dim, rng=rng)
        self.value = Linear(contextDim, dim, rng=rng)
        self.out = Linear(dim, dim, rng=rng)

    def forward(self, x, context=None):
        if x.ndim != 3 or x.shape[-1] != self.dim:
            raise DimensionError(
                "attention expects [N,T,{0}], got {1}".format(self.dim, x.shape))
        context = x if context is None else context
        n, t, d = x.shape
        s = context.shape[1]
        h = self.heads
        dk = d // h
        q = F.transpose(F.reshape(self.query(x), (n, t, h, dk)), (0, 2, 1, 3))
        k = F.transpose(F.reshape(self.key(context), (n, s, h, dk)), (0, 2, 3, 1))
        v = F.transpose(F.reshape(self.value(context), (n, s, h, dk)), (0, 2, 1, 3))
        scores = F.mul(F.matmul(q, k), 1.0 / math.sqrt(dk))
        mixed = F.matmul(F.softmax_lastdim(scores), v)
        mixed = F.reshape(F.transpose(mixed, (0, 2, 1, 3)), (n, t, d))
        return self.out(mixed)


class TransformerBlock(Module):
    """Pre-norm block: y = x + MHSA(LN(x)); z = Adapter(y) (when enabled);
    out = z + MLP(LN(z))"""

    def __init__(self, dim: int, heads: int, adapter: bool = True,
                 mlpRatio: int = 4, rng=None):
        super().__init__()
        self.norm1 = LayerNorm(dim)
        self.attn = MultiHeadAttention(dim, heads, rng=rng)
        self.adapter = Adapter(dim, rng=rng) if adapter else None
        self.norm2 = LayerNorm(dim)
        self.mlp1 = Linear(dim, mlpRatio * dim, rng=rng)
        self.mlp2 = Linear(mlpRatio * dim, dim, rng=rng)

    def forward(self, tokens, adapterEnabled: bool = True):
        y = F.add(tokens, self.attn(self.norm1(tokens)))
        z = y
        if adapterEnabled and self.adapter is not None:
            z = self.adapter(y)
        return F.add(z, self.mlp2(F.relu(self.mlp1(self.norm2(z)))))
