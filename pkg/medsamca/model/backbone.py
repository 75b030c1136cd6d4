# purpose: miniature encoder / prompt encoder / mask decoder triad
# The ViT keeps the roles of the large segmentation backbone (patch tokens,
# adapter slots, 1/16 global feature) at a size that trains on a desk.

import math

import numpy as np

from medsamca.autodiff import functional as F
from medsamca.autodiff.tensor import Tensor
from medsamca.errors import DimensionError
from medsamca.model.atteffb import FusionMode
from medsamca.model.atteffb import make_fusion
from medsamca.nn.blocks import MultiHeadAttention
from medsamca.nn.blocks import TransformerBlock
from medsamca.nn.module import Conv2d
from medsamca.nn.module import LayerNorm
from medsamca.nn.module import Linear
from medsamca.nn.module import Module
from medsamca.nn.module import ModuleList
from medsamca.nn.module import Parameter
from medsamca.nn.module import _rng


def patchify(image, patch: int):
    "[N,C,H,W] -> [N, (H/P)(W/P), C*P*P], tokens in row-major patch order"
    n, c, h, w = image.shape
    gh, gw = h // patch, w // patch
    x = F.reshape(image, (n, c, gh, patch, gw, patch))
    x = F.transpose(x, (0, 2, 4, 1, 3, 5))
    return F.reshape(x, (n, gh * gw, c * patch * patch))


class ViTMini(Module):
    """Patch embedding + learned positional embedding + L transformer blocks
    + 1x1 neck to the backbone width c."""

    def __init__(self, imageSize, dim: int, depth: int, heads: int,
                 width: int, patch: int = 16, adapters: bool = True, rng=None):
        "imageSize is S for square inputs or (H, W)"
        super().__init__()
        if isinstance(imageSize, int):
            imageSize = (imageSize, imageSize)
        imageH, imageW = imageSize
        if imageH % patch or imageW % patch or min(imageH, imageW) < patch:
            raise DimensionError(
                "image size {0}x{1} not divisible by patch {2}".format(imageH, imageW, patch))
        rng = _rng(rng)
        self.imageShape = (imageH, imageW)
        self.patch = patch
        self.dim = dim
        self.gridShape = (imageH // patch, imageW // patch)
        # equivalent to a non-overlapping PxP conv with stride P
        self.patchEmbed = Linear(3 * patch * patch, dim, rng=rng)
        self.posEmbed = Parameter(np.zeros((self.gridShape[0] * self.gridShape[1], dim)))
        self.blocks = ModuleList(
            TransformerBlock(dim, heads, adapter=adapters, rng=rng)
            for _ in range(depth))
        self.neck = Conv2d(dim, width, 1, 1, 0, rng=rng)

    def tokenCount(self, height: int, width: int) -> int:
        return (height // self.patch) * (width // self.patch)

    def adapters(self) -> list:
        return [blk.adapter for blk in self.blocks if blk.adapter is not None]

    def forward(self, image, adaptersEnabled: bool = True):
        if image.ndim != 4 or image.shape[1] != 3:
            raise DimensionError("encoder expects [N,3,H,W], got {0}".format(image.shape))
        n, _, h, w = image.shape
        if h % self.patch or w % self.patch:
            raise DimensionError(
                "encoder input {0}x{1} not divisible by {2}".format(h, w, self.patch))
        if (h, w) != self.imageShape:
            raise DimensionError(
                "encoder was built for {0}x{1}, got {2}x{3}".format(*self.imageShape, h, w))
        tokens = F.add(self.patchEmbed(patchify(image, self.patch)), self.posEmbed)
        for blk in self.blocks:
            tokens = blk(tokens, adapterEnabled=adaptersEnabled)
        grid = F.reshape(F.transpose(tokens, (0, 2, 1)),
                         (n, self.dim) + self.gridShape)
        return self.neck(grid)


def normalized_corners(box, height: int, width: int) -> np.ndarray:
    "[[x0/W, y0/H], [x1/W, y1/H]]"
    box.validate(height, width)
    return np.array([[box.x0 / width, box.y0 / height],
                     [box.x1 / width, box.y1 / height]], dtype=np.float64)


class PromptEncoder(Module):
    """Box corners through a fixed random Fourier map plus a learned
    embedding per corner type. The Fourier matrix is a buffer, so it is
    stored with the checkpoint."""

    def __init__(self, dim: int, scale: float = 1.0, rng=None):
        super().__init__()
        if dim % 2:
            raise DimensionError("prompt embedding dim {0} must be even".format(dim))
        rng = _rng(rng)
        self.dim = dim
        self.registerBuffer("gaussian", rng.normal(0.0, scale, (2, dim // 2)))
        self.cornerEmbed = Parameter(rng.normal(0.0, 0.02, (2, dim)))

    def fourier(self, coords: np.ndarray) -> np.ndarray:
        "coords in [0,1]^2 (last axis) -> [..., dim]"
        proj = 2.0 * math.pi * ((2.0 * coords - 1.0) @ self.gaussian.data)
        return np.concatenate([np.sin(proj), np.cos(proj)], axis=-1)

    def densePositional(self, gridH: int, gridW: int) -> np.ndarray:
        "Encoding of every grid-cell centre, [gridH*gridW, dim]"
        ys = (np.arange(gridH) + 0.5) / gridH
        xs = (np.arange(gridW) + 0.5) / gridW
        yy, xx = np.meshgrid(ys, xs, indexing="ij")
        coords = np.stack([xx.ravel(), yy.ravel()], axis=-1)
        return self.fourier(coords).astype(self.dtype)

    def forward(self, box, height: int, width: int):
        "One box -> [2, dim]"
        pe = self.fourier(normalized_corners(box, height, width))
        return F.add(Tensor(pe.astype(self.dtype)), self.cornerEmbed)

    def encodeBatch(self, boxes, height: int, width: int):
        "List of boxes -> [N, 2, dim]"
        pe = np.stack([self.fourier(normalized_corners(b, height, width))
                       for b in boxes])
        return F.add(Tensor(pe.astype(self.dtype)), self.cornerEmbed)


class CrossAttentionBlock(Module):
    "Image tokens attend to the prompt tokens, then a residual MLP"

    def __init__(self, width: int, promptDim: int, heads: int, rng=None):
        super().__init__()
        self.norm1 = LayerNorm(width)
        self.posProj = Linear(promptDim, width, bias=False, rng=rng)
        self.attn = MultiHeadAttention(width, heads, contextDim=promptDim, rng=rng)
        self.norm2 = LayerNorm(width)
        self.mlp1 = Linear(width, 4 * width, rng=rng)
        self.mlp2 = Linear(4 * width, width, rng=rng)

    def forward(self, tokens, prompt, densePe: np.ndarray):
        queries = F.add(self.norm1(tokens), self.posProj(Tensor(densePe)))
        y = F.add(tokens, self.attn(queries, context=prompt))
        return F.add(y, self.mlp2(F.relu(self.mlp1(self.norm2(y)))))


class UpStage(Module):
    "nearest x2 -> 3x3 conv -> ReLU"

    def __init__(self, inChannels: int, outChannels: int, rng=None):
        super().__init__()
        self.conv = Conv2d(inChannels, outChannels, 3, 1, 1, rng=rng)

    def forward(self, x):
        return F.relu(self.conv(F.upsample_nearest2x(x)))


class MaskDecoder(Module):
    """Deep fusion at H/16, prompt cross-attention, then four x2 up-stages
    (c -> c -> c/2 -> c/4 -> c/8) with skip fusion of Features 3, 2, 1 at
    H/4, H/2 and H. Returns logits."""

    def __init__(self, width: int, promptDim: int, heads: int,
                 fusionMode=FusionMode.ATTEFFB, rng=None):
        super().__init__()
        rng = _rng(rng)
        c = width
        self.width = c
        self.fusionMode = FusionMode.parse(fusionMode)
        self.cross = CrossAttentionBlock(c, promptDim, heads, rng=rng)
        self.up1 = UpStage(c, c, rng=rng)
        self.up2 = UpStage(c, c // 2, rng=rng)
        self.up3 = UpStage(c // 2, c // 4, rng=rng)
        self.up4 = UpStage(c // 4, c // 8, rng=rng)
        self.head = Conv2d(c // 8, 1, 1, 1, 0, rng=rng)
        # fusion sites named after the pyramid level they inject
        self.fuse4 = make_fusion(self.fusionMode, c, c, rng=rng)
        self.fuse3 = make_fusion(self.fusionMode, c, c // 2, rng=rng)
        self.fuse2 = make_fusion(self.fusionMode, c // 2, c // 4, rng=rng)
        self.fuse1 = make_fusion(self.fusionMode, c // 4, c // 8, rng=rng)

    def fusionSites(self) -> dict:
        sites = {}
        for name in ("fuse4", "fuse3", "fuse2", "fuse1"):
            module = getattr(self, name)
            if module is not None:
                sites[name] = module
        return sites

    def biasValues(self) -> dict:
        "b per Atte-FFB site"
        return {name: site.biasValue() for name, site in self.fusionSites().items()
                if hasattr(site, "biasValue")}

    def forward(self, globalFeat, f4Aligned, pyramid, prompt, densePe: np.ndarray):
        if globalFeat.ndim != 4 or globalFeat.shape[1] != self.width:
            raise DimensionError(
                "decoder expects [N,{0},h,w], got {1}".format(self.width, globalFeat.shape))
        n, c, h, w = globalFeat.shape
        if prompt.ndim != 3 or prompt.shape[0] != n or prompt.shape[1] != 2:
            raise DimensionError(
                "prompt tokens {0} do not match batch {1}".format(prompt.shape, n))
        fusing = self.fusionMode is not FusionMode.NONE
        x = globalFeat
        if fusing:
            if f4Aligned is None or f4Aligned.shape != globalFeat.shape:
                raise DimensionError(
                    "aligned feature 4 {0} does not match global feature {1}".format(
                        None if f4Aligned is None else f4Aligned.shape,
                        globalFeat.shape))
            x = self.fuse4(x, f4Aligned)
        tokens = F.transpose(F.reshape(x, (n, c, h * w)), (0, 2, 1))
        tokens = self.cross(tokens, prompt, densePe)
        x = F.reshape(F.transpose(tokens, (0, 2, 1)), (n, c, h, w))
        x = self.up1(x)
        x = self.up2(x)
        if fusing:
            x = self.fuse3(x, pyramid.f3)
        x = self.up3(x)
        if fusing:
            x = self.fuse2(x, pyramid.f2)
        x = self.up4(x)
        if fusing:
            x = self.fuse1(x, pyramid.f1)
        return self.head(x)
