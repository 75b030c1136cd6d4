# purpose: the full segmentation model
# ViT encoder (with adapters) and the convolutional side branch see the same
# image; the decoder fuses the side-branch pyramid into its stream.

import logging

import numpy as np

from medsamca.autodiff.tensor import as_tensor
from medsamca.errors import ConfigurationError
from medsamca.errors import DimensionError
from medsamca.model.atteffb import FusionMode
from medsamca.model.backbone import MaskDecoder
from medsamca.model.backbone import PromptEncoder
from medsamca.model.backbone import ViTMini
from medsamca.model.cbrnet import CBRNet
from medsamca.model.cbrnet import Feature4Align
from medsamca.nn.module import Module

logger = logging.getLogger(__name__)


class MedSAMCA(Module):
    def __init__(self, config):
        super().__init__()
        fusionMode = FusionMode.parse(config.fusion_mode)
        if fusionMode is not FusionMode.NONE and not config.cbrnet_enabled:
            raise ConfigurationError(
                "fusion mode {0} needs the CBR-Net branch".format(fusionMode.value))
        rng = np.random.default_rng(config.seed)
        self.imageShape = config.imageShape
        self.adaptersEnabled = bool(config.adapter_enabled)
        self.fusionMode = fusionMode
        self.vit = ViTMini(config.imageShape, config.d, config.L, config.heads, config.c,
                           patch=config.patch, adapters=config.adapter_enabled,
                           rng=rng)
        self.promptEncoder = PromptEncoder(config.d, rng=rng)
        self.cbrnet = None
        self.align4 = None
        if config.cbrnet_enabled:
            self.cbrnet = CBRNet(config.c, rng=rng)
            self.align4 = Feature4Align(config.c, rng=rng)
        self.decoder = MaskDecoder(config.c, config.d, config.heads,
                                   fusionMode, rng=rng)
        if getattr(config, "freeze_backbone", False):
            self.freezeBackbone()
        dtype = getattr(config, "dtype", "float64")
        if np.dtype(dtype) != np.float64:
            self.to(dtype)
        logger.debug("built model: %d parameters, %d trainable",
                     self.countParameters(False), self.countParameters(True))

    def freezeBackbone(self):
        """Leave trainable only the adapters, CBR-Net, the Feature-4 alignment
        and the fusion sites"""
        self.setTrainable(False)
        tuned = list(self.vit.adapters()) + list(self.decoder.fusionSites().values())
        if self.cbrnet is not None:
            tuned += [self.cbrnet, self.align4]
        for module in tuned:
            module.setTrainable(True)

    def encodeImage(self, images, adaptersEnabled: bool = None):
        if adaptersEnabled is None:
            adaptersEnabled = self.adaptersEnabled
        return self.vit(images, adaptersEnabled=adaptersEnabled)

    def forward(self, images, boxes, adaptersEnabled: bool = None):
        "images [N,3,H,W] and one box per image -> logits [N,1,H,W]"
        images = as_tensor(images, dtype=self.dtype)
        if images.dtype != self.dtype and not images.requires_grad:
            images = as_tensor(images.data.astype(self.dtype))
        if images.ndim != 4:
            raise DimensionError("images must be [N,3,H,W], got {0}".format(images.shape))
        n, _, h, w = images.shape
        if len(boxes) != n:
            raise DimensionError(
                "{0} boxes for a batch of {1}".format(len(boxes), n))
        globalFeat = self.encodeImage(images, adaptersEnabled)
        prompt = self.promptEncoder.encodeBatch(boxes, h, w)
        pyramid = f4Aligned = None
        if self.cbrnet is not None and self.fusionMode is not FusionMode.NONE:
            pyramid = self.cbrnet(images)
            f4Aligned = self.align4(pyramid.f4)
        densePe = self.promptEncoder.densePositional(globalFeat.shape[2],
                                                     globalFeat.shape[3])
        return self.decoder(globalFeat, f4Aligned, pyramid, prompt, densePe)

    def biasValues(self) -> dict:
        return self.decoder.biasValues()
