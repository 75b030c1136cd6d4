# purpose: segmentation losses
#   total = alpha * BCE + (1 - alpha) * soft Dice

import numpy as np

from medsamca.autodiff import functional as F
from medsamca.autodiff.tensor import as_tensor
from medsamca.errors import ConfigurationError
from medsamca.errors import DimensionError

DICE_SMOOTH = 1.0


def _target(logits, target) -> np.ndarray:
    y = np.asarray(getattr(target, "data", target), dtype=logits.dtype)
    if y.shape != logits.shape:
        raise DimensionError(
            "logits {0} and target {1} differ".format(logits.shape, y.shape))
    return y


def bce_loss(logits, target):
    "Mean stable binary cross-entropy over every pixel"
    logits = as_tensor(logits)
    return F.mean(F.bce_with_logits(logits, _target(logits, target)))


def soft_dice_loss(logits, target, eps: float = DICE_SMOOTH):
    """1 - (2 sum p*y + eps) / (sum p + sum y + eps) per image, averaged
    over the batch"""
    logits = as_tensor(logits)
    y = _target(logits, target)
    axes = tuple(range(1, logits.ndim))
    p = F.sigmoid(logits)
    inter = F.sum(F.mul(p, y), axis=axes)
    denom = F.add(F.sum(p, axis=axes), y.sum(axis=axes) + eps)
    score = F.div(F.add(F.mul(inter, 2.0), eps), denom)
    return F.sub(1.0, F.mean(score))


def total_loss(logits, target, alpha: float = 0.5):
    if not 0.0 <= alpha <= 1.0:
        raise ConfigurationError("alpha must lie in [0, 1], got {0}".format(alpha))
    if alpha == 1.0:
        return bce_loss(logits, target)
    if alpha == 0.0:
        return soft_dice_loss(logits, target)
    return F.add(F.mul(bce_loss(logits, target), alpha),
                 F.mul(soft_dice_loss(logits, target), 1.0 - alpha))
