# purpose: binary masks and the region metrics (Dice, IoU, pixel accuracy)

from dataclasses import dataclass
from typing import Optional

import numpy as np
from scipy.special import expit

from medsamca.errors import DimensionError
from medsamca.errors import ValidationError


class BinaryMask:
    "H x W array over {0, 1}"

    def __init__(self, values):
        arr = np.asarray(values)
        if arr.ndim != 2 or arr.size == 0:
            raise DimensionError("mask must be a non-empty 2-D array, got {0}".format(arr.shape))
        if arr.dtype != np.bool_ and not np.isin(arr, (0, 1)).all():
            raise ValidationError("mask values must be 0 or 1")
        self.values = arr.astype(np.uint8)

    @property
    def height(self) -> int:
        return self.values.shape[0]

    @property
    def width(self) -> int:
        return self.values.shape[1]

    @property
    def shape(self) -> tuple:
        return self.values.shape

    @property
    def area(self) -> int:
        return int(np.count_nonzero(self.values))

    def empty(self) -> bool:
        return self.area == 0

    def asbool(self) -> np.ndarray:
        return self.values.astype(bool)

    def __eq__(self, other):
        return isinstance(other, BinaryMask) and np.array_equal(self.values, other.values)

    def __repr__(self):
        return "BinaryMask({0}x{1}, area={2})".format(self.height, self.width, self.area)


def as_mask(mask) -> BinaryMask:
    return mask if isinstance(mask, BinaryMask) else BinaryMask(mask)


def binarize(logits, threshold: float = 0.5) -> list:
    "[N,1,H,W] logits -> one mask per image, 1 where sigmoid(logit) >= threshold"
    z = np.asarray(getattr(logits, "data", logits))
    if z.ndim != 4 or z.shape[1] != 1:
        raise DimensionError("binarize expects [N,1,H,W], got {0}".format(z.shape))
    fg = expit(z[:, 0]) >= threshold
    return [BinaryMask(m) for m in fg]


def _pair(a, b):
    a, b = as_mask(a), as_mask(b)
    if a.shape != b.shape:
        raise DimensionError("mask shapes differ: {0} vs {1}".format(a.shape, b.shape))
    return a.asbool(), b.asbool()


def confusion(a, b) -> tuple:
    "(TP, FP, FN, TN) with a the prediction and b the reference"
    pa, pb = _pair(a, b)
    tp = int(np.count_nonzero(pa & pb))
    fp = int(np.count_nonzero(pa & ~pb))
    fn = int(np.count_nonzero(~pa & pb))
    tn = pa.size - tp - fp - fn
    return tp, fp, fn, tn


def dice(a, b) -> float:
    tp, fp, fn, _ = confusion(a, b)
    denom = 2 * tp + fp + fn
    return 1.0 if denom == 0 else 2.0 * tp / denom


def iou(a, b) -> float:
    tp, fp, fn, _ = confusion(a, b)
    union = tp + fp + fn
    return 1.0 if union == 0 else tp / union


def acc(a, b) -> float:
    tp, fp, fn, tn = confusion(a, b)
    return (tp + tn) / (tp + fp + fn + tn)


@dataclass
class MetricsReport:
    dice: float
    iou: float
    acc: float
    hd95: Optional[float]  # None when exactly one mask is empty

    @property
    def hd95Defined(self) -> bool:
        return self.hd95 is not None


@dataclass
class MetricsSummary:
    "Macro means over a split; undefined HD95 cases are counted, not averaged"
    dice: float
    iou: float
    acc: float
    hd95: Optional[float]
    count: int
    undefinedHd95: int


def summarize(reports) -> MetricsSummary:
    reports = list(reports)
    if not reports:
        raise ValidationError("no per-image metrics to summarize")
    defined = [r.hd95 for r in reports if r.hd95 is not None]
    return MetricsSummary(
        dice=float(np.mean([r.dice for r in reports])),
        iou=float(np.mean([r.iou for r in reports])),
        acc=float(np.mean([r.acc for r in reports])),
        hd95=float(np.mean(defined)) if defined else None,
        count=len(reports),
        undefinedHd95=len(reports) - len(defined))
