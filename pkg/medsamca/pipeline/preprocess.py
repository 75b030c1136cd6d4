# purpose: intensity preprocessing and resizing
#   CT:  clip to the window level +- width/2
#   MRI: clip to nearest-rank percentiles over the whole volume
#   then min-max to [0, 255] and resize every axial slice to S x S

import logging

import numpy as np

from medsamca.errors import ConfigurationError
from medsamca.errors import ValidationError
from medsamca.utils.utils import nearest_rank_value

logger = logging.getLogger(__name__)

CT_WIDTH = 400.0
CT_LEVEL = 40.0
MRI_LOW = 0.5
MRI_HIGH = 99.5


def window_ct(raw, width: float = CT_WIDTH, level: float = CT_LEVEL) -> np.ndarray:
    if width <= 0:
        raise ConfigurationError("window width must be positive, got {0}".format(width))
    return np.clip(np.asarray(raw, dtype=np.float64),
                   level - width / 2.0, level + width / 2.0)


def clip_percentiles(raw, lo: float = MRI_LOW, hi: float = MRI_HIGH) -> np.ndarray:
    raw = np.asarray(raw, dtype=np.float64)
    if raw.size == 0:
        raise ValidationError("cannot clip an empty array")
    if not 0 <= lo < hi <= 100:
        raise ConfigurationError(
            "percentiles must satisfy 0 <= lo < hi <= 100, got {0}, {1}".format(lo, hi))
    return np.clip(raw, nearest_rank_value(raw, lo), nearest_rank_value(raw, hi))


def minmax_normalize(x) -> np.ndarray:
    "Linear map of [min, max] onto [0, 255]; constant input gives zeros"
    x = np.asarray(x, dtype=np.float64)
    if x.size == 0:
        raise ValidationError("cannot normalize an empty array")
    lo, hi = x.min(), x.max()
    if hi == lo:
        return np.zeros_like(x)
    return (x - lo) / (hi - lo) * 255.0


def _sourceCoords(out: int, size: int) -> np.ndarray:
    "Half-pixel-centre source coordinates of each output index"
    return (np.arange(out) + 0.5) * (size / out) - 0.5


def resize(image, size: int, mode: str = "bilinear") -> np.ndarray:
    """Resize a 2-D array to size x size. bilinear for images, nearest for
    masks (values are copied, so masks stay binary)."""
    if size < 1:
        raise ConfigurationError("target size must be >= 1, got {0}".format(size))
    image = np.asarray(image)
    if image.ndim != 2 or image.size == 0:
        raise ValidationError("resize expects a non-empty 2-D array")
    h, w = image.shape
    if mode == "nearest":
        rows = np.minimum(((np.arange(size) + 0.5) * (h / size)).astype(np.int64), h - 1)
        cols = np.minimum(((np.arange(size) + 0.5) * (w / size)).astype(np.int64), w - 1)
        return image[rows[:, None], cols[None, :]]
    if mode != "bilinear":
        raise ConfigurationError("unknown resize mode {0!r}".format(mode))
    image = image.astype(np.float64)
    ys = np.clip(_sourceCoords(size, h), 0, h - 1)
    xs = np.clip(_sourceCoords(size, w), 0, w - 1)
    y0 = np.floor(ys).astype(np.int64)
    x0 = np.floor(xs).astype(np.int64)
    y1 = np.minimum(y0 + 1, h - 1)
    x1 = np.minimum(x0 + 1, w - 1)
    wy = (ys - y0)[:, None]
    wx = (xs - x0)[None, :]
    top = image[y0[:, None], x0[None, :]] * (1 - wx) + image[y0[:, None], x1[None, :]] * wx
    bottom = image[y1[:, None], x0[None, :]] * (1 - wx) + image[y1[:, None], x1[None, :]] * wx
    return top * (1 - wy) + bottom * wy


def clip_intensities(volume, modality: str, width: float = CT_WIDTH,
                     level: float = CT_LEVEL, lo: float = MRI_LOW,
                     hi: float = MRI_HIGH) -> np.ndarray:
    modality = modality.lower()
    if modality == "ct":
        return window_ct(volume, width, level)
    if modality == "mri":
        return clip_percentiles(volume, lo, hi)
    raise ConfigurationError("unknown modality {0!r}; expected ct or mri".format(modality))


def preprocess_volume(volume, modality: str, size: int, mask=None,
                      width: float = CT_WIDTH, level: float = CT_LEVEL,
                      lo: float = MRI_LOW, hi: float = MRI_HIGH):
    """Clip and normalize a [D, H, W] volume as a whole, then resize each
    axial slice. With a mask volume, slices whose mask is empty are dropped.

    Returns (images, masks, kept): lists of size x size arrays in [0, 255]
    and {0, 1}, and the indices of the kept slices. masks is None without a
    mask volume."""
    volume = np.asarray(volume, dtype=np.float64)
    if volume.ndim == 2:
        volume = volume[None]
    if volume.ndim != 3:
        raise ValidationError("expected a [D,H,W] volume, got {0}".format(volume.shape))
    scaled = minmax_normalize(clip_intensities(volume, modality, width, level, lo, hi))
    if mask is not None:
        mask = np.asarray(mask)
        if mask.ndim == 2:
            mask = mask[None]
        if mask.shape != volume.shape:
            raise ValidationError(
                "mask volume {0} does not match image volume {1}".format(
                    mask.shape, volume.shape))
    images, masks, kept = [], [], []
    for z in range(volume.shape[0]):
        if mask is not None:
            m = resize((mask[z] > 0).astype(np.uint8), size, "nearest")
            if not m.any():
                continue
            masks.append(m)
        images.append(resize(scaled[z], size, "bilinear"))
        kept.append(z)
    dropped = volume.shape[0] - len(kept)
    if dropped:
        logger.info("dropped %d of %d slices with empty masks", dropped, volume.shape[0])
    return images, (masks if mask is not None else None), kept


def to_channels(image255: np.ndarray) -> np.ndarray:
    "[S,S] in [0,255] -> [3,S,S] in [0,1]"
    return np.repeat((np.asarray(image255, dtype=np.float64) / 255.0)[None], 3, axis=0)
