# purpose: seeded synthetic lesion images
# 1-2 filled ellipses form the mask; the image is a two-level intensity map
# with a smooth bias field and Gaussian noise.

import logging

import numpy as np

from medsamca.errors import ConfigurationError
from medsamca.pipeline.dataset import Sample
from medsamca.pipeline.prompts import box_from_mask
from medsamca.utils.utils import child_rng

logger = logging.getLogger(__name__)

NOISE_SIGMA = 0.05
CONTRAST = (0.15, 0.5)
BIAS_AMPLITUDE = 0.1


def ellipse_mask(size: int, cy: float, cx: float, a: float, b: float,
                 theta: float) -> np.ndarray:
    yy, xx = np.mgrid[0:size, 0:size].astype(np.float64)
    dy, dx = yy - cy, xx - cx
    c, s = np.cos(theta), np.sin(theta)
    u = (dx * c + dy * s) / a
    v = (-dx * s + dy * c) / b
    return u * u + v * v <= 1.0


def axis_range(size: int) -> tuple:
    "Semi-axis bounds [S/8, S/3]"
    return size / 8.0, size / 3.0


def synthetic_sample(seed: int, index: int, size: int,
                     contrast=CONTRAST, noise: float = NOISE_SIGMA) -> Sample:
    rng = child_rng(seed, index)
    lo, hi = axis_range(size)
    mask = np.zeros((size, size), dtype=bool)
    for _ in range(int(rng.integers(1, 3))):
        cy, cx = rng.uniform(size / 4.0, 3.0 * size / 4.0, size=2)
        a, b = rng.uniform(lo, hi, size=2)
        mask |= ellipse_mask(size, cy, cx, a, b, rng.uniform(0.0, np.pi))
    delta = rng.uniform(*contrast)
    dark = rng.uniform(0.1, 0.4)
    if rng.random() < 0.5:
        fg, bg = dark, dark + delta
    else:
        fg, bg = dark + delta, dark
    yy, xx = np.mgrid[0:size, 0:size] / float(size)
    fy, fx = rng.uniform(0.3, 1.0, size=2)
    py, px = rng.uniform(0.0, 2 * np.pi, size=2)
    bias = BIAS_AMPLITUDE * np.sin(2 * np.pi * fx * xx + px) * np.cos(2 * np.pi * fy * yy + py)
    gray = np.where(mask, fg, bg) + bias + rng.normal(0.0, noise, (size, size))
    gray = np.clip(gray, 0.0, 1.0)
    mask = mask.astype(np.uint8)
    return Sample(np.repeat(gray[None], 3, axis=0), mask, box_from_mask(mask),
                  "synth-{0}-{1:05d}".format(seed, index))


def gen_synthetic(seed: int, n: int, size: int, contrast=CONTRAST,
                  noise: float = NOISE_SIGMA) -> list:
    """n samples; sample i depends only on (seed, i), so generation order
    does not matter"""
    if n < 1:
        raise ConfigurationError("need at least one sample, got {0}".format(n))
    if size % 16:
        raise ConfigurationError("image size {0} must be divisible by 16".format(size))
    if not 0 <= contrast[0] <= contrast[1]:
        raise ConfigurationError("bad contrast range {0}".format(contrast))
    samples = [synthetic_sample(seed, i, size, contrast, noise) for i in range(n)]
    logger.info("generated %d synthetic samples at %dx%d (seed %d)", n, size, size, seed)
    return samples
