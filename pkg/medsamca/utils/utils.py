# some util functions shared by the pipeline, metrics and harness

import hashlib
import logging
import math
from fractions import Fraction

import numpy as np


LOG_FORMAT = "%(asctime)s %(levelname)s %(name)s: %(message)s"


def configure_logging(verbosity: int = 0):
    "Install a single stream handler on the package logger"
    level = logging.INFO
    if verbosity > 0:
        level = logging.DEBUG
    elif verbosity < 0:
        level = logging.WARNING
    logger = logging.getLogger("medsamca")
    logger.setLevel(level)
    if not logger.handlers:
        handler = logging.StreamHandler()
        handler.setFormatter(logging.Formatter(LOG_FORMAT))
        logger.addHandler(handler)
    return logger


def nearest_rank(percent: float, count: int) -> int:
    """1-based nearest rank of a percentile: ceil(percent/100 * count),
    clamped to [1, count]"""
    if count < 1:
        raise ValueError("nearest rank needs at least one value")
    frac = Fraction(str(percent)) * count / 100
    rank = math.ceil(frac)
    return min(max(rank, 1), count)


def nearest_rank_value(values: np.ndarray, percent: float):
    "Nearest-rank percentile of a flat array, no interpolation"
    flat = np.asarray(values).ravel()
    rank = nearest_rank(percent, flat.size)
    return np.partition(flat, rank - 1)[rank - 1]


def child_rng(seed: int, *keys: int) -> np.random.Generator:
    "Generator derived from (seed, keys...), independent of call order"
    return np.random.default_rng([int(seed)] + [int(k) for k in keys])


def digest_strings(items) -> str:
    "Short sha256 digest of an ordered sequence of strings"
    sha = hashlib.sha256()
    for item in items:
        sha.update(item.encode("utf-8"))
        sha.update(b"\0")
    return sha.hexdigest()[:16]


def moving_average(values, window: int):
    "Trailing moving average, shorter windows at the start"
    arr = np.asarray(values, dtype=float)
    out = np.empty_like(arr)
    for i in range(arr.size):
        out[i] = arr[max(0, i - window + 1): i + 1].mean()
    return out
