# purpose: boundary extraction and the 95th-percentile Hausdorff distance
# Both backends work on squared integer distances and take the square root
# last, so they agree exactly.

import numpy as np

from medsamca.metrics.overlap import _pair
from medsamca.metrics.overlap import as_mask
from medsamca.utils.utils import nearest_rank_value

PERCENT = 95


def boundary_mask(mask) -> np.ndarray:
    """Foreground pixels with a 4-neighbour that is background; pixels
    outside the image count as background."""
    fg = as_mask(mask).asbool()
    padded = np.pad(fg, 1, constant_values=False)
    interior = (padded[:-2, 1:-1] & padded[2:, 1:-1]
                & padded[1:-1, :-2] & padded[1:-1, 2:])
    return fg & ~interior


def boundary(mask) -> np.ndarray:
    "Boundary points as a [K, 2] array of (row, col) in row-major order"
    return np.argwhere(boundary_mask(mask))


def _directedSquared(src: np.ndarray, dst: np.ndarray) -> np.ndarray:
    "For each src point, the squared distance to its nearest dst point"
    diff = src[:, None, :].astype(np.int64) - dst[None, :, :].astype(np.int64)
    return (diff * diff).sum(axis=-1).min(axis=1)


def _combine(sqAB: np.ndarray, sqBA: np.ndarray) -> float:
    worst = max(nearest_rank_value(sqAB, PERCENT), nearest_rank_value(sqBA, PERCENT))
    return float(np.sqrt(float(worst)))


def hd95(a, b):
    """All-pairs HD95. 0.0 when both masks are empty, None when exactly
    one is."""
    _pair(a, b)
    sa, sb = boundary(a), boundary(b)
    if len(sa) == 0 and len(sb) == 0:
        return 0.0
    if len(sa) == 0 or len(sb) == 0:
        return None
    return _combine(_directedSquared(sa, sb), _directedSquared(sb, sa))


def _lowerEnvelope(f: np.ndarray) -> np.ndarray:
    "1-D squared distance transform of sampled function f (inf = no site)"
    n = f.size
    out = np.full(n, np.inf)
    sites = np.flatnonzero(np.isfinite(f))
    if sites.size == 0:
        return out
    v = np.empty(sites.size, dtype=np.int64)
    z = np.empty(sites.size + 1)
    k = 0
    v[0] = sites[0]
    z[0] = -np.inf
    z[1] = np.inf
    for q in sites[1:]:
        while True:
            p = v[k]
            s = ((f[q] + q * q) - (f[p] + p * p)) / (2.0 * (q - p))
            if s <= z[k]:
                k -= 1
                continue
            break
        k += 1
        v[k] = q
        z[k] = s
        z[k + 1] = np.inf
    k = 0
    for q in range(n):
        while z[k + 1] < q:
            k += 1
        p = v[k]
        out[q] = (q - p) * (q - p) + f[p]
    return out


def squared_edt(sites: np.ndarray) -> np.ndarray:
    """Exact squared Euclidean distance from every pixel to the nearest True
    pixel of sites (two separable passes). inf when there are no sites."""
    sites = np.asarray(sites, dtype=bool)
    f = np.where(sites, 0.0, np.inf)
    cols = np.empty_like(f)
    for j in range(f.shape[1]):
        cols[:, j] = _lowerEnvelope(f[:, j])
    out = np.empty_like(f)
    for i in range(f.shape[0]):
        out[i, :] = _lowerEnvelope(cols[i, :])
    return out


def hd95_fast(a, b):
    "Same contract as hd95, via distance transforms of each boundary"
    _pair(a, b)
    ba, bb = boundary_mask(a), boundary_mask(b)
    emptyA, emptyB = not ba.any(), not bb.any()
    if emptyA and emptyB:
        return 0.0
    if emptyA or emptyB:
        return None
    sqAB = squared_edt(bb)[ba].astype(np.int64)
    sqBA = squared_edt(ba)[bb].astype(np.int64)
    return _combine(sqAB, sqBA)
