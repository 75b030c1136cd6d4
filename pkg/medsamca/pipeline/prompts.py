# purpose: box prompts, extraction from masks and outward perturbation

from dataclasses import dataclass

import numpy as np

from medsamca.errors import ValidationError


@dataclass(frozen=True)
class BoxPrompt:
    "Pixel box [x0, x1) x [y0, y1) in the resized image frame"
    x0: int
    y0: int
    x1: int
    y1: int

    def validate(self, height: int, width: int) -> "BoxPrompt":
        if not (0 <= self.x0 < self.x1 <= width and 0 <= self.y0 < self.y1 <= height):
            raise ValidationError(
                "box {0} is degenerate or outside a {1}x{2} image".format(
                    self.astuple(), height, width))
        return self

    def astuple(self) -> tuple:
        return (self.x0, self.y0, self.x1, self.y1)

    def contains(self, other: "BoxPrompt") -> bool:
        return (self.x0 <= other.x0 and self.y0 <= other.y0
                and self.x1 >= other.x1 and self.y1 >= other.y1)

    @property
    def area(self) -> int:
        return max(0, self.x1 - self.x0) * max(0, self.y1 - self.y0)


def box_from_mask(mask) -> BoxPrompt:
    "Tightest box around the foreground of a 2-D mask"
    values = np.asarray(getattr(mask, "values", mask))
    rows = np.flatnonzero(values.any(axis=1))
    cols = np.flatnonzero(values.any(axis=0))
    if rows.size == 0:
        raise ValidationError("cannot derive a box from an empty mask")
    return BoxPrompt(int(cols[0]), int(rows[0]), int(cols[-1]) + 1, int(rows[-1]) + 1)


def max_perturbation(size: int) -> int:
    "round(20 * S / 1024), at least 1"
    return max(1, int(round(20 * size / 1024)))


def perturb_box(box: BoxPrompt, rng: np.random.Generator, size: int,
                pmax: int = None) -> BoxPrompt:
    """Move every edge outward by an independent integer drawn uniformly
    from [0, pmax], then clip to the image."""
    pmax = max_perturbation(size) if pmax is None else int(pmax)
    if pmax <= 0:
        return box
    dx0, dy0, dx1, dy1 = (int(v) for v in rng.integers(0, pmax + 1, size=4))
    return BoxPrompt(max(0, box.x0 - dx0), max(0, box.y0 - dy0),
                     min(size, box.x1 + dx1), min(size, box.y1 + dy1))
