"""Overlapping crop-pair sampling for contrastive views.

Random cropping is the only input augmentation; the perturbed series reuses
the exact crop indices of the raw series so the four views stay aligned.
All draws come from an explicit generator, one per worker.
"""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from .errors import InvalidArgumentError

MIN_OVERLAP_FLOOR = 2


@dataclass(frozen=True)
class CropPair:
    """Two overlapping segments [a1, b1) and [a2, b2) of a length-M series.

    Invariants: 0 <= a1 <= a2 < b1 <= b2 <= M and b1 - a2 >= min_overlap.
    The shared overlap window is [a2, b1).
    """

    a1: int
    a2: int
    b1: int
    b2: int

    @property
    def overlap_length(self) -> int:
        return self.b1 - self.a2

    def validate(self, m: int, min_overlap: int) -> None:
        ok = (
            0 <= self.a1 <= self.a2 < self.b1 <= self.b2 <= m
            and self.overlap_length >= min_overlap
        )
        if not ok:
            raise InvalidArgumentError(f"invalid crop pair {self} for length {m}")


def sample_crop_pair(m: int, min_overlap: int, rng: np.random.Generator) -> CropPair:
    """Draw a crop pair with overlap of at least ``min_overlap``.

    Draw order (fixed so stored seeds stay portable): first the pair
    (a2, b1), uniform over all pairs with b1 - a2 >= min_overlap; then
    a1 uniform on [0, a2]; then b2 uniform on [b1, M].
    """
    if min_overlap < MIN_OVERLAP_FLOOR:
        raise InvalidArgumentError(f"min_overlap must be >= {MIN_OVERLAP_FLOOR}, got {min_overlap}")
    if m < min_overlap:
        raise InvalidArgumentError(f"series length {m} shorter than min_overlap {min_overlap}")
    span = m - min_overlap + 1
    total = span * (span + 1) // 2  # sum over gap g of (M - g + 1) placements
    r = int(rng.integers(0, total))
    for gap in range(min_overlap, m + 1):
        count = m - gap + 1
        if r < count:
            a2 = r
            b1 = a2 + gap
            break
        r -= count
    a1 = int(rng.integers(0, a2 + 1))
    b2 = int(rng.integers(b1, m + 1))
    cp = CropPair(a1=a1, a2=a2, b1=b1, b2=b2)
    cp.validate(m, min_overlap)
    return cp


@dataclass(frozen=True)
class Views:
    """The four encoder inputs plus overlap offsets inside each crop."""

    x_p: np.ndarray
    x_q: np.ndarray
    xt_p: np.ndarray
    xt_q: np.ndarray
    overlap_in_p: tuple[int, int]  # [start, end) of the overlap inside crop 1
    overlap_in_q: tuple[int, int]  # [start, end) of the overlap inside crop 2


def make_views(x: np.ndarray, x_tilde: np.ndarray, cp: CropPair) -> Views:
    """Slice the raw and perturbed series with one shared crop pair.

    Works on a single series (M, N) or a batch (B, M, N); time is always the
    second-to-last axis.
    """
    if x.shape != x_tilde.shape:
        raise InvalidArgumentError(
            f"raw/perturbed shape mismatch: {x.shape} vs {x_tilde.shape}"
        )
    time_axis = x.ndim - 2
    if time_axis < 0:
        raise InvalidArgumentError(f"expected (M, N) or (B, M, N), got shape {x.shape}")
    m = x.shape[time_axis]
    cp.validate(m, MIN_OVERLAP_FLOOR)

    def cut(arr, lo, hi):
        idx = tuple(
            slice(lo, hi) if d == time_axis else slice(None) for d in range(arr.ndim)
        )
        return arr[idx]

    return Views(
        x_p=cut(x, cp.a1, cp.b1),
        x_q=cut(x, cp.a2, cp.b2),
        xt_p=cut(x_tilde, cp.a1, cp.b1),
        xt_q=cut(x_tilde, cp.a2, cp.b2),
        overlap_in_p=(cp.a2 - cp.a1, cp.b1 - cp.a1),
        overlap_in_q=(0, cp.b1 - cp.a2),
    )
