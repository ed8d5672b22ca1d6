"""Mask stacks: the carrier type between segmentation, noise, and weights.

A stack holds M masks over one raster. Pre-pooling stacks carry fractional
values in [0, 1]; thresholded stacks are strictly binary and say so via the
``binary`` flag. M = 0 is legal everywhere and means "no semantic regions".
"""

from __future__ import annotations

from dataclasses import dataclass, field

import numpy as np


@dataclass(frozen=True)
class MaskStack:
    """Immutable stack of M masks, stored as a float64 (M, H, W) array."""

    data: np.ndarray
    binary: bool = True

    def __post_init__(self):
        a = np.array(self.data, dtype=np.float64)  # defensive copy
        if a.ndim != 3:
            raise ValueError(f"mask stack: expected (masks, height, width), got shape {a.shape}")
        if a.shape[1] < 1 or a.shape[2] < 1:
            raise ValueError(f"mask stack: empty raster {a.shape}")
        if not np.all(np.isfinite(a)):
            raise ValueError("mask stack: contains NaN or Inf")
        if a.size and (a.min() < 0.0 or a.max() > 1.0):
            raise ValueError("mask stack: values outside [0, 1]")
        if self.binary and a.size and not np.all((a == 0.0) | (a == 1.0)):
            raise ValueError("mask stack: flagged binary but holds fractional values")
        a.setflags(write=False)
        object.__setattr__(self, "data", a)

    @classmethod
    def empty(cls, height: int, width: int) -> "MaskStack":
        return cls(np.zeros((0, height, width)), binary=True)

    @property
    def count(self) -> int:
        return self.data.shape[0]

    @property
    def height(self) -> int:
        return self.data.shape[1]

    @property
    def width(self) -> int:
        return self.data.shape[2]

    def coverage(self) -> np.ndarray:
        """Per-pixel count of covering masks, shape (H, W)."""
        return self.data.sum(axis=0)
