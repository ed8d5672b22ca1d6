"""Input validation helpers shared by every public entry point.

All rasters in this package are float64 arrays shaped (channels, height,
width) with 1 or 3 channels and finite values. Validation happens once at
the public boundary; internal code trusts the arrays it is handed.
"""

from __future__ import annotations

import numpy as np

SUPPORTED_CHANNELS = (1, 3)


def as_image(arr, *, name: str = "image") -> np.ndarray:
    """Coerce ``arr`` to a validated float64 (C, H, W) raster.

    A 2-d array is promoted to a single-channel raster. Raises ValueError
    for anything that is not a finite 1- or 3-channel image.
    """
    a = np.asarray(arr, dtype=np.float64)
    if a.ndim == 2:
        a = a[np.newaxis]
    if a.ndim != 3:
        raise ValueError(f"{name}: expected (channels, height, width), got shape {a.shape}")
    c, h, w = a.shape
    if c not in SUPPORTED_CHANNELS:
        raise ValueError(f"{name}: expected 1 or 3 channels, got {c}")
    if h < 1 or w < 1:
        raise ValueError(f"{name}: empty raster {a.shape}")
    if not np.all(np.isfinite(a)):
        raise ValueError(f"{name}: contains NaN or Inf")
    return a


def check_same_shape(a: np.ndarray, b: np.ndarray, *, names: str = "inputs") -> None:
    if a.shape != b.shape:
        raise ValueError(f"{names}: shape mismatch {a.shape} vs {b.shape}")


def check_positive_int(value, *, name: str) -> int:
    if not isinstance(value, (int, np.integer)) or isinstance(value, bool) or value < 1:
        raise ValueError(f"{name}: expected a positive integer, got {value!r}")
    return int(value)


def clamp01(arr: np.ndarray) -> np.ndarray:
    """Clamp into [0, 1]. Used before quantization and before segmenting
    model outputs, never silently inside numeric ops."""
    return np.clip(arr, 0.0, 1.0)
