"""Deterministic raster resampling: bicubic upscale, block pooling, threshold.

The bicubic here is the Catmull-Rom cubic convolution (a = -0.5) with
clamp-to-edge borders and half-pixel center alignment: output pixel i maps
to source coordinate (i + 0.5) / factor - 0.5. The kernel is a partition of
unity, so constant rasters are preserved to float rounding.
"""

from __future__ import annotations

from functools import lru_cache

import numpy as np

from .masks import MaskStack
from .validation import as_image

_A = -0.5  # Catmull-Rom


def cubic_kernel(s: float) -> float:
    """Scalar cubic convolution kernel, support (-2, 2)."""
    s = abs(s)
    if s < 1.0:
        return ((_A + 2.0) * s - (_A + 3.0)) * s * s + 1.0
    if s < 2.0:
        return ((_A * s - 5.0 * _A) * s + 8.0 * _A) * s - 4.0 * _A
    return 0.0


@lru_cache(maxsize=64)
def _axis_weights(n_in: int, factor: int) -> np.ndarray:
    """Dense (n_in * factor, n_in) resampling matrix for one axis.

    Out-of-range taps clamp to the border sample, which accumulates their
    weight onto the edge row; row sums stay at exactly the kernel's
    partition sum.
    """
    n_out = n_in * factor
    w = np.zeros((n_out, n_in))
    for i in range(n_out):
        src = (i + 0.5) / factor - 0.5
        base = int(np.floor(src))
        frac = src - base
        for k in range(-1, 3):
            idx = min(max(base + k, 0), n_in - 1)
            w[i, idx] += cubic_kernel(frac - k)
    w.setflags(write=False)
    return w


def bicubic_upscale(img, factor: int) -> np.ndarray:
    """Upscale (C, H, W) -> (C, H*factor, W*factor). factor must be >= 1.

    factor = 1 reduces to the identity (the kernel hits 1 at offset 0 and
    0 at every other integer).
    """
    a = as_image(img)
    if not isinstance(factor, (int, np.integer)) or isinstance(factor, bool) or factor < 1:
        raise ValueError(f"bicubic_upscale: factor must be an integer >= 1, got {factor!r}")
    wh = _axis_weights(a.shape[1], int(factor))
    ww = _axis_weights(a.shape[2], int(factor))
    return np.matmul(np.matmul(wh, a), ww.T)


def avg_pool(stack: MaskStack, window: int) -> MaskStack:
    """Non-overlapping window x window block average over every mask.

    Output values land in [0, 1] and are generally fractional, so the
    result is flagged non-binary regardless of the input.
    """
    if not isinstance(stack, MaskStack):
        raise TypeError("avg_pool: expected a MaskStack")
    if not isinstance(window, (int, np.integer)) or isinstance(window, bool) or window < 1:
        raise ValueError(f"avg_pool: window must be an integer >= 1, got {window!r}")
    m, h, w = stack.data.shape
    if h % window or w % window:
        raise ValueError(f"avg_pool: raster {h}x{w} not divisible by window {window}")
    pooled = stack.data.reshape(m, h // window, window, w // window, window).mean(axis=(2, 4))
    return MaskStack(pooled, binary=False)


def threshold(stack: MaskStack, level: float) -> MaskStack:
    """Binarize with a strict comparison: value > level -> 1, else 0."""
    if not isinstance(stack, MaskStack):
        raise TypeError("threshold: expected a MaskStack")
    if not (0.0 < level < 1.0):
        raise ValueError(f"threshold: level must lie strictly inside (0, 1), got {level!r}")
    return MaskStack((stack.data > level).astype(np.float64), binary=True)
