"""Region masks for semantic guidance.

The real pipeline plugs a promptable segmenter in here; this repository
ships a deterministic stand-in (luminance quantization + connected
components) so every downstream stage is exercised end to end without a
model checkpoint. Pre-computed masks can be loaded from disk instead.

The pipeline contract: masks are produced at 4x the working resolution,
block-averaged back down, and binarized with a strict threshold, so a
low-res pixel belongs to a region only when the region owns a clear
majority of its high-res footprint.
"""

from __future__ import annotations

from dataclasses import dataclass
from pathlib import Path

import numpy as np
from scipy import ndimage

from . import imageio
from .masks import MaskStack
from .resample import avg_pool, bicubic_upscale, threshold
from .validation import as_image

SCALE = 4  # high-res working factor between LR rasters and segmentation

_FOUR_CONNECTED = np.array([[0, 1, 0], [1, 1, 1], [0, 1, 0]], dtype=bool)


@dataclass(frozen=True)
class SegmenterConfig:
    """Knobs for mask production.

    mode "toy" segments the bicubic-upscaled input; mode "load" reads a
    mask directory (masks sized HxW pass through, 4Hx4W get pooled and
    re-thresholded, anything else is rejected).
    """

    mode: str = "toy"
    mask_dir: str | None = None
    quant_levels: int = 8
    min_region_px: int = 16
    max_masks: int = 256
    mask_threshold: float = 0.5

    def __post_init__(self):
        if self.mode not in ("toy", "load"):
            raise ValueError(f"segmenter mode must be 'toy' or 'load', got {self.mode!r}")
        if self.mode == "load" and not self.mask_dir:
            raise ValueError("segmenter mode 'load' requires mask_dir")
        if self.quant_levels < 2:
            raise ValueError(f"quant_levels must be >= 2, got {self.quant_levels}")
        if self.min_region_px < 1:
            raise ValueError(f"min_region_px must be >= 1, got {self.min_region_px}")
        if self.max_masks < 1:
            raise ValueError(f"max_masks must be >= 1, got {self.max_masks}")
        if not (0.0 < self.mask_threshold < 1.0):
            raise ValueError(f"mask_threshold must lie in (0, 1), got {self.mask_threshold}")


def luminance(img) -> np.ndarray:
    """(C, H, W) -> (H, W) luma; grayscale passes through."""
    a = as_image(img)
    if a.shape[0] == 1:
        return a[0]
    return 0.299 * a[0] + 0.587 * a[1] + 0.114 * a[2]


def toy_segment(img, cfg: SegmenterConfig = SegmenterConfig()) -> MaskStack:
    """Segment a raster into disjoint binary region masks.

    Luminance is quantized into ``quant_levels`` equal bands; each
    4-connected component of a band with at least ``min_region_px`` pixels
    becomes one mask. Masks are ordered by (size desc, first row-major
    pixel asc) and capped at ``max_masks``. Values outside [0, 1] are
    clipped before banding.
    """
    lum = np.clip(luminance(img), 0.0, 1.0)
    bands = np.minimum((lum * cfg.quant_levels).astype(np.int64), cfg.quant_levels - 1)

    regions = []  # (size, first_flat_index, bool mask)
    for band in np.unique(bands):
        labels, n = ndimage.label(bands == band, structure=_FOUR_CONNECTED)
        if n == 0:
            continue
        flat = labels.ravel()
        values, firsts = np.unique(flat, return_index=True)
        sizes = np.bincount(flat, minlength=n + 1)
        for value, first in zip(values, firsts):
            if value == 0:
                continue
            size = int(sizes[value])
            if size >= cfg.min_region_px:
                regions.append((size, int(first), labels == value))

    regions.sort(key=lambda r: (-r[0], r[1]))
    regions = regions[: cfg.max_masks]
    if not regions:
        return MaskStack.empty(lum.shape[0], lum.shape[1])
    return MaskStack(np.stack([r[2] for r in regions]).astype(np.float64), binary=True)


def mask_pipeline(img_lr, cfg: SegmenterConfig = SegmenterConfig()) -> MaskStack:
    """Produce binary masks at the LR raster size (H, W).

    toy mode: upscale x4, segment, pool x4 back down, strict-threshold.
    load mode: read masks from cfg.mask_dir; HxW masks pass through,
    4Hx4W masks are pooled + thresholded.
    """
    lr = as_image(img_lr, name="img_lr")
    h, w = lr.shape[1], lr.shape[2]
    if cfg.mode == "toy":
        hi = toy_segment(bicubic_upscale(lr, SCALE), cfg)
        if hi.count == 0:
            return MaskStack.empty(h, w)
        return threshold(avg_pool(hi, SCALE), cfg.mask_threshold)

    stack = imageio.load_mask_stack(Path(cfg.mask_dir), height=h, width=w)
    if stack.count == 0:
        return MaskStack.empty(h, w)
    if (stack.height, stack.width) == (h, w):
        return stack
    if (stack.height, stack.width) == (SCALE * h, SCALE * w):
        return threshold(avg_pool(stack, SCALE), cfg.mask_threshold)
    raise ValueError(
        f"mask dir {cfg.mask_dir}: masks are {stack.height}x{stack.width}, "
        f"expected {h}x{w} or {SCALE * h}x{SCALE * w}"
    )
