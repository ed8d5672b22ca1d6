"""Reconstruction quality metrics on [0, 1] rasters.

Callers are responsible for clamping model outputs into [0, 1] before
scoring; the functions score what they are given (a silent clamp would
hide out-of-range reconstructions).
"""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np
from scipy import ndimage

from .segmentation import luminance
from .validation import as_image, check_same_shape

PSNR_CAP_DB = 99.0
SSIM_WINDOW = 11
SSIM_SIGMA = 1.5
_C1 = (0.01) ** 2  # stabilizers for unit dynamic range
_C2 = (0.03) ** 2


@dataclass(frozen=True)
class MetricReport:
    psnr: float
    ssim: float


def psnr(a, b) -> float:
    """Peak signal-to-noise ratio in dB against a unit peak.

    Identical inputs (MSE = 0) report the cap 99.0 dB instead of infinity.
    """
    a = as_image(a, name="a")
    b = as_image(b, name="b")
    check_same_shape(a, b, names="psnr inputs")
    mse = float(np.mean((a - b) ** 2))
    if mse == 0.0:
        return PSNR_CAP_DB
    return min(-10.0 * np.log10(mse), PSNR_CAP_DB)


def _gaussian_window() -> np.ndarray:
    half = SSIM_WINDOW // 2
    x = np.arange(-half, half + 1, dtype=np.float64)
    g = np.exp(-(x**2) / (2.0 * SSIM_SIGMA**2))
    return g / g.sum()


def _local_mean(plane: np.ndarray, window: np.ndarray) -> np.ndarray:
    half = SSIM_WINDOW // 2
    smooth = ndimage.correlate1d(plane, window, axis=0, mode="nearest")
    smooth = ndimage.correlate1d(smooth, window, axis=1, mode="nearest")
    return smooth[half:-half, half:-half]  # keep only fully interior windows


def ssim(a, b) -> float:
    """Mean structural similarity over valid (fully interior) 11x11
    Gaussian windows (sigma 1.5), computed on luminance.

    Rasters smaller than the window are rejected: there is no valid window
    to average. The result is clamped into [-1, 1] (float error in the
    local terms can overshoot by ~1e-16).
    """
    a = as_image(a, name="a")
    b = as_image(b, name="b")
    check_same_shape(a, b, names="ssim inputs")
    if a.shape[1] < SSIM_WINDOW or a.shape[2] < SSIM_WINDOW:
        raise ValueError(
            f"ssim: raster {a.shape[1]}x{a.shape[2]} smaller than the {SSIM_WINDOW}x{SSIM_WINDOW} window"
        )
    pa = luminance(a)
    pb = luminance(b)
    win = _gaussian_window()
    mu_a = _local_mean(pa, win)
    mu_b = _local_mean(pb, win)
    var_a = _local_mean(pa * pa, win) - mu_a * mu_a
    var_b = _local_mean(pb * pb, win) - mu_b * mu_b
    cov = _local_mean(pa * pb, win) - mu_a * mu_b
    score = ((2.0 * mu_a * mu_b + _C1) * (2.0 * cov + _C2)) / (
        (mu_a * mu_a + mu_b * mu_b + _C1) * (var_a + var_b + _C2)
    )
    return float(min(max(np.mean(score), -1.0), 1.0))


def evaluate_pair(a, b) -> MetricReport:
    return MetricReport(psnr=psnr(a, b), ssim=ssim(a, b))
