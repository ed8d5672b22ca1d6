"""Diffusion schedules, scalar and pixel-wise.

The base schedule moves the residual transfer rate eta_t monotonically
from eta_min (t = 1) to eta_max (t = T) along a geometric path in
sqrt(eta) whose progress variable ((t-1)/(T-1)) is warped by an exponent
``power`` (small power front-loads the early steps).

The semantic weight map W, in [0, 1] per pixel, then perturbs that scalar
schedule per pixel: transfer is accelerated by (1 + gain * W) while the
noise strength kappa is damped by (1 - gain * W), so strongly covered
regions trade noise amplitude for faster residual transport.
"""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from .masks import MaskStack

ETA_CAP = 1.0 - 1e-6  # optional ceiling for the adjusted transfer rate


@dataclass(frozen=True)
class ScheduleConfig:
    num_steps: int = 15
    eta_min: float = 0.0016
    eta_max: float = 0.9999
    power: float = 0.3
    kappa: float = 2.0
    semantic_gain: float = 0.2
    clamp_eta: bool = False

    def __post_init__(self):
        if not isinstance(self.num_steps, (int, np.integer)) or isinstance(self.num_steps, bool):
            raise ValueError(f"num_steps must be an integer, got {self.num_steps!r}")
        if self.num_steps < 1:
            raise ValueError(f"num_steps must be >= 1, got {self.num_steps}")
        if not (0.0 < self.eta_min < self.eta_max <= 1.0):
            raise ValueError(
                f"need 0 < eta_min < eta_max <= 1, got eta_min={self.eta_min}, eta_max={self.eta_max}"
            )
        if self.power <= 0.0:
            raise ValueError(f"power must be > 0, got {self.power}")
        if self.kappa <= 0.0:
            raise ValueError(f"kappa must be > 0, got {self.kappa}")
        if not (0.0 <= self.semantic_gain < 1.0):
            raise ValueError(f"semantic_gain must lie in [0, 1), got {self.semantic_gain}")


def build_schedule(cfg: ScheduleConfig) -> np.ndarray:
    """Base transfer rates, shape (T,), strictly increasing, index t-1.

    sqrt(eta_t) = sqrt(eta_min) * (sqrt(eta_max) / sqrt(eta_min)) ** f(t)
    with f(t) = ((t - 1) / (T - 1)) ** power. T = 1 collapses to the
    single terminal rate. Endpoints are pinned to eta_min / eta_max
    exactly rather than trusting sqrt round trips.
    """
    if cfg.num_steps == 1:
        return np.array([cfg.eta_max])
    t = np.arange(cfg.num_steps, dtype=np.float64)
    frac = (t / (cfg.num_steps - 1)) ** cfg.power
    root = np.sqrt(cfg.eta_min) * (np.sqrt(cfg.eta_max) / np.sqrt(cfg.eta_min)) ** frac
    etas = root**2
    etas[0] = cfg.eta_min
    etas[-1] = cfg.eta_max
    if not np.all(np.diff(etas) > 0.0):
        raise ValueError("schedule collapsed: eta_t not strictly increasing (num_steps too large?)")
    return etas


def compute_weight_map(masks: MaskStack) -> np.ndarray:
    """Per-pixel coverage count scaled by the max count, shape (H, W).

    All-zero coverage (including M = 0) yields the all-zero map. Otherwise
    the most-covered pixel maps to exactly 1.0.
    """
    if not isinstance(masks, MaskStack):
        raise TypeError("compute_weight_map: expected a MaskStack")
    if not masks.binary:
        raise ValueError("compute_weight_map: masks must be binary")
    cover = masks.coverage()
    peak = float(cover.max())
    if peak == 0.0:
        return np.zeros_like(cover)
    return cover / peak


def adjust(eta_t, kappa: float, weight_map: np.ndarray, gain: float, clamp: bool = False):
    """One scheduled step adjusted per pixel.

    Returns (eta_new, kappa_new), each shaped like ``weight_map``:
    eta_new = eta_t * (1 + gain * W), optionally capped just below 1;
    kappa_new = kappa * (1 - gain * W), independent of t.
    """
    w = np.asarray(weight_map, dtype=np.float64)
    eta_new = eta_t * (1.0 + gain * w)
    if clamp:
        eta_new = np.minimum(eta_new, ETA_CAP)
    kappa_new = kappa * (1.0 - gain * w)
    return eta_new, kappa_new


def reverse_coeffs(eta_prev, eta_t):
    """Deterministic reverse-step mixing coefficients (k, m, j).

    x_{t-1} = k * x0_hat + m * x_t + j * y with
      k = 1 - eta_prev + sqrt(eta_prev * eta_t) - sqrt(eta_prev / eta_t)
      m = sqrt(eta_prev / eta_t)
      j = eta_prev - sqrt(eta_prev * eta_t)

    The three sum to 1 identically. eta_prev = 0 is the chain-start limit
    and gives (1, 0, 0): the step reduces to trusting x0_hat outright.
    Inputs broadcast; both may be scalars or fields.
    """
    ep = np.asarray(eta_prev, dtype=np.float64)
    et = np.asarray(eta_t, dtype=np.float64)
    if np.any(et <= 0.0):
        raise ValueError("reverse_coeffs: eta_t must be > 0")
    if np.any(ep < 0.0):
        raise ValueError("reverse_coeffs: eta_prev must be >= 0")
    if np.any(ep > et):
        raise ValueError("reverse_coeffs: eta_prev must not exceed eta_t")
    m = np.sqrt(ep / et)
    k = 1.0 - ep + np.sqrt(ep * et) - m
    j = ep - np.sqrt(ep * et)
    return k, m, j


@dataclass(frozen=True)
class PixelSchedule:
    """Fully materialized pixel-wise schedule for one raster.

    Arrays are indexed by t - 1. Row 0 of the coefficient fields is the
    eta_prev = 0 limit (1, 0, 0); rows t >= 2 mix x0_hat, x_t and y.
    """

    base_etas: np.ndarray  # (T,)
    eta_new: np.ndarray  # (T, H, W)
    kappa_new: np.ndarray  # (H, W)
    coeff_k: np.ndarray  # (T, H, W)
    coeff_m: np.ndarray  # (T, H, W)
    coeff_j: np.ndarray  # (T, H, W)

    @property
    def num_steps(self) -> int:
        return self.base_etas.shape[0]

    def _check_t(self, t: int) -> int:
        if not (1 <= t <= self.num_steps):
            raise ValueError(f"step t={t} outside 1..{self.num_steps}")
        return int(t)

    def eta_field(self, t: int) -> np.ndarray:
        return self.eta_new[self._check_t(t) - 1]

    def coeffs(self, t: int):
        i = self._check_t(t) - 1
        return self.coeff_k[i], self.coeff_m[i], self.coeff_j[i]


def build_pixel_schedule(cfg: ScheduleConfig, weight_map: np.ndarray) -> PixelSchedule:
    """Expand the base schedule into per-pixel fields under a weight map."""
    w = np.asarray(weight_map, dtype=np.float64)
    if w.ndim != 2:
        raise ValueError(f"weight map must be 2-d, got shape {w.shape}")
    if w.size and (w.min() < 0.0 or w.max() > 1.0):
        raise ValueError("weight map values must lie in [0, 1]")
    etas = build_schedule(cfg)
    rows = [adjust(eta, cfg.kappa, w, cfg.semantic_gain, cfg.clamp_eta) for eta in etas]
    eta_new = np.stack([r[0] for r in rows])
    kappa_new = rows[0][1]
    prev = np.concatenate([np.zeros_like(eta_new[:1]), eta_new[:-1]])
    k, m, j = reverse_coeffs(prev, eta_new)
    return PixelSchedule(
        base_etas=etas, eta_new=eta_new, kappa_new=kappa_new, coeff_k=k, coeff_m=m, coeff_j=j
    )
