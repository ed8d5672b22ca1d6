"""Residual-shifting diffusion with a deterministic reverse pass.

Forward, per pixel under the adjusted schedule: the state at step t is
    x_t = x_0 + eta_t * (y - x_0) + kappa * sqrt(eta_t) * eps
so eta_t dials the blend from the clean image toward the degraded input
while kappa * sqrt(eta_t) scales a fixed standardized noise field eps.
The chain is seeded at t = T directly from y (no x_0 available at
inference):
    x_T = y + kappa * sqrt(eta_T) * eps.

Reverse, also deterministic: each step mixes the denoiser's clean-image
estimate with the current state and y through coefficients (k, m, j) that
sum to one; with a perfect estimate the step lands exactly on the forward
state at t - 1. The final step is a direct denoiser call at t = 1.
"""

from __future__ import annotations

import abc

import numpy as np

from .masks import MaskStack
from .noise import NoiseSeed, sample_masked_noise
from .schedule import PixelSchedule, ScheduleConfig, build_pixel_schedule, compute_weight_map
from .validation import as_image, check_same_shape

TOY_PARAM_CAP = 512


class Denoiser(abc.ABC):
    """A clean-image estimator f(x_t, y, t) with a flat parameter vector."""

    @abc.abstractmethod
    def __call__(self, x_t: np.ndarray, y: np.ndarray, t: int) -> np.ndarray: ...

    @abc.abstractmethod
    def get_param_vector(self) -> np.ndarray: ...

    @abc.abstractmethod
    def set_param_vector(self, theta: np.ndarray) -> None: ...


class OracleDenoiser(Denoiser):
    """Returns the true clean image it was given, ignoring (x_t, t).

    Used to validate transport identities and as the exact-target teacher:
    training loops may call :meth:`retarget` before each item so one
    oracle serves a whole dataset.
    """

    def __init__(self, target=None):
        self._target = None if target is None else as_image(target, name="target")

    def retarget(self, target) -> None:
        self._target = as_image(target, name="target")

    def __call__(self, x_t, y, t):
        if self._target is None:
            raise RuntimeError("OracleDenoiser: no target bound; call retarget() first")
        return self._target.copy()

    def get_param_vector(self) -> np.ndarray:
        return np.zeros(0)

    def set_param_vector(self, theta) -> None:
        if np.asarray(theta).size != 0:
            raise ValueError("OracleDenoiser has no parameters")


class ToyDenoiser(Denoiser):
    """Tiny linear-in-parameters denoiser for desk-scale experiments.

    Architecture over the stacked features [x_t; y] (2C channels):
    a pointwise map, a 3x3 edge-padded convolution, a per-channel bias,
    and a per-channel term linear in t / num_steps. Linear in theta, so
    every squared-error objective over it is convex; the all-zero vector
    is the zero function.

    Parameter layout (flat, float64): pointwise (C * 2C), conv
    (C * 2C * 9), bias (C), time (C).
    """

    def __init__(self, channels: int, num_steps: int = 15, params=None):
        if channels not in (1, 3):
            raise ValueError(f"ToyDenoiser: channels must be 1 or 3, got {channels}")
        if not isinstance(num_steps, (int, np.integer)) or isinstance(num_steps, bool) or num_steps < 1:
            raise ValueError(f"ToyDenoiser: num_steps must be an integer >= 1, got {num_steps!r}")
        self.channels = int(channels)
        self.num_steps = int(num_steps)
        c = self.channels
        self._n_point = c * 2 * c
        self._n_conv = c * 2 * c * 9
        self.param_count = self._n_point + self._n_conv + c + c
        if self.param_count > TOY_PARAM_CAP:
            raise ValueError(f"ToyDenoiser: {self.param_count} params exceeds cap {TOY_PARAM_CAP}")
        if params is None:
            self._theta = np.zeros(self.param_count)
        else:
            self._theta = np.zeros(self.param_count)
            self.set_param_vector(params)

    def get_param_vector(self) -> np.ndarray:
        return self._theta.copy()

    def set_param_vector(self, theta) -> None:
        t = np.asarray(theta, dtype=np.float64).ravel()
        if t.size != self.param_count:
            raise ValueError(f"ToyDenoiser: expected {self.param_count} params, got {t.size}")
        if not np.all(np.isfinite(t)):
            raise ValueError("ToyDenoiser: parameters contain NaN or Inf")
        self._theta = t.copy()

    def __call__(self, x_t, y, t):
        x_t = as_image(x_t, name="x_t")
        y = as_image(y, name="y")
        check_same_shape(x_t, y, names="x_t/y")
        if x_t.shape[0] != self.channels:
            raise ValueError(f"ToyDenoiser: built for {self.channels} channels, got {x_t.shape[0]}")
        c = self.channels
        feat = np.concatenate([x_t, y])  # (2C, H, W)
        theta = self._theta
        point = theta[: self._n_point].reshape(c, 2 * c)
        conv = theta[self._n_point : self._n_point + self._n_conv].reshape(c, 2 * c, 3, 3)
        bias = theta[self._n_point + self._n_conv : self._n_point + self._n_conv + c]
        time_w = theta[self._n_point + self._n_conv + c :]

        out = np.tensordot(point, feat, axes=(1, 0))
        padded = np.pad(feat, ((0, 0), (1, 1), (1, 1)), mode="edge")
        h, w = x_t.shape[1], x_t.shape[2]
        for dy in range(3):
            for dx in range(3):
                out += np.tensordot(conv[:, :, dy, dx], padded[:, dy : dy + h, dx : dx + w], axes=(1, 0))
        return out + bias[:, None, None] + time_w[:, None, None] * (t / self.num_steps)


def _check_state(arr, sched: PixelSchedule, name: str) -> np.ndarray:
    a = as_image(arr, name=name)
    if a.shape[1:] != sched.kappa_new.shape:
        raise ValueError(
            f"{name}: raster {a.shape[1:]} does not match schedule raster {sched.kappa_new.shape}"
        )
    return a


def forward_init(y, eps, sched: PixelSchedule) -> np.ndarray:
    """Chain start: x_T = y + kappa * sqrt(eta_T) * eps, all per pixel."""
    y = _check_state(y, sched, "y")
    eps = _check_state(eps, sched, "eps")
    t = sched.num_steps
    return y + (sched.kappa_new * np.sqrt(sched.eta_field(t))) * eps


def forward_marginal(x0, y, t: int, eps, sched: PixelSchedule) -> np.ndarray:
    """Deterministic forward state at step t for a shared noise field."""
    x0 = _check_state(x0, sched, "x0")
    y = _check_state(y, sched, "y")
    eps = _check_state(eps, sched, "eps")
    check_same_shape(x0, y, names="x0/y")
    eta = sched.eta_field(t)
    return x0 + eta * (y - x0) + (sched.kappa_new * np.sqrt(eta)) * eps


def reverse_step(x_t, x0_hat, y, coeffs) -> np.ndarray:
    """One deterministic reverse update: k * x0_hat + m * x_t + j * y."""
    k, m, j = coeffs
    return k * x0_hat + m * x_t + j * y


def reverse_chain(x_start, y, denoiser: Denoiser, sched: PixelSchedule) -> np.ndarray:
    """Run the full reverse pass from x_T down to the final estimate.

    Steps T..2 mix the denoiser's estimate into the state; the t = 1 step
    is a direct call (its mixing coefficients are the trivial (1, 0, 0)).
    """
    x = x_start
    for t in range(sched.num_steps, 1, -1):
        x = reverse_step(x, denoiser(x, y, t), y, sched.coeffs(t))
    return denoiser(x, y, 1)


def sample(
    y,
    masks: MaskStack,
    denoiser: Denoiser,
    cfg: ScheduleConfig,
    seed: NoiseSeed,
    steps: int = 1,
) -> np.ndarray:
    """Deterministic sampling from the degraded input y under region masks.

    steps = cfg.num_steps runs the full reverse chain; steps = 1 runs the
    distilled single-step path x0_hat = f(x_T, y, T). No other step count
    is meaningful for this sampler.
    """
    y = as_image(y, name="y")
    if steps not in (1, cfg.num_steps):
        raise ValueError(f"steps must be 1 or num_steps={cfg.num_steps}, got {steps}")
    if (masks.height, masks.width) != (y.shape[1], y.shape[2]):
        raise ValueError(
            f"masks raster {(masks.height, masks.width)} does not match y {y.shape[1:]}"
        )
    wmap = compute_weight_map(masks)
    sched = build_pixel_schedule(cfg, wmap)
    eps = sample_masked_noise(masks, y.shape[0], seed)
    x_t = forward_init(y, eps, sched)
    if steps == 1:
        return denoiser(x_t, y, cfg.num_steps)
    return reverse_chain(x_t, y, denoiser, sched)
