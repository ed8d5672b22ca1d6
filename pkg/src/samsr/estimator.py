"""Estimator facade over the functional core.

`SamsrSuperResolver` packages the whole pipeline behind the familiar
fit/predict contract: ``fit(X, y)`` distills a single-step student from
(degraded, clean) pairs, ``predict(X)`` runs deterministic sampling with
that student. Hyperparameters are stored verbatim so `get_params`,
`set_params`, and `clone` behave like any other estimator.

The heavy lifting stays in the plain functions; these classes only
translate parameters and validate inputs.
"""

from __future__ import annotations

import numbers

import numpy as np
from sklearn.base import BaseEstimator, TransformerMixin
from sklearn.exceptions import NotFittedError

from .diffusion import Denoiser, OracleDenoiser, sample
from .noise import NoiseSeed
from .schedule import ScheduleConfig, compute_weight_map
from .segmentation import SegmenterConfig, mask_pipeline
from .training import TrainingConfig, train
from .validation import as_image


def _image_list(X, *, name: str) -> list[np.ndarray]:
    """Accept one (C, H, W) raster or an iterable of them."""
    if isinstance(X, np.ndarray) and X.ndim in (2, 3):
        return [as_image(X, name=name)]
    items = list(X)
    if not items:
        raise ValueError(f"{name}: empty input")
    return [as_image(item, name=f"{name}[{i}]") for i, item in enumerate(items)]


class SamsrSuperResolver(BaseEstimator):
    """Semantic-noise diffusion super-resolver with a distillable sampler.

    Parameters mirror the schedule, segmenter, and training configs; see
    those dataclasses for semantics. ``teacher`` may be a Denoiser to
    distill from; None means the exact-target oracle teacher.
    """

    def __init__(
        self,
        num_steps: int = 15,
        eta_min: float = 0.0016,
        eta_max: float = 0.9999,
        power: float = 0.3,
        kappa: float = 2.0,
        semantic_gain: float = 0.2,
        clamp_eta: bool = False,
        quant_levels: int = 8,
        min_region_px: int = 16,
        max_masks: int = 256,
        mask_threshold: float = 0.5,
        lambda_sc: float = 1.0,
        learning_rate: float = 0.01,
        iterations: int = 200,
        batch_size: int = 4,
        fd_epsilon: float = 1e-4,
        sample_steps: int = 1,
        seed: int = 0,
        teacher: Denoiser | None = None,
    ):
        self.num_steps = num_steps
        self.eta_min = eta_min
        self.eta_max = eta_max
        self.power = power
        self.kappa = kappa
        self.semantic_gain = semantic_gain
        self.clamp_eta = clamp_eta
        self.quant_levels = quant_levels
        self.min_region_px = min_region_px
        self.max_masks = max_masks
        self.mask_threshold = mask_threshold
        self.lambda_sc = lambda_sc
        self.learning_rate = learning_rate
        self.iterations = iterations
        self.batch_size = batch_size
        self.fd_epsilon = fd_epsilon
        self.sample_steps = sample_steps
        self.seed = seed
        self.teacher = teacher

    def _schedule_config(self) -> ScheduleConfig:
        return ScheduleConfig(
            num_steps=self.num_steps,
            eta_min=self.eta_min,
            eta_max=self.eta_max,
            power=self.power,
            kappa=self.kappa,
            semantic_gain=self.semantic_gain,
            clamp_eta=self.clamp_eta,
        )

    def _segmenter_config(self) -> SegmenterConfig:
        return SegmenterConfig(
            quant_levels=self.quant_levels,
            min_region_px=self.min_region_px,
            max_masks=self.max_masks,
            mask_threshold=self.mask_threshold,
        )

    def _training_config(self) -> TrainingConfig:
        if not isinstance(self.seed, numbers.Integral):
            raise ValueError(f"seed must be an integer, got {self.seed!r}")
        return TrainingConfig(
            iterations=self.iterations,
            lambda_sc=self.lambda_sc,
            learning_rate=self.learning_rate,
            batch_size=self.batch_size,
            fd_epsilon=self.fd_epsilon,
            seed=NoiseSeed(int(self.seed)),
            schedule=self._schedule_config(),
            segmenter=self._segmenter_config(),
        )

    def fit(self, X, y):
        """Distill a student from degraded inputs X and clean targets y."""
        inputs = _image_list(X, name="X")
        targets = _image_list(y, name="y")
        if len(inputs) != len(targets):
            raise ValueError(f"X and y disagree on length: {len(inputs)} vs {len(targets)}")
        cfg = self._training_config()
        teacher = self.teacher if self.teacher is not None else OracleDenoiser()
        dataset = list(zip(targets, inputs))  # training wants (clean, degraded)
        self.student_, self.loss_history_ = train(cfg, dataset, teacher)
        return self

    def predict(self, X):
        """Sample reconstructions for degraded inputs X.

        Returns a list of (C, H, W) arrays, or a single array when X was a
        single raster.
        """
        if not hasattr(self, "student_"):
            raise NotFittedError("SamsrSuperResolver: call fit before predict")
        single = isinstance(X, np.ndarray) and X.ndim in (2, 3)
        inputs = _image_list(X, name="X")
        sched_cfg = self._schedule_config()
        seg_cfg = self._segmenter_config()
        out = []
        for img in inputs:
            masks = mask_pipeline(img, seg_cfg)
            out.append(
                sample(
                    img,
                    masks,
                    self.student_,
                    sched_cfg,
                    NoiseSeed(int(self.seed)),
                    steps=self.sample_steps,
                )
            )
        return out[0] if single else out


class SemanticWeightTransformer(BaseEstimator, TransformerMixin):
    """Stateless raster -> weight-map transformer (fit is a no-op)."""

    def __init__(
        self,
        quant_levels: int = 8,
        min_region_px: int = 16,
        max_masks: int = 256,
        mask_threshold: float = 0.5,
    ):
        self.quant_levels = quant_levels
        self.min_region_px = min_region_px
        self.max_masks = max_masks
        self.mask_threshold = mask_threshold

    def fit(self, X, y=None):
        return self

    def transform(self, X):
        cfg = SegmenterConfig(
            quant_levels=self.quant_levels,
            min_region_px=self.min_region_px,
            max_masks=self.max_masks,
            mask_threshold=self.mask_threshold,
        )
        single = isinstance(X, np.ndarray) and X.ndim in (2, 3)
        maps = [compute_weight_map(mask_pipeline(img, cfg)) for img in _image_list(X, name="X")]
        return maps[0] if single else maps
