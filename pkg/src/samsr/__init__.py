"""samsr: mask-guided diffusion super-resolution at experiment scale.

Deterministic end to end: segmentation-derived region masks gate
independent noise substreams, reshape the diffusion schedule per pixel,
and supervise a single-step distilled sampler.
"""

from .diffusion import (
    Denoiser,
    OracleDenoiser,
    ToyDenoiser,
    forward_init,
    forward_marginal,
    reverse_chain,
    reverse_step,
    sample,
)
from .estimator import SamsrSuperResolver, SemanticWeightTransformer
from .masks import MaskStack
from .metrics import MetricReport, evaluate_pair, psnr, ssim
from .noise import NoiseSeed, gaussian_field, masked_noise_sum, sample_masked_noise
from .schedule import (
    PixelSchedule,
    ScheduleConfig,
    adjust,
    build_pixel_schedule,
    build_schedule,
    compute_weight_map,
    reverse_coeffs,
)
from .segmentation import SegmenterConfig, luminance, mask_pipeline, toy_segment
from .training import (
    LossReport,
    TrainingConfig,
    TrainingDivergedError,
    compute_losses,
    finite_difference_gradient,
    pretrain_teacher,
    semantic_consistency_loss,
    teacher_rollout,
    train,
)

__version__ = "0.1.0"

__all__ = [
    "Denoiser",
    "LossReport",
    "MaskStack",
    "MetricReport",
    "NoiseSeed",
    "OracleDenoiser",
    "PixelSchedule",
    "SamsrSuperResolver",
    "ScheduleConfig",
    "SegmenterConfig",
    "SemanticWeightTransformer",
    "ToyDenoiser",
    "TrainingConfig",
    "TrainingDivergedError",
    "adjust",
    "build_pixel_schedule",
    "build_schedule",
    "compute_losses",
    "compute_weight_map",
    "evaluate_pair",
    "finite_difference_gradient",
    "forward_init",
    "forward_marginal",
    "gaussian_field",
    "luminance",
    "mask_pipeline",
    "masked_noise_sum",
    "pretrain_teacher",
    "psnr",
    "reverse_chain",
    "reverse_coeffs",
    "reverse_step",
    "sample",
    "sample_masked_noise",
    "semantic_consistency_loss",
    "ssim",
    "teacher_rollout",
    "toy_segment",
    "train",
]
