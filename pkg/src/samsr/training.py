"""Single-step distillation training with finite-difference descent.

A fixed multi-step teacher is distilled into a single-step student by
jointly minimizing four mean-squared errors per (clean, degraded) pair:

  distill   student's one-step estimate vs the teacher's full rollout
  inverse   student at t = 0 maps the teacher's estimate back to x_T
  gt        student applied to its own (frozen) forward guess recovers x_0
  sc        weight map of the student's estimate vs weight map of x_0

The sc term compares segmentation-derived weight maps and is therefore
piecewise constant in the parameters: its finite-difference contribution
is almost everywhere zero. It is still evaluated faithfully inside every
probe rather than shortcut.

Gradients are central finite differences over the flat parameter vector;
no autodiff anywhere. Every randomized choice (per-item noise, batch
selection) is derived deterministically from the master seed, so a rerun
reproduces the loss history bit for bit. Each dataset item keeps one fixed
noise field: the objective is a deterministic finite sum, which keeps
full-batch descent monotone and reruns comparable.
"""

from __future__ import annotations

from dataclasses import dataclass
from functools import partial

import numpy as np

from .diffusion import Denoiser, ToyDenoiser, forward_init, forward_marginal, reverse_chain
from .masks import MaskStack
from .noise import NoiseSeed, sample_masked_noise
from .schedule import PixelSchedule, ScheduleConfig, build_pixel_schedule, compute_weight_map
from .segmentation import SegmenterConfig, mask_pipeline
from .validation import as_image, check_same_shape, clamp01

_ITEM_SEED_TAG = 0x17E0
_BATCH_TAG = 0xBA7C
_STEP_TAG = 0x7135


class TrainingDivergedError(RuntimeError):
    """Raised when a loss or gradient stops being finite."""


@dataclass(frozen=True)
class TrainingConfig:
    iterations: int
    lambda_sc: float = 1.0
    learning_rate: float = 1e-2
    batch_size: int = 4
    fd_epsilon: float = 1e-4
    seed: NoiseSeed = NoiseSeed(0)
    schedule: ScheduleConfig = ScheduleConfig()
    segmenter: SegmenterConfig = SegmenterConfig()

    def __post_init__(self):
        if not isinstance(self.iterations, (int, np.integer)) or isinstance(self.iterations, bool):
            raise ValueError(f"iterations must be an integer, got {self.iterations!r}")
        if self.iterations < 1:
            raise ValueError(f"iterations must be >= 1, got {self.iterations}")
        if self.lambda_sc < 0.0:
            raise ValueError(f"lambda_sc must be >= 0, got {self.lambda_sc}")
        if self.learning_rate < 0.0:
            raise ValueError(f"learning_rate must be >= 0, got {self.learning_rate}")
        if not isinstance(self.batch_size, (int, np.integer)) or self.batch_size < 1:
            raise ValueError(f"batch_size must be >= 1, got {self.batch_size!r}")
        if self.fd_epsilon <= 0.0:
            raise ValueError(f"fd_epsilon must be > 0, got {self.fd_epsilon}")


@dataclass(frozen=True)
class LossReport:
    """One loss evaluation, component by component. total is the exact
    arithmetic sum l_distill + l_inverse + l_gt + lambda_sc * l_sc."""

    l_distill: float
    l_inverse: float
    l_gt: float
    l_sc: float
    lambda_sc: float
    total: float

    @classmethod
    def from_parts(cls, l_distill, l_inverse, l_gt, l_sc, lambda_sc) -> "LossReport":
        return cls(
            l_distill=float(l_distill),
            l_inverse=float(l_inverse),
            l_gt=float(l_gt),
            l_sc=float(l_sc),
            lambda_sc=float(lambda_sc),
            total=float(l_distill + l_inverse + l_gt + lambda_sc * l_sc),
        )


def _mse(a: np.ndarray, b: np.ndarray) -> float:
    return float(np.mean((a - b) ** 2))


def teacher_rollout(teacher: Denoiser, x_t, y, sched: PixelSchedule) -> np.ndarray:
    """The teacher's full multi-step estimate of the clean image."""
    return reverse_chain(x_t, y, teacher, sched)


def semantic_consistency_loss(a, b, seg: SegmenterConfig = SegmenterConfig()) -> float:
    """MSE between the weight maps of two rasters, both clamped to [0, 1]
    before segmentation (model outputs may overshoot the range)."""
    wa = compute_weight_map(mask_pipeline(clamp01(as_image(a)), seg))
    wb = compute_weight_map(mask_pipeline(clamp01(as_image(b)), seg))
    return _mse(wa, wb)


@dataclass(frozen=True)
class _PairContext:
    """Everything about one training pair that does not depend on the
    student: fixed noise, start state, teacher rollout, target weight map."""

    x0: np.ndarray
    y: np.ndarray
    masks: MaskStack
    sched: PixelSchedule
    eps: np.ndarray
    x_start: np.ndarray
    teacher_estimate: np.ndarray
    weight_ref: np.ndarray


def _prepare_pair(
    teacher: Denoiser,
    x0,
    y,
    schedule_cfg: ScheduleConfig,
    seg: SegmenterConfig,
    seed: NoiseSeed,
) -> _PairContext:
    x0 = as_image(x0, name="x0")
    y = as_image(y, name="y")
    check_same_shape(x0, y, names="x0/y")
    masks = mask_pipeline(y, seg)
    sched = build_pixel_schedule(schedule_cfg, compute_weight_map(masks))
    eps = sample_masked_noise(masks, y.shape[0], seed)
    x_start = forward_init(y, eps, sched)
    if hasattr(teacher, "retarget"):
        teacher.retarget(x0)
    teacher_estimate = teacher_rollout(teacher, x_start, y, sched)
    weight_ref = compute_weight_map(mask_pipeline(clamp01(x0), seg))
    return _PairContext(
        x0=x0,
        y=y,
        masks=masks,
        sched=sched,
        eps=eps,
        x_start=x_start,
        teacher_estimate=teacher_estimate,
        weight_ref=weight_ref,
    )


def _student_losses(
    student: Denoiser, ctx: _PairContext, x_hat_start: np.ndarray, cfg: TrainingConfig
) -> LossReport:
    """All four losses for one pair at the student's current parameters.

    ``x_hat_start`` is the student's forward guess f(x_0, y, 0) computed at
    the base parameters of the surrounding evaluation and held fixed here,
    so parameter probes never differentiate through it.
    """
    t_max = ctx.sched.num_steps
    pred = student(ctx.x_start, ctx.y, t_max)
    l_distill = _mse(pred, ctx.teacher_estimate)
    l_inverse = _mse(student(ctx.teacher_estimate, ctx.y, 0), ctx.x_start)
    l_gt = _mse(student(x_hat_start, ctx.y, t_max), ctx.x0)
    w_pred = compute_weight_map(mask_pipeline(clamp01(pred), cfg.segmenter))
    l_sc = _mse(w_pred, ctx.weight_ref)
    return LossReport.from_parts(l_distill, l_inverse, l_gt, l_sc, cfg.lambda_sc)


def compute_losses(student: Denoiser, teacher: Denoiser, x0, y, cfg: TrainingConfig) -> LossReport:
    """Single-pair loss evaluation at the student's current parameters."""
    ctx = _prepare_pair(teacher, x0, y, cfg.schedule, cfg.segmenter, cfg.seed)
    x_hat_start = student(ctx.x0, ctx.y, 0)
    return _student_losses(student, ctx, x_hat_start, cfg)


def finite_difference_gradient(loss_fn, theta: np.ndarray, epsilon: float) -> np.ndarray:
    """Central-difference gradient of a scalar loss over a flat vector."""
    theta = np.asarray(theta, dtype=np.float64)
    grad = np.empty_like(theta)
    for i in range(theta.size):
        up = theta.copy()
        up[i] += epsilon
        down = theta.copy()
        down[i] -= epsilon
        grad[i] = (loss_fn(up) - loss_fn(down)) / (2.0 * epsilon)
    return grad


def _derive_item_seed(seed: NoiseSeed, index: int) -> NoiseSeed:
    state = np.random.SeedSequence((seed.master_seed, _ITEM_SEED_TAG, index)).generate_state(
        1, np.uint64
    )
    return NoiseSeed(int(state[0]))


def _batch_indices(seed: NoiseSeed, iteration: int, n_items: int, batch_size: int) -> np.ndarray:
    """Batch of item indices. batch_size >= n_items means a full
    deterministic pass (no resampling noise in the objective); smaller
    batches draw with replacement from a per-iteration substream."""
    if batch_size >= n_items:
        return np.arange(n_items)
    gen = np.random.Generator(
        np.random.Philox(np.random.SeedSequence((seed.master_seed, _BATCH_TAG, iteration)))
    )
    return gen.integers(0, n_items, size=batch_size)


def _validate_dataset(dataset):
    pairs = list(dataset)
    if not pairs:
        raise ValueError("dataset is empty")
    out = []
    for i, item in enumerate(pairs):
        try:
            x0, y = item
        except (TypeError, ValueError):
            raise ValueError(f"dataset item {i}: expected an (x0, y) pair") from None
        x0 = as_image(x0, name=f"dataset[{i}].x0")
        y = as_image(y, name=f"dataset[{i}].y")
        check_same_shape(x0, y, names=f"dataset[{i}]")
        out.append((x0, y))
    channels = {p[0].shape[0] for p in out}
    if len(channels) != 1:
        raise ValueError(f"dataset mixes channel counts: {sorted(channels)}")
    return out


def _probe_total(student, ctx_list, x_hat_list, cfg, theta) -> float:
    """Batch-mean total loss at probe parameters ``theta``.

    The frozen forward guesses in ``x_hat_list`` are reused across probes;
    everything else that depends on the student is recomputed, including
    the segmentation pipeline inside the sc term.
    """
    student.set_param_vector(theta)
    totals = [
        _student_losses(student, ctx, xh, cfg).total for ctx, xh in zip(ctx_list, x_hat_list)
    ]
    return float(np.mean(totals))


def _mean_report(reports: list[LossReport], lambda_sc: float) -> LossReport:
    return LossReport.from_parts(
        float(np.mean([r.l_distill for r in reports])),
        float(np.mean([r.l_inverse for r in reports])),
        float(np.mean([r.l_gt for r in reports])),
        float(np.mean([r.l_sc for r in reports])),
        lambda_sc,
    )


def train(cfg: TrainingConfig, dataset, teacher: Denoiser):
    """Distill ``teacher`` into a fresh ToyDenoiser over (x0, y) pairs.

    Returns (student, history) where history holds one LossReport per
    iteration, evaluated at that iteration's starting parameters (entry 0
    is the untrained loss). The student starts from the teacher's
    parameters when the teacher is a compatible ToyDenoiser, else from
    zeros. Raises TrainingDivergedError on a non-finite loss or gradient.
    """
    pairs = _validate_dataset(dataset)
    channels = pairs[0][0].shape[0]
    student = ToyDenoiser(channels, cfg.schedule.num_steps)
    if (
        isinstance(teacher, ToyDenoiser)
        and teacher.channels == channels
        and teacher.num_steps == cfg.schedule.num_steps
    ):
        student.set_param_vector(teacher.get_param_vector())

    contexts = [
        _prepare_pair(teacher, x0, y, cfg.schedule, cfg.segmenter, _derive_item_seed(cfg.seed, i))
        for i, (x0, y) in enumerate(pairs)
    ]

    history: list[LossReport] = []
    for iteration in range(cfg.iterations):
        idx = _batch_indices(cfg.seed, iteration, len(pairs), cfg.batch_size)
        base = student.get_param_vector()
        frozen_guess = {}
        for i in sorted(set(int(j) for j in idx)):
            frozen_guess[i] = student(pairs[i][0], pairs[i][1], 0)
        ctx_list = [contexts[int(i)] for i in idx]
        x_hat_list = [frozen_guess[int(i)] for i in idx]

        student.set_param_vector(base)
        reports = [
            _student_losses(student, ctx, xh, cfg) for ctx, xh in zip(ctx_list, x_hat_list)
        ]
        report = _mean_report(reports, cfg.lambda_sc)
        if not np.isfinite(report.total):
            raise TrainingDivergedError(f"iteration {iteration}: loss is not finite")
        history.append(report)

        loss_fn = partial(_probe_total, student, ctx_list, x_hat_list, cfg)
        grad = finite_difference_gradient(loss_fn, base, cfg.fd_epsilon)
        if not np.all(np.isfinite(grad)):
            raise TrainingDivergedError(f"iteration {iteration}: gradient is not finite")
        student.set_param_vector(base - cfg.learning_rate * grad)

    return student, history


def pretrain_teacher(cfg: TrainingConfig, dataset):
    """Fit a multi-step ToyDenoiser teacher by plain denoising regression.

    Each probe minimizes MSE(f(x_t, y, t), x_0) with t drawn uniformly per
    batch slot each iteration; forward states reuse the per-item fixed
    noise. Returns (teacher, history) with history a list of float losses.
    """
    pairs = _validate_dataset(dataset)
    channels = pairs[0][0].shape[0]
    teacher = ToyDenoiser(channels, cfg.schedule.num_steps)

    prepared = []
    for i, (x0, y) in enumerate(pairs):
        masks = mask_pipeline(y, cfg.segmenter)
        sched = build_pixel_schedule(cfg.schedule, compute_weight_map(masks))
        eps = sample_masked_noise(masks, channels, _derive_item_seed(cfg.seed, i))
        prepared.append((x0, y, sched, eps))

    history: list[float] = []
    for iteration in range(cfg.iterations):
        idx = _batch_indices(cfg.seed, iteration, len(pairs), cfg.batch_size)
        step_gen = np.random.Generator(
            np.random.Philox(
                np.random.SeedSequence((cfg.seed.master_seed, _STEP_TAG, iteration))
            )
        )
        ts = step_gen.integers(1, cfg.schedule.num_steps + 1, size=idx.size)
        slots = []
        for i, t in zip(idx, ts):
            x0, y, sched, eps = prepared[int(i)]
            slots.append((forward_marginal(x0, y, int(t), eps, sched), y, int(t), x0))

        def loss_fn(theta) -> float:
            teacher.set_param_vector(theta)
            return float(
                np.mean([_mse(teacher(x_t, y, t), x0) for x_t, y, t, x0 in slots])
            )

        base = teacher.get_param_vector()
        value = loss_fn(base)
        if not np.isfinite(value):
            raise TrainingDivergedError(f"iteration {iteration}: loss is not finite")
        history.append(value)
        grad = finite_difference_gradient(loss_fn, base, cfg.fd_epsilon)
        if not np.all(np.isfinite(grad)):
            raise TrainingDivergedError(f"iteration {iteration}: gradient is not finite")
        teacher.set_param_vector(base - cfg.learning_rate * grad)

    return teacher, history
