"""Command-line front end.

Subcommands: segment, noise, weights, forward, sample, train,
pretrain-teacher, metrics, sweep.

Configuration is a flat key=value text file ('#' starts a comment,
unknown keys are rejected); any value can be overridden by the matching
flag, and the fully resolved configuration is logged as "config key =
value" lines at the start of every run. Exit codes: 0 success, 2 usage or
configuration error, 3 I/O or parse failure, 4 numeric failure.

SAMSR_THREADS caps the worker threads used by grid sweeps; results are
independent of the thread count (each grid point is pure and seeded).
"""

from __future__ import annotations

import argparse
import itertools
import os
import sys
from concurrent.futures import ThreadPoolExecutor
from dataclasses import replace
from pathlib import Path

import numpy as np

from . import imageio
from .diffusion import OracleDenoiser, sample
from .imageio import FileFormatError
from .metrics import psnr, ssim
from .noise import NoiseSeed, sample_masked_noise
from .schedule import ScheduleConfig, build_pixel_schedule, build_schedule, compute_weight_map
from .segmentation import SegmenterConfig, mask_pipeline
from .training import (
    TrainingConfig,
    TrainingDivergedError,
    pretrain_teacher,
    train,
)
from .validation import clamp01

# Canonical config keys: (type tag, default). Types: int, float, bool, str.
CONFIG_SCHEMA = {
    "num_steps": ("int", 15),
    "eta_min": ("float", 0.0016),
    "eta_max": ("float", 0.9999),
    "power": ("float", 0.3),
    "kappa": ("float", 2.0),
    "semantic_gain": ("float", 0.2),
    "clamp_eta": ("bool", False),
    "seg_mode": ("str", "toy"),
    "mask_dir": ("str", ""),
    "quant_levels": ("int", 8),
    "min_region_px": ("int", 16),
    "max_masks": ("int", 256),
    "mask_threshold": ("float", 0.5),
    "lambda_sc": ("float", 1.0),
    "learning_rate": ("float", 0.01),
    "iterations": ("int", 200),
    "batch_size": ("int", 4),
    "fd_epsilon": ("float", 1e-4),
    "seed": ("int", 0),
}


class ConfigError(ValueError):
    pass


def _parse_value(key: str, raw: str):
    kind = CONFIG_SCHEMA[key][0]
    raw = raw.strip()
    try:
        if kind == "int":
            return int(raw)
        if kind == "float":
            return float(raw)
        if kind == "bool":
            if raw.lower() in ("true", "1", "yes"):
                return True
            if raw.lower() in ("false", "0", "no"):
                return False
            raise ValueError(raw)
        return raw
    except ValueError:
        raise ConfigError(f"config key {key}: cannot parse {raw!r} as {kind}") from None


def parse_config_text(text: str) -> dict:
    """Parse flat key=value lines; unknown keys are an error."""
    out = {}
    for lineno, line in enumerate(text.splitlines(), start=1):
        line = line.split("#", 1)[0].strip()
        if not line:
            continue
        if "=" not in line:
            raise ConfigError(f"config line {lineno}: expected key = value, got {line!r}")
        key, raw = line.split("=", 1)
        key = key.strip()
        if key not in CONFIG_SCHEMA:
            raise ConfigError(f"config line {lineno}: unknown key {key!r}")
        out[key] = _parse_value(key, raw)
    return out


def dump_config_text(cfg: dict) -> str:
    """Serialize a resolved config; parse_config_text inverts this exactly."""
    lines = []
    for key in sorted(CONFIG_SCHEMA):
        value = cfg[key]
        if isinstance(value, bool):
            text = "true" if value else "false"
        elif isinstance(value, float):
            text = repr(value)
        else:
            text = str(value)
        lines.append(f"{key} = {text}")
    return "\n".join(lines) + "\n"


def resolve_config(args) -> dict:
    """defaults <- config file <- explicit flags, then log the result."""
    cfg = {key: default for key, (_, default) in CONFIG_SCHEMA.items()}
    path = getattr(args, "config", None)
    if path:
        path = Path(path)
        if not path.is_file():
            raise FileNotFoundError(f"no such config file: {path}")
        cfg.update(parse_config_text(path.read_text(encoding="utf-8")))
    for key in CONFIG_SCHEMA:
        flag = getattr(args, f"cfg_{key}", None)
        if flag is not None:
            cfg[key] = _parse_value(key, str(flag))
    for key in sorted(CONFIG_SCHEMA):
        print(f"config {key} = {cfg[key]}")
    return cfg


def _schedule_from(cfg: dict) -> ScheduleConfig:
    return ScheduleConfig(
        num_steps=cfg["num_steps"],
        eta_min=cfg["eta_min"],
        eta_max=cfg["eta_max"],
        power=cfg["power"],
        kappa=cfg["kappa"],
        semantic_gain=cfg["semantic_gain"],
        clamp_eta=cfg["clamp_eta"],
    )


def _segmenter_from(cfg: dict) -> SegmenterConfig:
    return SegmenterConfig(
        mode=cfg["seg_mode"],
        mask_dir=cfg["mask_dir"] or None,
        quant_levels=cfg["quant_levels"],
        min_region_px=cfg["min_region_px"],
        max_masks=cfg["max_masks"],
        mask_threshold=cfg["mask_threshold"],
    )


def _training_from(cfg: dict) -> TrainingConfig:
    return TrainingConfig(
        iterations=cfg["iterations"],
        lambda_sc=cfg["lambda_sc"],
        learning_rate=cfg["learning_rate"],
        batch_size=cfg["batch_size"],
        fd_epsilon=cfg["fd_epsilon"],
        seed=NoiseSeed(cfg["seed"]),
        schedule=_schedule_from(cfg),
        segmenter=_segmenter_from(cfg),
    )


def _load_masks_for(args, height: int | None = None, width: int | None = None):
    stack = imageio.load_mask_stack(args.masks, height=height, width=width)
    return stack


def _normalize_for_png(arr: np.ndarray) -> np.ndarray:
    """Affine map to [0, 1] for visualization; constant fields map to 0.5."""
    lo = float(arr.min())
    hi = float(arr.max())
    if hi == lo:
        return np.full_like(arr, 0.5)
    return (arr - lo) / (hi - lo)


def _threads() -> int:
    env = os.environ.get("SAMSR_THREADS", "").strip()
    if env:
        try:
            cap = int(env)
        except ValueError:
            raise ConfigError(f"SAMSR_THREADS: cannot parse {env!r} as an integer") from None
        if cap < 1:
            raise ConfigError(f"SAMSR_THREADS must be >= 1, got {cap}")
        return cap
    return max(1, min(4, os.cpu_count() or 1))


def load_paired_dataset(dirpath) -> list[tuple[np.ndarray, np.ndarray]]:
    """Load NAME_hr.png / NAME_lr.png pairs, sorted by name."""
    dirpath = Path(dirpath)
    if not dirpath.is_dir():
        raise FileNotFoundError(f"no such dataset directory: {dirpath}")
    pairs = []
    for hr_path in sorted(dirpath.glob("*_hr.png")):
        lr_path = hr_path.with_name(hr_path.name[: -len("_hr.png")] + "_lr.png")
        if not lr_path.is_file():
            raise FileNotFoundError(f"{hr_path.name} has no matching {lr_path.name}")
        pairs.append((imageio.load_image(hr_path), imageio.load_image(lr_path)))
    if not pairs:
        raise FileNotFoundError(f"{dirpath}: no *_hr.png/*_lr.png pairs found")
    return pairs


# ---------------------------------------------------------------- commands

def cmd_segment(args) -> int:
    cfg = resolve_config(args)
    img = imageio.load_image(args.input)
    stack = mask_pipeline(img, _segmenter_from(cfg))
    imageio.save_mask_stack(stack, args.out)
    print(f"wrote {stack.count} masks ({stack.height}x{stack.width}) to {args.out}")
    return 0


def cmd_noise(args) -> int:
    cfg = resolve_config(args)
    stack = _load_masks_for(args, args.height, args.width)
    if stack.count == 0 and (args.height is None or args.width is None):
        raise ConfigError("empty mask dir: pass --height and --width to fix the raster size")
    field = sample_masked_noise(stack, args.channels, NoiseSeed(cfg["seed"]))
    imageio.save_tensor(field, args.out)
    if args.png:
        imageio.save_image(_normalize_for_png(field), args.png)
    print(f"wrote noise tensor {field.shape} to {args.out}")
    return 0


def cmd_weights(args) -> int:
    cfg = resolve_config(args)
    stack = _load_masks_for(args, args.height, args.width)
    if stack.count == 0 and (args.height is None or args.width is None):
        raise ConfigError("empty mask dir: pass --height and --width to fix the raster size")
    wmap = compute_weight_map(stack)
    if wmap.max() == 0.0:
        print("warning: no mask coverage; weight map is all zeros")
    imageio.save_tensor(wmap[np.newaxis], args.out)
    if args.png:
        imageio.save_image(wmap[np.newaxis], args.png)
    if args.schedule_csv:
        etas = build_schedule(_schedule_from(cfg))
        rows = ["t,eta"] + [f"{t + 1},{eta!r}" for t, eta in enumerate(etas)]
        imageio.atomic_write_text(args.schedule_csv, "\n".join(rows) + "\n")
    print(f"wrote weight map {wmap.shape} to {args.out}")
    return 0


def cmd_forward(args) -> int:
    cfg = resolve_config(args)
    y = imageio.load_image(args.lr)
    if args.masks:
        stack = _load_masks_for(args, y.shape[1], y.shape[2])
    else:
        stack = mask_pipeline(y, _segmenter_from(cfg))
    sched = build_pixel_schedule(_schedule_from(cfg), compute_weight_map(stack))
    eps = sample_masked_noise(stack, y.shape[0], NoiseSeed(cfg["seed"]))
    from .diffusion import forward_init

    x_start = forward_init(y, eps, sched)
    imageio.save_tensor(x_start, args.out)
    if args.png:
        imageio.save_image(_normalize_for_png(x_start), args.png)
    print(f"wrote start state {x_start.shape} to {args.out}")
    return 0


def cmd_sample(args) -> int:
    cfg = resolve_config(args)
    y = imageio.load_image(args.lr)
    if args.masks:
        stack = _load_masks_for(args, y.shape[1], y.shape[2])
    else:
        stack = mask_pipeline(y, _segmenter_from(cfg))
    student = imageio.load_denoiser(args.student)
    sched_cfg = _schedule_from(cfg)
    out = sample(y, stack, student, sched_cfg, NoiseSeed(cfg["seed"]), steps=args.steps)
    imageio.save_image(clamp01(out), args.out)
    if args.tensor:
        imageio.save_tensor(out, args.tensor)
    print(f"wrote sample to {args.out}")
    return 0


def _write_history_csv(path, history) -> None:
    rows = ["iteration,l_distill,l_inverse,l_gt,l_sc,total"]
    for i, r in enumerate(history):
        rows.append(
            f"{i},{r.l_distill!r},{r.l_inverse!r},{r.l_gt!r},{r.l_sc!r},{r.total!r}"
        )
    imageio.atomic_write_text(path, "\n".join(rows) + "\n")


def cmd_train(args) -> int:
    cfg = resolve_config(args)
    dataset = load_paired_dataset(args.data)
    tcfg = _training_from(cfg)
    if args.teacher == "oracle":
        teacher = OracleDenoiser()
    else:
        teacher = imageio.load_denoiser(args.teacher)
    student, history = train(tcfg, dataset, teacher)
    imageio.save_denoiser(student, args.out)
    if args.history:
        _write_history_csv(args.history, history)
    print(
        f"trained {tcfg.iterations} iterations on {len(dataset)} pairs; "
        f"total loss {history[0].total:.6g} -> {history[-1].total:.6g}"
    )
    return 0


def cmd_pretrain_teacher(args) -> int:
    cfg = resolve_config(args)
    dataset = load_paired_dataset(args.data)
    tcfg = _training_from(cfg)
    teacher, history = pretrain_teacher(tcfg, dataset)
    imageio.save_denoiser(teacher, args.out)
    if args.history:
        rows = ["iteration,loss"] + [f"{i},{v!r}" for i, v in enumerate(history)]
        imageio.atomic_write_text(args.history, "\n".join(rows) + "\n")
    print(
        f"pretrained teacher for {tcfg.iterations} iterations; "
        f"loss {history[0]:.6g} -> {history[-1]:.6g}"
    )
    return 0


def _metric_pairs(test_path: Path, ref_path: Path):
    if test_path.is_dir() != ref_path.is_dir():
        raise ConfigError("metrics: --test and --ref must both be files or both be directories")
    if test_path.is_dir():
        test_names = {p.name for p in test_path.glob("*.png")}
        ref_names = {p.name for p in ref_path.glob("*.png")}
        common = sorted(test_names & ref_names)
        if not common:
            raise FileNotFoundError("metrics: no PNG filenames shared by the two directories")
        return [(name, test_path / name, ref_path / name) for name in common]
    return [(test_path.name, test_path, ref_path)]


def cmd_metrics(args) -> int:
    resolve_config(args)
    rows = ["name,psnr,ssim"]
    for name, t, r in _metric_pairs(Path(args.test), Path(args.ref)):
        a = imageio.load_image(t)
        b = imageio.load_image(r)
        rows.append(f"{name},{psnr(a, b):.6f},{ssim(a, b):.6f}")
    text = "\n".join(rows) + "\n"
    if args.out:
        imageio.atomic_write_text(args.out, text)
        print(f"wrote {len(rows) - 1} rows to {args.out}")
    else:
        sys.stdout.write(text)
    return 0


def _parse_float_list(raw: str, flag: str) -> list[float]:
    try:
        values = [float(tok) for tok in raw.split(",") if tok.strip()]
    except ValueError:
        raise ConfigError(f"{flag}: cannot parse {raw!r} as a comma-separated float list") from None
    if not values:
        raise ConfigError(f"{flag}: empty list")
    return values


def cmd_sweep(args) -> int:
    cfg = resolve_config(args)
    dataset = load_paired_dataset(args.data)
    student = imageio.load_denoiser(args.student)
    seg_cfg = _segmenter_from(cfg)
    base = _schedule_from(cfg)
    gains = _parse_float_list(args.m, "--m") if args.m else [base.semantic_gain]
    powers = _parse_float_list(args.p, "--p") if args.p else [base.power]
    kappas = _parse_float_list(args.kappa, "--kappa") if args.kappa else [base.kappa]
    grid = list(itertools.product(gains, powers, kappas))
    seed = NoiseSeed(cfg["seed"])

    prepared = [(x0, y, mask_pipeline(y, seg_cfg)) for x0, y in dataset]

    def run_point(point):
        gain, power, kap = point
        sched_cfg = replace(base, semantic_gain=gain, power=power, kappa=kap)
        scores = []
        for x0, y, masks in prepared:
            out = clamp01(sample(y, masks, student, sched_cfg, seed, steps=args.steps))
            scores.append((psnr(out, x0), ssim(out, x0)))
        return (
            float(np.mean([s[0] for s in scores])),
            float(np.mean([s[1] for s in scores])),
        )

    workers = min(_threads(), len(grid))
    with ThreadPoolExecutor(max_workers=workers) as pool:
        results = list(pool.map(run_point, grid))

    rows = ["m,p,kappa,psnr,ssim"]
    for (gain, power, kap), (mean_psnr, mean_ssim) in zip(grid, results):
        rows.append(f"{gain:g},{power:g},{kap:g},{mean_psnr:.6f},{mean_ssim:.6f}")
    imageio.atomic_write_text(args.out, "\n".join(rows) + "\n")
    print(f"wrote {len(grid)} grid rows to {args.out}")
    return 0


# ---------------------------------------------------------------- parser

def _add_config_flags(p: argparse.ArgumentParser, skip: tuple[str, ...] = ()) -> None:
    p.add_argument("--config", help="flat key=value config file")
    flag_names = {
        "num_steps": "--num-steps",
        "eta_min": "--eta-min",
        "eta_max": "--eta-max",
        "power": "--p",
        "kappa": "--kappa",
        "semantic_gain": "--m",
        "clamp_eta": "--clamp-eta",
        "seg_mode": "--seg-mode",
        "mask_dir": "--mask-dir",
        "quant_levels": "--quant-levels",
        "min_region_px": "--min-region-px",
        "max_masks": "--max-masks",
        "mask_threshold": "--mask-threshold",
        "lambda_sc": "--lambda-sc",
        "learning_rate": "--learning-rate",
        "iterations": "--iterations",
        "batch_size": "--batch-size",
        "fd_epsilon": "--fd-epsilon",
        "seed": "--seed",
    }
    for key, flag in flag_names.items():
        if key in skip:
            continue
        kind = CONFIG_SCHEMA[key][0]
        helptext = f"override config key {key} ({kind})"
        if key == "semantic_gain":
            helptext = "override config key semantic_gain: weight-map gain (float)"
        elif key == "power":
            helptext = "override config key power: schedule warp exponent (float)"
        p.add_argument(flag, dest=f"cfg_{key}", default=None, metavar=kind.upper(), help=helptext)


def build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(
        prog="samsr",
        description="Mask-guided diffusion super-resolution toolkit.",
    )
    sub = parser.add_subparsers(dest="command", required=True)

    p = sub.add_parser("segment", help="LR image in, LR-resolution mask dir out")
    p.add_argument("--input", required=True, help="input PNG")
    p.add_argument("--out", required=True, help="output mask directory")
    _add_config_flags(p)
    p.set_defaults(func=cmd_segment)

    p = sub.add_parser("noise", help="mask dir + seed to standardized noise tensor")
    p.add_argument("--masks", required=True, help="mask directory")
    p.add_argument("--out", required=True, help="output tensor file")
    p.add_argument("--png", help="also write a normalized visualization PNG")
    p.add_argument("--channels", type=int, choices=(1, 3), default=3)
    p.add_argument("--height", type=int, help="raster height when the mask dir is empty")
    p.add_argument("--width", type=int, help="raster width when the mask dir is empty")
    _add_config_flags(p)
    p.set_defaults(func=cmd_noise)

    p = sub.add_parser("weights", help="mask dir to weight-map tensor and heatmap")
    p.add_argument("--masks", required=True, help="mask directory")
    p.add_argument("--out", required=True, help="output tensor file")
    p.add_argument("--png", help="also write the weight map as a grayscale PNG")
    p.add_argument("--schedule-csv", help="also dump the base schedule as t,eta rows")
    p.add_argument("--height", type=int, help="raster height when the mask dir is empty")
    p.add_argument("--width", type=int, help="raster width when the mask dir is empty")
    _add_config_flags(p)
    p.set_defaults(func=cmd_weights)

    p = sub.add_parser("forward", help="degraded input + masks + seed to start state x_T")
    p.add_argument("--lr", required=True, help="degraded input PNG")
    p.add_argument("--masks", help="mask directory (default: run the segmenter)")
    p.add_argument("--out", required=True, help="output tensor file")
    p.add_argument("--png", help="also write a normalized visualization PNG")
    _add_config_flags(p)
    p.set_defaults(func=cmd_forward)

    p = sub.add_parser("sample", help="reconstruct a clean image from a degraded input")
    p.add_argument("--lr", required=True, help="degraded input PNG")
    p.add_argument("--student", required=True, help="denoiser params file")
    p.add_argument("--out", required=True, help="output PNG")
    p.add_argument("--masks", help="mask directory (default: run the segmenter)")
    p.add_argument("--steps", type=int, default=1, help="1 or num_steps")
    p.add_argument("--tensor", help="also write the raw (unclamped) output tensor")
    _add_config_flags(p)
    p.set_defaults(func=cmd_sample)

    p = sub.add_parser("train", help="distill a single-step student over paired data")
    p.add_argument("--data", required=True, help="directory of *_hr.png/*_lr.png pairs")
    p.add_argument("--out", required=True, help="output params file")
    p.add_argument("--teacher", default="oracle", help="'oracle' or a teacher params file")
    p.add_argument("--history", help="write per-iteration loss CSV here")
    _add_config_flags(p)
    p.set_defaults(func=cmd_train)

    p = sub.add_parser("pretrain-teacher", help="fit a multi-step teacher by denoising regression")
    p.add_argument("--data", required=True, help="directory of *_hr.png/*_lr.png pairs")
    p.add_argument("--out", required=True, help="output params file")
    p.add_argument("--history", help="write per-iteration loss CSV here")
    _add_config_flags(p)
    p.set_defaults(func=cmd_pretrain_teacher)

    p = sub.add_parser("metrics", help="PSNR/SSIM for two images or two directories")
    p.add_argument("--test", required=True, help="reconstruction PNG or directory")
    p.add_argument("--ref", required=True, help="reference PNG or directory")
    p.add_argument("--out", help="write CSV here instead of stdout")
    _add_config_flags(p)
    p.set_defaults(func=cmd_metrics)

    p = sub.add_parser("sweep", help="grid of (m, p, kappa) to a sample+metrics CSV")
    p.add_argument("--data", required=True, help="directory of *_hr.png/*_lr.png pairs")
    p.add_argument("--student", required=True, help="denoiser params file")
    p.add_argument("--out", required=True, help="output CSV")
    p.add_argument("--m", help="comma-separated weight-map gains")
    p.add_argument("--p", help="comma-separated schedule warp exponents")
    p.add_argument("--kappa", help="comma-separated noise strengths")
    p.add_argument("--steps", type=int, default=1, help="1 or num_steps")
    _add_config_flags(p, skip=("semantic_gain", "power", "kappa"))
    p.set_defaults(func=cmd_sweep)

    return parser


def _fail(kind: str, exc: BaseException, code: int) -> int:
    print(f"samsr: error[{kind}]: {exc}", file=sys.stderr)
    return code


def main(argv=None) -> int:
    parser = build_parser()
    try:
        args = parser.parse_args(argv)
    except SystemExit as exc:  # argparse exits 2 on usage errors, 0 on --help
        return int(exc.code or 0)
    try:
        return args.func(args)
    except ConfigError as exc:
        return _fail("usage", exc, 2)
    except FileFormatError as exc:
        return _fail("io", exc, 3)
    except (FileNotFoundError, IsADirectoryError, PermissionError, OSError) as exc:
        return _fail("io", exc, 3)
    except (TrainingDivergedError, FloatingPointError, OverflowError) as exc:
        return _fail("numeric", exc, 4)
    except ValueError as exc:
        return _fail("usage", exc, 2)


if __name__ == "__main__":
    sys.exit(main())
