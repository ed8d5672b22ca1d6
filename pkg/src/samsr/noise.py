"""Mask-gated Gaussian noise.

Each region mask gates an independent standard-normal field; the gated
fields are summed and the sum is standardized to exactly zero mean and
unit variance by one global scalar (mu, sigma) pair. Pixels covered by
many regions therefore start out with proportionally larger variance and
keep a proportionally larger share of it after standardization.

Determinism contract: the field for mask m comes from a counter-based
generator keyed by (master_seed, substream index), never from a shared
sequential stream, so output is bit-identical regardless of evaluation
order or thread count. Accumulation across masks uses compensated
summation, making the sum order-independent to ~1e-16.
"""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from .masks import MaskStack
from .validation import SUPPORTED_CHANNELS

FALLBACK_STREAM = 0  # reserved; per-mask substreams start at 1


@dataclass(frozen=True)
class NoiseSeed:
    """Master seed for one noise draw; substreams derive from it by index."""

    master_seed: int

    def __post_init__(self):
        if not isinstance(self.master_seed, (int, np.integer)) or isinstance(self.master_seed, bool):
            raise ValueError(f"master_seed must be an integer, got {self.master_seed!r}")
        if not (0 <= int(self.master_seed) < 2**64):
            raise ValueError(f"master_seed must fit in 64 unsigned bits, got {self.master_seed}")
        object.__setattr__(self, "master_seed", int(self.master_seed))


def gaussian_field(seed: NoiseSeed, stream: int, shape: tuple[int, ...]) -> np.ndarray:
    """Standard-normal field from substream ``stream`` of ``seed``.

    Uniforms come from Philox (counter-based, jump-free); the normal
    transform is an explicit Box-Muller so the draw is pinned down to the
    arithmetic, not to a library's choice of ziggurat tables.
    """
    gen = np.random.Generator(
        np.random.Philox(np.random.SeedSequence(seed.master_seed, spawn_key=(int(stream),)))
    )
    n = int(np.prod(shape, dtype=np.int64)) if shape else 1
    pairs = (n + 1) // 2
    u1 = gen.random(pairs)
    u2 = gen.random(pairs)
    radius = np.sqrt(-2.0 * np.log1p(-u1))  # u1 in [0, 1), so 1 - u1 never hits 0
    angle = (2.0 * np.pi) * u2
    z = np.concatenate([radius * np.cos(angle), radius * np.sin(angle)])
    return z[:n].reshape(shape)


def masked_noise_sum(
    masks: MaskStack,
    channels: int,
    seed: NoiseSeed,
    streams: list[int] | None = None,
) -> np.ndarray:
    """Sum of per-mask gated noise fields, shape (channels, H, W).

    Mask m is gated over a full (channels, H, W) draw from substream m + 1
    (substream 0 is reserved for the unmasked fallback). ``streams``
    overrides the assignment; permuting masks together with their streams
    must not change the result beyond compensated-summation noise.

    Before standardization the per-pixel variance of the result equals the
    number of masks covering that pixel.
    """
    if not isinstance(masks, MaskStack):
        raise TypeError("masked_noise_sum: expected a MaskStack")
    if not masks.binary:
        raise ValueError("masked_noise_sum: masks must be binary")
    if channels not in SUPPORTED_CHANNELS:
        raise ValueError(f"masked_noise_sum: channels must be 1 or 3, got {channels}")
    if streams is None:
        streams = range(1, masks.count + 1)
    else:
        streams = list(streams)
        if len(streams) != masks.count:
            raise ValueError(
                f"masked_noise_sum: {len(streams)} streams for {masks.count} masks"
            )

    shape = (channels, masks.height, masks.width)
    total = np.zeros(shape)
    carry = np.zeros(shape)
    for gate, stream in zip(masks.data, streams):
        term = gate * gaussian_field(seed, stream, shape)
        # Kahan update: keep the low-order bits the plain sum would drop.
        y = term - carry
        t = total + y
        carry = (t - total) - y
        total = t
    return total


def sample_masked_noise(masks: MaskStack, channels: int, seed: NoiseSeed) -> np.ndarray:
    """Standardized semantic noise field, shape (channels, H, W).

    The masked sum is shifted and scaled by its own global mean and
    population standard deviation, so the returned field has empirical
    mean 0 and variance 1 to float rounding. Zero-coverage pixels all map
    to the same constant -mu / sigma.

    Degenerate inputs (no masks, or a constant sum) fall back to an
    unmasked standard-normal field from the reserved substream,
    standardized the same way; a single-element constant fallback (only
    possible for a 1x1 grayscale raster) returns zeros.
    """
    if masks.count > 0:
        total = masked_noise_sum(masks, channels, seed)
        mu = float(np.mean(total))
        std = float(np.sqrt(np.mean((total - mu) ** 2)))
        if std > 0.0:
            return (total - mu) / std

    fallback = gaussian_field(seed, FALLBACK_STREAM, (channels, masks.height, masks.width))
    mu = float(np.mean(fallback))
    std = float(np.sqrt(np.mean((fallback - mu) ** 2)))
    if std == 0.0:
        return np.zeros_like(fallback)
    return (fallback - mu) / std
