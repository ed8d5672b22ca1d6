"""On-disk formats: 8-bit PNG rasters, mask directories, float64 tensors,
denoiser parameter files.

Every writer goes through an atomic temp-file + rename so a crashed run
never leaves a torn artifact behind. All binary headers are little-endian.

Formats:
  image      8-bit grayscale or RGB PNG; decode maps v -> v / 255 exactly,
             encode clamps to [0, 1] then rounds v * 255 to nearest.
  mask dir   mask_###.png (8-bit grayscale, 0 or 255) plus manifest.txt
             listing the filenames in stack order, one per line.
  tensor     b"SMSR" + uint32 (channels, height, width) + float64 payload.
  params     b"SMSP" + uint32 (channels, num_steps, count) + float64 payload.
"""

from __future__ import annotations

import io
import os
import struct
import tempfile
from pathlib import Path

import numpy as np
from PIL import Image

from .masks import MaskStack
from .validation import as_image, clamp01

TENSOR_MAGIC = b"SMSR"
PARAMS_MAGIC = b"SMSP"
MANIFEST_NAME = "manifest.txt"


class FileFormatError(ValueError):
    """A file exists but its bytes do not parse as the expected format."""


def atomic_write_bytes(path, data: bytes) -> None:
    """Write bytes to ``path`` via a same-directory temp file + rename."""
    path = Path(path)
    fd, tmp = tempfile.mkstemp(prefix=path.name + ".", suffix=".tmp", dir=path.parent)
    try:
        with os.fdopen(fd, "wb") as fh:
            fh.write(data)
        os.replace(tmp, path)
    except BaseException:
        try:
            os.unlink(tmp)
        except OSError:
            pass
        raise


def atomic_write_text(path, text: str) -> None:
    atomic_write_bytes(path, text.encode("utf-8"))


def load_image(path) -> np.ndarray:
    """Decode an 8-bit grayscale or RGB PNG to a float64 (C, H, W) raster."""
    path = Path(path)
    if not path.is_file():
        raise FileNotFoundError(f"no such image: {path}")
    with Image.open(path) as img:
        if img.mode not in ("L", "RGB"):
            raise FileFormatError(
                f"{path}: unsupported image mode {img.mode!r}; expected 8-bit L or RGB"
            )
        arr = np.asarray(img, dtype=np.float64) / 255.0
    if arr.ndim == 2:
        return arr[np.newaxis]
    return np.ascontiguousarray(arr.transpose(2, 0, 1))


def save_image(img, path) -> None:
    """Encode a (C, H, W) raster to PNG, clamping to [0, 1] first."""
    a = clamp01(as_image(img))
    q = np.rint(a * 255.0).astype(np.uint8)
    if q.shape[0] == 1:
        pil = Image.fromarray(q[0], mode="L")
    else:
        pil = Image.fromarray(q.transpose(1, 2, 0), mode="RGB")
    buf = io.BytesIO()
    pil.save(buf, format="PNG")
    atomic_write_bytes(path, buf.getvalue())


def save_mask_stack(stack: MaskStack, dirpath) -> None:
    """Write a binary stack as mask_###.png files plus a manifest."""
    if not isinstance(stack, MaskStack):
        raise TypeError("save_mask_stack: expected a MaskStack")
    if not stack.binary:
        raise ValueError("save_mask_stack: stack must be binary; threshold it first")
    dirpath = Path(dirpath)
    dirpath.mkdir(parents=True, exist_ok=True)
    names = []
    for i in range(stack.count):
        name = f"mask_{i:03d}.png"
        save_image(stack.data[i][np.newaxis], dirpath / name)
        names.append(name)
    atomic_write_text(dirpath / MANIFEST_NAME, "".join(n + "\n" for n in names))


def load_mask_stack(dirpath, *, height: int | None = None, width: int | None = None) -> MaskStack:
    """Read a mask directory back into a binary MaskStack.

    The manifest fixes the stack order. Any nonzero pixel counts as 1. An
    empty manifest yields M = 0, which needs the raster size from the
    caller (or it defaults to 1x1).
    """
    dirpath = Path(dirpath)
    manifest = dirpath / MANIFEST_NAME
    if not manifest.is_file():
        raise FileNotFoundError(f"mask dir {dirpath}: missing {MANIFEST_NAME}")
    names = [ln.strip() for ln in manifest.read_text(encoding="utf-8").splitlines() if ln.strip()]
    planes = []
    for name in names:
        img = load_image(dirpath / name)
        if img.shape[0] != 1:
            raise FileFormatError(f"mask {dirpath / name}: expected grayscale, got {img.shape[0]} channels")
        planes.append((img[0] > 0.0).astype(np.float64))
    if not planes:
        h = height if height is not None else 1
        w = width if width is not None else 1
        return MaskStack.empty(h, w)
    shapes = {p.shape for p in planes}
    if len(shapes) != 1:
        raise FileFormatError(f"mask dir {dirpath}: masks disagree on raster size: {sorted(shapes)}")
    return MaskStack(np.stack(planes), binary=True)


def save_tensor(arr, path) -> None:
    """Write a float64 (C, H, W) tensor with a 16-byte header."""
    a = np.asarray(arr, dtype=np.float64)
    if a.ndim == 2:
        a = a[np.newaxis]
    if a.ndim != 3:
        raise ValueError(f"save_tensor: expected (C, H, W), got shape {a.shape}")
    header = TENSOR_MAGIC + struct.pack("<III", *a.shape)
    atomic_write_bytes(path, header + a.astype("<f8").tobytes())


def load_tensor(path) -> np.ndarray:
    path = Path(path)
    if not path.is_file():
        raise FileNotFoundError(f"no such tensor file: {path}")
    raw = path.read_bytes()
    if len(raw) < 16 or raw[:4] != TENSOR_MAGIC:
        raise FileFormatError(f"{path}: not a tensor file (bad magic)")
    c, h, w = struct.unpack("<III", raw[4:16])
    expected = 16 + 8 * c * h * w
    if len(raw) != expected:
        raise FileFormatError(f"{path}: truncated tensor file ({len(raw)} bytes, expected {expected})")
    data = np.frombuffer(raw[16:], dtype="<f8").reshape(c, h, w)
    return np.ascontiguousarray(data)


def save_denoiser(den, path) -> None:
    """Serialize a ToyDenoiser's flat parameter vector with its shape header."""
    from .diffusion import ToyDenoiser

    if not isinstance(den, ToyDenoiser):
        raise TypeError("save_denoiser: only ToyDenoiser parameters are serializable")
    theta = den.get_param_vector()
    header = PARAMS_MAGIC + struct.pack("<III", den.channels, den.num_steps, theta.size)
    atomic_write_bytes(path, header + theta.astype("<f8").tobytes())


def load_denoiser(path):
    from .diffusion import ToyDenoiser

    path = Path(path)
    if not path.is_file():
        raise FileNotFoundError(f"no such params file: {path}")
    raw = path.read_bytes()
    if len(raw) < 16 or raw[:4] != PARAMS_MAGIC:
        raise FileFormatError(f"{path}: not a denoiser params file (bad magic)")
    channels, num_steps, count = struct.unpack("<III", raw[4:16])
    if len(raw) != 16 + 8 * count:
        raise FileFormatError(f"{path}: truncated params file")
    theta = np.frombuffer(raw[16:], dtype="<f8").copy()
    return ToyDenoiser(channels, num_steps=num_steps, params=theta)
