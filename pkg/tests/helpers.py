"""Shared test utilities: independent oracles and synthetic data.

Oracles here deliberately avoid the library's own code paths: PNG bytes
are crafted and parsed with stdlib zlib/struct, connected components with
a BFS flood fill, resampling with scalar kernel loops.
"""

from __future__ import annotations

import math
import struct
import zlib

import numpy as np


# ---------------------------------------------------------------- synthetic data

def acceptance_pairs(n: int, size: int, seedval: int):
    """(clean, degraded) two-tone pairs with band-interior plateau levels.

    The plateau values are drawn away from the segmenter's luminance
    quantization boundaries (multiples of 1/8), so small prediction errors
    cannot flip a pixel's band membership and the weight-map loss term
    stays flat near the data. The degraded input is a 3x3 edge-padded box
    blur of the clean image.
    """
    rng = np.random.Generator(np.random.Philox(seedval))
    pairs = []
    for _ in range(n):
        lo = rng.uniform(0.15, 0.20)
        hi = rng.uniform(0.78, 0.84)
        r0 = int(rng.integers(3, size - 2))
        c0 = int(rng.integers(3, size - 2))
        x0 = np.full((1, size, size), lo)
        x0[0, :r0, :c0] = hi
        pad = np.pad(x0, ((0, 0), (1, 1), (1, 1)), mode="edge")
        y = sum(
            pad[:, dy:dy + size, dx:dx + size]
            for dy in range(3)
            for dx in range(3)
        ) / 9.0
        pairs.append((x0, np.clip(y, 0.0, 1.0)))
    return pairs


def synth_pairs(n: int, size: int, seedval: int, channels: int = 1):
    """(clean, degraded) pairs: two-tone blocks + gradient, box-blurred."""
    rng = np.random.Generator(np.random.Philox(seedval))
    pairs = []
    for _ in range(n):
        x0 = np.zeros((channels, size, size))
        r0, c0 = rng.integers(1, size - 2, 2)
        hi, lo = rng.uniform(0.6, 0.95), rng.uniform(0.05, 0.4)
        x0[:] = lo
        x0[:, :r0, :c0] = hi
        x0 += 0.08 * np.linspace(0.0, 1.0, size)[None, None, :]
        if channels == 3:
            x0 *= rng.uniform(0.7, 1.0, size=(3, 1, 1))
        x0 = np.clip(x0, 0.0, 1.0)
        pad = np.pad(x0, ((0, 0), (1, 1), (1, 1)), mode="edge")
        y = sum(pad[:, dy : dy + size, dx : dx + size] for dy in range(3) for dx in range(3)) / 9.0
        pairs.append((x0, np.clip(y, 0.0, 1.0)))
    return pairs


# ---------------------------------------------------------------- PNG oracle

def _chunk(tag: bytes, payload: bytes) -> bytes:
    return (
        struct.pack(">I", len(payload))
        + tag
        + payload
        + struct.pack(">I", zlib.crc32(tag + payload) & 0xFFFFFFFF)
    )


def craft_png(pixels: np.ndarray, color_type: int, bit_depth: int = 8) -> bytes:
    """Minimal PNG encoder (filter 0 only). pixels: (H, W) for gray,
    (H, W, 3) for RGB, uint8 (or uint16 for bit_depth 16 gray)."""
    h, w = pixels.shape[:2]
    ihdr = struct.pack(">IIBBBBB", w, h, bit_depth, color_type, 0, 0, 0)
    rows = []
    for r in range(h):
        row = pixels[r]
        if bit_depth == 16:
            raw = b"".join(struct.pack(">H", int(v)) for v in np.atleast_1d(row).ravel())
        else:
            raw = bytes(np.atleast_1d(row).ravel().astype(np.uint8).tolist())
        rows.append(b"\x00" + raw)
    return (
        b"\x89PNG\r\n\x1a\n"
        + _chunk(b"IHDR", ihdr)
        + _chunk(b"IDAT", zlib.compress(b"".join(rows)))
        + _chunk(b"IEND", b"")
    )


def parse_png(data: bytes) -> tuple[np.ndarray, int]:
    """Minimal PNG decoder for 8-bit gray/RGB with all five filters.
    Returns (pixels uint8 (H, W) or (H, W, 3), color_type)."""
    assert data[:8] == b"\x89PNG\r\n\x1a\n", "bad signature"
    pos = 8
    width = height = bit_depth = color_type = None
    idat = b""
    while pos < len(data):
        (length,) = struct.unpack(">I", data[pos : pos + 4])
        tag = data[pos + 4 : pos + 8]
        payload = data[pos + 8 : pos + 8 + length]
        if tag == b"IHDR":
            width, height, bit_depth, color_type = struct.unpack(">IIBB", payload[:10])
        elif tag == b"IDAT":
            idat += payload
        pos += 12 + length
    assert bit_depth == 8, f"oracle parser only handles 8-bit, got {bit_depth}"
    nchan = {0: 1, 2: 3}[color_type]
    stride = width * nchan
    raw = zlib.decompress(idat)
    out = np.zeros((height, stride), dtype=np.int64)
    for r in range(height):
        ftype = raw[r * (stride + 1)]
        line = np.frombuffer(raw[r * (stride + 1) + 1 : (r + 1) * (stride + 1)], dtype=np.uint8)
        cur = line.astype(np.int64)
        prev = out[r - 1] if r > 0 else np.zeros(stride, dtype=np.int64)
        rec = np.zeros(stride, dtype=np.int64)
        for i in range(stride):
            left = rec[i - nchan] if i >= nchan else 0
            up = prev[i]
            upleft = prev[i - nchan] if i >= nchan else 0
            if ftype == 0:
                val = cur[i]
            elif ftype == 1:
                val = cur[i] + left
            elif ftype == 2:
                val = cur[i] + up
            elif ftype == 3:
                val = cur[i] + (left + up) // 2
            elif ftype == 4:
                p = left + up - upleft
                pa, pb, pc = abs(p - left), abs(p - up), abs(p - upleft)
                if pa <= pb and pa <= pc:
                    val = cur[i] + left
                elif pb <= pc:
                    val = cur[i] + up
                else:
                    val = cur[i] + upleft
            else:
                raise AssertionError(f"unknown filter {ftype}")
            rec[i] = val & 0xFF
        out[r] = rec
    pixels = out.astype(np.uint8)
    if nchan == 3:
        return pixels.reshape(height, width, 3), color_type
    return pixels.reshape(height, width), color_type


# ---------------------------------------------------------------- resampling oracle

def cubic_oracle(s: float) -> float:
    a = -0.5
    s = abs(s)
    if s < 1.0:
        return (a + 2.0) * s**3 - (a + 3.0) * s**2 + 1.0
    if s < 2.0:
        return a * s**3 - 5.0 * a * s**2 + 8.0 * a * s - 4.0 * a
    return 0.0


def upscale_oracle(img: np.ndarray, factor: int) -> np.ndarray:
    """Scalar-loop Catmull-Rom upscale with clamp-to-edge borders."""
    c, h, w = img.shape
    out = np.zeros((c, h * factor, w * factor))
    for ch in range(c):
        for oy in range(h * factor):
            sy = (oy + 0.5) / factor - 0.5
            by = math.floor(sy)
            for ox in range(w * factor):
                sx = (ox + 0.5) / factor - 0.5
                bx = math.floor(sx)
                acc = 0.0
                for ky in range(-1, 3):
                    yy = min(max(by + ky, 0), h - 1)
                    wy = cubic_oracle(sy - (by + ky))
                    for kx in range(-1, 3):
                        xx = min(max(bx + kx, 0), w - 1)
                        acc += img[ch, yy, xx] * wy * cubic_oracle(sx - (bx + kx))
                out[ch, oy, ox] = acc
    return out


# ---------------------------------------------------------------- components oracle

def flood_components(binary: np.ndarray) -> list[set[tuple[int, int]]]:
    """4-connected components of a boolean grid via BFS; returns pixel sets."""
    h, w = binary.shape
    seen = np.zeros_like(binary, dtype=bool)
    comps = []
    for r in range(h):
        for c in range(w):
            if not binary[r, c] or seen[r, c]:
                continue
            queue = [(r, c)]
            seen[r, c] = True
            comp = set()
            while queue:
                cy, cx = queue.pop()
                comp.add((cy, cx))
                for ny, nx in ((cy - 1, cx), (cy + 1, cx), (cy, cx - 1), (cy, cx + 1)):
                    if 0 <= ny < h and 0 <= nx < w and binary[ny, nx] and not seen[ny, nx]:
                        seen[ny, nx] = True
                        queue.append((ny, nx))
            comps.append(comp)
    return comps
