"""On-disk formats, checked against stdlib-crafted PNG bytes and raw structs.

The PNG oracle in helpers.py encodes/decodes with zlib + struct only, so the
library's Pillow-backed reader and writer are each verified against an
independent route.
"""

import struct

import numpy as np
import pytest

from helpers import craft_png, parse_png
from samsr.diffusion import ToyDenoiser
from samsr.imageio import (
    FileFormatError,
    atomic_write_bytes,
    load_denoiser,
    load_image,
    load_mask_stack,
    load_tensor,
    save_denoiser,
    save_image,
    save_mask_stack,
    save_tensor,
)
from samsr.masks import MaskStack


class TestLoadImage:
    def test_decodes_handcrafted_gray_png(self, tmp_path):
        pixels = np.array([[0, 51], [128, 255]], dtype=np.uint8)
        p = tmp_path / "g.png"
        p.write_bytes(craft_png(pixels, color_type=0))
        img = load_image(p)
        assert img.shape == (1, 2, 2)
        expected = pixels.astype(np.float64) / 255.0
        assert np.array_equal(img[0], expected)

    def test_decodes_handcrafted_rgb_png(self, tmp_path):
        pixels = np.array([[[255, 0, 51], [0, 128, 255]]], dtype=np.uint8)
        p = tmp_path / "c.png"
        p.write_bytes(craft_png(pixels, color_type=2))
        img = load_image(p)
        assert img.shape == (3, 1, 2)
        assert img[0, 0, 0] == 1.0
        assert img[1, 0, 1] == 128.0 / 255.0
        assert img[2, 0, 0] == 51.0 / 255.0

    def test_exact_division_by_255(self, tmp_path):
        # Each decoded level must be exactly v / 255 in float64.
        pixels = np.arange(256, dtype=np.uint8).reshape(16, 16)
        p = tmp_path / "ramp.png"
        p.write_bytes(craft_png(pixels, color_type=0))
        img = load_image(p)
        want = np.arange(256, dtype=np.float64).reshape(16, 16) / 255.0
        assert np.array_equal(img[0], want)

    def test_missing_file_raises_file_not_found(self, tmp_path):
        with pytest.raises(FileNotFoundError):
            load_image(tmp_path / "missing.png")

    def test_sixteen_bit_png_rejected(self, tmp_path):
        pixels = np.array([[0, 65535]], dtype=np.uint16)
        p = tmp_path / "deep.png"
        p.write_bytes(craft_png(pixels, color_type=0, bit_depth=16))
        with pytest.raises(FileFormatError):
            load_image(p)

    def test_garbage_bytes_rejected(self, tmp_path):
        p = tmp_path / "junk.png"
        p.write_bytes(b"this is not a png at all")
        with pytest.raises(Exception):
            load_image(p)


class TestSaveImage:
    def test_written_bytes_decode_with_stdlib_oracle(self, tmp_path):
        rng = np.random.Generator(np.random.Philox(21))
        img = rng.random((1, 5, 7))
        p = tmp_path / "out.png"
        save_image(img, p)
        pixels, color_type = parse_png(p.read_bytes())
        assert color_type == 0
        want = np.rint(img[0] * 255.0).astype(np.uint8)
        assert np.array_equal(pixels, want)

    def test_rgb_written_bytes_decode_with_stdlib_oracle(self, tmp_path):
        rng = np.random.Generator(np.random.Philox(22))
        img = rng.random((3, 4, 6))
        p = tmp_path / "out.png"
        save_image(img, p)
        pixels, color_type = parse_png(p.read_bytes())
        assert color_type == 2
        want = np.rint(img * 255.0).astype(np.uint8).transpose(1, 2, 0)
        assert np.array_equal(pixels, want)

    def test_round_trip_error_bounded_by_half_level(self, tmp_path):
        rng = np.random.Generator(np.random.Philox(23))
        img = rng.random((3, 8, 8))
        p = tmp_path / "rt.png"
        save_image(img, p)
        back = load_image(p)
        assert np.max(np.abs(back - img)) <= 0.5 / 255.0 + 1e-12

    def test_round_trip_exact_on_8bit_lattice(self, tmp_path):
        img = (np.arange(64, dtype=np.float64).reshape(1, 8, 8) * 4.0) / 255.0
        p = tmp_path / "lattice.png"
        save_image(img, p)
        assert np.array_equal(load_image(p), img)

    def test_out_of_range_values_clamped(self, tmp_path):
        img = np.array([[[-3.0, 0.5, 7.0]]])
        p = tmp_path / "clamp.png"
        save_image(img, p)
        back = load_image(p)
        assert back[0, 0, 0] == 0.0
        assert back[0, 0, 2] == 1.0

    def test_no_temp_files_left_behind(self, tmp_path):
        save_image(np.zeros((1, 2, 2)), tmp_path / "a.png")
        leftovers = [f for f in tmp_path.iterdir() if f.suffix == ".tmp"]
        assert leftovers == []


class TestMaskDir:
    def test_round_trip_preserves_order_and_bits(self, tmp_path):
        rng = np.random.Generator(np.random.Philox(31))
        data = (rng.random((4, 6, 5)) > 0.5).astype(float)
        stack = MaskStack(data)
        d = tmp_path / "masks"
        save_mask_stack(stack, d)
        back = load_mask_stack(d)
        assert back.count == 4
        assert np.array_equal(back.data, data)

    def test_manifest_lists_files_in_order(self, tmp_path):
        data = np.zeros((3, 2, 2))
        data[:, 0, 0] = 1.0
        d = tmp_path / "m"
        save_mask_stack(MaskStack(data), d)
        names = (d / "manifest.txt").read_text().split()
        assert names == ["mask_000.png", "mask_001.png", "mask_002.png"]

    def test_manifest_order_overrides_filename_order(self, tmp_path):
        d = tmp_path / "m"
        a = np.zeros((2, 2), dtype=np.uint8)
        b = np.full((2, 2), 255, dtype=np.uint8)
        (d).mkdir()
        (d / "a.png").write_bytes(craft_png(a, color_type=0))
        (d / "b.png").write_bytes(craft_png(b, color_type=0))
        (d / "manifest.txt").write_text("b.png\na.png\n")
        stack = load_mask_stack(d)
        assert np.array_equal(stack.data[0], np.ones((2, 2)))
        assert np.array_equal(stack.data[1], np.zeros((2, 2)))

    def test_empty_stack_round_trip_with_size_hint(self, tmp_path):
        d = tmp_path / "m"
        save_mask_stack(MaskStack.empty(4, 6), d)
        back = load_mask_stack(d, height=4, width=6)
        assert back.count == 0
        assert (back.height, back.width) == (4, 6)

    def test_missing_manifest_raises(self, tmp_path):
        d = tmp_path / "m"
        d.mkdir()
        with pytest.raises(FileNotFoundError):
            load_mask_stack(d)

    def test_mixed_sizes_rejected(self, tmp_path):
        d = tmp_path / "m"
        d.mkdir()
        (d / "a.png").write_bytes(craft_png(np.zeros((2, 2), dtype=np.uint8), color_type=0))
        (d / "b.png").write_bytes(craft_png(np.zeros((3, 3), dtype=np.uint8), color_type=0))
        (d / "manifest.txt").write_text("a.png\nb.png\n")
        with pytest.raises(FileFormatError):
            load_mask_stack(d)

    def test_nonzero_pixels_count_as_one(self, tmp_path):
        d = tmp_path / "m"
        d.mkdir()
        px = np.array([[0, 1], [128, 255]], dtype=np.uint8)
        (d / "a.png").write_bytes(craft_png(px, color_type=0))
        (d / "manifest.txt").write_text("a.png\n")
        stack = load_mask_stack(d)
        assert np.array_equal(stack.data[0], [[0.0, 1.0], [1.0, 1.0]])

    def test_soft_stack_rejected_by_writer(self, tmp_path):
        soft = MaskStack(np.full((1, 2, 2), 0.5), binary=False)
        with pytest.raises(ValueError):
            save_mask_stack(soft, tmp_path / "m")


class TestTensorFile:
    def test_round_trip_bit_exact(self, tmp_path):
        rng = np.random.Generator(np.random.Philox(41))
        arr = rng.standard_normal((3, 5, 7)) * 1e6
        p = tmp_path / "t.bin"
        save_tensor(arr, p)
        back = load_tensor(p)
        assert back.shape == (3, 5, 7)
        assert np.array_equal(back, arr)

    def test_header_layout(self, tmp_path):
        arr = np.arange(6, dtype=np.float64).reshape(1, 2, 3)
        p = tmp_path / "t.bin"
        save_tensor(arr, p)
        raw = p.read_bytes()
        assert raw[:4] == b"SMSR"
        assert struct.unpack("<III", raw[4:16]) == (1, 2, 3)
        assert len(raw) == 16 + 8 * 6
        payload = np.frombuffer(raw[16:], dtype="<f8")
        assert np.array_equal(payload, np.arange(6, dtype=np.float64))

    def test_two_d_input_promoted(self, tmp_path):
        p = tmp_path / "t.bin"
        save_tensor(np.ones((2, 2)), p)
        assert load_tensor(p).shape == (1, 2, 2)

    def test_bad_magic_rejected(self, tmp_path):
        p = tmp_path / "t.bin"
        p.write_bytes(b"XXXX" + b"\x00" * 20)
        with pytest.raises(FileFormatError):
            load_tensor(p)

    def test_truncated_payload_rejected(self, tmp_path):
        p = tmp_path / "t.bin"
        save_tensor(np.ones((1, 2, 2)), p)
        raw = p.read_bytes()
        p.write_bytes(raw[:-8])
        with pytest.raises(FileFormatError):
            load_tensor(p)

    def test_missing_file_raises_file_not_found(self, tmp_path):
        with pytest.raises(FileNotFoundError):
            load_tensor(tmp_path / "nope.bin")

    def test_nonfinite_values_survive(self, tmp_path):
        arr = np.array([[[np.inf, -np.inf], [np.nan, 0.0]]])
        p = tmp_path / "t.bin"
        save_tensor(arr, p)
        back = load_tensor(p)
        assert np.isposinf(back[0, 0, 0])
        assert np.isneginf(back[0, 0, 1])
        assert np.isnan(back[0, 1, 0])


class TestDenoiserFile:
    def test_round_trip(self, tmp_path):
        rng = np.random.Generator(np.random.Philox(51))
        den = ToyDenoiser(3, num_steps=12)
        den.set_param_vector(rng.standard_normal(den.get_param_vector().size))
        p = tmp_path / "d.params"
        save_denoiser(den, p)
        back = load_denoiser(p)
        assert back.channels == 3
        assert back.num_steps == 12
        assert np.array_equal(back.get_param_vector(), den.get_param_vector())

    def test_header_layout(self, tmp_path):
        den = ToyDenoiser(1, num_steps=15)
        p = tmp_path / "d.params"
        save_denoiser(den, p)
        raw = p.read_bytes()
        assert raw[:4] == b"SMSP"
        channels, steps, count = struct.unpack("<III", raw[4:16])
        assert (channels, steps) == (1, 15)
        assert count == den.get_param_vector().size
        assert len(raw) == 16 + 8 * count

    def test_bad_magic_rejected(self, tmp_path):
        p = tmp_path / "d.params"
        p.write_bytes(b"SMSR" + b"\x00" * 12)
        with pytest.raises(FileFormatError):
            load_denoiser(p)

    def test_truncation_rejected(self, tmp_path):
        den = ToyDenoiser(1)
        p = tmp_path / "d.params"
        save_denoiser(den, p)
        p.write_bytes(p.read_bytes()[:-4])
        with pytest.raises(FileFormatError):
            load_denoiser(p)

    def test_only_toy_denoiser_serializable(self, tmp_path):
        from samsr.diffusion import OracleDenoiser

        with pytest.raises(TypeError):
            save_denoiser(OracleDenoiser(), tmp_path / "d.params")


class TestAtomicWrite:
    def test_overwrites_existing_file(self, tmp_path):
        p = tmp_path / "f.bin"
        atomic_write_bytes(p, b"old")
        atomic_write_bytes(p, b"new")
        assert p.read_bytes() == b"new"

    def test_no_temp_residue(self, tmp_path):
        atomic_write_bytes(tmp_path / "f.bin", b"payload")
        assert [f.name for f in tmp_path.iterdir()] == ["f.bin"]
