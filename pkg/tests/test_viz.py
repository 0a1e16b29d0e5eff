"""PNG encoding and the fixed colormaps, decoded back with stdlib zlib."""

import struct
import zlib

import numpy as np
import pytest
from numpy.testing import assert_array_equal

import fmap
from fmap.errors import ValidationError


def decode_png(path):
    """Minimal independent PNG reader for filter-0 8-bit RGB images."""
    blob = path.read_bytes()
    assert blob[:8] == b"\x89PNG\r\n\x1a\n"
    pos = 8
    chunks = {}
    while pos < len(blob):
        (length,) = struct.unpack(">I", blob[pos : pos + 4])
        tag = blob[pos + 4 : pos + 8]
        data = blob[pos + 8 : pos + 8 + length]
        crc = struct.unpack(">I", blob[pos + 8 + length : pos + 12 + length])[0]
        assert crc == zlib.crc32(tag + data) & 0xFFFFFFFF, f"bad crc on {tag}"
        chunks.setdefault(tag, b"")
        chunks[tag] += data
        pos += 12 + length
    w, h, depth, color = struct.unpack(">IIBB", chunks[b"IHDR"][:10])
    assert (depth, color) == (8, 2)  # 8-bit truecolor
    raw = zlib.decompress(chunks[b"IDAT"])
    stride = 1 + 3 * w
    rows = []
    for y in range(h):
        line = raw[y * stride : (y + 1) * stride]
        assert line[0] == 0, "only filter 0 expected"
        rows.append(np.frombuffer(line[1:], dtype=np.uint8).reshape(w, 3))
    return np.stack(rows)


# ---------------------------------------------------------------------------
# encoder

def test_png_roundtrip_exact(tmp_path):
    rgb = np.random.default_rng(0).integers(0, 256, size=(13, 9, 3), dtype=np.uint8)
    p = tmp_path / "img.png"
    fmap.write_png(p, rgb)
    assert_array_equal(decode_png(p), rgb)


def test_png_bytes_deterministic(tmp_path):
    rgb = np.random.default_rng(1).integers(0, 256, size=(6, 6, 3), dtype=np.uint8)
    a, b = tmp_path / "a.png", tmp_path / "b.png"
    fmap.write_png(a, rgb)
    fmap.write_png(b, rgb)
    assert a.read_bytes() == b.read_bytes()


def test_png_rejects_wrong_dtype(tmp_path):
    with pytest.raises(ValidationError):
        fmap.write_png(tmp_path / "x.png", np.zeros((4, 4, 3), dtype=np.float32))


# ---------------------------------------------------------------------------
# colormaps

def test_signed_render_endpoints_and_center():
    field = np.array([[-2.0, 0.0, 2.0]])
    rgb = fmap.render_signed(field)
    assert rgb.shape == (1, 3, 3)
    assert_array_equal(rgb[0, 0], [32, 64, 160])     # most negative: blue
    assert_array_equal(rgb[0, 1], [255, 255, 255])   # zero: white
    assert_array_equal(rgb[0, 2], [180, 32, 32])     # most positive: red


def test_signed_render_symmetric_about_zero():
    field = np.array([[-1.0, 1.0]])
    rgb = fmap.render_signed(field)
    # both endpoints saturate their respective anchor colors
    assert_array_equal(rgb[0, 0], [32, 64, 160])
    assert_array_equal(rgb[0, 1], [180, 32, 32])


def test_heat_render_range():
    vals = np.array([[0.0, 0.5, 1.0]])
    rgb = fmap.render_heat(vals, vmin=0.0, vmax=1.0)
    assert_array_equal(rgb[0, 0], [0, 0, 0])
    assert_array_equal(rgb[0, 2], [255, 255, 255])


def test_heat_render_autoscale_constant_field():
    rgb = fmap.render_heat(np.full((3, 3), 7.0))
    assert rgb.shape == (3, 3, 3)
    assert np.all(np.isfinite(rgb))


def test_rainbow_encodes_target_position():
    # hue follows target x, saturation follows target y; pixels matched to
    # the same target must share a color, different targets must differ
    corr_left = fmap.CorrespondenceField(target_index=np.zeros(4, dtype=np.int64),
                                         src_dims=(2, 2), tgt_dims=(4, 4))
    corr_right = fmap.CorrespondenceField(target_index=np.full(4, 3, dtype=np.int64),
                                          src_dims=(2, 2), tgt_dims=(4, 4))
    rgb_l = fmap.render_rainbow(corr_left)
    rgb_r = fmap.render_rainbow(corr_right)
    assert rgb_l.shape == (2, 2, 3)
    assert not np.array_equal(rgb_l, rgb_r)
    assert (rgb_l == rgb_l[0, 0]).all() and (rgb_r == rgb_r[0, 0]).all()


def test_rainbow_saturation_grows_with_target_y():
    def spread(target):
        corr = fmap.CorrespondenceField(target_index=np.full(4, target, dtype=np.int64),
                                        src_dims=(2, 2), tgt_dims=(4, 4))
        rgb = fmap.render_rainbow(corr).astype(int)
        return int(rgb.max() - rgb.min())

    # same target x (hue), larger target y: more saturated, channels spread
    assert spread(12) > spread(0)


def test_fmap_matrix_render_shape():
    C = np.random.default_rng(2).normal(size=(12, 12))
    rgb = fmap.render_fmap_matrix(C)
    assert rgb.shape == (12, 12, 3)
    assert rgb.dtype == np.uint8


def test_upscale_nearest_repeats_pixels():
    rgb = np.arange(12, dtype=np.uint8).reshape(2, 2, 3)
    up = fmap.upscale_nearest(rgb, 3)
    assert up.shape == (6, 6, 3)
    assert_array_equal(up[:3, :3], np.broadcast_to(rgb[0, 0], (3, 3, 3)))


def test_side_by_side_layout():
    left = np.zeros((4, 3, 3), dtype=np.uint8)
    right = np.full((4, 5, 3), 255, dtype=np.uint8)
    combo = fmap.side_by_side(left, right, gap=2)
    assert combo.shape == (4, 3 + 2 + 5, 3)
    assert_array_equal(combo[:, :3], left)
    assert_array_equal(combo[:, 5:], right)
