"""Preprocessing, sidecar auditing, and backbone error paths."""

import importlib.util
import json
import os
from pathlib import Path

import numpy as np
import pytest
from numpy.testing import assert_array_equal

import fmap
from fmap import FormatError, ValidationError
from fmap_extract import BackboneUnavailableError, extract, load_image, preprocess

HAVE_TRANSFORMERS = importlib.util.find_spec("transformers") is not None
HAVE_DIFFUSERS = importlib.util.find_spec("diffusers") is not None
REAL_BACKBONES = bool(os.environ.get("FMAP_EXTRACT_REAL_BACKBONES"))


def save_image(path, img):
    fmap.write_png(path, img)
    return path


def checkerboard(h, w, block=14):
    yy, xx = np.mgrid[0:h, 0:w]
    img = np.where(((yy // block + xx // block) % 2).astype(bool), 200, 40)
    return np.repeat(img[:, :, None], 3, axis=2).astype(np.uint8)


# ---------------------------------------------------------------------------
# preprocess geometry

def test_snap_to_patch_multiple(tmp_path):
    pre = preprocess(checkerboard(30, 29), patch=14)
    assert pre.pixels.shape == (28, 28, 3)
    assert pre.original_size == (30, 29)
    assert pre.crop_size == (30, 29)
    # snapped side stays within one patch of the cropped input
    assert abs(pre.pixels.shape[0] - pre.crop_size[0]) < 14
    assert abs(pre.pixels.shape[1] - pre.crop_size[1]) < 14


def test_no_resample_when_already_patch_multiple():
    img = checkerboard(28, 42)
    pre = preprocess(img, patch=14)
    assert_array_equal(pre.pixels, img)


def test_long_side_rescale():
    pre = preprocess(checkerboard(140, 70), patch=14, size=28)
    assert pre.pixels.shape == (28, 14, 3)


def test_bbox_crop_is_applied_and_recorded():
    img = checkerboard(56, 56)
    img[:, 28:] = 255  # right half saturated
    pre = preprocess(img, patch=14, bbox=(28, 0, 28, 56))
    assert pre.bbox == (28, 0, 28, 56)
    assert pre.crop_size == (56, 28)
    assert pre.pixels.shape == (56, 28, 3)
    assert pre.pixels.min() == 255


def test_bbox_must_fit_image():
    with pytest.raises(FormatError, match="bbox"):
        preprocess(checkerboard(28, 28), patch=14, bbox=(14, 0, 28, 28))


def test_tiny_image_snaps_up_to_one_patch():
    pre = preprocess(checkerboard(5, 5), patch=14)
    assert pre.pixels.shape == (14, 14, 3)


# ---------------------------------------------------------------------------
# extract(): grid file + sidecar

def test_extract_writes_grid_and_sidecar(tmp_path):
    img_path = save_image(tmp_path / "a.png", checkerboard(30, 29))
    out = tmp_path / "feats.npz"
    grid = extract(img_path, backbone="stub-14", layer=3, out_path=out)

    assert grid.data.shape == (2, 2, 768)
    assert grid.provenance == "stub-14:layer=3"
    assert grid.source_image_size == (28, 28)

    loaded = fmap.load_feature_grid(out)
    assert_array_equal(loaded.data, grid.data)
    assert loaded.provenance == grid.provenance

    doc = json.loads(out.with_suffix(".json").read_text())
    assert doc["backbone"] == "stub-14"
    assert doc["layer"] == 3
    assert doc["patch_size"] == 14
    assert doc["image_size"] == [28, 28]
    assert doc["provenance"] == "stub-14:layer=3"
    assert doc["preprocessing"]["original_size"] == [30, 29]
    assert doc["preprocessing"]["crop_size"] == [30, 29]
    assert doc["preprocessing"]["bbox"] is None
    # patch x grid reproduces the model input exactly
    assert [14 * s for s in grid.data.shape[:2]] == doc["image_size"]


def test_extract_bbox_changes_content_and_is_recorded(tmp_path):
    img = checkerboard(56, 56)
    img[:, 28:] = 255
    img_path = save_image(tmp_path / "a.png", img)
    full = extract(img_path, "stub-14", 3, tmp_path / "full.npz")
    crop = extract(img_path, "stub-14", 3, tmp_path / "crop.npz", bbox=(28, 0, 28, 56))
    assert crop.data.shape == (4, 2, 768)
    assert not np.array_equal(crop.data, full.data[:, :2])
    doc = json.loads((tmp_path / "crop.json").read_text())
    assert doc["preprocessing"]["bbox"] == [28, 0, 28, 56]
    assert doc["preprocessing"]["crop_size"] == [56, 28]


def test_extract_is_deterministic_on_disk(tmp_path):
    img_path = save_image(tmp_path / "a.png", checkerboard(28, 28))
    extract(img_path, "stub-14", 0, tmp_path / "x.npz")
    extract(img_path, "stub-14", 0, tmp_path / "y.npz")
    assert (tmp_path / "x.npz").read_bytes() == (tmp_path / "y.npz").read_bytes()


# ---------------------------------------------------------------------------
# error paths

def test_unknown_backbone_lists_available(tmp_path):
    img_path = save_image(tmp_path / "a.png", checkerboard(28, 28))
    with pytest.raises(ValidationError, match="stub-14"):
        extract(img_path, "resnet50", 0, tmp_path / "o.npz")


def test_bad_layer_lists_valid_layers(tmp_path):
    img_path = save_image(tmp_path / "a.png", checkerboard(28, 28))
    with pytest.raises(ValidationError, match="valid layers"):
        extract(img_path, "stub-14", 99, tmp_path / "o.npz")


def test_missing_image_raises_file_not_found(tmp_path):
    with pytest.raises(FileNotFoundError):
        extract(tmp_path / "nope.png", "stub-14", 0, tmp_path / "o.npz")


def test_undecodable_image_raises_format_error(tmp_path):
    bad = tmp_path / "bad.png"
    bad.write_bytes(b"not a png at all")
    with pytest.raises(FormatError, match="decode"):
        load_image(bad)


@pytest.mark.skipif(not HAVE_TRANSFORMERS, reason="transformers not installed")
def test_dino_weight_failure_is_actionable(tmp_path, monkeypatch):
    # simulate an offline cache miss; the error must point at a fix
    import transformers

    from fmap_extract import dino

    def boom(*args, **kwargs):
        raise OSError("no cached weights")

    monkeypatch.setattr(transformers.AutoModel, "from_pretrained", boom)
    monkeypatch.setattr(dino, "_models", {})
    img_path = save_image(tmp_path / "a.png", checkerboard(28, 28))
    with pytest.raises(BackboneUnavailableError, match="stub-14"):
        extract(img_path, "dinov2-b14", 11, tmp_path / "o.npz")


@pytest.mark.skipif(HAVE_DIFFUSERS, reason="diffusers installed; path not reachable")
def test_sd_without_diffusers_is_actionable(tmp_path):
    img_path = save_image(tmp_path / "a.png", checkerboard(64, 64))
    with pytest.raises(BackboneUnavailableError, match=r"fmap-extract\[sd\]"):
        extract(img_path, "sd15-up1", 1, tmp_path / "o.npz")


@pytest.mark.skipif(not REAL_BACKBONES,
                    reason="set FMAP_EXTRACT_REAL_BACKBONES=1 to run network-weight tests")
def test_dinov2_real_weights_smoke(tmp_path):
    img_path = save_image(tmp_path / "a.png", checkerboard(28, 28))
    grid = extract(img_path, "dinov2-b14", 11, tmp_path / "o.npz")
    assert grid.data.shape == (2, 2, 768)
    assert np.isfinite(grid.data).all()
