"""Feature-grid container, tensor file round-trips, keypoint I/O, resampling."""

import json

import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st
from numpy.testing import assert_allclose, assert_array_equal

import fmap
from fmap.errors import FormatError, ShapeError, ValidationError


# ---------------------------------------------------------------------------
# FeatureGrid invariants

def test_grid_basic_properties():
    data = np.arange(24, dtype=np.float32).reshape(2, 3, 4)
    g = fmap.FeatureGrid(data=data, source_image_size=(28, 42))
    assert (g.h, g.w, g.d, g.n) == (2, 3, 4, 6)
    assert g.flat().shape == (6, 4)
    # node order is y*w + x: node 4 is (x=1, y=1)
    assert_array_equal(g.flat()[4], data[1, 1])


def test_grid_is_immutable():
    g = fmap.FeatureGrid(data=np.zeros((2, 2, 1), dtype=np.float32))
    with pytest.raises(ValueError):
        g.data[0, 0, 0] = 1.0


def test_grid_rejects_bad_shapes():
    with pytest.raises(ShapeError):
        fmap.FeatureGrid(data=np.zeros((4, 4), dtype=np.float32))
    with pytest.raises(ValidationError):
        fmap.FeatureGrid(data=np.zeros((1, 4, 2), dtype=np.float32))
    bad = np.zeros((3, 3, 2), dtype=np.float32)
    bad[1, 1, 0] = np.nan
    with pytest.raises(ValidationError):
        fmap.FeatureGrid(data=bad)


def test_grid_default_image_size_falls_back_to_grid_dims():
    g = fmap.FeatureGrid(data=np.zeros((5, 7, 2), dtype=np.float32))
    assert g.source_image_size == (5, 7)


def test_content_hash_changes_with_data_and_shape():
    a = fmap.FeatureGrid(data=np.zeros((2, 4, 2), dtype=np.float32))
    b = fmap.FeatureGrid(data=np.zeros((4, 2, 2), dtype=np.float32))
    c_data = np.zeros((2, 4, 2), dtype=np.float32)
    c_data[0, 0, 0] = 1e-7
    c = fmap.FeatureGrid(data=c_data)
    assert a.content_hash() != b.content_hash()
    assert a.content_hash() != c.content_hash()
    assert a.content_hash() == fmap.FeatureGrid(data=np.zeros((2, 4, 2), dtype=np.float32)).content_hash()


# ---------------------------------------------------------------------------
# tensor files

def test_tensor_roundtrip_exact(tmp_path):
    arr = np.random.default_rng(3).normal(size=(5, 6, 7)).astype(np.float32)
    p = tmp_path / "t.npy"
    fmap.save_tensor(p, arr)
    back = fmap.load_tensor(p)
    assert back.dtype == np.float32
    assert_array_equal(back, arr)


def test_tensor_file_is_plain_npy(tmp_path):
    p = tmp_path / "t.npy"
    fmap.save_tensor(p, np.ones((2, 2), dtype=np.float32))
    raw = p.read_bytes()
    assert raw.startswith(b"\x93NUMPY\x01\x00")  # v1.0 magic
    # numpy itself can read it with no custom code
    assert_array_equal(np.load(p), np.ones((2, 2), dtype=np.float32))


def test_load_tensor_rejects_garbage(tmp_path):
    p = tmp_path / "bad.npy"
    p.write_bytes(b"definitely not a tensor")
    with pytest.raises(FormatError):
        fmap.load_tensor(p)


def test_load_tensor_rejects_non_float(tmp_path):
    p = tmp_path / "ints.npy"
    np.save(p, np.arange(4, dtype=np.int64))
    with pytest.raises(FormatError):
        fmap.load_tensor(p)


@settings(max_examples=25, deadline=None)
@given(
    h=st.integers(2, 6), w=st.integers(2, 6), d=st.integers(1, 5),
    seed=st.integers(0, 2**16),
)
def test_grid_roundtrip_property(tmp_path_factory, h, w, d, seed):
    tmp = tmp_path_factory.mktemp("grids")
    data = np.random.default_rng(seed).normal(size=(h, w, d)).astype(np.float32)
    g = fmap.FeatureGrid(data=data, source_image_size=(h * 3, w * 5), provenance="unit")
    path = tmp / "g.npy"
    fmap.save_feature_grid(g, path)
    back = fmap.load_feature_grid(path)
    assert_array_equal(back.data, g.data)
    assert back.source_image_size == g.source_image_size
    assert back.provenance == "unit"


def test_grid_sidecar_optional(tmp_path):
    g = fmap.FeatureGrid(data=np.ones((3, 4, 2), dtype=np.float32))
    p = tmp_path / "g.npy"
    fmap.save_feature_grid(g, p)
    (tmp_path / "g.json").unlink()
    back = fmap.load_feature_grid(p)
    assert back.source_image_size == (3, 4)
    assert back.provenance == "unknown"


def test_grid_sidecar_malformed_json_raises(tmp_path):
    g = fmap.FeatureGrid(data=np.ones((3, 4, 2), dtype=np.float32))
    p = tmp_path / "g.npy"
    fmap.save_feature_grid(g, p)
    (tmp_path / "g.json").write_text("{not json")
    with pytest.raises(FormatError):
        fmap.load_feature_grid(p)


# ---------------------------------------------------------------------------
# keypoints

def test_keypoints_roundtrip(tmp_path):
    pairs = np.array([[[1.0, 2.0], [3.0, 4.0]], [[5.0, 6.0], [7.0, 8.0]]])
    kp = fmap.KeypointSet(pairs=pairs, src_size=(10, 12), tgt_size=(14, 16),
                          threshold_basis="bbox", bbox_size=(9, 9))
    p = tmp_path / "kp.json"
    fmap.save_keypoints(kp, p)
    back = fmap.load_keypoints(p)
    assert_array_equal(back.pairs, pairs)
    assert back.src_size == (10, 12)
    assert back.tgt_size == (14, 16)
    assert back.threshold_dims() == (9, 9)


def test_keypoints_threshold_dims_image_basis():
    kp = fmap.KeypointSet(pairs=np.zeros((1, 2, 2)), src_size=(10, 12), tgt_size=(14, 16))
    assert kp.threshold_dims() == (14, 16)


def test_keypoints_out_of_bounds_rejected():
    with pytest.raises(ValidationError):
        fmap.KeypointSet(pairs=np.array([[[11.0, 0.0], [0.0, 0.0]]]),
                         src_size=(10, 10), tgt_size=(10, 10))


def test_keypoints_bbox_basis_requires_bbox():
    with pytest.raises(ValidationError):
        fmap.KeypointSet(pairs=np.zeros((1, 2, 2)), src_size=(4, 4), tgt_size=(4, 4),
                         threshold_basis="bbox")


def test_keypoints_missing_field_raises(tmp_path):
    p = tmp_path / "kp.json"
    p.write_text(json.dumps({"pairs": [[[0, 0], [0, 0]]], "src_size": [4, 4]}))
    with pytest.raises(FormatError):
        fmap.load_keypoints(p)


# ---------------------------------------------------------------------------
# resampling (align-corners bilinear)

def test_resize_identity_is_bitexact():
    g = fmap.FeatureGrid(data=np.random.default_rng(1).normal(size=(6, 5, 3)).astype(np.float32))
    out = fmap.resize_feature_grid(g, 6, 5)
    assert_array_equal(out.data, g.data)


def test_resize_constant_field_stays_constant():
    g = fmap.FeatureGrid(data=np.full((4, 4, 2), 3.25, dtype=np.float32))
    out = fmap.resize_feature_grid(g, 9, 7)
    assert_array_equal(out.data, np.full((9, 7, 2), 3.25, dtype=np.float32))


def test_resize_linear_ramp_exact():
    # align-corners bilinear reproduces linear functions of the index exactly
    h, w = 4, 5
    y, x = np.mgrid[0:h, 0:w].astype(np.float64)
    field = (2.0 * x + 3.0 * y)[..., None].astype(np.float32)
    g = fmap.FeatureGrid(data=field)
    h2, w2 = 7, 9
    out = fmap.resize_feature_grid(g, h2, w2)
    y2 = np.arange(h2) * (h - 1) / (h2 - 1)
    x2 = np.arange(w2) * (w - 1) / (w2 - 1)
    expected = 2.0 * x2[None, :] + 3.0 * y2[:, None]
    assert_allclose(out.data[..., 0], expected, atol=1e-5)


def test_resize_corners_are_preserved():
    g = fmap.FeatureGrid(data=np.random.default_rng(2).normal(size=(5, 6, 2)).astype(np.float32))
    out = fmap.resize_feature_grid(g, 11, 13)
    assert_allclose(out.data[0, 0], g.data[0, 0], atol=1e-6)
    assert_allclose(out.data[0, -1], g.data[0, -1], atol=1e-6)
    assert_allclose(out.data[-1, 0], g.data[-1, 0], atol=1e-6)
    assert_allclose(out.data[-1, -1], g.data[-1, -1], atol=1e-6)


def test_scalar_function_shape_guard():
    with pytest.raises(ShapeError):
        fmap.ScalarFunction(values=np.zeros(5), h=2, w=3)
