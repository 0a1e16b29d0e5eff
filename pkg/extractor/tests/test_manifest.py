"""Pair-config ingestion: four grids plus manifest, path resolution, errors."""

import json
from pathlib import Path

import numpy as np
import pytest

import fmap
from fmap import FormatError
from fmap_extract import extract_pair_manifest
from fmap_extract.cli import main as cli_main


def make_pair_config(tmp_path, **overrides):
    rng = np.random.default_rng(0)
    for name in ("a.png", "b.png"):
        img = rng.integers(0, 256, size=(28, 42, 3), dtype=np.uint8)
        fmap.write_png(tmp_path / name, img)
    config = {
        "image_m": "a.png",
        "image_n": "b.png",
        "basis": {"backbone": "stub-14", "layer": 11},
        "loss": {"backbone": "stub-14", "layer": 9},
        "out_dir": "features",
    }
    config.update(overrides)
    config_path = tmp_path / "pair.json"
    config_path.write_text(json.dumps(config))
    return config_path


def test_manifest_roundtrip(tmp_path):
    config_path = make_pair_config(tmp_path)
    manifest = extract_pair_manifest(config_path)

    assert sorted(manifest["files"]) == ["basis_m", "basis_n", "loss_m", "loss_n"]
    for role, path in manifest["files"].items():
        grid = fmap.load_feature_grid(path)
        assert grid.data.shape == (2, 3, 768)
        layer = 11 if role.startswith("basis") else 9
        assert grid.provenance == f"stub-14:layer={layer}"
        assert Path(path).with_suffix(".json").exists()

    # relative out_dir resolves against the config's directory
    assert Path(manifest["files"]["basis_m"]).parent == tmp_path / "features"
    on_disk = json.loads(Path(manifest["manifest_path"]).read_text())
    assert on_disk["files"] == manifest["files"]
    assert on_disk["config"]["basis"] == {"backbone": "stub-14", "layer": 11}


def test_manifest_same_image_same_layer_grids_match(tmp_path):
    config_path = make_pair_config(tmp_path, image_n="a.png")
    manifest = extract_pair_manifest(config_path)
    m = fmap.load_feature_grid(manifest["files"]["basis_m"])
    n = fmap.load_feature_grid(manifest["files"]["basis_n"])
    assert np.array_equal(m.data, n.data)


def test_manifest_applies_bbox_per_image(tmp_path):
    config_path = make_pair_config(tmp_path, bbox_m=[0, 0, 28, 28])
    manifest = extract_pair_manifest(config_path)
    m = fmap.load_feature_grid(manifest["files"]["basis_m"])
    n = fmap.load_feature_grid(manifest["files"]["basis_n"])
    assert m.data.shape == (2, 2, 768)
    assert n.data.shape == (2, 3, 768)


def test_manifest_missing_image_raises(tmp_path):
    config_path = make_pair_config(tmp_path, image_n="missing.png")
    with pytest.raises(FileNotFoundError, match="image_n"):
        extract_pair_manifest(config_path)


def test_manifest_malformed_json_raises(tmp_path):
    config_path = tmp_path / "pair.json"
    config_path.write_text("{not json")
    with pytest.raises(FormatError, match="malformed"):
        extract_pair_manifest(config_path)


def test_manifest_missing_keys_raises(tmp_path):
    config_path = tmp_path / "pair.json"
    config_path.write_text(json.dumps({"image_m": "a.png"}))
    with pytest.raises(FormatError, match="missing keys"):
        extract_pair_manifest(config_path)


def test_cli_pair_mode(tmp_path, capsys):
    config_path = make_pair_config(tmp_path)
    assert cli_main(["--pair-config", str(config_path)]) == 0
    files = json.loads(capsys.readouterr().out)
    assert sorted(files) == ["basis_m", "basis_n", "loss_m", "loss_n"]
    assert all(Path(p).exists() for p in files.values())


def test_cli_pair_mode_bad_config_exits_3(tmp_path, capsys):
    config_path = tmp_path / "pair.json"
    config_path.write_text("{not json")
    assert cli_main(["--pair-config", str(config_path)]) == 3
    assert "error:" in capsys.readouterr().err
