"""One-command ingestion of an image pair into the four grids `fmap match`
consumes.

Config JSON:

    {
      "image_m": "a.png", "image_n": "b.png",
      "basis": {"backbone": "dinov2-b14", "layer": 11},
      "loss":  {"backbone": "sd15-up1",   "layer": 1},
      "size": 518,                # optional long-side target
      "bbox_m": [x, y, w, h],     # optional, likewise bbox_n
      "out_dir": "features/"
    }

Writes basis_m/basis_n/loss_m/loss_n .npy files plus manifest.json mapping
roles to paths.
"""

import json
from pathlib import Path

from fmap import FormatError

from .extract import extract

_ROLES = ("basis_m", "basis_n", "loss_m", "loss_n")


def extract_pair_manifest(config_path: str | Path) -> dict:
    config_path = Path(config_path)
    try:
        config = json.loads(config_path.read_text())
    except FileNotFoundError:
        raise
    except json.JSONDecodeError as exc:
        raise FormatError(f"{config_path}: malformed config JSON ({exc})") from exc

    missing = [key for key in ("image_m", "image_n", "basis", "loss", "out_dir")
               if key not in config]
    if missing:
        raise FormatError(f"{config_path}: missing keys {missing}")

    out_dir = Path(config["out_dir"])
    if not out_dir.is_absolute():
        out_dir = config_path.parent / out_dir
    out_dir.mkdir(parents=True, exist_ok=True)
    size = config.get("size")

    files = {}
    for role in _ROLES:
        which, image_key = ("basis", "image_m") if role == "basis_m" else \
                           ("basis", "image_n") if role == "basis_n" else \
                           ("loss", "image_m") if role == "loss_m" else ("loss", "image_n")
        image_path = Path(config[image_key])
        if not image_path.is_absolute():
            image_path = config_path.parent / image_path
        if not image_path.exists():
            raise FileNotFoundError(f"{config_path}: {image_key} not found: {image_path}")
        bbox_key = "bbox_m" if image_key == "image_m" else "bbox_n"
        bbox = tuple(config[bbox_key]) if config.get(bbox_key) else None
        out_path = out_dir / f"{role}.npy"
        extract(image_path, config[which]["backbone"], int(config[which]["layer"]),
                out_path, bbox=bbox, size=size)
        files[role] = str(out_path)

    manifest = {"files": files, "config": config}
    manifest_path = out_dir / "manifest.json"
    manifest_path.write_text(json.dumps(manifest, sort_keys=True, indent=2) + "\n")
    manifest["manifest_path"] = str(manifest_path)
    return manifest
