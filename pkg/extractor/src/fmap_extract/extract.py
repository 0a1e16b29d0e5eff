"""Image -> feature grid file, with a sidecar auditing every transform.

Preprocessing: optional bbox crop, optional long-side rescale to the
backbone's native size, then each side snaps to the nearest patch multiple
(at least one patch), so patch x grid always reproduces the model input
exactly and the cropped input within one patch.
"""

import json
from dataclasses import dataclass
from pathlib import Path

import numpy as np
from PIL import Image

from fmap import FeatureGrid, FormatError, save_feature_grid

from .backbones import BackboneSpec, check_layer, get_backbone


@dataclass(frozen=True)
class Preprocessed:
    pixels: np.ndarray  # (h, w, 3) uint8, dims are patch multiples
    original_size: tuple[int, int]  # (H, W) before any transform
    crop_size: tuple[int, int]  # (H, W) after bbox crop
    bbox: tuple[int, int, int, int] | None  # (x, y, w, h)


def _snap(side: int, patch: int) -> int:
    return max(patch, int(round(side / patch)) * patch)


def load_image(path: str | Path) -> np.ndarray:
    try:
        with Image.open(path) as im:
            return np.asarray(im.convert("RGB"))
    except FileNotFoundError:
        raise
    except Exception as exc:
        raise FormatError(f"{path}: cannot decode image ({exc})") from exc


def preprocess(
    image: np.ndarray,
    patch: int,
    bbox: tuple[int, int, int, int] | None = None,
    size: int | None = None,
) -> Preprocessed:
    original = (image.shape[0], image.shape[1])
    if bbox is not None:
        x, y, w, h = bbox
        if w <= 0 or h <= 0 or x < 0 or y < 0 or x + w > original[1] or y + h > original[0]:
            raise FormatError(f"bbox {bbox} does not fit image {original[1]}x{original[0]}")
        image = image[y:y + h, x:x + w]
    crop = (image.shape[0], image.shape[1])

    th, tw = crop
    if size is not None:
        scale = size / max(th, tw)
        th, tw = round(th * scale), round(tw * scale)
    th, tw = _snap(th, patch), _snap(tw, patch)
    if (th, tw) != (image.shape[0], image.shape[1]):
        image = np.asarray(
            Image.fromarray(image).resize((tw, th), Image.Resampling.BILINEAR)
        )
    return Preprocessed(pixels=image, original_size=original, crop_size=crop, bbox=bbox)


def _sidecar_doc(grid: FeatureGrid, spec: BackboneSpec, layer: int, pre: Preprocessed) -> dict:
    return {
        "provenance": grid.provenance,
        "source_image_size": list(grid.source_image_size),
        "backbone": spec.name,
        "layer": layer,
        "patch_size": spec.patch,
        "image_size": [pre.pixels.shape[0], pre.pixels.shape[1]],
        "preprocessing": {
            "original_size": list(pre.original_size),
            "bbox": list(pre.bbox) if pre.bbox is not None else None,
            "crop_size": list(pre.crop_size),
            "resample": "bilinear",
        },
    }


def extract(
    image_path: str | Path,
    backbone: str,
    layer: int,
    out_path: str | Path,
    bbox: tuple[int, int, int, int] | None = None,
    size: int | None = None,
) -> FeatureGrid:
    """Run one backbone layer over one image; write grid + sidecar."""
    spec = get_backbone(backbone)
    check_layer(spec, layer)
    pre = preprocess(load_image(image_path), spec.patch, bbox=bbox, size=size)
    features = spec.run(pre.pixels, layer)
    grid = FeatureGrid(
        data=features,
        source_image_size=(pre.pixels.shape[0], pre.pixels.shape[1]),
        provenance=f"{spec.name}:layer={layer}",
    )
    save_feature_grid(grid, out_path)
    sidecar = Path(out_path).with_suffix(".json")
    sidecar.write_text(
        json.dumps(_sidecar_doc(grid, spec, layer, pre), sort_keys=True, indent=2) + "\n"
    )
    return grid
