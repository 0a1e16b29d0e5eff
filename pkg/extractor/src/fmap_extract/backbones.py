"""Backbone registry: id -> geometry + feature function."""

from dataclasses import dataclass
from typing import Callable

import numpy as np

from fmap import ValidationError

from . import dino, sd, stub


@dataclass(frozen=True)
class BackboneSpec:
    name: str
    patch: int  # pixels per output cell along each axis
    native_size: int  # default long-side target before snapping
    layers: tuple[int, ...]
    run: Callable[[np.ndarray, int], np.ndarray]  # (image_rgb u8, layer) -> (gh, gw, d) f32


REGISTRY = {
    "stub-14": BackboneSpec(
        name="stub-14", patch=stub.PATCH, native_size=518, layers=stub.LAYERS,
        run=stub.extract_features,
    ),
    "dinov2-b14": BackboneSpec(
        name="dinov2-b14", patch=dino.PATCH, native_size=518, layers=dino.LAYERS,
        run=lambda img, layer: dino.extract_features(img, layer, "dinov2-b14"),
    ),
    "dinov2-s14": BackboneSpec(
        name="dinov2-s14", patch=dino.PATCH, native_size=518, layers=dino.LAYERS,
        run=lambda img, layer: dino.extract_features(img, layer, "dinov2-s14"),
    ),
    "sd15-up1": BackboneSpec(
        name="sd15-up1", patch=sd.STRIDE, native_size=512, layers=sd.LAYERS,
        run=lambda img, layer: sd.extract_features(img, layer),
    ),
}


def get_backbone(name: str) -> BackboneSpec:
    if name not in REGISTRY:
        raise ValidationError(
            f"unknown backbone {name!r}; available: {sorted(REGISTRY)}"
        )
    return REGISTRY[name]


def check_layer(spec: BackboneSpec, layer: int) -> None:
    if layer not in spec.layers:
        raise ValidationError(
            f"{spec.name} has no layer {layer}; valid layers: {list(spec.layers)}"
        )
