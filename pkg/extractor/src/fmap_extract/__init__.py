"""Feature grid extraction from pretrained vision backbones for fmap."""

from .backbones import REGISTRY, BackboneSpec, get_backbone
from .errors import BackboneUnavailableError
from .extract import extract, load_image, preprocess
from .manifest import extract_pair_manifest

__version__ = "0.1.0"
__all__ = [
    "REGISTRY",
    "BackboneSpec",
    "BackboneUnavailableError",
    "extract",
    "extract_pair_manifest",
    "get_backbone",
    "load_image",
    "preprocess",
]
