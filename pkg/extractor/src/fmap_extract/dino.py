"""DINOv2 patch-token extraction through transformers.

Layer j (0-based block index) means the output of block j, i.e.
hidden_states[j + 1]; the CLS token is dropped and patch tokens are reshaped
to the (h/14, w/14) grid. Dependencies and weights load lazily so the rest
of the package works without torch installed.
"""

import numpy as np

from .errors import BackboneUnavailableError

MODEL_IDS = {
    "dinov2-b14": "facebook/dinov2-base",
    "dinov2-s14": "facebook/dinov2-small",
}
PATCH = 14
LAYERS = tuple(range(12))

_IMAGENET_MEAN = np.array([0.485, 0.456, 0.406], dtype=np.float32)
_IMAGENET_STD = np.array([0.229, 0.224, 0.225], dtype=np.float32)

_models = {}


def _load(backbone: str):
    try:
        import torch
        from transformers import AutoModel
    except ImportError as exc:
        raise BackboneUnavailableError(
            f"{backbone} needs torch and transformers; install the extra: "
            f"pip install 'fmap-extract[dino]' (missing: {exc.name})"
        ) from exc
    if backbone not in _models:
        model_id = MODEL_IDS[backbone]
        try:
            model = AutoModel.from_pretrained(model_id)
        except Exception as exc:
            raise BackboneUnavailableError(
                f"weights for {model_id} are unavailable ({exc.__class__.__name__}). "
                f"Populate the local HF cache (HF_HOME) on a machine with network "
                f"access, or use the 'stub-14' backbone for offline runs."
            ) from exc
        model.eval()
        _models[backbone] = (torch, model)
    return _models[backbone]


def extract_features(image_rgb: np.ndarray, layer: int, backbone: str = "dinov2-b14") -> np.ndarray:
    """(h, w, 3) uint8 with patch-multiple dims -> (h/14, w/14, d) f32."""
    if layer not in LAYERS:
        raise ValueError(f"dinov2 layer must be one of {list(LAYERS)}, got {layer}")
    h, w = image_rgb.shape[:2]
    if h % PATCH or w % PATCH:
        raise ValueError(f"image dims must be multiples of {PATCH}, got {h}x{w}")
    torch, model = _load(backbone)
    pixels = (image_rgb.astype(np.float32) / 255.0 - _IMAGENET_MEAN) / _IMAGENET_STD
    batch = torch.from_numpy(pixels.transpose(2, 0, 1)[None])
    with torch.no_grad():
        out = model(batch, output_hidden_states=True)
    tokens = out.hidden_states[layer + 1][0]
    n_special = tokens.shape[0] - (h // PATCH) * (w // PATCH)  # CLS (+ registers)
    grid = tokens[n_special:].reshape(h // PATCH, w // PATCH, -1)
    return np.ascontiguousarray(grid.numpy(), dtype=np.float32)
