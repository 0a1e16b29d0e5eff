"""Deterministic stand-in backbone for tests and offline CI.

Pure arithmetic on pixel values: per-patch polynomial moments mixed by
integer-LCG coefficients, so the same image yields bit-identical features on
every platform. The first mixing coefficient is kept positive, which gives
every channel a positive DC component; downstream median kernel bandwidths
then track content instead of collapsing to zero.
"""

import numpy as np

PATCH = 14
DEPTH = 768
LAYERS = tuple(range(12))

_N_BASIS = 8
_LCG_A = 1103515245
_LCG_C = 12345
_LCG_M = 2**31


def _coefficients(layer: int) -> np.ndarray:
    """(DEPTH, 8) mixing matrix of exact dyadic rationals in [-1, 1)."""
    x = (1000003 * layer + 7) % _LCG_M
    out = np.empty(DEPTH * _N_BASIS, dtype=np.float64)
    for i in range(out.size):
        x = (_LCG_A * x + _LCG_C) % _LCG_M
        out[i] = (x / _LCG_M) * 2.0 - 1.0
    coef = out.reshape(DEPTH, _N_BASIS)
    coef[:, 0] = np.abs(coef[:, 0]) + 1.0  # positive DC channel, in [1, 2)
    return coef


def _patch_basis(patch: np.ndarray) -> np.ndarray:
    """8 polynomial features of one PATCH x PATCH grayscale block."""
    n = patch.size
    mean = patch.sum() / n
    centered = patch - mean
    var = (centered * centered).sum() / n
    m3 = (centered * centered * centered).sum() / n
    half = PATCH // 2
    gx = patch[:, half:].sum() / (n / 2) - patch[:, :half].sum() / (n / 2)
    gy = patch[half:, :].sum() / (n / 2) - patch[:half, :].sum() / (n / 2)
    return np.array([1.0, mean, var, gx, gy, mean * mean, mean * var, m3])


def extract_features(image_rgb: np.ndarray, layer: int) -> np.ndarray:
    """(h, w, 3) uint8 image with patch-multiple dims -> (h/14, w/14, 768) f32."""
    if layer not in LAYERS:
        raise ValueError(f"stub layer must be one of {list(LAYERS)}, got {layer}")
    h, w = image_rgb.shape[:2]
    if h % PATCH or w % PATCH:
        raise ValueError(f"image dims must be multiples of {PATCH}, got {h}x{w}")
    gray = image_rgb.astype(np.float64).sum(axis=2) / 765.0  # exact /(3*255)
    gh, gw = h // PATCH, w // PATCH
    basis = np.empty((gh, gw, _N_BASIS), dtype=np.float64)
    for gy in range(gh):
        for gx in range(gw):
            block = gray[gy * PATCH:(gy + 1) * PATCH, gx * PATCH:(gx + 1) * PATCH]
            basis[gy, gx] = _patch_basis(block)
    coef = _coefficients(layer)
    return (basis @ coef.T).astype(np.float32)
