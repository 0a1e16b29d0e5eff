"""Deterministic PNG renders of pipeline artifacts.

A tiny encoder (zlib-compressed filter-0 scanlines) keeps output byte-stable
across platforms; no imaging library is involved. Colormaps are fixed:

- diverging blue-white-red for signed fields (eigenfunctions, map matrices)
- black-red-yellow-white heat ramp for scalar functions
- hue/saturation rainbow for correspondences: hue encodes target x,
  saturation encodes target y
"""

from __future__ import annotations

import struct
import zlib
from pathlib import Path

import numpy as np

from .errors import ValidationError
from .pointmap import CorrespondenceField

_DIVERGING_ANCHORS = np.array(
    [[32, 64, 160], [255, 255, 255], [180, 32, 32]], dtype=np.float64
)
_HEAT_ANCHORS = np.array(
    [[0, 0, 0], [172, 28, 28], [255, 200, 32], [255, 255, 255]], dtype=np.float64
)


def write_png(path: str | Path, rgb: np.ndarray) -> None:
    """Write an (h, w, 3) uint8 array as an 8-bit RGB PNG."""
    rgb = np.asarray(rgb)
    if rgb.ndim != 3 or rgb.shape[2] != 3 or rgb.dtype != np.uint8:
        raise ValidationError(f"expected (h, w, 3) uint8 image, got {rgb.shape} {rgb.dtype}")
    h, w = rgb.shape[:2]

    def chunk(tag: bytes, data: bytes) -> bytes:
        return (
            struct.pack(">I", len(data))
            + tag
            + data
            + struct.pack(">I", zlib.crc32(tag + data) & 0xFFFFFFFF)
        )

    header = struct.pack(">IIBBBBB", w, h, 8, 2, 0, 0, 0)  # 8-bit truecolor
    scanlines = np.concatenate([np.zeros((h, 1), dtype=np.uint8), rgb.reshape(h, -1)], axis=1)
    payload = zlib.compress(scanlines.tobytes(), 9)
    blob = (
        b"\x89PNG\r\n\x1a\n"
        + chunk(b"IHDR", header)
        + chunk(b"IDAT", payload)
        + chunk(b"IEND", b"")
    )
    Path(path).write_bytes(blob)


def _ramp(values: np.ndarray, anchors: np.ndarray) -> np.ndarray:
    """Map values in [0, 1] through piecewise-linear RGB anchors -> uint8."""
    values = np.clip(np.asarray(values, dtype=np.float64), 0.0, 1.0)
    pos = values * (len(anchors) - 1)
    lo = np.clip(np.floor(pos).astype(np.int64), 0, len(anchors) - 2)
    t = (pos - lo)[..., None]
    out = anchors[lo] + t * (anchors[lo + 1] - anchors[lo])
    return np.clip(np.rint(out), 0, 255).astype(np.uint8)


def render_signed(field: np.ndarray) -> np.ndarray:
    """Signed 2-D field -> diverging colors, white at zero, symmetric range."""
    field = np.asarray(field, dtype=np.float64)
    if field.ndim != 2:
        raise ValidationError(f"expected a 2-D field, got shape {field.shape}")
    peak = float(np.abs(field).max())
    scaled = field / peak if peak > 0 else np.zeros_like(field)
    return _ramp(0.5 * (scaled + 1.0), _DIVERGING_ANCHORS)


def render_heat(values: np.ndarray, vmin: float | None = None, vmax: float | None = None) -> np.ndarray:
    """Scalar 2-D field -> heat ramp; range defaults to the data extremes."""
    values = np.asarray(values, dtype=np.float64)
    if values.ndim != 2:
        raise ValidationError(f"expected a 2-D field, got shape {values.shape}")
    lo = float(values.min()) if vmin is None else vmin
    hi = float(values.max()) if vmax is None else vmax
    span = hi - lo
    unit = (values - lo) / span if span > 0 else np.zeros_like(values)
    return _ramp(unit, _HEAT_ANCHORS)


def _hsv_to_rgb(hue: np.ndarray, sat: np.ndarray, val: np.ndarray) -> np.ndarray:
    hue = (hue % 1.0) * 6.0
    sector = np.floor(hue).astype(np.int64) % 6
    f = hue - np.floor(hue)
    p = val * (1.0 - sat)
    q = val * (1.0 - sat * f)
    t = val * (1.0 - sat * (1.0 - f))
    channels = np.stack(
        [
            np.choose(sector, [val, q, p, p, t, val]),
            np.choose(sector, [t, val, val, q, p, p]),
            np.choose(sector, [p, p, t, val, val, q]),
        ],
        axis=-1,
    )
    return np.clip(np.rint(channels * 255.0), 0, 255).astype(np.uint8)


def render_rainbow(corr: CorrespondenceField) -> np.ndarray:
    """Color each source pixel by its target location: hue = x, saturation = y.

    Rendering the identity correspondence produces the coordinate legend
    itself, so source and legend are directly comparable.
    """
    h, w = corr.src_dims
    th, tw = corr.tgt_dims
    tgt_y, tgt_x = np.divmod(corr.target_index, tw)
    hue = (0.85 * tgt_x / max(tw - 1, 1)).reshape(h, w)
    sat = (0.25 + 0.75 * tgt_y / max(th - 1, 1)).reshape(h, w)
    return _hsv_to_rgb(hue, sat, np.ones_like(hue))


def render_fmap_matrix(C: np.ndarray) -> np.ndarray:
    """Functional-map matrix with the diverging map, white at zero."""
    return render_signed(np.asarray(C, dtype=np.float64))


def upscale_nearest(rgb: np.ndarray, factor: int) -> np.ndarray:
    """Integer nearest-neighbor upscale for legible small-grid renders."""
    if factor < 1:
        raise ValidationError(f"scale factor must be >= 1, got {factor}")
    return np.repeat(np.repeat(rgb, factor, axis=0), factor, axis=1)


def side_by_side(left: np.ndarray, right: np.ndarray, gap: int = 4) -> np.ndarray:
    """Compose two renders horizontally with a white gap, padding heights."""
    h = max(left.shape[0], right.shape[0])

    def pad(img: np.ndarray) -> np.ndarray:
        if img.shape[0] == h:
            return img
        extra = np.full((h - img.shape[0], img.shape[1], 3), 255, dtype=np.uint8)
        return np.concatenate([img, extra], axis=0)

    spacer = np.full((h, gap, 3), 255, dtype=np.uint8)
    return np.concatenate([pad(left), spacer, pad(right)], axis=1)
