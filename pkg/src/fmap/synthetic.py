"""Seeded synthetic feature grids for tests and desk-scale experiments.

Fields are built from white noise smoothed by periodic box blurs, so a
circular shift of the field is an exact correspondence with no seam: every
node of the shifted grid carries a feature vector identical to its preimage.
"""

from __future__ import annotations

import numpy as np

from .interchange import FeatureGrid


def smooth_feature_grid(
    h: int,
    w: int,
    d: int,
    seed: int = 0,
    smoothing: int = 4,
    scale: float = 1.0,
    offset: float = 0.0,
) -> FeatureGrid:
    """Periodic smooth random field with chosen scale and optional DC offset."""
    rng = np.random.default_rng(seed)
    field = rng.standard_normal((h, w, d))
    for _ in range(smoothing):
        for axis in (0, 1):
            field = (np.roll(field, 1, axis=axis) + field + np.roll(field, -1, axis=axis)) / 3.0
    # renormalize so smoothing does not shrink the dynamic range
    field = field / max(float(field.std()), 1e-12) * scale + offset
    return FeatureGrid(data=field.astype(np.float32), provenance=f"synthetic:seed={seed}")


def shifted_pair(
    h: int,
    w: int,
    d: int,
    shift: tuple[int, int] = (3, 2),
    seed: int = 0,
    smoothing: int = 4,
    scale: float = 1.0,
    offset: float = 0.0,
) -> tuple[FeatureGrid, FeatureGrid]:
    """(M, N) where N is M circularly shifted by (dx, dy) grid cells.

    Node (x, y) of M has exactly the feature vector of node (x+dx, y+dy)
    of N (modulo wrap), so the true flow is the constant (dx, dy) away from
    the wrap band.
    """
    dx, dy = shift
    grid_m = smooth_feature_grid(h, w, d, seed=seed, smoothing=smoothing, scale=scale, offset=offset)
    rolled = np.roll(grid_m.data, shift=(dy, dx), axis=(0, 1))
    grid_n = FeatureGrid(data=rolled, provenance=f"synthetic:seed={seed}:shift={dx},{dy}")
    return grid_m, grid_n


def shift_ground_truth(
    h: int,
    w: int,
    shift: tuple[int, int],
) -> tuple[np.ndarray, np.ndarray]:
    """Constant (dx, dy) flow plus the interior mask where no wrap occurs."""
    dx, dy = shift
    flow = np.zeros((h, w, 2), dtype=np.float64)
    flow[:, :, 0] = dx
    flow[:, :, 1] = dy
    xs = np.arange(w)[None, :]
    ys = np.arange(h)[:, None]
    mask = (xs + dx < w) & (xs + dx >= 0) & (ys + dy < h) & (ys + dy >= 0)
    return flow, mask
