"""Dense correspondences and function transfer from a fitted functional map.

Pixels embed as rows of the truncated eigenbases: source pixel x as
row_x(Phi_M C^T), target pixel y as row_y(Phi_N). The point map is the exact
nearest neighbor between these embeddings; the induced semantic flow lives on
the feature grid and is upsampled to image resolution on demand. Scalar
functions transfer band-limited through g = Phi_N C Phi_M^T f without any
point map.
"""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from .eigensolver import SpectralBasis
from .errors import ValidationError
from .interchange import FeatureGrid, ScalarFunction, resize_feature_grid
from .objective import FunctionalMap

_NN_BLOCK_BYTES = 64 * 1024 * 1024


@dataclass(frozen=True)
class CorrespondenceField:
    """target_index[x] is the target grid node matched to source node x."""

    target_index: np.ndarray  # (n_src,) int64
    src_dims: tuple[int, int]
    tgt_dims: tuple[int, int]

    def __post_init__(self):
        idx = np.asarray(self.target_index, dtype=np.int64)
        n_src = self.src_dims[0] * self.src_dims[1]
        n_tgt = self.tgt_dims[0] * self.tgt_dims[1]
        if idx.shape != (n_src,):
            raise ValidationError(f"target_index must have shape ({n_src},), got {idx.shape}")
        if idx.size and (idx.min() < 0 or idx.max() >= n_tgt):
            raise ValidationError("target_index out of range for the target grid")
        object.__setattr__(self, "target_index", idx)

    def grid_flow(self) -> np.ndarray:
        """(h, w, 2) float64 flow in grid cells, channels (dx, dy).

        Flow is target coordinates minus source coordinates, x rightward and
        y downward.
        """
        h, w = self.src_dims
        tgt_y, tgt_x = np.divmod(self.target_index, self.tgt_dims[1])
        src_y, src_x = np.divmod(np.arange(h * w), w)
        flow = np.stack([tgt_x - src_x, tgt_y - src_y], axis=1).astype(np.float64)
        return flow.reshape(h, w, 2)


def nearest_rows(src: np.ndarray, tgt: np.ndarray) -> np.ndarray:
    """Exact nearest target row for each source row; ties take the smallest index.

    Distances are formed by direct subtraction in float64 (no expansion
    trick), blocked over source rows to bound memory, so results match a
    naive double loop bit for bit.
    """
    src = np.asarray(src, dtype=np.float64)
    tgt = np.asarray(tgt, dtype=np.float64)
    if src.ndim != 2 or tgt.ndim != 2 or src.shape[1] != tgt.shape[1]:
        raise ValidationError(f"embedding shapes incompatible: {src.shape} vs {tgt.shape}")
    block = max(1, _NN_BLOCK_BYTES // (tgt.shape[0] * tgt.shape[1] * 8))
    out = np.empty(src.shape[0], dtype=np.int64)
    for start in range(0, src.shape[0], block):
        diff = src[start : start + block, None, :] - tgt[None, :, :]
        d2 = np.einsum("ijk,ijk->ij", diff, diff)
        out[start : start + block] = np.argmin(d2, axis=1)  # argmin takes the first minimum
    return out


def fmap_to_pointmap(
    fmap: FunctionalMap,
    basis_m: SpectralBasis,
    basis_n: SpectralBasis,
) -> CorrespondenceField:
    """Recover per-pixel correspondences by exact NN in the spectral embedding."""
    if fmap.k != basis_m.k or fmap.k != basis_n.k:
        raise ValidationError(
            f"map size {fmap.k} does not match bases ({basis_m.k}, {basis_n.k})"
        )
    emb_src = basis_m.phi @ fmap.C.T
    return CorrespondenceField(
        target_index=nearest_rows(emb_src, basis_n.phi),
        src_dims=basis_m.grid_dims,
        tgt_dims=basis_n.grid_dims,
    )


def raw_feature_nn(grid_m: FeatureGrid, grid_n: FeatureGrid) -> CorrespondenceField:
    """Baseline correspondences: nearest neighbor directly on raw descriptors."""
    if grid_m.d != grid_n.d:
        raise ValidationError(f"feature depth mismatch: {grid_m.d} vs {grid_n.d}")
    return CorrespondenceField(
        target_index=nearest_rows(grid_m.flat(), grid_n.flat()),
        src_dims=(grid_m.h, grid_m.w),
        tgt_dims=(grid_n.h, grid_n.w),
    )


def pointmap_to_image_flow(
    corr: CorrespondenceField,
    src_image_size: tuple[int, int],
    tgt_image_size: tuple[int, int],
) -> np.ndarray:
    """(H, W, 2) float32 pixel flow on the source image, channels (dx, dy).

    Grid nodes sit at patch centers: node (i, j) of an (h, w) grid over an
    (H, W) image maps to pixel ((j + 0.5) W/w, (i + 0.5) H/h). The per-node
    pixel displacement field is then bilinearly upsampled (align-corners) to
    the full source resolution.
    """
    h, w = corr.src_dims
    src_h, src_w = src_image_size
    tgt_h, tgt_w = tgt_image_size
    stride_src = (src_w / w, src_h / h)
    stride_tgt = (tgt_w / corr.tgt_dims[1], tgt_h / corr.tgt_dims[0])

    tgt_y, tgt_x = np.divmod(corr.target_index, corr.tgt_dims[1])
    src_y, src_x = np.divmod(np.arange(h * w), w)
    dx = (tgt_x + 0.5) * stride_tgt[0] - (src_x + 0.5) * stride_src[0]
    dy = (tgt_y + 0.5) * stride_tgt[1] - (src_y + 0.5) * stride_src[1]
    grid = np.stack([dx, dy], axis=1).astype(np.float32).reshape(h, w, 2)
    upsampled = resize_feature_grid(
        FeatureGrid(data=grid, source_image_size=(src_h, src_w)), src_h, src_w
    )
    return upsampled.data


def transfer_function(
    fmap: FunctionalMap,
    basis_m: SpectralBasis,
    basis_n: SpectralBasis,
    f: ScalarFunction,
) -> ScalarFunction:
    """Band-limited transfer g = Phi_N C Phi_M^T f of a scalar function on M."""
    if fmap.k != basis_m.k or fmap.k != basis_n.k:
        raise ValidationError(
            f"map size {fmap.k} does not match bases ({basis_m.k}, {basis_n.k})"
        )
    if f.values.shape[0] != basis_m.n:
        raise ValidationError(f"function length {f.values.shape[0]} != {basis_m.n} nodes")
    coeffs = basis_m.phi.T @ f.values
    h, w = basis_n.grid_dims
    return ScalarFunction(values=basis_n.phi @ (fmap.C @ coeffs), h=h, w=w)


def spectral_distance(a: np.ndarray, b: np.ndarray) -> float:
    """||a - b||_2 between coefficient vectors.

    For functions inside the basis span this equals the L2 function distance,
    because the basis columns are orthonormal.
    """
    a = np.asarray(a, dtype=np.float64).reshape(-1)
    b = np.asarray(b, dtype=np.float64).reshape(-1)
    if a.shape != b.shape:
        raise ValidationError(f"coefficient lengths differ: {a.shape} vs {b.shape}")
    return float(np.linalg.norm(a - b))
