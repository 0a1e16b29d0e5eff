"""Feature-weighted 4-neighbor grid graph and its combinatorial Laplacian.

Edge weights follow exp(-||E_x - E_y||_2 / sigma) between adjacent patches;
the Laplacian is the unnormalized L = D - W, so the constant vector spans its
kernel exactly on a connected grid. Node order is row-major (y*w + x)
everywhere in the pipeline.
"""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np
import scipy.sparse as sp

from .errors import DegenerateInputError, ValidationError
from .interchange import FeatureGrid

SIGMA_MODES = ("values", "absvalues", "edgedists")


@dataclass(frozen=True)
class WeightedGridGraph:
    """4-connected h x w grid with one weight in (0, 1] per edge.

    Edges are stored as flat node-index arrays (row-major ids); ``edge_list``
    rebuilds the ((x1,y1),(x2,y2),weight) view for inspection and tests.
    """

    h: int
    w: int
    edges_u: np.ndarray  # (m,) int64 flat node ids
    edges_v: np.ndarray
    weights: np.ndarray  # (m,) float64 in (0, 1]

    def __post_init__(self):
        m_expected = self.h * (self.w - 1) + self.w * (self.h - 1)
        if not (len(self.edges_u) == len(self.edges_v) == len(self.weights) == m_expected):
            raise ValidationError(
                f"grid {self.h}x{self.w} must have exactly {m_expected} edges, got {len(self.weights)}"
            )
        if np.any(self.weights <= 0) or np.any(self.weights > 1):
            raise ValidationError("edge weights must lie in (0, 1]")

    @property
    def n(self) -> int:
        return self.h * self.w

    def edge_list(self):
        """Yield ((x1, y1), (x2, y2), weight) tuples."""
        for u, v, wt in zip(self.edges_u, self.edges_v, self.weights):
            yield (int(u % self.w), int(u // self.w)), (int(v % self.w), int(v // self.w)), float(wt)


@dataclass(frozen=True)
class SparseSymmetricMatrix:
    """Symmetric PSD matrix in compressed sparse row form."""

    n: int
    csr: sp.csr_array

    def matvec(self, x: np.ndarray) -> np.ndarray:
        return self.csr @ x

    def diagonal(self) -> np.ndarray:
        return self.csr.diagonal()

    def to_dense(self) -> np.ndarray:
        return self.csr.toarray()

    def triplets(self) -> tuple[np.ndarray, np.ndarray, np.ndarray]:
        coo = self.csr.tocoo()
        return coo.row.astype(np.int64), coo.col.astype(np.int64), coo.data.astype(np.float64)

    def symmetry_error(self) -> float:
        d = self.csr - self.csr.T
        return 0.0 if d.nnz == 0 else float(np.max(np.abs(d.data)))

    def row_sums(self) -> np.ndarray:
        return np.asarray(self.csr.sum(axis=1)).reshape(-1)


def median_sigma(grid: FeatureGrid, mode: str = "values") -> float:
    """Bandwidth for the edge-weight kernel.

    ``values``: median over all h*w*d feature entries, falling back to the
    median of absolute values when the literal median is non-positive
    (features can be signed). ``absvalues``: median of absolute values
    directly. ``edgedists``: median of the 4-neighbor feature distances.
    """
    if mode not in SIGMA_MODES:
        raise ValidationError(f"unknown sigma mode {mode!r}; expected one of {SIGMA_MODES}")
    data = grid.data.astype(np.float64)
    if mode == "edgedists":
        sigma = float(np.median(_edge_distances(data)))
    elif mode == "absvalues":
        sigma = float(np.median(np.abs(data)))
    else:
        sigma = float(np.median(data))
        if sigma <= 0.0:
            sigma = float(np.median(np.abs(data)))
    if sigma <= 0.0:
        raise DegenerateInputError(f"sigma mode {mode!r} produced non-positive bandwidth {sigma}")
    return sigma


def _edge_distances(data: np.ndarray) -> np.ndarray:
    """Euclidean feature distances over horizontal then vertical grid edges."""
    dh = np.sqrt(np.sum((data[:, 1:, :] - data[:, :-1, :]) ** 2, axis=2))
    dv = np.sqrt(np.sum((data[1:, :, :] - data[:-1, :, :]) ** 2, axis=2))
    return np.concatenate([dh.reshape(-1), dv.reshape(-1)])


def edge_weights(grid: FeatureGrid, sigma: float) -> WeightedGridGraph:
    """Assign exp(-distance/sigma) to each 4-neighbor edge of the grid."""
    if sigma <= 0:
        raise ValidationError(f"sigma must be positive, got {sigma}")
    h, w = grid.h, grid.w
    data = grid.data.astype(np.float64)
    ids = np.arange(h * w, dtype=np.int64).reshape(h, w)

    dists = _edge_distances(data)
    u = np.concatenate([ids[:, :-1].reshape(-1), ids[:-1, :].reshape(-1)])
    v = np.concatenate([ids[:, 1:].reshape(-1), ids[1:, :].reshape(-1)])
    # distances vastly larger than sigma underflow exp to 0; clamp to the
    # smallest positive float so weights stay in (0, 1] and the grid connected
    weights = np.maximum(np.exp(-dists / sigma), np.finfo(np.float64).tiny)
    return WeightedGridGraph(h=h, w=w, edges_u=u, edges_v=v, weights=weights)


def build_laplacian(graph: WeightedGridGraph) -> SparseSymmetricMatrix:
    """Unnormalized combinatorial Laplacian L = D - W of the weighted grid."""
    n = graph.n
    rows = np.concatenate([graph.edges_u, graph.edges_v])
    cols = np.concatenate([graph.edges_v, graph.edges_u])
    vals = np.concatenate([-graph.weights, -graph.weights])
    degrees = np.bincount(rows, weights=-vals, minlength=n)
    rows = np.concatenate([rows, np.arange(n)])
    cols = np.concatenate([cols, np.arange(n)])
    vals = np.concatenate([vals, degrees])
    L = sp.coo_array((vals, (rows, cols)), shape=(n, n)).tocsr()
    return SparseSymmetricMatrix(n=n, csr=L)


def laplacian_from_grid(grid: FeatureGrid, sigma_mode: str = "values") -> SparseSymmetricMatrix:
    """Convenience: features -> sigma -> weighted graph -> Laplacian."""
    sigma = median_sigma(grid, mode=sigma_mode)
    return build_laplacian(edge_weights(grid, sigma))
