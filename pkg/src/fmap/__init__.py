"""Zero-shot image correspondence via spectral functional maps.

Pipeline: feature grids -> content-weighted grid Laplacian -> truncated
eigenbasis -> jointly optimized functional map -> dense point map / function
transfer. See the README for the command-line entry points.
"""

from .autodiff import AdamState, Tape, adam_step, grad_check
from .cache import BasisCache, BasisKey
from .eigensolver import (
    SpectralBasis,
    canonicalize_signs,
    dense_reference_eig,
    eigenvalue_clusters,
    load_basis,
    lobpcg_smallest,
    quantized,
    save_basis,
)
from .errors import (
    ConvergenceError,
    DegenerateInputError,
    FmapError,
    FormatError,
    NumericError,
    ShapeError,
    ValidationError,
)
from .interchange import (
    FeatureGrid,
    KeypointSet,
    ScalarFunction,
    load_feature_grid,
    load_keypoints,
    load_tensor,
    resize_feature_grid,
    save_feature_grid,
    save_keypoints,
    save_tensor,
)
from .laplacian import (
    SparseSymmetricMatrix,
    WeightedGridGraph,
    build_laplacian,
    edge_weights,
    laplacian_from_grid,
    median_sigma,
)
from .metrics import (
    epe,
    evaluation_report,
    mse_keypoints,
    pck,
    predict_keypoints,
    sample_flow,
    smoothness,
)
from .objective import (
    FunctionalMap,
    OptimizationReport,
    OptimizerConfig,
    loss_cons,
    loss_diag,
    loss_feat,
    loss_latent_trace,
    loss_orth,
    eigenvalue_gaps,
    off_diagonal_energy_ratio,
    optimize_pair,
    project_descriptors,
    total_loss,
)
from .pointmap import (
    CorrespondenceField,
    fmap_to_pointmap,
    nearest_rows,
    pointmap_to_image_flow,
    raw_feature_nn,
    spectral_distance,
    transfer_function,
)
from .refine import RefineConfig, init_refine_params, positional_embedding, refine
from .synthetic import shift_ground_truth, shifted_pair, smooth_feature_grid
from .viz import (
    render_fmap_matrix,
    render_heat,
    render_rainbow,
    render_signed,
    side_by_side,
    upscale_nearest,
    write_png,
)

__version__ = "0.1.0"

__all__ = [name for name in dir() if not name.startswith("_")]
