"""Joint spectral-matching objective over the functional map and latent bases.

The map C (k x k) carries spectral coefficients of image M to image N,
b = C a. It is fit by gradient descent together with two latent coefficient
bases Z_M, Z_N (k x r) and, optionally, the attention refinement parameters:

    L = L_feat + lambda_diag L_diag + lambda_cons L_cons
        + lambda_z L_trace + lambda_reg L_orth

where L_feat aligns projected descriptors, L_diag damps entries pairing
distant eigenvalues, L_cons couples C with the latent bases, L_trace is
tr(Z^T (I + C^T C) Z) summed over both images, and L_orth pulls each Z
toward orthonormal columns.
"""

from __future__ import annotations

import json
import time
from dataclasses import asdict, dataclass, field

import numpy as np

from .autodiff import AdamState, Node, Tape, adam_step
from .eigensolver import SpectralBasis
from .errors import NumericError, ValidationError
from .interchange import FeatureGrid, resize_feature_grid
from .refine import RefineConfig, init_refine_params, positional_embedding, refine_forward


@dataclass(frozen=True)
class FunctionalMap:
    """Spectral coefficient map b = C a from image M's basis to image N's."""

    C: np.ndarray

    def __post_init__(self):
        C = np.asarray(self.C, dtype=np.float64)
        if C.ndim != 2 or C.shape[0] != C.shape[1]:
            raise ValidationError(f"C must be square, got shape {C.shape}")
        if not np.all(np.isfinite(C)):
            raise ValidationError("C contains non-finite entries")
        object.__setattr__(self, "C", C)

    @property
    def k(self) -> int:
        return self.C.shape[0]


@dataclass(frozen=True)
class OptimizerConfig:
    lambda_diag: float = 5.0
    lambda_cons: float = 1e-3
    lambda_z: float = 1.0
    lambda_reg: float = 1.0
    r: int = 20
    iterations: int = 600
    learning_rate: float = 1e-3
    seed: int = 0
    use_refine: bool = True
    refine: RefineConfig = field(default_factory=RefineConfig)

    def __post_init__(self):
        for name in ("lambda_diag", "lambda_cons", "lambda_z", "lambda_reg"):
            if getattr(self, name) < 0:
                raise ValidationError(f"{name} must be nonnegative")
        if self.iterations < 1:
            raise ValidationError("iterations must be >= 1")
        if self.r < 1:
            raise ValidationError("r must be >= 1")


@dataclass
class OptimizationReport:
    """Everything needed to audit one optimization run."""

    loss_trace: list[float]
    final_terms: dict[str, float]
    orth_residual_m: float
    orth_residual_n: float
    config: dict
    k: int
    r: int
    n_m: int
    n_n: int
    iterations_run: int
    wall_time_s: float

    def to_json(self, include_timing: bool = False) -> str:
        """Serialize; timing is excluded by default so reruns are byte-identical."""
        payload = asdict(self)
        if not include_timing:
            payload.pop("wall_time_s")
        return json.dumps(payload, sort_keys=True, indent=2) + "\n"


# ---------------------------------------------------------------------------
# loss terms: tape builders plus plain-float wrappers sharing one implementation

def project_descriptors(basis: SpectralBasis, refined: np.ndarray) -> np.ndarray:
    """Spectral coefficients Phi^T f of per-node descriptors (k x d)."""
    refined = np.asarray(refined, dtype=np.float64)
    if refined.ndim != 2 or refined.shape[0] != basis.n:
        raise ValidationError(f"descriptors must be ({basis.n}, d), got {refined.shape}")
    return basis.phi.T @ refined


def eigenvalue_gaps(lam_m: np.ndarray, lam_n: np.ndarray) -> np.ndarray:
    """Gap matrix G_ij = |lam_n[i] - lam_m[j]|, row index on N like C's rows."""
    lam_m = np.asarray(lam_m, dtype=np.float64)
    lam_n = np.asarray(lam_n, dtype=np.float64)
    if lam_m.shape != lam_n.shape or lam_m.ndim != 1:
        raise ValidationError("eigenvalue vectors must be 1-D and equal length")
    return np.abs(lam_n[:, None] - lam_m[None, :])


def _feat_node(tape: Tape, c: Node, ft_m: Node, ft_n: Node) -> Node:
    return tape.frobenius(tape.sub(tape.matmul(c, ft_m), ft_n))


def _diag_node(tape: Tape, c: Node, gaps: np.ndarray) -> Node:
    return tape.frobenius_sq(tape.scale(c, gaps))


def _cons_node(tape: Tape, c: Node, z_m: Node, z_n: Node) -> Node:
    return tape.frobenius(tape.sub(tape.matmul(c, z_m), z_n))


def _trace_node(tape: Tape, c: Node, z_m: Node, z_n: Node) -> Node:
    total = tape.add(tape.frobenius_sq(z_m), tape.frobenius_sq(tape.matmul(c, z_m)))
    total = tape.add(total, tape.frobenius_sq(z_n))
    return tape.add(total, tape.frobenius_sq(tape.matmul(c, z_n)))


def _orth_node(tape: Tape, z: Node) -> Node:
    r = z.value.shape[1]
    return tape.frobenius(tape.sub(tape.matmul(tape.transpose(z), z), tape.constant(np.eye(r))))


def loss_feat(C: np.ndarray, ft_m: np.ndarray, ft_n: np.ndarray) -> float:
    """||C Ft_m - Ft_n||_F, the descriptor-preservation residual."""
    tape = Tape()
    return float(_feat_node(tape, tape.constant(C), tape.constant(ft_m), tape.constant(ft_n)).value)


def loss_diag(C: np.ndarray, lam_m: np.ndarray, lam_n: np.ndarray) -> float:
    """sum_ij (|lam_n_i - lam_m_j| c_ij)^2, penalizing far-from-diagonal mass."""
    tape = Tape()
    return float(_diag_node(tape, tape.constant(C), eigenvalue_gaps(lam_m, lam_n)).value)


def loss_cons(C: np.ndarray, z_m: np.ndarray, z_n: np.ndarray) -> float:
    """||C Z_m - Z_n||_F, coupling the map with the latent bases."""
    tape = Tape()
    return float(_cons_node(tape, tape.constant(C), tape.constant(z_m), tape.constant(z_n)).value)


def loss_latent_trace(C: np.ndarray, z_m: np.ndarray, z_n: np.ndarray) -> float:
    """tr(Z^T (I + C^T C) Z) summed over both images."""
    tape = Tape()
    return float(_trace_node(tape, tape.constant(C), tape.constant(z_m), tape.constant(z_n)).value)


def loss_orth(z: np.ndarray) -> float:
    """||Z^T Z - I_r||_F, the soft orthonormality penalty."""
    tape = Tape()
    return float(_orth_node(tape, tape.constant(z)).value)


def build_total_loss(
    tape: Tape,
    c: Node,
    z_m: Node,
    z_n: Node,
    ft_m: Node,
    ft_n: Node,
    gaps: np.ndarray,
    config: OptimizerConfig,
) -> tuple[Node, dict[str, Node]]:
    """Assemble the weighted objective; returns the sink and per-term nodes."""
    terms = {
        "feat": _feat_node(tape, c, ft_m, ft_n),
        "diag": _diag_node(tape, c, gaps),
        "cons": _cons_node(tape, c, z_m, z_n),
        "trace": _trace_node(tape, c, z_m, z_n),
        "orth_m": _orth_node(tape, z_m),
        "orth_n": _orth_node(tape, z_n),
    }
    total = terms["feat"]
    total = tape.add(total, tape.scale(terms["diag"], config.lambda_diag))
    total = tape.add(total, tape.scale(terms["cons"], config.lambda_cons))
    total = tape.add(total, tape.scale(terms["trace"], config.lambda_z))
    total = tape.add(total, tape.scale(tape.add(terms["orth_m"], terms["orth_n"]), config.lambda_reg))
    return total, terms


def total_loss(
    C: np.ndarray,
    z_m: np.ndarray,
    z_n: np.ndarray,
    ft_m: np.ndarray,
    ft_n: np.ndarray,
    lam_m: np.ndarray,
    lam_n: np.ndarray,
    config: OptimizerConfig,
) -> float:
    tape = Tape()
    sink, _ = build_total_loss(
        tape,
        tape.constant(C),
        tape.constant(z_m),
        tape.constant(z_n),
        tape.constant(ft_m),
        tape.constant(ft_n),
        eigenvalue_gaps(lam_m, lam_n),
        config,
    )
    return float(sink.value)


def off_diagonal_energy_ratio(C: np.ndarray) -> float:
    """sum_{i != j} c_ij^2 / sum_ij c_ij^2; 0 for diagonal maps."""
    C = np.asarray(C, dtype=np.float64)
    total = float((C * C).sum())
    if total == 0.0:
        return 0.0
    return float(((C * C).sum() - (np.diag(C) ** 2).sum()) / total)


# ---------------------------------------------------------------------------
# joint optimization

def optimize_pair(
    basis_m: SpectralBasis,
    basis_n: SpectralBasis,
    desc_m: FeatureGrid,
    desc_n: FeatureGrid,
    config: OptimizerConfig | None = None,
) -> tuple[FunctionalMap, OptimizationReport]:
    """Fit C (and Z_M, Z_N, refinement weights) for one image pair.

    Descriptor grids are resampled to the basis grids, refined (unless
    disabled), projected into each basis, and the weighted objective is
    minimized with Adam. Deterministic for a fixed config seed.
    """
    config = config or OptimizerConfig()
    if basis_m.k != basis_n.k:
        raise ValidationError(f"basis sizes differ: {basis_m.k} vs {basis_n.k}")
    k = basis_m.k
    if config.r > k:
        raise ValidationError(f"latent width r={config.r} exceeds k={k}")
    if desc_m.d != desc_n.d:
        raise ValidationError(f"descriptor depths differ: {desc_m.d} vs {desc_n.d}")

    desc_m = resize_feature_grid(desc_m, *basis_m.grid_dims)
    desc_n = resize_feature_grid(desc_n, *basis_n.grid_dims)
    feat_m = desc_m.flat().astype(np.float64)
    feat_n = desc_n.flat().astype(np.float64)
    gaps = eigenvalue_gaps(basis_m.eigenvalues, basis_n.eigenvalues)
    phi_t_m, phi_t_n = basis_m.phi.T.copy(), basis_n.phi.T.copy()

    params: dict[str, np.ndarray] = {
        "C": np.eye(k, dtype=np.float32),
        "ZM": np.eye(k, config.r, dtype=np.float32),
        "ZN": np.eye(k, config.r, dtype=np.float32),
    }
    if config.use_refine:
        params.update(init_refine_params(desc_m.d, config.refine, seed=config.seed))
        pos_m = positional_embedding(desc_m.h, desc_m.w, config.refine.d_model)
        pos_n = positional_embedding(desc_n.h, desc_n.w, config.refine.d_model)
    else:
        # descriptors are fixed, so their spectral projections are constants
        ft_m_const = phi_t_m @ feat_m
        ft_n_const = phi_t_n @ feat_n

    def build(current: dict[str, np.ndarray]):
        tape = Tape()
        leaves = {name: tape.leaf(value) for name, value in current.items()}
        if config.use_refine:
            ref_m, ref_n = refine_forward(tape, leaves, feat_m, feat_n, pos_m, pos_n, config.refine)
            ft_m = tape.matmul(tape.constant(phi_t_m), ref_m)
            ft_n = tape.matmul(tape.constant(phi_t_n), ref_n)
        else:
            ft_m = tape.constant(ft_m_const)
            ft_n = tape.constant(ft_n_const)
        sink, terms = build_total_loss(
            tape, leaves["C"], leaves["ZM"], leaves["ZN"], ft_m, ft_n, gaps, config
        )
        return tape, leaves, sink, terms

    state = AdamState(lr=config.learning_rate)
    trace: list[float] = []
    started = time.perf_counter()

    for it in range(config.iterations):
        tape, leaves, sink, _ = build(params)
        value = float(sink.value)
        if not np.isfinite(value):
            raise NumericError(f"objective became non-finite at iteration {it}")
        trace.append(value)
        tape.backward(sink)
        grads = {name: leaves[name].grad for name in params if leaves[name].grad is not None}
        params, state = adam_step(params, grads, state)

    _, _, _, terms = build(params)
    elapsed = time.perf_counter() - started
    C = params["C"].astype(np.float64)
    z_m64, z_n64 = params["ZM"].astype(np.float64), params["ZN"].astype(np.float64)
    report = OptimizationReport(
        loss_trace=trace,
        final_terms={name: float(node.value) for name, node in terms.items()},
        orth_residual_m=loss_orth(z_m64),
        orth_residual_n=loss_orth(z_n64),
        config={**asdict(config), "refine": asdict(config.refine)},
        k=k,
        r=config.r,
        n_m=basis_m.n,
        n_n=basis_n.n,
        iterations_run=config.iterations,
        wall_time_s=elapsed,
    )
    return FunctionalMap(C=C), report
