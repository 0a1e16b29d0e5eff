"""Smallest eigenpairs of the sparse Laplacian via block-iterative LOBPCG.

The solver runs Rayleigh-Ritz on the orthonormalized trial space
span([X, M^-1 R, P]) each iteration (basis-combined LOBPCG), with Jacobi
preconditioning, soft-locking of converged columns, and a seeded start block
whose first column is the constant vector so the zero eigenvalue converges
immediately. A dense eigendecomposition serves as the reference oracle on
small instances.
"""

from __future__ import annotations

import json
from dataclasses import dataclass, replace
from pathlib import Path

import numpy as np

from .errors import ConvergenceError, ValidationError
from .interchange import load_tensor, save_tensor
from .laplacian import SparseSymmetricMatrix

DEFAULT_K = 200
DEFAULT_TOL = 1e-6
DEFAULT_MAX_ITER = 500

_RANK_RTOL = 1e-12


@dataclass(frozen=True)
class SpectralBasis:
    """k smallest Laplacian eigenvalues with orthonormal eigenfunctions.

    ``phi`` is n x k with column j the j-th eigenfunction; columns are
    sign-canonicalized so recomputation is reproducible. ``grid_dims`` records
    the (h, w) pixel grid the node order refers to.
    """

    eigenvalues: np.ndarray  # (k,) ascending, float64
    phi: np.ndarray  # (n, k) float64
    residual_norms: np.ndarray  # (k,)
    grid_dims: tuple[int, int]
    content_hash: str = ""
    tol: float = DEFAULT_TOL
    seed: int = 0

    @property
    def k(self) -> int:
        return self.phi.shape[1]

    @property
    def n(self) -> int:
        return self.phi.shape[0]

    def validate(self, orth_tol: float = 1e-8) -> None:
        """Raise unless orthonormality, ordering, and kernel invariants hold."""
        lam, phi = self.eigenvalues, self.phi
        if phi.shape != (self.n, lam.size):
            raise ValidationError("phi shape inconsistent with eigenvalue count")
        gram_err = np.linalg.norm(phi.T @ phi - np.eye(self.k))
        if gram_err > orth_tol:
            raise ValidationError(f"basis not orthonormal: ||phi^T phi - I||_F = {gram_err:.3e}")
        if np.any(np.diff(lam) < -1e-12):
            raise ValidationError("eigenvalues not ascending")
        if lam[0] > 1e-8:
            raise ValidationError(f"smallest eigenvalue {lam[0]:.3e} > 1e-8 on a connected grid")


def canonicalize_signs(phi: np.ndarray) -> np.ndarray:
    """Flip each column so its largest-magnitude entry (first on ties) is positive."""
    phi = np.array(phi, dtype=np.float64)
    idx = np.argmax(np.abs(phi), axis=0)
    anchor = phi[idx, np.arange(phi.shape[1])]
    flip = anchor < 0
    phi[:, flip] *= -1.0
    return phi


def _orth(block: np.ndarray) -> np.ndarray:
    """Orthonormal basis of the column span, dropping near-null directions."""
    u, s, _ = np.linalg.svd(block, full_matrices=False)
    if s.size == 0 or s[0] == 0.0:
        return u[:, :0]
    keep = s > _RANK_RTOL * s[0] * max(block.shape)
    return np.ascontiguousarray(u[:, keep])


def _rayleigh_ritz(L: SparseSymmetricMatrix, S: np.ndarray):
    """Ritz pairs of L restricted to the orthonormal columns of S."""
    AS = L.matvec(S)
    T = S.T @ AS
    T = 0.5 * (T + T.T)
    theta, Y = np.linalg.eigh(T)
    return theta, Y, AS


def lobpcg_smallest(
    L: SparseSymmetricMatrix,
    k: int,
    tol: float = DEFAULT_TOL,
    max_iter: int = DEFAULT_MAX_ITER,
    seed: int = 0,
    precondition: bool = True,
    grid_dims: tuple[int, int] | None = None,
    content_hash: str = "",
) -> SpectralBasis:
    """Compute the k smallest eigenpairs of L, deterministic for a fixed seed.

    Residual convergence is ||L phi_j - lambda_j phi_j||_2 <= tol*max(1, lambda_j)
    for every column. Raises ConvergenceError (carrying the achieved residual
    norms) if the budget runs out.
    """
    n = L.n
    if k < 1 or k > n:
        raise ValidationError(f"need 1 <= k <= n, got k={k}, n={n}")
    if tol <= 0:
        raise ValidationError(f"tolerance must be positive, got {tol}")
    dims = grid_dims if grid_dims is not None else (1, n)

    rng = np.random.default_rng(seed)
    X = rng.standard_normal((n, k))
    X[:, 0] = 1.0 / np.sqrt(n)
    X = _orth(X)
    if X.shape[1] < k:  # pathological seed; reroll deterministically
        X = _orth(np.concatenate([X, rng.standard_normal((n, k - X.shape[1]))], axis=1))

    diag = L.diagonal()
    inv_diag = np.where(diag > 1e-12, 1.0 / np.maximum(diag, 1e-12), 1.0)

    theta, Y, AS = _rayleigh_ritz(L, X)
    X = X @ Y
    AX = AS @ Y
    P = None

    rnorms = np.full(k, np.inf)
    for _ in range(max_iter):
        R = AX - X * theta
        rnorms = np.linalg.norm(R, axis=0)
        if np.all(rnorms <= tol * np.maximum(1.0, np.abs(theta))):
            phi = canonicalize_signs(X)
            basis = SpectralBasis(
                eigenvalues=theta.copy(),
                phi=phi,
                residual_norms=rnorms.copy(),
                grid_dims=dims,
                content_hash=content_hash,
                tol=tol,
                seed=seed,
            )
            basis.validate()
            return basis

        active = rnorms > tol * np.maximum(1.0, np.abs(theta))  # soft-locking
        W = R[:, active]
        if precondition:
            W = W * inv_diag[:, None]

        blocks = [X, W] if P is None else [X, W, P]
        S = _orth(np.concatenate(blocks, axis=1))
        theta_all, Y, AS = _rayleigh_ritz(L, S)
        X_new = S @ Y[:, :k]
        AX_new = AS @ Y[:, :k]
        # conjugate direction: the part of the new iterate outside span(X)
        P = _orth(X_new - X @ (X.T @ X_new))
        X, AX, theta = X_new, AX_new, theta_all[:k]

    raise ConvergenceError(
        f"LOBPCG did not reach tol={tol} within {max_iter} iterations "
        f"(worst residual {float(np.max(rnorms)):.3e})",
        residuals=rnorms,
    )


def dense_reference_eig(
    L: SparseSymmetricMatrix,
    k: int,
    grid_dims: tuple[int, int] | None = None,
    content_hash: str = "",
) -> SpectralBasis:
    """Full dense symmetric eigendecomposition truncated to the k smallest.

    Test oracle only; guarded to n <= 4096.
    """
    n = L.n
    if n > 4096:
        raise ValidationError(f"dense reference limited to n <= 4096, got n={n}")
    if k < 1 or k > n:
        raise ValidationError(f"need 1 <= k <= n, got k={k}, n={n}")
    lam, vecs = np.linalg.eigh(L.to_dense())
    lam, vecs = lam[:k], vecs[:, :k]
    phi = canonicalize_signs(vecs)
    resid = np.linalg.norm(L.matvec(phi) - phi * lam, axis=0)
    basis = SpectralBasis(
        eigenvalues=np.maximum(lam, 0.0) if lam[0] > -1e-10 else lam,
        phi=phi,
        residual_norms=resid,
        grid_dims=grid_dims if grid_dims is not None else (1, n),
        content_hash=content_hash,
        tol=0.0,
        seed=0,
    )
    return basis


def eigenvalue_clusters(eigenvalues: np.ndarray, gap: float = 1e-6) -> list[slice]:
    """Group indices whose consecutive eigenvalue gaps fall below ``gap``.

    Near-degenerate eigenvectors are only defined up to rotation inside their
    cluster, so comparisons must happen per cluster subspace.
    """
    lam = np.asarray(eigenvalues, dtype=np.float64)
    slices, start = [], 0
    for j in range(1, lam.size):
        if lam[j] - lam[j - 1] > gap * max(1.0, abs(lam[j])):
            slices.append(slice(start, j))
            start = j
    slices.append(slice(start, lam.size))
    return slices


# ---------------------------------------------------------------------------
# basis files: float32 tensor of shape (h, w, k) plus a JSON sidecar

def save_basis(basis: SpectralBasis, path: str | Path) -> None:
    path = Path(path)
    h, w = basis.grid_dims
    save_tensor(path, basis.phi.reshape(h, w, basis.k))
    meta = {
        "kind": "basis",
        "eigenvalues": [float(v) for v in basis.eigenvalues],
        "residual_norms": [float(v) for v in basis.residual_norms],
        "k": basis.k,
        "grid_dims": [h, w],
        "content_hash": basis.content_hash,
        "tol": basis.tol,
        "seed": basis.seed,
    }
    path.with_suffix(".json").write_text(json.dumps(meta, sort_keys=True) + "\n")


def load_basis(path: str | Path) -> SpectralBasis:
    """Reload a stored basis; float32 storage costs ~1e-7 in orthonormality."""
    path = Path(path)
    phi = load_tensor(path).astype(np.float64)
    meta = json.loads(path.with_suffix(".json").read_text())
    h, w = (int(v) for v in meta["grid_dims"])
    k = int(meta["k"])
    basis = SpectralBasis(
        eigenvalues=np.asarray(meta["eigenvalues"], dtype=np.float64),
        phi=phi.reshape(h * w, k),
        residual_norms=np.asarray(meta["residual_norms"], dtype=np.float64),
        grid_dims=(h, w),
        content_hash=str(meta.get("content_hash", "")),
        tol=float(meta.get("tol", DEFAULT_TOL)),
        seed=int(meta.get("seed", 0)),
    )
    basis.validate(orth_tol=5e-4)
    return basis


def quantized(basis: SpectralBasis) -> SpectralBasis:
    """The basis as a round-trip through float32 storage would return it."""
    phi = basis.phi.astype(np.float32).astype(np.float64)
    return replace(basis, phi=phi)
