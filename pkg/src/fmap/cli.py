"""Command-line front end: basis, match, transfer, eval, viz.

Exit codes: 0 success, 2 usage, 3 data/format problems, 4 numerical failure.
Errors are labeled with the pipeline stage that raised them. All commands are
deterministic for fixed inputs and seed; wall-clock timing goes to stderr
only, never into output files.
"""

from __future__ import annotations

import argparse
import json
import sys
import time
from contextlib import contextmanager
from dataclasses import asdict
from pathlib import Path

import numpy as np

from .cache import BasisCache, BasisKey, default_cache_dir
from .eigensolver import (
    DEFAULT_MAX_ITER,
    DEFAULT_TOL,
    SpectralBasis,
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
    ScalarFunction,
    load_feature_grid,
    load_keypoints,
    load_tensor,
    save_tensor,
)
from .laplacian import SIGMA_MODES, laplacian_from_grid
from .metrics import evaluation_report
from .objective import FunctionalMap, OptimizerConfig, optimize_pair
from .pointmap import CorrespondenceField, fmap_to_pointmap, pointmap_to_image_flow, transfer_function
from .refine import RefineConfig
from .viz import (
    render_fmap_matrix,
    render_heat,
    render_rainbow,
    render_signed,
    side_by_side,
    upscale_nearest,
    write_png,
)


@contextmanager
def _stage(name: str):
    """Tag any error raised inside with the pipeline stage for the top level."""
    try:
        yield
    except FileNotFoundError as exc:
        err = FormatError(f"missing file: {exc.filename or exc}")
        err.stage = name
        raise err from exc
    except FmapError as exc:
        if not hasattr(exc, "stage"):
            exc.stage = name
        raise


def _write_json(path: Path, doc: dict) -> None:
    path.write_text(json.dumps(doc, sort_keys=True, indent=2) + "\n")


def _sidecar(path: Path, doc: dict) -> None:
    _write_json(path.with_suffix(".json"), doc)


def _load_sidecar(path: Path) -> dict:
    side = path.with_suffix(".json")
    if not side.exists():
        return {}
    return json.loads(side.read_text())


# ---------------------------------------------------------------------------
# shared pipeline pieces

def _compute_or_load_basis(
    grid: FeatureGrid,
    k: int,
    tol: float,
    max_iter: int,
    seed: int,
    sigma_mode: str,
    cache_dir: str | None,
    no_cache: bool = False,
) -> tuple[SpectralBasis, str]:
    """Cached eigenbasis for one feature grid, float32-quantized for use.

    Quantization makes cache hits and fresh solves feed identical numbers
    downstream, so reruns are byte-for-byte reproducible either way.
    """
    key = BasisKey(
        feature_hash=grid.content_hash(),
        sigma_mode=sigma_mode,
        k=k,
        tol=tol,
        max_iter=max_iter,
        seed=seed,
        precondition=True,
    )
    cache = BasisCache(cache_dir) if not no_cache else None
    if cache is not None:
        cached, status = cache.get(key)
        if cached is not None:
            return cached, status
    else:
        status = "disabled"
    with _stage("laplacian"):
        L = laplacian_from_grid(grid, sigma_mode)
    with _stage("eigensolver"):
        basis = lobpcg_smallest(
            L,
            k,
            tol=tol,
            max_iter=max_iter,
            seed=seed,
            grid_dims=(grid.h, grid.w),
            content_hash=key.feature_hash,
        )
    if cache is not None:
        cache.put(key, basis)
        if status == "corrupt":
            print("warning: cache entry failed its payload check; recomputed", file=sys.stderr)
    return quantized(basis), status


def _clamped_k(requested: int | None, *grids: FeatureGrid) -> int:
    n_min = min(g.n for g in grids)
    if requested is None:
        return min(200, n_min - 1)
    return min(requested, n_min - 1)


# ---------------------------------------------------------------------------
# commands

def cmd_basis(args) -> int:
    with _stage("interchange"):
        grid = load_feature_grid(args.features)
    k = _clamped_k(args.k, grid)
    started = time.perf_counter()
    basis, status = _compute_or_load_basis(
        grid, k, args.tol, args.max_iter, args.seed, args.sigma_mode, args.cache_dir, args.no_cache
    )
    save_basis(basis, args.out)
    worst = float(np.max(basis.residual_norms)) if basis.k else 0.0
    print(
        f"basis k={basis.k} n={basis.n} cache={status} "
        f"max_residual={worst:.3e} lambda_max={basis.eigenvalues[-1]:.6f}"
    )
    print(f"elapsed {time.perf_counter() - started:.2f}s", file=sys.stderr)
    return 0


def _match_config(args) -> OptimizerConfig:
    refine = RefineConfig()
    return OptimizerConfig(
        lambda_diag=args.lambda_diag,
        lambda_cons=args.lambda_cons,
        lambda_z=args.lambda_z,
        lambda_reg=args.lambda_reg,
        r=args.latent_r,
        iterations=args.iterations,
        learning_rate=args.lr,
        seed=args.seed,
        use_refine=not args.no_refine,
        refine=refine,
    )


def cmd_match(args) -> int:
    out_dir = Path(args.out)
    out_dir.mkdir(parents=True, exist_ok=True)
    with _stage("interchange"):
        basis_feats = [load_feature_grid(p) for p in args.basis_features]
        loss_feats = [load_feature_grid(p) for p in args.loss_features]
    k = _clamped_k(args.k, *basis_feats)
    started = time.perf_counter()

    bases = []
    for grid in basis_feats:
        basis, status = _compute_or_load_basis(
            grid, k, args.tol, args.max_iter, args.seed, args.sigma_mode,
            args.cache_dir, args.no_cache,
        )
        bases.append(basis)
        print(f"basis n={basis.n} k={basis.k} cache={status}", file=sys.stderr)
    basis_m, basis_n = bases

    config = _match_config(args)
    report_path = out_dir / "report.json"
    try:
        with _stage("optimizer"):
            fmap, report = optimize_pair(basis_m, basis_n, loss_feats[0], loss_feats[1], config)
    except (NumericError, ConvergenceError) as exc:
        _write_json(report_path, {
            "error": str(exc),
            "stage": "optimizer",
            "config": {**asdict(config), "refine": asdict(config.refine)},
        })
        raise

    with _stage("pointmap"):
        corr = fmap_to_pointmap(fmap, basis_m, basis_n)
        src_size = basis_feats[0].source_image_size
        tgt_size = basis_feats[1].source_image_size
        flow = pointmap_to_image_flow(corr, src_size, tgt_size)

    save_tensor(out_dir / "flow.npy", flow)
    _sidecar(out_dir / "flow.npy", {
        "kind": "flow",
        "src_image_size": list(src_size),
        "tgt_image_size": list(tgt_size),
        "src_grid": list(corr.src_dims),
        "tgt_grid": list(corr.tgt_dims),
    })
    save_tensor(out_dir / "flow_grid.npy", corr.grid_flow().astype(np.float32))
    _sidecar(out_dir / "flow_grid.npy", {
        "kind": "grid_flow",
        "src_grid": list(corr.src_dims),
        "tgt_grid": list(corr.tgt_dims),
    })
    save_tensor(out_dir / "C.npy", fmap.C)
    _sidecar(out_dir / "C.npy", {"kind": "fmap", "k": fmap.k})
    doc = json.loads(report.to_json())
    doc["pipeline"] = {
        "k": k,
        "sigma_mode": args.sigma_mode,
        "seed": args.seed,
        "refine_enabled": not args.no_refine,
        "src_grid": list(corr.src_dims),
        "tgt_grid": list(corr.tgt_dims),
        "src_image_size": list(src_size),
        "tgt_image_size": list(tgt_size),
    }
    _write_json(report_path, doc)
    print(
        f"match k={k} final_loss={report.loss_trace[-1]:.6f} "
        f"orth_residuals=({report.orth_residual_m:.4f}, {report.orth_residual_n:.4f})"
    )
    print(f"elapsed {time.perf_counter() - started:.2f}s", file=sys.stderr)
    return 0


def cmd_transfer(args) -> int:
    with _stage("interchange"):
        C = load_tensor(args.c).astype(np.float64)
        basis_m = load_basis(args.basis_m)
        basis_n = load_basis(args.basis_n)
        values = load_tensor(args.function).astype(np.float64).reshape(-1)
    with _stage("pointmap"):
        h_m, w_m = basis_m.grid_dims
        f = ScalarFunction(values=values, h=h_m, w=w_m)
        fmap = FunctionalMap(C=C)
        g = transfer_function(fmap, basis_m, basis_n, f)
    out_dir = Path(args.out)
    out_dir.mkdir(parents=True, exist_ok=True)
    h_n, w_n = basis_n.grid_dims
    save_tensor(out_dir / "transferred.npy", g.values.reshape(h_n, w_n, 1).astype(np.float32))
    _sidecar(out_dir / "transferred.npy", {"kind": "function", "grid_dims": [h_n, w_n]})
    lo, hi = float(values.min()), float(values.max())
    panel = side_by_side(
        upscale_nearest(render_heat(values.reshape(h_m, w_m)), args.scale),
        upscale_nearest(render_heat(np.clip(g.values.reshape(h_n, w_n), lo, hi)), args.scale),
    )
    write_png(out_dir / "transfer.png", panel)
    print(f"transfer k={fmap.k} out={out_dir}")
    return 0


def cmd_eval(args) -> int:
    with _stage("interchange"):
        flow = load_tensor(args.flow).astype(np.float64)
        keypoints = load_keypoints(args.keypoints) if args.keypoints else None
        gt_flow = load_tensor(args.gt_flow).astype(np.float64) if args.gt_flow else None
    with _stage("metrics"):
        alphas = tuple(float(a) for a in args.alphas.split(","))
        report = evaluation_report(flow, keypoints=keypoints, gt_flow=gt_flow, alphas=alphas)
    text = json.dumps(report, sort_keys=True, indent=2)
    if args.out:
        Path(args.out).write_text(text + "\n")
    print(text)
    return 0


def _viz_kind(path: Path) -> str:
    meta = _load_sidecar(path)
    if "kind" in meta:
        return str(meta["kind"])
    if "eigenvalues" in meta:
        return "basis"
    return "unknown"


def cmd_viz(args) -> int:
    path = Path(args.input)
    kind = _viz_kind(path)
    expected = {
        "eigenfunction": "basis",
        "rainbow": "grid_flow",
        "transfer": "function",
        "fmap-matrix": "fmap",
    }[args.mode]
    if kind != expected:
        raise ValidationError(
            f"mode {args.mode!r} needs a {expected} artifact, but {path} is {kind!r}"
        )
    with _stage("viz"):
        if args.mode == "eigenfunction":
            basis = load_basis(path)
            j = args.index - 1
            if not 0 <= j < basis.k:
                raise ValidationError(f"eigenfunction index must be in [1, {basis.k}], got {args.index}")
            h, w = basis.grid_dims
            img = render_signed(basis.phi[:, j].reshape(h, w))
        elif args.mode == "rainbow":
            meta = _load_sidecar(path)
            grid_flow = load_tensor(path).astype(np.float64)
            h, w = (int(v) for v in meta["src_grid"])
            th, tw = (int(v) for v in meta["tgt_grid"])
            src_y, src_x = np.divmod(np.arange(h * w), w)
            tgt_x = np.clip(np.rint(src_x + grid_flow[..., 0].reshape(-1)), 0, tw - 1)
            tgt_y = np.clip(np.rint(src_y + grid_flow[..., 1].reshape(-1)), 0, th - 1)
            corr = CorrespondenceField(
                target_index=(tgt_y * tw + tgt_x).astype(np.int64),
                src_dims=(h, w),
                tgt_dims=(th, tw),
            )
            img = render_rainbow(corr)
        elif args.mode == "transfer":
            values = load_tensor(path).astype(np.float64)
            img = render_heat(values.reshape(values.shape[0], values.shape[1]))
        else:  # fmap-matrix
            img = render_fmap_matrix(load_tensor(path).astype(np.float64))
        write_png(args.out, upscale_nearest(img, args.scale))
    print(f"viz mode={args.mode} out={args.out}")
    return 0


# ---------------------------------------------------------------------------
# parser

def build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(
        prog="fmap",
        description="Zero-shot image correspondence via spectral functional maps.",
    )
    sub = parser.add_subparsers(dest="command", required=True)

    def add_solver_flags(p):
        p.add_argument("--k", type=int, default=None, help="basis size (default min(200, n-1))")
        p.add_argument("--tol", type=float, default=DEFAULT_TOL)
        p.add_argument("--max-iter", type=int, default=DEFAULT_MAX_ITER)
        p.add_argument("--seed", type=int, default=0)
        p.add_argument("--sigma-mode", choices=SIGMA_MODES, default="values")
        p.add_argument("--cache-dir", default=None,
                       help=f"basis cache directory (default $FMAP_CACHE_DIR or {default_cache_dir()})")
        p.add_argument("--no-cache", action="store_true", help="bypass the basis cache")

    p_basis = sub.add_parser("basis", help="compute (or fetch cached) Laplacian eigenbasis")
    p_basis.add_argument("--features", required=True)
    add_solver_flags(p_basis)
    p_basis.add_argument("--out", required=True)
    p_basis.set_defaults(func=cmd_basis)

    p_match = sub.add_parser("match", help="full pipeline: features to flow, C, report")
    p_match.add_argument("--basis-features", nargs=2, required=True, metavar=("M", "N"))
    p_match.add_argument("--loss-features", nargs=2, required=True, metavar=("M", "N"))
    add_solver_flags(p_match)
    p_match.add_argument("--iterations", type=int, default=600)
    p_match.add_argument("--lr", type=float, default=1e-3)
    p_match.add_argument("--lambda-diag", type=float, default=5.0)
    p_match.add_argument("--lambda-cons", type=float, default=1e-3)
    p_match.add_argument("--lambda-z", type=float, default=1.0)
    p_match.add_argument("--lambda-reg", type=float, default=1.0)
    p_match.add_argument("--latent-r", type=int, default=20)
    p_match.add_argument("--no-refine", action="store_true",
                         help="skip attention refinement; project raw descriptors")
    p_match.add_argument("--out", required=True, help="output directory")
    p_match.set_defaults(func=cmd_match)

    p_transfer = sub.add_parser("transfer", help="carry a scalar function across the map")
    p_transfer.add_argument("--c", required=True, help="functional map tensor")
    p_transfer.add_argument("--basis-m", required=True)
    p_transfer.add_argument("--basis-n", required=True)
    p_transfer.add_argument("--function", required=True, help="scalar function tensor on M")
    p_transfer.add_argument("--scale", type=int, default=8)
    p_transfer.add_argument("--out", required=True, help="output directory")
    p_transfer.set_defaults(func=cmd_transfer)

    p_eval = sub.add_parser("eval", help="score a flow against annotations")
    p_eval.add_argument("--flow", required=True)
    p_eval.add_argument("--keypoints", default=None)
    p_eval.add_argument("--gt-flow", default=None)
    p_eval.add_argument("--alphas", default="0.05,0.1,0.2")
    p_eval.add_argument("--out", default=None)
    p_eval.set_defaults(func=cmd_eval)

    p_viz = sub.add_parser("viz", help="render an artifact to PNG")
    p_viz.add_argument("--mode", required=True,
                       choices=["eigenfunction", "rainbow", "transfer", "fmap-matrix"])
    p_viz.add_argument("--input", required=True)
    p_viz.add_argument("--index", type=int, default=1, help="1-based eigenfunction index")
    p_viz.add_argument("--scale", type=int, default=8)
    p_viz.add_argument("--out", required=True)
    p_viz.set_defaults(func=cmd_viz)

    return parser


def main(argv=None) -> int:
    args = build_parser().parse_args(argv)
    try:
        return args.func(args)
    except (FormatError, ValidationError, ShapeError, DegenerateInputError) as exc:
        print(f"error[{getattr(exc, 'stage', 'data')}]: {exc}", file=sys.stderr)
        return 3
    except (ConvergenceError, NumericError) as exc:
        print(f"error[{getattr(exc, 'stage', 'numerical')}]: {exc}", file=sys.stderr)
        return 4


if __name__ == "__main__":
    sys.exit(main())
