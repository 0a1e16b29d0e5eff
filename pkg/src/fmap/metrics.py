"""Correspondence quality measures: PCK, endpoint error, smoothness, keypoint MSE.

Conventions are pinned here and echoed into every evaluation report, since
different benchmarks disagree on details like masking and thresholds: flow is
target minus source with x rightward and y downward; PCK thresholds scale
with max(h, w) of the chosen threshold frame; smoothness averages forward
differences over the interior.
"""

from __future__ import annotations

import numpy as np

from .errors import ValidationError
from .interchange import KeypointSet

CONVENTIONS = {
    "flow": "target coords minus source coords; channels (dx, dy); x right, y down",
    "pck": "percent of points with ||pred - gt||_2 <= alpha * max(h, w) of the threshold frame",
    "epe": "mean over masked pixels of ||flow - gt_flow||_2",
    "smoothness": "mean over (h-1)x(w-1) interior of 0.5*(||du/dx|| + ||du/dy||), forward differences",
    "keypoints": "flow sampled bilinearly at source keypoints, clamped to the grid",
    "resolution": "metrics computed on image-resolution flow",
}


def _as_points(arr, name: str) -> np.ndarray:
    out = np.asarray(arr, dtype=np.float64)
    if out.ndim != 2 or out.shape[1] != 2:
        raise ValidationError(f"{name} must be (m, 2), got {out.shape}")
    if out.shape[0] == 0:
        raise ValidationError(f"{name} is empty")
    return out


def _as_flow(arr, name: str) -> np.ndarray:
    out = np.asarray(arr, dtype=np.float64)
    if out.ndim != 3 or out.shape[2] != 2:
        raise ValidationError(f"{name} must be (h, w, 2), got {out.shape}")
    return out


def pck(pred, gt, threshold_dims: tuple[int, int], alpha: float) -> float:
    """Percentage of predictions within alpha * max(h, w) of ground truth."""
    pred = _as_points(pred, "pred")
    gt = _as_points(gt, "gt")
    if pred.shape != gt.shape:
        raise ValidationError(f"point counts differ: {pred.shape} vs {gt.shape}")
    if alpha <= 0:
        raise ValidationError(f"alpha must be positive, got {alpha}")
    threshold = alpha * max(threshold_dims)
    errors = np.linalg.norm(pred - gt, axis=1)
    return float(100.0 * np.count_nonzero(errors <= threshold) / errors.size)


def epe(flow, gt_flow, mask=None) -> float:
    """Mean endpoint error over masked pixels."""
    flow = _as_flow(flow, "flow")
    gt_flow = _as_flow(gt_flow, "gt_flow")
    if flow.shape != gt_flow.shape:
        raise ValidationError(f"flow shapes differ: {flow.shape} vs {gt_flow.shape}")
    err = np.linalg.norm(flow - gt_flow, axis=2)
    if mask is None:
        return float(err.mean())
    mask = np.asarray(mask, dtype=bool)
    if mask.shape != err.shape:
        raise ValidationError(f"mask shape {mask.shape} != flow grid {err.shape}")
    if not mask.any():
        raise ValidationError("mask selects no pixels")
    return float(err[mask].mean())


def smoothness(flow) -> float:
    """Mean forward-difference magnitude of the flow field over the interior.

    At each of the (h-1) x (w-1) positions where both forward differences
    exist, take 0.5 * (||u(x+1,y) - u(x,y)|| + ||u(x,y+1) - u(x,y)||).
    """
    flow = _as_flow(flow, "flow")
    h, w = flow.shape[:2]
    if h < 2 or w < 2:
        raise ValidationError(f"flow grid must be at least 2x2, got {h}x{w}")
    dx = np.linalg.norm(flow[:, 1:] - flow[:, :-1], axis=2)[: h - 1, :]
    dy = np.linalg.norm(flow[1:, :] - flow[:-1, :], axis=2)[:, : w - 1]
    return float((0.5 * (dx + dy)).mean())


def mse_keypoints(pred, gt) -> float:
    """Mean squared Euclidean distance over keypoints."""
    pred = _as_points(pred, "pred")
    gt = _as_points(gt, "gt")
    if pred.shape != gt.shape:
        raise ValidationError(f"point counts differ: {pred.shape} vs {gt.shape}")
    return float((np.linalg.norm(pred - gt, axis=1) ** 2).mean())


def sample_flow(flow, points) -> np.ndarray:
    """Bilinear flow samples at real-valued (x, y) points, clamped to bounds."""
    flow = _as_flow(flow, "flow")
    points = _as_points(points, "points")
    h, w = flow.shape[:2]
    x = np.clip(points[:, 0], 0.0, w - 1.0)
    y = np.clip(points[:, 1], 0.0, h - 1.0)
    x0 = np.clip(np.floor(x).astype(np.int64), 0, w - 2) if w > 1 else np.zeros_like(x, np.int64)
    y0 = np.clip(np.floor(y).astype(np.int64), 0, h - 2) if h > 1 else np.zeros_like(y, np.int64)
    tx = (x - x0)[:, None]
    ty = (y - y0)[:, None]
    f00 = flow[y0, x0]
    f01 = flow[y0, x0 + 1]
    f10 = flow[y0 + 1, x0]
    f11 = flow[y0 + 1, x0 + 1]
    top = f00 + tx * (f01 - f00)
    bottom = f10 + tx * (f11 - f10)
    return top + ty * (bottom - top)


def predict_keypoints(flow, src_points) -> np.ndarray:
    """Predicted target keypoints: source location plus sampled flow."""
    src_points = _as_points(src_points, "src_points")
    return src_points + sample_flow(flow, src_points)


def evaluation_report(
    flow: np.ndarray,
    keypoints: KeypointSet | None = None,
    gt_flow: np.ndarray | None = None,
    mask: np.ndarray | None = None,
    alphas: tuple[float, ...] = (0.05, 0.1, 0.2),
) -> dict:
    """Bundle every requested metric with the conventions that produced it."""
    report: dict = {
        "smoothness": smoothness(flow),
        "counts": {"flow_pixels": int(flow.shape[0] * flow.shape[1])},
        "conventions": CONVENTIONS,
    }
    if gt_flow is not None:
        report["epe"] = epe(flow, gt_flow, mask)
    if keypoints is not None:
        pred = predict_keypoints(flow, keypoints.pairs[:, 0, :])
        gt = keypoints.pairs[:, 1, :]
        dims = keypoints.threshold_dims()
        report["pck"] = {str(a): pck(pred, gt, dims, a) for a in alphas}
        report["mse"] = mse_keypoints(pred, gt)
        report["counts"]["keypoints"] = len(keypoints)
    return report
