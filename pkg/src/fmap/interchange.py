"""On-disk tensor/annotation formats and the in-memory feature-grid type.

Tensor files are plain NPY v1.0 (magic ``\\x93NUMPY``, little-endian float32,
C order) so third-party tools can read and write them without custom code.
Grid metadata travels in a JSON sidecar with the same basename and a ``.json``
extension; a missing sidecar falls back to defaults.
"""

from __future__ import annotations

import json
from dataclasses import dataclass, field
from pathlib import Path

import numpy as np

from .errors import FormatError, ShapeError, ValidationError

NPY_MAGIC = b"\x93NUMPY"


def _freeze(arr: np.ndarray) -> np.ndarray:
    arr.flags.writeable = False
    return arr


@dataclass(frozen=True)
class FeatureGrid:
    """Dense h x w x d per-patch feature tensor plus image metadata.

    Immutable after construction; ``data`` is float32, row-major, read-only.
    """

    data: np.ndarray
    source_image_size: tuple[int, int] = (0, 0)  # (H, W) pixels; (0,0) -> grid dims
    provenance: str = "unknown"

    def __post_init__(self):
        data = np.array(self.data, dtype=np.float32, order="C")
        if data.ndim != 3:
            raise ShapeError(f"feature grid must be rank 3 (h,w,d), got rank {data.ndim}")
        h, w, d = data.shape
        if h < 2 or w < 2:
            raise ValidationError(f"grid needs h,w >= 2 for at least one edge per axis, got {h}x{w}")
        if d < 1:
            raise ValidationError("feature dimension must be positive")
        if not np.all(np.isfinite(data)):
            raise ValidationError("feature grid contains NaN or Inf entries")
        object.__setattr__(self, "data", _freeze(data))
        if self.source_image_size == (0, 0):
            object.__setattr__(self, "source_image_size", (h, w))

    @property
    def h(self) -> int:
        return self.data.shape[0]

    @property
    def w(self) -> int:
        return self.data.shape[1]

    @property
    def d(self) -> int:
        return self.data.shape[2]

    @property
    def n(self) -> int:
        return self.h * self.w

    def flat(self) -> np.ndarray:
        """Row-major (n, d) view; node order is y*w + x throughout the pipeline."""
        return self.data.reshape(self.n, self.d)

    def content_hash(self) -> str:
        import hashlib

        m = hashlib.sha256()
        m.update(np.asarray(self.data.shape, dtype=np.int64).tobytes())
        m.update(self.data.tobytes())
        return m.hexdigest()


@dataclass(frozen=True)
class ScalarFunction:
    """Real-valued function over the pixel grid of one image, length n = h*w."""

    values: np.ndarray
    h: int
    w: int

    def __post_init__(self):
        values = np.array(self.values, dtype=np.float64).reshape(-1)
        if values.size != self.h * self.w:
            raise ShapeError(f"function length {values.size} != {self.h}*{self.w}")
        if not np.all(np.isfinite(values)):
            raise ValidationError("scalar function contains non-finite entries")
        object.__setattr__(self, "values", _freeze(values))


@dataclass(frozen=True)
class KeypointSet:
    """Sparse (source, target) keypoint pairs in pixel coordinates.

    ``pairs`` has shape (m, 2, 2): pairs[i, 0] = (sx, sy), pairs[i, 1] = (tx, ty).
    ``threshold_basis`` selects the dims the PCK threshold is computed from.
    """

    pairs: np.ndarray
    src_size: tuple[int, int]  # (H, W)
    tgt_size: tuple[int, int]
    threshold_basis: str = "image"  # "image" | "bbox"
    bbox_size: tuple[int, int] | None = None

    def __post_init__(self):
        pairs = np.array(self.pairs, dtype=np.float64).reshape(-1, 2, 2)
        if self.threshold_basis not in ("image", "bbox"):
            raise ValidationError(f"unknown threshold basis {self.threshold_basis!r}")
        if self.threshold_basis == "bbox" and self.bbox_size is None:
            raise ValidationError("bbox threshold basis requires bbox_size")
        for name, size, col in (("source", self.src_size, 0), ("target", self.tgt_size, 1)):
            H, W = size
            xy = pairs[:, col, :]
            if xy.size and (np.any(xy[:, 0] < 0) or np.any(xy[:, 0] >= W)
                            or np.any(xy[:, 1] < 0) or np.any(xy[:, 1] >= H)):
                raise ValidationError(f"{name} keypoint outside image bounds {W}x{H}")
        object.__setattr__(self, "pairs", _freeze(pairs))

    def __len__(self) -> int:
        return self.pairs.shape[0]

    def threshold_dims(self) -> tuple[int, int]:
        """(h, w) the PCK threshold is based on."""
        if self.threshold_basis == "bbox":
            return self.bbox_size  # type: ignore[return-value]
        return self.tgt_size


# ---------------------------------------------------------------------------
# tensor file I/O

def save_tensor(path: str | Path, array: np.ndarray) -> None:
    """Write ``array`` as NPY v1.0 with a float32 little-endian payload."""
    path = Path(path)
    out = np.ascontiguousarray(array, dtype="<f4")
    with open(path, "wb") as f:
        np.lib.format.write_array(f, out, version=(1, 0))


def load_tensor(path: str | Path) -> np.ndarray:
    """Read an NPY tensor file; returns float32, raising on malformed input."""
    path = Path(path)
    with open(path, "rb") as f:
        magic = f.read(len(NPY_MAGIC))
        if magic != NPY_MAGIC:
            raise FormatError(f"{path}: not a tensor file (bad magic {magic!r})")
        f.seek(0)
        try:
            arr = np.lib.format.read_array(f, allow_pickle=False)
        except ValueError as exc:
            raise FormatError(f"{path}: malformed tensor header ({exc})") from exc
    if arr.dtype.kind != "f":
        raise FormatError(f"{path}: expected float payload, got dtype {arr.dtype}")
    return np.ascontiguousarray(arr, dtype=np.float32)


def _sidecar_path(path: str | Path) -> Path:
    return Path(path).with_suffix(".json")


def save_feature_grid(grid: FeatureGrid, path: str | Path) -> None:
    """Persist ``grid`` plus its metadata sidecar; load round-trips bitwise."""
    save_tensor(path, grid.data)
    meta = {
        "provenance": grid.provenance,
        "source_image_size": list(grid.source_image_size),
    }
    _sidecar_path(path).write_text(json.dumps(meta, sort_keys=True, indent=2) + "\n")


def load_feature_grid(path: str | Path) -> FeatureGrid:
    """Read a feature grid, validating invariants; sidecar is optional."""
    data = load_tensor(path)
    if data.ndim != 3:
        raise ShapeError(f"{path}: feature grid must be rank 3, got rank {data.ndim}")
    provenance = "unknown"
    source_image_size = (data.shape[0], data.shape[1])
    sidecar = _sidecar_path(path)
    if sidecar.exists():
        try:
            meta = json.loads(sidecar.read_text())
        except json.JSONDecodeError as exc:
            raise FormatError(f"{sidecar}: malformed sidecar JSON ({exc})") from exc
        provenance = str(meta.get("provenance", provenance))
        if "source_image_size" in meta:
            H, W = meta["source_image_size"]
            source_image_size = (int(H), int(W))
    return FeatureGrid(data=data, source_image_size=source_image_size, provenance=provenance)


def save_keypoints(kp: KeypointSet, path: str | Path) -> None:
    doc = {
        "pairs": kp.pairs.tolist(),
        "threshold_basis": kp.threshold_basis,
        "src_size": list(kp.src_size),
        "tgt_size": list(kp.tgt_size),
    }
    if kp.bbox_size is not None:
        doc["bbox_size"] = list(kp.bbox_size)
    Path(path).write_text(json.dumps(doc, sort_keys=True, indent=2) + "\n")


def load_keypoints(path: str | Path) -> KeypointSet:
    path = Path(path)
    try:
        doc = json.loads(path.read_text())
    except json.JSONDecodeError as exc:
        raise FormatError(f"{path}: malformed keypoint JSON ({exc})") from exc
    try:
        pairs = np.asarray(doc["pairs"], dtype=np.float64)
        if pairs.size == 0:
            pairs = np.zeros((0, 2, 2))
        src_size = tuple(int(v) for v in doc["src_size"])
        tgt_size = tuple(int(v) for v in doc["tgt_size"])
        basis = doc.get("threshold_basis", "image")
        bbox = doc.get("bbox_size")
    except (KeyError, TypeError) as exc:
        raise FormatError(f"{path}: missing or malformed keypoint field ({exc})") from exc
    return KeypointSet(
        pairs=pairs,
        src_size=src_size,  # type: ignore[arg-type]
        tgt_size=tgt_size,  # type: ignore[arg-type]
        threshold_basis=basis,
        bbox_size=None if bbox is None else (int(bbox[0]), int(bbox[1])),
    )


# ---------------------------------------------------------------------------
# resampling

def _axis_lerp(values: np.ndarray, n_out: int, axis: int) -> np.ndarray:
    """Align-corners linear interpolation along one axis.

    Uses a + t*(b-a) so constant fields come through bit-exact and identical
    sizes reduce to the identity.
    """
    n_in = values.shape[axis]
    if n_out == n_in:
        return values
    if n_out == 1 or n_in == 1:
        idx = np.zeros(n_out, dtype=np.intp)
        return np.take(values, idx, axis=axis)
    pos = np.arange(n_out, dtype=np.float64) * (n_in - 1) / (n_out - 1)
    lo = np.minimum(np.floor(pos).astype(np.intp), n_in - 2)
    t = pos - lo
    a = np.take(values, lo, axis=axis)
    b = np.take(values, lo + 1, axis=axis)
    shape = [1] * values.ndim
    shape[axis] = n_out
    return a + t.reshape(shape) * (b - a)


def resize_feature_grid(grid: FeatureGrid, h2: int, w2: int) -> FeatureGrid:
    """Bilinear per-channel resample onto an (h2, w2) grid."""
    if h2 < 2 or w2 < 2:
        raise ValidationError(f"target grid must be at least 2x2, got {h2}x{w2}")
    if (h2, w2) == (grid.h, grid.w):
        return grid
    data = grid.data.astype(np.float64)
    data = _axis_lerp(data, h2, axis=0)
    data = _axis_lerp(data, w2, axis=1)
    return FeatureGrid(
        data=data.astype(np.float32),
        source_image_size=grid.source_image_size,
        provenance=grid.provenance,
    )
