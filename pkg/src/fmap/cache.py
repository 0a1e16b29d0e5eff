"""Content-addressed cache for eigenbases, the expensive pipeline stage.

The key digests every input that affects the solve: feature content hash,
sigma mode, k, tolerance, iteration budget, seed, and preconditioner flag.
Payloads are verified with a stored hash on load, so a corrupted entry reads
as a miss (recompute) rather than poisoning downstream results. Writes go to
temp files renamed into place, which keeps concurrent invocations safe.
"""

from __future__ import annotations

import hashlib
import json
import os
from dataclasses import asdict, dataclass
from pathlib import Path

import numpy as np

from .eigensolver import SpectralBasis, load_basis, save_basis

ENV_CACHE_DIR = "FMAP_CACHE_DIR"
FORMAT_VERSION = 1


@dataclass(frozen=True)
class BasisKey:
    feature_hash: str
    sigma_mode: str
    k: int
    tol: float
    max_iter: int
    seed: int
    precondition: bool

    def digest(self) -> str:
        doc = {**asdict(self), "format_version": FORMAT_VERSION}
        blob = json.dumps(doc, sort_keys=True).encode()
        return hashlib.sha256(blob).hexdigest()


def default_cache_dir() -> Path:
    env = os.environ.get(ENV_CACHE_DIR)
    if env:
        return Path(env)
    return Path.home() / ".cache" / "fmap"


class BasisCache:
    def __init__(self, root: str | Path | None = None):
        self.root = Path(root) if root is not None else default_cache_dir()

    def _paths(self, key: BasisKey) -> tuple[Path, Path]:
        digest = key.digest()
        return self.root / f"{digest}.npy", self.root / f"{digest}.json"

    def get(self, key: BasisKey) -> tuple[SpectralBasis | None, str]:
        """(basis, status) with status in {"hit", "miss", "corrupt"}."""
        tensor_path, meta_path = self._paths(key)
        if not tensor_path.exists() or not meta_path.exists():
            return None, "miss"
        try:
            meta = json.loads(meta_path.read_text())
            payload = tensor_path.read_bytes()
            if hashlib.sha256(payload).hexdigest() != meta.get("payload_sha256"):
                return None, "corrupt"
            return load_basis(tensor_path), "hit"
        except Exception:
            return None, "corrupt"

    def put(self, key: BasisKey, basis: SpectralBasis) -> None:
        """Store atomically; identical keys and bases produce identical bytes."""
        self.root.mkdir(parents=True, exist_ok=True)
        tensor_path, meta_path = self._paths(key)
        tmp_tensor = tensor_path.with_suffix(f".npy.{os.getpid()}.tmp")
        tmp_meta = meta_path.with_suffix(f".json.{os.getpid()}.tmp")
        save_basis(basis, tmp_tensor)
        payload_hash = hashlib.sha256(tmp_tensor.read_bytes()).hexdigest()
        side = tmp_tensor.with_suffix(".json")  # written by save_basis
        meta = json.loads(side.read_text())
        meta["payload_sha256"] = payload_hash
        meta["key"] = asdict(key)
        tmp_meta.write_text(json.dumps(meta, sort_keys=True) + "\n")
        side.unlink()
        os.replace(tmp_tensor, tensor_path)
        os.replace(tmp_meta, meta_path)
