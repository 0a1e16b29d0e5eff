"""Shared fixtures.

Every test runs with an isolated basis cache directory so cache state never
leaks between tests or into the user's real cache.
"""

import numpy as np
import pytest

import fmap


@pytest.fixture(autouse=True)
def _isolated_cache(tmp_path, monkeypatch):
    monkeypatch.setenv("FMAP_CACHE_DIR", str(tmp_path / "basis_cache"))


@pytest.fixture
def rng():
    return np.random.default_rng(0)


def make_grid(h, w, d, seed=0, loc=2.5, spread=0.8):
    """Random positive-median feature grid; the value median sets the edge
    weight scale, so loc must dominate spread for a content-bearing graph."""
    r = np.random.default_rng(seed)
    data = r.normal(loc, spread, size=(h, w, d)).astype(np.float32)
    return fmap.FeatureGrid(data=data, source_image_size=(h * 14, w * 14))


@pytest.fixture
def small_grid():
    return make_grid(8, 8, 4)
