import numpy as np
import pytest

from oodsynth.sphere import normalize
from oodsynth.store import IdStore


def cluster_store(
    num_classes: int = 3,
    dim: int = 8,
    n_per_class: int = 40,
    capacity: int | None = None,
    spread: float = 0.25,
    seed: int = 0,
    ema_factor: float = 0.95,
) -> IdStore:
    """Store filled with simple Gaussian-bump clusters around random unit centers."""
    rng = np.random.default_rng(seed)
    centers = rng.standard_normal((num_classes, dim))
    centers /= np.linalg.norm(centers, axis=1, keepdims=True)
    store = IdStore(num_classes, dim, capacity or n_per_class, ema_factor)
    for c in range(num_classes):
        pts = np.array(
            [normalize(centers[c] + spread * rng.standard_normal(dim)) for _ in range(n_per_class)]
        )
        for z in pts:
            store.insert(c, z)
        store.update_prototype(c, pts.mean(axis=0))
    return store


@pytest.fixture
def small_store() -> IdStore:
    return cluster_store()
