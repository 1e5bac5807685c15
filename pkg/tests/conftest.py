import numpy as np
import pytest

from wassproj.measures import build_empirical


@pytest.fixture
def rng():
    return np.random.default_rng(20240601)


def random_dataset(rng, positive=False, n_max=50):
    """Small data set drawn from one of a few shapes, with optional weights."""
    n = int(rng.integers(2, n_max + 1))
    kind = int(rng.integers(0, 4))
    if kind == 0:
        x = rng.normal(size=n)
    elif kind == 1:
        x = rng.gamma(2.0, size=n)
    elif kind == 2:
        x = rng.exponential(size=n) ** 2
    else:
        x = rng.uniform(-1.0, 3.0, size=n)
    if positive:
        x = np.abs(x) + 1e-3
    w = rng.uniform(0.2, 1.0, size=n) if rng.random() < 0.3 else None
    return build_empirical(x, w)
