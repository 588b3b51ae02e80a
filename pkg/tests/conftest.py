import numpy as np
import pytest


@pytest.fixture
def rng():
    return np.random.default_rng(12345)


def brute_topk(x, k):
    """Full-sort oracle: k largest magnitudes, lowest index first on ties."""
    order = sorted(range(len(x)), key=lambda i: (-abs(x[i]), i))
    return sorted(order[:k])


def sequential_sum(vectors):
    total = np.zeros(len(vectors[0]))
    for v in vectors:
        total = total + np.asarray(v, dtype=np.float64)
    return total


def rel_err(a, b):
    scale = np.max(np.abs(b))
    return float(np.max(np.abs(np.asarray(a) - np.asarray(b))) / (scale if scale else 1.0))
