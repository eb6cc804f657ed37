from __future__ import annotations

import numpy as np
import pytest
from hypothesis import HealthCheck, settings

settings.register_profile("default", max_examples=60, deadline=None,
                          suppress_health_check=[HealthCheck.too_slow])
settings.load_profile("default")


def floyd_warshall(n: int, edges) -> np.ndarray:
    """Independent all-pairs shortest paths used as a test oracle."""
    d = np.full((n, n), np.inf)
    np.fill_diagonal(d, 0.0)
    for e in edges:
        i, j = int(e[0]), int(e[1])
        w = float(e[2]) if len(e) > 2 else 1.0
        d[i, j] = d[j, i] = min(d[i, j], w)
    for k in range(n):
        d = np.minimum(d, d[:, k, None] + d[None, k, :])
    return d


def brute_medians(d: np.ndarray, u: int, v: int, w: int) -> list[int]:
    return [m for m in range(d.shape[0])
            if d[u, m] + d[m, v] == d[u, v] and d[u, m] + d[m, w] == d[u, w] and d[v, m] + d[m, w] == d[v, w]]


@pytest.fixture
def rng():
    return np.random.default_rng(12345)
