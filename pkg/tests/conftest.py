import numpy as np
import pytest

from panelclust import PanelData, SpatialGraph


def random_graph(n: int, rng: np.random.Generator, p_edge: float = 0.4
                 ) -> SpatialGraph:
    edges = [(a, b) for a in range(n) for b in range(a + 1, n)
             if rng.random() < p_edge]
    return SpatialGraph(n, edges)


def random_panel(n_locations: int, rng: np.random.Generator, p: int = 2,
                 n_lo: int = 2, n_hi: int = 5, scale: float = 1.0) -> PanelData:
    ys, xs, ts = [], [], []
    for _ in range(n_locations):
        n = int(rng.integers(n_lo, n_hi + 1))
        ts.append(np.sort(rng.uniform(-1.0, 1.0, n)))
        xs.append(rng.standard_normal((n, p)))
        ys.append(scale * rng.standard_normal(n))
    return PanelData(ys, xs, ts)


@pytest.fixture
def rng():
    return np.random.default_rng(20240817)
