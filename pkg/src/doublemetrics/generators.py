"""Random integer-weighted fixtures for fuzzing the algebra."""
from __future__ import annotations

import numpy as np
from scipy.sparse.csgraph import shortest_path

from .spaces import CrossMetric, FiniteMetricSpace, min_plus


def random_space(rng: np.random.Generator, n: int, max_weight: int = 4) -> FiniteMetricSpace:
    """Shortest-path metric of a random connected graph with integer weights."""
    w = np.zeros((n, n))
    for i in range(1, n):
        j = int(rng.integers(0, i))
        w[i, j] = w[j, i] = rng.integers(1, max_weight + 1)
    extra = rng.random((n, n)) < 0.3
    for i, j in zip(*np.nonzero(np.triu(extra, 1))):
        w[i, j] = w[j, i] = rng.integers(1, max_weight + 1)
    d = shortest_path(w, directed=False) if n > 1 else np.zeros((1, 1))
    return FiniteMetricSpace(list(range(n)), d, 0)


def single_crossing(space: FiniteMetricSpace, edges) -> CrossMetric:
    """``cross(x, y') = min_e d(x, z_e) + len_e + d(w_e, y)`` over ``(z, w, len)`` edges."""
    d = space.dist
    z = np.array([e[0] for e in edges])
    w = np.array([e[1] for e in edges])
    length = np.array([float(e[2]) for e in edges])
    return CrossMetric(space, min_plus(d[:, z] + length, d[w, :]))


def random_cross(rng: np.random.Generator, space: FiniteMetricSpace, n_edges: int | None = None) -> CrossMetric:
    """A valid cross metric from random gluing edges.

    Lengths are raised to half the worst distortion between edge endpoints,
    which is exactly what the co-triangle inequalities need.
    """
    n = len(space)
    k = n_edges or int(rng.integers(1, 2 * n + 1))
    z = rng.integers(0, n, k)
    w = rng.integers(0, n, k)
    d = space.dist
    length = rng.integers(1, int(d.max()) + 3, k).astype(float)
    distort = np.abs(d[np.ix_(z, z)] - d[np.ix_(w, w)]).max(axis=1)
    length = np.maximum(length, np.ceil(distort / 2))
    return single_crossing(space, list(zip(z, w, length)))
