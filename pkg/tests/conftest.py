import io

import numpy as np
import pytest

from betafit.graph_io import EdgeList, DegreeSequence, build_histogram, degrees_of


def make_edge_list(pairs, n=None):
    return EdgeList.from_pairs(np.asarray(pairs, dtype=np.int64), n=n)


def random_graph(rng, n, p):
    """Erdos-Renyi draw used as a generic non-degenerate test input."""
    upper = np.triu(rng.random((n, n)) < p, k=1)
    u, v = np.nonzero(upper)
    return EdgeList.from_pairs(np.column_stack((u, v)), n=n)


def random_nondegenerate_graph(rng, n, p, require_interior=False):
    """Redraw until the graph is neither empty nor complete.

    With require_interior, also force min degree >= 1 and max degree <= n-2
    (needed before attempting unpenalized fits).
    """
    while True:
        g = random_graph(rng, n, p)
        d = degrees_of(g).degrees
        if g.edge_count == 0 or g.edge_count == n * (n - 1) // 2:
            continue
        if require_interior and (d.min() == 0 or d.max() == n - 1):
            continue
        return g


def hist_from_degrees(degrees):
    return build_histogram(DegreeSequence(degrees=np.asarray(degrees, np.int64)))


def text_stream(content: str):
    return io.BytesIO(content.encode("utf-8"))


@pytest.fixture
def rng():
    return np.random.default_rng(20240817)
