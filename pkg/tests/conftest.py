"""Shared synthetic instances for the test suite."""

import numpy as np
import pytest

from fluency.corpus import CategoryScheme, FluencyRun, RunBank
from fluency.network import network_from_weights


@pytest.fixture
def three_node_net():
    """Hand network: a-b 0.2, a-c 0.6, b-c 0.3, global (0.5, 0.3, 0.2)."""
    w = np.array(
        [
            [0.0, 0.2, 0.6],
            [0.2, 0.0, 0.3],
            [0.6, 0.3, 0.0],
        ]
    )
    return network_from_weights(
        ["a", "b", "c"], w, global_freq={"a": 0.5, "b": 0.3, "c": 0.2}
    )


TWO_CLIQUE_SURFACES = [f"a{i}" for i in range(5)] + [f"b{i}" for i in range(5)]


@pytest.fixture
def two_clique_net():
    """Two 5-node cliques: in-block weight 0.9, cross-block 0.1."""
    n = 10
    w = np.full((n, n), 0.1)
    w[:5, :5] = 0.9
    w[5:, 5:] = 0.9
    np.fill_diagonal(w, 0.0)
    return network_from_weights(TWO_CLIQUE_SURFACES, w)


@pytest.fixture
def two_clique_scheme():
    return CategoryScheme(
        categories=("block-a", "block-b"),
        membership={s: ((0,) if s.startswith("a") else (1,)) for s in TWO_CLIQUE_SURFACES},
    )


def make_bank(*sequences, participants=None):
    runs = [
        FluencyRun(
            participant=participants[i] if participants else f"p{i + 1}",
            items=tuple(seq),
        )
        for i, seq in enumerate(sequences)
    ]
    return RunBank.from_runs(runs)


def random_network(rng, n_nodes=None, density=0.7, with_global=True):
    """Random small network with distinct weights (ties have measure zero)."""
    n = n_nodes if n_nodes is not None else int(rng.integers(3, 7))
    w = rng.uniform(0.05, 1.0, size=(n, n))
    keep = rng.random((n, n)) < density
    w = w * keep
    np.fill_diagonal(w, 0.0)
    # keep every row reachable so local-only models rarely dead-end
    for i in range(n):
        if not w[i].any():
            j = (i + 1) % n
            w[i, j] = float(rng.uniform(0.05, 1.0))
    surfaces = [f"n{i}" for i in range(n)]
    g = rng.uniform(0.1, 1.0, size=n)
    g = g / g.sum()
    global_freq = dict(zip(surfaces, g.tolist())) if with_global else None
    return network_from_weights(surfaces, w, global_freq=global_freq)
