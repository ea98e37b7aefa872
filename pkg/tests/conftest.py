from __future__ import annotations

import itertools

import numpy as np
import pytest
from hypothesis import HealthCheck, settings

from gse_lab.core import InteractionMatrix, WeightedGraph
from gse_lab.graphon import StepGraphon

settings.register_profile(
    "default",
    max_examples=25,
    deadline=None,
    suppress_health_check=[HealthCheck.too_slow],
    derandomize=True,
)
settings.load_profile("default")


def rand_graphon(rng, k, low=0.0, high=1.0):
    B = rng.uniform(low, high, (k, k))
    return StepGraphon(rng.dirichlet(np.ones(k)), (B + B.T) / 2)


def rand_J(rng, q):
    A = rng.normal(size=(q, q))
    return InteractionMatrix((A + A.T) / 2)


def rand_simple_graph(rng, n, p=0.5):
    A = np.triu(rng.random((n, n)) < p, 1).astype(float)
    return WeightedGraph(A + A.T)


def brute_energy(G, J, labels):
    """Double loop over ordered node pairs, written independently of the library."""
    a = G.node_weights
    total = 0.0
    for u in range(G.n):
        for v in range(G.n):
            if u != v:
                total += a[u] * a[v] * G.edge_weights[u, v] * J.entries[labels[u], labels[v]]
    return -total / a.sum() ** 2


def brute_gse(G, J):
    return min(brute_energy(G, J, lab) for lab in itertools.product(range(J.q), repeat=G.n))


@pytest.fixture
def rng():
    return np.random.default_rng(12345)
