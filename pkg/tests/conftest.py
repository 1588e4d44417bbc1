"""Shared fixtures: small graphs, matrices, and problem instances."""

import numpy as np
import pytest

from decopt import (
    NoiseModel,
    assign_weights,
    build_topology,
    make_het_quadratic,
    spectral_profile,
)


@pytest.fixture(scope="session")
def exp8():
    """Directed exponential graph on 8 agents with uniform weights."""
    return assign_weights(build_topology("directed_exponential", 8), "uniform_out")


@pytest.fixture(scope="session")
def exp8_profile(exp8):
    return spectral_profile(exp8)


@pytest.fixture(scope="session")
def ring16_metropolis():
    """Undirected 16-ring with lazy-Metropolis weights (doubly stochastic)."""
    return assign_weights(build_topology("undirected_ring", 16), "lazy_metropolis")


@pytest.fixture(scope="session")
def ring16_weighted():
    """Directed 16-ring with a 0.8 self-weight (skewed but circulant)."""
    return assign_weights(build_topology("directed_ring", 16), "weighted_self", self_weight=0.8)


@pytest.fixture(scope="session")
def quad_suite():
    return make_het_quadratic(n=8, dim=32, rows_per_agent=50, heterogeneity=1.0, seed=0)


@pytest.fixture(scope="session")
def noise_p15():
    return NoiseModel(p=1.5, sigma=1.0)


def random_strongly_connected(rng: np.random.Generator, n: int):
    """A random strongly connected digraph: a random Hamiltonian cycle plus
    extra directed edges, self-loops everywhere."""
    from decopt import custom_topology

    order = rng.permutation(n)
    edges = {(int(order[i]), int(order[(i + 1) % n])) for i in range(n)} if n > 1 else set()
    for i in range(n):
        for j in range(n):
            if i != j and rng.random() < 0.25:
                edges.add((i, j))
    return custom_topology(n, edges, directed=True)


def random_mixing(rng: np.random.Generator, n: int):
    """Random strongly connected digraph with a random weight scheme."""
    topo = random_strongly_connected(rng, n)
    if rng.random() < 0.5:
        return assign_weights(topo, "uniform_out")
    return assign_weights(topo, "weighted_self", self_weight=float(rng.uniform(0.2, 0.9)))
