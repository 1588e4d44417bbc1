"""Heavy-tailed stochastic gradient oracle.

The noise added to exact gradients is spherically symmetric with a Pareto
radial magnitude: ``delta = s * u`` where ``u`` is uniform on the unit
sphere (normalized Gaussian draw) and ``s = x_m * U^(-1/a)`` with
``U ~ uniform(0, 1]``. The scale is calibrated so the p-th radial moment
is exact:

    x_m = sigma * ((a - p) / a)^(1/p)   =>   E[s^p] = a x_m^p / (a - p) = sigma^p.

The tail index ``a`` must exceed the moment order ``p``; any ``a <= 2``
gives infinite variance, which is the regime the moment bound is designed
for. Spherical symmetry makes the noise mean-zero, so the oracle is
unbiased.
"""

from __future__ import annotations

from dataclasses import dataclass, field

import numpy as np

from .objectives import ObjectiveSuite, local_grad


def default_tail_index(p: float) -> float:
    """Default tail index: (p + 2) / 2, which is > p for p < 2.

    At p = 2 that midpoint collapses onto p itself (the p-th moment would
    diverge), so the default falls back to 3.0 there: variance is then
    finite, matching the bounded-variance character of p = 2.
    """
    midpoint = (p + 2.0) / 2.0
    return midpoint if midpoint > p else 3.0


@dataclass(frozen=True)
class NoiseModel:
    """p-th-bounded-central-moment noise: E ||delta||^p = sigma^p exactly."""

    p: float
    sigma: float
    tail_index: float = field(default=0.0)

    def __post_init__(self):
        if not (1.0 < self.p <= 2.0):
            raise ValueError(f"moment order p must lie in (1, 2], got {self.p}")
        if self.sigma < 0:
            raise ValueError(f"noise level must be >= 0, got {self.sigma}")
        if self.tail_index == 0.0:
            object.__setattr__(self, "tail_index", default_tail_index(self.p))
        if self.tail_index <= self.p:
            raise ValueError(
                f"tail index must exceed p ({self.p}), got {self.tail_index}"
            )

    @property
    def scale(self) -> float:
        """Pareto scale x_m calibrated for E[s^p] = sigma^p."""
        a, p = self.tail_index, self.p
        return self.sigma * ((a - p) / a) ** (1.0 / p)


def heavy_tail_draws(
    noise: NoiseModel, dim: int, count: int, rng: np.random.Generator
) -> np.ndarray:
    """``count`` independent noise vectors, shape (count, dim).

    Draw order is fixed (radial uniforms first, then the Gaussian block)
    so results are deterministic given the generator state.
    """
    if dim < 1:
        raise ValueError("dimension must be >= 1")
    u = 1.0 - rng.random(count)  # in (0, 1], keeps the power finite
    radius = noise.scale * u ** (-1.0 / noise.tail_index)
    direction = rng.standard_normal((count, dim))
    norms = np.linalg.norm(direction, axis=1, keepdims=True)
    norms[norms == 0.0] = 1.0
    return radius[:, None] * direction / norms


def heavy_tail_draw(noise: NoiseModel, dim: int, rng: np.random.Generator) -> np.ndarray:
    """One noise vector delta with E ||delta||^p = sigma^p."""
    return heavy_tail_draws(noise, dim, 1, rng)[0]


def stochastic_batch_grad(
    suite: ObjectiveSuite,
    agent: int,
    x: np.ndarray,
    noise: NoiseModel,
    batch: int,
    rng: np.random.Generator,
) -> np.ndarray:
    """Exact local gradient plus the mean of ``batch`` noise draws.

    The caller credits ``batch`` samples to its counter.
    """
    if batch < 1:
        raise ValueError("batch size must be >= 1")
    grad = local_grad(suite, agent, x)
    if noise.sigma == 0.0:
        return grad
    return grad + heavy_tail_draws(noise, suite.dim, batch, rng).mean(axis=0)


def agent_streams(run_seed: int, n: int) -> list[np.random.Generator]:
    """One independent generator per (run, agent).

    Seed derivation: SeedSequence(run_seed, spawn_key=(agent,)); the same
    run seed always reproduces the same n streams.
    """
    return [
        np.random.default_rng(np.random.SeedSequence(run_seed, spawn_key=(agent,)))
        for agent in range(n)
    ]
