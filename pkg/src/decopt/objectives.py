"""Heterogeneous smooth local objectives with exact gradients.

Two synthetic families stand in for full-scale training workloads:

het_quadratic
    f_i(x) = 1/2 ||B_i x - c_i||^2 with per-agent data matrices B_i
    (rows x d) and targets c_i. Convex, known global minimizer, exact
    gradient norms available in closed form.

robust_regression
    f_i(x) = mean_j loss(a_ij . x - y_ij) with loss(r) = r^2 / (1 + r^2).
    Smooth, bounded in [0, 1), genuinely nonconvex.

Both are L-smooth with the global constant computed at construction
(largest per-agent bound) and bounded below by 0. Heterogeneity across
agents comes from agent-shifted data distributions.
"""

from __future__ import annotations

from dataclasses import dataclass
from enum import Enum

import numpy as np


class ObjectiveFamily(str, Enum):
    HET_QUADRATIC = "het_quadratic"
    ROBUST_REGRESSION = "robust_regression"


@dataclass(frozen=True)
class ObjectiveSuite:
    """n local smooth functions with exact gradients.

    ``features`` has shape (n, rows, d). For het_quadratic ``targets`` are
    the length-``rows`` vectors c_i; for robust_regression they are the
    labels y_i. ``smoothness`` is a valid global L for every agent and
    ``f_star_lower`` a valid lower bound on the average objective.
    """

    family: ObjectiveFamily
    features: np.ndarray
    targets: np.ndarray
    smoothness: float
    f_star_lower: float = 0.0

    def __post_init__(self):
        f = np.asarray(self.features, dtype=float)
        t = np.asarray(self.targets, dtype=float)
        if f.ndim != 3:
            raise ValueError(f"features must be (n, rows, d), got shape {f.shape}")
        if t.shape != f.shape[:2]:
            raise ValueError(f"targets shape {t.shape} does not match features {f.shape}")
        f.setflags(write=False)
        t.setflags(write=False)
        object.__setattr__(self, "features", f)
        object.__setattr__(self, "targets", t)

    @property
    def n(self) -> int:
        return self.features.shape[0]

    @property
    def dim(self) -> int:
        return self.features.shape[2]


def local_value(suite: ObjectiveSuite, agent: int, x: np.ndarray) -> float:
    b = suite.features[agent]
    residual = b @ x - suite.targets[agent]
    if suite.family is ObjectiveFamily.HET_QUADRATIC:
        return 0.5 * float(residual @ residual)
    sq = residual**2
    return float(np.mean(sq / (1.0 + sq)))


def local_grad(suite: ObjectiveSuite, agent: int, x: np.ndarray) -> np.ndarray:
    """Exact gradient of the agent's local objective."""
    b = suite.features[agent]
    residual = b @ x - suite.targets[agent]
    if suite.family is ObjectiveFamily.HET_QUADRATIC:
        return b.T @ residual
    # loss'(r) = 2 r / (1 + r^2)^2
    weights = 2.0 * residual / (1.0 + residual**2) ** 2
    return b.T @ weights / b.shape[0]


def global_value(suite: ObjectiveSuite, x: np.ndarray) -> float:
    return sum(local_value(suite, i, x) for i in range(suite.n)) / suite.n


def global_grad(suite: ObjectiveSuite, x: np.ndarray) -> np.ndarray:
    out = np.zeros(suite.dim)
    for i in range(suite.n):
        out += local_grad(suite, i, x)
    return out / suite.n


def stacked_local_grads(suite: ObjectiveSuite, x_rows: np.ndarray) -> np.ndarray:
    """Row i is the exact gradient of f_i at the i-th row of ``x_rows``."""
    return np.stack([local_grad(suite, i, x_rows[i]) for i in range(suite.n)])


def smoothness_constant(suite: ObjectiveSuite) -> float:
    """The global L computed at construction (largest per-agent bound)."""
    return suite.smoothness


def _operator_norm_sq(b: np.ndarray, tol: float = 1e-14, max_iter: int = 100_000) -> float:
    """Largest eigenvalue of B^T B by power iteration."""
    gram = b.T @ b
    if np.max(np.abs(gram)) == 0.0:
        return 0.0
    rng = np.random.default_rng(0)
    v = rng.standard_normal(gram.shape[0])
    v /= np.linalg.norm(v)
    lam_prev = 0.0
    for _ in range(max_iter):
        w = gram @ v
        norm = np.linalg.norm(w)
        if norm == 0.0:
            return 0.0
        v = w / norm
        lam = float(v @ gram @ v)
        if abs(lam - lam_prev) <= tol * max(1.0, abs(lam)):
            return max(lam, 0.0)
        lam_prev = lam
    return max(lam_prev, 0.0)


def make_het_quadratic(
    n: int,
    dim: int = 32,
    rows_per_agent: int = 50,
    heterogeneity: float = 1.0,
    seed: int = 0,
) -> ObjectiveSuite:
    """Heterogeneous quadratics with per-agent shifted minimizers.

    Agent i holds B_i = R_i / sqrt(rows) (R_i standard normal) and target
    c_i = B_i x*_i where x*_i = x* + heterogeneity * shift_i. Setting
    heterogeneity to 0 makes all agents identical.
    """
    rng = np.random.default_rng(np.random.SeedSequence(seed, spawn_key=(0,)))
    base_features = rng.standard_normal((rows_per_agent, dim)) / np.sqrt(rows_per_agent)
    center = rng.standard_normal(dim)
    features = np.empty((n, rows_per_agent, dim))
    targets = np.empty((n, rows_per_agent))
    for i in range(n):
        agent_rng = np.random.default_rng(np.random.SeedSequence(seed, spawn_key=(1, i)))
        if heterogeneity > 0:
            features[i] = base_features + heterogeneity * agent_rng.standard_normal(
                (rows_per_agent, dim)
            ) / np.sqrt(rows_per_agent)
            shift = heterogeneity * agent_rng.standard_normal(dim)
        else:
            features[i] = base_features
            shift = np.zeros(dim)
        targets[i] = features[i] @ (center + shift)
    smoothness = max(_operator_norm_sq(features[i]) for i in range(n))
    return ObjectiveSuite(
        family=ObjectiveFamily.HET_QUADRATIC,
        features=features,
        targets=targets,
        smoothness=smoothness,
    )


def make_robust_regression(
    n: int,
    dim: int = 32,
    rows_per_agent: int = 50,
    heterogeneity: float = 1.0,
    seed: int = 0,
) -> ObjectiveSuite:
    """Bounded nonconvex regression with agent-shifted feature clouds."""
    rng = np.random.default_rng(np.random.SeedSequence(seed, spawn_key=(0,)))
    planted = rng.standard_normal(dim) / np.sqrt(dim)
    features = np.empty((n, rows_per_agent, dim))
    targets = np.empty((n, rows_per_agent))
    for i in range(n):
        agent_rng = np.random.default_rng(np.random.SeedSequence(seed, spawn_key=(1, i)))
        shift = heterogeneity * agent_rng.standard_normal(dim) / np.sqrt(dim)
        features[i] = agent_rng.standard_normal((rows_per_agent, dim)) + shift
        targets[i] = features[i] @ planted + 0.1 * agent_rng.standard_normal(rows_per_agent)
    # |loss''| <= 2, so 2 * mean ||a_ij||^2 bounds each agent's curvature
    smoothness = max(
        2.0 * float(np.mean(np.sum(features[i] ** 2, axis=1))) for i in range(n)
    )
    return ObjectiveSuite(
        family=ObjectiveFamily.ROBUST_REGRESSION,
        features=features,
        targets=targets,
        smoothness=smoothness,
    )


def quadratic_minimizer(suite: ObjectiveSuite) -> tuple[np.ndarray, float]:
    """Closed-form global minimizer and minimum of a het_quadratic suite."""
    if suite.family is not ObjectiveFamily.HET_QUADRATIC:
        raise ValueError("closed-form minimizer exists only for het_quadratic")
    hessian = np.zeros((suite.dim, suite.dim))
    rhs = np.zeros(suite.dim)
    for i in range(suite.n):
        b = suite.features[i]
        hessian += b.T @ b
        rhs += b.T @ suite.targets[i]
    x_star = np.linalg.solve(hessian, rhs)
    return x_star, global_value(suite, x_star)


def suite_to_text(suite: ObjectiveSuite) -> str:
    """Serialize to the fixture text format (family header + agent blocks)."""
    n, rows, dim = suite.features.shape
    lines = [f"{suite.family.value} n={n} d={dim} rows={rows}"]
    for i in range(n):
        lines.append(f"agent {i}")
        for row in suite.features[i]:
            lines.append(" ".join(format(v, ".17g") for v in row))
        lines.append(" ".join(format(v, ".17g") for v in suite.targets[i]))
    return "\n".join(lines) + "\n"


def suite_from_text(text: str) -> ObjectiveSuite:
    lines = [ln for ln in text.splitlines() if ln.strip()]
    head = lines[0].split()
    family = ObjectiveFamily(head[0])
    meta = dict(part.split("=") for part in head[1:])
    n, dim, rows = int(meta["n"]), int(meta["d"]), int(meta["rows"])
    features = np.empty((n, rows, dim))
    targets = np.empty((n, rows))
    cursor = 1
    for i in range(n):
        if lines[cursor] != f"agent {i}":
            raise ValueError(f"expected 'agent {i}', got {lines[cursor]!r}")
        cursor += 1
        for r in range(rows):
            features[i, r] = [float(v) for v in lines[cursor].split()]
            cursor += 1
        targets[i] = [float(v) for v in lines[cursor].split()]
        cursor += 1
    if family is ObjectiveFamily.HET_QUADRATIC:
        smoothness = max(_operator_norm_sq(features[i]) for i in range(n))
    else:
        smoothness = max(
            2.0 * float(np.mean(np.sum(features[i] ** 2, axis=1))) for i in range(n)
        )
    return ObjectiveSuite(family=family, features=features, targets=targets, smoothness=smoothness)
