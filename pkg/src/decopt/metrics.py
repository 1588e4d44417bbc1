"""Run diagnostics: weighted averages, error norms, and inequality monitors.

Every quantity the convergence analysis is stated in is computable here
from a state snapshot: the equilibrium-weighted average iterate, the
consensus errors of X and V, the gap between the tracked descent direction
and the true global gradient, and the Lyapunov value combining them.

``step_monitors`` evaluates the deterministic inequalities that must hold
on every honest step (tracking identities, the per-step consensus
contraction, the smoothness descent inequality, the unit bound on the
averaged direction, gossip mean preservation). A violation is a bug or
injected fault, never a warning.
"""

from __future__ import annotations

from dataclasses import dataclass, field

import numpy as np

from .algorithms import GossipAccel, PdState, UnState, normalize_rows
from .objectives import ObjectiveSuite, global_grad, global_value

MONITOR_TOL = 1e-9
MEAN_DRIFT_TOL = 1e-10


@dataclass(frozen=True)
class MetricsRecord:
    """One row of run telemetry (serializes to one CSV line)."""

    t: int
    f_value: float
    grad_norm_w: float
    consensus_x: float
    consensus_v: float
    deviation: float
    lyapunov: float
    samples: int
    comms: int
    violations: tuple[str, ...] = ()


def weighted_average(pi: np.ndarray, x: np.ndarray) -> np.ndarray:
    """Equilibrium-weighted average of the rows: pi^T X."""
    return np.asarray(pi, dtype=float) @ np.asarray(x, dtype=float)


def consensus_error(x: np.ndarray, pi: np.ndarray) -> float:
    """Frobenius distance of the rows from their weighted average."""
    x = np.asarray(x, dtype=float)
    avg = weighted_average(pi, x)
    return float(np.linalg.norm(x - np.outer(np.ones(x.shape[0]), avg)))


def deviation_norm(
    suite: ObjectiveSuite,
    w: np.ndarray,
    pi: np.ndarray,
    v: np.ndarray,
    aggregate: str = "weighted",
) -> float:
    """Distance between the tracked direction and the global gradient.

    aggregate 'weighted' compares n grad f(w) against pi^T V (the directed
    tracker carries inverse-diagonal-scaled gradients, so pi^T V sits on
    the n-gradient scale); 'sum' compares against 1^T V for trackers that
    carry raw gradients (undirected methods). Both are reported divided
    by n.
    """
    grad = global_grad(suite, w)
    if aggregate == "weighted":
        tracked = weighted_average(pi, v)
    elif aggregate == "sum":
        tracked = np.sum(v, axis=0)
    else:
        raise ValueError(f"aggregate must be 'weighted' or 'sum', got {aggregate!r}")
    n = v.shape[0]
    return float(np.linalg.norm(n * grad - tracked)) / n


def lyapunov(
    mode: str,
    f_value: float,
    consensus_x: float,
    consensus_v: float,
    eta: float,
    smoothness: float,
    n: int,
) -> float:
    """Objective value plus weighted consensus-error penalties.

    directed:   f + (32 eta L / sqrt(n)) C_x + (4 eta / n) C_v
    undirected: f + (32 eta L / sqrt(n)) C_x + (4 eta / sqrt(n)) C_v
    """
    base = f_value + 32.0 * eta * smoothness / np.sqrt(n) * consensus_x
    if mode == "directed":
        return base + 4.0 * eta / n * consensus_v
    if mode == "undirected":
        return base + 4.0 * eta / np.sqrt(n) * consensus_v
    raise ValueError(f"mode must be 'directed' or 'undirected', got {mode!r}")


@dataclass(frozen=True)
class MonitorContext:
    """Constants the per-step monitors need.

    ``contraction`` is the per-iteration consensus shrink factor: the
    Frobenius norm of A^K - 1 pi^T for the directed method, the
    accelerated-gossip envelope sqrt(14)(1 - (1-1/sqrt 2) sqrt(1-beta))^K
    for dnsgd, and the deflated spectral norm beta for dsgt.
    """

    algorithm: str
    suite: ObjectiveSuite
    pi: np.ndarray
    eta: float
    smoothness: float
    contraction: float
    tol: float = MONITOR_TOL
    mean_tol: float = MEAN_DRIFT_TOL

    def __post_init__(self):
        if self.algorithm not in ("dnsgd_pd", "dnsgd", "dsgt"):
            raise ValueError(f"unknown algorithm {self.algorithm!r}")

    @property
    def mode(self) -> str:
        return "directed" if self.algorithm == "dnsgd_pd" else "undirected"

    @property
    def n(self) -> int:
        return len(self.pi)


def _violated(lhs: float, rhs: float, tol: float) -> bool:
    return lhs > rhs + tol * (1.0 + abs(rhs))


def step_monitors(prev, new, ctx: MonitorContext, direction: np.ndarray | None = None) -> list[str]:
    """Names of deterministic inequalities violated on the step prev -> new.

    Empty on every honest step; tolerances are relative with a matching
    absolute floor (1e-9, mean drift 1e-10), sized above accumulated
    floating-point error for desk-scale runs. ``direction`` is the step
    matrix the agents claim to have applied; by default it is recomputed
    from the previous state (row-normalized tracker, or the raw tracker
    for the unnormalized baseline), and fault-injection tests may pass a
    corrupted one.
    """
    if ctx.algorithm == "dnsgd_pd":
        return _directed_monitors(prev, new, ctx, direction)
    return _undirected_monitors(prev, new, ctx, direction)


def _directed_monitors(prev: PdState, new: PdState, ctx: MonitorContext, direction) -> list[str]:
    out = []
    n = ctx.n
    pi = ctx.pi
    u = normalize_rows(prev.v) if direction is None else direction
    pi_u = pi @ u

    tracked = pi @ new.v
    scaled = pi @ (new.g / new.diag_cur[:, None])
    if _violated(
        float(np.linalg.norm(tracked - scaled)) / (1.0 + float(np.linalg.norm(new.g))),
        0.0,
        1e-8,
    ):
        out.append("tracking_identity")

    cx_prev = consensus_error(prev.x, pi)
    cx_new = consensus_error(new.x, pi)
    if _violated(cx_new, ctx.contraction * (cx_prev + 2.0 * np.sqrt(n) * ctx.eta), ctx.tol):
        out.append("consensus_contraction")

    w_prev = weighted_average(pi, prev.x)
    w_new = weighted_average(pi, new.x)
    descent_rhs = (
        global_value(ctx.suite, w_prev)
        - ctx.eta * float(global_grad(ctx.suite, w_prev) @ pi_u)
        + 0.5 * ctx.eta**2 * ctx.smoothness * float(pi_u @ pi_u)
    )
    if _violated(global_value(ctx.suite, w_new), descent_rhs, ctx.tol):
        out.append("descent_inequality")

    if _violated(float(np.linalg.norm(pi_u)), 1.0, ctx.tol):
        out.append("direction_avg_norm")
    return out


def _undirected_monitors(prev: UnState, new: UnState, ctx: MonitorContext, injected=None) -> list[str]:
    out = []
    n = ctx.n
    uniform = np.full(n, 1.0 / n)

    tracked = uniform @ new.v
    mean_grad = uniform @ new.g
    if _violated(
        float(np.linalg.norm(tracked - mean_grad)) / (1.0 + float(np.linalg.norm(new.g))),
        0.0,
        1e-8,
    ):
        out.append("tracking_identity")

    cx_prev = consensus_error(prev.x, uniform)
    cx_new = consensus_error(new.x, uniform)
    x_prev_mean = uniform @ prev.x
    x_new_mean = uniform @ new.x

    if ctx.algorithm == "dnsgd":
        u = normalize_rows(prev.v) if injected is None else injected
        direction = uniform @ u
        if _violated(cx_new, ctx.contraction * (cx_prev + np.sqrt(n) * ctx.eta), ctx.tol):
            out.append("consensus_contraction")
        if _violated(float(np.linalg.norm(direction)), 1.0, ctx.tol):
            out.append("direction_avg_norm")
    else:  # dsgt: un-normalized tracker is the step direction
        cv_prev = consensus_error(prev.v, uniform)
        direction = uniform @ (prev.v if injected is None else injected)
        if _violated(cx_new, ctx.contraction * (cx_prev + ctx.eta * cv_prev), ctx.tol):
            out.append("consensus_contraction")

    descent_rhs = (
        global_value(ctx.suite, x_prev_mean)
        - ctx.eta * float(global_grad(ctx.suite, x_prev_mean) @ direction)
        + 0.5 * ctx.eta**2 * ctx.smoothness * float(direction @ direction)
    )
    if _violated(global_value(ctx.suite, x_new_mean), descent_rhs, ctx.tol):
        out.append("descent_inequality")

    drift = float(np.linalg.norm(x_new_mean - (x_prev_mean - ctx.eta * direction)))
    if _violated(drift / (1.0 + float(np.linalg.norm(x_prev_mean))), 0.0, ctx.mean_tol):
        out.append("gossip_mean_drift")
    return out


def snapshot(state, ctx: MonitorContext, violations: tuple[str, ...] = ()) -> MetricsRecord:
    """Build the telemetry record for a state using exact oracle values."""
    n = ctx.n
    if ctx.mode == "directed":
        pi = ctx.pi
        tracked = pi @ state.v
    else:
        pi = np.full(n, 1.0 / n)
        tracked = np.sum(state.v, axis=0)
    w = weighted_average(pi, state.x)
    f_val = global_value(ctx.suite, w)
    grad = global_grad(ctx.suite, w)
    cx = consensus_error(state.x, pi)
    cv = consensus_error(state.v, pi)
    return MetricsRecord(
        t=state.t,
        f_value=f_val,
        grad_norm_w=float(np.linalg.norm(grad)),
        consensus_x=cx,
        consensus_v=cv,
        deviation=float(np.linalg.norm(n * grad - tracked)) / n,
        lyapunov=lyapunov(ctx.mode, f_val, cx, cv, ctx.eta, ctx.smoothness, ctx.n),
        samples=state.samples,
        comms=state.comms,
        violations=tuple(violations),
    )
