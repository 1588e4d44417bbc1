"""Spectral analysis of mixing matrices.

The quantities computed here parameterize every algorithm and every runtime
monitor: the equilibrium vector ``pi`` (unique positive left eigenvector of
a row-stochastic matrix for eigenvalue 1), the gap parameter ``beta``
(pi-weighted spectral norm of the deflated matrix), the skewness ``kappa``
(max pi / min pi), the diagonal bound ``theta = 2 n kappa``, and the
multi-step gossip deviation ``rho(K) = ||A^K - 1 pi^T||_F``.
"""

from __future__ import annotations

import math
from dataclasses import dataclass

import numpy as np

from .errors import ConvergenceError, DegenerateDiagonalError
from .topology import MixingMatrix

PERRON_TOL = 1e-12
BETA_TOL = 1e-12
BETA_REJECT = 1e-9
DIAG_FLOOR = 1e-300

_DENSE_FALLBACK_N = 64


@dataclass(frozen=True)
class SpectralProfile:
    """Equilibrium vector and contraction parameters of a mixing matrix."""

    pi: np.ndarray
    beta: float
    kappa: float
    theta: float
    n: int

    def __post_init__(self):
        pi = np.asarray(self.pi, dtype=float)
        pi.setflags(write=False)
        object.__setattr__(self, "pi", pi)


def perron_vector(
    a: MixingMatrix | np.ndarray,
    tol: float = PERRON_TOL,
    max_iter: int | None = None,
) -> np.ndarray:
    """Left eigenvector ``pi`` with ``pi @ a == pi``, positive, summing to 1.

    Power iteration on ``a.T`` from the uniform vector, renormalized by the
    entry sum each step. When ``max_iter`` is None the budget adapts to a
    crude rate estimate from 50 warm-up iterations (100 * ceil(1/(1-rate)))
    and a dense left-eigenvector solve is used as fallback for n <= 64;
    with an explicit ``max_iter``, non-convergence raises.
    """
    m = a.a if isinstance(a, MixingMatrix) else np.asarray(a, dtype=float)
    n = m.shape[0]
    if tol <= 0:
        raise ValueError("tol must be positive")
    at = m.T.copy()
    v = np.full(n, 1.0 / n)

    adaptive = max_iter is None
    budget = 50 if adaptive else max_iter
    deltas: list[float] = []
    done = 0
    while True:
        for _ in range(done, budget):
            nxt = at @ v
            total = nxt.sum()
            if total <= 0:
                raise ConvergenceError("power iteration collapsed (non-stochastic input?)")
            nxt /= total
            deltas.append(float(np.max(np.abs(nxt - v))))
            v = nxt
            done += 1
            if _perron_residual(v, m) <= tol:
                return _finish_perron(v, m, tol)
        if not adaptive or budget > 50:
            break
        # crude contraction-rate estimate from the warm-up deltas
        rate = 0.0
        if len(deltas) >= 10 and deltas[-10] > 0:
            rate = (deltas[-1] / deltas[-10]) ** (1.0 / 10.0)
        rate = min(max(rate, 0.0), 1.0 - 1e-6)
        budget = 100 * math.ceil(1.0 / (1.0 - rate))

    if adaptive and n <= _DENSE_FALLBACK_N:
        return _perron_dense(m, tol)
    raise ConvergenceError(
        f"equilibrium vector did not converge in {budget} iterations "
        f"(residual {_perron_residual(v, m):.3e}); matrix may barely mix"
    )


def _perron_residual(v: np.ndarray, m: np.ndarray) -> float:
    return float(np.max(np.abs(v @ m - v)))


def _finish_perron(v: np.ndarray, m: np.ndarray, tol: float) -> np.ndarray:
    if np.any(v <= 0):
        raise ConvergenceError("equilibrium vector has a non-positive entry")
    return v


def _perron_dense(m: np.ndarray, tol: float) -> np.ndarray:
    """Dense left-eigenvector solve, used as oracle and small-n fallback."""
    eigenvalues, eigenvectors = np.linalg.eig(m.T)
    idx = int(np.argmin(np.abs(eigenvalues - 1.0)))
    v = np.real(eigenvectors[:, idx])
    v = v / v.sum()
    # polish: a few power steps shrink the dense-solve residual
    for _ in range(100):
        if _perron_residual(v, m) <= tol:
            break
        v = v @ m
        v = v / v.sum()
    if np.any(v <= 0):
        raise ConvergenceError("dense solve produced a non-positive equilibrium entry")
    return v


def spectral_profile(a: MixingMatrix, beta_tol: float = BETA_TOL) -> SpectralProfile:
    """Compute (pi, beta, kappa, theta) for a mixing matrix.

    beta is the operator-2 norm of ``Pi^{1/2} (A - 1 pi^T) Pi^{-1/2}``,
    obtained as the square root of the largest eigenvalue of ``M^T M`` by
    power iteration. Matrices with beta >= 1 - 1e-9 fail to mix and are
    rejected.
    """
    m = a.a
    n = a.n
    pi = perron_vector(a)
    sqrt_pi = np.sqrt(pi)
    deflated = m - np.outer(np.ones(n), pi)
    weighted = (sqrt_pi[:, None] * deflated) / sqrt_pi[None, :]
    beta = _largest_singular_value(weighted, beta_tol)
    if beta >= 1.0 - BETA_REJECT:
        raise ConvergenceError(f"matrix fails to mix: beta = {beta:.12f}")
    kappa = float(pi.max() / pi.min())
    return SpectralProfile(pi=pi, beta=beta, kappa=kappa, theta=2.0 * n * kappa, n=n)


def _largest_singular_value(m: np.ndarray, tol: float, max_iter: int = 100_000) -> float:
    """Power iteration on ``M^T M``; deterministic seeded start vector."""
    n = m.shape[0]
    gram = m.T @ m
    scale = float(np.max(np.abs(gram)))
    if scale == 0.0:
        return 0.0
    rng = np.random.default_rng(0)
    v = rng.standard_normal(n)
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
            return math.sqrt(max(lam, 0.0))
        lam_prev = lam
    raise ConvergenceError("singular-value power iteration did not converge")


def min_mixing_steps(profile: SpectralProfile) -> int:
    """Smallest K with guaranteed invertible, bounded diagonals of A^K.

    K_min = ceil(3 (1 + ln(kappa n)) / (1 - beta)); for K >= K_min every
    diagonal entry of A^K is at least 1 / (2 n kappa).
    """
    if profile.beta >= 1.0:
        raise ValueError("beta must be < 1")
    return math.ceil(3.0 * (1.0 + math.log(profile.kappa * profile.n)) / (1.0 - profile.beta))


def matrix_power_apply(a: MixingMatrix, power: int, x: np.ndarray) -> np.ndarray:
    """Apply ``A^K`` to ``x`` by K successive multiplications.

    Never forms ``A^K``; the caller credits K communication rounds.
    """
    if power < 0:
        raise ValueError("power must be >= 0")
    x = np.asarray(x, dtype=float)
    if x.shape[0] != a.n:
        raise ValueError(f"row count {x.shape[0]} does not match n={a.n}")
    out = x.copy()
    for _ in range(power):
        out = a.a @ out
    return out


class RunningPower:
    """Incrementally maintained matrix power ``A^m``.

    Callers advance ``m`` monotonically (the tracker refuses to go back);
    repeated multiplication is used rather than squaring because consumers
    need consecutive multiples of the same stride.
    """

    def __init__(self, a: MixingMatrix):
        self._a = a.a
        self.exponent = 0
        self.matrix = np.eye(a.n)

    def advance_to(self, exponent: int) -> "RunningPower":
        if exponent < self.exponent:
            raise ValueError(
                f"running power cannot rewind from {self.exponent} to {exponent}"
            )
        for _ in range(exponent - self.exponent):
            self.matrix = self.matrix @ self._a
        self.exponent = exponent
        return self

    def diagonal(self) -> np.ndarray:
        d = self.matrix.diagonal().copy()
        if np.any(d <= DIAG_FLOOR):
            raise DegenerateDiagonalError(
                f"diagonal entry of A^{self.exponent} underflowed; "
                "exponent is below the mixing threshold on a degenerate matrix"
            )
        return d

    def copy(self) -> "RunningPower":
        dup = object.__new__(RunningPower)
        dup._a = self._a
        dup.exponent = self.exponent
        dup.matrix = self.matrix.copy()
        return dup


def diag_of_power(a: MixingMatrix, exponent: int) -> np.ndarray:
    """Diagonal of ``A^m`` for a single exponent (fresh computation)."""
    if exponent < 1:
        raise ValueError("exponent must be >= 1")
    return RunningPower(a).advance_to(exponent).diagonal()


def rho_of(a: MixingMatrix, power: int, pi: np.ndarray) -> float:
    """Frobenius norm of ``A^K - 1 pi^T`` (multi-step gossip deviation).

    Bounded above by ``sqrt(n kappa) beta^K``.
    """
    if power < 0:
        raise ValueError("power must be >= 0")
    n = a.n
    ak = np.eye(n)
    for _ in range(power):
        ak = ak @ a.a
    return float(np.linalg.norm(ak - np.outer(np.ones(n), pi)))
