"""Exception types shared across the package.

The CLI maps these onto exit codes: ConfigError -> 4, DivergenceError -> 3,
MonitorViolationError -> 2.
"""

from __future__ import annotations


class DecoptError(Exception):
    """Base class for package-specific failures."""


class TopologyError(DecoptError, ValueError):
    """Invalid graph construction or weight-scheme mismatch."""


class ConvergenceError(DecoptError, RuntimeError):
    """An iterative spectral computation failed to reach its tolerance."""


class DegenerateDiagonalError(DecoptError, RuntimeError):
    """A diagonal entry of a matrix power underflowed to (numerical) zero."""


class BudgetError(DecoptError, ValueError):
    """A theorem-prescribed parameter exceeds the configured budget cap."""


class DivergenceError(DecoptError, RuntimeError):
    """Non-finite values appeared during a run.

    Carries the step index and the name of the offending matrix so the
    failure is actionable; heavy-tailed noise makes overflow a real
    failure mode rather than a hypothetical.
    """

    def __init__(self, step: int, matrix: str):
        self.step = step
        self.matrix = matrix
        super().__init__(f"non-finite values in {matrix} at step {step}")


class MonitorViolationError(DecoptError, RuntimeError):
    """A runtime inequality monitor failed during a strict run."""

    def __init__(self, step: int, names: list[str]):
        self.step = step
        self.names = list(names)
        super().__init__(f"monitor violation at step {step}: {', '.join(names)}")


class ConfigError(DecoptError, ValueError):
    """Invalid experiment configuration.

    Collects every violation found, not just the first one.
    """

    def __init__(self, violations: list[str]):
        self.violations = list(violations)
        super().__init__("invalid config:\n  " + "\n  ".join(violations))
