"""Exception types shared across the package.

Everything that signals bad user input derives from ``ValueError`` so that
callers who do not care about the fine-grained type can catch the usual
builtin.  Resource and convergence problems derive from ``RuntimeError``.
"""

from __future__ import annotations


class InvalidStateError(ValueError):
    """An electron state outside the ground-state triplet was used where a
    precession frequency is required."""


class MissingHyperfineError(ValueError):
    """A spin defined only by its effective splitting was asked for an
    ms = +/-1 frequency with the splitting approximation disabled."""


class PhaseMatchingError(ValueError):
    """No phase-matching delay exists (zero effective splitting)."""


class NonphysicalInputError(ValueError):
    """Model parameters describe a nonphysical configuration."""


class InconsistentInputsError(ValueError):
    """A closed-form inversion has no solution for the supplied values."""


class StepSizeError(ValueError):
    """A requested jump-propagation step violates the rate * dt guard."""


class FitDataError(ValueError):
    """Fit input data is unusable (non-finite values, too few points)."""


class BudgetExceededError(RuntimeError):
    """A simulation request exceeds the configured attempt budget."""


class ConfigError(ValueError):
    """A scenario file violates the configuration schema.

    ``path`` holds the dotted key path of the offending entry when known.
    """

    def __init__(self, message: str, path: str | None = None):
        self.path = path
        if path:
            message = f"{path}: {message}"
        super().__init__(message)
