"""Exception types shared across the package."""

from __future__ import annotations


class PhaselimError(Exception):
    """Base class for all package errors."""


class ConfigurationError(PhaselimError):
    """Invalid or inconsistent configuration (bad keys, id mismatches)."""


class ValidationError(PhaselimError):
    """A domain-type invariant is violated (non-PSD covariance, bad delta, ...)."""


class ConvergenceError(PhaselimError):
    """Iterative solver failed to reach tolerance.

    Carries the best design found so far in ``best_design``.
    """

    def __init__(self, message: str, best_design=None):
        super().__init__(message)
        self.best_design = best_design


class SamplingError(PhaselimError):
    """Rejection sampling exceeded its retry cap."""


class ResourceError(PhaselimError):
    """A requested construction would exceed a size cap."""


class AccountingError(PhaselimError):
    """Regret accounting saw an inconsistent pull record."""


class ExperimentError(PhaselimError):
    """An experiment finished without a single usable replication."""
