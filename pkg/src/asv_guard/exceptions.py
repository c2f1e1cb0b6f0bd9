# -*- coding: utf-8 -*-

"""Errors raised by ASV Guard.

Every error carries a machine-readable ``category`` that the command line interface reports.
"""

from typing import Any, Optional

__all__ = [
    'AsvGuardError',
    'VesselParamsError',
    'IntegrationDivergedError',
    'FitError',
    'FitDegenerateError',
    'FitFailedError',
    'NotAnEllipseError',
    'UpdateSingularError',
    'FusionSingularError',
    'TerminalSetError',
    'ScenarioError',
    'ScenarioParseError',
    'ScenarioValidationError',
    'EpisodeAbortedError',
]


class AsvGuardError(Exception):
    """Base class for errors in ASV Guard."""

    category = 'error'


class VesselParamsError(AsvGuardError):
    """Raised when vessel parameters violate their invariants."""

    category = 'vessel-params'


class IntegrationDivergedError(AsvGuardError):
    """Raised when an integration step produces a non-finite state."""

    category = 'integration-diverged'


class FitError(AsvGuardError):
    """Base class for shape fitting errors."""

    category = 'fit'


class FitDegenerateError(FitError):
    """Raised when a cluster is too small or collinear to fit a conic."""

    category = 'fit-degenerate'


class FitFailedError(FitError):
    """Raised when the eigenproblem has no ellipse-specific solution."""

    category = 'fit-failed'


class NotAnEllipseError(FitError):
    """Raised when a fitted conic is not an ellipse."""

    category = 'not-an-ellipse'


class UpdateSingularError(AsvGuardError):
    """Raised when the innovation covariance cannot be inverted."""

    category = 'update-singular'


class FusionSingularError(AsvGuardError):
    """Raised when the sum of Kalman gains cannot be inverted."""

    category = 'fusion-singular'


class TerminalSetError(AsvGuardError):
    """Raised when the terminal set cannot be constructed or certified."""

    category = 'terminal-set'


class ScenarioError(AsvGuardError):
    """Base class for scenario file errors, locating the offending field."""

    category = 'scenario'

    def __init__(self, field: str, message: str):
        super().__init__(f'{field}: {message}')
        self.field = field
        self.message = message


class ScenarioParseError(ScenarioError):
    """Raised when a scenario or vessel file does not match its schema."""

    category = 'scenario-parse'


class ScenarioValidationError(ScenarioError):
    """Raised when a parsed scenario violates an invariant."""

    category = 'scenario-validation'


class EpisodeAbortedError(AsvGuardError):
    """Raised when an episode cannot continue. Holds the trace recorded so far."""

    category = 'episode-aborted'

    def __init__(self, message: str, trace: Optional[Any] = None):
        super().__init__(message)
        self.trace = trace
