"""
Exception hierarchy for kraus-stabilizer.

Library code raises these; only main.py turns them into exit codes.
"""

from typing import Any, Optional


class StabilizerError(Exception):
    """Base class for every error raised by the library."""


class DimensionError(StabilizerError):
    """Operands have incompatible shapes."""


class ValidationError(StabilizerError):
    """A value violates its contract (Hermiticity, unitarity, completeness...)."""

    def __init__(self, message: str, residual: Optional[float] = None):
        super().__init__(message)
        self.residual = residual


class ConfigError(StabilizerError):
    """Bad tolerance profile or override."""


class MeasureZeroError(StabilizerError):
    """A sampled outcome has probability at or below eps_zero."""

    def __init__(self, message: str, outcome: int, probability: float):
        super().__init__(message)
        self.outcome = outcome
        self.probability = probability


class InfeasibleError(StabilizerError):
    """No solution exists: nothing couples H_R to H_S, or no outcome matching.

    result holds the infeasible SynthesisResult or the distance matrix.
    """

    def __init__(self, message: str, result: Any = None):
        super().__init__(message)
        self.result = result


class SynthesisDefectError(StabilizerError):
    """Synthesized controls failed post-verification."""

    def __init__(self, message: str, diagnostics: str = ""):
        super().__init__(message)
        self.diagnostics = diagnostics


class FileFormatError(StabilizerError):
    """A JSON/CSV input could not be parsed into the expected schema."""
