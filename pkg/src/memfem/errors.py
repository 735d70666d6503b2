"""Shared exception types.

The CLI maps these onto exit codes: configuration/usage problems exit 1,
solver nonconvergence exits 2.
"""

from __future__ import annotations


class MemfemError(Exception):
    """Base class for package errors."""


class MeshFormatError(MemfemError):
    """Malformed mesh file; carries the offending line number when known."""

    def __init__(self, message: str, line: int | None = None):
        self.line = line
        if line is not None:
            message = f"line {line}: {message}"
        super().__init__(message)


class GeometryError(MemfemError):
    """Impossible geometry request (non-positive sizes, overlapping electrodes)."""


class ConfigError(MemfemError):
    """Invalid run configuration (unknown key, missing section, bad value)."""


class ElementInversionError(MemfemError):
    """An element Jacobian or deformation gradient lost positivity."""

    def __init__(self, element: int, physics: str, detail: str = ""):
        self.element = element
        self.physics = physics
        msg = f"element {element} ({physics}) inverted"
        if detail:
            msg += f": {detail}"
        super().__init__(msg)


class SingularSystemError(MemfemError):
    """Linear system singular to working precision.

    ``null_direction`` holds a unit vector estimating the null space when the
    system was small enough to analyse.
    """

    def __init__(self, message: str, null_direction=None):
        self.null_direction = null_direction
        super().__init__(message)


class NonconvergenceError(MemfemError):
    """An iterative solver failed; ``report`` carries the diagnostic record."""

    def __init__(self, message: str, report=None):
        self.report = report
        super().__init__(message)
