"""Exception types shared across the package.

The CLI maps these onto exit codes: configuration problems exit with 2,
numeric or invariant failures with 3, and I/O or format problems with 4.
"""

from __future__ import annotations


class RwrcError(Exception):
    """Base class for all package errors."""


class ConfigError(RwrcError, ValueError):
    """A parameter or configuration value violates a documented constraint."""


class InvalidIntensityError(ConfigError):
    """An umbrella intensity outside the admissible range (t <= 1)."""


class ShapeError(RwrcError, ValueError):
    """Input arrays or fields have incompatible shapes or boxes."""


class DomainError(RwrcError, ValueError):
    """A query point lies outside the region where a field is defined."""


class InsufficientDataError(RwrcError, ValueError):
    """Not enough samples or checkpoints to compute a statistic."""


class NumericError(RwrcError, ArithmeticError):
    """A numerical routine failed to converge or produced a non-finite value."""


class InvariantError(RwrcError, RuntimeError):
    """An internal invariant was violated (a bug, or an undersized margin)."""


class FormatError(RwrcError, IOError):
    """A snapshot or output file is malformed."""
