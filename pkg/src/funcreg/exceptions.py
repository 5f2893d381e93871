"""Exception hierarchy.

The CLI maps these onto exit codes: :class:`ConfigError` -> 2,
:class:`DataError` -> 3, :class:`NumericalError` -> 4.
"""

import numpy as np


class FuncRegError(Exception):
    """Base class for all package errors."""


class ConfigError(FuncRegError, ValueError):
    """A parameter lies outside its validated range."""


class DataError(FuncRegError, ValueError):
    """Input data is malformed, inconsistent or insufficient."""


class NumericalError(FuncRegError, ArithmeticError):
    """A numerical step failed (singular system, failed decomposition...)."""


class SingularSystemError(NumericalError, np.linalg.LinAlgError):
    """A linear system is singular or too ill-conditioned to solve."""

    def __init__(self, message, condition_number=None):
        super().__init__(message)
        self.condition_number = condition_number
