"""Numerical laboratory for driven collective spins with squeezed collective decay."""

from sslab.errors import (
    ContractViolation,
    InvalidParameterError,
    NumericalError,
    OutOfValidityError,
)
from sslab.params import ModelParams

__version__ = "0.1.0"

__all__ = [
    "ContractViolation",
    "InvalidParameterError",
    "ModelParams",
    "NumericalError",
    "OutOfValidityError",
    "__version__",
]
