"""Characterize, quantify and witness non-Markovianity of open quantum dynamics."""

from nmq.exceptions import (
    NMQError,
    NotHermitianError,
    RatePoleError,
    SingularMap,
    StepUnderflowError,
    ValidationError,
)

__version__ = "0.1.0"

__all__ = [
    "NMQError",
    "NotHermitianError",
    "RatePoleError",
    "SingularMap",
    "StepUnderflowError",
    "ValidationError",
    "__version__",
]
