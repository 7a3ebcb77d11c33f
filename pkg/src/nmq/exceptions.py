"""Exception hierarchy shared by all nmq modules."""


class NMQError(Exception):
    """Base class for all errors raised by nmq."""


class ValidationError(NMQError, ValueError):
    """An input violates a documented invariant (shape, trace, positivity...)."""


class NotHermitianError(ValidationError):
    """A matrix expected to be Hermitian is too far from its adjoint."""


class SingularMap(NMQError):
    """A dynamical map (or transition matrix) could not be inverted.

    Attributes:
        det: magnitude of the determinant that triggered the error.
        time: time stamp of the offending map, when known.
    """

    def __init__(self, det, time=None, message=None):
        self.det = float(det)
        self.time = time
        if message is None:
            message = f"map is singular (|det| = {self.det:.3e})"
            if time is not None:
                message += f" at t = {time!r}"
        super().__init__(message)


class RatePoleError(NMQError):
    """A rate function was evaluated inside its pole-exclusion zone."""

    def __init__(self, t, pole):
        self.t = float(t)
        self.pole = float(pole)
        super().__init__(f"rate evaluated at t = {self.t!r}, inside the exclusion zone of the pole at {self.pole!r}")


class StepUnderflowError(NMQError):
    """The integrator could not reach the requested accuracy."""
