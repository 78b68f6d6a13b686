"""Exception types shared across the package."""


class WaiterError(Exception):
    """Base class for all package errors."""


class NonFiniteInput(WaiterError, ValueError):
    pass


class DimensionMismatch(WaiterError, ValueError):
    pass


class NonPositiveMass(WaiterError, ValueError):
    pass


class AllZeroMass(WaiterError, ValueError):
    pass


class SolverFailure(WaiterError, RuntimeError):
    """A numerical solve did not terminate with a usable answer.

    Distinct from a clean infeasibility verdict, which is reported through the
    solver status instead.
    """

    def __init__(self, message, status=None, partial=None):
        super().__init__(message)
        self.status = status
        self.partial = partial       # best result available when the solve stopped


class UnboundedRelaxation(SolverFailure):
    """A bounding SDP came back unbounded; the bounding shape is not compact."""


class InfeasibleCom(WaiterError, ValueError):
    pass


class PenetrationBlowup(WaiterError, RuntimeError):
    def __init__(self, message, time):
        super().__init__(f"{message} (t = {time:.4f} s)")
        self.time = time


class ConfigError(WaiterError, ValueError):
    pass


class DegreeOverflow(WaiterError, ValueError):
    """A polynomial or matrix needs moments beyond the sequence's degree."""
