"""Exception types raised by the solver stack."""


class FleetDriveError(Exception):
    """Base class for all fleetdrive errors."""


class SpeedCapExceeded(FleetDriveError):
    """A requested speed is above the 0.99 * v_max guard."""


class InvalidPhase(FleetDriveError):
    """Phase endpoints violate the required speed ordering, or the
    requested quantity is undefined for this phase kind."""


class WeightTooLarge(FleetDriveError):
    """No positive hold speed satisfies the weight relation: the target
    slope phi'(V)/(1+w) falls at or below phi'(0) = r0."""


class NoRoot(FleetDriveError):
    """A switching-speed bracket contains no sign change (infeasible
    weight/speed combination)."""


class InfeasibleTiming(FleetDriveError):
    """A strategy of optimal type does not fit the interval grid: some
    hold window would have negative duration."""

    def __init__(self, message, boundary=None):
        super().__init__(message)
        self.boundary = boundary


class NonConvergence(FleetDriveError):
    """The fleet solve did not reach the residual tolerances."""

    def __init__(self, message, best=None):
        super().__init__(message)
        self.best = best


class Infeasible(FleetDriveError):
    """No driving strategy can satisfy the problem (e.g. the journey
    distance is unreachable in the allotted time)."""


class ControlInfeasible(FleetDriveError):
    """The scheduled control law demands a traction outside [0, H_a(v)]
    (possible only on non-level track)."""
