"""Exception types shared across the library."""


class FadeFusionError(Exception):
    """Base class for all library-specific errors."""


class AllPowerZero(FadeFusionError):
    """Every sensor contributes zero signal power; the fused distortion is undefined.

    Monte Carlo callers count such trials as outage instead of propagating +inf.
    """


class NoUsableSensor(FadeFusionError):
    """All sensors have zero channel merit (every channel gain is zero)."""


class InfeasibleTarget(FadeFusionError):
    """The distortion target lies at or below the achievable floor.

    Carries ``floor``, the smallest distortion reachable with unbounded power.
    """

    def __init__(self, target: float, floor: float):
        self.target = target
        self.floor = floor
        super().__init__(
            f"distortion target {target:.6g} is not achievable; "
            f"floor is {floor:.6g} (need target strictly above it)"
        )


class ConvergenceFailure(FadeFusionError):
    """An iterative solver exhausted its budget before reaching tolerance."""


class DivergentMGF(FadeFusionError):
    """The rate-function supremum is attained at the MGF domain boundary."""


class InsufficientData(FadeFusionError):
    """Not enough usable points for the requested fit."""


class InternalConsistencyError(FadeFusionError):
    """A solver invariant that should hold by construction was violated."""
