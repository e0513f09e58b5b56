"""Exception types shared across the package."""


class SimulationError(Exception):
    """Base class for solver failures.

    The ``time`` attribute is filled in by the run loop so that a failure
    deep inside a time step can be traced back to the simulated time at
    which it occurred.
    """

    def __init__(self, message, time=None):
        super().__init__(message)
        self.time = time

    def __str__(self):
        base = super().__str__()
        if self.time is not None:
            return f"{base} (at t={self.time:g})"
        return base


class NewtonDivergedError(SimulationError):
    """Newton iteration failed to reduce the residual below tolerance."""


class PositivityLostError(SimulationError):
    """The inverse-temperature field left the positive cone."""


class NonFiniteError(SimulationError):
    """A NaN or infinity appeared in a state or residual."""


class ConstraintInfeasibleError(SimulationError):
    """No positive constant temperature satisfies the enthalpy constraint."""


class GridMismatchError(ValueError):
    """A field does not live on the grid it was used with."""


class ConfigError(ValueError):
    """A run configuration file is malformed or inconsistent."""


class LedgerError(ValueError):
    """A ledger operation violated its contract (e.g. non-monotone time)."""


class DecayFitError(ValueError):
    """The decay-fit diagnostic cannot be computed on the given data."""
