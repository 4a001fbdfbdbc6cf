"""Exception hierarchy for dynquant.

Configuration problems map to CLI exit code 1, numerical failures to 2.
"""


class DynquantError(Exception):
    """Base class for all dynquant errors."""


class ConfigError(DynquantError, ValueError):
    """Invalid or unparsable configuration."""


class NumericalError(DynquantError, RuntimeError):
    """A numerical routine could not produce a valid state."""


class EmptyMeasureError(NumericalError):
    """No alive atom is left to own cells."""

    def __init__(self, message: str = "empty atomic measure") -> None:
        super().__init__(message)


class SolverStalledError(NumericalError):
    """The dual ascent stopped improving far from the mass constraints."""

    def __init__(self, residual: float) -> None:
        self.residual = residual
        super().__init__(f"solver stalled (residual {residual:.3e})")


class NegativeDensityError(NumericalError):
    """A cell went below zero during an explicit sub-step."""

    def __init__(self, minimum: float) -> None:
        self.minimum = minimum
        super().__init__(f"negative density (min {minimum:.3e})")


class NonFiniteStateError(NumericalError):
    """NaN or Inf appeared in the evolved state."""

    def __init__(self, what: str = "density") -> None:
        super().__init__(f"nonfinite state in {what}")


class AllAtomsDeadError(NumericalError):
    """Every atom was absorbed at zero mass."""

    def __init__(self) -> None:
        super().__init__("all atoms dead")


class InnerStallError(NumericalError):
    """The JKO inner minimization found no descent direction."""

    def __init__(self, stationarity: float) -> None:
        self.stationarity = stationarity
        super().__init__(f"inner stall (stationarity {stationarity:.3e})")


class UnsortedAtomsError(NumericalError, ValueError):
    """1D atoms must be strictly increasing."""

    def __init__(self) -> None:
        super().__init__("unsorted atoms")
