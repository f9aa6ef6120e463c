"""Exception types raised across the simulator."""


class SimulationError(Exception):
    """Base class for all simulator errors."""


class ConfigurationError(SimulationError, ValueError):
    """Inconsistent or out-of-range parameters."""


class FramingError(SimulationError, ValueError):
    """Signal length does not match the OFDM symbol framing."""


class SingularityError(SimulationError, ArithmeticError):
    """A linear system that must be solved is (numerically) singular."""

    def __init__(self, message, condition_number=None, subcarrier=None):
        super().__init__(message)
        self.condition_number = condition_number
        self.subcarrier = subcarrier


class EstimationError(SingularityError):
    """Least-squares estimation failed because the regression is rank deficient."""


class DivergenceError(SimulationError, RuntimeError):
    """Adaptive learning kept diverging after the allowed step-size reductions."""


class UndefinedMetricError(SimulationError, ValueError):
    """A metric cannot be evaluated (e.g. zero reference power)."""
