"""Exception types raised across the package."""


class FeederError(ValueError):
    """Invalid feeder description.  ``ids`` lists the offending identifiers."""

    def __init__(self, message, ids=()):
        super().__init__(message)
        self.ids = tuple(ids)


class PartitionError(ValueError):
    pass


class DimensionError(ValueError):
    pass


class PlacementError(ValueError):
    pass


class TimeseriesError(ValueError):
    pass


class PowerFlowError(RuntimeError):
    pass


class VoltageCollapseError(PowerFlowError):
    pass


class StepSizeError(ValueError):
    pass


class DivergenceError(RuntimeError):
    pass


class GaussNewtonError(RuntimeError):
    def __init__(self, message, cond=float("nan")):
        super().__init__(message)
        self.cond = cond


class ProtocolError(RuntimeError):
    pass
