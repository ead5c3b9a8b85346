"""Exception hierarchy shared across flowgen."""


class FlowgenError(Exception):
    """Base class for all errors raised by flowgen."""


class ParameterError(FlowgenError, ValueError):
    pass


class ShapeError(FlowgenError, ValueError):
    pass


class AssetError(FlowgenError):
    pass


class FormatError(FlowgenError):
    pass


class RangeError(FlowgenError, ValueError):
    pass


class ConfigError(FlowgenError, ValueError):
    """Run-config validation failure; ``field`` names the offending key."""

    def __init__(self, field, constraint):
        self.field = field
        self.constraint = constraint
        super().__init__(f"{field}: {constraint}")


class UndefinedMetricError(FlowgenError, ValueError):
    pass
