"""Exception types raised across the package."""


class RosdhbError(ValueError):
    """Base class for every structured error raised by this package."""


class DimensionMismatch(RosdhbError):
    pass


class BreakdownError(RosdhbError):
    """Raised when an aggregator is asked to tolerate too many Byzantine inputs."""


class DivergenceError(RosdhbError):
    def __init__(self, message, round_index=None):
        super().__init__(message)
        self.round_index = round_index


class IdxFormatError(RosdhbError):
    def __init__(self, message, offset=None):
        if offset is not None:
            message = f"{message} (byte offset {offset})"
        super().__init__(message)
        self.offset = offset


class ConfigError(RosdhbError):
    pass
