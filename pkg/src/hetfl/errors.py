"""Exception types shared across the package."""


class HetFLError(Exception):
    """Base class for every error raised by hetfl."""


class InvalidArgumentError(HetFLError, ValueError):
    pass


class ShapeError(HetFLError, ValueError):
    pass


class StateError(HetFLError, RuntimeError):
    pass


class DataError(HetFLError, ValueError):
    pass


class PartitionError(HetFLError, RuntimeError):
    pass
