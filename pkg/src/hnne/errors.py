"""Exception types shared by every module."""


class HNNEError(Exception):
    """Base class for all errors raised by this package."""


class InvalidArgumentError(HNNEError, ValueError):
    """A parameter is out of range or inconsistent with the inputs."""


class InvalidDataError(HNNEError, ValueError):
    """Input data is malformed: non-finite values, ragged rows, bad files."""
