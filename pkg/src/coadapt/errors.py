"""Exception types shared across the package."""


class CoadaptError(Exception):
    """Base class for all package errors."""


class InvalidPrompt(CoadaptError):
    pass


class InvalidEdit(CoadaptError):
    pass


class OutOfRange(CoadaptError):
    pass


class DegenerateEmbedding(CoadaptError):
    pass


class DimError(CoadaptError):
    pass


class ControllerMismatch(CoadaptError):
    pass


class RewardError(CoadaptError):
    pass


class InsufficientSamples(CoadaptError):
    pass


class SingularCovariance(CoadaptError):
    pass


class EmptyPool(CoadaptError):
    pass


class NumericsError(CoadaptError):
    pass


class EmptyInput(CoadaptError):
    pass


class SessionClosed(CoadaptError):
    pass


class CollisionError(CoadaptError):
    pass


class WriteError(CoadaptError):
    pass


class ParseError(CoadaptError):
    pass
