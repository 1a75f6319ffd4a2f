"""Exception hierarchy shared by all stabprop modules."""


class StabPropError(Exception):
    """Base class for every error raised by this package."""


class DimMismatch(StabPropError, ValueError):
    pass


class NotPsd(StabPropError, ValueError):
    pass


class NegativeWeight(StabPropError, ValueError):
    pass


class IncompatibleMethod(StabPropError, ValueError):
    pass


class InvalidCovariance(StabPropError, ValueError):
    pass


class NonpositiveScale(StabPropError, ValueError):
    pass


class UnrecordedNode(StabPropError, RuntimeError):
    pass


class TooFewSamples(StabPropError, ValueError):
    pass


class EmptyInput(StabPropError, ValueError):
    pass


class ParseError(StabPropError, ValueError):
    pass


class MissingColumn(StabPropError, KeyError):
    pass


class BadMagic(StabPropError, ValueError):
    pass


class TruncatedFile(StabPropError, ValueError):
    pass


class CountMismatch(StabPropError, ValueError):
    pass


class NonFiniteLoss(StabPropError, FloatingPointError):
    pass
