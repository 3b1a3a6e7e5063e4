"""Exception types shared across the toolkit."""


class SNCError(Exception):
    """Base class for all toolkit errors."""


class NumericError(SNCError):
    """A mathematical precondition failed (mapped to CLI exit code 3)."""


class DivergentDeconvolution(NumericError):
    pass


class NotInF(NumericError):
    """A curve that must be nonnegative and wide-sense increasing is not."""


class RateTooSmall(NumericError):
    pass


class NoFeasibleTheta(NumericError):
    pass


class IllegalStrengthening(SNCError):
    pass


class VariantMismatch(SNCError):
    pass


class EmptyGrid(SNCError):
    pass


class LengthMismatch(SNCError):
    pass


class InsufficientHorizon(SNCError):
    pass


class GridMismatch(SNCError):
    pass


class UnsupportedTopology(SNCError):
    pass


class SpecError(SNCError):
    """Invalid analysis spec file (mapped to CLI exit code 2)."""


class ParseError(SpecError):
    pass


class SchemaError(SpecError):
    pass
