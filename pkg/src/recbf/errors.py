"""Exception types shared across the package."""


class RecbfError(Exception):
    """Base class for errors raised by this package."""


class NonFiniteEvaluation(RecbfError):
    """A scalar evaluation produced NaN or infinity."""


class NestingDepthExceeded(RecbfError):
    """A derivative request exceeded the supported nesting depth."""


class UnknownSystem(RecbfError):
    """Requested builtin system name is not registered."""


class WrongSystem(RecbfError):
    """A barrier construction was bound to a system it does not support."""


class UnknownExperiment(RecbfError):
    """Requested reproduction experiment name is not registered."""
