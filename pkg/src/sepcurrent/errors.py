"""Exception types. CLI exit codes key off these classes."""


class SEPError(Exception):
    """Base class for package errors."""


class ConfigError(SEPError, ValueError):
    """Invalid parameters or experiment configuration."""


class NumericalError(SEPError, ArithmeticError):
    """A solver failed to produce a trustworthy answer."""


class NonConvergence(NumericalError):
    pass


class RangeViolation(NumericalError):
    """A density left [0, 1] by more than the discretisation allowance."""


class HorizonError(SEPError, ValueError):
    """Requested time lies beyond the computed horizon."""


class InvariantViolation(SEPError, AssertionError):
    """A structural property that must hold exactly was broken."""


class OrderViolation(InvariantViolation):
    pass


class MirrorViolation(InvariantViolation):
    pass


class MonotonicityError(InvariantViolation):
    pass
