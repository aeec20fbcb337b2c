"""Exception hierarchy shared by every module."""


class PTamperError(Exception):
    """Base class for all library errors."""


class InvalidPrefix(PTamperError, ValueError):
    """A prefix is not extendable to a sequence in the process support."""


class UnsupportedFlavor(PTamperError, TypeError):
    """An exact operation was requested on a process that cannot provide it."""


class ZeroPartialExpectation(PTamperError, ArithmeticError):
    """The ideal rejection sampler is undefined at a prefix whose partial expectation is 0."""


class SupportTooLarge(PTamperError, RuntimeError):
    """Exhaustive enumeration would exceed the configured support cap."""


class TooManySubsets(SupportTooLarge):
    pass


class OutOfRange(PTamperError, ValueError):
    pass


class IndexOutOfRange(PTamperError, IndexError):
    pass


class EmptySchedule(PTamperError, ValueError):
    pass


class ZeroMu(PTamperError, ArithmeticError):
    """A bound or budget was requested for an objective with expectation 0."""


class ObjectiveRangeError(PTamperError, ValueError):
    """An objective function produced a value outside [0, 1] on the support."""


class PlausibilityViolation(PTamperError, AssertionError):
    """A tampered sample left the honest support or exceeded its distance budget."""
