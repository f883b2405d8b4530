"""Exception hierarchy for fockforge.

Every numerical guard raises a subclass of :class:`FockForgeError` so callers
(and the CLI exit-code mapping) can tell configuration mistakes apart from
numerical failures.
"""


class FockForgeError(Exception):
    """Base class for all package errors."""


class ConfigError(FockForgeError, ValueError):
    """Invalid user-supplied configuration."""


class NumericalGuardError(FockForgeError):
    """A numerical safety check tripped (leakage, drift, convergence...)."""


class CutoffTooSmall(ConfigError):
    pass


class IndexOutOfCutoff(ConfigError, IndexError):
    pass


class SpaceMismatch(ConfigError):
    pass


class ZeroMeanPhoton(NumericalGuardError, ZeroDivisionError):
    pass


class LeakageExceeded(NumericalGuardError):
    pass


class CutoffConvergenceFailed(NumericalGuardError):
    pass


class BudgetExceeded(FockForgeError):
    pass


class TraceDriftExceeded(NumericalGuardError):
    pass


class StepTooLarge(NumericalGuardError):
    pass


class PulseOutsideWindow(ConfigError):
    pass


class GridTooSmall(ConfigError):
    pass


class MissingParameters(ConfigError, KeyError):
    pass
