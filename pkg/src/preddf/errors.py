"""Exception hierarchy shared by all modules."""


class PredDFError(Exception):
    """Base class for library errors."""


class ConfigError(PredDFError, ValueError):
    """Invalid user-supplied configuration or argument."""


class FitError(PredDFError, ValueError):
    """A procedure could not be fit (rank deficiency, bad tuning value)."""


class ThresholdError(FitError):
    """A formula is undefined at or too near the interpolation threshold p = n."""


class LeverageError(FitError):
    """A leverage h_ii is numerically equal to one."""


class CollinearityError(FitError):
    """A new column lies (numerically) in the span of the existing ones."""


class ConditioningError(PredDFError, ArithmeticError):
    """A linear system is too ill-conditioned to solve reliably."""
