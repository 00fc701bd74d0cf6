"""Exception types raised across the package.

The CLI maps these onto exit codes: configuration problems exit with 1,
external-adapter failures with 3, everything else with 2.
"""


class AkpckError(Exception):
    """Base class for all package errors."""


class InputShapeError(AkpckError):
    """A point or array does not match the expected dimensionality."""


class EmptyPoolError(AkpckError):
    """A sample pool of size zero was requested."""


class DegenerateDesignError(AkpckError):
    """A stratified design needs at least two points."""


class HyperparameterError(AkpckError):
    """A kernel hyperparameter lies outside its admissible domain."""


class IllConditionedError(AkpckError):
    """Correlation matrix stayed non-positive-definite after nugget escalation."""


class UnderdeterminedTrendError(AkpckError):
    """Fewer observations than trend coefficients (plus cross-validation slack)."""


class EmptyDesignError(AkpckError):
    """An operation needs a non-empty experimental design."""


class UndefinedReferenceError(AkpckError):
    """A relative error was requested against a zero reference value."""


class DuplicatePointError(AkpckError):
    """A point duplicates an existing design point within tolerance."""


class ExhaustedPoolError(AkpckError):
    """Every candidate in the pool duplicates the current design."""


class ExternalEvaluatorError(AkpckError):
    """The external simulator adapter failed (timeout, exit, bad payload)."""


class UnsupportedOracleError(AkpckError):
    """Ground truth was requested for a problem with no evaluable oracle."""


class ConfigError(AkpckError):
    """A study configuration failed validation.

    The message carries field-level diagnostics (dotted key paths).
    """
