"""Exception hierarchy and warning categories."""


class FogsimError(Exception):
    """Base class for all package errors."""


class ParameterError(FogsimError, ValueError):
    """A model or domain parameter violates its contract."""


class OracleAccuracyError(ParameterError):
    """A numeric-oracle setting would make the oracle unreliable."""


class FitError(FogsimError, RuntimeError):
    """Least-squares fit failed to converge or the design is degenerate.

    Carries a ``diagnostics`` dict with whatever the fitter knew at failure.
    """

    def __init__(self, message: str, diagnostics: dict | None = None):
        super().__init__(message)
        self.diagnostics = diagnostics or {}


class ConfigError(FogsimError, ValueError):
    """Configuration document is malformed or inconsistent."""


class DataError(FogsimError, ValueError):
    """An input data file is malformed or unusable."""


class EstimatorInconsistencyWarning(UserWarning):
    """An estimator statistic is outside its theoretically allowed range."""
