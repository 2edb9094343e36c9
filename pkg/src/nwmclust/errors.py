"""
Exception hierarchy of the nwmclust library.

Every error knows the pipeline stage it was raised in, a remediation hint
and the CLI exit code it maps to.
"""

from typing import Optional


class NwmClustError(Exception):
    """Base class for all library errors."""

    exit_code = 3
    default_stage = 'pipeline'

    def __init__(self, msg: str, stage: Optional[str] = None, hint: Optional[str] = None):
        super().__init__(msg)
        self.msg = msg
        self.stage = stage or self.default_stage
        self.hint = hint

    def __str__(self) -> str:
        text = f'[{self.stage}] {self.msg}'
        if self.hint:
            text = f'{text} (hint: {self.hint})'
        return text


class ValidationError(NwmClustError, ValueError):
    """Bad input, bad configuration or a violated precondition."""

    exit_code = 2
    default_stage = 'validation'


class DataError(ValidationError):
    """A dataset or CSV file breaks its contract."""

    default_stage = 'data'


class NumericalError(NwmClustError, ArithmeticError):
    """A computation could not produce a trustworthy number."""

    exit_code = 3
    default_stage = 'numerics'


class ConvergenceError(NumericalError):
    """Coordinate descent did not converge."""

    default_stage = 'penalized-fit'


class RankDeficiencyError(NumericalError):
    """A least-squares design is (numerically) rank deficient."""

    default_stage = 'refit'


class SingularCovarianceError(NumericalError):
    """A covariance matrix could not be inverted."""

    default_stage = 'partial-correlations'


class KinkError(NumericalError):
    """The penalty is not twice differentiable at the requested point."""

    default_stage = 'bias-diagnostics'


class BootstrapError(NumericalError):
    """Too many singular bootstrap resamples."""

    default_stage = 'bootstrap'


class SelectionError(NumericalError):
    """The selected active set is unusable for the requested stage."""

    default_stage = 'selection'
