"""Exception hierarchy shared by every estimator in the package."""


class FIMissingError(Exception):
    """Base class for all package errors."""


class InadmissibleParams(FIMissingError, ValueError):
    """Parameters outside the admissible set (e.g. a non-PD precision)."""


class OutOfSupport(FIMissingError, ValueError):
    """A data point lies outside the model support."""


class DomainError(FIMissingError, ValueError):
    """Argument outside the domain of a divergence function."""


class NonConvergence(FIMissingError, RuntimeError):
    """An iterative solver hit its iteration cap.

    ``report`` carries the partial result when one is available.
    """

    def __init__(self, message, iterations=None, report=None):
        super().__init__(message)
        self.iterations = iterations
        self.report = report


class BadMechanism(FIMissingError, ValueError):
    """A missingness mechanism references coordinates that do not exist."""


class ProposalSupportError(FIMissingError, ValueError):
    """The imputation proposal gave zero density at one of its own draws."""


class AllWeightsZero(FIMissingError, FloatingPointError):
    """Every fractional weight of a record underflowed."""

    def __init__(self, message, record=None):
        super().__init__(message)
        self.record = record


class SingularBread(FIMissingError, ArithmeticError):
    """The sandwich bread matrix cannot be inverted."""

    def __init__(self, message, condition=None):
        super().__init__(message)
        self.condition = condition


class UnsupportedDivergence(FIMissingError, ValueError):
    """A closed form was requested for a divergence it does not cover."""


class MissingCovariance(FIMissingError, ValueError):
    """A report has no covariance, so intervals cannot be formed."""


class EmptyInput(FIMissingError, ValueError):
    """Aggregation over an empty set of replications."""


class ConfigError(FIMissingError, ValueError):
    """Invalid run configuration."""


class ParseError(ConfigError):
    pass


class ValidationError(ConfigError):
    pass
