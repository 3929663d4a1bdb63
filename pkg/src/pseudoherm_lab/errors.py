"""Exception hierarchy shared by every module."""

from __future__ import annotations


class PseudohermError(Exception):
    """Base class for all errors raised by the toolkit."""


class ContractViolation(PseudohermError, ValueError):
    """Inputs of the wrong shape or belonging to the wrong model."""


class InvalidDimensionError(ContractViolation):
    """A model was requested with a non-positive CR dimension."""


class DegenerateMetricError(PseudohermError):
    """A Gram matrix or Levi form is singular where it must not be."""


class InconsistentModelError(PseudohermError):
    """Connection axioms fail by far more than numerical noise."""


class IntegrationError(PseudohermError):
    """An integrator produced non-finite values.

    Attributes:
        last_good_t: last parameter value at which the state was finite.
    """

    def __init__(self, message: str, last_good_t: float):
        super().__init__(f"{message} (last good t = {last_good_t:.12g})")
        self.last_good_t = last_good_t


class DomainError(PseudohermError, ValueError):
    """An operation was called outside its domain of definition."""


class DegeneratePlaneError(DomainError):
    """Two vectors that should span a plane are linearly dependent."""


class ConjugateIntervalError(PseudohermError):
    """A boundary value problem was posed between conjugate points."""


class HypothesisViolation(PseudohermError):
    """A theorem's hypotheses do not hold for the supplied data."""


class UnsupportedModelError(PseudohermError):
    """The requested construction is only available on other models."""
