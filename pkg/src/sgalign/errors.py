"""Exception types shared across the package."""


class SgalignError(Exception):
    """Base class for all package errors."""


class DimensionError(SgalignError, ValueError):
    """A vector or state has the wrong length."""


class ParameterError(SgalignError, ValueError):
    """A model or integrator parameter is out of its admissible range."""


class ConfigError(SgalignError, ValueError):
    """An experiment or controller configuration is invalid."""


class NumericDomainError(SgalignError, ArithmeticError):
    """A computation left the finite floating-point domain.

    ``time`` is the simulation time at which the failure occurred, when
    known.  ``partial`` carries the trajectory recorded up to the failure
    for post-mortem inspection, when available.
    """

    def __init__(self, message, time=None, partial=None):
        super().__init__(message)
        self.time = time
        self.partial = partial


class StiffnessError(NumericDomainError):
    """The adaptive step controller underflowed its minimum step size."""
