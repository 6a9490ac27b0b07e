"""Exception types shared across the package.

Every error message names the module that raised it and the precondition
that was violated, so CLI users can map failures back to inputs without
reading a traceback.
"""


class DictcertError(Exception):
    """Base class for all package-specific failures."""


class ValidationError(DictcertError):
    """An input violated a documented precondition (CLI exit code 1)."""


class NumericalError(DictcertError):
    """A numerical degeneracy prevented the computation (CLI exit code 2)."""


class SingularGramError(NumericalError):
    """A restricted Gram matrix A_L* A_L is singular.

    This signals that the selected atoms are linearly dependent, i.e. the
    dictionary admits a nonzero sparse vector in its null space.
    """


class ConditioningError(NumericalError):
    """A matrix required to be invertible is numerically singular."""


class InfeasibleError(NumericalError):
    """A constraint system admits no solution (e.g. y outside range(A))."""
