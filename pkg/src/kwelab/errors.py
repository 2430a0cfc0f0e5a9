"""Exception types shared across the package.

Each class maps to one CLI exit code (see ``kwelab.cli``).
"""


class DomainError(ValueError):
    """Input outside the admissible range of an operation."""


class ResourceError(RuntimeError):
    """A size or count cap would be exceeded."""


class NumericError(ArithmeticError):
    """A numerical procedure failed to converge or went out of bounds."""


class InvariantError(AssertionError):
    """An internal consistency check failed. Always a bug."""
