"""Exception and warning types raised by the library."""


class TreeDispError(Exception):
    """Base class for all library errors."""


class DomainError(TreeDispError, ValueError):
    """An argument lies outside the domain where the quantity is defined."""


class ConvergenceError(TreeDispError, RuntimeError):
    """A numerical procedure failed to reach its requested accuracy."""


class InvariantError(TreeDispError, RuntimeError):
    """A structural invariant (band count, monotonicity, ...) was violated."""


class TruncationWarning(UserWarning):
    """The band-truncation tail is large relative to the computed value."""


class SymmetryWarning(UserWarning):
    """A supplied edge potential is not symmetric under x -> L - x."""
