"""Exception types raised across the package."""


class ConvexLSEError(Exception):
    """Base class for all errors raised by this package."""


class NonFiniteError(ConvexLSEError):
    """Input contains a NaN or infinite entry."""


class ShapeMismatchError(ConvexLSEError):
    """Array shapes are inconsistent with each other or with the contract."""


class EmptyDataError(ConvexLSEError):
    """A dataset with zero observations was supplied."""


class DimensionMismatchError(ConvexLSEError):
    """Vector/matrix dimensions do not match the object they are checked against."""


class CapacityExceededError(ConvexLSEError):
    """Building the constraint system would exceed the configured memory budget."""


class NoConvergenceError(ConvexLSEError):
    """An iterative method hit its iteration cap above tolerance."""


class OutsideDomainError(ConvexLSEError):
    """Query point lies outside the effective domain of the fitted function."""


class NumericalBreakdownError(ConvexLSEError):
    """The simplex method could not make progress; should be unreachable."""


class ParseError(ConvexLSEError):
    """A CSV cell could not be parsed as a number."""


class MissingColumnError(ConvexLSEError):
    """The requested column is absent from the CSV header."""


class SchemaMismatchError(ConvexLSEError):
    """A serialized document does not match the expected schema."""


class VersionUnsupportedError(ConvexLSEError):
    """A serialized document carries an unsupported format version."""


class EmptyGridError(ConvexLSEError):
    """Every grid point fell outside the effective domain."""
