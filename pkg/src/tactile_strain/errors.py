"""Exception types shared across the package."""


class TactileError(Exception):
    """Base class for all package errors."""


class InvalidInputError(TactileError, ValueError):
    """Input array or parameter violates an operation's precondition."""


class DomainError(TactileError, ValueError):
    """A parameter lies outside the domain of a function."""


class DegenerateError(TactileError, ValueError):
    """A geometric quantity is undefined for the given input."""


class GridDegenerateError(DegenerateError):
    """Points cannot be arranged into a two-dimensional grid."""


class NoContactError(TactileError):
    """No contact region could be segmented from a displacement field."""


class NoDetectionError(TactileError):
    """The extraction pipeline found no quadrilaterals."""


class IncompatibleInputsError(TactileError, ValueError):
    """Two inputs that must correspond (e.g. control grids) do not."""


class ImageIOError(TactileError, OSError):
    """An image or data file could not be read or written."""
