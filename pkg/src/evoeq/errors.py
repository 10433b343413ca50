"""Exception types shared across the package.

Both derive from ValueError so callers that do not care about the
distinction can catch a single base class.
"""


class ParameterError(ValueError):
    """A scalar or structural argument is outside its admissible range."""


class ShapeError(ValueError):
    """Array shapes or grids of two operands do not line up."""
