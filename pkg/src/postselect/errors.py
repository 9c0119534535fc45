"""Exception types shared across the package."""


class PostSelectError(Exception):
    """Base class for all errors raised by postselect."""


class ShapeError(PostSelectError, ValueError):
    """Array or index does not match the scenario it is used with."""


class ParameterError(PostSelectError, ValueError):
    """A numeric parameter lies outside its admissible domain."""


class DegenerateGameError(PostSelectError):
    """No admissible behaviour has a nonzero post-selection probability."""


class CapacityError(PostSelectError):
    """The requested enumeration exceeds the configured size cap."""


class NumericalError(PostSelectError, ArithmeticError):
    """An iterative method failed to reach its tolerance."""


class ValidationError(PostSelectError, ValueError):
    """An object violates one of its structural invariants."""
