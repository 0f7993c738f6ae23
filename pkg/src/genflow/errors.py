"""Exception types shared across the package."""


class GenFlowError(Exception):
    """Base class for all errors raised by genflow."""


class ParameterError(GenFlowError, ValueError):
    """An argument is out of its valid range."""


class ShapeMismatchError(ParameterError):
    """Two arrays that must agree in shape do not."""


class EmptyInputError(GenFlowError, ValueError):
    pass


class InvalidDepthError(GenFlowError, ValueError):
    pass


class LookupFailure(GenFlowError, KeyError):
    """A named part, object or joint does not exist."""

    def __str__(self):
        return str(self.args[0]) if self.args else ""


class RangeError(GenFlowError, ValueError):
    """A requested time falls outside a pose track."""


class DegenerateInputError(GenFlowError, ValueError):
    pass


class DegenerateGeometryError(GenFlowError, ValueError):
    """Source points are collinear or coincident.

    ``translation`` holds the weighted-centroid translation so callers can
    fall back to a translation-only command.
    """

    def __init__(self, message, translation):
        super().__init__(message)
        self.translation = translation


class ConfigurationError(GenFlowError, ValueError):
    pass


class UnsupportedTaskError(ConfigurationError):
    pass


class LostContactError(GenFlowError, RuntimeError):
    """No scene point lies within the query radius of the gripper."""


class EmptySceneError(EmptyInputError):
    pass
