"""Exception types raised across the package."""


class EdgeListParseError(ValueError):
    """A line of an edge-list file could not be parsed."""

    def __init__(self, message, line_number=None):
        self.line_number = line_number
        if line_number is not None:
            message = f"line {line_number}: {message}"
        super().__init__(message)


class SelfLoopError(ValueError):
    """An undirected graph was given an edge (i, i)."""

    def __init__(self, node):
        self.node = node
        super().__init__(f"self-loop on node {node!r} is not allowed in undirected mode")


class DimensionError(ValueError):
    """Requested embedding dimension is incompatible with the graph."""


class NumericalError(RuntimeError):
    """An iterative numerical routine failed.

    ``iteration`` carries the iteration count (or index) at which the
    failure was detected, when known.
    """

    def __init__(self, message, iteration=None):
        self.iteration = iteration
        if iteration is not None:
            message = f"{message} (iteration {iteration})"
        super().__init__(message)


class UndefinedAngleError(ValueError):
    """Spherical coordinates requested for a vector whose first two entries are zero."""


class SingularGradientError(ValueError):
    """Gradient of the angle map is undefined at the requested point."""


class InvertibilityError(ValueError):
    """Second-moment matrix is singular or too badly conditioned."""


class DensityError(ValueError):
    """A covariance matrix handed to a density evaluation is not positive definite."""


class ComponentCollapseError(RuntimeError):
    """A mixture component lost all its responsibility twice during EM."""


class SelectionError(RuntimeError):
    """Model selection could not produce a single finite BIC value."""


class UndefinedStatisticError(ValueError):
    """A test statistic or index is undefined for the given input."""
