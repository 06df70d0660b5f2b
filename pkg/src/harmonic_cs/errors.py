"""Exception hierarchy shared by all modules."""


class GeometryError(ValueError):
    """Base class for invalid geometric input."""


class DomainError(GeometryError):
    """A chart point lies outside the chart domain."""


class DegenerateMetricError(GeometryError):
    """The metric is not symmetric positive definite at a point."""


class ParameterError(GeometryError):
    """Bad manifold or constructor parameters."""


class ValenceError(GeometryError):
    """An operator was applied to a form of unsupported degree."""


class DimensionError(GeometryError):
    """Odd dimension where an almost complex structure is required."""


class UnsupportedManifoldError(GeometryError):
    """The operation needs a quadrature rule the manifold lacks."""


class NonRetractableError(ArithmeticError):
    """A 2x2 matrix with real eigenvalues cannot be mapped onto J^2 = -I."""
