"""Exception types shared across the package."""


class DomainError(ValueError):
    """Inputs violate a geometric precondition (wrong base point, bad coordinates)."""


class ParameterError(ValueError):
    """A numeric or structural parameter is out of range."""


class DegeneratePlaneError(DomainError):
    """The two tangent vectors do not span a 2-plane."""


class NormalizationError(ValueError):
    """The requested curvature extreme is not positive, so it cannot be scaled to 1."""


class AmbiguousEndpointError(ValueError):
    """The endpoint of an index count coincides with a conjugate time."""
