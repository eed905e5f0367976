class GeometryError(ValueError):
    pass


class BehindCameraError(GeometryError):
    pass


class DegenerateGeometryError(GeometryError):
    """Rank-deficient triangulation, collinear alignment sets, and similar."""


class ShapeRangeError(ValueError):
    """Shape coefficients produced a non-positive bone length."""


class EmptySceneError(ValueError):
    pass


class AlignmentError(ValueError):
    pass
