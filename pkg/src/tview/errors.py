"""Exception types raised across the package."""


class TViewError(Exception):
    """Base class for all package errors."""


class PointBehindCamera(TViewError):
    pass


class DegenerateAnchor(TViewError):
    """Para-perspective anchor too close to the camera centre."""


class NotPositiveDefinite(TViewError):
    pass


class RankDeficientMap(TViewError):
    """An affine push-forward produced a singular scale matrix."""


class InsufficientViews(TViewError):
    pass


class DehomogenizationFailure(TViewError):
    """Triangulated homogeneous point lies (numerically) at infinity."""


class DegenerateGeometry(TViewError):
    pass


class NoValidObservations(TViewError):
    pass


class IndexOutOfRange(TViewError, IndexError):
    pass


class ParseError(TViewError, ValueError):
    pass


class SchemaVersionMismatch(TViewError, ValueError):
    pass


class IntegrityError(TViewError, ValueError):
    pass


class MismatchedFiles(TViewError, ValueError):
    pass
