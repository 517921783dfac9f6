"""Exception hierarchy shared by the pipeline stages."""


class PclocError(Exception):
    """Base class for all pipeline failures."""


class DegenerateInputError(PclocError, ValueError):
    """Input geometry is rank deficient (collinear points, zero-variance sets)."""


class AlignmentError(DegenerateInputError):
    pass


class UnrenderableView(PclocError):
    """The view contains no valid pixel."""


class ImageTooSmall(PclocError, ValueError):
    pass


class InsufficientCorrespondences(PclocError):
    pass


class PoseNotFound(PclocError):
    """RANSAC found no model with enough inliers."""


class TrackingLost(PclocError):
    pass


class RelocalizationFailed(PclocError):
    pass


class LocalizationFailed(PclocError):
    pass


class EmptyRegion(PclocError):
    """The region of interest produced no keyframes."""


class FormatError(PclocError, ValueError):
    """Malformed file (PLY, database, map, trajectory)."""


class SceneError(PclocError, ValueError):
    pass
