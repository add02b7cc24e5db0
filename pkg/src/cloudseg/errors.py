"""Exception types shared across the package."""


class CloudsegError(Exception):
    """Base class for all package-specific errors."""


class MalformedPly(CloudsegError):
    """PLY file is missing required structure or its payload is truncated."""


class UnsupportedEncoding(CloudsegError):
    """PLY encoding we do not read (e.g. big-endian binary)."""


class IoFailure(CloudsegError):
    """Filesystem write failed."""


class TooFewCorrespondences(CloudsegError):
    """Fewer than four correspondence pairs were provided."""


class DegenerateConfiguration(CloudsegError):
    """Correspondence source points are rank-deficient; rotation unobservable."""


class EmptyCloud(CloudsegError):
    """Operation requires a non-empty point cloud."""


class EmptyAfterCrop(CloudsegError):
    """Crop box retained no points."""


class NoClusters(CloudsegError):
    """No cluster survived region growing and seed-color filtering."""


class ShapeMismatch(CloudsegError):
    """Tensor or grid shapes are inconsistent."""


class PointSetMismatch(CloudsegError):
    """Two clouds expected to share a point set do not."""


class CorruptFile(CloudsegError):
    """Binary container failed its integrity check (truncation or hash mismatch)."""


class CorruptCheckpoint(CorruptFile):
    """Checkpoint file failed its integrity check."""


class VersionMismatch(CloudsegError):
    """Serialized file declares a format version we do not understand."""
