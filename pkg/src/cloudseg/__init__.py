"""Point-cloud segmentation toolkit: weakly-supervised label bootstrap,
a from-scratch trainable 3D-UNet, metrics, and an annotation service."""

__version__ = "0.1.0"

from .cloud import Aabb, PointCloud, RigidTransform, apply_transform, compose, crop, invert

__all__ = [
    "Aabb",
    "PointCloud",
    "RigidTransform",
    "apply_transform",
    "compose",
    "crop",
    "invert",
    "__version__",
]
