"""Rigid alignment from human-picked point correspondences.

The transform is the least-squares rotation and translation mapping source
points onto reference points, solved in closed form via SVD of the centered
cross-covariance, with a determinant correction so the result is never a
reflection. Scale is deliberately not estimated: both sensors are metric.
"""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from .cloud import RigidTransform
from .errors import DegenerateConfiguration, TooFewCorrespondences

MIN_PAIRS = 4
DEGENERACY_RTOL = 1e-9


@dataclass(frozen=True, eq=False)
class CorrespondenceSet:
    """Paired source/reference picks, both in meters."""

    source: np.ndarray  # (N, 3)
    reference: np.ndarray  # (N, 3)

    def __post_init__(self) -> None:
        src = np.asarray(self.source, dtype=np.float64).reshape(-1, 3)
        ref = np.asarray(self.reference, dtype=np.float64).reshape(-1, 3)
        if src.shape != ref.shape:
            raise ValueError("source and reference pair counts differ")
        if src.shape[0] < MIN_PAIRS:
            raise TooFewCorrespondences(
                f"at least four point correspondences are required, got {src.shape[0]}"
            )
        if not (np.all(np.isfinite(src)) and np.all(np.isfinite(ref))):
            raise ValueError("correspondence points must be finite")
        object.__setattr__(self, "source", src)
        object.__setattr__(self, "reference", ref)

    def __len__(self) -> int:
        return self.source.shape[0]


def estimate_rigid_transform(corr: CorrespondenceSet) -> RigidTransform:
    """Best rigid transform minimizing sum ||R s_i + t - r_i||^2."""
    src, ref = corr.source, corr.reference
    src_centroid = src.mean(axis=0)
    ref_centroid = ref.mean(axis=0)
    src_c = src - src_centroid
    ref_c = ref - ref_centroid

    sv = np.linalg.svd(src_c, compute_uv=False)
    if sv[-1] <= DEGENERACY_RTOL * sv[0]:
        raise DegenerateConfiguration(
            "source points are collinear or planar within tolerance; rotation unobservable"
        )

    cov = src_c.T @ ref_c
    u, _, vt = np.linalg.svd(cov)
    d = np.sign(np.linalg.det(vt.T @ u.T))
    rotation = vt.T @ np.diag([1.0, 1.0, d]) @ u.T
    translation = ref_centroid - rotation @ src_centroid
    return RigidTransform(rotation, translation)


def alignment_residual(corr: CorrespondenceSet, t: RigidTransform) -> float:
    """RMS distance between transformed source points and their references."""
    mapped = t.apply_points(corr.source)
    return float(np.sqrt(np.mean(np.sum((mapped - corr.reference) ** 2, axis=1))))
