"""Point-cloud data model, rigid transforms, and axis-aligned cropping.

All types are immutable value objects: their numpy arrays are marked
read-only at construction, so instances can be shared freely across threads.
"""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np

ORTHONORMALITY_TOL = 1e-9


def _readonly(a: np.ndarray) -> np.ndarray:
    a = np.ascontiguousarray(a)
    a.flags.writeable = False
    return a


@dataclass(frozen=True, eq=False)
class PointCloud:
    """N points with positions (meters), RGB colors in [0, 1], optional binary labels."""

    positions: np.ndarray  # (N, 3) float
    colors: np.ndarray  # (N, 3) float in [0, 1]
    labels: np.ndarray | None = None  # (N,) uint8 in {0, 1}

    def __post_init__(self) -> None:
        pos = np.asarray(self.positions, dtype=np.float64).reshape(-1, 3)
        col = np.asarray(self.colors, dtype=np.float64).reshape(-1, 3)
        if pos.shape[0] != col.shape[0]:
            raise ValueError(f"positions ({pos.shape[0]}) and colors ({col.shape[0]}) differ in length")
        if not np.all(np.isfinite(pos)):
            raise ValueError("positions must be finite")
        if col.size and (col.min() < 0.0 or col.max() > 1.0):
            raise ValueError("colors must lie in [0, 1]")
        object.__setattr__(self, "positions", _readonly(pos))
        object.__setattr__(self, "colors", _readonly(col))
        if self.labels is not None:
            lab = np.asarray(self.labels, dtype=np.uint8).reshape(-1)
            if lab.shape[0] != pos.shape[0]:
                raise ValueError(f"labels ({lab.shape[0]}) and positions ({pos.shape[0]}) differ in length")
            if lab.size and lab.max() > 1:
                raise ValueError("labels must be 0 or 1")
            object.__setattr__(self, "labels", _readonly(lab))

    def __len__(self) -> int:
        return self.positions.shape[0]

    def with_labels(self, labels: np.ndarray) -> "PointCloud":
        return PointCloud(self.positions, self.colors, labels)

    def select(self, index: np.ndarray) -> "PointCloud":
        """Sub-cloud at the given indices (or boolean mask); labels carried along."""
        lab = self.labels[index] if self.labels is not None else None
        return PointCloud(self.positions[index], self.colors[index], lab)

    def aabb(self) -> "Aabb":
        if len(self) == 0:
            raise ValueError("empty cloud has no bounding box")
        return Aabb(self.positions.min(axis=0), self.positions.max(axis=0))


@dataclass(frozen=True, eq=False)
class RigidTransform:
    """Rotation (proper orthonormal 3x3) plus translation, in meters."""

    rotation: np.ndarray
    translation: np.ndarray

    def __post_init__(self) -> None:
        r = np.asarray(self.rotation, dtype=np.float64).reshape(3, 3)
        t = np.asarray(self.translation, dtype=np.float64).reshape(3)
        if np.abs(r.T @ r - np.eye(3)).max() > ORTHONORMALITY_TOL:
            raise ValueError("rotation is not orthonormal")
        if abs(np.linalg.det(r) - 1.0) > ORTHONORMALITY_TOL:
            raise ValueError("rotation determinant is not +1")
        object.__setattr__(self, "rotation", _readonly(r))
        object.__setattr__(self, "translation", _readonly(t))

    @staticmethod
    def identity() -> "RigidTransform":
        return RigidTransform(np.eye(3), np.zeros(3))

    def apply_points(self, points: np.ndarray) -> np.ndarray:
        return points @ self.rotation.T + self.translation


def apply_transform(cloud: PointCloud, t: RigidTransform) -> PointCloud:
    """Map positions through p |-> R p + translation; colors and labels unchanged."""
    return PointCloud(t.apply_points(cloud.positions), cloud.colors, cloud.labels)


def compose(a: RigidTransform, b: RigidTransform) -> RigidTransform:
    """Transform equal to applying b first, then a."""
    return RigidTransform(a.rotation @ b.rotation, a.rotation @ b.translation + a.translation)


def invert(t: RigidTransform) -> RigidTransform:
    rt = t.rotation.T
    return RigidTransform(rt, -rt @ t.translation)


@dataclass(frozen=True, eq=False)
class Aabb:
    """Closed axis-aligned box; min <= max componentwise."""

    min: np.ndarray
    max: np.ndarray

    def __post_init__(self) -> None:
        lo = np.asarray(self.min, dtype=np.float64).reshape(3)
        hi = np.asarray(self.max, dtype=np.float64).reshape(3)
        if np.any(lo > hi):
            raise ValueError("box min exceeds max")
        object.__setattr__(self, "min", _readonly(lo))
        object.__setattr__(self, "max", _readonly(hi))

    def contains(self, points: np.ndarray) -> np.ndarray:
        """Boolean mask of points inside the closed box."""
        return np.all((points >= self.min) & (points <= self.max), axis=1)

    def diagonal(self) -> float:
        return float(np.linalg.norm(self.max - self.min))


def crop(cloud: PointCloud, box: Aabb) -> PointCloud:
    """Retain exactly the points inside the closed box (boundary included)."""
    return cloud.select(box.contains(cloud.positions))
