"""Uniform voxel-hash neighbor search over point sets.

Cells are cubes with edge equal to the query radius, so any point within
that radius of a query lies in the query's 27-cell neighborhood. Queries
are exact: candidates are distance-filtered. Expected O(1) per query on
roughly uniform clouds.
"""

from __future__ import annotations

import numpy as np


class VoxelHashGrid:
    """Hash grid over fixed points supporting radius queries at the build radius."""

    def __init__(self, points: np.ndarray, cell_size: float):
        if cell_size <= 0:
            raise ValueError("cell_size must be positive")
        self.points = np.asarray(points, dtype=np.float64).reshape(-1, 3)
        self.cell_size = float(cell_size)
        self._cells: dict[tuple[int, int, int], list[int]] = {}
        keys = np.floor(self.points / self.cell_size).astype(np.int64)
        for i, key in enumerate(map(tuple, keys)):
            self._cells.setdefault(key, []).append(i)

    def __len__(self) -> int:
        return self.points.shape[0]

    def _candidates(self, point: np.ndarray) -> list[int]:
        cx, cy, cz = (int(v) for v in np.floor(point / self.cell_size))
        out: list[int] = []
        for dx in (-1, 0, 1):
            for dy in (-1, 0, 1):
                for dz in (-1, 0, 1):
                    bucket = self._cells.get((cx + dx, cy + dy, cz + dz))
                    if bucket:
                        out.extend(bucket)
        return out

    def query_radius(self, point: np.ndarray, radius: float) -> np.ndarray:
        """Indices of stored points within `radius` (inclusive) of `point`, ascending.

        Exact only for radius <= the grid's cell size.
        """
        if radius > self.cell_size:
            raise ValueError("query radius exceeds cell size; rebuild with a larger cell")
        cand = self._candidates(np.asarray(point, dtype=np.float64))
        if not cand:
            return np.empty(0, dtype=np.int64)
        idx = np.asarray(cand, dtype=np.int64)
        d2 = np.sum((self.points[idx] - point) ** 2, axis=1)
        hit = idx[d2 <= radius * radius]
        hit.sort()
        return hit


def any_pair_within(points_a: np.ndarray, points_b: np.ndarray, distance: float) -> bool:
    """Whether the minimum point-to-point distance between the sets is <= distance.

    Exact predicate: a hash grid with cell edge `distance` is built over the
    larger set and every point of the smaller set checks its 27-cell
    neighborhood, which covers all pairs at or below the threshold.
    """
    a = np.asarray(points_a, dtype=np.float64).reshape(-1, 3)
    b = np.asarray(points_b, dtype=np.float64).reshape(-1, 3)
    if a.shape[0] == 0 or b.shape[0] == 0:
        return False
    if a.shape[0] > b.shape[0]:
        a, b = b, a
    grid = VoxelHashGrid(b, distance)
    for p in a:
        if grid.query_radius(p, distance).size:
            return True
    return False


def min_pair_distance(points_a: np.ndarray, points_b: np.ndarray) -> float:
    """Exact minimum distance between two point sets, brute force."""
    a = np.asarray(points_a, dtype=np.float64).reshape(-1, 3)
    b = np.asarray(points_b, dtype=np.float64).reshape(-1, 3)
    best = np.inf
    for p in a:
        d2 = np.sum((b - p) ** 2, axis=1).min()
        if d2 < best:
            best = d2
    return float(np.sqrt(best))
