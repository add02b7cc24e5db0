"""Fixed-resolution voxelization of point clouds and label back-projection.

The grid spans the cloud's bounding box exactly, with anisotropic cells
(extent / dims per axis, zero-extent axes padded to 1 mm). Occupied voxels
carry the mean color of their points; a voxel's label is 1 iff at least half
of its points are labeled 1. Points on the max boundary fall into the last
cell. Grids serialize to a sidecar file: JSON header plus a little-endian
float32 payload in channel-major order.
"""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from .binio import read_container, write_container
from .cloud import PointCloud
from .errors import EmptyCloud, ShapeMismatch, VersionMismatch

DEFAULT_DIMS = (80, 80, 80)
ZERO_EXTENT_PAD = 1e-3  # meters
_GRID_MAGIC = b"CSEGGRID"
GRID_FORMAT_VERSION = 1


@dataclass(frozen=True, eq=False)
class GridMapping:
    """World-to-grid mapping: index = floor((p - origin) / cell_size)."""

    origin: np.ndarray  # (3,)
    cell_size: np.ndarray  # (3,) meters per cell
    dims: tuple[int, int, int] = DEFAULT_DIMS

    def __post_init__(self) -> None:
        origin = np.asarray(self.origin, dtype=np.float64).reshape(3)
        cell = np.asarray(self.cell_size, dtype=np.float64).reshape(3)
        if np.any(cell <= 0):
            raise ValueError("cell_size must be positive")
        dims = tuple(int(d) for d in self.dims)
        if len(dims) != 3 or any(d < 1 for d in dims):
            raise ValueError("dims must be three positive integers")
        object.__setattr__(self, "origin", origin)
        object.__setattr__(self, "cell_size", cell)
        object.__setattr__(self, "dims", dims)

    def point_to_index(self, points: np.ndarray) -> tuple[np.ndarray, np.ndarray]:
        """(indices (N,3), inside mask). Points on the max face map to the last cell."""
        points = np.asarray(points, dtype=np.float64).reshape(-1, 3)
        dims = np.asarray(self.dims)
        # tolerance of ~1e-9 cells absorbs the rounding of origin + cell * dims
        tol = self.cell_size * 1e-9
        upper = self.origin + self.cell_size * dims
        inside = np.all((points >= self.origin - tol) & (points <= upper + tol), axis=1)
        idx = np.floor((points - self.origin) / self.cell_size).astype(np.int64)
        idx = np.clip(idx, 0, dims - 1)
        return idx, inside

    def to_dict(self) -> dict:
        return {
            "origin": [float(v) for v in self.origin],
            "cell_size": [float(v) for v in self.cell_size],
            "dims": list(self.dims),
        }

    @staticmethod
    def from_dict(d: dict) -> "GridMapping":
        return GridMapping(np.asarray(d["origin"]), np.asarray(d["cell_size"]), tuple(d["dims"]))


@dataclass(frozen=True, eq=False)
class VoxelGrid:
    """RGB occupancy grid; color is (0,0,0) wherever unoccupied."""

    mapping: GridMapping
    color: np.ndarray  # (D, H, W, 3) in [0, 1]
    occupancy: np.ndarray  # (D, H, W) bool

    def __post_init__(self) -> None:
        color = np.asarray(self.color, dtype=np.float64)
        occ = np.asarray(self.occupancy, dtype=bool)
        if color.shape != (*self.mapping.dims, 3) or occ.shape != self.mapping.dims:
            raise ShapeMismatch("grid arrays do not match mapping dims")
        if color.size and (color.min() < 0.0 or color.max() > 1.0):
            raise ValueError("voxel colors must lie in [0, 1]")
        if np.any(color[~occ] != 0.0):
            raise ValueError("unoccupied voxels must have zero color")
        object.__setattr__(self, "color", color)
        object.__setattr__(self, "occupancy", occ)


@dataclass(frozen=True, eq=False)
class LabelGrid:
    """Binary label grid over the same mapping as its paired VoxelGrid."""

    mapping: GridMapping
    labels: np.ndarray  # (D, H, W) uint8 in {0, 1}

    def __post_init__(self) -> None:
        labels = np.asarray(self.labels, dtype=np.uint8)
        if labels.shape != self.mapping.dims:
            raise ShapeMismatch("label array does not match mapping dims")
        if labels.size and labels.max() > 1:
            raise ValueError("labels must be 0 or 1")
        object.__setattr__(self, "labels", labels)


def voxelize(
    cloud: PointCloud, dims: tuple[int, int, int] = DEFAULT_DIMS
) -> tuple[VoxelGrid, LabelGrid | None, GridMapping]:
    """Bin a cloud into an RGB voxel grid; labels (if present) follow majority rule."""
    n = len(cloud)
    if n == 0:
        raise EmptyCloud("cannot voxelize an empty cloud")
    dims = tuple(int(d) for d in dims)
    lo = cloud.positions.min(axis=0)
    hi = cloud.positions.max(axis=0)
    extent = hi - lo
    extent = np.where(extent <= 0.0, ZERO_EXTENT_PAD, extent)
    mapping = GridMapping(lo, extent / np.asarray(dims), dims)

    idx, inside = mapping.point_to_index(cloud.positions)
    assert inside.all(), "voxelize mapping must cover its own cloud"
    lin = np.ravel_multi_index((idx[:, 0], idx[:, 1], idx[:, 2]), dims)
    size = dims[0] * dims[1] * dims[2]
    counts = np.bincount(lin, minlength=size).astype(np.float64)
    occupancy = (counts > 0).reshape(dims)

    color = np.zeros((size, 3), dtype=np.float64)
    for c in range(3):
        sums = np.bincount(lin, weights=cloud.colors[:, c], minlength=size)
        np.divide(sums, counts, out=color[:, c], where=counts > 0)
    color = np.clip(color, 0.0, 1.0).reshape(*dims, 3)
    grid = VoxelGrid(mapping, color, occupancy)

    label_grid = None
    if cloud.labels is not None:
        pos_counts = np.bincount(lin, weights=cloud.labels.astype(np.float64), minlength=size)
        voxel_labels = ((pos_counts * 2 >= counts) & (counts > 0)).astype(np.uint8).reshape(dims)
        label_grid = LabelGrid(mapping, voxel_labels)
    return grid, label_grid, mapping


def upsample_labels(grid: LabelGrid, cloud: PointCloud) -> PointCloud:
    """Give each point the label of its voxel; points outside the grid get 0."""
    idx, inside = grid.mapping.point_to_index(cloud.positions)
    labels = np.zeros(len(cloud), dtype=np.uint8)
    if inside.any():
        sel = idx[inside]
        labels[inside] = grid.labels[sel[:, 0], sel[:, 1], sel[:, 2]]
    return cloud.with_labels(labels)


def grid_to_tensor(grid: VoxelGrid, dtype=np.float32) -> np.ndarray:
    """(1, 3, D, H, W) channel-major tensor; unoccupied voxels are zeros."""
    return np.ascontiguousarray(grid.color.transpose(3, 0, 1, 2)[None, ...].astype(dtype))


def label_to_tensor(grid: LabelGrid, dtype=np.float32) -> np.ndarray:
    """(1, 1, D, H, W) tensor of 0/1 values."""
    return np.ascontiguousarray(grid.labels[None, None, ...].astype(dtype))


def tensor_to_grid(tensor: np.ndarray, mapping: GridMapping) -> VoxelGrid:
    """Inverse of grid_to_tensor; occupancy inferred from nonzero color."""
    t = np.asarray(tensor)
    if t.shape != (1, 3, *mapping.dims):
        raise ShapeMismatch(f"expected (1, 3, {mapping.dims}), got {t.shape}")
    color = t[0].transpose(1, 2, 3, 0).astype(np.float64)
    occupancy = np.any(color != 0.0, axis=-1)
    return VoxelGrid(mapping, color, occupancy)


def prediction_to_label_grid(
    probs: np.ndarray, mapping: GridMapping, occupancy: np.ndarray, threshold: float = 0.5
) -> LabelGrid:
    """Binarize network output; positives are confined to occupied voxels."""
    p = np.asarray(probs)
    if p.shape != (1, 1, *mapping.dims):
        raise ShapeMismatch(f"expected (1, 1, {mapping.dims}), got {p.shape}")
    labels = ((p[0, 0] >= threshold) & np.asarray(occupancy, dtype=bool)).astype(np.uint8)
    return LabelGrid(mapping, labels)


def save_grid_sample(path, grid: VoxelGrid, labels: LabelGrid | None = None) -> None:
    """Write the training-sample sidecar: color, occupancy, and optional labels."""
    dims = grid.mapping.dims
    sections = []
    blobs = []
    offset = 0

    def add(name: str, arr: np.ndarray) -> None:
        nonlocal offset
        raw = np.ascontiguousarray(arr.astype("<f4")).tobytes()
        sections.append({"name": name, "shape": list(arr.shape), "offset": offset})
        blobs.append(raw)
        offset += len(raw)

    add("color", grid.color.transpose(3, 0, 1, 2))  # channel-major
    add("occupancy", grid.occupancy.astype(np.float32))
    if labels is not None:
        add("labels", labels.labels.astype(np.float32))
    header = {
        "format_version": GRID_FORMAT_VERSION,
        "dims": list(dims),
        "mapping": grid.mapping.to_dict(),
        "dtype": "float32",
        "sections": sections,
    }
    write_container(path, _GRID_MAGIC, header, b"".join(blobs))


def load_grid_sample(path) -> tuple[VoxelGrid, LabelGrid | None]:
    header, blob = read_container(path, _GRID_MAGIC)
    if header.get("format_version") != GRID_FORMAT_VERSION:
        raise VersionMismatch(f"unknown grid format version {header.get('format_version')!r}")
    mapping = GridMapping.from_dict(header["mapping"])

    arrays = {}
    for sec in header["sections"]:
        shape = tuple(sec["shape"])
        count = int(np.prod(shape))
        start = sec["offset"]
        arrays[sec["name"]] = np.frombuffer(blob, dtype="<f4", count=count, offset=start).reshape(shape)

    color = arrays["color"].transpose(1, 2, 3, 0).astype(np.float64)
    occupancy = arrays["occupancy"] > 0.5
    color[~occupancy] = 0.0  # exact zeros survive f32, but stay strict
    grid = VoxelGrid(mapping, color, occupancy)
    label_grid = None
    if "labels" in arrays:
        label_grid = LabelGrid(mapping, (arrays["labels"] > 0.5).astype(np.uint8))
    return grid, label_grid
