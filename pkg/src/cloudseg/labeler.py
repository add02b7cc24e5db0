"""Weakly-supervised label bootstrap.

A scene is aligned to the reference frame, cropped, split into clusters by
color-based 3D region growing, filtered against human-picked seed colors,
and the surviving clusters are merged into one target cluster by iterating
"absorb everything adjacent" to a fixpoint. Points of that cluster get
label 1, everything else 0.

Region growing expands a cluster breadth-first over spatial neighbors; a
candidate joins when its RGB distance to the cluster's running mean color
is at or below the color threshold. The mean is refreshed after each
frontier point's batch of accepted neighbors. Seed points are taken in
ascending index order, which makes the whole pass deterministic.
"""

from __future__ import annotations

from collections import deque
from dataclasses import dataclass, field

import numpy as np

from .align import CorrespondenceSet
from .cloud import Aabb, PointCloud, RigidTransform, apply_transform, crop
from .errors import EmptyAfterCrop, EmptyCloud, NoClusters
from .spatial import VoxelHashGrid, any_pair_within


@dataclass(frozen=True)
class LabelerParams:
    neighbor_radius: float = 0.005  # meters
    color_threshold: float = 0.12  # Euclidean RGB distance for growth
    seed_color_tolerance: float = 0.20  # max distance of cluster mean to a seed color
    adjacency_distance: float = 0.005  # meters, cluster merge threshold
    min_cluster_size: int = 50

    def __post_init__(self) -> None:
        for name in ("neighbor_radius", "color_threshold", "seed_color_tolerance", "adjacency_distance"):
            if getattr(self, name) <= 0:
                raise ValueError(f"{name} must be positive")
        if self.min_cluster_size < 1:
            raise ValueError("min_cluster_size must be >= 1")

    def to_dict(self) -> dict:
        return {
            "neighbor_radius": self.neighbor_radius,
            "color_threshold": self.color_threshold,
            "seed_color_tolerance": self.seed_color_tolerance,
            "adjacency_distance": self.adjacency_distance,
            "min_cluster_size": self.min_cluster_size,
        }

    @staticmethod
    def from_dict(d: dict) -> "LabelerParams":
        return LabelerParams(**d)


@dataclass(frozen=True, eq=False)
class Cluster:
    """Non-empty set of point indices into a cloud, plus their mean color."""

    point_indices: np.ndarray  # sorted ascending, unique
    mean_color: np.ndarray  # (3,)

    def __post_init__(self) -> None:
        idx = np.asarray(self.point_indices, dtype=np.int64).reshape(-1)
        if idx.size == 0:
            raise ValueError("cluster must be non-empty")
        object.__setattr__(self, "point_indices", idx)
        object.__setattr__(self, "mean_color", np.asarray(self.mean_color, dtype=np.float64).reshape(3))

    def __len__(self) -> int:
        return self.point_indices.size


@dataclass(frozen=True, eq=False)
class SeedAnnotation:
    """The per-dataset human input: correspondences, crop box, seed colors, parameters."""

    correspondences: CorrespondenceSet
    crop_box: Aabb
    seed_colors: np.ndarray  # (K, 3) in [0, 1]
    params: LabelerParams = field(default_factory=LabelerParams)

    def __post_init__(self) -> None:
        seeds = np.asarray(self.seed_colors, dtype=np.float64).reshape(-1, 3)
        if seeds.shape[0] < 1:
            raise ValueError("at least one seed color is required")
        if seeds.min() < 0.0 or seeds.max() > 1.0:
            raise ValueError("seed colors must lie in [0, 1]")
        object.__setattr__(self, "seed_colors", seeds)


def region_grow(cloud: PointCloud, params: LabelerParams) -> list[Cluster]:
    """Partition color-coherent connected components; tiny clusters are dropped.

    Every point joins at most one cluster. Points whose cluster fell below
    min_cluster_size stay visited and are not regrown.
    """
    n = len(cloud)
    if n == 0:
        raise EmptyCloud("region growing needs a non-empty cloud")
    positions = cloud.positions
    colors = cloud.colors
    grid = VoxelHashGrid(positions, params.neighbor_radius)
    assigned = np.zeros(n, dtype=bool)
    clusters: list[Cluster] = []

    for seed in range(n):
        if assigned[seed]:
            continue
        member = [seed]
        assigned[seed] = True
        color_sum = colors[seed].copy()
        queue = deque([seed])
        while queue:
            current = queue.popleft()
            neighbors = grid.query_radius(positions[current], params.neighbor_radius)
            neighbors = neighbors[~assigned[neighbors]]
            if neighbors.size == 0:
                continue
            mean = color_sum / len(member)
            dist = np.linalg.norm(colors[neighbors] - mean, axis=1)
            accepted = neighbors[dist <= params.color_threshold]
            if accepted.size == 0:
                continue
            assigned[accepted] = True
            member.extend(int(i) for i in accepted)
            color_sum += colors[accepted].sum(axis=0)
            queue.extend(int(i) for i in accepted)
        if len(member) >= params.min_cluster_size:
            idx = np.sort(np.asarray(member, dtype=np.int64))
            clusters.append(Cluster(idx, colors[idx].mean(axis=0)))
    return clusters


def filter_by_seed_colors(
    clusters: list[Cluster], seed_colors: np.ndarray, tolerance: float
) -> list[Cluster]:
    """Keep clusters whose mean color is within tolerance of some seed color."""
    seeds = np.asarray(seed_colors, dtype=np.float64).reshape(-1, 3)
    if seeds.shape[0] < 1:
        raise ValueError("at least one seed color is required")
    kept = []
    for cluster in clusters:
        if np.linalg.norm(seeds - cluster.mean_color, axis=1).min() <= tolerance:
            kept.append(cluster)
    return kept


def merge_adjacent(
    clusters: list[Cluster], cloud: PointCloud, adjacency_distance: float
) -> Cluster:
    """Grow the largest cluster by absorbing adjacent clusters until a fixpoint.

    Two clusters are adjacent when the smallest distance between any two of
    their points is at or below adjacency_distance. Absorption is batched per
    iteration, so the result does not depend on input ordering. Size ties for
    the initial cluster break toward the lowest smallest point index.
    """
    if not clusters:
        raise NoClusters("no clusters to merge")
    order = sorted(range(len(clusters)), key=lambda i: (-len(clusters[i]), int(clusters[i].point_indices[0])))
    target = order[0]
    merged = clusters[target].point_indices
    remaining = [clusters[i] for i in order[1:]]

    positions = cloud.positions
    while remaining:
        absorbed = [
            c for c in remaining
            if any_pair_within(positions[merged], positions[c.point_indices], adjacency_distance)
        ]
        if not absorbed:
            break
        merged = np.sort(np.concatenate([merged] + [c.point_indices for c in absorbed]))
        absorbed_ids = {id(c) for c in absorbed}
        remaining = [c for c in remaining if id(c) not in absorbed_ids]
    return Cluster(merged, cloud.colors[merged].mean(axis=0))


@dataclass(frozen=True, eq=False)
class BootstrapResult:
    cloud: PointCloud  # aligned, cropped, labeled
    cluster_count: int  # clusters found by region growing
    matched_cluster_count: int  # clusters surviving the seed-color filter
    positive_fraction: float


def bootstrap_report(
    raw: PointCloud, ann: SeedAnnotation, reference_transform: RigidTransform
) -> BootstrapResult:
    """Run align, crop, grow, filter, merge on one raw scene and report stats."""
    aligned = apply_transform(raw, reference_transform)
    cropped = crop(aligned, ann.crop_box)
    if len(cropped) == 0:
        raise EmptyAfterCrop("crop box retained no points")
    clusters = region_grow(cropped, ann.params)
    matched = filter_by_seed_colors(clusters, ann.seed_colors, ann.params.seed_color_tolerance)
    if not matched:
        raise NoClusters("no cluster matches the seed colors")
    target = merge_adjacent(matched, cropped, ann.params.adjacency_distance)
    labels = np.zeros(len(cropped), dtype=np.uint8)
    labels[target.point_indices] = 1
    labeled = cropped.with_labels(labels)
    return BootstrapResult(
        cloud=labeled,
        cluster_count=len(clusters),
        matched_cluster_count=len(matched),
        positive_fraction=float(labels.mean()),
    )


def bootstrap_labels(
    raw: PointCloud, ann: SeedAnnotation, reference_transform: RigidTransform
) -> PointCloud:
    """Aligned, cropped cloud with label 1 exactly on the merged target cluster."""
    return bootstrap_report(raw, ann, reference_transform).cloud


def annotation_to_dict(ann: SeedAnnotation) -> dict:
    return {
        "correspondences": [
            {"source": list(map(float, s)), "reference": list(map(float, r))}
            for s, r in zip(ann.correspondences.source, ann.correspondences.reference)
        ],
        "crop_box": {"min": list(map(float, ann.crop_box.min)), "max": list(map(float, ann.crop_box.max))},
        "seed_colors": [list(map(float, c)) for c in ann.seed_colors],
        "params": ann.params.to_dict(),
    }


def annotation_from_dict(d: dict) -> SeedAnnotation:
    pairs = d["correspondences"]
    corr = CorrespondenceSet(
        source=np.array([p["source"] for p in pairs], dtype=np.float64),
        reference=np.array([p["reference"] for p in pairs], dtype=np.float64),
    )
    box = Aabb(np.asarray(d["crop_box"]["min"]), np.asarray(d["crop_box"]["max"]))
    params = LabelerParams.from_dict(d["params"]) if "params" in d else LabelerParams()
    return SeedAnnotation(corr, box, np.asarray(d["seed_colors"]), params)
