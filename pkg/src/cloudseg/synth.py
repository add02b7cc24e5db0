"""Synthetic surgical-scene generator.

Each scene is a colored shell ("target organ") resting on a noisy colored
plane ("background organ"), plus gray clutter outside the crop region.
Ground-truth labels are recorded at construction, so the generator doubles
as an oracle for the labeling pipeline and the trained network. Scenes can
carry grasp-style occlusion holes and a band cut that splits the shell into
two spatially separated parts, exercising the cluster-merge stage.

A dataset is a set of scenes observed from one fixed sensor pose. Raw
clouds are written in the sensor frame together with an annotation file
whose correspondences map first-scene landmarks back to the canonical
reference frame.
"""

from __future__ import annotations

import json
from dataclasses import dataclass, replace
from pathlib import Path

import numpy as np

from .align import CorrespondenceSet
from .cloud import Aabb, PointCloud, RigidTransform
from .labeler import LabelerParams, SeedAnnotation, annotation_to_dict
from .ply import save_ply

CROP_MIN = (-0.10, -0.10, -0.01)
CROP_MAX = (0.10, 0.10, 0.09)


@dataclass(frozen=True)
class SynthVariant:
    """One "gallbladder" appearance family; four of these mimic distinct subjects."""

    name: str
    sphere_color: tuple[float, float, float]
    plane_color: tuple[float, float, float]
    radius_range: tuple[float, float] = (0.020, 0.030)
    squash_range: tuple[float, float] = (0.6, 1.0)
    color_noise: float = 0.02
    hole_prob: float = 0.35  # chance of a grasp-style cap removal
    split_prob: float = 0.25  # chance of a band cut that splits the shell
    n_plane: int = 3000
    n_sphere: int = 2000
    n_clutter: int = 500


def default_variants() -> list[SynthVariant]:
    return [
        SynthVariant("variant_0", (0.75, 0.68, 0.25), (0.48, 0.26, 0.20)),
        SynthVariant("variant_1", (0.66, 0.72, 0.30), (0.45, 0.28, 0.22)),
        SynthVariant("variant_2", (0.80, 0.61, 0.22), (0.50, 0.24, 0.18)),
        SynthVariant("variant_3", (0.70, 0.74, 0.34), (0.46, 0.30, 0.24)),
    ]


@dataclass(frozen=True)
class SynthScene:
    cloud: PointCloud  # canonical frame, labels = construction truth
    landmarks: np.ndarray  # (L, 3) canonical-frame alignment landmarks


def _noisy_colors(base: tuple[float, float, float], n: int, sigma: float,
                  rng: np.random.Generator) -> np.ndarray:
    return np.clip(np.asarray(base) + rng.normal(0.0, sigma, size=(n, 3)), 0.0, 1.0)


def make_scene(variant: SynthVariant, rng: np.random.Generator) -> SynthScene:
    """One canonical-frame scene with construction-truth labels."""
    plane_xy = rng.uniform(-0.08, 0.08, size=(variant.n_plane, 2))
    plane_z = rng.normal(0.0, 0.0005, size=(variant.n_plane, 1))
    plane = np.hstack([plane_xy, plane_z])

    r = rng.uniform(*variant.radius_range)
    squash = rng.uniform(*variant.squash_range)
    center = np.array([rng.uniform(-0.03, 0.03), rng.uniform(-0.03, 0.03), r * squash * 0.95])
    dirs = rng.normal(size=(variant.n_sphere, 3))
    dirs /= np.linalg.norm(dirs, axis=1, keepdims=True)
    shell = center + dirs * np.array([r, r, r * squash])

    def _offsets_normalized(pts: np.ndarray) -> np.ndarray:
        rel = pts - center
        return rel / np.linalg.norm(rel, axis=1, keepdims=True)

    if rng.random() < variant.hole_prob:
        u = _unit(rng)
        shell = shell[_offsets_normalized(shell) @ u < np.cos(np.deg2rad(25.0))]
    if rng.random() < variant.split_prob:
        u = _unit(rng)
        shell = shell[np.abs(_offsets_normalized(shell) @ u) > np.sin(0.12)]
    shell = shell[shell[:, 2] > 0.0008]  # keep the shell strictly above the plane

    clutter_side = rng.integers(0, 4, size=variant.n_clutter)
    clutter = np.empty((variant.n_clutter, 3))
    offsets = np.array([[0.15, 0.0], [-0.15, 0.0], [0.0, 0.15], [0.0, -0.15]])
    clutter[:, :2] = offsets[clutter_side] + rng.uniform(-0.02, 0.02, size=(variant.n_clutter, 2))
    clutter[:, 2] = rng.uniform(0.0, 0.02, size=variant.n_clutter)

    positions = np.vstack([plane, shell, clutter])
    colors = np.vstack([
        _noisy_colors(variant.plane_color, plane.shape[0], variant.color_noise, rng),
        _noisy_colors(variant.sphere_color, shell.shape[0], variant.color_noise, rng),
        _noisy_colors((0.55, 0.55, 0.55), variant.n_clutter, variant.color_noise, rng),
    ])
    labels = np.concatenate([
        np.zeros(plane.shape[0], dtype=np.uint8),
        np.ones(shell.shape[0], dtype=np.uint8),
        np.zeros(variant.n_clutter, dtype=np.uint8),
    ])

    top = center + np.array([0.0, 0.0, r * squash])
    landmarks = np.array([
        [-0.08, -0.08, 0.0],
        [0.08, -0.08, 0.0],
        [-0.08, 0.08, 0.0],
        [0.08, 0.08, 0.0],
        top,
        center,
    ])
    return SynthScene(PointCloud(positions, colors, labels), landmarks)


def _unit(rng: np.random.Generator) -> np.ndarray:
    v = rng.normal(size=3)
    return v / np.linalg.norm(v)


def random_pose(rng: np.random.Generator, max_angle_deg: float = 25.0) -> RigidTransform:
    """Random sensor pose: moderate rotation plus a translation of up to 20 cm."""
    angles = np.deg2rad(rng.uniform(-max_angle_deg, max_angle_deg, size=3))
    cx, sx = np.cos(angles[0]), np.sin(angles[0])
    cy, sy = np.cos(angles[1]), np.sin(angles[1])
    cz, sz = np.cos(angles[2]), np.sin(angles[2])
    mx = np.array([[1, 0, 0], [0, cx, -sx], [0, sx, cx]])
    my = np.array([[cy, 0, sy], [0, 1, 0], [-sy, 0, cy]])
    mz = np.array([[cz, -sz, 0], [sz, cz, 0], [0, 0, 1]])
    return RigidTransform(mz @ my @ mx, rng.uniform(-0.2, 0.2, size=3))


def default_labeler_params(scale: float = 1.0) -> LabelerParams:
    """Growth parameters matched to the generator's point density.

    Adjacency is looser than the growth radius so split shells re-merge.
    Sparser clouds (scale < 1) need a wider neighbor radius (spacing grows
    with 1/sqrt(scale)) and a lower cluster-size floor.
    """
    radius = min(0.005 / np.sqrt(min(scale, 1.0)), 0.012)
    return LabelerParams(
        neighbor_radius=radius,
        adjacency_distance=max(0.008, 1.5 * radius),
        min_cluster_size=max(10, int(50 * min(scale, 1.0))),
    )


def generate_dataset(out_dir: Path | str, variant: SynthVariant, n_scenes: int, seed: int,
                     params: LabelerParams | None = None, encoding: str = "binary-le") -> Path:
    """Write raw scenes (with truth labels) and the dataset's annotation file."""
    out_dir = Path(out_dir)
    raw_dir = out_dir / "raw"
    raw_dir.mkdir(parents=True, exist_ok=True)
    rng = np.random.Generator(np.random.PCG64(seed))
    pose = random_pose(rng)
    params = params or default_labeler_params()

    first_landmarks = None
    for i in range(n_scenes):
        scene = make_scene(variant, rng)
        if first_landmarks is None:
            first_landmarks = scene.landmarks
        raw = PointCloud(pose.apply_points(scene.cloud.positions), scene.cloud.colors, scene.cloud.labels)
        save_ply(raw, raw_dir / f"frame_{i:04d}.ply", encoding=encoding)

    corr = CorrespondenceSet(source=pose.apply_points(first_landmarks), reference=first_landmarks)
    ann = SeedAnnotation(
        correspondences=corr,
        crop_box=Aabb(np.asarray(CROP_MIN), np.asarray(CROP_MAX)),
        seed_colors=np.asarray([variant.sphere_color]),
        params=params,
    )
    doc = {"schema_version": 1, "dataset": variant.name, **annotation_to_dict(ann)}
    with open(out_dir / "annotation.json", "w") as f:
        json.dump(doc, f, indent=2, sort_keys=True)
    with open(out_dir / "meta.json", "w") as f:
        json.dump({"variant": variant.name, "seed": seed, "scenes": n_scenes}, f, indent=2, sort_keys=True)
    return out_dir


def generate_datasets(out_root: Path | str, n_scenes: int = 10, seed: int = 7,
                      variants: list[SynthVariant] | None = None,
                      scale: float = 1.0) -> list[Path]:
    """One dataset per variant under out_root; `scale` shrinks point counts for tests."""
    out_root = Path(out_root)
    variants = variants if variants is not None else default_variants()
    params = default_labeler_params(scale)
    made = []
    for k, variant in enumerate(variants):
        if scale != 1.0:
            variant = replace(
                variant,
                n_plane=max(200, int(variant.n_plane * scale)),
                n_sphere=max(150, int(variant.n_sphere * scale)),
                n_clutter=max(50, int(variant.n_clutter * scale)),
            )
        made.append(generate_dataset(out_root / variant.name, variant, n_scenes,
                                     seed + 1000 * k, params=params))
    return made
