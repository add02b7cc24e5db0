"""Training-time augmentation of labeled clouds.

Geometric transforms (rotation about the coordinate axes, uniform scaling,
elastic deformation) each fire independently with a configured probability
and act about the cloud centroid; photometric transforms (gamma, contrast,
brightness) are always applied, in that order, with a final clamp to [0, 1].
Labels ride along with their points and never change value.

The elastic deformation is a random displacement field on a coarse 4x4x4
control lattice spanning the cloud's bounding box, trilinearly interpolated
at each point. Displacement components are uniform in [-a, a] with
a = factor * (bounding-box diagonal / 10).
"""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from .cloud import PointCloud

LATTICE_SHAPE = (4, 4, 4)
AMPLITUDE_DIVISOR = 10.0


@dataclass(frozen=True)
class AugmentConfig:
    rot_range_deg: tuple[float, float] = (-30.0, 30.0)  # per axis
    scale_range: tuple[float, float] = (0.8, 1.2)
    elastic_range: tuple[float, float] = (0.0, 0.3)
    geometric_prob: float = 0.5
    gamma_range: tuple[float, float] = (0.7, 1.5)
    contrast_range: tuple[float, float] = (0.7, 1.3)
    brightness_range: tuple[float, float] = (-0.3, 0.3)

    def __post_init__(self) -> None:
        for name in ("rot_range_deg", "scale_range", "elastic_range",
                     "gamma_range", "contrast_range", "brightness_range"):
            lo, hi = getattr(self, name)
            if lo > hi:
                raise ValueError(f"{name} is not well-ordered")
        if not 0.0 <= self.geometric_prob <= 1.0:
            raise ValueError("geometric_prob must lie in [0, 1]")

    def to_dict(self) -> dict:
        return {
            "rot_range_deg": list(self.rot_range_deg),
            "scale_range": list(self.scale_range),
            "elastic_range": list(self.elastic_range),
            "geometric_prob": self.geometric_prob,
            "gamma_range": list(self.gamma_range),
            "contrast_range": list(self.contrast_range),
            "brightness_range": list(self.brightness_range),
        }

    @staticmethod
    def from_dict(d: dict) -> "AugmentConfig":
        kwargs = {k: tuple(v) if isinstance(v, list) else v for k, v in d.items()}
        return AugmentConfig(**kwargs)


@dataclass(frozen=True)
class RngState:
    """Seed plus generator algorithm; equal seeds give equal draw sequences."""

    seed: int
    algorithm: str = "pcg64"

    def generator(self) -> np.random.Generator:
        if self.algorithm != "pcg64":
            raise ValueError(f"unknown rng algorithm {self.algorithm!r}")
        return np.random.Generator(np.random.PCG64(self.seed))


@dataclass(frozen=True, eq=False)
class AugmentDraw:
    """All random choices of one augmentation, fixed before application."""

    apply_rotation: bool
    angles_deg: np.ndarray  # (3,) rx, ry, rz
    apply_scale: bool
    scale: float
    apply_elastic: bool
    elastic_factor: float
    lattice_units: np.ndarray | None  # (4, 4, 4, 3) in [-1, 1], None when elastic off
    gamma: float
    contrast: float
    brightness: float


def draw_params(cfg: AugmentConfig, rng: np.random.Generator) -> AugmentDraw:
    """Sample one augmentation in a fixed draw order (reproducible per seed)."""
    apply_rotation = bool(rng.random() < cfg.geometric_prob)
    angles = rng.uniform(*cfg.rot_range_deg, size=3)
    apply_scale = bool(rng.random() < cfg.geometric_prob)
    scale = float(rng.uniform(*cfg.scale_range))
    apply_elastic = bool(rng.random() < cfg.geometric_prob)
    factor = float(rng.uniform(*cfg.elastic_range))
    lattice = rng.uniform(-1.0, 1.0, size=(*LATTICE_SHAPE, 3)) if apply_elastic else None
    gamma = float(rng.uniform(*cfg.gamma_range))
    contrast = float(rng.uniform(*cfg.contrast_range))
    brightness = float(rng.uniform(*cfg.brightness_range))
    return AugmentDraw(apply_rotation, angles, apply_scale, scale,
                       apply_elastic, factor, lattice, gamma, contrast, brightness)


def rotation_matrix(angles_deg: np.ndarray) -> np.ndarray:
    """Rz @ Ry @ Rx for per-axis angles in degrees."""
    rx, ry, rz = np.deg2rad(np.asarray(angles_deg, dtype=np.float64))
    cx, sx = np.cos(rx), np.sin(rx)
    cy, sy = np.cos(ry), np.sin(ry)
    cz, sz = np.cos(rz), np.sin(rz)
    mx = np.array([[1, 0, 0], [0, cx, -sx], [0, sx, cx]])
    my = np.array([[cy, 0, sy], [0, 1, 0], [-sy, 0, cy]])
    mz = np.array([[cz, -sz, 0], [sz, cz, 0], [0, 0, 1]])
    return mz @ my @ mx


def interpolate_lattice(points: np.ndarray, lo: np.ndarray, hi: np.ndarray,
                        displacements: np.ndarray) -> np.ndarray:
    """Trilinear interpolation of per-control-point displacement vectors."""
    nx, ny, nz = (s - 1 for s in displacements.shape[:3])
    extent = np.maximum(hi - lo, 1e-12)
    u = (points - lo) / extent * np.array([nx, ny, nz], dtype=np.float64)
    cell = np.minimum(np.floor(u).astype(np.int64), np.array([nx, ny, nz]) - 1)
    cell = np.maximum(cell, 0)
    frac = u - cell

    out = np.zeros_like(points)
    for dx in (0, 1):
        wx = frac[:, 0] if dx else 1.0 - frac[:, 0]
        for dy in (0, 1):
            wy = frac[:, 1] if dy else 1.0 - frac[:, 1]
            for dz in (0, 1):
                wz = frac[:, 2] if dz else 1.0 - frac[:, 2]
                w = (wx * wy * wz)[:, None]
                out += w * displacements[cell[:, 0] + dx, cell[:, 1] + dy, cell[:, 2] + dz]
    return out


def elastic_deform(cloud: PointCloud, factor: float, rng: np.random.Generator) -> PointCloud:
    """Coarse-lattice random deformation; factor 0 is the identity."""
    if factor < 0:
        raise ValueError("elastic factor must be >= 0")
    lattice = rng.uniform(-1.0, 1.0, size=(*LATTICE_SHAPE, 3))
    return _apply_elastic(cloud, factor, lattice)


def _apply_elastic(cloud: PointCloud, factor: float, lattice_units: np.ndarray) -> PointCloud:
    if len(cloud) == 0 or factor == 0.0:
        return cloud
    box = cloud.aabb()
    amplitude = factor * box.diagonal() / AMPLITUDE_DIVISOR
    disp = lattice_units * amplitude
    moved = cloud.positions + interpolate_lattice(cloud.positions, box.min, box.max, disp)
    return PointCloud(moved, cloud.colors, cloud.labels)


def photometric(colors: np.ndarray, gamma: float, contrast: float, brightness: float) -> np.ndarray:
    """Per-channel c -> clamp(contrast * (c^gamma - 0.5) + 0.5 + brightness, 0, 1)."""
    c = np.asarray(colors, dtype=np.float64)
    out = contrast * (np.power(c, gamma) - 0.5) + 0.5 + brightness
    return np.clip(out, 0.0, 1.0)


def apply_draw(cloud: PointCloud, draw: AugmentDraw) -> PointCloud:
    positions = cloud.positions
    if len(cloud):
        centroid = positions.mean(axis=0)
        if draw.apply_rotation:
            positions = (positions - centroid) @ rotation_matrix(draw.angles_deg).T + centroid
        if draw.apply_scale:
            positions = (positions - centroid) * draw.scale + centroid
    out = PointCloud(positions, cloud.colors, cloud.labels)
    if draw.apply_elastic:
        out = _apply_elastic(out, draw.elastic_factor, draw.lattice_units)
    colors = photometric(out.colors, draw.gamma, draw.contrast, draw.brightness)
    return PointCloud(out.positions, colors, out.labels)


def augment_sample(cloud: PointCloud, cfg: AugmentConfig, rng: RngState) -> PointCloud:
    """One augmented copy of a labeled cloud; fully determined by (cloud, cfg, seed)."""
    if cloud.labels is None:
        raise ValueError("augment_sample expects a labeled cloud")
    return apply_draw(cloud, draw_params(cfg, rng.generator()))


def derive_seed(global_seed: int, epoch: int, index: int) -> int:
    """Stable per-sample seed so samples can be prepared in any order."""
    mix = np.random.SeedSequence(entropy=global_seed, spawn_key=(epoch, index))
    return int(mix.generate_state(1, dtype=np.uint64)[0])
