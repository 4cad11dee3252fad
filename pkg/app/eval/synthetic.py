"""Synthetic corridor sequences with planted revisits.

The camera slides along the world x axis looking down +z at a wall of point
and segment landmarks. The schedule is: a forward pass, a block of revisits
that re-observe early frames (with a small offset and optional roll), and a
continuation far enough down the corridor that it never sees the earlier
landmarks again. Observations carry descriptor bit noise and pixel noise.
"""
import logging
import math
from dataclasses import dataclass
from pathlib import Path

import numpy as np
from pydantic import BaseModel, ConfigDict, Field, model_validator

from app.core.config import DEFAULT_SEED, DESCRIPTOR_BITS, FEATURE_FILE_SUFFIX
from app.core.descriptors import perturb, random_descriptors
from app.eval.ground_truth import GroundTruth
from app.features.storage import save_features
from app.schemas.features import TWO_PI, FrameFeatures, KeyPoint, LineSegment

logger = logging.getLogger(__name__)

WIDTH, HEIGHT = 640, 480
_MARGIN = 2.0
_ALIAS_BITS = 2


class SyntheticConfig(BaseModel):
    model_config = ConfigDict(extra="forbid", frozen=True)

    frames: int = Field(200, ge=1)
    revisits: int = Field(20, ge=0)
    revisit_start: int = Field(10, ge=0)
    step: float = Field(0.5, gt=0)
    gating_window: int = Field(60, ge=0)
    focal: float = Field(500.0, gt=0)
    depth_range: tuple[float, float] = (8.0, 16.0)
    height: float = Field(3.0, gt=0)
    point_density: float = Field(10.0, ge=0)
    line_density: float = Field(2.5, ge=0)
    line_length: tuple[float, float] = (1.0, 2.0)
    descriptor_noise_bits: int = Field(8, ge=0)
    pixel_noise: float = Field(0.5, ge=0)
    revisit_offset: float = 0.5
    roll_deg: float = 0.0
    aliasing: float = Field(0.0, ge=0, le=1)
    min_shared: int = Field(12, ge=1)
    descriptor_bits: int = Field(DESCRIPTOR_BITS, gt=0, multiple_of=8)
    seed: int = DEFAULT_SEED

    @model_validator(mode="after")
    def _schedule_fits(self):
        if self.revisits and self.forward_frames - self.revisit_start <= self.gating_window:
            raise ValueError("las revisitas caen dentro de la ventana de exclusión")
        if self.revisits and self.revisit_start + self.revisits > self.forward_frames:
            raise ValueError("las revisitas apuntan a frames posteriores al recorrido de ida")
        if self.depth_range[0] <= 0 or self.depth_range[1] < self.depth_range[0]:
            raise ValueError("depth_range inválido")
        return self

    @property
    def forward_frames(self) -> int:
        return (self.frames * 3) // 5

    @property
    def intrinsics(self) -> np.ndarray:
        return np.array([[self.focal, 0.0, WIDTH / 2], [0.0, self.focal, HEIGHT / 2], [0.0, 0.0, 1.0]])

    @property
    def view_span(self) -> float:
        """Widest x extent seen from one position, plus one unit."""
        return 2.0 * (WIDTH / 2) / self.focal * self.depth_range[1] + 1.0


@dataclass(frozen=True)
class CameraPose:
    center: np.ndarray
    roll: float = 0.0

    @property
    def rotation(self) -> np.ndarray:
        c, s = math.cos(self.roll), math.sin(self.roll)
        return np.array([[c, -s, 0.0], [s, c, 0.0], [0.0, 0.0, 1.0]])


@dataclass(frozen=True)
class SyntheticSequence:
    config: SyntheticConfig
    frames: tuple[FrameFeatures, ...]
    poses: tuple[CameraPose, ...]
    visible: tuple[frozenset, ...]
    ground_truth: GroundTruth
    revisit_of: dict

    def save(self, directory: Path | str) -> list[Path]:
        directory = Path(directory)
        directory.mkdir(parents=True, exist_ok=True)
        width = len(str(max(len(self.frames) - 1, 0)))
        paths = []
        for f in self.frames:
            path = directory / f"{f.frame_id:0{max(width, 6)}d}{FEATURE_FILE_SUFFIX}"
            save_features(f, path)
            paths.append(path)
        self.ground_truth.save(directory / "groundtruth.txt")
        logger.info("Secuencia sintética guardada en %s (%d frames)", directory, len(paths))
        return paths


class _World:
    def __init__(self, cfg: SyntheticConfig, x_min: float, x_max: float, rng: np.random.Generator):
        z_lo, z_hi = cfg.depth_range
        extent = x_max - x_min
        n_points = int(round(cfg.point_density * extent))
        self.points = np.column_stack([
            rng.uniform(x_min, x_max, n_points),
            rng.uniform(-cfg.height, cfg.height, n_points),
            rng.uniform(z_lo, z_hi, n_points),
        ])
        self.point_orientation = rng.uniform(0.0, TWO_PI, n_points)
        self.point_desc = random_descriptors(rng, n_points, cfg.descriptor_bits)

        n_lines = int(round(cfg.line_density * extent))
        centers = np.column_stack([
            rng.uniform(x_min, x_max, n_lines),
            rng.uniform(-cfg.height, cfg.height, n_lines),
            rng.uniform(z_lo, z_hi, n_lines),
        ])
        phi = rng.uniform(0.0, TWO_PI, n_lines)
        half = rng.uniform(*cfg.line_length, n_lines) / 2.0
        line_desc = random_descriptors(rng, n_lines, cfg.descriptor_bits)

        n_alias = int(round(cfg.aliasing * n_lines))
        if n_alias:
            source = np.sort(rng.choice(n_lines, size=n_alias, replace=False))
            shift = rng.uniform(-0.6, 0.6, (n_alias, 2))
            centers = np.vstack([centers, centers[source] + np.column_stack([shift, np.zeros(n_alias)])])
            phi = np.concatenate([phi, phi[source] + math.pi / 2])
            half = np.concatenate([half, half[source]])
            line_desc = np.vstack([line_desc] + [
                perturb(line_desc[s], rng, _ALIAS_BITS)[None, :] for s in source
            ])
        direction = np.column_stack([np.cos(phi), np.sin(phi), np.zeros(len(phi))])
        self.line_start = centers - direction * half[:, None]
        self.line_end = centers + direction * half[:, None]
        self.line_desc = line_desc


def _project(K: np.ndarray, pose: CameraPose, X: np.ndarray) -> tuple[np.ndarray, np.ndarray]:
    cam = (X - pose.center) @ pose.rotation.T
    with np.errstate(divide="ignore", invalid="ignore"):
        uv = (cam @ K.T)[:, :2] / cam[:, 2:3]
    return uv, cam[:, 2]


def _inside(uv: np.ndarray, depth: np.ndarray) -> np.ndarray:
    return (
        (depth > 0)
        & (uv[:, 0] >= _MARGIN) & (uv[:, 0] < WIDTH - _MARGIN)
        & (uv[:, 1] >= _MARGIN) & (uv[:, 1] < HEIGHT - _MARGIN)
    )


def _schedule(cfg: SyntheticConfig) -> tuple[list[CameraPose], dict[int, int]]:
    n_forward = cfg.forward_frames
    poses = [CameraPose(np.array([cfg.step * k, 0.0, 0.0])) for k in range(n_forward)]
    revisit_of = {}
    roll = math.radians(cfg.roll_deg)
    for i in range(min(cfg.revisits, cfg.frames - n_forward)):
        source = cfg.revisit_start + i
        revisit_of[len(poses)] = source
        center = poses[source].center + np.array([0.0, cfg.revisit_offset, 0.0])
        poses.append(CameraPose(center, roll))
    resume = cfg.step * n_forward + cfg.view_span
    for k in range(cfg.frames - len(poses)):
        poses.append(CameraPose(np.array([resume + cfg.step * k, 0.0, 0.0])))
    return poses, revisit_of


def generate_sequence(cfg: SyntheticConfig = SyntheticConfig()) -> SyntheticSequence:
    poses, revisit_of = _schedule(cfg)
    xs = [p.center[0] for p in poses]
    world = _World(cfg, min(xs) - cfg.view_span / 2, max(xs) + cfg.view_span / 2,
                   np.random.default_rng(cfg.seed))
    K = cfg.intrinsics
    n_points = len(world.points)

    frames, visible = [], []
    for frame_id, pose in enumerate(poses):
        rng = np.random.default_rng([cfg.seed, 1, frame_id])
        uv, depth = _project(K, pose, world.points)
        uv = uv + rng.normal(0.0, cfg.pixel_noise, uv.shape)
        seen_points = np.flatnonzero(_inside(uv, depth))
        keypoints = tuple(
            KeyPoint(x=float(uv[i, 0]), y=float(uv[i, 1]),
                     orientation=float(world.point_orientation[i] + pose.roll + rng.normal(0.0, 0.02)),
                     response=1.0)
            for i in seen_points
        )
        point_desc = [perturb(world.point_desc[i], rng, cfg.descriptor_noise_bits) for i in seen_points]

        us, ds = _project(K, pose, world.line_start)
        ue, de = _project(K, pose, world.line_end)
        us = us + rng.normal(0.0, cfg.pixel_noise, us.shape)
        ue = ue + rng.normal(0.0, cfg.pixel_noise, ue.shape)
        seen_lines = np.flatnonzero(_inside(us, ds) & _inside(ue, de))
        lines = tuple(LineSegment(tuple(us[i]), tuple(ue[i])) for i in seen_lines)
        line_desc = [perturb(world.line_desc[i], rng, cfg.descriptor_noise_bits) for i in seen_lines]

        n_bytes = cfg.descriptor_bits // 8
        frames.append(FrameFeatures(
            frame_id=frame_id,
            keypoints=keypoints,
            point_descriptors=np.array(point_desc, dtype=np.uint8).reshape(-1, n_bytes),
            lines=lines,
            line_descriptors=np.array(line_desc, dtype=np.uint8).reshape(-1, n_bytes),
            descriptor_bits=cfg.descriptor_bits,
        ))
        visible.append(frozenset(seen_points.tolist()) | frozenset((n_points + seen_lines).tolist()))

    pairs = set()
    for q in range(len(frames)):
        for m in range(q - cfg.gating_window):
            if len(visible[q] & visible[m]) >= cfg.min_shared:
                pairs.add((q, m))
    gt = GroundTruth(frozenset(pairs), 0)
    logger.debug("Secuencia sintética: %d frames, %d consultas con cierre", len(frames), len(gt.queries))
    return SyntheticSequence(cfg, tuple(frames), tuple(poses), tuple(visible), gt, revisit_of)
