import math
from dataclasses import dataclass, field
from typing import Optional

import numpy as np

from app.core.config import DESCRIPTOR_BITS
from app.core.descriptors import DescriptorMatrix, as_descriptor_matrix

TWO_PI = 2.0 * math.pi


def wrap_angle(theta: float) -> float:
    """Normalize an angle to [0, 2π)."""
    wrapped = math.fmod(theta, TWO_PI)
    if wrapped < 0.0:
        wrapped += TWO_PI
    return 0.0 if wrapped >= TWO_PI else wrapped


@dataclass(frozen=True)
class KeyPoint:
    x: float
    y: float
    orientation: float = 0.0
    response: float = 0.0

    def __post_init__(self):
        if not (math.isfinite(self.x) and math.isfinite(self.y)):
            raise ValueError("Coordenadas de keypoint no finitas")
        if self.x < 0 or self.y < 0:
            raise ValueError(f"Keypoint fuera de la imagen: ({self.x}, {self.y})")
        object.__setattr__(self, "orientation", wrap_angle(self.orientation))

    @property
    def pt(self) -> tuple[float, float]:
        return (self.x, self.y)


@dataclass(frozen=True)
class LineSegment:
    start: tuple[float, float]
    end: tuple[float, float]
    orientation: float = field(init=False)
    length: float = field(init=False)

    def __post_init__(self):
        sx, sy = (float(v) for v in self.start)
        ex, ey = (float(v) for v in self.end)
        length = math.hypot(ex - sx, ey - sy)
        if not length > 0.0:
            raise ValueError("Segmento de longitud nula")
        object.__setattr__(self, "start", (sx, sy))
        object.__setattr__(self, "end", (ex, ey))
        object.__setattr__(self, "length", length)
        object.__setattr__(self, "orientation", wrap_angle(math.atan2(ey - sy, ex - sx)))

    def reversed(self) -> "LineSegment":
        return LineSegment(self.end, self.start)

    @property
    def midpoint(self) -> tuple[float, float]:
        return ((self.start[0] + self.end[0]) / 2.0, (self.start[1] + self.end[1]) / 2.0)


@dataclass(frozen=True, eq=False)
class FrameFeatures:
    """Keypoints and segments of one frame with their packed descriptors.

    Descriptor row ``i`` belongs to ``keypoints[i]`` (resp. ``lines[i]``).
    Arrays are made read-only on construction.
    """

    frame_id: int
    keypoints: tuple[KeyPoint, ...] = ()
    point_descriptors: Optional[DescriptorMatrix] = None
    lines: tuple[LineSegment, ...] = ()
    line_descriptors: Optional[DescriptorMatrix] = None
    descriptor_bits: int = DESCRIPTOR_BITS

    def __post_init__(self):
        object.__setattr__(self, "frame_id", int(self.frame_id))
        object.__setattr__(self, "keypoints", tuple(self.keypoints))
        object.__setattr__(self, "lines", tuple(self.lines))
        points = as_descriptor_matrix(self.point_descriptors, self.descriptor_bits)
        lines = as_descriptor_matrix(self.line_descriptors, self.descriptor_bits)
        if len(points) != len(self.keypoints):
            raise ValueError(
                f"{len(self.keypoints)} keypoints pero {len(points)} descriptores"
            )
        if len(lines) != len(self.lines):
            raise ValueError(f"{len(self.lines)} segmentos pero {len(lines)} descriptores")
        object.__setattr__(self, "point_descriptors", points)
        object.__setattr__(self, "line_descriptors", lines)

    @property
    def points(self) -> list:
        return list(zip(self.keypoints, self.point_descriptors))

    @property
    def line_pairs(self) -> list:
        return list(zip(self.lines, self.line_descriptors))

    @property
    def is_empty(self) -> bool:
        return not self.keypoints and not self.lines

    def point_coordinates(self) -> np.ndarray:
        if not self.keypoints:
            return np.zeros((0, 2))
        return np.array([kp.pt for kp in self.keypoints], dtype=np.float64)

    def line_endpoints(self) -> tuple[np.ndarray, np.ndarray]:
        if not self.lines:
            return np.zeros((0, 2)), np.zeros((0, 2))
        starts = np.array([ln.start for ln in self.lines], dtype=np.float64)
        ends = np.array([ln.end for ln in self.lines], dtype=np.float64)
        return starts, ends

    def line_orientations(self) -> np.ndarray:
        return np.array([ln.orientation for ln in self.lines], dtype=np.float64)

    def __eq__(self, other) -> bool:
        if not isinstance(other, FrameFeatures):
            return NotImplemented
        return (
            self.frame_id == other.frame_id
            and self.descriptor_bits == other.descriptor_bits
            and self.keypoints == other.keypoints
            and self.lines == other.lines
            and np.array_equal(self.point_descriptors, other.point_descriptors)
            and np.array_equal(self.line_descriptors, other.line_descriptors)
        )

    __hash__ = None
