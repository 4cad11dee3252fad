import logging
import time
from concurrent.futures import ThreadPoolExecutor
from dataclasses import dataclass
from pathlib import Path

import cv2
import numpy as np

from app.core.config import IMAGE_SUFFIXES, WORKERS
from app.core.errors import ImageReadError
from app.features.lines import LineExtractor
from app.features.points import PointExtractor
from app.schemas.config import ExtractionConfig
from app.schemas.features import FrameFeatures

logger = logging.getLogger(__name__)


def to_gray(image: np.ndarray) -> np.ndarray:
    """8-bit single channel; colour input is converted with BT.601 luma."""
    if image.ndim == 3:
        if image.shape[2] == 4:
            image = cv2.cvtColor(image, cv2.COLOR_BGRA2BGR)
        image = cv2.cvtColor(image, cv2.COLOR_BGR2GRAY)
    if image.dtype != np.uint8:
        info = np.iinfo(image.dtype) if np.issubdtype(image.dtype, np.integer) else None
        top = info.max if info else max(float(image.max()), 1.0)
        image = np.clip(image.astype(np.float64) * (255.0 / top), 0, 255).astype(np.uint8)
    return image


def read_image(path: Path | str) -> np.ndarray:
    path = Path(path)
    if not path.is_file():
        raise ImageReadError(path, "no existe")
    image = cv2.imread(str(path), cv2.IMREAD_UNCHANGED)
    if image is None or image.size == 0:
        raise ImageReadError(path, "formato de imagen no reconocido o fichero corrupto")
    return to_gray(image)


def list_images(directory: Path | str) -> list[Path]:
    """Images in lexicographic filename order; position defines the frame id."""
    directory = Path(directory)
    return sorted(p for p in directory.iterdir()
                  if p.is_file() and p.suffix.lower() in IMAGE_SUFFIXES)


@dataclass(frozen=True)
class ExtractionTiming:
    points_ms: float = 0.0
    lines_ms: float = 0.0
    total_ms: float = 0.0


def _timed(fn, gray):
    start = time.perf_counter()
    result = fn(gray)
    return result, (time.perf_counter() - start) * 1000.0


class FeatureExtractor:
    def __init__(self, cfg: ExtractionConfig = ExtractionConfig(),
                 use_points: bool = True, use_lines: bool = True):
        self.cfg = cfg
        self.points = PointExtractor(cfg) if use_points else None
        self.lines = LineExtractor(cfg) if use_lines else None

    def extract_timed(self, gray: np.ndarray, frame_id: int) -> tuple[FrameFeatures, ExtractionTiming]:
        """Points and lines are extracted concurrently; each side is timed separately."""
        n_bytes = self.cfg.descriptor_bits // 8
        empty = (((), np.zeros((0, n_bytes), dtype=np.uint8)), 0.0)
        start = time.perf_counter()
        with ThreadPoolExecutor(max_workers=WORKERS) as pool:
            pts = pool.submit(_timed, self.points.extract, gray) if self.points else None
            lns = pool.submit(_timed, self.lines.extract, gray) if self.lines else None
            (keypoints, point_desc), points_ms = pts.result() if pts else empty
            (segments, line_desc), lines_ms = lns.result() if lns else empty
        total_ms = (time.perf_counter() - start) * 1000.0
        features = FrameFeatures(
            frame_id=frame_id,
            keypoints=keypoints,
            point_descriptors=point_desc,
            lines=segments,
            line_descriptors=line_desc,
            descriptor_bits=self.cfg.descriptor_bits,
        )
        if features.is_empty:
            logger.warning("Frame %d sin puntos ni segmentos", frame_id)
        return features, ExtractionTiming(points_ms, lines_ms, total_ms)

    def extract(self, gray: np.ndarray, frame_id: int) -> FrameFeatures:
        features, _ = self.extract_timed(gray, frame_id)
        return features
