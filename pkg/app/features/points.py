"""Oriented FAST corners with a steered binary intensity-comparison descriptor.

Same contract as ORB (rotation-tolerant, 256-bit, Hamming-comparable) without
aiming at byte compatibility with OpenCV's implementation.
"""
import logging

import cv2
import numpy as np
from scipy.ndimage import gaussian_filter, maximum_filter

from app.schemas.config import ExtractionConfig
from app.schemas.features import TWO_PI, KeyPoint

logger = logging.getLogger(__name__)

# Bresenham circle of radius 3, clockwise from the top
_CIRCLE = np.array([
    (0, -3), (1, -3), (2, -2), (3, -1), (3, 0), (3, 1), (2, 2), (1, 3),
    (0, 3), (-1, 3), (-2, 2), (-3, 1), (-3, 0), (-3, -1), (-2, -2), (-1, -3),
])
_ARC = 9
_PATTERN_SEED = 0x0B1D


def _has_arc(mask: np.ndarray) -> np.ndarray:
    doubled = np.concatenate([mask, mask[:_ARC - 1]], axis=0)
    run = np.zeros(mask.shape[1:], dtype=np.int16)
    best = np.zeros_like(run)
    for ring_pixel in doubled:
        run = np.where(ring_pixel, run + 1, 0).astype(np.int16)
        np.maximum(best, run, out=best)
    return best >= _ARC


def fast_response(img: np.ndarray, threshold: float) -> np.ndarray:
    """FAST-9 score map: zero where no corner, else the summed excess contrast."""
    h, w = img.shape
    out = np.zeros((h, w), dtype=np.float64)
    if h < 7 or w < 7:
        return out
    center = img[3:h - 3, 3:w - 3]
    ring = np.stack([img[3 + dy:h - 3 + dy, 3 + dx:w - 3 + dx] for dx, dy in _CIRCLE])
    corner = _has_arc(ring > center + threshold) | _has_arc(ring < center - threshold)
    excess = np.maximum(np.abs(ring - center) - threshold, 0.0).sum(axis=0)
    out[3:h - 3, 3:w - 3] = np.where(corner, excess, 0.0)
    return out


class PointExtractor:
    def __init__(self, cfg: ExtractionConfig = ExtractionConfig()):
        self.cfg = cfg
        self.radius = cfg.patch_size // 2
        self.border = self.radius + 1
        oy, ox = np.mgrid[-self.radius:self.radius + 1, -self.radius:self.radius + 1]
        inside = ox ** 2 + oy ** 2 <= self.radius ** 2
        self._offset_x = ox[inside]
        self._offset_y = oy[inside]
        self._moment_x = self._offset_x.astype(np.float64)
        self._moment_y = self._offset_y.astype(np.float64)
        self._pattern = self._make_pattern(cfg.descriptor_bits)

    def _make_pattern(self, n_bits: int) -> np.ndarray:
        """Fixed comparison pattern: n_bits pairs of (dx1, dy1, dx2, dy2)."""
        rng = np.random.default_rng(_PATTERN_SEED)
        limit = self.radius - 2
        pts = rng.normal(0.0, self.cfg.patch_size / 5.0, size=(n_bits, 2, 2))
        norms = np.linalg.norm(pts, axis=2, keepdims=True)
        pts = np.where(norms > limit, pts * (limit / np.maximum(norms, 1e-9)), pts)
        return pts.reshape(n_bits, 4)

    def _pyramid(self, gray: np.ndarray):
        level_img = gray.astype(np.float32)
        scale = 1.0
        for level in range(self.cfg.pyramid_levels):
            h, w = level_img.shape
            if h < self.cfg.patch_size + 2 or w < self.cfg.patch_size + 2:
                return
            yield level, scale, level_img
            scale *= self.cfg.scale_factor
            size = (int(round(gray.shape[1] / scale)), int(round(gray.shape[0] / scale)))
            level_img = cv2.resize(gray, size, interpolation=cv2.INTER_LINEAR).astype(np.float32)

    def _detect(self, img: np.ndarray) -> tuple[np.ndarray, np.ndarray, np.ndarray]:
        response = fast_response(img, float(self.cfg.fast_threshold))
        peaks = (response > 0) & (response == maximum_filter(response, size=3))
        b = self.border
        peaks[:b, :] = False
        peaks[-b:, :] = False
        peaks[:, :b] = False
        peaks[:, -b:] = False
        ys, xs = np.nonzero(peaks)
        return xs, ys, response[ys, xs]

    def _orientation(self, img: np.ndarray, xs: np.ndarray, ys: np.ndarray) -> np.ndarray:
        patches = img[ys[:, None] + self._offset_y[None, :],
                      xs[:, None] + self._offset_x[None, :]].astype(np.float64)
        m10 = patches @ self._moment_x
        m01 = patches @ self._moment_y
        return np.mod(np.arctan2(m01, m10), TWO_PI)

    def _describe(self, smooth: np.ndarray, xs, ys, angles) -> np.ndarray:
        cos_a = np.cos(angles)[:, None]
        sin_a = np.sin(angles)[:, None]
        p = self._pattern

        def sample(dx, dy):
            rx = np.rint(cos_a * dx - sin_a * dy).astype(int)
            ry = np.rint(sin_a * dx + cos_a * dy).astype(int)
            return smooth[ys[:, None] + ry, xs[:, None] + rx]

        bits = sample(p[:, 0], p[:, 1]) < sample(p[:, 2], p[:, 3])
        return np.packbits(bits.astype(np.uint8), axis=1)

    def extract(self, gray: np.ndarray) -> tuple[tuple[KeyPoint, ...], np.ndarray]:
        n_bytes = self.cfg.descriptor_bits // 8
        found = []
        for level, scale, img in self._pyramid(gray):
            xs, ys, resp = self._detect(img)
            if len(xs) == 0:
                continue
            angles = self._orientation(img, xs, ys)
            smooth = gaussian_filter(img, 2.0)
            desc = self._describe(smooth, xs, ys, angles)
            for i in range(len(xs)):
                found.append((-float(resp[i]), level, int(ys[i]), int(xs[i]), scale,
                              float(angles[i]), desc[i]))
        found.sort(key=lambda f: f[:4])
        found = found[:self.cfg.max_points]
        keypoints = tuple(
            KeyPoint(x=x * scale, y=y * scale, orientation=angle, response=-neg_resp)
            for neg_resp, _, y, x, scale, angle, _ in found
        )
        if found:
            descriptors = np.stack([f[6] for f in found])
        else:
            descriptors = np.zeros((0, n_bytes), dtype=np.uint8)
        logger.debug("%d keypoints detectados", len(keypoints))
        return keypoints, descriptors


def extract_points(image: np.ndarray, cfg: ExtractionConfig = ExtractionConfig()) -> list:
    """List of (KeyPoint, descriptor) sorted by descending response."""
    keypoints, descriptors = PointExtractor(cfg).extract(image)
    return list(zip(keypoints, descriptors))
