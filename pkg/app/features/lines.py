"""Line segments by gradient-orientation region growing, described with a binary band descriptor.

Detection follows the LSD scheme (level-line field, greedy region growing
seeded by gradient magnitude, rectangle fit) with the a-contrario validation
replaced by a length and density filter.

Description: the support region around a segment is split into
``band_count`` bands of ``band_width`` rows parallel to the line. Every band
gets an 8-D descriptor (means and standard deviations of the four
directional gradient sums over the band and its two neighbours). A fixed list
of 32 band pairs is compared component-wise, 8 bits per pair, giving 256 bits.
The pair list is built by :func:`band_pairs`: all pairs of adjacent bands,
then pairs two bands apart, then three apart, and so on, each group in
increasing index order, truncated to 32. For 9 bands it is::

    (0,1) (1,2) (2,3) (3,4) (4,5) (5,6) (6,7) (7,8)
    (0,2) (1,3) (2,4) (3,5) (4,6) (5,7) (6,8)
    (0,3) (1,4) (2,5) (3,6) (4,7) (5,8)
    (0,4) (1,5) (2,6) (3,7) (4,8)
    (0,5) (1,6) (2,7) (3,8)
    (0,6) (1,7)
"""
import logging
import math
from functools import lru_cache

import numpy as np
from scipy.ndimage import map_coordinates, sobel

from app.schemas.config import ExtractionConfig
from app.schemas.features import LineSegment

logger = logging.getLogger(__name__)

_NEIGHBOURS = ((-1, -1), (-1, 0), (-1, 1), (0, -1), (0, 1), (1, -1), (1, 0), (1, 1))


@lru_cache(maxsize=8)
def band_pairs(band_count: int, n_pairs: int = 32) -> tuple[tuple[int, int], ...]:
    pairs = []
    for distance in range(1, band_count):
        for i in range(band_count - distance):
            pairs.append((i, i + distance))
            if len(pairs) == n_pairs:
                return tuple(pairs)
    raise ValueError(f"{band_count} bandas no dan {n_pairs} parejas")


def gradients(gray: np.ndarray) -> tuple[np.ndarray, np.ndarray]:
    img = gray.astype(np.float64)
    return sobel(img, axis=1) / 8.0, sobel(img, axis=0) / 8.0


def _angle_diff(a: float, b: float) -> float:
    d = a - b
    while d <= -math.pi:
        d += 2 * math.pi
    while d > math.pi:
        d -= 2 * math.pi
    return abs(d)


class LineExtractor:
    def __init__(self, cfg: ExtractionConfig = ExtractionConfig()):
        self.cfg = cfg
        self.tolerance = math.radians(cfg.angle_tolerance_deg)
        # LSD gradient threshold for a quantization error of 2 grey levels
        self.min_gradient = 2.0 / math.sin(self.tolerance)
        self.pairs = band_pairs(cfg.band_count, cfg.descriptor_bits // 8)

    def _grow_regions(self, gx: np.ndarray, gy: np.ndarray):
        h, w = gx.shape
        magnitude = np.hypot(gx, gy)
        level_angle = np.arctan2(gx, -gy)
        usable = magnitude > self.min_gradient
        candidates = np.flatnonzero(usable)
        if len(candidates) == 0:
            return
        order = candidates[np.argsort(-magnitude.ravel()[candidates], kind="stable")]
        used = bytearray((~usable).ravel().astype(np.uint8).tobytes())
        angles = level_angle.ravel().tolist()
        min_pixels = int(self.cfg.min_line_length)

        for seed in order.tolist():
            if used[seed]:
                continue
            used[seed] = 1
            region = [seed]
            sum_cos = math.cos(angles[seed])
            sum_sin = math.sin(angles[seed])
            region_angle = angles[seed]
            k = 0
            while k < len(region):
                y, x = divmod(region[k], w)
                k += 1
                for dy, dx in _NEIGHBOURS:
                    ny, nx = y + dy, x + dx
                    if ny < 0 or ny >= h or nx < 0 or nx >= w:
                        continue
                    idx = ny * w + nx
                    if used[idx] or _angle_diff(angles[idx], region_angle) > self.tolerance:
                        continue
                    used[idx] = 1
                    region.append(idx)
                    sum_cos += math.cos(angles[idx])
                    sum_sin += math.sin(angles[idx])
                    region_angle = math.atan2(sum_sin, sum_cos)
            if len(region) >= min_pixels:
                yield np.array(region), region_angle, magnitude

    def _fit_segment(self, region: np.ndarray, region_angle: float, magnitude: np.ndarray):
        h, w = magnitude.shape
        ys, xs = np.divmod(region, w)
        weights = magnitude.ravel()[region]
        total = weights.sum()
        cx = float((weights * xs).sum() / total)
        cy = float((weights * ys).sum() / total)
        dx, dy = xs - cx, ys - cy
        cov = np.array([
            [(weights * dx * dx).sum(), (weights * dx * dy).sum()],
            [(weights * dx * dy).sum(), (weights * dy * dy).sum()],
        ]) / total
        _, vecs = np.linalg.eigh(cov)
        direction = vecs[:, 1]
        if direction[0] * math.cos(region_angle) + direction[1] * math.sin(region_angle) < 0:
            direction = -direction
        along = dx * direction[0] + dy * direction[1]
        across = -dx * direction[1] + dy * direction[0]
        lo, hi = float(along.min()), float(along.max())
        length = hi - lo
        if length <= self.cfg.min_line_length:
            return None
        width = float(across.max() - across.min()) + 1.0
        density = len(region) / ((length + 1.0) * width)
        if density < self.cfg.min_line_density:
            return None
        start = (cx + lo * direction[0], cy + lo * direction[1])
        end = (cx + hi * direction[0], cy + hi * direction[1])
        return LineSegment(start, end)

    def detect(self, gray: np.ndarray, grads=None) -> list[LineSegment]:
        gx, gy = grads if grads is not None else gradients(gray)
        segments = []
        for region, angle, magnitude in self._grow_regions(gx, gy):
            segment = self._fit_segment(region, angle, magnitude)
            if segment is not None:
                segments.append(segment)
        segments.sort(key=lambda s: (-s.length, s.start, s.end))
        return segments[:self.cfg.max_lines]

    def describe(self, segment: LineSegment, gx: np.ndarray, gy: np.ndarray) -> np.ndarray:
        m, bw = self.cfg.band_count, self.cfg.band_width
        rows = m * bw
        d = np.array([math.cos(segment.orientation), math.sin(segment.orientation)])
        normal = np.array([-d[1], d[0]])
        n_samples = max(int(math.ceil(segment.length)) + 1, 2)
        along = np.linspace(0.0, segment.length, n_samples)
        offsets = np.arange(rows) - (rows - 1) / 2.0

        px = segment.start[0] + along[None, :] * d[0] + offsets[:, None] * normal[0]
        py = segment.start[1] + along[None, :] * d[1] + offsets[:, None] * normal[1]
        coords = np.stack([py.ravel(), px.ravel()])
        sx = map_coordinates(gx, coords, order=1, mode="constant").reshape(rows, n_samples)
        sy = map_coordinates(gy, coords, order=1, mode="constant").reshape(rows, n_samples)
        g_perp = sx * normal[0] + sy * normal[1]
        g_line = sx * d[0] + sy * d[1]

        sigma_g = 0.5 * (rows - 1)
        global_w = np.exp(-offsets ** 2 / (2.0 * sigma_g ** 2))
        row_vectors = np.stack([
            np.maximum(g_perp, 0).sum(axis=1),
            np.maximum(-g_perp, 0).sum(axis=1),
            np.maximum(g_line, 0).sum(axis=1),
            np.maximum(-g_line, 0).sum(axis=1),
        ], axis=1) * global_w[:, None]

        band_desc = np.zeros((m, 8))
        local = np.arange(-bw, 2 * bw) - (bw - 1) / 2.0
        local_w_all = np.exp(-local ** 2 / (2.0 * bw ** 2))
        for j in range(m):
            lo = max((j - 1) * bw, 0)
            hi = min((j + 2) * bw, rows)
            block = row_vectors[lo:hi]
            weights = local_w_all[lo - (j - 1) * bw:hi - (j - 1) * bw]
            weights = weights / weights.sum()
            mean = (weights[:, None] * block).sum(axis=0)
            std = np.sqrt((weights[:, None] * (block - mean) ** 2).sum(axis=0))
            band_desc[j] = np.concatenate([mean, std])

        bits = np.concatenate([band_desc[i] > band_desc[j] for i, j in self.pairs])
        return np.packbits(bits.astype(np.uint8))

    def extract(self, gray: np.ndarray) -> tuple[tuple[LineSegment, ...], np.ndarray]:
        gx, gy = gradients(gray)
        segments = self.detect(gray, (gx, gy))
        if not segments:
            return (), np.zeros((0, self.cfg.descriptor_bits // 8), dtype=np.uint8)
        descriptors = np.stack([self.describe(s, gx, gy) for s in segments])
        logger.debug("%d segmentos detectados", len(segments))
        return tuple(segments), descriptors


def extract_lines(image: np.ndarray, cfg: ExtractionConfig = ExtractionConfig()) -> list:
    """List of (LineSegment, descriptor), longest segments first."""
    segments, descriptors = LineExtractor(cfg).extract(image)
    return list(zip(segments, descriptors))
