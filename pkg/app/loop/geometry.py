"""Spatial verification of a loop candidate.

Points are matched by Hamming distance with the NNDR test. Lines go through
the same test after discarding candidates whose orientation, corrected by
the global rotation between the frames, disagrees by more than
``alpha_max``. Matched line endpoints join the point correspondences in a
RANSAC estimate of the fundamental matrix, with ``x_c^T F x_t = 0`` where
``t`` is the query frame and ``c`` the candidate.
"""
import logging
import math
from dataclasses import dataclass, field
from enum import Enum
from typing import Optional

import cv2
import numpy as np

from app.core.descriptors import hamming_matrix
from app.schemas.config import GeometryConfig
from app.schemas.features import TWO_PI, FrameFeatures, LineSegment

logger = logging.getLogger(__name__)

MIN_CORRESPONDENCES = 8
_TIE_EPS = 1e-9


class EndpointPairing(str, Enum):
    parallel = "parallel"
    crossed = "crossed"


@dataclass(frozen=True)
class PointMatch:
    query: int
    train: int
    distance: int


@dataclass(frozen=True)
class LineMatch:
    query: int
    train: int
    distance: int
    pairing: EndpointPairing = EndpointPairing.parallel


@dataclass(frozen=True)
class MatchSet:
    point_matches: tuple[PointMatch, ...] = ()
    line_matches: tuple[LineMatch, ...] = ()

    def __len__(self) -> int:
        return len(self.point_matches) + len(self.line_matches)


@dataclass(frozen=True)
class RotationEstimate:
    theta: float = 0.0
    salient: bool = False


@dataclass(frozen=True)
class VerificationResult:
    accepted: bool
    F: Optional[np.ndarray] = None
    point_inliers: int = 0
    line_inliers: int = 0
    theta_g: float = 0.0
    matches: MatchSet = field(default_factory=MatchSet)

    @property
    def inliers(self) -> int:
        return self.point_inliers + self.line_inliers


def wrap_pi(angle):
    """Wrap into [-pi, pi)."""
    return np.mod(np.asarray(angle, dtype=np.float64) + math.pi, TWO_PI) - math.pi


def relative_orientation(theta_t, theta_c, theta_g):
    """α = |θ_t − θ_c + θ_g| folded into [0, π]."""
    return np.abs(wrap_pi(np.asarray(theta_t) - np.asarray(theta_c) + theta_g))


def _writable(desc: np.ndarray) -> np.ndarray:
    return np.require(desc, dtype=np.uint8, requirements=["C", "W"])


def _nndr_select(desc_t: np.ndarray, desc_c: np.ndarray, allowed: Optional[np.ndarray],
                 ratio: float, fallback: int) -> list[tuple[int, int, int]]:
    """Mutual nearest neighbours passing the ratio test, ``allowed`` masking pairs out.

    A query with a single allowed candidate is kept when that candidate is
    within ``fallback`` bits.
    """
    if len(desc_t) == 0 or len(desc_c) == 0:
        return []
    desc_t, desc_c = _writable(desc_t), _writable(desc_c)
    matcher = cv2.BFMatcher(cv2.NORM_HAMMING)
    if allowed is None:
        forward = matcher.knnMatch(desc_t, desc_c, k=2)
        backward = matcher.match(desc_c, desc_t)
    else:
        mask = allowed.astype(np.uint8)
        forward = matcher.knnMatch(desc_t, desc_c, k=2, mask=mask)
        backward = matcher.match(desc_c, desc_t, mask=np.ascontiguousarray(mask.T))
    best_query = {m.queryIdx: m.trainIdx for m in backward}
    matches = []
    for pair in forward:
        if not pair:
            continue
        best = pair[0]
        if len(pair) == 1:
            keep = best.distance <= fallback
        else:
            keep = best.distance < ratio * pair[1].distance
        if keep and best_query.get(best.trainIdx) == best.queryIdx:
            matches.append((best.queryIdx, best.trainIdx, int(best.distance)))
    return matches


def match_points(desc_t: np.ndarray, desc_c: np.ndarray,
                 cfg: GeometryConfig = GeometryConfig()) -> tuple[PointMatch, ...]:
    return tuple(PointMatch(i, j, d) for i, j, d in
                 _nndr_select(desc_t, desc_c, None, cfg.nndr_ratio, cfg.fallback_distance))


def global_rotation(orient_t: np.ndarray, desc_t: np.ndarray,
                    orient_c: np.ndarray, desc_c: np.ndarray,
                    cfg: GeometryConfig = GeometryConfig()) -> RotationEstimate:
    """Dominant orientation offset θ_c − θ_t over appearance-plausible line pairs.

    The histogram has bins of ``rotation_bin`` centred on multiples of the bin
    width. When the dominant bin holds less than ``rotation_salience`` of the
    pairs the estimate is not salient and θ_g is 0. Otherwise θ_g is the
    circular mean over the dominant bin and its two neighbours, so a rotation
    on a bin edge is not pulled toward either bin centre.
    """
    if len(orient_t) == 0 or len(orient_c) == 0:
        return RotationEstimate()
    plausible = hamming_matrix(desc_t, desc_c) <= cfg.rotation_prefilter
    ti, ci = np.nonzero(plausible)
    if len(ti) == 0:
        return RotationEstimate()
    diffs = np.mod(np.asarray(orient_c)[ci] - np.asarray(orient_t)[ti], TWO_PI)
    n_bins = max(1, int(round(TWO_PI / cfg.rotation_bin)))
    width = TWO_PI / n_bins
    bins = np.floor((diffs + width / 2) / width).astype(np.int64) % n_bins
    counts = np.bincount(bins, minlength=n_bins)
    dominant = int(np.argmax(counts))
    if counts[dominant] < cfg.rotation_salience * len(diffs):
        return RotationEstimate()
    near = (bins - dominant + 1) % n_bins <= 2
    members = diffs[near]
    theta = math.atan2(float(np.sin(members).mean()), float(np.cos(members).mean()))
    return RotationEstimate(float(wrap_pi(theta)), True)


def orientation_mask(orient_t: np.ndarray, orient_c: np.ndarray,
                     theta_g: float, alpha_max: float) -> np.ndarray:
    alpha = relative_orientation(np.asarray(orient_t)[:, None], np.asarray(orient_c)[None, :], theta_g)
    return alpha <= alpha_max


def pair_endpoints(line_t: LineSegment, line_c: LineSegment, theta_g: float) -> EndpointPairing:
    as_is = relative_orientation(line_t.orientation, line_c.orientation, theta_g)
    flipped = relative_orientation(line_t.orientation, line_c.orientation + math.pi, theta_g)
    return EndpointPairing.crossed if flipped < as_is - _TIE_EPS else EndpointPairing.parallel


def match_lines(lines_t: tuple[LineSegment, ...], desc_t: np.ndarray,
                lines_c: tuple[LineSegment, ...], desc_c: np.ndarray,
                rotation: RotationEstimate, cfg: GeometryConfig = GeometryConfig(),
                use_rotation_filter: Optional[bool] = None) -> tuple[LineMatch, ...]:
    """NNDR over the candidates that survive the relative-orientation filter.

    The filter only applies when the rotation estimate is salient.
    """
    use_filter = cfg.use_rotation_filter if use_rotation_filter is None else use_rotation_filter
    allowed = None
    if use_filter and rotation.salient and len(lines_t) and len(lines_c):
        orient_t = np.array([s.orientation for s in lines_t])
        orient_c = np.array([s.orientation for s in lines_c])
        allowed = orientation_mask(orient_t, orient_c, rotation.theta, cfg.alpha_max)
    return tuple(
        LineMatch(i, j, d, pair_endpoints(lines_t[i], lines_c[j], rotation.theta))
        for i, j, d in _nndr_select(desc_t, desc_c, allowed, cfg.nndr_ratio, cfg.fallback_distance)
    )


def match_frames(features_t: FrameFeatures, features_c: FrameFeatures,
                 cfg: GeometryConfig = GeometryConfig(), use_points: bool = True,
                 use_lines: bool = True,
                 use_rotation_filter: Optional[bool] = None) -> tuple[MatchSet, RotationEstimate]:
    point_matches: tuple[PointMatch, ...] = ()
    line_matches: tuple[LineMatch, ...] = ()
    rotation = RotationEstimate()
    if use_points:
        point_matches = match_points(features_t.point_descriptors, features_c.point_descriptors, cfg)
    if use_lines:
        rotation = global_rotation(
            features_t.line_orientations(), features_t.line_descriptors,
            features_c.line_orientations(), features_c.line_descriptors, cfg,
        )
        line_matches = match_lines(
            features_t.lines, features_t.line_descriptors,
            features_c.lines, features_c.line_descriptors,
            rotation, cfg, use_rotation_filter,
        )
    return MatchSet(point_matches, line_matches), rotation


@dataclass(frozen=True)
class CorrespondencePool:
    """Point correspondences: one per point match, then two per line match."""
    xt: np.ndarray
    xc: np.ndarray
    n_points: int
    n_lines: int

    def __len__(self) -> int:
        return len(self.xt)


def build_pool(features_t: FrameFeatures, features_c: FrameFeatures,
               matches: MatchSet) -> CorrespondencePool:
    xt, xc = [], []
    for m in matches.point_matches:
        xt.append(features_t.keypoints[m.query].pt)
        xc.append(features_c.keypoints[m.train].pt)
    for m in matches.line_matches:
        lt, lc = features_t.lines[m.query], features_c.lines[m.train]
        ends_c = (lc.start, lc.end) if m.pairing is EndpointPairing.parallel else (lc.end, lc.start)
        xt.extend((lt.start, lt.end))
        xc.extend(ends_c)
    return CorrespondencePool(
        np.array(xt, dtype=np.float64).reshape(-1, 2),
        np.array(xc, dtype=np.float64).reshape(-1, 2),
        len(matches.point_matches),
        len(matches.line_matches),
    )


def _hartley(pts: np.ndarray) -> Optional[np.ndarray]:
    centroid = pts.mean(axis=0)
    spread = np.linalg.norm(pts - centroid, axis=1).mean()
    if spread < 1e-12:
        return None
    s = math.sqrt(2.0) / spread
    return np.array([[s, 0.0, -s * centroid[0]], [0.0, s, -s * centroid[1]], [0.0, 0.0, 1.0]])


def _homogeneous(pts: np.ndarray) -> np.ndarray:
    return np.hstack([pts, np.ones((len(pts), 1))])


def normalize_fundamental(F: np.ndarray) -> np.ndarray:
    F = F / np.linalg.norm(F)
    k = int(np.argmax(np.abs(F)))
    return F if F.flat[k] >= 0 else -F


def eight_point(xt: np.ndarray, xc: np.ndarray) -> Optional[np.ndarray]:
    """Normalized 8-point estimate, rank 2 and unit Frobenius norm; None on degenerate input."""
    if len(xt) < MIN_CORRESPONDENCES:
        return None
    Tt, Tc = _hartley(xt), _hartley(xc)
    if Tt is None or Tc is None:
        return None
    pt = _homogeneous(xt) @ Tt.T
    pc = _homogeneous(xc) @ Tc.T
    A = (pc[:, :, None] * pt[:, None, :]).reshape(len(pt), 9)
    _, s, vt = np.linalg.svd(A)
    if s[min(len(s), 8) - 1] < 1e-9 * s[0]:
        return None
    F = vt[-1].reshape(3, 3)
    u, sf, vt_f = np.linalg.svd(F)
    F = u @ np.diag([sf[0], sf[1], 0.0]) @ vt_f
    F = Tc.T @ F @ Tt
    if not np.all(np.isfinite(F)) or np.linalg.norm(F) == 0:
        return None
    u, sf, vt_f = np.linalg.svd(normalize_fundamental(F))
    return normalize_fundamental(u @ np.diag([sf[0], sf[1], 0.0]) @ vt_f)


def symmetric_epipolar_distance(F: np.ndarray, xt: np.ndarray, xc: np.ndarray) -> np.ndarray:
    """Mean of the point-to-epipolar-line distances in both images."""
    ht, hc = _homogeneous(xt), _homogeneous(xc)
    lines_c = ht @ F.T
    lines_t = hc @ F
    residual = np.abs(np.sum(hc * lines_c, axis=1))
    d_c = residual / np.maximum(np.hypot(lines_c[:, 0], lines_c[:, 1]), 1e-12)
    d_t = residual / np.maximum(np.hypot(lines_t[:, 0], lines_t[:, 1]), 1e-12)
    return 0.5 * (d_c + d_t)


def count_inliers(F: np.ndarray, pool: CorrespondencePool,
                  epi_tol: float) -> tuple[int, int, np.ndarray]:
    """(point inliers, line inliers, per-correspondence mask); a line needs one endpoint."""
    mask = symmetric_epipolar_distance(F, pool.xt, pool.xc) <= epi_tol
    point_inliers = int(mask[:pool.n_points].sum())
    endpoints = mask[pool.n_points:].reshape(pool.n_lines, 2)
    line_inliers = int(endpoints.any(axis=1).sum())
    return point_inliers, line_inliers, mask


def fundamental_from_pose(K_t: np.ndarray, K_c: np.ndarray,
                          R: np.ndarray, t: np.ndarray) -> np.ndarray:
    """F for a candidate camera with X_c = R X_t + t."""
    t = np.asarray(t, dtype=np.float64).reshape(3)
    tx = np.array([[0.0, -t[2], t[1]], [t[2], 0.0, -t[0]], [-t[1], t[0], 0.0]])
    F = np.linalg.inv(K_c).T @ tx @ R @ np.linalg.inv(K_t)
    return normalize_fundamental(F)


def _ransac(pool: CorrespondencePool, cfg: GeometryConfig,
            rng: np.random.Generator) -> tuple[Optional[np.ndarray], np.ndarray]:
    n = len(pool)
    best_F, best_mask, best_count = None, np.zeros(n, dtype=bool), 0
    needed = cfg.ransac_iterations
    iteration = 0
    while iteration < min(needed, cfg.ransac_iterations):
        iteration += 1
        sample = rng.choice(n, size=MIN_CORRESPONDENCES, replace=False)
        F = eight_point(pool.xt[sample], pool.xc[sample])
        if F is None:
            continue
        mask = symmetric_epipolar_distance(F, pool.xt, pool.xc) <= cfg.epi_tol
        count = int(mask.sum())
        if count > best_count:
            best_F, best_mask, best_count = F, mask, count
            w = count / n
            if w >= 1.0:
                needed = iteration
            else:
                p_good = w ** MIN_CORRESPONDENCES
                if p_good > 0:
                    needed = int(math.ceil(math.log(1 - cfg.ransac_confidence) / math.log1p(-p_good)))
    if best_F is None or best_count < MIN_CORRESPONDENCES:
        return None, best_mask
    refit = eight_point(pool.xt[best_mask], pool.xc[best_mask])
    if refit is not None:
        mask = symmetric_epipolar_distance(refit, pool.xt, pool.xc) <= cfg.epi_tol
        if mask.sum() >= best_count:
            return refit, mask
    return best_F, best_mask


def verify(features_t: FrameFeatures, features_c: FrameFeatures, matches: MatchSet,
           cfg: GeometryConfig = GeometryConfig(), theta_g: float = 0.0) -> VerificationResult:
    pool = build_pool(features_t, features_c, matches)
    if len(pool) < MIN_CORRESPONDENCES:
        logger.debug("Frame %d vs %d: %d correspondencias, se rechaza sin RANSAC",
                     features_t.frame_id, features_c.frame_id, len(pool))
        return VerificationResult(False, theta_g=theta_g, matches=matches)
    rng = np.random.default_rng([cfg.seed, features_t.frame_id, features_c.frame_id])
    F, _ = _ransac(pool, cfg, rng)
    if F is None:
        return VerificationResult(False, theta_g=theta_g, matches=matches)
    point_inliers, line_inliers, _ = count_inliers(F, pool, cfg.epi_tol)
    accepted = point_inliers + line_inliers >= cfg.min_inliers
    logger.debug("Frame %d vs %d: %d+%d inliers", features_t.frame_id, features_c.frame_id,
                 point_inliers, line_inliers)
    return VerificationResult(accepted, F, point_inliers, line_inliers, theta_g, matches)


def verify_pair(features_t: FrameFeatures, features_c: FrameFeatures,
                cfg: GeometryConfig = GeometryConfig(), use_points: bool = True,
                use_lines: bool = True,
                use_rotation_filter: Optional[bool] = None) -> VerificationResult:
    matches, rotation = match_frames(features_t, features_c, cfg, use_points, use_lines,
                                     use_rotation_filter)
    return verify(features_t, features_c, matches, cfg, rotation.theta)
