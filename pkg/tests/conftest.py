import math

import numpy as np
import pytest

from app.core.descriptors import random_descriptors
from app.eval.synthetic import SyntheticConfig, generate_sequence
from app.loop.geometry import fundamental_from_pose
from app.loop.pipeline import memory_source, run_sequence
from app.schemas.config import PipelineConfig
from app.schemas.features import FrameFeatures, KeyPoint, LineSegment

K = np.array([[500.0, 0.0, 320.0], [0.0, 500.0, 240.0], [0.0, 0.0, 1.0]])


def rotation_xyz(rx: float, ry: float, rz: float) -> np.ndarray:
    cx, sx = math.cos(rx), math.sin(rx)
    cy, sy = math.cos(ry), math.sin(ry)
    cz, sz = math.cos(rz), math.sin(rz)
    Rx = np.array([[1, 0, 0], [0, cx, -sx], [0, sx, cx]])
    Ry = np.array([[cy, 0, sy], [0, 1, 0], [-sy, 0, cy]])
    Rz = np.array([[cz, -sz, 0], [sz, cz, 0], [0, 0, 1]])
    return Rz @ Ry @ Rx


def project(X: np.ndarray, R: np.ndarray = np.eye(3), t=np.zeros(3)) -> np.ndarray:
    cam = X @ R.T + np.asarray(t)
    uv = cam @ K.T
    return uv[:, :2] / uv[:, 2:3]


class TwoViewScene:
    """Points and segments seen from a query camera (identity) and a candidate camera (R, t)."""

    def __init__(self, rng: np.random.Generator, n_points: int = 60, n_lines: int = 20,
                 pixel_noise: float = 0.2, n_outliers: int = 0):
        self.R = rotation_xyz(*rng.uniform(-0.05, 0.05, 3))
        self.t = np.array([1.0, 0.2, 0.1]) + rng.uniform(-0.1, 0.1, 3)
        self.F = fundamental_from_pose(K, K, self.R, self.t)

        X = np.column_stack([rng.uniform(-3, 3, n_points), rng.uniform(-3, 3, n_points),
                             rng.uniform(8, 16, n_points)])
        xt = project(X) + rng.normal(0, pixel_noise, (n_points, 2))
        xc = project(X, self.R, self.t) + rng.normal(0, pixel_noise, (n_points, 2))
        # outliers get unrelated coordinates in the candidate frame
        ot = np.column_stack([rng.uniform(50, 590, n_outliers), rng.uniform(50, 430, n_outliers)])
        oc = np.column_stack([rng.uniform(50, 590, n_outliers), rng.uniform(50, 430, n_outliers)])
        self.true_xt, self.true_xc = xt, xc
        self.n_true_points = n_points
        self.n_outliers = n_outliers

        centers = np.column_stack([rng.uniform(-3, 3, n_lines), rng.uniform(-3, 3, n_lines),
                                   rng.uniform(8, 16, n_lines)])
        # mostly fronto-parallel, so image orientation barely changes between the views
        phi = rng.uniform(0, 2 * math.pi, n_lines)
        direction = np.column_stack([np.cos(phi), np.sin(phi), rng.uniform(-0.1, 0.1, n_lines)])
        direction /= np.linalg.norm(direction, axis=1, keepdims=True)
        S, E = centers - direction, centers + direction
        st, et = project(S), project(E)
        sc, ec = project(S, self.R, self.t), project(E, self.R, self.t)

        pdesc = random_descriptors(rng, n_points + n_outliers)
        ldesc = random_descriptors(rng, n_lines)
        all_t = np.vstack([xt, ot])
        all_c = np.vstack([xc, oc])
        self.query = FrameFeatures(
            frame_id=1,
            keypoints=tuple(KeyPoint(x=float(x), y=float(y)) for x, y in all_t),
            point_descriptors=pdesc,
            lines=tuple(LineSegment(tuple(a), tuple(b)) for a, b in zip(st, et)),
            line_descriptors=ldesc,
        )
        self.candidate = FrameFeatures(
            frame_id=0,
            keypoints=tuple(KeyPoint(x=float(x), y=float(y)) for x, y in all_c),
            point_descriptors=pdesc,
            lines=tuple(LineSegment(tuple(a), tuple(b)) for a, b in zip(sc, ec)),
            line_descriptors=ldesc,
        )


@pytest.fixture
def rng():
    return np.random.default_rng(1234)


@pytest.fixture
def scene_factory():
    def make(seed: int, **kwargs) -> TwoViewScene:
        return TwoViewScene(np.random.default_rng(seed), **kwargs)
    return make


SMALL_SYNTH = SyntheticConfig(frames=100, revisits=10, revisit_start=5, step=1.0, gating_window=30)


@pytest.fixture(scope="session")
def small_config() -> PipelineConfig:
    return PipelineConfig(gating_window=SMALL_SYNTH.gating_window, record_timings=False)


@pytest.fixture(scope="session")
def small_sequence():
    return generate_sequence(SMALL_SYNTH)


@pytest.fixture(scope="session")
def default_sequence():
    return generate_sequence(SyntheticConfig())


@pytest.fixture(scope="session")
def default_run(default_sequence):
    decisions = []
    cfg = PipelineConfig(record_timings=False)
    summary = run_sequence(memory_source(default_sequence.frames), cfg, decisions.append)
    return decisions, summary
