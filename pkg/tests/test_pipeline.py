import pytest

from app.core.descriptors import random_descriptors
from app.core.errors import DescriptorWidthError, FrameOrderError, ImageReadError, SequenceError
from app.features.storage import save_features
from app.loop.pipeline import (
    LoopClosureDetector,
    feature_file_source,
    image_source,
    memory_source,
    run_sequence,
)
from app.schemas.config import FeatureMode, PipelineConfig
from app.schemas.decision import DecisionStatus, RunSummary, read_decision_log, write_decision_log
from app.schemas.features import FrameFeatures, KeyPoint


def random_frame(rng, frame_id: int, n: int = 40) -> FrameFeatures:
    xy = rng.uniform(10, 600, (n, 2))
    return FrameFeatures(
        frame_id=frame_id,
        keypoints=tuple(KeyPoint(x=float(x), y=float(y)) for x, y in xy),
        point_descriptors=random_descriptors(rng, n),
    )


def run(frames, cfg) -> list:
    decisions = []
    run_sequence(memory_source(frames), cfg, decisions.append)
    return decisions


class TestProcessFrame:
    def test_first_frame_has_no_candidates(self, rng):
        decision = LoopClosureDetector().process_frame(random_frame(rng, 0))
        assert decision.status is DecisionStatus.no_candidates
        assert decision.matched_id is None

    def test_out_of_order(self, rng):
        detector = LoopClosureDetector()
        detector.process_frame(random_frame(rng, 5))
        with pytest.raises(FrameOrderError):
            detector.process_frame(random_frame(rng, 3))
        with pytest.raises(FrameOrderError):
            detector.process_frame(random_frame(rng, 5))

    def test_width_mismatch(self):
        frame = FrameFeatures(frame_id=0, descriptor_bits=128)
        with pytest.raises(DescriptorWidthError):
            LoopClosureDetector().process_frame(frame)

    def test_empty_frames(self):
        detector = LoopClosureDetector(PipelineConfig(gating_window=0))
        for frame_id in range(5):
            decision = detector.process_frame(FrameFeatures(frame_id=frame_id))
            assert decision.status is DecisionStatus.no_candidates
        assert detector.point_vocab.n_frames == 5
        assert detector.line_vocab.n_frames == 5

    def test_single_feature_frames(self, rng):
        d = random_descriptors(rng, 1)
        frames = [FrameFeatures(frame_id=i, keypoints=(KeyPoint(x=10.0, y=10.0),), point_descriptors=d)
                  for i in range(5)]
        decisions = run(frames, PipelineConfig(gating_window=0, record_timings=False))
        assert decisions[0].status is DecisionStatus.no_candidates
        assert not any(d.accepted for d in decisions)

    def test_vocabularies_updated_every_frame(self, rng):
        detector = LoopClosureDetector()
        for frame_id in range(3):
            detector.process_frame(random_frame(rng, frame_id))
        assert detector.point_vocab.inverted.total_postings() == 120

    def test_revisit_inside_gating_window(self, rng):
        frames = [random_frame(rng, i) for i in range(10)]
        again = frames[0]
        frames[8] = FrameFeatures(frame_id=8, keypoints=again.keypoints,
                                  point_descriptors=again.point_descriptors)
        decisions = run(frames, PipelineConfig(gating_window=60, record_timings=False))
        assert all(d.status is DecisionStatus.no_candidates for d in decisions)

    def test_never_matches_itself(self, rng):
        frames = [random_frame(rng, i) for i in range(6)]
        decisions = run(frames, PipelineConfig(gating_window=0, record_timings=False))
        assert all(d.matched_id is None or d.matched_id < d.frame_id for d in decisions)

    def test_timings(self, rng):
        frames = [random_frame(rng, i) for i in range(3)]
        quiet = run(frames, PipelineConfig(record_timings=False))
        assert all(d.t_vu == d.t_sc == d.t_sv == d.t_fe == 0.0 for d in quiet)
        timed = run(frames, PipelineConfig())
        assert all(d.t_vu >= 0.0 and d.t_sc >= 0.0 for d in timed)
        assert any(d.t_vu > 0.0 for d in timed)


class TestSyntheticSequence:
    def test_planted_loops(self, small_sequence, small_config):
        decisions = run(small_sequence.frames, small_config)
        gt = small_sequence.ground_truth
        accepted = [d for d in decisions if d.accepted]
        assert 5 <= len(accepted) <= len(small_sequence.revisit_of)
        for d in accepted:
            assert gt.is_correct(d.frame_id, d.matched_id)
            assert d.matched_id < d.frame_id - small_config.gating_window

    def test_deterministic_log(self, small_sequence, small_config, tmp_path):
        a, b = tmp_path / "a.log", tmp_path / "b.log"
        write_decision_log(run(small_sequence.frames, small_config), a)
        write_decision_log(run(small_sequence.frames, small_config), b)
        assert a.read_bytes() == b.read_bytes()
        assert len(read_decision_log(a)) == len(small_sequence.frames)

    def test_points_only_mode(self, small_sequence, small_config):
        cfg = small_config.model_copy(update={"feature_mode": FeatureMode.points})
        detector = LoopClosureDetector(cfg)
        assert detector.line_vocab is None
        decisions = []
        run_sequence(memory_source(small_sequence.frames), cfg, decisions.append, detector)
        accepted = [d for d in decisions if d.accepted]
        assert accepted
        assert all(d.line_inliers == 0 for d in accepted)
        assert all(small_sequence.ground_truth.is_correct(d.frame_id, d.matched_id) for d in accepted)

    def test_lines_only_mode(self, small_sequence, small_config):
        cfg = small_config.model_copy(update={"feature_mode": FeatureMode.lines})
        decisions = run(small_sequence.frames, cfg)
        assert all(d.point_inliers == 0 for d in decisions)


class TestRunSequence:
    def test_empty_source(self):
        summary = run_sequence(iter([]))
        assert summary == RunSummary()
        assert summary.frames == 0

    def test_summary_counts(self, rng):
        frames = [random_frame(rng, i) for i in range(4)]
        summary = run_sequence(memory_source(frames), PipelineConfig(record_timings=False))
        assert summary.frames == 4
        assert summary.no_candidates == 4
        assert "Combined" in summary.render()

    def test_image_errors_carry_frame_context(self, tmp_path):
        source = image_source([tmp_path / "missing.png"])
        with pytest.raises(SequenceError) as err:
            run_sequence(source)
        assert err.value.index == 0
        assert isinstance(err.value.cause, ImageReadError)

    def test_order_errors_carry_frame_context(self, rng):
        frames = [random_frame(rng, 3), random_frame(rng, 1)]
        with pytest.raises(SequenceError) as err:
            run_sequence(memory_source(frames))
        assert err.value.index == 1
        assert isinstance(err.value.cause, FrameOrderError)

    def test_feature_file_source(self, small_sequence, small_config, tmp_path):
        paths = []
        for frame in small_sequence.frames[:5]:
            path = tmp_path / f"{frame.frame_id:06d}.lipofeat"
            save_features(frame, path)
            paths.append(path)
        loaded = [s.features for s in feature_file_source(paths)]
        assert loaded == list(small_sequence.frames[:5])

    def test_bad_feature_file(self, tmp_path):
        bad = tmp_path / "000000.lipofeat"
        bad.write_text("garbage\n")
        with pytest.raises(SequenceError) as err:
            list(feature_file_source([bad]))
        assert err.value.source == str(bad)
