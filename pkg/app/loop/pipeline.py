"""Per-frame loop-closure detection.

For every frame: query both vocabularies, update them, fuse the candidate
lists, group candidates into islands, verify the chosen representative and
keep its island for the next frame only if verification succeeds.
"""
import logging
import time
from concurrent.futures import ThreadPoolExecutor
from dataclasses import dataclass
from pathlib import Path
from typing import Callable, Iterable, Iterator, Optional

import numpy as np

from app.core.config import DESCRIPTOR_BITS, WORKERS
from app.core.errors import DescriptorWidthError, FrameOrderError, LipoError, SequenceError
from app.features.images import FeatureExtractor, read_image
from app.features.storage import load_features
from app.loop.fusion import merge_lists
from app.loop.geometry import VerificationResult, verify_pair
from app.loop.islands import Island, build_islands, retain_for_next, select_island
from app.schemas.config import ExtractionConfig, PipelineConfig
from app.schemas.decision import DecisionStatus, LoopDecision, RunSummary
from app.schemas.features import FrameFeatures
from app.vocab.index import CandidateList, VocabIndex

logger = logging.getLogger(__name__)


@dataclass(frozen=True)
class SourceFrame:
    features: FrameFeatures
    extraction_ms: float = 0.0
    points_ms: float = 0.0
    lines_ms: float = 0.0
    source: Optional[str] = None


def _elapsed_ms(start: float) -> float:
    return (time.perf_counter() - start) * 1000.0


class LoopClosureDetector:
    def __init__(self, cfg: PipelineConfig = PipelineConfig()):
        self.cfg = cfg
        self.point_vocab = VocabIndex(cfg.vocab, name="points") if cfg.use_points else None
        self.line_vocab = VocabIndex(cfg.vocab, name="lines") if cfg.use_lines else None
        self.previous: Optional[Island] = None
        self.last_frame_id: Optional[int] = None
        self._frames: dict[int, FrameFeatures] = {}

    def _query(self, vocab: Optional[VocabIndex], descriptors: np.ndarray,
               max_frame_id: int, frame_id: int) -> tuple[CandidateList, float]:
        start = time.perf_counter()
        if vocab is None or max_frame_id < 0 or len(descriptors) == 0:
            return CandidateList(frame_id), _elapsed_ms(start)
        found = vocab.query(descriptors, max_frame_id=max_frame_id, query_frame_id=frame_id)
        return found, _elapsed_ms(start)

    @staticmethod
    def _insert(vocab: Optional[VocabIndex], frame_id: int, descriptors: np.ndarray) -> float:
        start = time.perf_counter()
        if vocab is not None:
            vocab.insert_frame(frame_id, descriptors)
        return _elapsed_ms(start)

    def process_frame(self, features: FrameFeatures, extraction_ms: float = 0.0,
                      points_ms: float = 0.0, lines_ms: float = 0.0) -> LoopDecision:
        t = features.frame_id
        if self.last_frame_id is not None and t <= self.last_frame_id:
            raise FrameOrderError(t, self.last_frame_id)
        if features.descriptor_bits != self.cfg.vocab.descriptor_bits:
            raise DescriptorWidthError(features.descriptor_bits, self.cfg.vocab.descriptor_bits,
                                       f"frame {t}")
        if features.is_empty:
            logger.warning("Frame %d sin puntos ni segmentos", t)
        max_frame_id = t - self.cfg.gating_window - 1

        sc_start = time.perf_counter()
        with ThreadPoolExecutor(max_workers=WORKERS) as pool:
            point_future = pool.submit(self._query, self.point_vocab, features.point_descriptors,
                                       max_frame_id, t)
            line_future = pool.submit(self._query, self.line_vocab, features.line_descriptors,
                                      max_frame_id, t)
            point_list, sc_points = point_future.result()
            line_list, sc_lines = line_future.result()
        sc_query = _elapsed_ms(sc_start)

        vu_points = self._insert(self.point_vocab, t, features.point_descriptors)
        vu_lines = self._insert(self.line_vocab, t, features.line_descriptors)
        self._frames[t] = features
        self.last_frame_id = t

        fuse_start = time.perf_counter()
        fused = merge_lists(point_list, line_list, self.cfg.fusion)
        islands = build_islands(fused, self.cfg.islands.gap)
        selection = select_island(islands, self.previous)
        sc_fuse = _elapsed_ms(fuse_start)
        logger.debug("Frame %d: %d candidatos de puntos, %d de líneas, %d islas",
                     t, len(point_list), len(line_list), len(islands))

        sv = 0.0
        result: Optional[VerificationResult] = None
        if selection.empty:
            status = DecisionStatus.no_candidates
            self.previous = retain_for_next(selection, False)
        else:
            sv_start = time.perf_counter()
            result = verify_pair(features, self._frames[selection.representative],
                                 self.cfg.geometry, self.cfg.use_points, self.cfg.use_lines)
            sv = _elapsed_ms(sv_start)
            status = DecisionStatus.accepted if result.accepted else DecisionStatus.rejected_verification
            self.previous = retain_for_next(selection, result.accepted)
            logger.debug("Frame %d: isla [%d, %d] (prioridad=%s), representante %d, %s",
                         t, selection.island.m, selection.island.n, selection.priority_used,
                         selection.representative, status.value)

        timings = dict(
            t_fe=extraction_ms, t_vu=vu_points + vu_lines, t_sc=sc_query + sc_fuse, t_sv=sv,
            t_fe_points=points_ms, t_fe_lines=lines_ms,
            t_vu_points=vu_points, t_vu_lines=vu_lines,
            t_sc_points=sc_points, t_sc_lines=sc_lines,
        )
        if not self.cfg.record_timings:
            timings = {k: 0.0 for k in timings}
        return LoopDecision(
            frame_id=t,
            status=status,
            matched_id=selection.representative,
            beta=selection.island.beta_of(selection.representative) if not selection.empty else 0.0,
            point_inliers=result.point_inliers if result else 0,
            line_inliers=result.line_inliers if result else 0,
            **timings,
        )


def run_sequence(source: Iterable[SourceFrame], cfg: PipelineConfig = PipelineConfig(),
                 sink: Optional[Callable[[LoopDecision], None]] = None,
                 detector: Optional[LoopClosureDetector] = None) -> RunSummary:
    """Stream frames through ``detector`` (a fresh one by default).

    Errors are re-raised as SequenceError carrying the frame index and source.
    """
    detector = detector or LoopClosureDetector(cfg)
    decisions: list[LoopDecision] = []
    frames = iter(source)
    index = 0
    while True:
        try:
            frame = next(frames)
        except StopIteration:
            break
        except SequenceError:
            raise
        except (LipoError, OSError, ValueError) as e:
            raise SequenceError(index, None, e) from e
        try:
            decision = detector.process_frame(frame.features, frame.extraction_ms,
                                              frame.points_ms, frame.lines_ms)
        except (LipoError, ValueError) as e:
            raise SequenceError(index, frame.source, e) from e
        decisions.append(decision)
        if sink is not None:
            sink(decision)
        index += 1
    summary = RunSummary.from_decisions(decisions)
    logger.info("Secuencia procesada: %d frames, %d cierres aceptados",
                summary.frames, summary.accepted)
    return summary


def feature_file_source(paths: Iterable[Path], expected_bits: int = DESCRIPTOR_BITS) -> Iterator[SourceFrame]:
    for index, path in enumerate(paths):
        try:
            features = load_features(path, expected_bits)
        except (LipoError, OSError, UnicodeDecodeError) as e:
            raise SequenceError(index, str(path), e) from e
        yield SourceFrame(features, source=str(path))


def image_source(paths: Iterable[Path], cfg: ExtractionConfig = ExtractionConfig(),
                 use_points: bool = True, use_lines: bool = True) -> Iterator[SourceFrame]:
    """Frame ids follow the position of each image in ``paths``."""
    extractor = FeatureExtractor(cfg, use_points, use_lines)
    for index, path in enumerate(paths):
        try:
            features, timing = extractor.extract_timed(read_image(path), index)
        except (LipoError, OSError) as e:
            raise SequenceError(index, str(path), e) from e
        yield SourceFrame(features, timing.total_ms, timing.points_ms, timing.lines_ms, str(path))


def memory_source(frames: Iterable[FrameFeatures]) -> Iterator[SourceFrame]:
    for features in frames:
        yield SourceFrame(features)
