import logging
import math
from typing import Iterable, Optional, Sequence

from app.core.errors import SequenceMismatchError
from app.eval.ground_truth import GroundTruth
from app.loop.geometry import verify_pair
from app.loop.pipeline import SourceFrame, memory_source, run_sequence
from app.schemas.config import PipelineConfig
from app.schemas.decision import DecisionStatus, LoopDecision
from app.schemas.evaluation import LineInlierComparison, PRPoint, ScoreResult, SweepResult
from app.schemas.features import FrameFeatures

logger = logging.getLogger(__name__)

DEFAULT_THRESHOLDS = (8, 10, 12, 15, 20, 25, 30, 40, 50, 75, 100, math.inf)


def score_run(decisions: Sequence[LoopDecision], gt: GroundTruth) -> ScoreResult:
    """Classify every accepted decision against the ground truth."""
    logged = {d.frame_id for d in decisions}
    missing = gt.queries - logged
    if missing:
        raise SequenceMismatchError(missing)
    tp = fp = 0
    for d in decisions:
        if not d.accepted:
            continue
        if gt.is_correct(d.frame_id, d.matched_id):
            tp += 1
        else:
            fp += 1
    return ScoreResult(tp=tp, fp=fp, loop_queries=len(gt.queries))


def replay(decisions: Iterable[LoopDecision], min_inliers: float) -> list[LoopDecision]:
    """Tighten a run to ``min_inliers`` using the recorded inlier counts.

    Only accepted decisions can change (to rejected); a rejection stays a
    rejection because the run never verified it against a looser threshold.
    """
    out = []
    for d in decisions:
        if d.accepted and d.inliers < min_inliers:
            d = d.model_copy(update={"status": DecisionStatus.rejected_verification})
        out.append(d)
    return out


def sweep_decisions(decisions: Sequence[LoopDecision], gt: GroundTruth,
                    thresholds: Iterable[float] = DEFAULT_THRESHOLDS) -> SweepResult:
    points = []
    for threshold in sorted(thresholds):
        score = score_run(replay(decisions, threshold), gt)
        points.append(PRPoint(threshold=threshold, precision=score.precision,
                              recall=score.recall, tp=score.tp, fp=score.fp))
    return SweepResult(points=tuple(points))


def evaluation_report(decisions: Sequence[LoopDecision], gt: GroundTruth,
                      thresholds: Iterable[float] = DEFAULT_THRESHOLDS) -> str:
    score = score_run(decisions, gt)
    return score.render() + sweep_decisions(decisions, gt, thresholds).render()


def pr_sweep(frames: Iterable[SourceFrame], cfg: PipelineConfig, gt: GroundTruth,
             thresholds: Iterable[float] = DEFAULT_THRESHOLDS) -> SweepResult:
    """One pipeline run at the lowest threshold, then replay for every threshold."""
    thresholds = sorted(thresholds)
    finite = [t for t in thresholds if math.isfinite(t)]
    run_cfg = cfg.with_min_inliers(finite[0] if finite else cfg.geometry.min_inliers)
    decisions: list[LoopDecision] = []
    run_sequence(frames, run_cfg, decisions.append)
    result = sweep_decisions(decisions, gt, thresholds)
    logger.info("Barrido PR: %d umbrales, max_recall_at_p100 = %.4f",
                len(result.points), result.max_recall_at_p100)
    return result


def line_inlier_ab(frames: Sequence[FrameFeatures], cfg: PipelineConfig,
                   pairs: Optional[Iterable[tuple[int, int]]] = None) -> LineInlierComparison:
    """Mean line inliers with plain NNDR versus the rotation-filtered matcher.

    Without explicit ``pairs`` the accepted (query, match) pairs of a pipeline
    run are used.
    """
    by_id = {f.frame_id: f for f in frames}
    if pairs is None:
        decisions: list[LoopDecision] = []
        run_sequence(memory_source(frames), cfg, decisions.append)
        pairs = [(d.frame_id, d.matched_id) for d in decisions if d.accepted]
    pairs = list(pairs)
    if not pairs:
        return LineInlierComparison()
    nndr = proposed = 0
    for q, m in pairs:
        plain = verify_pair(by_id[q], by_id[m], cfg.geometry, cfg.use_points, True,
                            use_rotation_filter=False)
        filtered = verify_pair(by_id[q], by_id[m], cfg.geometry, cfg.use_points, True,
                               use_rotation_filter=True)
        nndr += plain.line_inliers
        proposed += filtered.line_inliers
    return LineInlierComparison(
        pairs=len(pairs), nndr_mean=nndr / len(pairs), proposed_mean=proposed / len(pairs),
    )
