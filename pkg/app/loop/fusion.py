"""Borda-count late fusion of the point and line candidate lists."""
import math
from dataclasses import dataclass
from typing import Optional

from app.schemas.config import FusionConfig
from app.vocab.index import CandidateList


@dataclass(frozen=True)
class FusedCandidate:
    frame_id: int
    beta: float
    b_p: Optional[float] = None
    b_l: Optional[float] = None

    @property
    def in_both(self) -> bool:
        return self.b_p is not None and self.b_l is not None


def borda_rank(candidates: CandidateList, c: int) -> dict[int, float]:
    """b = (c - i) * normalized score for the top ``c`` entries."""
    return {
        entry.frame_id: (c - i) * entry.normalized
        for i, entry in enumerate(candidates.entries[:max(c, 0)])
    }


def fusion_depth(points: CandidateList, lines: CandidateList) -> int:
    lengths = [len(lst) for lst in (points, lines) if len(lst)]
    return min(lengths) if lengths else 0


def merge_lists(points: CandidateList, lines: CandidateList,
                cfg: FusionConfig = FusionConfig()) -> list[FusedCandidate]:
    c = fusion_depth(points, lines)
    b_points = borda_rank(points, c)
    b_lines = borda_rank(lines, c)

    fused = []
    for frame_id in b_points.keys() | b_lines.keys():
        b_p = b_points.get(frame_id)
        b_l = b_lines.get(frame_id)
        if b_p is not None and b_l is not None:
            beta = math.sqrt(b_p * b_l)
        else:
            beta = cfg.penalty_factor * (b_p if b_p is not None else b_l)
        fused.append(FusedCandidate(frame_id, beta, b_p, b_l))
    fused.sort(key=lambda f: (-f.beta, f.frame_id))
    return fused
