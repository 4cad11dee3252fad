"""Dynamic islands: temporally grouped candidates scored by mean β over their span."""
import logging
from dataclasses import dataclass
from typing import Iterable, Optional

from app.loop.fusion import FusedCandidate

logger = logging.getLogger(__name__)


@dataclass(frozen=True)
class Island:
    m: int
    n: int
    members: tuple[tuple[int, float], ...]

    @property
    def g(self) -> float:
        return sum(beta for _, beta in self.members) / (self.n - self.m + 1)

    @property
    def span(self) -> int:
        return self.n - self.m + 1

    def overlaps(self, other: "Island") -> bool:
        return self.m <= other.n and other.m <= self.n

    def representative(self) -> int:
        frame_id, _ = min(self.members, key=lambda fb: (-fb[1], fb[0]))
        return frame_id

    def beta_of(self, frame_id: int) -> float:
        return dict(self.members)[frame_id]


@dataclass(frozen=True)
class IslandSelection:
    island: Optional[Island] = None
    representative: Optional[int] = None
    priority_used: bool = False

    @property
    def empty(self) -> bool:
        return self.island is None


def build_islands(candidates: Iterable[FusedCandidate], gap: int) -> list[Island]:
    """Group candidates in list order; a candidate within ``gap`` of an island joins it.

    A candidate reaching several islands merges them, so the resulting islands
    are separated by more than ``gap`` frames.
    """
    groups: list[list] = []  # [m, n, members]
    for cand in candidates:
        f = cand.frame_id
        touching = [grp for grp in groups if grp[0] - gap <= f <= grp[1] + gap]
        if not touching:
            groups.append([f, f, [(f, cand.beta)]])
            continue
        target = touching[0]
        target[2].append((f, cand.beta))
        for other in touching[1:]:
            target[2].extend(other[2])
            groups.remove(other)
        target[0] = min(fid for fid, _ in target[2])
        target[1] = max(fid for fid, _ in target[2])

    islands = [Island(m, n, tuple(members)) for m, n, members in groups]
    islands.sort(key=lambda isl: (-isl.g, isl.m))
    return islands


def select_island(islands: list[Island], previous: Optional[Island] = None) -> IslandSelection:
    if not islands:
        return IslandSelection()
    if previous is not None:
        priority = [isl for isl in islands if isl.overlaps(previous)]
        if priority:
            chosen = max(priority, key=lambda isl: (isl.g, -isl.m))
            return IslandSelection(chosen, chosen.representative(), priority_used=True)
    chosen = islands[0]
    return IslandSelection(chosen, chosen.representative(), priority_used=False)


def retain_for_next(selection: IslandSelection, verified: bool) -> Optional[Island]:
    if selection.empty or not verified:
        return None
    return selection.island
