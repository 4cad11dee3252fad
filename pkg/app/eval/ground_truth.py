"""Ground-truth files.

    # comment
    TOL <frames>
    G <query_id> <match_id>

``TOL`` is optional (default 0) and may appear once, before any pair.
"""
from collections import defaultdict
from dataclasses import dataclass, field
from pathlib import Path
from typing import Iterable

from app.core.errors import GroundTruthError, decode_error_line


@dataclass(frozen=True)
class GroundTruth:
    pairs: frozenset[tuple[int, int]] = frozenset()
    tolerance: int = 0
    _by_query: dict = field(init=False, repr=False, compare=False)

    def __post_init__(self):
        if self.tolerance < 0:
            raise GroundTruthError("La tolerancia no puede ser negativa")
        object.__setattr__(self, "pairs", frozenset(self.pairs))
        by_query = defaultdict(list)
        for q, m in sorted(self.pairs):
            by_query[q].append(m)
        object.__setattr__(self, "_by_query", dict(by_query))

    @classmethod
    def from_pairs(cls, pairs: Iterable[tuple[int, int]], tolerance: int = 0) -> "GroundTruth":
        return cls(frozenset((int(q), int(m)) for q, m in pairs), tolerance)

    @property
    def queries(self) -> set[int]:
        return set(self._by_query)

    @property
    def frame_ids(self) -> set[int]:
        return {f for pair in self.pairs for f in pair}

    def matches_for(self, query: int) -> list[int]:
        return self._by_query.get(query, [])

    def is_correct(self, query: int, match: int) -> bool:
        return any(abs(match - m) <= self.tolerance for m in self.matches_for(query))

    def dumps(self) -> str:
        out = [f"TOL {self.tolerance}"]
        out += [f"G {q} {m}" for q, m in sorted(self.pairs)]
        return "\n".join(out) + "\n"

    def save(self, path: Path | str) -> None:
        Path(path).write_text(self.dumps(), encoding="utf-8")


def loads_ground_truth(text: str, path: Path | str = "<memoria>") -> GroundTruth:
    tolerance = None
    pairs = set()
    for line_no, raw in enumerate(text.splitlines(), start=1):
        line = raw.split("#", 1)[0].strip()
        if not line:
            continue
        fields = line.split()
        try:
            if fields[0] == "TOL" and len(fields) == 2:
                if tolerance is not None or pairs:
                    raise GroundTruthError(f"{path}:{line_no}: TOL debe aparecer una vez, al principio")
                tolerance = int(fields[1])
            elif fields[0] == "G" and len(fields) == 3:
                pairs.add((int(fields[1]), int(fields[2])))
            else:
                raise GroundTruthError(f"{path}:{line_no}: línea no reconocida '{line}'")
        except ValueError:
            raise GroundTruthError(f"{path}:{line_no}: entero inválido en '{line}'")
    return GroundTruth(frozenset(pairs), tolerance or 0)


def load_ground_truth(path: Path | str) -> GroundTruth:
    path = Path(path)
    if not path.is_file():
        raise GroundTruthError(f"No existe el fichero de ground truth {path}")
    try:
        text = path.read_bytes().decode("utf-8")
    except UnicodeDecodeError as e:
        raise GroundTruthError(f"{path}:{decode_error_line(e)}: el fichero no está en UTF-8") from e
    return loads_ground_truth(text, path)
