from enum import Enum
from pathlib import Path
from typing import Iterable, Optional

from pydantic import BaseModel, ConfigDict, Field, model_validator

from app.core.errors import DecisionLogError, decode_error_line

LOG_FIELDS = (
    "frame_id", "status", "matched_id", "beta", "point_inliers", "line_inliers",
    "t_fe", "t_vu", "t_sc", "t_sv",
)


class DecisionStatus(str, Enum):
    no_candidates = "no_candidates"
    rejected_verification = "rejected_verification"
    accepted = "accepted"


class LoopDecision(BaseModel):
    model_config = ConfigDict(frozen=True)

    frame_id: int
    status: DecisionStatus
    matched_id: Optional[int] = None
    beta: float = 0.0
    point_inliers: int = Field(0, ge=0)
    line_inliers: int = Field(0, ge=0)
    t_fe: float = 0.0
    t_vu: float = 0.0
    t_sc: float = 0.0
    t_sv: float = 0.0
    # per-feature split, kept for the timing summary only
    t_fe_points: float = 0.0
    t_fe_lines: float = 0.0
    t_vu_points: float = 0.0
    t_vu_lines: float = 0.0
    t_sc_points: float = 0.0
    t_sc_lines: float = 0.0

    @model_validator(mode="after")
    def _matched_when_verified(self):
        if self.status is not DecisionStatus.no_candidates and self.matched_id is None:
            raise ValueError(f"Decisión '{self.status.value}' sin frame candidato")
        return self

    @property
    def accepted(self) -> bool:
        return self.status is DecisionStatus.accepted

    @property
    def inliers(self) -> int:
        return self.point_inliers + self.line_inliers

    def to_log_line(self) -> str:
        matched = -1 if self.matched_id is None else self.matched_id
        return "\t".join([
            str(self.frame_id), self.status.value, str(matched), f"{self.beta:.6f}",
            str(self.point_inliers), str(self.line_inliers),
            f"{self.t_fe:.3f}", f"{self.t_vu:.3f}", f"{self.t_sc:.3f}", f"{self.t_sv:.3f}",
        ])

    @classmethod
    def from_log_line(cls, line: str, path: Path | str = "<log>", line_no: int = 1) -> "LoopDecision":
        fields = line.rstrip("\n").split("\t")
        if len(fields) != len(LOG_FIELDS):
            raise DecisionLogError(path, line_no, f"se esperaban {len(LOG_FIELDS)} columnas")
        try:
            matched = int(fields[2])
            return cls(
                frame_id=int(fields[0]),
                status=DecisionStatus(fields[1]),
                matched_id=None if matched < 0 else matched,
                beta=float(fields[3]),
                point_inliers=int(fields[4]),
                line_inliers=int(fields[5]),
                t_fe=float(fields[6]),
                t_vu=float(fields[7]),
                t_sc=float(fields[8]),
                t_sv=float(fields[9]),
            )
        except ValueError as e:
            raise DecisionLogError(path, line_no, str(e)) from e


def write_decision_log(decisions: Iterable[LoopDecision], path: Path | str) -> None:
    Path(path).write_text("".join(d.to_log_line() + "\n" for d in decisions), encoding="utf-8")


def read_decision_log(path: Path | str) -> list[LoopDecision]:
    path = Path(path)
    try:
        text = path.read_bytes().decode("utf-8")
    except UnicodeDecodeError as e:
        raise DecisionLogError(path, decode_error_line(e), "el log no está en UTF-8") from e
    decisions = []
    for line_no, line in enumerate(text.splitlines(), start=1):
        if line.strip():
            decisions.append(LoopDecision.from_log_line(line, path, line_no))
    return decisions


def _mean(values: list[float]) -> float:
    return sum(values) / len(values) if values else 0.0


class StageTimes(BaseModel):
    model_config = ConfigDict(frozen=True)

    fe: float = 0.0
    vu: float = 0.0
    sc: float = 0.0
    sv: float = 0.0

    @property
    def total(self) -> float:
        return self.fe + self.vu + self.sc + self.sv


class RunSummary(BaseModel):
    model_config = ConfigDict(frozen=True)

    frames: int = 0
    accepted: int = 0
    rejected_verification: int = 0
    no_candidates: int = 0
    points: StageTimes = StageTimes()
    lines: StageTimes = StageTimes()
    combined: StageTimes = StageTimes()

    @classmethod
    def from_decisions(cls, decisions: list[LoopDecision]) -> "RunSummary":
        counts = {s: 0 for s in DecisionStatus}
        for d in decisions:
            counts[d.status] += 1

        def mean(attr: str) -> float:
            return _mean([getattr(d, attr) for d in decisions])

        return cls(
            frames=len(decisions),
            accepted=counts[DecisionStatus.accepted],
            rejected_verification=counts[DecisionStatus.rejected_verification],
            no_candidates=counts[DecisionStatus.no_candidates],
            points=StageTimes(fe=mean("t_fe_points"), vu=mean("t_vu_points"), sc=mean("t_sc_points")),
            lines=StageTimes(fe=mean("t_fe_lines"), vu=mean("t_vu_lines"), sc=mean("t_sc_lines")),
            combined=StageTimes(fe=mean("t_fe"), vu=mean("t_vu"), sc=mean("t_sc"), sv=mean("t_sv")),
        )

    def render(self) -> str:
        """Mean milliseconds per frame, one row per feature type."""
        out = [
            f"frames: {self.frames}  accepted: {self.accepted}  "
            f"rejected_verification: {self.rejected_verification}  no_candidates: {self.no_candidates}",
            f"{'':<10}{'FE':>10}{'VU':>10}{'SC':>10}{'SV':>10}{'Total':>10}",
        ]
        for label, row in (("Points", self.points), ("Lines", self.lines), ("Combined", self.combined)):
            sv = f"{row.sv:>10.2f}" if label == "Combined" else f"{'-':>10}"
            out.append(f"{label:<10}{row.fe:>10.2f}{row.vu:>10.2f}{row.sc:>10.2f}{sv}{row.total:>10.2f}")
        return "\n".join(out) + "\n"
