import math

from pydantic import BaseModel, ConfigDict, Field


def _ratio(num: int, den: int, empty: float) -> float:
    return num / den if den else empty


class ScoreResult(BaseModel):
    model_config = ConfigDict(frozen=True)

    tp: int = Field(0, ge=0)
    fp: int = Field(0, ge=0)
    loop_queries: int = Field(0, ge=0)

    @property
    def accepted(self) -> int:
        return self.tp + self.fp

    @property
    def precision(self) -> float:
        return _ratio(self.tp, self.tp + self.fp, 1.0)

    @property
    def recall(self) -> float:
        return _ratio(self.tp, self.loop_queries, 0.0)

    def render(self) -> str:
        return (
            f"precision = {self.precision:.4f}\n"
            f"recall = {self.recall:.4f}\n"
            f"tp = {self.tp}\n"
            f"fp = {self.fp}\n"
            f"loop_queries = {self.loop_queries}\n"
        )


class PRPoint(BaseModel):
    model_config = ConfigDict(frozen=True)

    threshold: float
    precision: float = Field(ge=0, le=1)
    recall: float = Field(ge=0, le=1)
    tp: int = Field(ge=0)
    fp: int = Field(ge=0)

    def csv_row(self) -> str:
        threshold = "inf" if math.isinf(self.threshold) else f"{self.threshold:g}"
        return f"{threshold},{self.precision:.6f},{self.recall:.6f},{self.tp},{self.fp}"


class SweepResult(BaseModel):
    model_config = ConfigDict(frozen=True)

    points: tuple[PRPoint, ...] = ()

    @property
    def max_recall_at_p100(self) -> float:
        return max((p.recall for p in self.points if p.precision == 1.0), default=0.0)

    def to_csv(self) -> str:
        return "threshold,precision,recall,tp,fp\n" + "".join(p.csv_row() + "\n" for p in self.points)

    def render(self) -> str:
        return f"max_recall_at_p100 = {self.max_recall_at_p100:.4f}\n"


class LineInlierComparison(BaseModel):
    model_config = ConfigDict(frozen=True)

    pairs: int = 0
    nndr_mean: float = 0.0
    proposed_mean: float = 0.0

    def render(self) -> str:
        return (
            f"{'matcher':<12}{'mean_line_inliers':>20}\n"
            f"{'NNDR':<12}{self.nndr_mean:>20.2f}\n"
            f"{'proposed':<12}{self.proposed_mean:>20.2f}\n"
            f"pairs = {self.pairs}\n"
        )
