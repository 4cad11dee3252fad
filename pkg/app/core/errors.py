from pathlib import Path
from typing import Iterable, Optional


class LipoError(Exception):
    """Base class for every error raised by the loop-closure engine."""


class ConfigError(LipoError):
    pass


class FeatureFormatError(LipoError):
    def __init__(self, path: Path | str, line_no: int, message: str):
        self.path = Path(path)
        self.line_no = line_no
        super().__init__(f"{self.path}:{line_no}: {message}")


class DescriptorWidthError(LipoError):
    def __init__(self, found: int, expected: int, where: str = ""):
        self.found = found
        self.expected = expected
        prefix = f"{where}: " if where else ""
        super().__init__(
            f"{prefix}descriptor de {found} bits, se esperaban {expected}"
        )


class DuplicateFrameError(LipoError):
    def __init__(self, frame_id: int):
        self.frame_id = frame_id
        super().__init__(f"El frame {frame_id} ya existe en el vocabulario")


class FrameOrderError(LipoError):
    def __init__(self, frame_id: int, last_id: int):
        self.frame_id = frame_id
        self.last_id = last_id
        super().__init__(
            f"Frame {frame_id} fuera de orden (último procesado: {last_id})"
        )


class ImageReadError(LipoError):
    def __init__(self, path: Path | str, reason: str = "no se pudo leer"):
        self.path = Path(path)
        super().__init__(f"{self.path}: {reason}")


class SequenceError(LipoError):
    """Wraps a source failure with the frame it happened on."""

    def __init__(self, index: int, source: Optional[str], cause: Exception):
        self.index = index
        self.source = source
        self.cause = cause
        where = f" ({source})" if source else ""
        super().__init__(f"frame {index}{where}: {cause}")


class GroundTruthError(LipoError):
    pass


class SequenceMismatchError(LipoError):
    def __init__(self, frame_ids: Iterable[int]):
        self.frame_ids = sorted(set(frame_ids))
        shown = ", ".join(str(f) for f in self.frame_ids[:20])
        more = "..." if len(self.frame_ids) > 20 else ""
        super().__init__(
            f"El ground truth no corresponde a la secuencia; frames: {shown}{more}"
        )


class SnapshotError(LipoError):
    pass


class DecisionLogError(LipoError):
    def __init__(self, path: Path | str, line_no: int, message: str):
        self.path = Path(path)
        self.line_no = line_no
        super().__init__(f"{self.path}:{line_no}: {message}")


def decode_error_line(e: UnicodeDecodeError) -> int:
    """1-based line holding the first undecodable byte."""
    return e.object[:e.start].count(b"\n") + 1
