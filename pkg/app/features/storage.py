"""Text feature files.

    LIPO-FEATURES v1 <frame_id> <n_points> <n_lines> <descriptor_bits>
    P <x> <y> <orientation> <response> <hex descriptor>
    L <sx> <sy> <ex> <ey> <hex descriptor>

Floats are written with ``repr`` so a save/load cycle is bit-exact.
"""
import logging
from pathlib import Path

import numpy as np

from app.core.config import DESCRIPTOR_BITS, FEATURE_FILE_MAGIC, FEATURE_FILE_VERSION
from app.core.descriptors import from_hex, to_hex
from app.core.errors import DescriptorWidthError, FeatureFormatError, decode_error_line
from app.schemas.features import FrameFeatures, KeyPoint, LineSegment

logger = logging.getLogger(__name__)


def dumps_features(f: FrameFeatures) -> str:
    out = [
        f"{FEATURE_FILE_MAGIC} {FEATURE_FILE_VERSION} {f.frame_id} "
        f"{len(f.keypoints)} {len(f.lines)} {f.descriptor_bits}"
    ]
    for kp, d in zip(f.keypoints, f.point_descriptors):
        out.append(f"P {kp.x!r} {kp.y!r} {kp.orientation!r} {kp.response!r} {to_hex(d)}")
    for ln, d in zip(f.lines, f.line_descriptors):
        out.append(f"L {ln.start[0]!r} {ln.start[1]!r} {ln.end[0]!r} {ln.end[1]!r} {to_hex(d)}")
    return "\n".join(out) + "\n"


def save_features(f: FrameFeatures, path: Path | str) -> None:
    Path(path).write_text(dumps_features(f), encoding="ascii")


def _floats(path, line_no, fields):
    try:
        return [float(v) for v in fields]
    except ValueError:
        raise FeatureFormatError(path, line_no, f"número inválido en {fields}")


def _descriptor(path, line_no, text, bits):
    if len(text) != bits // 4:
        raise FeatureFormatError(
            path, line_no, f"descriptor de {len(text)} caracteres hex, se esperaban {bits // 4}"
        )
    try:
        return from_hex(text, bits)
    except ValueError:
        raise FeatureFormatError(path, line_no, "descriptor hexadecimal inválido")


def loads_features(text: str, path: Path | str = "<memoria>",
                   expected_bits: int = DESCRIPTOR_BITS) -> FrameFeatures:
    lines = text.splitlines()
    if not lines:
        raise FeatureFormatError(path, 1, "fichero vacío")
    header = lines[0].split()
    if len(header) != 6 or header[0] != FEATURE_FILE_MAGIC or header[1] != FEATURE_FILE_VERSION:
        raise FeatureFormatError(path, 1, "cabecera inválida")
    try:
        frame_id, n_points, n_lines, bits = (int(v) for v in header[2:])
    except ValueError:
        raise FeatureFormatError(path, 1, "cabecera con enteros inválidos")
    if bits != expected_bits:
        raise DescriptorWidthError(bits, expected_bits, str(path))
    body = lines[1:]
    if len(body) != n_points + n_lines:
        raise FeatureFormatError(
            path, len(lines) + 1,
            f"se esperaban {n_points + n_lines} registros, hay {len(body)}",
        )

    keypoints, point_desc, segments, line_desc = [], [], [], []
    for offset, raw in enumerate(body):
        line_no = offset + 2
        fields = raw.split()
        tag = "P" if offset < n_points else "L"
        if len(fields) != 6 or fields[0] != tag:
            raise FeatureFormatError(path, line_no, f"se esperaba un registro '{tag}' de 6 campos")
        a, b, c, d = _floats(path, line_no, fields[1:5])
        desc = _descriptor(path, line_no, fields[5], bits)
        try:
            if tag == "P":
                keypoints.append(KeyPoint(x=a, y=b, orientation=c, response=d))
                point_desc.append(desc)
            else:
                segments.append(LineSegment((a, b), (c, d)))
                line_desc.append(desc)
        except ValueError as e:
            raise FeatureFormatError(path, line_no, str(e))

    n_bytes = bits // 8
    return FrameFeatures(
        frame_id=frame_id,
        keypoints=tuple(keypoints),
        point_descriptors=np.array(point_desc, dtype=np.uint8).reshape(-1, n_bytes),
        lines=tuple(segments),
        line_descriptors=np.array(line_desc, dtype=np.uint8).reshape(-1, n_bytes),
        descriptor_bits=bits,
    )


def load_features(path: Path | str, expected_bits: int = DESCRIPTOR_BITS) -> FrameFeatures:
    path = Path(path)
    try:
        text = path.read_bytes().decode("ascii")
    except UnicodeDecodeError as e:
        raise FeatureFormatError(path, decode_error_line(e), "carácter no ASCII") from e
    return loads_features(text, path, expected_bits)
