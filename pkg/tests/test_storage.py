import numpy as np
import pytest

from app.core.descriptors import random_descriptors
from app.core.errors import DescriptorWidthError, FeatureFormatError
from app.features.storage import dumps_features, load_features, loads_features, save_features
from app.schemas.features import FrameFeatures, KeyPoint, LineSegment


@pytest.fixture
def frame(rng):
    keypoints = tuple(
        KeyPoint(x=float(x), y=float(y), orientation=float(a), response=float(r))
        for x, y, a, r in rng.uniform(0, 300, (5, 4))
    )
    lines = tuple(LineSegment(tuple(a), tuple(a + 25.0)) for a in rng.uniform(0, 300, (3, 2)))
    return FrameFeatures(
        frame_id=42,
        keypoints=keypoints,
        point_descriptors=random_descriptors(rng, 5),
        lines=lines,
        line_descriptors=random_descriptors(rng, 3),
    )


class TestRoundTrip:
    def test_save_load_is_exact(self, frame, tmp_path):
        path = tmp_path / "f.lipofeat"
        save_features(frame, path)
        assert load_features(path) == frame

    def test_resave_gives_identical_bytes(self, frame, tmp_path):
        a, b = tmp_path / "a.lipofeat", tmp_path / "b.lipofeat"
        save_features(frame, a)
        save_features(load_features(a), b)
        assert a.read_bytes() == b.read_bytes()

    def test_header_only(self):
        empty = loads_features("LIPO-FEATURES v1 3 0 0 256\n")
        assert empty.frame_id == 3
        assert empty.is_empty
        assert empty.point_descriptors.shape == (0, 32)

    def test_header_layout(self, frame):
        first = dumps_features(frame).splitlines()[0]
        assert first == "LIPO-FEATURES v1 42 5 3 256"


class TestErrors:
    def test_truncated_descriptor(self, frame):
        lines = dumps_features(frame).splitlines()
        lines[2] = lines[2][:-2]
        with pytest.raises(FeatureFormatError) as err:
            loads_features("\n".join(lines), "frame.lipofeat")
        assert err.value.line_no == 3

    def test_missing_records(self, frame):
        lines = dumps_features(frame).splitlines()
        with pytest.raises(FeatureFormatError):
            loads_features("\n".join(lines[:-1]))

    def test_bad_header(self):
        with pytest.raises(FeatureFormatError):
            loads_features("NOT-A-FEATURE-FILE\n")
        with pytest.raises(FeatureFormatError):
            loads_features("")

    def test_width_mismatch(self):
        with pytest.raises(DescriptorWidthError):
            loads_features("LIPO-FEATURES v1 0 0 0 128\n")

    def test_wrong_record_order(self, frame):
        lines = dumps_features(frame).splitlines()
        lines[1], lines[-1] = lines[-1], lines[1]
        with pytest.raises(FeatureFormatError):
            loads_features("\n".join(lines))

    def test_unwritable_path(self, frame, tmp_path):
        with pytest.raises(OSError):
            save_features(frame, tmp_path / "missing" / "f.lipofeat")

    def test_bad_number(self):
        text = "LIPO-FEATURES v1 0 1 0 256\nP x 1.0 0.0 0.0 " + "00" * 32 + "\n"
        with pytest.raises(FeatureFormatError):
            loads_features(text)

    def test_not_ascii(self, frame, tmp_path):
        path = tmp_path / "f.lipofeat"
        path.write_bytes(dumps_features(frame).encode("ascii") + "P ñ\n".encode("utf-8"))
        with pytest.raises(FeatureFormatError) as err:
            load_features(path)
        assert err.value.line_no == len(dumps_features(frame).splitlines()) + 1


def test_loaded_descriptors_are_read_only(frame, tmp_path):
    path = tmp_path / "f.lipofeat"
    save_features(frame, path)
    loaded = load_features(path)
    assert not loaded.point_descriptors.flags.writeable
    assert np.array_equal(loaded.line_descriptors, frame.line_descriptors)
