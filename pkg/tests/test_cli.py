import cv2
import numpy as np
import pytest
from typer.testing import CliRunner

from app.cli import app
from app.eval.ground_truth import load_ground_truth
from app.eval.metrics import evaluation_report
from app.schemas.decision import DecisionStatus, read_decision_log

runner = CliRunner()


def invoke(*args: str):
    return runner.invoke(app, [str(a) for a in args])


def board(shift: int = 0) -> np.ndarray:
    img = np.full((144, 144), 128, dtype=np.uint8)
    for r in range(4):
        for c in range(4):
            y, x = 32 + r * 20, 32 + c * 20
            img[y:y + 20, x:x + 20] = 255 if (r + c) % 2 else 0
    return np.roll(img, shift, axis=1)


@pytest.fixture
def synth_dir(tmp_path):
    out = tmp_path / "seq"
    result = invoke("synth", "--out", out, "--frames", 20, "--revisits", 0)
    assert result.exit_code == 0, result.output
    return out


@pytest.fixture
def image_dir(tmp_path):
    images = tmp_path / "images"
    images.mkdir()
    for i, shift in enumerate((0, 3, 6)):
        cv2.imwrite(str(images / f"frame{i}.png"), board(shift))
    return images


class TestSynth:
    def test_writes_sequence(self, synth_dir):
        assert len(list(synth_dir.glob("*.lipofeat"))) == 20
        assert (synth_dir / "groundtruth.txt").is_file()

    def test_toy_run(self, tmp_path):
        seq = tmp_path / "toy"
        assert invoke("synth", "--out", seq, "--frames", 3, "--revisits", 0).exit_code == 0
        out = tmp_path / "out"
        result = invoke("run", seq, "--features", "import", "--no-timings", "--out", out)
        assert result.exit_code == 0, result.output
        decisions = read_decision_log(out / "decisions.log")
        assert [d.frame_id for d in decisions] == [0, 1, 2]
        assert decisions[0].status is DecisionStatus.no_candidates

    def test_invalid_parameters(self, tmp_path):
        result = invoke("synth", "--out", tmp_path / "x", "--aliasing", 2)
        assert result.exit_code == 2


class TestRun:
    def test_reproducible_log(self, synth_dir, tmp_path):
        for name in ("a", "b"):
            result = invoke("run", synth_dir, "--features", "import", "--no-timings", "--out", tmp_path / name)
            assert result.exit_code == 0, result.output
        first = (tmp_path / "a" / "decisions.log").read_bytes()
        assert first == (tmp_path / "b" / "decisions.log").read_bytes()
        assert len(first.decode().splitlines()) == 20
        assert "Combined" in (tmp_path / "a" / "summary.txt").read_text()

    def test_save_vocab(self, synth_dir, tmp_path):
        result = invoke("run", synth_dir, "--features", "import", "--out", tmp_path / "o",
                        "--save-vocab", tmp_path / "voc")
        assert result.exit_code == 0, result.output
        assert (tmp_path / "voc" / "points.voc").is_file()
        assert (tmp_path / "voc" / "lines.voc").is_file()

    def test_bad_config(self, synth_dir, tmp_path):
        conf = tmp_path / "bad.conf"
        conf.write_text("geometry.bogus = 1\n")
        result = invoke("run", synth_dir, "--features", "import", "--config", conf, "--out", tmp_path / "o")
        assert result.exit_code == 2

    def test_unparseable_config_line(self, synth_dir, tmp_path):
        conf = tmp_path / "bad.conf"
        conf.write_text("gating_window 7\nfusion.penalty_factor = 0.25\n")
        result = invoke("run", synth_dir, "--features", "import", "--config", conf, "--out", tmp_path / "o")
        assert result.exit_code == 2
        assert "bad.conf:1" in result.output
        assert not (tmp_path / "o" / "decisions.log").exists()

    def test_missing_dataset(self, tmp_path):
        assert invoke("run", tmp_path / "nope", "--out", tmp_path / "o").exit_code == 2

    def test_wrong_feature_mode(self, synth_dir, tmp_path):
        assert invoke("run", synth_dir, "--out", tmp_path / "o").exit_code == 2

    def test_extract_and_import_agree(self, image_dir, tmp_path):
        result = invoke("run", image_dir, "--no-timings", "--out", tmp_path / "direct")
        assert result.exit_code == 0, result.output
        assert invoke("extract", image_dir, "--out", tmp_path / "feat").exit_code == 0
        result = invoke("run", tmp_path / "feat", "--features", "import", "--no-timings",
                        "--out", tmp_path / "imported")
        assert result.exit_code == 0, result.output
        direct = (tmp_path / "direct" / "decisions.log").read_bytes()
        assert direct == (tmp_path / "imported" / "decisions.log").read_bytes()


class TestEval:
    def test_report(self, synth_dir, tmp_path):
        invoke("run", synth_dir, "--features", "import", "--no-timings", "--out", tmp_path / "o")
        log = tmp_path / "o" / "decisions.log"
        gt = synth_dir / "groundtruth.txt"
        result = invoke("eval", log, gt)
        assert result.exit_code == 0, result.output
        assert result.output == evaluation_report(read_decision_log(log), load_ground_truth(gt))
        assert "precision = 1.0000" in result.output
        assert "max_recall_at_p100 = 0.0000" in result.output

    def test_mismatched_ground_truth(self, synth_dir, tmp_path):
        invoke("run", synth_dir, "--features", "import", "--no-timings", "--out", tmp_path / "o")
        gt = tmp_path / "gt.txt"
        gt.write_text("G 500 1\n")
        assert invoke("eval", tmp_path / "o" / "decisions.log", gt).exit_code == 2

    def test_malformed_log(self, synth_dir, tmp_path):
        log = tmp_path / "broken.log"
        log.write_text("0\taccepted\n")
        assert invoke("eval", log, synth_dir / "groundtruth.txt").exit_code == 1

    def test_log_not_utf8(self, synth_dir, tmp_path):
        log = tmp_path / "latin1.log"
        log.write_bytes("0\tno_candidates\t-1 é\n".encode("latin-1"))
        result = invoke("eval", log, synth_dir / "groundtruth.txt")
        assert result.exit_code == 1
        assert isinstance(result.exception, SystemExit)
        assert "UTF-8" in result.output

    def test_sweep(self, synth_dir, tmp_path):
        result = invoke("sweep", synth_dir, synth_dir / "groundtruth.txt", "--features", "import",
                        "--out", tmp_path / "pr", "--thresholds", "8,12,inf")
        assert result.exit_code == 0, result.output
        lines = (tmp_path / "pr" / "pr.csv").read_text().splitlines()
        assert lines[0] == "threshold,precision,recall,tp,fp"
        assert [l.split(",")[0] for l in lines[1:]] == ["8", "12", "inf"]

    def test_sweep_bad_thresholds(self, synth_dir, tmp_path):
        result = invoke("sweep", synth_dir, synth_dir / "groundtruth.txt", "--features", "import",
                        "--out", tmp_path / "pr", "--thresholds", "8,muchos")
        assert result.exit_code == 2

    def test_ab_lines(self, synth_dir):
        result = invoke("ab-lines", synth_dir, "--features", "import")
        assert result.exit_code == 0, result.output
        assert "proposed" in result.output


class TestExtract:
    def test_empty_directory(self, tmp_path):
        (tmp_path / "empty").mkdir()
        result = invoke("extract", tmp_path / "empty", "--out", tmp_path / "feat")
        assert result.exit_code == 0, result.output
        assert list((tmp_path / "feat").iterdir()) == []

    def test_file_names(self, image_dir, tmp_path):
        assert invoke("extract", image_dir, "--out", tmp_path / "feat").exit_code == 0
        names = sorted(p.name for p in (tmp_path / "feat").iterdir())
        assert names == ["000000_frame0.lipofeat", "000001_frame1.lipofeat", "000002_frame2.lipofeat"]

    def test_deterministic(self, image_dir, tmp_path):
        for name in ("a", "b"):
            assert invoke("extract", image_dir, "--out", tmp_path / name).exit_code == 0
        for p in (tmp_path / "a").iterdir():
            assert p.read_bytes() == (tmp_path / "b" / p.name).read_bytes()

    def test_corrupt_image(self, image_dir, tmp_path):
        (image_dir / "bad.png").write_bytes(b"not an image")
        result = invoke("extract", image_dir, "--out", tmp_path / "skip", "--continue-on-error")
        assert result.exit_code == 0
        assert "bad.png" in result.output
        assert len(list((tmp_path / "skip").iterdir())) == 3

        assert invoke("extract", image_dir, "--out", tmp_path / "abort").exit_code == 1

    def test_not_a_directory(self, tmp_path):
        assert invoke("extract", tmp_path / "nope", "--out", tmp_path / "feat").exit_code == 2
