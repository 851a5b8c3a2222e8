import numpy as np
import pytest

from segdet import cli
from segdet.config import RunConfig, parse_config, validate_config, write_config
from segdet.errors import ConfigError
from segdet.imaging import BoxI
from segdet.segments import SegmentKind


class TestConfig:
    def test_defaults_are_valid(self):
        validate_config(RunConfig())

    def test_parse_and_override(self, tmp_path):
        p = tmp_path / "run.cfg"
        p.write_text(
            "# run settings\n"
            "seed = 42\n"
            "proposals.zeta = 5\n"
            "svm.lambda = 0.001\n"
            "net.freeze_columns = true\n"
            "segments.layout = full\n"
        )
        cfg = parse_config(p)
        assert cfg.seed == 42
        assert cfg.proposals.zeta == 5
        assert cfg.svm.lam == 0.001
        assert cfg.net.freeze_columns is True
        assert cfg.layout_scale == "full"
        assert cfg.layout().canonical[SegmentKind.NOSE] == (69, 81)

    def test_unknown_key_rejected(self, tmp_path):
        p = tmp_path / "run.cfg"
        p.write_text("proposals.zetta = 3\n")
        with pytest.raises(ConfigError, match="zetta"):
            parse_config(p)

    def test_range_violation_names_field(self, tmp_path):
        p = tmp_path / "run.cfg"
        p.write_text("proposals.zeta = 0\n")
        with pytest.raises(ConfigError, match="proposals.zeta"):
            parse_config(p)

    def test_layout_override_entry(self, tmp_path):
        p = tmp_path / "run.cfg"
        p.write_text("segments.layout = toy\nsegments.layout.Nose = 0.25 0.3 0.75 0.8 20 24\n")
        cfg = parse_config(p)
        layout = cfg.layout()
        assert layout.canonical[SegmentKind.NOSE] == (20, 24)
        assert layout.regions[SegmentKind.NOSE].u0 == 0.25

    def test_write_then_parse_fixed_point(self, tmp_path):
        cfg = RunConfig()
        cfg.seed = 17
        cfg.proposals.zeta = 8
        p1, p2 = tmp_path / "a.cfg", tmp_path / "b.cfg"
        write_config(cfg, p1)
        back = parse_config(p1)
        assert back.seed == 17 and back.proposals.zeta == 8
        write_config(back, p2)
        assert p1.read_text() == p2.read_text()


class TestCliExitCodes:
    def test_validate_config_ok(self, tmp_path, capsys):
        p = tmp_path / "run.cfg"
        p.write_text("seed = 1\n")
        assert cli.main(["validate-config", "--config", str(p)]) == 0
        assert "config ok" in capsys.readouterr().out

    def test_validate_config_bad_zeta(self, tmp_path, capsys):
        p = tmp_path / "run.cfg"
        p.write_text("proposals.zeta = 0\n")
        assert cli.main(["validate-config", "--config", str(p)]) == 2
        assert "proposals.zeta" in capsys.readouterr().err

    def test_missing_config_file(self, tmp_path):
        assert cli.main(["validate-config", "--config", str(tmp_path / "none.cfg")]) == 2

    def test_missing_input_exit_code(self, tmp_path):
        p = tmp_path / "run.cfg"
        p.write_text("seed = 1\n")
        assert cli.main(["train-weak", "--config", str(p)]) == 3

    def test_missing_model_exit_code(self, tmp_path):
        p = tmp_path / "run.cfg"
        p.write_text("seed = 1\nsynth.train_count = 2\nsynth.test_count = 2\n")
        assert cli.main(["synth", "--config", str(p)]) == 0
        assert cli.main(["detect-segments", "--config", str(p), "--split", "train"]) == 3

    def test_seed_flag_overrides_config(self, tmp_path):
        p = tmp_path / "run.cfg"
        p.write_text("seed = 1\nsynth.train_count = 3\nsynth.test_count = 2\n")
        assert cli.main(["synth", "--config", str(p), "--seed", "2"]) == 0
        first = (tmp_path / "data/train/annotations.csv").read_text()
        assert cli.main(["synth", "--config", str(p)]) == 0
        second = (tmp_path / "data/train/annotations.csv").read_text()
        assert first != second


class TestFacesFormat:
    def test_round_trip(self, tmp_path):
        rows = [
            ("img_a", (BoxI(1, 2, 3, 4), 0.75)),
            ("img_b", None),
        ]
        p = tmp_path / "faces.csv"
        cli.save_faces(rows, p)
        back = cli.load_faces(p)
        assert back == dict(rows)
        lines = p.read_text().splitlines()
        assert lines[2] == "img_b,,,,,"


def test_interior_face_detection():
    a = type("A", (), {"face": BoxI(0, 5, 10, 10)})
    assert not cli._interior_face(a, 160, 120)
    b = type("A", (), {"face": BoxI(3, 5, 10, 10)})
    assert cli._interior_face(b, 160, 120)
    c = type("A", (), {"face": None})
    assert not cli._interior_face(c, 160, 120)
