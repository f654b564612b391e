"""Config schema and command-line behavior."""

import json

import pytest
from click.testing import CliRunner

from ringsim.cli import main
from ringsim.config import (
    CLI_TRAINING_DEFAULTS,
    ConfigError,
    ExperimentConfig,
    load_config,
    parse_config,
    substream_seed,
)
from ringsim.mdm import InterferometerModel, make_interferometer_spectrum


@pytest.fixture()
def runner():
    return CliRunner()


class TestConfig:
    def test_defaults(self):
        cfg = ExperimentConfig()
        assert cfg.seed == 0
        assert cfg.training.eta == CLI_TRAINING_DEFAULTS["eta"]
        assert cfg.training.target_error == \
            CLI_TRAINING_DEFAULTS["target_error"]

    def test_toml_roundtrip(self, tmp_path):
        p = tmp_path / "c.toml"
        p.write_text("schema_version = 1\nseed = 7\n"
                     "[training]\neta = 0.02\n")
        cfg = load_config(p)
        assert cfg.seed == 7
        assert cfg.training.eta == 0.02
        # unset fields keep their defaults
        assert cfg.training.target_error == \
            CLI_TRAINING_DEFAULTS["target_error"]

    def test_json_alternate_encoding(self, tmp_path):
        p = tmp_path / "c.json"
        p.write_text(json.dumps({"schema_version": 1, "seed": 7,
                                 "training": {"eta": 0.02}}))
        q = tmp_path / "c.toml"
        q.write_text("schema_version = 1\nseed = 7\n[training]\neta = 0.02\n")
        assert load_config(p) == load_config(q)

    def test_none_gives_defaults(self):
        assert load_config(None) == ExperimentConfig()

    @pytest.mark.parametrize("doc", [
        {},                                          # missing version
        {"schema_version": 2},                       # unsupported version
        {"schema_version": 1, "bogus": 1},           # unknown top-level
        {"schema_version": 1, "seed": -1},
        {"schema_version": 1, "seed": "zero"},
        {"schema_version": 1, "training": {"bogus": 1}},
        {"schema_version": 1, "training": {"eta": -1.0}},
        {"schema_version": 1, "training": {"seed": 3}},  # substream-owned
        {"schema_version": 1, "controller": {"kp": 0.0}},
        {"schema_version": 1, "sweep": {"grid_n": 1}},
        {"schema_version": 1, "osa": 5},
    ])
    def test_rejected_documents(self, doc):
        with pytest.raises(ConfigError):
            parse_config(doc)

    def test_missing_file(self, tmp_path):
        with pytest.raises(ConfigError):
            load_config(tmp_path / "nope.toml")

    def test_unparseable_file(self, tmp_path):
        p = tmp_path / "c.toml"
        p.write_text("schema_version = = 1\n")
        with pytest.raises(ConfigError):
            load_config(p)

    def test_unknown_suffix(self, tmp_path):
        p = tmp_path / "c.yaml"
        p.write_text("schema_version: 1\n")
        with pytest.raises(ConfigError):
            load_config(p)


class TestSubstreams:
    def test_deterministic(self):
        assert substream_seed(0, "noise") == substream_seed(0, "noise")

    def test_distinct_per_name(self):
        names = ("device-gen", "noise", "training-init", "data-gen")
        seeds = {substream_seed(0, n) for n in names}
        assert len(seeds) == len(names)

    def test_distinct_per_root(self):
        assert substream_seed(0, "noise") != substream_seed(1, "noise")

    def test_unknown_stream_rejected(self):
        with pytest.raises(ValueError):
            substream_seed(0, "typo-stream")


def read_manifest(out_dir):
    return json.loads((out_dir / "manifest.json").read_text())


class TestCalibrateBasicCommand:
    def test_success(self, runner, tmp_path):
        out = tmp_path / "out"
        res = runner.invoke(main, ["calibrate-basic", "--out", str(out)])
        assert res.exit_code == 0, res.output
        assert "passed: True" in res.output
        manifest = read_manifest(out)
        assert manifest["exit_code"] == 0
        assert set(manifest["artifacts"]) == {
            "calibration_model.json", "validation_report.json",
            "tracking.csv", "bias_spectrum.csv"}
        report = json.loads((out / "validation_report.json").read_text())
        assert report["passed"]

    def test_manifest_hashes_match_contents(self, runner, tmp_path):
        import hashlib
        out = tmp_path / "out"
        runner.invoke(main, ["calibrate-basic", "--out", str(out),
                             "--quiet"])
        for name, digest in read_manifest(out)["artifacts"].items():
            assert hashlib.sha256((out / name).read_bytes()).hexdigest() \
                == digest

    def test_gate_failure_exit_3_with_manifest(self, runner, tmp_path):
        cfg = tmp_path / "c.toml"
        cfg.write_text("schema_version = 1\n[controller]\nprecision = 0.05\n")
        out = tmp_path / "out"
        res = runner.invoke(main, ["calibrate-basic", "--config", str(cfg),
                                   "--out", str(out), "--quiet"])
        assert res.exit_code == 3
        manifest = read_manifest(out)
        assert manifest["exit_code"] == 3
        assert "validation_report.json" in manifest["artifacts"]

    def test_svg_format(self, runner, tmp_path):
        out = tmp_path / "out"
        res = runner.invoke(main, ["calibrate-basic", "--out", str(out),
                                   "--format", "svg", "--quiet"])
        assert res.exit_code == 0
        svg = (out / "bias_spectrum.svg").read_text()
        assert svg.startswith("<svg") and "polyline" in svg


class TestCalibrateCascadedCommand:
    def test_success(self, runner, tmp_path):
        out = tmp_path / "out"
        res = runner.invoke(main, ["calibrate-cascaded", "--out", str(out),
                                   "--quiet"])
        assert res.exit_code == 0, res.output
        report = json.loads((out / "validation_report.json").read_text())
        assert report["passed"]
        assert report["merge_passes"] == 2


class TestTrainXorCommand:
    def test_default_reaches_target_accuracy(self, runner, tmp_path):
        out = tmp_path / "out"
        res = runner.invoke(main, ["train-xor", "--out", str(out)])
        assert res.exit_code == 0, res.output
        line = [ln for ln in res.output.splitlines()
                if ln.startswith("final accuracy:")][0]
        assert float(line.split(":")[1]) >= 0.98
        curve = (out / "learning_curve.csv").read_text().splitlines()
        assert curve[0] == "epoch,mean_cost,class_error"
        surface = (out / "virtual_surface.csv").read_text().splitlines()
        assert surface[0].startswith("y\\x,0.000000,0.025000")

    def test_divergence_exit_4_with_manifest(self, runner, tmp_path):
        cfg = tmp_path / "c.toml"
        cfg.write_text("schema_version = 1\n[training]\neta = 5.0\n")
        out = tmp_path / "out"
        res = runner.invoke(main, ["train-xor", "--config", str(cfg),
                                   "--out", str(out), "--quiet"])
        assert res.exit_code == 4
        assert read_manifest(out)["exit_code"] == 4

    def test_corrupt_config_exit_2_no_artifacts(self, runner, tmp_path):
        cfg = tmp_path / "c.toml"
        cfg.write_text("schema_version = 1\nbogus = 1\n")
        out = tmp_path / "out"
        res = runner.invoke(main, ["train-xor", "--config", str(cfg),
                                   "--out", str(out)])
        assert res.exit_code == 2
        assert not out.exists()

    def test_env_seed_fallback(self, runner, tmp_path):
        out = tmp_path / "out"
        res = runner.invoke(main, ["train-xor", "--out", str(out),
                                   "--quiet"], env={"RINGSIM_SEED": "2"})
        assert res.exit_code == 0
        assert read_manifest(out)["seed"] == 2


class TestSweepCommand:
    def test_deterministic_reruns_byte_identical(self, runner, tmp_path):
        outs = []
        for name in ("a", "b"):
            out = tmp_path / name
            res = runner.invoke(main, ["sweep-231", "--out", str(out),
                                       "--seed", "3", "--quiet"])
            assert res.exit_code == 0, res.output
            outs.append(out)
        assert (outs[0] / "surface.csv").read_bytes() == \
            (outs[1] / "surface.csv").read_bytes()
        assert read_manifest(outs[0])["artifacts"] == \
            read_manifest(outs[1])["artifacts"]

    def test_reports_reference_operating_point(self, runner, tmp_path):
        out = tmp_path / "out"
        res = runner.invoke(main, ["sweep-231", "--out", str(out),
                                   "--quiet"])
        assert res.exit_code == 0, res.output
        report = json.loads((out / "network_report.json").read_text())
        assert report["x0"][0] == pytest.approx(0.647, abs=0.01)
        assert report["x0"][1] == pytest.approx(0.721, abs=0.01)

    def test_bad_params_file_exit_2(self, runner, tmp_path):
        cfg = tmp_path / "c.toml"
        cfg.write_text("schema_version = 1\n[sweep]\n"
                       "params_file = \"missing.json\"\n")
        res = runner.invoke(main, ["sweep-231", "--config", str(cfg),
                                   "--out", str(tmp_path / "out")])
        assert res.exit_code == 2


class TestMdmReportCommand:
    def test_ranks_geometries(self, runner, tmp_path):
        spectra = tmp_path / "spectra"
        spectra.mkdir()
        for a, name in ((0.2, "0.40_10.0.csv"), (0.5, "0.45_12.5.csv")):
            sp = make_interferometer_spectrum(InterferometerModel(a, 5e5))
            (spectra / name).write_text(sp.to_csv())
        cfg = tmp_path / "c.toml"
        cfg.write_text("schema_version = 1\n[mdm]\n"
                       f"sweep_dir = \"{spectra}\"\n")
        out = tmp_path / "out"
        res = runner.invoke(main, ["mdm-report", "--config", str(cfg),
                                   "--out", str(out)])
        assert res.exit_code == 0, res.output
        assert "width 0.45" in res.output
        rows = (out / "coupling_report.csv").read_text().splitlines()
        assert rows[1].startswith("0.45,12.5")

    def test_missing_sweep_dir_exit_2(self, runner, tmp_path):
        res = runner.invoke(main, ["mdm-report",
                                   "--out", str(tmp_path / "out")])
        assert res.exit_code == 2
