"""명령행 인터페이스 테스트"""
import json

from divetrack.services import synth
from divetrack.services.pipeline import ARTIFACTS
from divetrack.utils.cli import main, parse_args

from conftest import tiny_spec


def stderr_report(capsys) -> dict:
    lines = [line for line in capsys.readouterr().err.splitlines() if line.startswith("{\"error\"")]
    return json.loads(lines[-1])


def test_parse_common_options():
    args = parse_args(["mosaic", "--config", "p.json", "--set", "min_area=10", "--set", "debug=true",
                       "--composite-mode", "mean", "--out", "o"])
    assert args.command == "mosaic"
    assert args.overrides == ["min_area=10", "debug=true"]
    assert args.composite_mode == "mean"
    assert args.out == "o"


def test_no_command():
    assert main([]) == 1


def test_run_tiny_scenario(tmp_path, capsys):
    synth.write_scenario(tiny_spec(), tmp_path)
    code = main(["run", "--config", str(tmp_path / "pipeline.json"), "--out", str(tmp_path / "out")])
    assert code == 0
    assert (tmp_path / "out" / ARTIFACTS.metrics).is_file()
    assert "[+] metrics:" in capsys.readouterr().out


def test_even_smoothing_window_is_config_error(tmp_path, capsys):
    synth.write_scenario(tiny_spec(), tmp_path)
    code = main(["run", "--config", str(tmp_path / "pipeline.json"), "--set", "smoothing_window=4",
                 "--out", str(tmp_path / "out")])
    assert code == 2
    report = stderr_report(capsys)
    assert report["error"] == "ConfigurationError"
    assert report["exit_code"] == 2


def test_track_without_artifacts(tmp_path, capsys):
    code = main(["track", "--out", str(tmp_path)])
    assert code == 3
    report = json.loads((tmp_path / ARTIFACTS.error_report).read_text())
    assert report["stage"] == "track"
    assert ARTIFACTS.transforms in report["message"]
    assert stderr_report(capsys) == report


def test_synth_command(tmp_path, monkeypatch):
    monkeypatch.setattr("divetrack.utils.cli.standard_scenarios", lambda seed=0: {"static": tiny_spec()})
    code = main(["synth", "--scenario", "static", "--out", str(tmp_path / "s")])
    assert code == 0
    assert (tmp_path / "s" / "ground_truth.json").is_file()
    assert (tmp_path / "s" / "f0019.ppm").is_file()
