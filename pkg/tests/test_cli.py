"""Command-line interface: exit codes, artifacts, round trips, determinism."""

import json

import numpy as np
import pytest

from nullfdi.cli import run_cli
from nullfdi.closedloop import FaultEvent, FaultScenario, ReferenceSpec
from nullfdi.plant import assemble
from nullfdi.serialize import model_to_dict, plant_to_dict, write_json
from nullfdi.verification import random_plant

from conftest import random_stable_model

CASE_FILES = {"plant.json", "controller.json", "bank.json", "structure.csv",
              "residuals.csv", "decisions.csv", "report.json", "plot.gp"}


@pytest.fixture
def files(tmp_path):
    base, ctrl = random_plant(21, 3, 2, 0, 0, 0, order=4)
    plant = assemble(base.g_u, actuator_faults=[0, 1], sensor_faults=[0, 1, 2])
    sensors = assemble(base.g_u, sensor_faults=[0, 1, 2])
    paths = {"plant": tmp_path / "plant.json", "sensors": tmp_path / "sensors.json",
             "controller": tmp_path / "controller.json", "scenario": tmp_path / "scenario.json"}
    write_json(paths["plant"], plant_to_dict(plant))
    write_json(paths["sensors"], plant_to_dict(sensors))
    write_json(paths["controller"], model_to_dict(ctrl))
    sc = FaultScenario(5.0, 1e-3, ReferenceSpec("fourth_order", 1e-3, 1.0, 0),
                       (FaultEvent(1, 0.5, 1.5, 1.0), FaultEvent(3, 3.0, 4.5, 0.5)))
    write_json(paths["scenario"], sc.to_dict())
    return {k: str(v) for k, v in paths.items()}


def test_help(capsys):
    assert run_cli(["--help"]) == 0
    assert "usage" in capsys.readouterr().out


def test_subcommand_help():
    assert run_cli(["synth", "--help"]) == 0


def test_unknown_command():
    assert run_cli(["frobnicate"]) == 1


def test_unknown_flag():
    assert run_cli(["analyze", "--colour", "blue"]) == 1


def test_bad_mode():
    assert run_cli(["synth", "--mode", "fuzzy"]) == 1


def test_missing_required_input(capsys):
    assert run_cli(["analyze"]) == 2
    assert "--plant" in json.loads(capsys.readouterr().err)["error"]


def test_missing_file(tmp_path):
    assert run_cli(["analyze", "--plant", str(tmp_path / "absent.json")]) == 2


def test_analyze(files, capsys):
    assert run_cli(["analyze", "--plant", files["plant"], "--structure", "hollow"]) == 0
    out = capsys.readouterr().out
    assert "PASS complete_detectability" in out
    assert "FAIL strong_isolability" in out
    report = json.loads(out[out.index("{"):])
    assert set(report) == {"command", "inputs", "verdicts", "metrics", "artifacts"}


def test_infeasible_synthesis(files, capsys):
    assert run_cli(["synth", "--plant", files["plant"], "--structure", "strong"]) == 2
    err = json.loads(capsys.readouterr().err)
    assert err["condition"] == "s-isolability"
    assert "rank" in err["error"] and err["failing"]


def test_synth_then_simulate(files, tmp_path):
    out = tmp_path / "synth"
    assert run_cli(["synth", "--plant", files["sensors"], "--structure", "hollow",
                    "--out", str(out)]) == 0
    report = json.loads((out / "report.json").read_text())
    assert report["artifacts"] == ["bank.json", "report.json"]
    assert all(v["passed"] for v in report["verdicts"])
    sim = tmp_path / "sim"
    assert run_cli(["simulate", "--plant", files["sensors"], "--controller",
                    files["controller"], "--bank", str(out / "bank.json"), "--scenario",
                    files["scenario"], "--out", str(sim)]) == 0
    rep = json.loads((sim / "report.json").read_text())
    assert [v["passed"] for v in rep["verdicts"]] == [True, True]
    header = (sim / "residuals.csv").read_text().splitlines()[0]
    assert header.startswith("time,y_1") and header.endswith("eps_3")
    assert (sim / "decisions.csv").read_text().startswith("time,fired,isolated")


def test_simulate_dimension_mismatch(files, tmp_path):
    out = tmp_path / "synth"
    run_cli(["synth", "--plant", files["sensors"], "--structure", "hollow", "--out", str(out)])
    assert run_cli(["simulate", "--plant", files["plant"], "--controller",
                    files["controller"], "--bank", str(out / "bank.json"), "--scenario",
                    files["scenario"]]) == 2


def test_detector_soft_mode(files, capsys):
    assert run_cli(["synth", "--plant", files["sensors"], "--structure", "hollow",
                    "--mode", "soft", "--gamma", "2"]) == 0


def test_report_determinism(files, tmp_path):
    texts = []
    for k in range(2):
        out = tmp_path / f"run{k}"
        assert run_cli(["synth", "--plant", files["sensors"], "--structure", "hollow",
                        "--out", str(out)]) == 0
        texts.append((out / "report.json").read_bytes())
    assert texts[0] == texts[1]


def test_verify_theorems(tmp_path):
    assert run_cli(["verify-theorems", "--seed", "1", "--out", str(tmp_path)]) == 0
    report = json.loads((tmp_path / "report.json").read_text())
    assert [v["passed"] for v in report["verdicts"]] == [True, True]


def test_case_study_artifacts(tmp_path, capsys):
    runs = []
    for k in range(2):
        out = tmp_path / f"run7_{k}"
        assert run_cli(["case-study", "--seed", "7", "--rate", "1000", "--out", str(out)]) == 0
        runs.append(out)
    assert {p.name for p in runs[0].iterdir()} == CASE_FILES
    report = json.loads((runs[0] / "report.json").read_text())
    assert report["metrics"]["isolated"] == 17
    assert set(report["artifacts"]) == CASE_FILES
    assert (runs[0] / "report.json").read_bytes() == (runs[1] / "report.json").read_bytes()
    # the written plant, structure and bank are accepted by the consuming commands
    assert run_cli(["analyze", "--plant", str(runs[0] / "plant.json"), "--structure",
                    str(runs[0] / "structure.csv")]) == 0
    bank = json.loads((runs[0] / "bank.json").read_text())
    assert len(bank["filters"]) == 17
    decisions = (runs[0] / "decisions.csv").read_text().splitlines()
    assert len(decisions) == 1 + 87501  # header plus 87.5 s at 1 kHz
