import csv
import json

import pytest

from fgc.cli import build_parser, main
from fgc.compensation import SWEEP_COLUMNS, CompensationTable
from fgc.robot_model import default_config_document
from fgc.sim import CSV_COLUMNS, read_trial_csv


def _config(tmp_path, **changes):
    doc = default_config_document()
    for key, value in changes.items():
        doc[key] = value
    path = tmp_path / "robot.json"
    path.write_text(json.dumps(doc))
    return str(path)


def test_table(tmp_path, capsys):
    assert main(["table", "--out", str(tmp_path)]) == 0
    table = CompensationTable.from_json((tmp_path / "table_amble.json").read_text())
    assert len(table.entries) == 8
    assert "8 samples" in capsys.readouterr().out


def test_compare_writes_trials_and_summary(tmp_path, capsys):
    rc = main(["compare", "--cycles", "1", "--sample-per-phase", "2", "--out", str(tmp_path)])
    assert rc == 0
    out = capsys.readouterr().out
    assert "pitch_deg" in out and "touchdown failures" in out
    for tag in ("fgc", "nofgc"):
        text = (tmp_path / f"trial_amble_{tag}_01.csv").read_text()
        assert text.splitlines()[0].split(",") == list(CSV_COLUMNS)
        channels, touchdowns = read_trial_csv(text)
        assert len(touchdowns) == 4
    summary = json.loads((tmp_path / "summary.json").read_text())
    assert [t["fgc"] for t in summary["trials"]] == [True, False]


def test_run_single_mode(tmp_path):
    rc = main(["run", "--fgc", "off", "--gait", "trot", "--cycles", "1", "--sample-per-phase", "2",
               "--out", str(tmp_path)])
    assert rc == 0
    assert (tmp_path / "trial_trot_nofgc_01.csv").exists()
    assert not (tmp_path / "trial_trot_fgc_01.csv").exists()


def test_sweep(tmp_path):
    rc = main(["sweep", "--dm=-0.01,0,0.01", "--s-scale", "1e-4,1", "--stiffness-scale", "1,10",
               "--out", str(tmp_path)])
    assert rc == 0
    with (tmp_path / "sweep.csv").open() as fh:
        rows = list(csv.DictReader(fh))
    assert tuple(rows[0]) == SWEEP_COLUMNS
    assert len(rows) == 3 * 2 * 2 * 2


def test_zero_gravity_warns(tmp_path, capsys):
    cfg = _config(tmp_path, env={"inclination_deg": 180.0, "gravity_mps2": 0.0})
    assert main(["table", "--config", cfg, "--out", str(tmp_path)]) == 0
    assert "zero gravity" in capsys.readouterr().err


def test_infeasible_bounds_exit_nonzero(tmp_path, capsys):
    cfg = _config(tmp_path, bounds={"lower_n": [-3.5, -3.5, -8.0], "upper_n": [3.5, 3.5, 1.0]})
    assert main(["table", "--config", cfg, "--out", str(tmp_path)]) == 1
    assert "sample t=0 s" in capsys.readouterr().err


@pytest.mark.parametrize("text", ["{not json", json.dumps({"body": {"mass_kg": 1.0}})])
def test_bad_config_exit_nonzero(tmp_path, capsys, text):
    path = tmp_path / "bad.json"
    path.write_text(text)
    assert main(["table", "--config", str(path), "--out", str(tmp_path)]) == 1
    assert capsys.readouterr().err.startswith("error:")


def test_missing_config(tmp_path, capsys):
    assert main(["table", "--config", str(tmp_path / "nope.json")]) == 1
    assert "cannot read config" in capsys.readouterr().err


@pytest.mark.parametrize("argv", [["run", "--thresholds", "5"], ["run", "--cycles", "0"],
                                  ["sweep", "--dm", "a,b"], ["run", "--gait", "gallop"]])
def test_argument_validation(argv):
    with pytest.raises(SystemExit) as exc:
        build_parser().parse_args(argv)
    assert exc.value.code == 2
