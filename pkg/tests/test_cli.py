import json
import os
import xml.etree.ElementTree as ET
from pathlib import Path

import pytest

from weightedsums.cli import EXIT_CHECK_FAILED, EXIT_OK, EXIT_USAGE, build_parser, run
from weightedsums.experiments import RATE_COLUMNS

SNAPSHOTS = Path(__file__).parent / "snapshots"
SUBCOMMANDS = ("functionals", "clt-avg", "rate-sweep", "cf-profile", "validate", "report")


def _flags(sub):
    parser = build_parser()
    sp = next(a for a in parser._actions if a.dest == "command").choices[sub]
    return [s for a in sp._actions for s in a.option_strings if s.startswith("--")]


@pytest.mark.parametrize("sub", SUBCOMMANDS)
def test_help_snapshot(sub, capsys, fixed_columns):
    assert run([sub, "--help"]) == EXIT_OK
    out = capsys.readouterr().out
    snap = SNAPSHOTS / f"help_{sub}.txt"
    if os.environ.get("UPDATE_SNAPSHOTS") or not snap.exists():
        snap.write_text(out)
    assert out == snap.read_text()
    for flag in _flags(sub):
        assert flag in out
    # every option line states its default
    assert out.count("(default:") >= len(_flags(sub)) - 1


def test_unknown_flag_prints_help(capsys):
    assert run(["functionals", "--bogus", "1", "--seed", "1"]) == EXIT_USAGE
    err = capsys.readouterr().err
    assert "--bogus" in err and "--model" in err


def test_missing_subcommand(capsys):
    assert run([]) == EXIT_USAGE


def test_seed_required(capsys):
    assert run(["functionals", "--model", "rademacher", "--n", "4"]) == EXIT_USAGE
    assert "--seed" in capsys.readouterr().err


def test_exact_mode_continuous_rejected(capsys):
    code = run(["clt-avg", "--model", "gaussian_std", "--mode", "exact", "--seed", "1"])
    assert code == EXIT_USAGE


def test_m_conflicts_with_exact(capsys):
    code = run(["clt-avg", "--model", "rademacher", "--mode", "exact", "--m", "50", "--seed", "1"])
    assert code == EXIT_USAGE
    assert "conflicts" in capsys.readouterr().err


def test_bad_config_names_key(tmp_path, capsys):
    cfg = tmp_path / "c.json"
    cfg.write_text(json.dumps({"seed": 1, "n_grid": [4], "bogus_key": 3}))
    assert run(["functionals", "--config", str(cfg)]) == EXIT_USAGE
    assert "bogus_key" in capsys.readouterr().err


def test_bad_config_names_line(tmp_path, capsys):
    cfg = tmp_path / "c.json"
    cfg.write_text('{\n  "seed": 1,\n  "n_grid": [4,\n}\n')
    assert run(["functionals", "--config", str(cfg)]) == EXIT_USAGE
    assert "line 4" in capsys.readouterr().err


def test_config_overridden_by_flags(tmp_path, capsys):
    cfg = tmp_path / "c.json"
    cfg.write_text(json.dumps({"seed": 1, "n_grid": [6], "n_theta": 30,
                               "model": {"family": "rademacher", "params": {}}}))
    out = tmp_path / "o.json"
    assert run(["clt-avg", "--config", str(cfg), "--seed", "9", "--out", str(out)]) == EXIT_OK
    doc = json.loads(out.read_text())
    assert doc["config"]["seed"] == 9 and doc["config"]["n_theta"] == 30
    assert doc["config"]["mode"] == "exact"


def test_functionals_json(capsys):
    assert run(["functionals", "--model", "rademacher", "--n", "4", "--seed", "1"]) == EXIT_OK
    doc = json.loads(capsys.readouterr().out)
    assert abs(doc["estimates"]["lambda_hat"] - 2.0) < 1e-6
    assert all(c["passed"] for c in doc["checks"])


def test_cf_profile_csv(capsys):
    assert run(["cf-profile", "--model", "rademacher", "--n", "8", "--dirs", "30",
                "--seed", "1", "--t-grid", "0.5:2:3"]) == EXIT_OK
    lines = capsys.readouterr().out.splitlines()
    assert lines[0].split(",")[:3] == ["t", "variance_hat", "stderr"]
    assert len(lines) == 4


def test_rate_sweep_and_report(tmp_path, capsys):
    csv_path = tmp_path / "sweep.csv"
    assert run(["rate-sweep", "--model", "rademacher", "--mode", "exact", "--n", "4,6,8",
                "--dirs", "40", "--seed", "1", "--out", str(csv_path)]) == EXIT_OK
    lines = csv_path.read_text().splitlines()
    assert lines[0] == ",".join(RATE_COLUMNS)
    assert [int(row.split(",")[0]) for row in lines[1:]] == [4, 6, 8]
    capsys.readouterr()
    svg = tmp_path / "sweep.svg"
    assert run(["report", "--in", str(csv_path), "--plot", str(svg),
                "--fit", "power_times_log"]) == EXIT_OK
    assert capsys.readouterr().out.startswith("alpha=")
    root = ET.fromstring(svg.read_text())
    assert root.tag.endswith("svg")


def test_report_missing_file(tmp_path, capsys):
    assert run(["report", "--in", str(tmp_path / "nope.csv")]) == EXIT_USAGE


def test_validate_exit_codes(tmp_path, capsys):
    out = tmp_path / "v.json"
    code = run(["validate", "--models", "rademacher", "--n", "4", "--seed", "1",
                "--out", str(out)])
    assert code == EXIT_OK
    text = capsys.readouterr().out
    assert "checks passed" in text
    assert json.loads(out.read_text())["passed"] is True
    assert run(["validate", "--models", "nonsense", "--n", "4", "--seed", "1"]) == EXIT_USAGE
    assert EXIT_CHECK_FAILED == 1


@pytest.mark.parametrize("sub,extra", [
    ("rate-sweep", ["--model", "rademacher", "--n", "4,6,8", "--dirs", "40", "--format", "json"]),
    ("clt-avg", ["--model", "gaussian_std", "--n", "6", "--dirs", "40", "--m", "3000"]),
    ("cf-profile", ["--model", "laplace_iid", "--n", "8", "--dirs", "40", "--m", "3000",
                    "--cf-mode", "independent", "--t-grid", "0.5:2:4"]),
])
def test_threads_byte_identical(sub, extra, tmp_path, monkeypatch):
    # same relative --out in both runs: the output path is part of the recorded config
    outs = []
    for k in (1, 3):
        (tmp_path / str(k)).mkdir()
        monkeypatch.chdir(tmp_path / str(k))
        assert run([sub, *extra, "--seed", "11", "--threads", str(k),
                    "--out", "result.out"]) == 0
        outs.append((tmp_path / str(k) / "result.out").read_bytes())
    assert outs[0] == outs[1]
