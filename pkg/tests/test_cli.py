import csv
import subprocess
import sys
from pathlib import Path

from wbanzkp import cli
from wbanzkp.experiment import AttackRow
from wbanzkp.sim.traces import LinkTrace

GOLDEN = Path(__file__).parent / "golden"

PLAN = """[cell-defaults]
schemes = none, BANZKP
strategies = APAP
postures = sit
rates_pps = 1
repetitions = 3
duration_s = 2
"""


def write_plan(tmp_path, text=PLAN):
    path = tmp_path / "plan.ini"
    path.write_text(text)
    return path


def test_run_writes_both_csv_files(tmp_path):
    out = tmp_path / "out"
    assert cli.main(["run", str(write_plan(tmp_path)), "--out", str(out)]) == cli.EXIT_OK
    with open(out / "metrics.csv") as fh:
        rows = list(csv.DictReader(fh))
    assert len(rows) == 6
    assert {r["scheme"] for r in rows} == {"none", "BANZKP"}
    assert [r["seed"] for r in rows[:3]] == ["0", "1", "2"]
    agg = (out / "aggregate.csv").read_text().splitlines()
    assert len(agg) == 3


def test_seed_flag_moves_the_seed_base(tmp_path):
    out = tmp_path / "out"
    cli.main(["run", str(write_plan(tmp_path)), "--out", str(out), "--seed", "100"])
    with open(out / "metrics.csv") as fh:
        assert [r["seed"] for r in csv.DictReader(fh)][:3] == ["100", "101", "102"]


def test_invalid_plan_exit_code(tmp_path, capsys):
    path = write_plan(tmp_path, "[cell-defaults]\nrepetitions = 1\n")
    assert cli.main(["run", str(path), "--out", str(tmp_path)]) == cli.EXIT_PLAN
    assert "invalid plan" in capsys.readouterr().err


def test_missing_trace_exit_code(tmp_path):
    empty = tmp_path / "traces"
    empty.mkdir()
    code = cli.main(["run", str(write_plan(tmp_path)), "--out", str(tmp_path / "o"), "--trace-dir", str(empty)])
    assert code == cli.EXIT_TRACE


def test_trace_dir_from_environment(tmp_path, monkeypatch):
    traces = tmp_path / "traces"
    traces.mkdir()
    LinkTrace.uniform(0.0, 0.0, posture="sit").to_csv(traces / "sit.csv")
    monkeypatch.setenv("WBAN_TRACE_DIR", str(traces))
    out = tmp_path / "out"
    assert cli.main(["run", str(write_plan(tmp_path)), "--out", str(out)]) == cli.EXIT_OK
    with open(out / "metrics.csv") as fh:
        assert all(r["ratio"] == "1.000000" for r in csv.DictReader(fh))
    monkeypatch.setenv("WBAN_TRACE_DIR", str(tmp_path / "nowhere"))
    assert cli.main(["run", str(write_plan(tmp_path)), "--out", str(out)]) == cli.EXIT_TRACE


def test_attacks_report(tmp_path):
    out = tmp_path / "attacks.csv"
    assert cli.main(["attacks", "--out", str(out)]) == cli.EXIT_OK
    lines = out.read_text().splitlines()
    assert lines[0] == "scheme,scenario,seed,verdict"
    assert len(lines) == 15


def test_banzkp_only_report_still_exits_zero(capsys):
    assert cli.main(["attacks", "--scheme", "BANZKP"]) == cli.EXIT_OK
    out = capsys.readouterr().out
    assert out.count("AttackSucceeded") == 3


def test_attack_regression_exit_code(monkeypatch, capsys):
    monkeypatch.setattr(cli, "run_attacks", lambda schemes, seeds: [
        AttackRow("BAN_GZKP", "ForgeNode", 0, "AttackBlocked"),
        AttackRow("BAN_GZKP", "DataReplay", 0, "AttackSucceeded"),
    ])
    assert cli.main(["attacks"]) == cli.EXIT_ATTACK
    assert "DataReplay" in capsys.readouterr().err


def test_handshake_vectors_match_golden(tmp_path):
    out = tmp_path / "v.txt"
    assert cli.main(["handshake-vectors", "--out", str(out)]) == cli.EXIT_OK
    assert out.read_text() == (GOLDEN / "handshake_vectors.txt").read_text()


def test_module_entry_point():
    proc = subprocess.run([sys.executable, "-m", "wbanzkp", "attacks", "--scheme", "BAN_GZKP"],
                          capture_output=True, text=True, check=False)
    assert proc.returncode == 0
    assert proc.stdout.count("AttackBlocked") == 7
