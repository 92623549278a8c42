"""Command-line surface: exit codes, emitted files, and output stability."""

from __future__ import annotations

import os
from dataclasses import replace

import pytest
from conftest import desk_scenario

from leobeam import cli
from leobeam import scenario as sio
from leobeam.errors import SolverError
from leobeam.oracle import GAP_COLUMNS


def scenario_file(tmp_path, name="desk.ini", **overrides):
    path = tmp_path / name
    path.write_text(sio.canonical_text(desk_scenario(**overrides)),
                    encoding="utf-8")
    return str(path)


def read_out(base):
    blobs = {}
    for name in ("metrics.tsv", "run_log.txt", "scenario.ini"):
        with open(os.path.join(base, name), "rb") as fh:
            blobs[name] = fh.read()
    return blobs


# ------------------------------------------------------------------ validate


def test_validate_stock_scenario(capsys):
    assert cli.main(["validate"]) == cli.EXIT_OK
    assert "scenario OK, hash " in capsys.readouterr().out


def test_validate_flags_bad_values(tmp_path, capsys):
    path = scenario_file(tmp_path, per_user_cap=99)
    assert cli.main(["validate", "--scenario", path]) == cli.EXIT_SCENARIO
    assert capsys.readouterr().err.startswith("scenario error:")


def test_validate_missing_file(tmp_path, capsys):
    path = str(tmp_path / "absent.ini")
    assert cli.main(["validate", "--scenario", path]) == cli.EXIT_SCENARIO
    assert "cannot read" in capsys.readouterr().err


# --------------------------------------------------------------------- usage


@pytest.mark.parametrize("argv", [
    [],
    ["frobnicate"],
    ["run", "--algorithm", "bogus"],
    ["run", "--no-such-flag"],
    ["sweep", "--seed", "not-an-int"],
])
def test_usage_errors(argv, capsys):
    assert cli.main(argv) == cli.EXIT_USAGE
    assert "usage" in capsys.readouterr().err


# ----------------------------------------------------------------------- run


def test_run_emits_results_and_summary(tmp_path, capsys):
    path = scenario_file(tmp_path)
    out = str(tmp_path / "res")
    assert cli.main(["run", "--scenario", path, "--seed", "1",
                     "--out", out]) == cli.EXIT_OK
    lines = capsys.readouterr().out.strip().splitlines()
    assert lines[:-1] == [os.path.join(out, n)
                          for n in ("metrics.tsv", "run_log.txt", "scenario.ini")]
    assert lines[-1].startswith("proposal seed=1: sum_rate_bps=")
    table = read_out(out)["metrics.tsv"].decode().splitlines()
    assert table[0].split("\t") == list(sio.METRIC_COLUMNS)
    assert len(table) == 2
    assert table[1].split("\t")[0] == "proposal"


def test_run_default_seed_is_first_listed(tmp_path, capsys):
    path = scenario_file(tmp_path, seeds=(7, 8))
    out = str(tmp_path / "res")
    assert cli.main(["run", "--scenario", path, "--out", out]) == cli.EXIT_OK
    assert "seed=7:" in capsys.readouterr().out


def test_run_algorithm_choice(tmp_path, capsys):
    path = scenario_file(tmp_path)
    out = str(tmp_path / "res")
    assert cli.main(["run", "--scenario", path, "--algorithm", "baseline2",
                     "--out", out]) == cli.EXIT_OK
    assert "baseline2 seed=1:" in capsys.readouterr().out
    row = read_out(out)["metrics.tsv"].decode().splitlines()[1]
    assert row.split("\t")[0] == "baseline2"


def test_run_outputs_byte_stable(tmp_path, capsys):
    path = scenario_file(tmp_path)
    first, second = str(tmp_path / "a"), str(tmp_path / "b")
    assert cli.main(["run", "--scenario", path, "--out", first]) == cli.EXIT_OK
    assert cli.main(["run", "--scenario", path, "--out", second]) == cli.EXIT_OK
    capsys.readouterr()
    assert read_out(first) == read_out(second)


def test_run_rejects_broken_scenario(tmp_path, capsys):
    path = tmp_path / "broken.ini"
    path.write_text("[radio]\nsubchannel_count = many\n", encoding="utf-8")
    assert cli.main(["run", "--scenario", str(path)]) == cli.EXIT_SCENARIO
    assert "scenario error:" in capsys.readouterr().err


# --------------------------------------------------------------------- sweep


def test_sweep_single_seed_rows(tmp_path, capsys):
    path = scenario_file(tmp_path)
    out = str(tmp_path / "res")
    assert cli.main(["sweep", "--scenario", path, "--seed", "2",
                     "--out", out]) == cli.EXIT_OK
    assert capsys.readouterr().out.strip().endswith("3 rows")
    blobs = read_out(out)
    table = blobs["metrics.tsv"].decode().splitlines()
    assert len(table) == 4                       # header + one row per algorithm
    assert [r.split("\t")[0] for r in table[1:]] == ["proposal", "baseline1",
                                                     "baseline2"]
    log = blobs["run_log.txt"].decode()
    for name in ("proposal", "baseline1", "baseline2"):
        assert f"run algorithm={name} seed=2" in log


def test_sweep_scenario_ini_round_trips(tmp_path, capsys):
    path = scenario_file(tmp_path)
    out = str(tmp_path / "res")
    assert cli.main(["sweep", "--scenario", path, "--seed", "1",
                     "--out", out]) == cli.EXIT_OK
    capsys.readouterr()
    text = read_out(out)["scenario.ini"].decode()
    parsed = sio.parse_scenario(text)
    assert parsed.seeds == (1,)                  # archive records what actually ran
    assert parsed == replace(desk_scenario(), seeds=(1,))


# -------------------------------------------------------------------- oracle


def test_oracle_writes_gap_table(tmp_path, capsys):
    out = str(tmp_path / "res")
    assert cli.main(["oracle", "--out", out]) == cli.EXIT_OK
    stdout = capsys.readouterr().out
    path = os.path.join(out, "oracle_gaps.tsv")
    assert path in stdout
    with open(path, encoding="utf-8") as fh:
        table = fh.read()
    assert table.splitlines()[0].split("\t") == list(GAP_COLUMNS)
    assert "pointing_vs_exact" in table
    assert table in stdout


# ------------------------------------------------------------ failure routes


def test_solver_failure_exit_code(tmp_path, monkeypatch, capsys):
    def explode(built, config):
        raise SolverError("boom")
    monkeypatch.setattr(cli, "run_framework", explode)
    path = scenario_file(tmp_path)
    assert cli.main(["run", "--scenario", path]) == cli.EXIT_SOLVER
    assert "solver failure: boom" in capsys.readouterr().err
