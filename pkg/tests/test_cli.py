import csv
import json
import subprocess
import sys

import pytest

from pathkac.cli import EXIT_FAIL, EXIT_OK, EXIT_USAGE, SCHEMAS, UsageError, main, parse_params


def run(tmp_path, *argv):
    return main([*argv, "-o", str(tmp_path)])


def report(tmp_path, name):
    return json.loads((tmp_path / f"{name}.json").read_text())


def test_roundtrip_passes_and_writes_series(tmp_path):
    assert run(tmp_path, "roundtrip", "T=0.5", "dt=0.01", "potential=kind=state,name=norm,scale=0.5") == EXIT_OK
    rep = report(tmp_path, "roundtrip")
    assert rep["all_pass"] and rep["config"]["T"] == 0.5
    for series in rep["series"].values():
        rows = list(csv.reader(open(tmp_path / series)))
        assert len(rows) > 1
    assert "wall_clock_seconds" in json.loads((tmp_path / "roundtrip.timing.json").read_text())


def test_unknown_key_is_a_usage_error(tmp_path, capsys):
    assert run(tmp_path, "roundtrip", "bogus=1") == EXIT_USAGE
    assert "unknown key 'bogus'" in capsys.readouterr().err
    assert not (tmp_path / "roundtrip.json").exists()


@pytest.mark.parametrize("sub,item", [
    ("transform", "dt=abc"),
    ("transform", "noequals"),
    ("transform", "potential=kind=nope"),
    ("fk-compare", "vbar=nope"),
])
def test_bad_values_exit_two(tmp_path, sub, item):
    assert run(tmp_path, sub, item) == EXIT_USAGE


def test_numerical_failure_exits_one(tmp_path):
    code = run(tmp_path, "transform", "T=3", "dt=0.01", "strategy=proof", "potential=kind=state,name=norm")
    assert code == EXIT_FAIL
    rep = report(tmp_path, "transform")
    assert not rep["all_pass"] and rep["error"].startswith("PartitionError")


def test_reruns_are_byte_identical(tmp_path):
    args = ["fk-compare", "n_paths=2000", "dt=0.01", "t=0.5", "vbar=quadratic", "nx=201", "pde_dt=0.01"]
    assert main([*args, "-o", str(tmp_path / "a")]) == main([*args, "-o", str(tmp_path / "b")])
    assert (tmp_path / "a" / "fk-compare.json").read_bytes() == (tmp_path / "b" / "fk-compare.json").read_bytes()


def test_seed_flag_and_name(tmp_path):
    assert main(["simulate", "n_paths=50", "dt=0.1", "--seed", "7", "--name", "sim", "-o", str(tmp_path)]) == EXIT_OK
    rep = report(tmp_path, "sim")
    assert rep["config"]["seed"] == 7
    assert any(p.name.startswith("sim") and p.suffix not in (".json", ".csv") for p in tmp_path.iterdir())


def test_parse_params_defaults_and_types():
    p = parse_params("translation", ["sigma=0.5", "N=16"])
    assert p["sigma"] == 0.5 and p["N"] == 16 and p["dt"] == SCHEMAS["translation"]["dt"].default
    with pytest.raises(UsageError):
        parse_params("translation", ["n=3"])


def test_help_lists_schema():
    out = subprocess.run([sys.executable, "-m", "pathkac.cli", "spde-residual", "--help"],
                         capture_output=True, text=True, check=True).stdout
    for key in SCHEMAS["spde-residual"]:
        assert key in out


@pytest.mark.parametrize("sub,items", [
    ("stability", ["T=0.5", "dt=0.01", "pairs=3"]),
    ("spde-residual", ["n_paths=4000", "dt=0.01", "vbar=quadratic"]),
    ("translation", ["n_paths=2000", "lambda=0.5"]),
    ("s5-identity", ["n_paths=2000", "dt=0.05", "vbar=const", "vbar_a=0.4", "N=32"]),
])
def test_other_subcommands_pass(tmp_path, sub, items):
    assert run(tmp_path, sub, *items) == EXIT_OK, report(tmp_path, sub)


def test_accept_profile_flag(tmp_path):
    assert main(["accept", "--profile", "quick", "only=2,5", "-o", str(tmp_path)]) == EXIT_OK
    rep = report(tmp_path, "accept")
    assert rep["config"]["profile"] == "quick"
    assert main(["accept", "--profile", "huge", "-o", str(tmp_path)]) == EXIT_USAGE
