import csv
import io
import json
import subprocess
import sys

import pytest

from fefferlab.cli import run
from fefferlab.scenarios import builtin

BAD_EXPR = """
[meta]
name = "bad"
[coframe]
theta = ["-y", "x +* 2", "1"]
theta1 = ["1", "i", "0"]
"""

FALSE_CLAIM = """
[meta]
name = "not-type-two"
declared = ["typeII"]
"""

NOT_UNITARY = """
[meta]
name = "not-unitary"
[coframe]
theta = ["-y", "x", "1+0.5*x*x"]
theta1 = ["1", "i", "0"]
"""


def _run(argv, capsys):
    code = run(argv)
    out = capsys.readouterr()
    return code, out.out, out.err


def test_verify_all_on_dumped_heisenberg(tmp_path, capsys):
    path = tmp_path / "heis.toml"
    assert run(["dump", "heisenberg", "--out", str(path)]) == 0
    code, out, _ = _run(["verify-all", str(path), "--points", "16"], capsys)
    report = json.loads(out)
    assert code == 0 and report["summary"]["failed"] == 0
    assert list(report) == ["tool", "version", "command", "scenario", "flags", "checks", "data", "summary"]
    for rec in report["checks"]:
        assert list(rec) == ["check", "anchor", "max_residual", "tolerance", "pass"] and rec["anchor"]


def test_reports_are_byte_identical(tmp_path):
    outs = []
    for i in range(2):
        path = tmp_path / f"r{i}.json"
        assert run(["petrov", "builtin:typeII_seed", "--points", "16", "--seed", "3", "--out", str(path)]) == 0
        outs.append(path.read_bytes())
    assert outs[0] == outs[1]


def test_petrov_on_type_two_seed(capsys):
    code, out, _ = _run(["petrov", "builtin:typeII_seed", "--points", "32"], capsys)
    counts = json.loads(out)["data"]["petrov_counts"]
    assert code == 0 and counts["II"] >= 0.9 * 32


def test_malformed_expression_exits_two(tmp_path, capsys):
    path = tmp_path / "bad.toml"
    path.write_text(BAD_EXPR)
    code, _, err = _run(["validate", str(path)], capsys)
    assert code == 2
    assert "[coframe] theta[1]" in err and "offset" in err


def test_missing_file_and_unknown_builtin_exit_two(tmp_path, capsys):
    assert _run(["validate", str(tmp_path / "nope.toml")], capsys)[0] == 2
    assert _run(["validate", "builtin:nothing"], capsys)[0] == 2


def test_false_declaration_exits_one(tmp_path, capsys):
    path = tmp_path / "claim.toml"
    path.write_text(FALSE_CLAIM)
    code, _, err = _run(["petrov", str(path), "--points", "8"], capsys)
    assert code == 1 and err.startswith("FAILED declared_petrov_type")


def test_non_unitary_coframe_exits_two(tmp_path, capsys):
    path = tmp_path / "nu.toml"
    path.write_text(NOT_UNITARY)
    code, _, err = _run(["curvature", str(path), "--points", "8"], capsys)
    assert code == 2 and "unitar" in err


def test_fourier_csv(capsys):
    code, out, _ = _run(["fourier", "builtin:typeII_seed", "--points", "4", "--format", "csv"], capsys)
    assert code == 0
    rows = list(csv.DictReader(io.StringIO(out)))
    assert rows and {"base_point", "scalar", "k", "re", "im"} <= set(rows[0])


def test_scenario_dump_round_trips(capsys):
    code, out, _ = _run(["dump", "half_einstein_seed"], capsys)
    from fefferlab.scenarios import scenario_from_toml

    assert code == 0 and scenario_from_toml(out) == builtin("half_einstein_seed")


@pytest.mark.parametrize("name", ["heisenberg", "typeII_seed", "typeIII_seed"])
def test_verify_all_builtins(name, capsys):
    code, out, _ = _run(["verify-all", f"builtin:{name}", "--points", "16"], capsys)
    assert code == 0, json.loads(out)["summary"]


def test_console_script_entry_point():
    proc = subprocess.run(
        [sys.executable, "-m", "fefferlab.cli", "validate", "builtin:heisenberg", "--points", "4"],
        capture_output=True,
        text=True,
    )
    assert proc.returncode == 0 and json.loads(proc.stdout)["command"] == "validate"
