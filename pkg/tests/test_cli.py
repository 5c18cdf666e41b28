from __future__ import annotations

import csv
import json
import math
import subprocess
import sys

import pytest

from vallab.cli import main

BALL3 = '{"type": "ball", "center": [0, 0, 0], "radius": 1}'
SQUARE = '{"type": "box", "lo": [0, 0], "hi": [1, 1]}'
DISK = '{"type": "ball", "center": [0, 0], "radius": 1}'
BALL4 = '{"type": "ball", "center": [0, 0, 0, 0], "radius": 1}'


def run(capsys, *argv):
    code = main(list(argv))
    out = capsys.readouterr()
    return code, out.out, out.err


def doc(capsys, *argv):
    code, out, err = run(capsys, *argv)
    assert code == 0, err
    return json.loads(out)


@pytest.fixture(autouse=True)
def no_env_seed(monkeypatch):
    monkeypatch.delenv("VALLAB_SEED", raising=False)


def test_intrinsic_of_unit_ball(capsys):
    d = doc(capsys, "intrinsic", "--body", BALL3, "--i", "1", "--seed", "0")
    assert d["value"] == pytest.approx(4 * math.pi / 3)
    assert d["seed"] == 0 and "intrinsic_volumes" in d["conventions"]


def test_steiner_of_square(capsys):
    d = doc(capsys, "steiner", "--body", SQUARE, "--seed", "0")
    assert [c["value"] for c in d["coefficients"]] == pytest.approx([1, 4, math.pi])


def test_hadwiger_round_trip(capsys):
    d = doc(capsys, "hadwiger", "--n", "3", "--a", "1,2,3,4", "--seed", "0")
    assert d["max_error"] < 1e-6


def test_hadwiger_of_named_valuation(capsys):
    d = doc(capsys, "hadwiger", "--n", "2", "--valuation", "vol", "--seed", "0")
    assert [c["value"] for c in d["coefficients"]] == pytest.approx([0, 0, 1], abs=1e-9)


def test_product_unit_law(capsys):
    d = doc(capsys, "product", "--phi", "chi", "--psi", "V1", "--body", SQUARE, "--samples", "1e3", "--seed", "1")
    assert d["value"] == pytest.approx(2.0)


def test_ukp_both_spellings(capsys):
    a = doc(capsys, "ukp", "--body", BALL4, "--k", "2", "--p", "1", "--samples", "2e4", "--seed", "2")
    b = doc(capsys, "hermitian", "ukp", "--body", BALL4, "--k", "2", "--p", "1", "--samples", "2e4", "--seed", "2")
    assert a["value"] == b["value"]
    assert abs(a["value"] - math.pi**2) <= 3 * a["stderr"]


def test_kappa_table(capsys):
    d = doc(capsys, "kinematic", "kappa", "--n", "2", "--seed", "0")
    assert [math.pi * r["kappa"] for r in d["kappa"]] == pytest.approx([1, 2, 1])


def test_kinematic_check_and_integral(capsys):
    d = doc(capsys, "kinematic", "check", "--omega1", DISK, "--omega2", DISK, "--samples", "5e4", "--seed", "3")
    assert d["passed"] and d["z"] < 3
    d = doc(capsys, "kinematic", "integral", "--group", "IU", "--omega1", BALL4, "--omega2", BALL4,
            "--samples", "5e4", "--seed", "3")
    assert d["measure"] == "IU(2)"
    assert abs(d["value"] - math.pi**2 / 2 * 16) <= 3 * d["stderr"]


def test_selftest_subset(capsys):
    d = doc(capsys, "selftest", "--only", "support_ball", "kappa_symmetry", "--seed", "0")
    assert d["passed"] and len(d["checks"]) == 2


def test_seed_from_environment(capsys, monkeypatch):
    monkeypatch.setenv("VALLAB_SEED", "17")
    assert doc(capsys, "kinematic", "kappa", "--n", "1")["seed"] == 17


def test_output_is_deterministic(capsys):
    argv = ["kinematic", "integral", "--omega1", SQUARE, "--omega2", DISK, "--samples", "2e5", "--seed", "5"]
    first = run(capsys, *argv, "--workers", "1")[1]
    second = run(capsys, *argv, "--workers", "1")[1]
    parallel = run(capsys, *argv, "--workers", "2")[1]
    assert first == second == parallel


def test_out_and_csv(capsys, tmp_path):
    out, table = tmp_path / "r.json", tmp_path / "r.csv"
    code, stdout, _ = run(capsys, "steiner", "--body", SQUARE, "--seed", "0", "--out", str(out), "--csv", str(table))
    assert code == 0 and stdout == ""
    assert json.loads(out.read_text())["command"] == "steiner"
    rows = list(csv.DictReader(table.open()))
    assert [float(r["value"]) for r in rows] == pytest.approx([1, 4, math.pi])


def test_body_from_file(capsys, tmp_path):
    path = tmp_path / "disk.json"
    path.write_text(DISK)
    d = doc(capsys, "intrinsic", "--body", str(path), "--i", "2", "--seed", "0")
    assert d["value"] == pytest.approx(math.pi)


# --- exit codes -------------------------------------------------------------------------


def test_missing_seed_exits_2(capsys):
    code, _, err = run(capsys, "kinematic", "kappa", "--n", "2")
    assert code == 2 and "seed" in err


def test_missing_file_exits_2(capsys):
    with pytest.raises(SystemExit) as info:
        main(["intrinsic", "--body", "/nonexistent/body.json", "--seed", "0"])
    assert info.value.code == 2


def test_malformed_body_exits_2(capsys):
    code, _, _ = run(capsys, "intrinsic", "--body", '{"type": "blob"}', "--seed", "0")
    assert code == 2


def test_bad_budget_exits_2(capsys):
    with pytest.raises(SystemExit) as info:
        main(["steiner", "--body", SQUARE, "--samples", "0", "--seed", "0"])
    assert info.value.code == 2


def test_wrong_coefficient_count_exits_2(capsys):
    assert run(capsys, "hadwiger", "--n", "2", "--a", "1,2", "--seed", "0")[0] == 2


def test_pairs_file_without_holdout_exits_2(capsys):
    spec = json.dumps({"training": [[json.loads(BALL4), json.loads(BALL4)]]})
    assert run(capsys, "fit-hermitian", "--pairs", spec, "--seed", "0")[0] == 2


def test_numerical_failure_exits_3_with_diagnostics(capsys):
    code, out, _ = run(capsys, "hadwiger", "--n", "2", "--valuation", "vol", "--radii", "1,1,2", "--seed", "0")
    assert code == 3
    d = json.loads(out)
    assert d["error"] == "LinAlgError" and "conventions" in d


def test_singular_kappa_pairs_exit_3(capsys):
    code, out, _ = run(capsys, "kinematic", "kappa", "--n", "2", "--pairs", "[[1, 1], [2, 2], [3, 3]]", "--seed", "0")
    assert code == 3 and json.loads(out)["error"] == "LinAlgError"


def test_module_entry_point():
    res = subprocess.run([sys.executable, "-m", "vallab", "--version"], capture_output=True, text=True)
    assert res.returncode == 0 and res.stdout.startswith("vallab ")
