import csv
import io
import json
import subprocess
import sys

import numpy as np
import pytest

from linecap import bounds
from linecap.cli import main


def run(*argv):
    out = io.StringIO()
    code = main(list(argv), out=out)
    return code, out.getvalue()


def run_proc(*argv):
    return subprocess.run([sys.executable, "-m", "linecap", *argv], capture_output=True, text=True)


def rows_of(text):
    return list(csv.DictReader(io.StringIO(text)))


def test_bounds_rows():
    code, text = run("bounds", "--erasure", "0.2", "--M", "2", "--N", "2", "--L", "1..10")
    assert code == 0
    rows = rows_of(text)
    assert len(rows) == 10
    assert list(rows[0]) == ["L", "pec_ub", "canonical_ub", "general_ub", "rep_rate"]
    p = bounds.BatchParams.for_packets(2, 2, 256, 1024)
    for r in rows:
        assert float(r["pec_ub"]) == pytest.approx(bounds.pec_ub(p, int(r["L"]), 0.2), rel=1e-11)
    assert rows[0]["pec_ub"] == "7864.32"


def test_bounds_m1_matches_repetition():
    _, text = run("bounds", "--erasure", "0.3", "--M", "1", "--N", "3", "--L", "1..20")
    for r in rows_of(text):
        assert r["pec_ub"] == r["rep_rate"]


def test_bounds_single_l_and_alphabet():
    _, text = run("bounds", "--erasure", "0.5", "--M", "1", "--N", "1", "--L", "3", "--alphabet-size", "2")
    (r,) = rows_of(text)
    assert float(r["rep_rate"]) == pytest.approx(0.125)


def test_bounds_missing_flag():
    res = run_proc("bounds", "--M", "2", "--N", "2", "--L", "1..3")
    assert res.returncode == 2
    assert "--erasure" in res.stderr


@pytest.mark.parametrize("bad", ["0..3", "5..2", "x"])
def test_bounds_bad_range(bad):
    res = run_proc("bounds", "--erasure", "0.2", "--M", "1", "--N", "1", "--L", bad)
    assert res.returncode == 2


def test_figure_era1(tmp_path):
    path = tmp_path / "era1.csv"
    code, msg = run("figure", "era1", "--out", str(path))
    assert code == 0 and "1000 rows" in msg
    rows = rows_of(path.read_text())
    assert list(rows[0]) == ["L", "bats2", "bats3", "bats4", "ub2", "ub3", "ub4"]
    assert len(rows) == 1000
    for r in rows:
        for m in (2, 3, 4):
            assert float(r[f"bats{m}"]) <= float(r[f"ub{m}"])
    assert float(rows[0]["ub2"]) == pytest.approx(7864.32, rel=1e-12)


def test_figure_era3_monotone():
    code, text = run("figure", "era3", "--L-max", "300")
    assert code == 0
    rows = rows_of(text)
    for m in (2, 4, 8, 16, 32):
        col = [int(r[f"nstar{m}"]) for r in rows]
        assert all(b >= a for a, b in zip(col, col[1:]))


def test_figure_era2_columns():
    _, text = run("figure", "era2", "--L-max", "50", "--M", "2,4")
    rows = rows_of(text)
    assert list(rows[0]) == ["L", "nstar2", "nstar4", "bats2", "bats4", "ub2", "ub4"]
    for r in rows:
        assert float(r["bats2"]) <= float(r["ub2"])


def test_figure_unknown():
    assert run_proc("figure", "era9").returncode == 2


def test_figure_byte_identical():
    a = run("figure", "era1", "--L-max", "40")[1]
    b = run("figure", "era1", "--L-max", "40")[1]
    assert a == b
    for line in a.splitlines()[1:]:
        for cell in line.split(","):
            float(cell)
            assert len(cell.replace("-", "").replace(".", "").lstrip("0")) <= 12 or "e" in cell


def test_simulate_repetition_deterministic():
    argv = ("simulate", "--scheme", "repetition", "--links", "erasure(2,0.2)x10", "--N", "5",
            "--trials", "20000", "--seed", "7")
    a, b = run(*argv), run(*argv)
    assert a == b and a[0] == 0
    assert "success_fraction=" in a[1] and "B2=4" in a[1]


def test_simulate_rlnc_histogram():
    code, text = run("simulate", "--scheme", "rlnc", "--M", "2", "--N", "4", "--q", "2", "--eps", "0.5",
                     "--L", "5", "--trials", "5000", "--seed", "3")
    assert code == 0
    lines = text.splitlines()
    k = lines.index("rank,count,empirical,analytic")
    analytic = [float(ln.split(",")[3]) for ln in lines[k + 1:]]
    assert sum(analytic) == pytest.approx(1.0)


def test_simulate_zero_trials():
    res = run_proc("simulate", "--scheme", "rlnc", "--trials", "0")
    assert res.returncode == 2


def test_simulate_requires_links():
    assert run_proc("simulate", "--scheme", "repetition", "--trials", "10").returncode == 2


def test_simulate_bad_network():
    res = run_proc("simulate", "--scheme", "repetition", "--links", "bsc(0.1),bogus(3)", "--trials", "10")
    assert res.returncode == 1
    assert "position 9" in res.stderr


def test_simulate_bad_file(tmp_path):
    bad = tmp_path / "bad.json"
    bad.write_text("{not json")
    res = run_proc("simulate", "--scheme", "repetition", "--links", f"@{bad}", "--trials", "10")
    assert res.returncode == 1
    assert "position" in res.stderr


def test_reduce_and_replay(tmp_path):
    plan = tmp_path / "plan.json"
    code, text = run("reduce", "--links", "bsc(0.1),identity(2)", "--out", str(plan))
    assert code == 0
    info = dict(ln.split("=", 1) for ln in text.splitlines())
    assert info["L0"] == "1"
    assert float(info["residual"]) < 1e-9
    data = json.loads(plan.read_text())
    assert len(data["recoders"]) == 3
    code, text = run("simulate", "--scheme", "plan", "--plan", str(plan), "--links", "bsc(0.1),identity(2)",
                     "--trials", "20000", "--seed", "1")
    assert code == 0
    frac = float(dict(ln.split("=", 1) for ln in text.splitlines())["success_fraction"])
    assert abs(frac - 0.82) < 4 * np.sqrt(0.82 * 0.18 / 20000)


def test_reduce_q3x3():
    code, text = run("reduce", "--links", "q3x3")
    assert code == 0
    info = dict(ln.split("=", 1) for ln in text.splitlines())
    assert float(info["rho"]) == pytest.approx(0.75)
    assert float(info["residual"]) < 1e-9


def test_reduce_errors():
    res = run_proc("reduce", "--links", "bsc(0.1),bsc(0.5)")
    assert res.returncode == 1 and "link 1" in res.stderr
    assert run_proc("reduce", "--links", "").returncode == 2
