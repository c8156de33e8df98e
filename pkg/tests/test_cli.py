import json
import time

import numpy as np
import pytest

from peee.cli import main
from conftest import TBI_FORMULA, TBI_INCOMPLETE

FIT = ["fit", "--id", "id", "--formula", TBI_FORMULA, "--incomplete-formula", TBI_INCOMPLETE]


def run_fit(path, out, *extra):
    code = main([*FIT, "--data", str(path), "--output", str(out), *extra])
    return code, (json.loads(out.read_text()) if code == 0 else None)


def test_fit_report(tbi_csv, tmp_path):
    code, rep = run_fit(tbi_csv, tmp_path / "r.json")
    assert code == 0
    assert rep["missingness"]["n"] == 1500 and rep["missingness"]["m"] > 0
    assert rep["augmentation"].startswith("discrete")
    for row in rep["coefficients"]:
        assert row["odds_ratio"] == pytest.approx(np.exp(row["estimate"]), rel=1e-12)
        assert row["or_ci_lower"] < row["odds_ratio"] < row["or_ci_upper"]
        assert 0 <= row["p_value"] <= 1
    assert len(rep["incomplete_model"]["coefficients"]) == 2 * 6
    timing = json.loads((tmp_path / "r.json.timing.json").read_text())
    assert timing["fit_seconds"] >= 0


def test_fit_bootstrap_close_to_closed_form(tbi_csv, tmp_path):
    _, cf = run_fit(tbi_csv, tmp_path / "cf.json")
    code, bs = run_fit(tbi_csv, tmp_path / "bs.json", "--variance", "bootstrap", "--B", "100",
                       "--seed", "3")
    assert code == 0
    for a, b in zip(cf["coefficients"], bs["coefficients"]):
        assert abs(b["se"] / a["se"] - 1) < 0.2


def test_fit_complete_data(tbi_complete_csv, tmp_path):
    code, rep = run_fit(tbi_complete_csv, tmp_path / "c.json")
    assert code == 0
    assert rep["augmentation"] == "none (complete data)"
    assert rep["missingness"]["m"] == 0


def test_fit_linear_family_has_no_odds_ratios(tbi_csv, tmp_path):
    code, rep = run_fit(tbi_csv, tmp_path / "l.json", "--family", "linear")
    assert code == 0
    assert "odds_ratio" not in rep["coefficients"][0]


def test_fit_deterministic(tbi_csv, tmp_path):
    run_fit(tbi_csv, tmp_path / "a.json")
    run_fit(tbi_csv, tmp_path / "b.json")
    assert (tmp_path / "a.json").read_bytes() == (tmp_path / "b.json").read_bytes()


@pytest.mark.parametrize("argv,code", [
    (["fit", "--formula", "y ~ x"], 1),
    (["bogus"], 1),
    ([], 1),
    (["fit", "--data", "missing.csv", "--formula", "y ~ x", "--incomplete-formula", "x ~ y"], 2),
    (["fit", "--data", "x.csv", "--formula", "y ~ ~ x", "--incomplete-formula", "x ~ y"], 1),
    (["simulate", "--design", "sim3"], 1),
    (["simulate", "--methods", "PEEE-flex"], 1),
])
def test_exit_codes(argv, code):
    assert main(argv) == code


def test_help_exits_zero(capsys):
    assert main(["--help"]) == 0
    assert "simulate" in capsys.readouterr().out


def test_fit_bad_cell_is_data_error(tmp_path):
    p = tmp_path / "bad.csv"
    p.write_text("id,y,x\n1,1,\n2,0,1\n3,1,a\n")
    assert main(["fit", "--data", str(p), "--id", "id", "--formula", "y ~ x",
                 "--incomplete-formula", "x ~ y", "--kind", "linear-mean",
                 "--regime", "linear-moment"]) == 2


def test_fit_numerical_failure_exit_code(tmp_path):
    p = tmp_path / "collinear.csv"
    rows = ["id,y,x,x2,z"] + [f"{i},{i % 2},{i},{2 * i},{'' if i % 5 == 0 else 1 + i % 3}"
                              for i in range(30)]
    p.write_text("\n".join(rows) + "\n")
    assert main(["fit", "--data", str(p), "--id", "id", "--formula", "y ~ x + x2 + cat(z)",
                 "--incomplete-formula", "z ~ y"]) == 3


def test_fit_monte_carlo_needs_seed(tbi_csv, tmp_path):
    assert main([*FIT, "--data", str(tbi_csv), "--regime", "monte-carlo", "--S", "3",
                 "--kind", "multinomial"]) == 1


def test_simulate_smoke_and_determinism(tmp_path):
    args = ["simulate", "--design", "sim1", "--n", "300", "--replications", "2",
            "--methods", "PEEE,MIB5", "--bootstrap-B", "10", "--seed", "4"]
    t0 = time.perf_counter()
    assert main([*args, "--output", str(tmp_path / "a.json"), "--table", str(tmp_path / "a.txt")]) == 0
    assert time.perf_counter() - t0 < 10
    assert main([*args, "--output", str(tmp_path / "b.json")]) == 0
    assert (tmp_path / "a.json").read_bytes() == (tmp_path / "b.json").read_bytes()
    doc = json.loads((tmp_path / "a.json").read_text())
    assert doc["config"]["replications"] == 2 and len(doc["results"]) == 8
    assert "MIB5" in (tmp_path / "a.txt").read_text()
    assert (tmp_path / "a.json.timing.json").exists()


def test_simulate_config_file_with_override(tmp_path):
    cfg = tmp_path / "study.ini"
    cfg.write_text("[study]\ndesign = sim2\nn = 300\nscenario = sin\n"
                   "methods = CC,PEEE\nreplications = 5\nseed = 2\n")
    assert main(["simulate", "--config", str(cfg), "--replications", "2",
                 "--output", str(tmp_path / "s.json")]) == 0
    doc = json.loads((tmp_path / "s.json").read_text())
    assert doc["config"]["scenario"] == "sin" and doc["config"]["replications"] == 2
    bad = tmp_path / "bad.ini"
    bad.write_text("[study]\ncolour = red\n")
    assert main(["simulate", "--config", str(bad)]) == 1
    assert main(["simulate", "--config", str(tmp_path / "nope.ini")]) == 2


def test_bench_smoke(tmp_path):
    out = tmp_path / "b.json"
    assert main(["bench", "--grid", "300", "--trials", "1", "--B", "5", "--output", str(out)]) == 0
    doc = json.loads(out.read_text())
    assert doc["results"][0]["n"] == 300
    timing = json.loads((tmp_path / "b.json.timing.json").read_text())
    assert timing["timing_seconds"][0]["speedup"] > 0
