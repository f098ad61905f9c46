import json
import pathlib
import subprocess
import sys

import pytest

from riskconv.cli import jsonable, main
from riskconv.config import RunConfig
from riskconv.errors import InvalidArgument

DATA = pathlib.Path(__file__).parent / "data"
FOUR = str(DATA / "four_atom.csv")


def run(capsys, *argv):
    code = main(list(argv))
    out, err = capsys.readouterr()
    return code, (json.loads(out) if code == 0 and out else None), err


def test_risk_eval_fixture(capsys):
    code, doc, _ = run(capsys, "risk", "eval", "--measure", "es", "--alpha", "0.5",
                       "--scenarios", FOUR, "--flag-trials", "50")
    assert code == 0
    assert doc["schema"] == 1 and doc["value"] == 3.0
    assert doc["flags_report"]["passed"]


def test_risk_eval_rational(capsys):
    code, doc, _ = run(capsys, "--mode", "rational", "risk", "eval", "--measure", "es:1",
                       "--flag-trials", "0")
    assert code == 0 and doc["exact_value"] == "1/2"


def test_global_options_after_subcommand(capsys):
    code, doc, _ = run(capsys, "risk", "eval", "--measure", "var:0.2", "--mode", "rational",
                       "--flag-trials", "0")
    assert code == 0 and doc["exact_value"] == "4"


def test_gallery(capsys):
    code, doc, _ = run(capsys, "fatou", "gallery", "bigexamp2", "--nmax", "8")
    assert code == 0 and doc["gap"] == 1.0 and doc["atoms"] == 840
    code, doc, _ = run(capsys, "fatou", "gallery", "bigexamp1", "--ladder", "4,6")
    assert code == 0 and doc["bound_holds"]


def test_no_args_prints_usage(capsys):
    code = main([])
    assert code == 2
    assert "usage" in capsys.readouterr().err


def test_group_without_action(capsys):
    assert main(["risk"]) == 2


def test_bad_option_is_usage_error(capsys):
    assert main(["risk", "eval", "--measure", "es", "--bogus"]) == 2


def test_malformed_csv(capsys):
    code, _, err = run(capsys, "risk", "eval", "--measure", "es:0.5",
                       "--scenarios", str(DATA / "bad_cell.csv"))
    assert code == 1
    assert "row 3" in err and "'Y'" in err


def test_missing_file(capsys):
    code, _, err = run(capsys, "risk", "eval", "--measure", "es:0.5", "--scenarios", "/nonexistent.csv")
    assert code == 1 and "error" in err


def test_domain_error(capsys):
    code, _, err = run(capsys, "risk", "eval", "--measure", "es")
    assert code == 1 and "level" in err


def test_norms_table(capsys):
    code, doc, _ = run(capsys, "norms", "table", "--norms", "L1,L2", "--grid", "6")
    assert code == 0
    verdicts = {r["norm"]: r["property_star"] for r in doc["rows"]}
    assert verdicts == {"L1": "fails", "L2": "holds"}


def test_approx_localize(capsys):
    code, doc, _ = run(capsys, "--mode", "rational", "approx", "localize", "--measure", "es:1/2",
                       "--norm", "L2")
    assert code == 0 and doc["converged"] and doc["value"] == 3.0


def test_infconv_solve(capsys):
    code, doc, _ = run(capsys, "infconv", "solve", "--measures", "es:0.3,es:0.6", "--oracle",
                       "--grid", "21", "--iterations", "200")
    assert code == 0
    assert doc["value"] == pytest.approx(7 / 3, abs=1e-6)
    assert doc["certificate"]["passed"]
    assert doc["oracle"]["oracle_gap"] <= doc["oracle"]["resolution"] + 1e-4


def test_infconv_surplus(capsys):
    code, doc, _ = run(capsys, "--mode", "rational", "infconv", "surplus", "--budgets", "1:0.3,1:0.2")
    assert code == 0 and doc["exact_value"] == "2" and doc["value_via_summed_set"] == 2.0


def test_infconv_surplus_bad_budgets(capsys):
    assert main(["infconv", "surplus", "--budgets", "1:0.3"]) == 1
    assert main(["infconv", "surplus", "--budgets", "1,2"]) == 1


def test_fatou_probe(capsys):
    code, doc, _ = run(capsys, "--seed", "4", "fatou", "probe", "--measure", "neg_expectation",
                       "--kind", "norm_bounded_as", "--trials", "20")
    assert code == 0 and doc["violations"] > 0 and doc["seed"] == 4


def test_out_file(tmp_path, capsys):
    target = tmp_path / "report.json"
    code = main(["--out", str(target), "fatou", "gallery", "bigexamp2", "--nmax", "3"])
    assert code == 0 and capsys.readouterr().out == ""
    assert json.loads(target.read_text())["gap"] == 1.0


def test_seed_environment_override(monkeypatch):
    monkeypatch.setenv("RISKCONV_SEED", "17")
    assert RunConfig.resolve(seed=3).seed == 17
    monkeypatch.setenv("RISKCONV_SEED", "x")
    with pytest.raises(InvalidArgument):
        RunConfig.resolve()


def test_config_validation():
    assert RunConfig(mode="rational").exact
    with pytest.raises(InvalidArgument):
        RunConfig(mode="decimal")
    with pytest.raises(InvalidArgument):
        RunConfig(tol=0)
    assert "out" not in RunConfig().to_dict()


def test_jsonable_non_finite():
    assert jsonable({"a": float("inf"), "b": float("nan"), "c": [float("-inf")]}) == \
        {"a": "inf", "b": None, "c": ["-inf"]}


def test_module_entry_point():
    proc = subprocess.run([sys.executable, "-m", "riskconv", "risk", "eval", "--measure", "es",
                           "--alpha", "0.5", "--scenarios", FOUR, "--flag-trials", "0"],
                          capture_output=True, text=True, check=False)
    assert proc.returncode == 0
    assert json.loads(proc.stdout)["value"] == 3.0
