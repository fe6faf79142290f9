import csv
import io
import json
import math
import shutil
import subprocess

import pytest

from oscnorm import cli

J_HI = "0.3678794411714423"


def run(capsys, *argv):
    code = cli.main(list(argv))
    out, err = capsys.readouterr()
    return code, out, err


def test_a1_neglog_prints_two(capsys):
    code, out, _ = run(capsys, "a1", "--fn", "neglog", "--interval", "0", J_HI)
    assert code == 0
    d = json.loads(out)
    assert d["constant"] == pytest.approx(2.0, rel=1e-9)
    assert d["member"] is True


def test_report_const_blo_is_zero(capsys):
    code, out, _ = run(capsys, "report", "--fn", "const:3", "--kind", "blo")
    assert code == 0 and json.loads(out)["value"] == 0


def test_report_csv_flattens_intervals(capsys):
    code, out, _ = run(capsys, "report", "--fn", "neglog", "--interval", "0", "1", "--format", "csv",
                       "--grid-size", "64")
    rows = list(csv.DictReader(io.StringIO(out)))
    assert code == 0 and len(rows) == 1
    assert float(rows[0]["value"]) == pytest.approx(1.0, rel=1e-9)
    assert rows[0]["witness_lo"] == "0"


def test_reproduce_jk_constant_rows(capsys):
    code, out, _ = run(capsys, "reproduce", "jk-constant", "--k", "1", "2", "3")
    assert code == 0
    rows = list(csv.DictReader(io.StringIO(out)))
    assert len(rows) == 3
    for k, row in zip((1, 2, 3), rows):
        assert float(row["expected"]) == pytest.approx((1 + math.e**k) / math.e**k, rel=1e-11)
        assert float(row["measured"]) == pytest.approx(float(row["expected"]), rel=1e-3)
        assert row["pass"] == "true"


@pytest.mark.parametrize("example", ["gr-a1", "kr-series", "sigma-catalog"])
def test_quick_reproductions_pass(capsys, example):
    code, out, _ = run(capsys, "reproduce", example, "--format", "json")
    d = json.loads(out)
    assert code == 0 and d["passed"] and d["rows"]


def test_reproduce_exit_one_when_a_row_fails(capsys, monkeypatch):
    monkeypatch.setattr(cli, "reproduce_kr_series", lambda cfg, rs: [cli.Row("r=1", 3.0, 2.0, 1e-3, False)])
    code, out, _ = run(capsys, "reproduce", "kr-series")
    assert code == 1
    assert out.splitlines()[1].endswith(",false")


def test_csv_uses_twelve_significant_digits(capsys):
    code, out, _ = run(capsys, "reproduce", "jk-constant", "--k", "1")
    row = next(csv.DictReader(io.StringIO(out)))
    assert row["expected"] == "1.36787944117"


def test_output_is_byte_stable(capsys, tmp_path):
    argv = ["mollify", "--fn", "pwl(0, 0.5, 1; 0, 1, 0)", "--eps", "0.1", "0.01", "--grid-size", "32"]
    outs = []
    for i in range(2):
        path = tmp_path / f"run{i}.csv"
        assert cli.main(argv + ["--out", str(path)]) == 0
        outs.append(path.read_bytes())
    assert outs[0] == outs[1]
    assert outs[0].startswith(b"param,measured,bound,witness_lo,witness_hi\n")


def test_truncation_and_rearrange_verbs(capsys):
    code, out, _ = run(capsys, "truncation-sweep", "--fn", "jump", "--k", "1", "2", "--grid-size", "32")
    rows = list(csv.DictReader(io.StringIO(out)))
    assert code == 0 and all(float(r["measured"]) >= 1 - 1e-3 for r in rows)
    code, out, _ = run(capsys, "rearrange", "--fn", "step(0, 0.25, 0.75, 1; 0, 1, 0)", "--grid-size", "17",
                       "--format", "json")
    d = json.loads(out)
    # f* is the indicator of [0, 1/2) sampled at t = j/16
    assert code == 0 and d["value"] == [1] * 8 + [0] * 9


def test_sigma_and_decompose_verbs(capsys):
    code, out, _ = run(capsys, "sigma", "--fn", "neglog", "--interval", "0", "1", "--grid-size", "32")
    d = json.loads(out)
    assert code == 0 and d["lower"] <= 1 <= d["upper"]
    code, out, _ = run(capsys, "decompose", "--weight", "--fn", "neglog", "--interval", "0", J_HI,
                       "--grid-size", "32")
    d = json.loads(out)
    assert code == 0 and d["residual"] <= 1e-6 and d["b_min"] >= d["a_lower"]


def test_config_file_is_applied(capsys, tmp_path):
    cfg = tmp_path / "num.cfg"
    cfg.write_text("grid_size = 40\nrefine_levels = 1\n")
    code, out, _ = run(capsys, "report", "--fn", "neglog", "--config", str(cfg))
    levels = json.loads(out)["levels"]
    assert code == 0 and levels[0][0] >= 40 and len(levels) == 1


@pytest.mark.parametrize("argv", [
    ["report"],
    ["report", "--fn", "neglog", "--interval", "1", "0"],
    ["report", "--fn", "loglog"],
    ["report", "--fn", "neglog", "--config", "/nonexistent/cfg"],
    ["bogus-verb"],
    ["reproduce", "no-such-example"],
])
def test_usage_errors_exit_two(capsys, argv):
    code, _, err = run(capsys, *argv)
    assert code == 2
    assert err


def test_unknown_function_lists_catalog(capsys):
    _, _, err = run(capsys, "report", "--fn", "loglog")
    assert "logneglog" in err and "neglogpow" in err


def test_numerical_failure_exits_one(capsys):
    # x^{-2} has no finite A1 bound, so the factorisation cannot start
    code, _, err = run(capsys, "decompose", "--weight", "--fn", "expscale(neglog, 0.5)", "--interval", "0", "1",
                       "--eta", "0.5", "--grid-size", "32")
    assert code == 1 and "numerical failure" in err


@pytest.mark.skipif(shutil.which("osc") is None, reason="console script not installed")
def test_console_script():
    res = subprocess.run(["osc", "report", "--fn", "const:3", "--kind", "blo"], capture_output=True, text=True)
    assert res.returncode == 0 and json.loads(res.stdout)["value"] == 0
