import csv
import json
from pathlib import Path

import numpy as np
import pytest

from riskport.cli import main
from riskport.config import load_config, parse_utility
from riskport.errors import ConfigError

CONFIGS = Path(__file__).resolve().parent.parent / "configs"

MARKET = """
[market]
horizon = 1.0
rate = 0.02
drift = [0.08]
vol = [[0.2]]
"""


def _write(tmp_path, body, name="run.toml"):
    p = tmp_path / name
    p.write_text(MARKET + body)
    return p


def _read(path):
    with open(path, newline="") as fh:
        rows = list(csv.reader(fh))
    return rows[0], np.array(rows[1:], dtype=float)


def _results(out):
    return {line.split()[1]: line.split()[2] for line in out.splitlines() if line.startswith("RESULT")}


def test_evaluate_crra_closed_form(tmp_path, capsys):
    cfg = _write(tmp_path, '[utility]\nkind = "crra"\ngamma = 2.0\n'
                           '[grid]\ntimes = [0.0, 0.5]\nwealth = [0.5, 1.0, 2.0]\n')
    assert main(["evaluate", "--config", str(cfg), "--out", str(tmp_path / "o")]) == 0
    header, data = _read(tmp_path / "o" / "evaluate.csv")
    assert header == ["t", "x", "lambda", "u", "f", "f_over_x"]
    np.testing.assert_allclose(data[:, 4], data[:, 1] / 2, rtol=1e-12)
    lam0 = data[(data[:, 0] == 0) & (data[:, 1] == 1.0), 2][0]
    assert lam0 == pytest.approx(np.exp(-0.0425), rel=1e-10)
    assert _results(capsys.readouterr().out)["evaluate"] == "pass"


def test_policy_log_fund_weight_one(tmp_path):
    cfg = _write(tmp_path, '[utility]\nkind = "log"\n')
    assert main(["policy", "--config", str(cfg), "--out", str(tmp_path / "o")]) == 0
    header, data = _read(tmp_path / "o" / "policy.csv")
    assert "fund_weight" in header
    np.testing.assert_allclose(data[:, header.index("fund_weight")], 1.0, rtol=1e-12)


def test_csv_output_is_byte_identical(tmp_path):
    cfg = _write(tmp_path, '[utility]\nkind = "crra_mixture"\nweights = [0.5, 0.5]\ngammas = [2.0, 5.0]\n'
                           '[grid]\ntimes = [0.0]\nwealth = {min = 0.5, max = 2.0, count = 5}\n')
    for d in ("a", "b"):
        assert main(["evaluate", "--config", str(cfg), "--out", str(tmp_path / d)]) == 0
    a = (tmp_path / "a" / "evaluate.csv").read_bytes()
    assert a == (tmp_path / "b" / "evaluate.csv").read_bytes()
    assert b"\r\n" not in a and b"-0," not in a


def test_out_dir_precedence(tmp_path, monkeypatch):
    cfg = _write(tmp_path, '[utility]\nkind = "log"\n[grid]\ntimes = [0.0]\nwealth = [1.0]\n'
                           '[output]\ndir = "cfgout"\n')
    assert main(["evaluate", "--config", str(cfg)]) == 0
    assert (tmp_path / "cfgout" / "evaluate.csv").exists()
    monkeypatch.setenv("RISKPORT_OUT", str(tmp_path / "envout"))
    assert main(["evaluate", "--config", str(cfg)]) == 0
    assert (tmp_path / "envout" / "evaluate.csv").exists()
    assert main(["evaluate", "--config", str(cfg), "--out", str(tmp_path / "flag")]) == 0
    assert (tmp_path / "flag" / "evaluate.csv").exists()


def test_dry_run_prints_plan_and_writes_nothing(tmp_path, capsys):
    cfg = _write(tmp_path, '[utility]\nkind = "crra"\ngamma = 3.0\n[simulation]\npaths = 77\n')
    assert main(["simulate", "--config", str(cfg), "--out", str(tmp_path / "o"), "--dry-run",
                 "--seed", "5"]) == 0
    plan = json.loads(capsys.readouterr().out)
    assert plan["command"] == "simulate" and plan["simulation"]["paths"] == 77
    assert plan["simulation"]["seed"] == 5 and plan["utility"] == "crra(3)"
    assert not (tmp_path / "o").exists()


@pytest.mark.parametrize("body", [
    '[utility]\nkind = "crra"\ngamma = \n',
    '[utility]\nkind = "power"\n',
    '[utility]\nkind = "crra"\ngamma = -1.0\n',
    '[utility]\nkind = "log"\n[grid]\nwealth = [1.0, 0.5]\n',
    '[utility]\nkind = "log"\n[simulation]\npaths = 1\n',
])
def test_malformed_config_exits_2(tmp_path, capsys, body):
    cfg = _write(tmp_path, body)
    assert main(["evaluate", "--config", str(cfg), "--out", str(tmp_path / "o")]) == 2
    assert "error" in capsys.readouterr().err


def test_missing_config_file_exits_2(tmp_path):
    assert main(["evaluate", "--config", str(tmp_path / "nope.toml")]) == 2


def test_toml_error_reports_location(tmp_path):
    p = tmp_path / "bad.toml"
    p.write_text("[utility]\nkind = crra\n")
    with pytest.raises(ConfigError, match="line 2"):
        load_config(p)


def test_market_file_reference_and_curve_table(tmp_path):
    (tmp_path / "m.toml").write_text(
        "[market]\nhorizon = 2.0\nrate = {times = [0.0, 2.0], values = [0.01, 0.03]}\n"
        "drift = [0.08]\nvol = [[0.2]]\n")
    p = tmp_path / "run.toml"
    p.write_text('market = "m.toml"\n[utility]\nkind = "log"\n')
    cfg = load_config(p)
    assert cfg.market.horizon == 2.0
    assert cfg.market.rate_integral(0.0, 2.0) == pytest.approx(0.04)
    np.testing.assert_allclose(cfg.times, [0.0, 0.5, 1.0, 1.5])


def test_parse_epsilon_perturbed():
    u = parse_utility({"kind": "epsilon_perturbed", "eps": 0.5,
                       "base": {"kind": "crra", "gamma": 2.0}})
    assert "crra(2)" in u.label
    with pytest.raises(ConfigError):
        parse_utility({"kind": "epsilon_perturbed", "eps": 0.5})


def test_approx_table(tmp_path, capsys):
    cfg = _write(tmp_path, '[utility]\nkind = "crra"\ngamma = 2.0\n[approx]\nm = [2, 8, 32]\n')
    assert main(["approx", "--config", str(cfg), "--out", str(tmp_path / "o")]) == 0
    header, data = _read(tmp_path / "o" / "approx.csv")
    assert header[:2] == ["m", "t"] and list(data[:, 0]) == [2, 8, 32]
    assert data[-1, -1] < 1e-3
    assert _results(capsys.readouterr().out)["approx"] == "pass"


def test_complete_incomplete_market(tmp_path, capsys):
    assert main(["complete", "--config", str(CONFIGS / "incomplete.toml"),
                 "--out", str(tmp_path)]) == 0
    header, data = _read(tmp_path / "complete.csv")
    assert header == ["t", "row1_1", "row1_2", "theta_1", "theta_2"]
    np.testing.assert_allclose(data[:, 1:3], [[0.0, 1.0]] * len(data), atol=1e-14)
    np.testing.assert_allclose(data[:, 3], 0.2, rtol=1e-12)
    assert _results(capsys.readouterr().out)["complete"] == "pass"


def test_swapped_comparison_exits_4(tmp_path, capsys):
    code = main(["verify", "--config", str(CONFIGS / "swapped.toml"), "--out", str(tmp_path)])
    assert code == 4
    assert _results(capsys.readouterr().out)["statics.ordering"] == "precondition"


def test_verify_crra2_passes(tmp_path, capsys):
    code = main(["verify", "--config", str(CONFIGS / "crra2.toml"), "--out", str(tmp_path),
                 "--paths", "4000"])
    res = _results(capsys.readouterr().out)
    assert code == 0, res
    assert set(res) >= {"pde", "terminal", "duality", "martingale.deflated_wealth",
                        "statics.ordering", "statics.drra", "statics.irra", "approx"}
    for name in ("pde_residual.csv", "martingale.csv", "statics.csv", "approx.csv"):
        assert (tmp_path / name).exists()


def test_simulate_log(tmp_path, capsys):
    cfg = _write(tmp_path, '[utility]\nkind = "log"\n[simulation]\npaths = 500\nsteps = 4\n'
                           'euler_steps = 20\n')
    assert main(["simulate", "--config", str(cfg), "--out", str(tmp_path / "o")]) == 0
    res = _results(capsys.readouterr().out)
    assert res["martingale.deflated_wealth"] == "pass"
    assert res["simulate.euler_vs_exact"] == "pass"


def test_argparse_requires_config():
    with pytest.raises(SystemExit) as exc:
        main(["evaluate"])
    assert exc.value.code == 2
