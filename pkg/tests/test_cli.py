import csv
import json
import math

import numpy as np
import pytest

from lie_momentum import __version__, cli, optimizers, verify
from lie_momentum.lie_core import AlgebraElement


def run(argv, capsys):
    code = cli.main(argv)
    out, err = capsys.readouterr()
    return code, out, err


def read_csv(path):
    with open(path) as fh:
        return list(csv.reader(fh))


@pytest.fixture
def hb_sign_error(monkeypatch):
    """Heavy-Ball with the friction sign flipped: 1 + gamma h instead of 1 - gamma h."""

    def broken(state, pot, params, check=False):
        grad = pot.trivialized_grad(state.g)
        xi_new = AlgebraElement((1.0 + params.gamma * params.h) * state.xi.mat - params.h * grad.mat)
        return optimizers._advance(state, grad, xi_new, params.h, check)

    monkeypatch.setattr(optimizers, "step_heavy_ball", broken)


# -- run -------------------------------------------------------------------------------


def test_run_writes_trace_summary_and_plot(tmp_path, capsys):
    code, out, _ = run(["run", "--scheme", "nag-sc", "--n", "10", "--kappa", "1e4", "--seed", "7",
                        "--output-dir", str(tmp_path)], capsys)
    assert code == 0
    assert "nag-sc n=10 kappa=10000 seed=7" in out and "converged=yes" in out
    stem = tmp_path / "nag-sc_n10_k10000_s7"
    rows = read_csv(f"{stem}.csv")
    assert rows[0][:4] == ["k", "t", "U", "subopt"]
    assert len(rows) > 10
    summary = json.loads(stem.with_suffix(".json").read_text())
    assert summary["version"] == __version__
    assert summary["config"]["kappa"] == 1e4 and summary["config"]["seed"] == 7
    assert summary["config"]["n"] == 10 and summary["config"]["schemes"] == ["nag-sc"]
    assert summary["converged"] is True
    assert summary["spectrum_error"] < 1e-8
    assert stem.with_suffix(".svg").read_text().startswith("<svg")


def test_run_rejects_bad_step(tmp_path, capsys):
    code, _, err = run(["run", "--scheme", "heavy-ball", "--h", "10", "--output-dir", str(tmp_path)], capsys)
    assert code == 1
    assert "gamma*h" in err and "< 1" in err


def test_run_gd_baseline(tmp_path, capsys):
    code, out, _ = run(["run", "--scheme", "gd", "--kappa", "100", "--output-dir", str(tmp_path)], capsys)
    assert code == 0
    rate = float(out.split("rate=")[1].split()[0])
    assert 1 - rate == pytest.approx(2 / 100, rel=0.1)


def test_run_nonconvergence_exit_code(tmp_path, capsys):
    code, out, _ = run(["run", "--scheme", "heavy-ball", "--kappa", "1e3", "--max-iters", "10",
                        "--output-dir", str(tmp_path)], capsys)
    assert code == 2
    assert "converged=no" in out


@pytest.mark.parametrize("argv", [
    ["run", "--kappa", "5"],
    ["run", "--kappa", "abc"],
    ["run", "--scheme", "adam"],
    ["run", "--init-mode", "sideways"],
    ["run", "--eps", "2"],
    ["frobnicate"],
])
def test_run_config_errors(argv, tmp_path, capsys):
    code, _, err = run(argv + ["--output-dir", str(tmp_path)] if argv[0] == "run" else argv, capsys)
    assert code == 1
    assert "error" in err


def test_config_file_and_flag_precedence(tmp_path, capsys):
    cfg = tmp_path / "cfg.json"
    cfg.write_text(json.dumps({"scheme": "heavy-ball", "kappa": 200, "n": 5, "seed": 3,
                               "output_dir": str(tmp_path / "out")}))
    code, out, _ = run(["run", "--config", str(cfg), "--seed", "4"], capsys)
    assert code == 0
    assert "heavy-ball n=5 kappa=200 seed=4" in out
    summary = json.loads((tmp_path / "out" / "heavy-ball_n5_k200_s4.json").read_text())
    assert summary["config"]["seed"] == 4
    bad = tmp_path / "bad.json"
    bad.write_text(json.dumps({"kapa": 3}))
    code, _, err = run(["run", "--config", str(bad)], capsys)
    assert code == 1 and "kapa" in err
    code, _, err = run(["run", "--config", str(tmp_path / "missing.json")], capsys)
    assert code == 1
    (tmp_path / "broken.json").write_text("{")
    code, _, _ = run(["run", "--config", str(tmp_path / "broken.json")], capsys)
    assert code == 1


# -- sweep -----------------------------------------------------------------------------


def test_sweep_outputs(tmp_path, capsys):
    code, out, _ = run(["sweep", "--n", "5", "--kappas", "50,100,200,400", "--seeds", "0",
                        "--schemes", "gd,heavy-ball,nag-sc", "--output-dir", str(tmp_path)], capsys)
    assert code == 0
    for scheme in ("gd", "heavy-ball", "nag-sc"):
        assert f"{scheme}: slope=" in out
    summary = json.loads((tmp_path / "summary.json").read_text())
    assert summary["version"] == __version__
    assert set(summary["fits"]) == {"gd", "heavy-ball", "nag-sc"}
    assert len(list((tmp_path / "runs").glob("*.csv"))) == 12
    svg = (tmp_path / "rates.svg").read_text()
    assert svg.count("<polyline") == 6


def test_sweep_empty_kappas(tmp_path, capsys):
    code, _, err = run(["sweep", "--kappas", "", "--output-dir", str(tmp_path)], capsys)
    assert code == 1
    assert "kappas" in err


def test_sweep_too_few_kappas(tmp_path, capsys):
    code, _, err = run(["sweep", "--n", "5", "--kappas", "100", "--output-dir", str(tmp_path)], capsys)
    assert code == 2
    assert "4" in err


def test_sweep_unfittable_scheme(tmp_path, capsys):
    code, out, _ = run(["sweep", "--n", "5", "--kappas", "50,100,200,400", "--seeds", "0",
                        "--schemes", "heavy-ball", "--max-iters", "200",
                        "--output-dir", str(tmp_path)], capsys)
    assert code == 2
    assert "no fit" in out


# -- verify ----------------------------------------------------------------------------


def test_verify_clean(capsys):
    code, out, _ = run(["verify"], capsys)
    assert code == 0
    assert "FAIL" not in out
    assert f"all {len(verify.run_battery())} checks passed" in out


def test_verify_subset_and_bad_group(capsys, tmp_path):
    code, out, _ = run(["verify", "--only", "lie-core", "--output-dir", str(tmp_path)], capsys)
    assert code == 0
    rows = out.splitlines()[1:-1]
    assert rows and all(r.startswith("lie-core") for r in rows)
    saved = json.loads((tmp_path / "verify.json").read_text())
    assert saved["only"] == ["lie-core"]
    code, _, err = run(["verify", "--only", "bogus"], capsys)
    assert code == 1 and "only" in err


def test_verify_catches_friction_sign_error(hb_sign_error, capsys):
    failed = {r.name for r in verify.run_battery(["diagnostics"]) if not r.passed}
    assert any("Heavy-Ball energy" in name for name in failed)
    code, _, err = run(["verify", "--only", "diagnostics"], capsys)
    assert code == 3
    assert "Heavy-Ball energy" in err
    code, _, err = run(["verify"], capsys)
    assert code == 3
    assert "FAILED" in err


# -- ode -------------------------------------------------------------------------------


def test_ode_command(tmp_path, capsys):
    code, out, _ = run(["ode", "--n", "4", "--kappa", "30", "--T", "1", "--dt", "1e-3",
                        "--output-dir", str(tmp_path)], capsys)
    assert code == 0
    assert "violations=0" in out
    rows = read_csv(tmp_path / "ode_trace.csv")
    assert rows[0] == ["t", "energy", "lyapunov", "weighted"]
    data = np.array(rows[1:], dtype=float)
    assert data[-1, 0] == pytest.approx(1.0)
    summary = json.loads((tmp_path / "ode_summary.json").read_text())
    assert summary["rate"] == pytest.approx(2 / 3 * math.sqrt(1.0))
    assert summary["config"]["gamma"] == pytest.approx(2.0)


def test_ode_bad_step(tmp_path, capsys):
    code, _, err = run(["ode", "--dt", "0", "--output-dir", str(tmp_path)], capsys)
    assert code == 1 and "dt" in err
