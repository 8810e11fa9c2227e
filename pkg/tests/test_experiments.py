import math

import numpy as np
import pytest
from hypothesis import given
from hypothesis import strategies as st

from lie_momentum import experiments as ex
from lie_momentum.diagnostics import log_to
from lie_momentum.errors import InsufficientData, ParameterError, TailTooShort
from lie_momentum.trace import RunTrace


def small(**kw):
    base = dict(n=5, kappas=(50.0, 100.0, 200.0, 400.0), schemes=("heavy-ball", "nag-sc"),
                seeds=(0,), max_iters=200_000, eps=1e-10)
    base.update(kw)
    return ex.SweepConfig(**base)


# -- rate estimation ------------------------------------------------------------------


def test_rate_of_geometric_sequence():
    s = 0.9 ** np.arange(400)
    assert ex.estimate_rate(s) == pytest.approx(0.9, abs=1e-6)


def test_rate_of_alternating_ratios():
    ratios = np.tile([0.8, 1.0], 200)
    s = np.concatenate([[1.0], np.cumprod(ratios)])
    assert ex.estimate_rate(s) == pytest.approx(math.sqrt(0.8), abs=1e-3)
    assert ex.estimate_rate(s) == pytest.approx(0.894, abs=1e-3)


@given(st.floats(0.5, 0.9999), st.integers(130, 2000))
def test_rate_recovers_any_geometric_rate(c, K):
    s = c ** np.arange(K + 1, dtype=float)
    if s[-1] == 0.0:
        return
    assert ex.estimate_rate(s) == pytest.approx(c, rel=1e-9)


def test_rate_from_decimated_trace():
    k = np.arange(0, 5000, 7)
    s = 0.995 ** k.astype(float)
    tr = RunTrace(k=k, U=s, subopt=s, xi_norm=s, energy=s, lyapunov=s, dist=s)
    assert ex.estimate_rate(tr) == pytest.approx(0.995, rel=1e-12)


def test_rate_needs_a_long_tail():
    with pytest.raises(TailTooShort):
        ex.estimate_rate(0.9 ** np.arange(100))
    with pytest.raises(TailTooShort):
        ex.estimate_rate([1.0])
    k = np.arange(400)
    with pytest.raises(TailTooShort):
        ex.estimate_rate(np.where(k >= 300, 0.0, 0.9 ** k))


# -- fits ------------------------------------------------------------------------------


def test_fit_recovers_exact_power_law():
    kap = np.array([1e2, 1e3, 1e4, 1e5])
    rates = 1 - 0.3 * kap ** -0.5
    fit = ex.fit_rates(kap, rates, "nag-sc")
    assert fit.slope == pytest.approx(-0.5, abs=1e-12)
    assert fit.intercept == pytest.approx(math.log10(0.3), abs=1e-12)
    assert np.max(np.abs(fit.residuals)) < 1e-12
    assert fit.to_dict()["scheme"] == "nag-sc"


def test_fit_needs_four_points():
    with pytest.raises(InsufficientData):
        ex.fit_rates([1e2, 1e3, 1e4], [0.9, 0.99, 0.999])
    # rates >= 1 are dropped before counting
    with pytest.raises(InsufficientData):
        ex.fit_rates([1e2, 1e3, 1e4, 1e5], [0.9, 0.99, 0.999, 1.0])


# -- config ------------------------------------------------------------------------------


def test_config_defaults_and_roundtrip():
    cfg = ex.SweepConfig()
    assert cfg.n == 10 and cfg.kappas == (1e2, 1e3, 1e4, 1e5)
    assert ex.SweepConfig.from_dict(cfg.to_dict()) == cfg
    assert cfg.ball_radius == pytest.approx(0.01 * math.pi)
    assert ex.SweepConfig(n=3, kappas=(10.0,)).ball_radius == pytest.approx(0.01 * math.pi * math.sqrt(2))
    assert ex.SweepConfig(n=2, kappas=(3.0,)).ball_radius == pytest.approx(0.01 * math.pi)


@pytest.mark.parametrize("kw,field", [
    (dict(kappas=()), "kappas"),
    (dict(kappas=(72.0,)), "kappas"),
    (dict(kappas=(50.0,)), "kappas"),
    (dict(kappas=(math.inf,)), "kappas"),
    (dict(n=1), "n"),
    (dict(schemes=("adam",)), "scheme"),
    (dict(seeds=()), "seeds"),
    (dict(max_iters=0), "max_iters"),
    (dict(eps=0.0), "eps"),
    (dict(init_mode="random"), "init_mode"),
    (dict(engine="gpu"), "engine"),
    (dict(h=-1.0), "h"),
    (dict(gamma=0.0), "gamma"),
    (dict(a=7.0), "a"),
])
def test_config_rejects_bad_values(kw, field):
    with pytest.raises(ParameterError) as exc:
        ex.SweepConfig(**kw)
    assert exc.value.field == field


def test_config_unknown_key():
    with pytest.raises(ParameterError) as exc:
        ex.SweepConfig.from_dict({"n": 4, "kappas": [10.0], "colour": "red"})
    assert exc.value.field == "colour"


def test_resolve_params_overrides():
    cfg = small(h=1e-3)
    p = ex.resolve_params(cfg, "heavy-ball", 100.0)
    assert p.h == 1e-3
    assert p.gamma == pytest.approx(2.0)
    assert p.L == pytest.approx(100.0)


def test_initial_points():
    pot = ex.build_potential(5, 50.0, 3)
    g = ex.initial_point(pot, "near_min", 0.02, 3)
    assert log_to(pot.known_minimizer(), g).norm() == pytest.approx(0.02, rel=1e-10)
    far = ex.initial_point(pot, "near_max", 0.02, 3)
    top = pot.stationary_value(tuple(range(4, -1, -1)))
    assert pot.value(far) == pytest.approx(top, rel=1e-3)
    h = ex.initial_point(pot, "haar", 0.02, 3)
    assert np.array_equal(h.mat, ex.initial_point(pot, "haar", 0.02, 3).mat)


# -- single runs ---------------------------------------------------------------------------


def test_nag_run_recovers_spectrum():
    cfg = ex.SweepConfig(n=10, kappas=(1e3,), schemes=("nag-sc",), seeds=(0,))
    res = ex.run_single(cfg, "nag-sc", 1e3)
    assert res.converged
    assert res.relative_subopt < 1e-12
    assert ex.spectrum_error(ex.build_potential(10, 1e3, 0), res.X_final) < 1e-8
    assert ex.offdiag_norm(ex.build_potential(10, 1e3, 0), res.X_final) < 1e-4
    assert res.lyapunov["violations"] == 0
    assert 0 < res.rate < 1


def test_gd_rate_scales_like_one_over_kappa():
    cfg = ex.SweepConfig(n=10, kappas=(100.0,), schemes=("gd",), seeds=(0,))
    res = ex.run_single(cfg, "gd", 100.0)
    assert res.converged
    assert 1 - res.rate == pytest.approx(2 / 100, rel=0.1)
    assert res.lyapunov["rate"] is None


def test_heavy_ball_rate_below_one():
    cfg = ex.SweepConfig(n=10, kappas=(1e4,), schemes=("heavy-ball",), seeds=(0,))
    res = ex.run_single(cfg, "heavy-ball", 1e4)
    assert res.converged and res.rate < 1
    assert res.energy_proof["violations"] == 0


def test_engines_agree():
    cfg = small(max_iters=3000)
    a = ex.run_single(cfg, "nag-sc", 50.0)
    b = ex.run_single(ex.SweepConfig(**dict(cfg.to_dict(), engine="reference")), "nag-sc", 50.0)
    assert a.iterations == b.iterations
    assert np.max(np.abs(a.X_final - b.X_final)) < 1e-12
    assert a.rate == pytest.approx(b.rate, rel=1e-9)
    assert a.lyapunov["violations"] == b.lyapunov["violations"] == 0
    assert a.u_increases == b.u_increases


def test_no_stop_runs_all_steps_and_nonconvergence_is_reported():
    cfg = small(max_iters=500)
    res = ex.run_single(cfg, "heavy-ball", 200.0, stop=False)
    assert res.iterations == 500
    assert res.trace.k[-1] == 500
    short = ex.run_single(small(max_iters=20), "heavy-ball", 200.0)
    assert not short.converged
    assert short.rate is None and "max_iters" in short.rate_error


def test_trace_is_thinned_but_keeps_ends():
    cfg = small(record_rows=100)
    res = ex.run_single(cfg, "heavy-ball", 200.0)
    assert len(res.trace) <= 101
    assert res.trace.k[0] == 0 and res.trace.k[-1] == res.iterations
    assert res.trace.t[-1] == pytest.approx(res.iterations * res.params["h"])


def test_near_max_start_is_an_observation():
    cfg = small(init_mode="near_max", max_iters=100_000)
    res = ex.run_single(cfg, "nag-sc", 50.0)
    # reaching the global basin from the top is not guaranteed; only sanity-check the record
    assert res.meta["init_mode"] == "near_max"
    assert res.initial_subopt > 0


# -- sweeps ---------------------------------------------------------------------------------


def test_sweep_and_fit_small():
    res = ex.sweep_and_fit(small())
    assert set(res.fits) == {"heavy-ball", "nag-sc"}
    assert res.lyapunov_violations == 0
    assert res.fits["heavy-ball"].slope < res.fits["nag-sc"].slope < 0
    d = res.to_dict()
    assert len(d["runs"]) == 8


def test_sweep_parallel_matches_serial(monkeypatch):
    cfg = small(schemes=("nag-sc",), seeds=(0, 1))
    serial = ex.run_sweep(cfg)
    monkeypatch.setenv("LIE_MOMENTUM_THREADS", "2")
    assert ex.worker_count(cfg) == 2
    par = ex.run_sweep(cfg)
    assert [(r.kappa, r.seed) for r in par] == [(r.kappa, r.seed) for r in serial]
    assert [r.rate for r in par] == [r.rate for r in serial]


def test_worker_count_env(monkeypatch):
    monkeypatch.setenv("LIE_MOMENTUM_THREADS", "many")
    with pytest.raises(ParameterError):
        ex.worker_count(small())
    assert ex.worker_count(small(workers=3)) == 3


def test_sweep_needs_four_kappas_and_reports_missing_points():
    with pytest.raises(InsufficientData):
        ex.sweep_and_fit(small(kappas=(50.0,)))
    res = ex.sweep_and_fit(small(max_iters=300, schemes=("heavy-ball",)))
    assert "heavy-ball" in res.errors
    assert not res.fits
