"""Property battery run by ``lie-momentum verify``.

Each check is small (well under a second or two) and deterministic. The
optimizer checks go through :mod:`lie_momentum.optimizers` by attribute, so a
patched update rule is what actually gets exercised.
"""

from __future__ import annotations

import math
import time
from dataclasses import dataclass
from typing import Callable

import numpy as np

from . import diagnostics, lie_core, optimizers, potentials
from .errors import ParameterError

GROUPS = ("lie-core", "potentials", "optimizers", "diagnostics")


@dataclass
class CheckResult:
    group: str
    name: str
    passed: bool
    detail: str
    seconds: float = 0.0


_REGISTRY: list[tuple[str, str, Callable[[], tuple[bool, str]]]] = []


def check(group: str, name: str):
    def deco(fn):
        _REGISTRY.append((group, name, fn))
        return fn
    return deco


def _rng(tag: int) -> np.random.Generator:
    return np.random.default_rng([20240601, tag])


# ---------------------------------------------------------------------------
# lie-core


@check("lie-core", "exp-log roundtrip <= 1e-10")
def _exp_log():
    rng = _rng(1)
    worst = 0.0
    for _ in range(50):
        n = int(rng.integers(2, 8))
        xi = lie_core.random_algebra_element(n, rng, norm=float(rng.uniform(0.01, 2.0)))
        back = lie_core.group_log(lie_core.group_exp(xi))
        worst = max(worst, float(np.max(np.abs(back.mat - xi.mat))))
    return worst <= 1e-10, f"max error {worst:.2e}"


@check("lie-core", "exp(x) exp(-x) = I <= 1e-12")
def _exp_inverse():
    rng = _rng(2)
    worst = 0.0
    for _ in range(50):
        xi = lie_core.random_algebra_element(6, rng, norm=float(rng.uniform(0.1, 10.0)))
        P = lie_core.group_exp(xi).mat @ lie_core.group_exp(-xi).mat
        worst = max(worst, float(np.linalg.norm(P - np.eye(6))))
    return worst <= 1e-12, f"max defect {worst:.2e}"


@check("lie-core", "ad skew-adjoint <= 1e-12 (1000 triples)")
def _skew_adjoint():
    rng = _rng(3)
    worst = 0.0
    for _ in range(1000):
        x, y, z = (lie_core.random_algebra_element(5, rng) for _ in range(3))
        v = lie_core.inner(lie_core.bracket(x, y), z) + lie_core.inner(y, lie_core.bracket(x, z))
        worst = max(worst, abs(v) / (x.norm() * y.norm() * z.norm()))
    return worst <= 1e-12, f"max residual {worst:.2e}"


@check("lie-core", "Jacobi identity <= 1e-12")
def _jacobi():
    rng = _rng(4)
    worst = 0.0
    br = lie_core.bracket
    for _ in range(200):
        x, y, z = (lie_core.random_algebra_element(5, rng) for _ in range(3))
        r = br(x, br(y, z)) + br(y, br(z, x)) + br(z, br(x, y))
        worst = max(worst, r.norm() / (x.norm() * y.norm() * z.norm()))
    return worst <= 1e-12, f"max residual {worst:.2e}"


@check("lie-core", "orthogonality drift of 1e4 exp factors < 1e-9")
def _drift():
    rng = _rng(5)
    g = np.eye(5)
    for _ in range(10_000):
        g = g @ lie_core.group_exp(lie_core.random_algebra_element(5, rng, norm=0.1)).mat
    defect = float(np.linalg.norm(g.T @ g - np.eye(5)))
    return defect < 1e-9, f"defect {defect:.2e}"


@check("lie-core", "dlog: <dlog(g, x), log g> = <log g, x> <= 1e-10")
def _dlog_a2():
    rng = _rng(6)
    worst = 0.0
    for _ in range(50):
        X = lie_core.random_algebra_element(4, rng, norm=float(rng.uniform(0.1, 2.5)))
        xi = lie_core.random_algebra_element(4, rng)
        d = lie_core.dlog_apply(lie_core.group_exp(X), xi)
        lg = lie_core.group_log(lie_core.group_exp(X))
        worst = max(worst, abs(lie_core.inner(d, lg) - lie_core.inner(lg, xi)) / (lg.norm() * xi.norm()))
    return worst <= 1e-10, f"max residual {worst:.2e}"


@check("lie-core", "dlog: <dlog(g, x), x> <= |x|^2 + 1e-10")
def _dlog_a3():
    rng = _rng(7)
    worst = -math.inf
    for _ in range(50):
        X = lie_core.random_algebra_element(4, rng, norm=float(rng.uniform(0.1, 2.5)))
        xi = lie_core.random_algebra_element(4, rng)
        d = lie_core.dlog_apply(lie_core.group_exp(X), xi)
        worst = max(worst, lie_core.inner(d, xi) - xi.norm() ** 2)
    return worst <= 1e-10, f"max excess {worst:.2e}"


@check("lie-core", "dlog matches finite differences of log")
def _dlog_fd():
    rng = _rng(8)
    worst = 0.0
    t = 1e-6
    for _ in range(20):
        g = lie_core.group_exp(lie_core.random_algebra_element(4, rng, norm=1.0))
        xi = lie_core.random_algebra_element(4, rng, norm=1.0)
        fd = (lie_core.group_log(g @ lie_core.group_exp(xi * t)).mat - lie_core.group_log(g).mat) / t
        d = lie_core.dlog_apply(g, xi).mat
        worst = max(worst, float(np.linalg.norm(fd - d) / np.linalg.norm(d)))
    return worst <= 1e-4, f"max relative error {worst:.2e}"


@check("lie-core", "q(x) = |p(ix) - 1| on a grid <= 1e-12 relative")
def _q_grid():
    xs = np.linspace(1e-3, 2 * math.pi - 1e-3, 1000)
    ref = np.abs(lie_core.p_series(1j * xs) - 1.0)
    got = np.array([lie_core.q_bound(float(x)) for x in xs])
    worst = float(np.max(np.abs(got - ref) / np.maximum(1.0, ref)))
    return worst <= 1e-12, f"max difference {worst:.2e}"


# ---------------------------------------------------------------------------
# potentials


def _brockett(n=5, kappa=50.0, seed=0):
    return potentials.BrockettPotential.from_spectrum(potentials.SpectrumSpec(n, kappa), seed)


@check("potentials", "Brockett gradient vs central differences <= 1e-5")
def _grad_fd():
    rng = _rng(11)
    pot = _brockett()
    worst = 0.0
    t = 1e-6
    for _ in range(20):
        g = potentials.sample_haar_rotation(pot.n, rng)
        G = pot.trivialized_grad(g)
        for _ in range(20):
            xi = lie_core.random_algebra_element(pot.n, rng, norm=1.0)
            fd = (pot.value(g @ lie_core.group_exp(xi * t)) - pot.value(g @ lie_core.group_exp(xi * -t))) / (2 * t)
            exact = lie_core.inner(G, xi)
            worst = max(worst, abs(fd - exact) / max(abs(exact), G.norm() * 1e-3))
    return worst <= 1e-5, f"max relative error {worst:.2e}"


@check("potentials", "stationary census n=3: all stationary, minimum at identity labelling")
def _census():
    pot = _brockett(3, 10.0, 1)
    pts = potentials.stationary_census(pot)
    worst = max(p.grad_norm for p in pts)
    vmin = min(p.value for p in pts)
    ok = worst < 1e-10 and abs(pot.stationary_value(tuple(range(3))) - vmin) < 1e-12
    return ok, f"{len(pts)} points, max |grad| {worst:.1e}"


@check("potentials", "Hessian spectrum formula vs finite differences")
def _hessian():
    pot = _brockett(4, 20.0, 2)
    H = potentials.finite_difference_hessian(pot, pot.known_minimizer())
    fd = np.sort(np.linalg.eigvalsh(H))
    exact = np.sort(potentials.hessian_spectrum_at_minimum(pot, tuple(range(4))))
    err = float(np.max(np.abs(fd - exact)))
    return err < 1e-4 * max(1.0, exact.max()), f"max error {err:.2e}"


@check("potentials", "local L-smoothness and mu-convexity near g*")
def _smooth_convex():
    rng = _rng(12)
    spec = potentials.SpectrumSpec(5, 50.0)
    pot = potentials.BrockettPotential.from_spectrum(spec, 3)
    L, mu = potentials.estimate_L_mu(spec)
    gs = pot.known_minimizer()
    worst_L, worst_mu = 0.0, math.inf
    for _ in range(200):
        g = gs @ lie_core.group_exp(lie_core.random_algebra_element(5, rng, norm=float(rng.uniform(0, 0.05))))
        gh = gs @ lie_core.group_exp(lie_core.random_algebra_element(5, rng, norm=float(rng.uniform(0, 0.05))))
        d = lie_core.geodesic_distance(g, gh)
        if d > 0:
            worst_L = max(worst_L, (pot.trivialized_grad(g) - pot.trivialized_grad(gh)).norm() / d)
        lg = lie_core.group_log(gs.inverse() @ g)
        if lg.norm() > 0:
            worst_mu = min(worst_mu, lie_core.inner(pot.trivialized_grad(g), lg) / lg.norm() ** 2)
    ok = worst_L <= 1.05 * L and worst_mu >= 0.95 * mu
    return ok, f"max ratio {worst_L / L:.3f} L, min {worst_mu / mu:.3f} mu"


# ---------------------------------------------------------------------------
# optimizers


def _setup(kappa=100.0, seed=0, n=6, start="haar"):
    spec = potentials.SpectrumSpec(n, kappa)
    pot = potentials.BrockettPotential.from_spectrum(spec, seed)
    L, mu = potentials.estimate_L_mu(spec)
    rng = _rng(100 + seed)
    if start == "haar":
        g0 = potentials.sample_haar_rotation(n, rng)
    else:
        g0 = pot.known_minimizer() @ lie_core.group_exp(lie_core.random_algebra_element(n, rng, norm=0.01))
    return pot, L, mu, g0


@check("optimizers", "splitting equals Heavy-Ball after change of variables <= 1e-12")
def _splitting():
    worst = 0.0
    for seed in range(3):
        pot, L, mu, g0 = _setup(seed=seed)
        sp = optimizers.select_params(L, mu, "splitting")
        hb, _ = optimizers.splitting_to_heavy_ball(sp)
        a = optimizers.iterate(pot, g0, sp, 100)
        b = optimizers.iterate(pot, g0, hb, 100)
        worst = max(worst, max(float(np.max(np.abs(x.g.mat - y.g.mat))) for x, y in zip(a, b)))
    return worst <= 1e-12, f"max position gap {worst:.2e}"


@check("optimizers", "schemes stay on SO(n) without projection")
def _on_group():
    pot, L, mu, g0 = _setup()
    worst = 0.0
    for scheme in optimizers.Scheme:
        p = optimizers.select_params(L, mu, scheme)
        for s in optimizers.iterate(pot, g0, p, 500)[::50]:
            worst = max(worst, s.g.orthogonality_defect())
    return worst < 1e-10, f"max defect {worst:.2e}"


@check("optimizers", "SO(2) reduces to the scalar recursions <= 1e-12")
def _abelian():
    pot = potentials.BrockettPotential.from_matrix(np.diag([0.0, 3.0]))
    rng = _rng(21)
    g0 = potentials.sample_haar_rotation(2, rng)
    theta0 = math.atan2(g0.mat[1, 0], g0.mat[0, 0])
    worst = 0.0
    for scheme in ("heavy-ball", "nag-sc"):
        p = optimizers.SchemeParams(scheme, h=0.05, gamma=1.0)
        states = optimizers.iterate(pot, g0, p, 200)
        # U(theta) = 1 * 3 sin^2 + 2 * 3 cos^2 for B = diag(0, 3); the algebra
        # coordinate w = xi_10 with |xi| = sqrt2 |w| gives grad_w U = dU/dtheta / 2
        du = lambda th: -3.0 * math.sin(2 * th)  # noqa: E731
        th, w, gprev = theta0, 0.0, du(theta0) / 2
        for s in states[1:]:
            gk = du(th) / 2
            if scheme == "heavy-ball":
                w = (1 - p.gamma * p.h) * w - p.h * gk
            else:
                w = (1 - p.gamma * p.h) * (w - p.h * (gk - gprev)) - p.h * gk
            gprev = gk
            th = th + p.h * w
            ang = math.atan2(s.g.mat[1, 0], s.g.mat[0, 0])
            worst = max(worst, abs(math.remainder(ang - th, 2 * math.pi)), abs(s.xi.mat[1, 0] - w))
    return worst <= 1e-12, f"max deviation {worst:.2e}"


# ---------------------------------------------------------------------------
# diagnostics


@check("diagnostics", "Heavy-Ball energy decrement (proof form) at h <= gamma/(gamma^2+L)")
def _hb_energy():
    worst, total = 0, 0
    for seed in range(3):
        pot, L, mu, g0 = _setup(seed=seed)
        p = optimizers.select_params(L, mu, "heavy-ball")
        states = optimizers.iterate(pot, g0, p, 1500)
        E = [diagnostics.energy_hb(s.g, s.xi, pot, p) for s in states]
        rep = diagnostics.energy_report(E, [s.xi.norm() for s in states], p, form="proof")
        worst += rep.n_violations
        total += rep.delta.size
    return worst == 0, f"{worst} violations in {total} steps"


@check("diagnostics", "NAG-SC energy nonincreasing at h = min(1/gamma, gamma/(2L))")
def _nag_energy():
    worst, total = 0, 0
    for seed in range(3):
        pot, L, mu, g0 = _setup(seed=seed)
        tuned = optimizers.select_params(L, mu, "nag-sc")
        h = min(1 / tuned.gamma, tuned.gamma / (2 * L))
        p = optimizers.SchemeParams("nag-sc", h=h, gamma=tuned.gamma, L=L, mu=mu)
        states = optimizers.iterate(pot, g0, p, 1500)
        E = [diagnostics.energy_nagsc(s.g, s.xi, pot, p) for s in states]
        rep = diagnostics.energy_report(E, [s.xi.norm() for s in states], p)
        worst += rep.n_violations
        total += rep.delta.size
    return worst == 0, f"{worst} violations in {total} steps"


@check("diagnostics", "Lyapunov contraction inside the ball (Heavy-Ball, NAG-SC)")
def _lyapunov():
    pot, L, mu, g0 = _setup(start="near_min")
    radius = 0.01 * math.pi / lie_core.ad_norm_constant(pot.n)
    worst = 0
    for scheme in ("heavy-ball", "nag-sc"):
        p = optimizers.select_params(L, mu, scheme)
        tr = diagnostics.instrument(optimizers.iterate(pot, g0, p, 600), pot, p)
        stop = np.flatnonzero(tr.subopt < 1e-12 * tr.subopt[0])
        end = int(stop[0]) + 1 if stop.size else len(tr)
        rep = diagnostics.lyapunov_report(tr.lyapunov[:end], tr.dist[:end], diagnostics.rate_bound(p), radius)
        worst += rep.n_violations
    return worst == 0, f"{worst} violations"


@check("diagnostics", "ODE energy identity dE/dt = -gamma |xi|^2")
def _ode_energy():
    pot, L, mu, g0 = _setup(kappa=30.0, n=4)
    xi0 = lie_core.AlgebraElement.zeros(4)
    gamma = 2 * math.sqrt(mu)
    tr = optimizers.integrate_ode(g0, xi0, pot, gamma, 1e-3, 0.5)
    E = np.array([diagnostics.energy_ode(g, x, pot) for g, x in zip(tr.g, tr.xi)])
    k2 = np.array([x.norm() ** 2 for x in tr.xi])
    # trapezoid rule for the dissipated energy
    diss = gamma * np.concatenate([[0.0], np.cumsum(0.5 * (k2[1:] + k2[:-1]) * np.diff(tr.t))])
    err = float(np.max(np.abs(E - E[0] + diss)))
    return err < 1e-5, f"max drift {err:.2e}"


# ---------------------------------------------------------------------------


def run_battery(only: list[str] | None = None) -> list[CheckResult]:
    """Run every registered check, or those in the given groups."""
    if only:
        bad = [g for g in only if g not in GROUPS]
        if bad:
            raise ParameterError("only", f"unknown group {bad[0]!r}; choose from {', '.join(GROUPS)}")
    out = []
    for group, name, fn in _REGISTRY:
        if only and group not in only:
            continue
        t0 = time.perf_counter()
        try:
            passed, detail = fn()
        except Exception as exc:  # a crashing check is a failing check
            passed, detail = False, f"{type(exc).__name__}: {exc}"
        out.append(CheckResult(group, name, bool(passed), detail, time.perf_counter() - t0))
    return out


def format_table(results: list[CheckResult]) -> str:
    width = max((len(r.name) for r in results), default=10)
    lines = [f"{'group':<12} {'check':<{width}}  result  detail"]
    for r in results:
        lines.append(f"{r.group:<12} {r.name:<{width}}  {'PASS' if r.passed else 'FAIL':<6}  {r.detail}")
    return "\n".join(lines)
