"""Condition-number sweeps on the Brockett benchmark and empirical rate fits.

A run starts near a chosen stationary point, iterates until the relative
suboptimality drops below ``eps`` (or ``max_iters``), and checks the energy
and Lyapunov inequalities on every step as it goes. Long runs only keep a
decimated trace; the monitors and the rate estimate always see every step.
"""

from __future__ import annotations

import math
import os
from concurrent.futures import ProcessPoolExecutor
from dataclasses import asdict, dataclass, field

import numpy as np

from . import diagnostics as diag
from ._fastrun import FastRunner
from .errors import InsufficientData, ParameterError, TailTooShort
from .lie_core import GroupElement, ad_norm_constant, group_exp, random_algebra_element
from .optimizers import OptimizerState, Scheme, SchemeParams, select_params, step
from .potentials import BrockettPotential, SpectrumSpec, estimate_L_mu, sample_haar_rotation
from .trace import RunTrace

INIT_MODES = ("near_min", "near_max", "haar")
ENGINES = ("fast", "reference")
TAIL_MIN = 50
TAIL_DROP = 10
CHUNK = 1 << 16


@dataclass
class SweepConfig:
    """Everything that determines a sweep; identical configs give identical results."""

    n: int = 10
    kappas: tuple = (1e2, 1e3, 1e4, 1e5)
    schemes: tuple = ("heavy-ball", "nag-sc")
    seeds: tuple = (0, 1, 2)
    max_iters: int = 20_000_000
    eps: float = 1e-12
    init_mode: str = "near_min"
    init_radius: float | None = None
    a: float = math.pi
    h: float | None = None
    gamma: float | None = None
    engine: str = "fast"
    record_rows: int = 2000
    workers: int | None = None

    def __post_init__(self):
        self.kappas = tuple(float(k) for k in self.kappas)
        self.schemes = tuple(Scheme.parse(s).value for s in self.schemes)
        self.seeds = tuple(int(s) for s in self.seeds)
        self.validate()

    def validate(self) -> None:
        if not isinstance(self.n, int) or self.n < 2:
            raise ParameterError("n", f"n must be an integer >= 2, got {self.n!r}")
        if not self.kappas:
            raise ParameterError("kappas", "at least one kappa is required")
        lower = (self.n - 1) * (self.n - 2)
        for k in self.kappas:
            # at equality the top two eigenvalues coincide and mu = 0
            if not (math.isfinite(k) and k > lower):
                raise ParameterError("kappas", f"kappa={k:g} must exceed (n-1)(n-2) = {lower}")
        if not self.schemes:
            raise ParameterError("schemes", "at least one scheme is required")
        if not self.seeds:
            raise ParameterError("seeds", "at least one seed is required")
        if not (isinstance(self.max_iters, int) and self.max_iters >= 1):
            raise ParameterError("max_iters", f"must be a positive integer, got {self.max_iters!r}")
        if not 0 < self.eps < 1:
            raise ParameterError("eps", f"must lie in (0, 1), got {self.eps}")
        if self.init_mode not in INIT_MODES:
            raise ParameterError("init_mode", f"choose from {', '.join(INIT_MODES)}")
        if self.init_radius is not None and not self.init_radius > 0:
            raise ParameterError("init_radius", "must be positive")
        if not 0 < self.a < 2 * math.pi:
            raise ParameterError("a", f"a must lie in (0, 2*pi), got {self.a}")
        if self.h is not None and not self.h > 0:
            raise ParameterError("h", f"step size must be positive, got {self.h}")
        if self.gamma is not None and not self.gamma > 0:
            raise ParameterError("gamma", f"friction must be positive, got {self.gamma}")
        if self.engine not in ENGINES:
            raise ParameterError("engine", f"choose from {', '.join(ENGINES)}")
        if self.record_rows < 2:
            raise ParameterError("record_rows", "must be at least 2")

    @property
    def ball_radius(self) -> float:
        """0.01 a / A, the radius of the ball where the contraction rates are checked."""
        A = ad_norm_constant(self.n)
        return 0.01 * self.a / A if A > 0 else 0.01 * self.a

    def to_dict(self) -> dict:
        d = asdict(self)
        d["kappas"] = list(self.kappas)
        d["schemes"] = list(self.schemes)
        d["seeds"] = list(self.seeds)
        return d

    @classmethod
    def from_dict(cls, obj: dict) -> SweepConfig:
        known = set(cls.__dataclass_fields__)
        unknown = set(obj) - known
        if unknown:
            raise ParameterError(sorted(unknown)[0], "unknown configuration key")
        return cls(**obj)


@dataclass
class RunResult:
    """Outcome of one (scheme, kappa, seed) run."""

    scheme: str
    kappa: float
    seed: int
    params: dict
    iterations: int
    converged: bool
    initial_subopt: float
    final_subopt: float
    rate: float | None
    rate_error: str | None
    energy: dict
    energy_proof: dict
    lyapunov: dict
    u_increases: int
    lyapunov_increases: int
    trace: RunTrace
    X_final: np.ndarray
    xi_final: np.ndarray
    meta: dict = field(default_factory=dict)

    @property
    def relative_subopt(self) -> float:
        return self.final_subopt / self.initial_subopt if self.initial_subopt > 0 else 0.0

    def summary(self) -> dict:
        return {"scheme": self.scheme, "kappa": self.kappa, "seed": self.seed,
                "params": self.params, "iterations": self.iterations, "converged": self.converged,
                "initial_subopt": self.initial_subopt, "final_subopt": self.final_subopt,
                "rate": self.rate, "rate_error": self.rate_error,
                "energy": self.energy, "energy_proof": self.energy_proof,
                "lyapunov": self.lyapunov, "u_increases": self.u_increases,
                "lyapunov_increases": self.lyapunov_increases, "meta": self.meta}


# ---------------------------------------------------------------------------
# rate estimation


def estimate_rate(trace, k=None) -> float:
    """Geometric-mean contraction of the suboptimality over the tail window.

    The window is iterations K/2 .. K-10, K being the last iteration; the
    geometric mean of successive ratios telescopes to
    (s_end / s_start) ** (1 / (k_end - k_start)), which also makes the
    estimate usable on decimated traces.

    Args:
        trace: a :class:`RunTrace`, or a 1-D array of suboptimality values.
        k: iteration numbers for an array input (defaults to 0, 1, 2, ...).
    """
    if isinstance(trace, RunTrace):
        s, k = trace.subopt, trace.k
    else:
        s = np.asarray(trace, dtype=np.float64)
        k = np.arange(s.size) if k is None else np.asarray(k)
    if s.size < 2:
        raise TailTooShort("trace has fewer than two iterates")
    K = int(k[-1])
    lo, hi = K / 2.0, K - TAIL_DROP
    idx = np.flatnonzero((k >= lo) & (k <= hi))
    if idx.size < 2 or int(k[idx[-1]] - k[idx[0]]) < TAIL_MIN:
        raise TailTooShort(f"tail window [{lo:g}, {hi:g}] spans fewer than {TAIL_MIN} iterations")
    i, j = idx[0], idx[-1]
    if not (s[i] > 0 and s[j] > 0):
        raise TailTooShort("nonpositive suboptimality inside the tail window")
    return float(math.exp((math.log(s[j]) - math.log(s[i])) / float(k[j] - k[i])))


@dataclass
class RateFit:
    """OLS fit of log10(1 - c) against log10(kappa) for one scheme."""

    scheme: str
    kappas: np.ndarray
    rates: np.ndarray
    slope: float
    intercept: float
    residuals: np.ndarray
    per_seed: dict = field(default_factory=dict)
    missing: list = field(default_factory=list)

    def to_dict(self) -> dict:
        return {"scheme": self.scheme, "kappas": self.kappas.tolist(), "rates": self.rates.tolist(),
                "one_minus_c": (1.0 - self.rates).tolist(), "slope": self.slope,
                "intercept": self.intercept, "residuals": self.residuals.tolist(),
                "per_seed": {str(k): v for k, v in self.per_seed.items()}, "missing": self.missing}


def fit_rates(kappas, rates, scheme: str = "") -> RateFit:
    """Least-squares line through (log10 kappa, log10(1 - c)); needs >= 4 points."""
    kap = np.asarray(kappas, dtype=np.float64)
    c = np.asarray(rates, dtype=np.float64)
    ok = np.isfinite(c) & (c < 1.0) & (c > 0.0)
    kap, c = kap[ok], c[ok]
    if kap.size < 4:
        raise InsufficientData(f"{scheme or 'fit'}: need >= 4 kappa points, have {kap.size}")
    x, y = np.log10(kap), np.log10(1.0 - c)
    A = np.column_stack([x, np.ones_like(x)])
    (slope, intercept), *_ = np.linalg.lstsq(A, y, rcond=None)
    return RateFit(scheme=scheme, kappas=kap, rates=c, slope=float(slope), intercept=float(intercept),
                   residuals=y - (slope * x + intercept))


# ---------------------------------------------------------------------------
# single runs


class _Monitor:
    """Applies the per-step checks chunk by chunk, carrying one row of overlap."""

    def __init__(self, params: SchemeParams, radius: float, rate: float | None):
        self.params, self.radius, self.rate = params, radius, rate
        self.last: np.ndarray | None = None
        self.offset = 0
        self.e = {"steps": 0, "violations": 0, "first_violation": None, "max_excess": -math.inf}
        self.ep = dict(self.e)
        self.ly = {"checked": 0, "violations": 0, "first_violation": None, "max_ratio": -math.inf,
                   "increases": 0, "entry_index": None}
        self.u_inc = 0
        self.l_inc = 0

    @staticmethod
    def _merge_energy(acc: dict, rep: diag.EnergyReport, offset: int) -> None:
        acc["steps"] += rep.delta.size
        acc["violations"] += rep.n_violations
        if acc["first_violation"] is None and rep.first_violation is not None:
            acc["first_violation"] = offset + rep.first_violation
        if rep.delta.size:
            acc["max_excess"] = max(acc["max_excess"], rep.max_excess)

    def feed(self, rows: np.ndarray) -> None:
        if rows.shape[0] == 0:
            return
        block = rows if self.last is None else np.vstack([self.last[None, :], rows])
        offset = self.offset
        U, E, Ly, dist = block[:, 0], block[:, 3], block[:, 4], block[:, 5]
        xn = block[:, 2]
        if block.shape[0] >= 2:
            self._merge_energy(self.e, diag.energy_report(E, xn, self.params), offset)
            self._merge_energy(self.ep, diag.energy_report(E, xn, self.params, form="proof"), offset)
            self.u_inc += int(np.count_nonzero(np.diff(U) > 0))
            with np.errstate(invalid="ignore"):
                self.l_inc += int(np.count_nonzero(np.diff(Ly) > 0))
            if self.rate is not None:
                rep = diag.lyapunov_report(Ly, dist, self.rate, self.radius)
                ly = self.ly
                ly["checked"] += rep.n_checked
                ly["violations"] += rep.n_violations
                ly["increases"] += rep.n_increases
                if rep.n_checked:
                    ly["max_ratio"] = max(ly["max_ratio"], rep.max_ratio)
                vi = np.flatnonzero(rep.violations)
                if ly["first_violation"] is None and vi.size:
                    ly["first_violation"] = offset + int(vi[0])
                if ly["entry_index"] is None and rep.entry_index is not None:
                    ly["entry_index"] = offset + rep.entry_index
        elif self.rate is not None and self.ly["entry_index"] is None:
            if np.isfinite(dist[0]) and dist[0] <= self.radius * (1 + diag.BALL_SLACK):
                self.ly["entry_index"] = offset
        self.offset += block.shape[0] - 1
        self.last = block[-1].copy()

    def reports(self) -> tuple[dict, dict, dict]:
        fix = lambda d: {k: (None if isinstance(v, float) and not math.isfinite(v) else v)  # noqa: E731
                         for k, v in d.items()}
        limit = diag.energy_step_limit(self.params)
        extra = {"h": self.params.h, "step_limit": limit,
                 "in_regime": limit is not None and self.params.h <= limit * (1 + 1e-12)}
        ly = dict(self.ly, rate=self.rate, radius=self.radius)
        return fix(dict(self.e, form="stated", **extra)), fix(dict(self.ep, form="proof", **extra)), fix(ly)


def build_potential(n: int, kappa: float, seed: int) -> BrockettPotential:
    return BrockettPotential.from_spectrum(SpectrumSpec(n, kappa), seed)


def initial_point(pot: BrockettPotential, mode: str, radius: float, seed: int) -> GroupElement:
    """Starting rotation for ``mode``; perturbations use a stream independent of the potential's."""
    rng = np.random.default_rng([int(seed), 1])
    if mode == "haar":
        return sample_haar_rotation(pot.n, rng)
    if mode == "near_min":
        center = pot.known_minimizer()
    else:
        center = pot.stationary_point(tuple(range(pot.n - 1, -1, -1)))
    xi = random_algebra_element(pot.n, rng, norm=radius)
    return center @ group_exp(xi)


def resolve_params(config: SweepConfig, scheme: str | Scheme, kappa: float) -> SchemeParams:
    """Tuned parameters, with any explicit h / gamma from the config taking precedence."""
    L, mu = estimate_L_mu(SpectrumSpec(config.n, kappa))
    p = select_params(L, mu, scheme, config.a)
    if config.h is None and config.gamma is None:
        return p
    return SchemeParams(p.scheme, h=config.h if config.h is not None else p.h,
                        gamma=config.gamma if config.gamma is not None else p.gamma,
                        a=p.a, L=L, mu=mu)


def _trace_rows(tr: RunTrace) -> np.ndarray:
    return np.column_stack([tr.U, tr.subopt, tr.xi_norm, tr.energy, tr.lyapunov, tr.dist])


class _ReferenceRunner:
    """Same interface as FastRunner, built on the object-level step and instrument."""

    def __init__(self, pot, params, g0, stop_abs):
        self.pot, self.params, self.stop_abs = pot, params, stop_abs
        self.state = OptimizerState.initial(g0, pot)
        self.g_star = pot.known_minimizer()
        self.stopped = False

    def initial_row(self) -> np.ndarray:
        return _trace_rows(diag.instrument([self.state], self.pot, self.params, self.g_star))[0]

    def advance(self, nsteps: int) -> np.ndarray:
        if self.stopped:
            return np.empty((0, 6))
        states = []
        state = self.state
        for _ in range(nsteps):
            state = step(state, self.pot, self.params)
            states.append(state)
            if self.pot.suboptimality(state.g) < self.stop_abs:
                self.stopped = True
                break
        self.state = state
        return _trace_rows(diag.instrument(states, self.pot, self.params, self.g_star))


class _Recorder:
    """Keeps every subopt value plus a bounded, evenly thinned set of full rows."""

    def __init__(self, max_rows: int):
        self.max_rows = max_rows
        self.stride = 1
        self.k: list[np.ndarray] = []
        self.rows: list[np.ndarray] = []
        self.sub: list[np.ndarray] = []
        self.count = 0

    def add(self, rows: np.ndarray) -> None:
        ks = np.arange(self.count, self.count + rows.shape[0])
        self.count += rows.shape[0]
        self.sub.append(rows[:, 1].copy())
        keep = ks % self.stride == 0
        self.k.append(ks[keep])
        self.rows.append(rows[keep])
        if sum(a.size for a in self.k) > self.max_rows:
            k = np.concatenate(self.k)
            r = np.vstack(self.rows)
            while k.size > self.max_rows:
                self.stride *= 2
                keep = k % self.stride == 0
                k, r = k[keep], r[keep]
            self.k, self.rows = [k], [r]

    def finish(self, last_row: np.ndarray) -> tuple[np.ndarray, np.ndarray, np.ndarray]:
        k = np.concatenate(self.k)
        rows = np.vstack(self.rows)
        if k[-1] != self.count - 1:
            k = np.append(k, self.count - 1)
            rows = np.vstack([rows, last_row[None, :]])
        return k, rows, np.concatenate(self.sub)


def run_single(config: SweepConfig, scheme: str | Scheme, kappa: float, seed: int | None = None,
               stop: bool = True) -> RunResult:
    """One optimization of the Brockett potential with every monitor attached.

    Args:
        config: sweep settings (n, eps, max_iters, init mode, engine, overrides).
        scheme: optimizer to run.
        kappa: condition number of the instance.
        seed: seeds both the potential and the initial perturbation;
            defaults to the first configured seed.
        stop: stop at eps relative suboptimality; ``False`` always runs
            ``max_iters`` steps.
    """
    seed = config.seeds[0] if seed is None else int(seed)
    pot = build_potential(config.n, kappa, seed)
    params = resolve_params(config, scheme, kappa)
    radius = config.ball_radius
    g0 = initial_point(pot, config.init_mode, config.init_radius or radius, seed)
    s0 = pot.suboptimality(g0)
    stop_abs = config.eps * s0 if stop else -math.inf
    rate = None if params.scheme is Scheme.GD else diag.rate_bound(params)
    mon = _Monitor(params, radius, rate)
    rec = _Recorder(config.record_rows)

    if config.engine == "fast":
        runner = FastRunner(pot, params, g0.mat, stop_abs=stop_abs)
        first = runner.initial_row()[None, :]
        advance = runner.advance
        final = lambda: (runner.state.X.copy(), runner.state.xi.copy())  # noqa: E731
    else:
        runner = _ReferenceRunner(pot, params, g0, stop_abs)
        first = runner.initial_row()[None, :]
        advance = runner.advance
        final = lambda: (runner.state.g.mat.copy(), runner.state.xi.mat.copy())  # noqa: E731

    mon.feed(first)
    rec.add(first)
    done = 0
    converged = first[0, 1] < stop_abs
    last = first[0]
    while done < config.max_iters and not converged:
        rows = advance(min(CHUNK if config.engine == "fast" else 512, config.max_iters - done))
        if rows.shape[0] == 0:
            break
        done += rows.shape[0]
        mon.feed(rows)
        rec.add(rows)
        last = rows[-1]
        if last[1] < stop_abs:
            converged = True
        elif not np.isfinite(last[0]):
            break
    X_final, xi_final = final()

    k, rows, sub_full = rec.finish(last)
    rate_est, rate_err = None, None
    if converged:
        try:
            rate_est = estimate_rate(sub_full)
        except TailTooShort as exc:
            rate_err = str(exc)
    else:
        rate_err = "did not converge within max_iters"
    trace = RunTrace(k=k, U=rows[:, 0], subopt=rows[:, 1], xi_norm=rows[:, 2], energy=rows[:, 3],
                     lyapunov=rows[:, 4], dist=rows[:, 5],
                     t=k * params.h,
                     meta={"scheme": params.scheme.value, "kappa": kappa, "seed": seed,
                           "params": params.to_dict(), "potential": pot.to_json()})
    e_stated, e_proof, ly = mon.reports()
    return RunResult(scheme=params.scheme.value, kappa=float(kappa), seed=seed, params=params.to_dict(),
                     iterations=done, converged=bool(converged), initial_subopt=float(s0),
                     final_subopt=float(last[1]), rate=rate_est, rate_error=rate_err,
                     energy=e_stated, energy_proof=e_proof, lyapunov=ly, u_increases=mon.u_inc,
                     lyapunov_increases=mon.l_inc, trace=trace, X_final=X_final, xi_final=xi_final,
                     meta={"init_mode": config.init_mode, "engine": config.engine,
                           "ball_radius": radius})


def spectrum_error(pot: BrockettPotential, X: np.ndarray) -> float:
    """Max deviation of diag(X^T B X) from the closest arrangement of the eigenvalues.

    Once X^T B X is diagonal its diagonal is a permutation of the spectrum;
    the best matching permutation is sorting, so compare sorted values.
    """
    d = np.diag(X.T @ pot.B @ X)
    return float(np.max(np.abs(np.sort(d) - pot.eigenvalues)))


def offdiag_norm(pot: BrockettPotential, X: np.ndarray) -> float:
    M = X.T @ pot.B @ X
    return float(np.linalg.norm(M - np.diag(np.diag(M))))


# ---------------------------------------------------------------------------
# sweeps


@dataclass
class SweepResult:
    config: SweepConfig
    runs: list[RunResult]
    fits: dict
    errors: dict

    def to_dict(self) -> dict:
        return {"config": self.config.to_dict(),
                "fits": {s: f.to_dict() for s, f in self.fits.items()},
                "errors": self.errors,
                "runs": [r.summary() for r in self.runs]}

    @property
    def lyapunov_violations(self) -> int:
        return sum(r.lyapunov["violations"] for r in self.runs)


def _task(args):
    config, scheme, kappa, seed = args
    return run_single(config, scheme, kappa, seed)


def worker_count(config: SweepConfig) -> int:
    if config.workers is not None:
        return max(1, int(config.workers))
    env = os.environ.get("LIE_MOMENTUM_THREADS")
    if env:
        try:
            return max(1, int(env))
        except ValueError:
            raise ParameterError("LIE_MOMENTUM_THREADS", f"not an integer: {env!r}") from None
    return 1


def run_sweep(config: SweepConfig) -> list[RunResult]:
    """All (scheme, kappa, seed) runs, ordered by that key regardless of worker count."""
    tasks = [(config, s, k, seed) for s in config.schemes for k in config.kappas for seed in config.seeds]
    workers = min(worker_count(config), len(tasks))
    if workers <= 1:
        return [_task(t) for t in tasks]
    with ProcessPoolExecutor(max_workers=workers) as pool:
        return list(pool.map(_task, tasks))


def sweep_and_fit(config: SweepConfig, runs: list[RunResult] | None = None) -> SweepResult:
    """Run the sweep (unless ``runs`` is given) and fit one line per scheme.

    Per (scheme, kappa) the rate is the median over seeds of the converged
    runs. Schemes left with fewer than 4 kappa points get no fit; the reason
    is stored in ``errors``.
    """
    if len(config.kappas) < 4:
        raise InsufficientData(f"need >= 4 kappa values, got {len(config.kappas)}")
    if runs is None:
        runs = run_sweep(config)
    fits, errors = {}, {}
    for scheme in config.schemes:
        kap, med, per_seed, missing = [], [], {}, []
        for kappa in config.kappas:
            rates = [r.rate for r in runs if r.scheme == scheme and r.kappa == kappa and r.rate is not None]
            per_seed[kappa] = rates
            if rates:
                kap.append(kappa)
                med.append(float(np.median(rates)))
            else:
                missing.append(kappa)
        try:
            fit = fit_rates(kap, med, scheme)
        except InsufficientData as exc:
            errors[scheme] = str(exc)
            continue
        fit.per_seed = per_seed
        fit.missing = missing
        fits[scheme] = fit
    return SweepResult(config=config, runs=runs, fits=fits, errors=errors)


__all__ = [
    "SweepConfig", "RunResult", "RateFit", "SweepResult", "estimate_rate", "fit_rates",
    "run_single", "run_sweep", "sweep_and_fit", "build_potential", "initial_point",
    "resolve_params", "spectrum_error", "offdiag_norm", "worker_count",
]
