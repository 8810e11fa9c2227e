"""Energy and Lyapunov functionals, and monitors that check them along a run.

Functionals are evaluated from (g, xi) alone (plus the previous iterate where
the definition needs U or grad at g exp(-h xi)). Monitors never raise: they
record violations with their step index and size, because several of the
inequalities are only expected to hold inside specific step-size regimes.
"""

from __future__ import annotations

import math
from dataclasses import dataclass, field

import numpy as np

from .errors import AngleAtCut
from .lie_core import AlgebraElement, GroupElement, group_exp, group_log_near_identity, p_series
from .optimizers import OptimizerState, Scheme, SchemeParams, splitting_to_heavy_ball
from .potentials import Potential
from .trace import RunTrace

ENERGY_TOL = 1e-12
LYAPUNOV_TOL = 1e-9
BALL_SLACK = 1e-9


def _gap(pot: Potential, g: GroupElement, g_star: GroupElement) -> float:
    """U(g) - U(g*), using the potential's stable formula when g* is its known minimizer."""
    if g_star is pot.known_minimizer():
        return pot.suboptimality(g)
    return pot.value(g) - pot.value(g_star)


def log_to(g_star: GroupElement, g: GroupElement) -> AlgebraElement:
    """log(g*^-1 g); raises AngleAtCut outside the principal domain."""
    return group_log_near_identity(g_star.inverse() @ g)


# ---------------------------------------------------------------------------
# energies


def energy_ode(g: GroupElement, xi: AlgebraElement, pot: Potential) -> float:
    return pot.value(g) + 0.5 * xi.norm() ** 2


def energy_hb(g: GroupElement, xi: AlgebraElement, pot: Potential, params: SchemeParams) -> float:
    c = 1.0 - params.gamma * params.h
    return pot.value(g) + 0.5 * c * c * xi.norm() ** 2


def _nag_energy_coef(params: SchemeParams) -> float:
    gh = params.gamma * params.h
    return (1.0 - gh) ** 2 / (2.0 * (1.0 + gh - gh * gh))


def energy_nagsc(g: GroupElement, xi: AlgebraElement, pot: Potential, params: SchemeParams,
                 grad: AlgebraElement | None = None) -> float:
    """U(g) + (1 - gh)^2 / (2 (1 + gh - g^2 h^2)) ||xi + h grad(g)||^2 (gh = gamma h)."""
    grad = pot.trivialized_grad(g) if grad is None else grad
    v = xi.mat + params.h * grad.mat
    return pot.value(g) + _nag_energy_coef(params) * float(np.sum(v * v))


def energy_splitting(g: GroupElement, xi: AlgebraElement, pot: Potential, params: SchemeParams) -> float:
    """Heavy-Ball modified energy of the equivalent Heavy-Ball variables."""
    hb, hb_xi = splitting_to_heavy_ball(params, xi)
    return energy_hb(g, hb_xi, pot, hb)


def scheme_energy(state: OptimizerState, pot: Potential, params: SchemeParams) -> float:
    if params.scheme is Scheme.HEAVY_BALL:
        return energy_hb(state.g, state.xi, pot, params)
    if params.scheme is Scheme.NAG_SC:
        return energy_nagsc(state.g, state.xi, pot, params)
    if params.scheme is Scheme.SPLITTING:
        return energy_splitting(state.g, state.xi, pot, params)
    return pot.value(state.g)


# ---------------------------------------------------------------------------
# Lyapunov functions


def lyapunov_ode(g: GroupElement, xi: AlgebraElement, pot: Potential, g_star: GroupElement,
                 gamma: float) -> float:
    """U(g) - U(g*) + 1/4 ||xi||^2 + 1/4 ||gamma log(g*^-1 g) + xi||^2."""
    lg = log_to(g_star, g).mat
    v = gamma * lg + xi.mat
    return _gap(pot, g, g_star) + 0.25 * xi.norm() ** 2 + 0.25 * float(np.sum(v * v))


def _shifted(g: GroupElement, xi: AlgebraElement, h: float, g_prev: GroupElement | None) -> GroupElement:
    # along a trajectory g_k exp(-h xi_k) is exactly the previous iterate
    return g_prev if g_prev is not None else g @ group_exp(xi * -h)


def lyapunov_hb(g: GroupElement, xi: AlgebraElement, pot: Potential, g_star: GroupElement,
                params: SchemeParams, g_prev: GroupElement | None = None) -> float:
    gh = params.gamma * params.h
    back = _shifted(g, xi, params.h, g_prev)
    v = (params.gamma / (1.0 - gh)) * log_to(g_star, g).mat + xi.mat
    return (_gap(pot, back, g_star) / (1.0 - gh) + 0.25 * xi.norm() ** 2
            + 0.25 * float(np.sum(v * v)))


def lyapunov_nagsc(g: GroupElement, xi: AlgebraElement, pot: Potential, g_star: GroupElement,
                   params: SchemeParams, g_prev: GroupElement | None = None,
                   grad_prev: AlgebraElement | None = None) -> float:
    """Heavy-Ball form with the gradient at g exp(-h xi) folded into the cross term.

    A correction -h^2 (2 - gamma h) / (4 (1 - gamma h)) ||grad||^2 is subtracted.
    """
    h, gh = params.h, params.gamma * params.h
    back = _shifted(g, xi, h, g_prev)
    gb = pot.trivialized_grad(back) if grad_prev is None else grad_prev
    v = xi.mat + (params.gamma / (1.0 - gh)) * log_to(g_star, g).mat + h * gb.mat
    return (_gap(pot, back, g_star) / (1.0 - gh) + 0.25 * xi.norm() ** 2
            + 0.25 * float(np.sum(v * v))
            - h * h * (2.0 - gh) / (4.0 * (1.0 - gh)) * float(np.sum(gb.mat * gb.mat)))


def lyapunov_splitting(g, xi, pot, g_star, params, g_prev=None) -> float:
    hb, hb_xi = splitting_to_heavy_ball(params, xi)
    return lyapunov_hb(g, hb_xi, pot, g_star, hb, g_prev=g_prev)


def scheme_lyapunov(state: OptimizerState, pot: Potential, params: SchemeParams,
                    g_star: GroupElement) -> float:
    """Scheme-appropriate Lyapunov value, NaN for GD or outside the log domain."""
    try:
        if params.scheme is Scheme.HEAVY_BALL:
            return lyapunov_hb(state.g, state.xi, pot, g_star, params, g_prev=state.prev_g)
        if params.scheme is Scheme.NAG_SC:
            return lyapunov_nagsc(state.g, state.xi, pot, g_star, params, g_prev=state.prev_g,
                                  grad_prev=state.prev_grad)
        if params.scheme is Scheme.SPLITTING:
            return lyapunov_splitting(state.g, state.xi, pot, g_star, params, g_prev=state.prev_g)
    except AngleAtCut:
        pass
    return math.nan


# ---------------------------------------------------------------------------
# theory constants


def ode_rate(mu: float) -> float:
    return 2.0 / 3.0 * math.sqrt(mu)


def rate_bound(params: SchemeParams) -> float:
    """Contraction factor c guaranteed by the theory at the tuned parameters.

    Heavy-Ball and splitting: (1 + mu / (16 L))^-1.
    NAG-SC: (1 + sqrt(mu) min(1 / sqrt(2L), 1 / (2 p(a))) / 30)^-1.
    GD: 1 - mu / L (momentumless baseline).
    """
    if params.L is None or params.mu is None:
        raise ValueError("rate_bound needs L and mu on the parameters")
    L, mu = params.L, params.mu
    if params.scheme is Scheme.NAG_SC:
        return 1.0 / (1.0 + math.sqrt(mu) * min(1.0 / math.sqrt(2.0 * L), 1.0 / (2.0 * p_series(params.a))) / 30.0)
    if params.scheme is Scheme.GD:
        return 1.0 - mu / L
    return 1.0 / (1.0 + mu / (16.0 * L))


def energy_step_limit(params: SchemeParams) -> float | None:
    """Largest h for which the scheme's modified energy is provably monotone."""
    if params.L is None:
        return None
    L, g = params.L, params.gamma
    if params.scheme is Scheme.HEAVY_BALL:
        return g / (g * g + L)
    if params.scheme is Scheme.NAG_SC:
        return min(1.0 / g, g / (2.0 * L))
    if params.scheme is Scheme.GD:
        return 2.0 / L
    hb, _ = splitting_to_heavy_ball(params)
    return None if hb.h > g / (g * g + L) else params.h


def energy_decrement_bound(params: SchemeParams, xi_norm_next: np.ndarray,
                           form: str = "stated") -> np.ndarray:
    """Per-step upper bound on E_{k+1} - E_k in terms of ||xi_{k+1}||.

    ``form="stated"`` is the commonly quoted Heavy-Ball bound, -gamma h ||xi_{k+1}||^2.
    ``form="proof"`` is what the smoothness argument actually delivers,
    -(gamma h / 2) ||xi_{k+1}||^2; the stated constant is off by that factor
    of two and fails on ordinary trajectories. The splitting scheme inherits
    either bound through the change of variables, where it reads the same.
    Other schemes get 0 (plain monotonicity).
    """
    if form not in ("stated", "proof"):
        raise ValueError(f"unknown bound form {form!r}")
    xn = np.asarray(xi_norm_next, dtype=np.float64)
    if params.scheme in (Scheme.HEAVY_BALL, Scheme.SPLITTING):
        scale = 1.0 if form == "stated" else 0.5
        return -scale * params.gamma * params.h * xn ** 2
    return np.zeros_like(xn)


# ---------------------------------------------------------------------------
# reports


@dataclass
class EnergyReport:
    energy: np.ndarray
    delta: np.ndarray
    bound: np.ndarray
    violations: np.ndarray
    tol: float
    step_limit: float | None
    h: float
    form: str = "stated"

    @property
    def in_regime(self) -> bool:
        return self.step_limit is not None and self.h <= self.step_limit * (1 + 1e-12)

    @property
    def n_violations(self) -> int:
        return int(np.count_nonzero(self.violations))

    @property
    def first_violation(self) -> int | None:
        idx = np.flatnonzero(self.violations)
        return int(idx[0]) if idx.size else None

    @property
    def max_excess(self) -> float:
        if self.delta.size == 0:
            return 0.0
        return float(np.max(self.delta - self.bound))

    def summary(self) -> dict:
        return {"steps": int(self.delta.size), "violations": self.n_violations,
                "first_violation": self.first_violation, "max_excess": self.max_excess,
                "step_limit": self.step_limit, "h": self.h, "in_regime": self.in_regime,
                "form": self.form}


def energy_report(energy, xi_norm, params: SchemeParams, tol: float = ENERGY_TOL,
                  form: str = "stated") -> EnergyReport:
    """Flag steps where E_{k+1} - E_k exceeds the theoretical bound by more than tol*max(1, |E_k|)."""
    E = np.asarray(energy, dtype=np.float64)
    delta = np.diff(E)
    bound = energy_decrement_bound(params, np.asarray(xi_norm, dtype=np.float64)[1:], form)
    slack = tol * np.maximum(1.0, np.abs(E[:-1]))
    viol = delta > bound + slack
    return EnergyReport(energy=E, delta=delta, bound=bound, violations=viol, tol=tol,
                        step_limit=energy_step_limit(params), h=params.h, form=form)


@dataclass
class LyapunovReport:
    values: np.ndarray
    ratios: np.ndarray
    rate: float
    radius: float
    inside: np.ndarray
    checked: np.ndarray
    violations: np.ndarray
    tol: float
    meta: dict = field(default_factory=dict)

    @property
    def entry_index(self) -> int | None:
        idx = np.flatnonzero(self.inside)
        return int(idx[0]) if idx.size else None

    @property
    def n_checked(self) -> int:
        return int(np.count_nonzero(self.checked))

    @property
    def n_violations(self) -> int:
        return int(np.count_nonzero(self.violations))

    @property
    def max_ratio(self) -> float:
        r = self.ratios[self.checked]
        return float(np.max(r)) if r.size else math.nan

    @property
    def n_increases(self) -> int:
        """Checked steps where L went up at all."""
        return int(np.count_nonzero(self.checked & (self.ratios > 1.0)))

    def summary(self) -> dict:
        return {"rate": self.rate, "radius": self.radius, "entry_index": self.entry_index,
                "checked": self.n_checked, "violations": self.n_violations,
                "max_ratio": self.max_ratio, "increases": self.n_increases}


def lyapunov_report(values, dist, rate: float, radius: float, tol: float = LYAPUNOV_TOL) -> LyapunovReport:
    """Check L_{k+1} <= rate * L_k + tol-in-ratio on steps with both iterates inside the ball."""
    L = np.asarray(values, dtype=np.float64)
    d = np.asarray(dist, dtype=np.float64)
    inside = np.isfinite(d) & (d <= radius * (1.0 + BALL_SLACK))
    with np.errstate(divide="ignore", invalid="ignore"):
        ratios = L[1:] / L[:-1]
    checked = inside[:-1] & inside[1:] & np.isfinite(L[:-1]) & np.isfinite(L[1:]) & (L[:-1] > 0)
    viol = checked & (ratios > rate + tol)
    return LyapunovReport(values=L, ratios=ratios, rate=rate, radius=radius, inside=inside,
                          checked=checked, violations=viol, tol=tol)


def ode_lyapunov_report(t, values, c: float, rtol: float = 1e-6) -> dict:
    """e^{c t} L(t) must be nonincreasing up to ``rtol`` relative."""
    t = np.asarray(t, dtype=np.float64)
    w = np.exp(c * t) * np.asarray(values, dtype=np.float64)
    inc = np.diff(w) / np.maximum(np.abs(w[:-1]), np.finfo(float).tiny)
    viol = inc > rtol
    return {"weighted": w, "max_relative_increase": float(np.max(inc)) if inc.size else 0.0,
            "violations": int(np.count_nonzero(viol))}


# ---------------------------------------------------------------------------
# trajectory instrumentation


def instrument(states: list[OptimizerState], pot: Potential, params: SchemeParams,
               g_star: GroupElement | None = None, keep_states: bool = False,
               meta: dict | None = None) -> RunTrace:
    """Evaluate every diagnostic along a list of states (reference path)."""
    g_star = pot.known_minimizer() if g_star is None else g_star
    U, sub, xn, en, ly, di = [], [], [], [], [], []
    for s in states:
        U.append(pot.value(s.g))
        sub.append(_gap(pot, s.g, g_star) if g_star is not None else math.nan)
        xn.append(s.xi.norm())
        en.append(scheme_energy(s, pot, params))
        if g_star is not None:
            ly.append(scheme_lyapunov(s, pot, params, g_star))
            try:
                di.append(log_to(g_star, s.g).norm())
            except AngleAtCut:
                di.append(math.nan)
        else:
            ly.append(math.nan)
            di.append(math.nan)
    raw = None
    if keep_states:
        raw = [{"g": s.g.mat, "xi": s.xi.mat,
                "prev_g": None if s.prev_g is None else s.prev_g.mat,
                "prev_grad": None if s.prev_grad is None else s.prev_grad.mat} for s in states]
    return RunTrace(k=np.array([s.k for s in states]), U=np.array(U), subopt=np.array(sub),
                    xi_norm=np.array(xn), energy=np.array(en), lyapunov=np.array(ly),
                    dist=np.array(di), meta=dict(meta or {}, params=params.to_dict()), states=raw)


def recompute_lyapunov(trace: RunTrace, pot: Potential, params: SchemeParams,
                       g_star: GroupElement | None = None) -> np.ndarray:
    """Re-evaluate the Lyapunov column from the serialized states."""
    if trace.states is None:
        raise ValueError("trace carries no states")
    g_star = pot.known_minimizer() if g_star is None else g_star
    out = []
    for rec in trace.states:
        st = OptimizerState(
            g=GroupElement(rec["g"], check=False), xi=AlgebraElement(rec["xi"]),
            prev_grad=None if rec.get("prev_grad") is None else AlgebraElement(rec["prev_grad"]),
            prev_g=None if rec.get("prev_g") is None else GroupElement(rec["prev_g"], check=False))
        out.append(scheme_lyapunov(st, pot, params, g_star))
    return np.array(out)


# ---------------------------------------------------------------------------
# sub-level trap


@dataclass
class TrapReport:
    start_component: int
    components: np.ndarray
    escaped: bool
    first_escape: int | None
    u: float
    max_value: float
    below_level: bool

    def summary(self) -> dict:
        return {"start_component": self.start_component, "escaped": self.escaped,
                "first_escape": self.first_escape, "u": self.u, "max_value": self.max_value,
                "below_level": self.below_level,
                "visited": sorted(int(c) for c in set(self.components.tolist()))}


def _component_distance(g: GroupElement, rep: GroupElement) -> float:
    try:
        return log_to(rep, g).norm()
    except AngleAtCut:
        return math.pi * math.sqrt(g.n)


def check_sublevel_trap(positions: list[GroupElement], pot: Potential, u: float,
                        components: list[GroupElement]) -> TrapReport:
    """Assign each iterate to the nearest component representative (geodesic distance).

    Membership is a proxy for the connected components of {U <= u}: iterates
    are labelled by their closest local minimum. ``escaped`` records whether
    the label ever differs from the starting one; ``below_level`` whether U
    stayed below u along the whole path.
    """
    labels = np.array([int(np.argmin([_component_distance(g, c) for c in components]))
                       for g in positions])
    moved = np.flatnonzero(labels != labels[0])
    values = np.array([pot.value(g) for g in positions])
    return TrapReport(start_component=int(labels[0]), components=labels, escaped=bool(moved.size),
                      first_escape=int(moved[0]) if moved.size else None, u=float(u),
                      max_value=float(values.max()), below_level=bool(values.max() <= u))


def nag_sublevel_thresholds(lyap0: float, params: SchemeParams) -> tuple[float, float]:
    """The two readings of the NAG-SC trapping level: L0 / (1 - gamma h) and L0."""
    gh = params.gamma * params.h
    u = lyap0 / (1.0 - gh)
    return u, (1.0 - gh) * u
