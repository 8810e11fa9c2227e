"""Discrete optimizers on SO(n) and a reference integrator for the damped ODE.

All momentum schemes update the left-trivialized momentum first and then move
the position by a group exponential, so iterates stay on the group without
any projection:

    xi_{k+1} = (momentum update using grad(g_k))
    g_{k+1}  = g_k exp(h xi_{k+1})
"""

from __future__ import annotations

import math
from dataclasses import dataclass, field
from enum import Enum

import numpy as np

from .errors import ParameterError
from .lie_core import AlgebraElement, GroupElement, group_exp, p_series, project_to_group
from .potentials import Potential


class Scheme(str, Enum):
    GD = "gd"
    HEAVY_BALL = "heavy-ball"
    NAG_SC = "nag-sc"
    SPLITTING = "splitting"

    @classmethod
    def parse(cls, name: str | Scheme) -> Scheme:
        if isinstance(name, Scheme):
            return name
        key = name.strip().lower().replace("_", "-")
        aliases = {"hb": "heavy-ball", "heavyball": "heavy-ball", "nag": "nag-sc",
                   "nagsc": "nag-sc", "split": "splitting"}
        key = aliases.get(key, key)
        try:
            return cls(key)
        except ValueError:
            raise ParameterError("scheme", f"unknown scheme {name!r}; choose from "
                                 f"{', '.join(s.value for s in cls)}") from None


@dataclass(frozen=True)
class SchemeParams:
    """Step size ``h``, friction ``gamma`` and the NAG-SC curvature parameter ``a``.

    ``L`` and ``mu`` are optional; when present they are used for theory
    bounds (rates, step-size regimes) by the diagnostics.
    """

    scheme: Scheme
    h: float
    gamma: float = 0.0
    a: float = math.pi
    L: float | None = None
    mu: float | None = None

    def __post_init__(self):
        object.__setattr__(self, "scheme", Scheme.parse(self.scheme))
        if not (self.h > 0 and math.isfinite(self.h)):
            raise ParameterError("h", f"step size must be positive and finite, got {self.h}")
        if self.scheme is not Scheme.GD and not self.gamma > 0:
            raise ParameterError("gamma", f"friction must be positive, got {self.gamma}")
        if self.scheme in (Scheme.HEAVY_BALL, Scheme.NAG_SC) and not self.gamma * self.h < 1:
            raise ParameterError(
                "h", f"gamma*h = {self.gamma * self.h:g} must be < 1 (keeps 1 - gamma*h positive)")
        if not 0 < self.a < 2 * math.pi:
            raise ParameterError("a", f"a must lie in (0, 2*pi), got {self.a}")

    @property
    def damping(self) -> float:
        """Per-step momentum retention: 1 - gamma h, or exp(-gamma h) for splitting."""
        if self.scheme is Scheme.SPLITTING:
            return math.exp(-self.gamma * self.h)
        return 1.0 - self.gamma * self.h

    def to_dict(self) -> dict:
        return {"scheme": self.scheme.value, "h": self.h, "gamma": self.gamma, "a": self.a,
                "L": self.L, "mu": self.mu}


def select_params(L: float, mu: float, scheme: Scheme | str, a: float = math.pi) -> SchemeParams:
    """Tuned (h, gamma) for a locally L-smooth, mu-strongly convex potential.

    Heavy-Ball: gamma = 2 sqrt(mu), h = sqrt(mu) / (4 L).
    NAG-SC:     gamma = 2 sqrt(mu), h = min(1 / sqrt(2 L), 1 / (2 p(a))).
    GD:         h = 1 / L.
    Splitting uses the Heavy-Ball choice.
    """
    scheme = Scheme.parse(scheme)
    if not (mu > 0 and L >= mu):
        raise ParameterError("mu", f"need L >= mu > 0, got L={L}, mu={mu}")
    if not 0 < a < 2 * math.pi:
        raise ParameterError("a", f"a must lie in (0, 2*pi), got {a}")
    gamma = 2.0 * math.sqrt(mu)
    if scheme is Scheme.GD:
        return SchemeParams(scheme, h=1.0 / L, gamma=0.0, a=a, L=L, mu=mu)
    if scheme is Scheme.NAG_SC:
        h = min(1.0 / math.sqrt(2.0 * L), 1.0 / (2.0 * p_series(a)))
        return SchemeParams(scheme, h=h, gamma=gamma, a=a, L=L, mu=mu)
    return SchemeParams(scheme, h=math.sqrt(mu) / (4.0 * L), gamma=gamma, a=a, L=L, mu=mu)


@dataclass(frozen=True)
class OptimizerState:
    """Position, trivialized momentum, cached gradient at the previous iterate, step count.

    ``prev_grad`` holds grad(g_{k-1}); before the first step it is grad(g_0),
    so the NAG-SC gradient-difference term vanishes on step 0.
    """

    g: GroupElement
    xi: AlgebraElement
    prev_grad: AlgebraElement | None = None
    k: int = 0
    prev_g: GroupElement | None = field(default=None, compare=False)

    @classmethod
    def initial(cls, g0: GroupElement, pot: Potential | None = None,
                xi0: AlgebraElement | None = None) -> OptimizerState:
        xi = AlgebraElement.zeros(g0.n) if xi0 is None else xi0
        grad = pot.trivialized_grad(g0) if pot is not None else None
        return cls(g=g0, xi=xi, prev_grad=grad, k=0, prev_g=g0)


def _advance(state: OptimizerState, grad: AlgebraElement, xi_new: AlgebraElement,
             h: float, check: bool) -> OptimizerState:
    g_new = GroupElement(state.g.mat @ group_exp(xi_new * h).mat, check=check)
    return OptimizerState(g=g_new, xi=xi_new, prev_grad=grad, k=state.k + 1, prev_g=state.g)


def step_gd(state: OptimizerState, pot: Potential, h: float, check: bool = False) -> OptimizerState:
    """g_{k+1} = g_k exp(-h grad(g_k)); the momentum slot stays zero."""
    grad = pot.trivialized_grad(state.g)
    g_new = GroupElement(state.g.mat @ group_exp(grad * -h).mat, check=check)
    return OptimizerState(g=g_new, xi=AlgebraElement.zeros(state.g.n), prev_grad=grad,
                          k=state.k + 1, prev_g=state.g)


def step_heavy_ball(state: OptimizerState, pot: Potential, params: SchemeParams,
                    check: bool = False) -> OptimizerState:
    grad = pot.trivialized_grad(state.g)
    damp = 1.0 - params.gamma * params.h
    xi_new = AlgebraElement(damp * state.xi.mat - params.h * grad.mat)
    return _advance(state, grad, xi_new, params.h, check)


def step_nag_sc(state: OptimizerState, pot: Potential, params: SchemeParams,
                check: bool = False) -> OptimizerState:
    grad = pot.trivialized_grad(state.g)
    prev = grad if state.prev_grad is None else state.prev_grad
    damp = 1.0 - params.gamma * params.h
    h = params.h
    xi_new = AlgebraElement(damp * state.xi.mat - damp * h * (grad.mat - prev.mat) - h * grad.mat)
    return _advance(state, grad, xi_new, h, check)


def step_splitting(state: OptimizerState, pot: Potential, params: SchemeParams,
                   check: bool = False) -> OptimizerState:
    """Exact friction flow for time h, then the free flow g -> g exp(h xi)."""
    grad = pot.trivialized_grad(state.g)
    gh = params.gamma * params.h
    decay = math.exp(-gh)
    kick = -math.expm1(-gh) / params.gamma
    xi_new = AlgebraElement(decay * state.xi.mat - kick * grad.mat)
    return _advance(state, grad, xi_new, params.h, check)


def step(state: OptimizerState, pot: Potential, params: SchemeParams, check: bool = False) -> OptimizerState:
    if params.scheme is Scheme.GD:
        return step_gd(state, pot, params.h, check)
    if params.scheme is Scheme.HEAVY_BALL:
        return step_heavy_ball(state, pot, params, check)
    if params.scheme is Scheme.NAG_SC:
        return step_nag_sc(state, pot, params, check)
    return step_splitting(state, pot, params, check)


def splitting_to_heavy_ball(params: SchemeParams, xi: AlgebraElement | None = None):
    """Change of variables mapping a splitting run onto an equivalent Heavy-Ball run.

    Returns ``(hb_params, hb_xi)``: velocity scaled by sqrt(h gamma / (1 - e^{-gamma h})),
    friction sqrt(gamma (1 - e^{-gamma h}) / h), step sqrt((1 - e^{-gamma h}) / (h gamma)) h.
    The HB damping 1 - gamma' h' then equals e^{-gamma h} and h' xi' = h xi.
    """
    g, h = params.gamma, params.h
    one_minus = -math.expm1(-g * h)
    vel = math.sqrt(h * g / one_minus)
    hb = SchemeParams(Scheme.HEAVY_BALL, h=math.sqrt(one_minus / (h * g)) * h,
                      gamma=math.sqrt(g * one_minus / h), a=params.a, L=params.L, mu=params.mu)
    return hb, (None if xi is None else xi * vel)


def iterate(pot: Potential, g0: GroupElement, params: SchemeParams, num_steps: int,
            xi0: AlgebraElement | None = None) -> list[OptimizerState]:
    """Run ``num_steps`` steps and return all states, initial state included."""
    state = OptimizerState.initial(g0, pot, xi0)
    states = [state]
    for _ in range(num_steps):
        state = step(state, pot, params)
        states.append(state)
    return states


# ---------------------------------------------------------------------------
# continuous-time reference


@dataclass
class OdeTrace:
    """Time-stamped samples of an integrate_ode run."""

    t: np.ndarray
    g: list[GroupElement]
    xi: list[AlgebraElement]
    gamma: float
    dt: float
    meta: dict = field(default_factory=dict)

    def __len__(self) -> int:
        return len(self.t)


def _ode_rhs(G: np.ndarray, X: np.ndarray, pot: Potential, gamma: float):
    grad = pot.trivialized_grad(GroupElement(G, check=False)).mat
    return G @ X, -gamma * X - grad


def integrate_ode(g0: GroupElement, xi0: AlgebraElement, pot: Potential, gamma: float,
                  dt: float, T: float, record_every: int = 1) -> OdeTrace:
    """Classical RK4 for g' = g xi, xi' = -gamma xi - grad(g), polar-projected each step.

    The ad*_xi xi force vanishes for the trace metric, so it does not appear.
    """
    if dt <= 0 or T < 0:
        raise ParameterError("dt", "need dt > 0 and T >= 0")
    steps = int(round(T / dt))
    G = g0.mat.copy()
    X = xi0.mat.copy()
    ts, gs, xis = [0.0], [g0], [AlgebraElement(X)]
    for k in range(1, steps + 1):
        k1g, k1x = _ode_rhs(G, X, pot, gamma)
        k2g, k2x = _ode_rhs(G + 0.5 * dt * k1g, X + 0.5 * dt * k1x, pot, gamma)
        k3g, k3x = _ode_rhs(G + 0.5 * dt * k2g, X + 0.5 * dt * k2x, pot, gamma)
        k4g, k4x = _ode_rhs(G + dt * k3g, X + dt * k3x, pot, gamma)
        G = G + dt / 6.0 * (k1g + 2 * k2g + 2 * k3g + k4g)
        X = X + dt / 6.0 * (k1x + 2 * k2x + 2 * k3x + k4x)
        G = project_to_group(G).mat
        X = 0.5 * (X - X.T)
        if k % record_every == 0 or k == steps:
            ts.append(k * dt)
            gs.append(GroupElement(G, check=False))
            xis.append(AlgebraElement(X))
    return OdeTrace(t=np.array(ts), g=gs, xi=xis, gamma=gamma, dt=dt)


__all__ = [
    "Scheme", "SchemeParams", "OptimizerState", "OdeTrace", "select_params",
    "step_gd", "step_heavy_ball", "step_nag_sc", "step_splitting", "step",
    "splitting_to_heavy_ball", "iterate", "integrate_ode",
]
