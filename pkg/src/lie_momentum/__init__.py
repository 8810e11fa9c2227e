"""Momentum optimizers on SO(n) with energy and Lyapunov instrumentation.

Modules:
    lie_core     group/algebra arithmetic, exp/log, dlog calculus
    potentials   the potential contract and the Brockett benchmark
    optimizers   Lie GD, Heavy-Ball, NAG-SC, splitting, and an ODE reference
    diagnostics  energies, Lyapunov functions and their monitors
    experiments  condition-number sweeps and rate fits
    cli          the ``lie-momentum`` command
"""

__version__ = "0.1.0"

from .errors import (AngleAtCut, DegenerateSpectrum, DimensionMismatch, InsufficientData,
                     InvalidPermutation, LieMomentumError, ParameterError, SeriesDivergence,
                     TailTooShort)
from .lie_core import (AlgebraElement, GroupElement, bracket, dlog_apply, estimate_A,
                       geodesic_distance, group_exp, group_log, inner, p_series, q_bound)
from .optimizers import (OptimizerState, Scheme, SchemeParams, integrate_ode, iterate,
                         select_params, step_gd, step_heavy_ball, step_nag_sc, step_splitting)
from .potentials import (BrockettPotential, Potential, SpectrumSpec, estimate_L_mu,
                         sample_haar_rotation)
from .trace import RunTrace

__all__ = [
    "__version__",
    "AngleAtCut", "DegenerateSpectrum", "DimensionMismatch", "InsufficientData",
    "InvalidPermutation", "LieMomentumError", "ParameterError", "SeriesDivergence", "TailTooShort",
    "AlgebraElement", "GroupElement", "bracket", "dlog_apply", "estimate_A", "geodesic_distance",
    "group_exp", "group_log", "inner", "p_series", "q_bound",
    "OptimizerState", "Scheme", "SchemeParams", "integrate_ode", "iterate", "select_params",
    "step_gd", "step_heavy_ball", "step_nag_sc", "step_splitting",
    "BrockettPotential", "Potential", "SpectrumSpec", "estimate_L_mu", "sample_haar_rotation",
    "RunTrace",
]
