"""Objective functions on SO(n).

The main concrete potential is Brockett's trace function U(X) = tr(X^T B X N)
with N = diag(1, ..., n). Its stationary points are the signed permutations
of the eigenvector matrix of B; minimizing it diagonalizes B.

Stationary-point labelling: for a permutation ``pi`` of ``0..n-1`` the point
X_pi has column i equal to the eigenvector of lambda_{pi(n-1-i)}. Under this
labelling the identity permutation is the global minimum (eigenvalues placed
in descending order against the ascending weights of N) and the Hessian at
X_pi has eigenvalues (j - i)(lambda_{pi(j)} - lambda_{pi(i)}), i < j.
"""

from __future__ import annotations

import itertools
import json
from abc import ABC, abstractmethod
from dataclasses import dataclass

import numpy as np

from . import _kernels
from .errors import DegenerateSpectrum, DimensionMismatch, InvalidPermutation
from .lie_core import AlgebraElement, GroupElement


class Potential(ABC):
    """Objective U: SO(n) -> R with a left-trivialized gradient.

    ``trivialized_grad(g)`` must satisfy
    d/dt U(g exp(t xi)) |_{t=0} = <trivialized_grad(g), xi> for every xi.
    """

    n: int

    @abstractmethod
    def value(self, g: GroupElement) -> float: ...

    @abstractmethod
    def trivialized_grad(self, g: GroupElement) -> AlgebraElement: ...

    def known_minimizer(self) -> GroupElement | None:
        return None

    def known_min_value(self) -> float | None:
        return None

    def smoothness_estimate(self) -> tuple[float, float] | None:
        return None

    def suboptimality(self, g: GroupElement) -> float:
        """U(g) - U(g*); subclasses may override with a better-conditioned formula."""
        umin = self.known_min_value()
        if umin is None:
            raise ValueError(f"{type(self).__name__} has no known minimum value")
        return self.value(g) - umin


@dataclass(frozen=True)
class SpectrumSpec:
    """Eigenvalues diag(0, 1, ..., n-2, kappa/(n-1)) with condition number kappa at the minimum."""

    n: int
    kappa: float

    def __post_init__(self):
        if self.n < 2:
            raise ValueError("n must be at least 2")
        lower = (self.n - 1) * (self.n - 2)
        if self.kappa < lower:
            raise ValueError(
                f"kappa={self.kappa:g} < (n-1)(n-2)={lower}; the condition number at "
                "the global minimum would not equal kappa")

    def eigenvalues(self) -> np.ndarray:
        lam = np.arange(self.n, dtype=np.float64)
        lam[-1] = self.kappa / (self.n - 1)
        return lam


def estimate_L_mu(spec: SpectrumSpec | np.ndarray) -> tuple[float, float]:
    """Local smoothness / strong-convexity constants around the global minimum.

    L = (n-1)(lambda_n - lambda_1) and mu = min adjacent eigenvalue gap, from
    the Hessian eigenvalues (j - i)(lambda_j - lambda_i) at the minimum.
    """
    lam = spec.eigenvalues() if isinstance(spec, SpectrumSpec) else np.asarray(spec, dtype=np.float64)
    if np.any(np.diff(lam) < 0):
        raise ValueError("eigenvalues must be sorted ascending")
    n = lam.size
    L = (n - 1) * float(lam[-1] - lam[0])
    mu = float(np.min(np.diff(lam)))
    if mu <= 0.0:
        raise DegenerateSpectrum("repeated eigenvalues: mu = 0, condition number undefined")
    return L, mu


def sample_haar_rotation(n: int, seed: int | np.random.Generator | None = None) -> GroupElement:
    """Haar-uniform rotation: QR of a Gaussian matrix with the sign of diag(R) fixed.

    The sign correction makes Q Haar on O(n); a column flip then moves the
    det -1 half onto SO(n).
    """
    if n < 2:
        raise ValueError("n must be at least 2")
    rng = np.random.default_rng(seed)
    Z = rng.standard_normal((n, n))
    Q, R = np.linalg.qr(Z)
    Q = Q * np.sign(np.diag(R))
    if np.linalg.det(Q) < 0:
        Q[:, 0] = -Q[:, 0]
    return GroupElement(Q, check=False)


def _validate_permutation(pi, n: int) -> tuple[int, ...]:
    perm = tuple(int(p) for p in pi)
    if sorted(perm) != list(range(n)):
        raise InvalidPermutation(f"{pi!r} is not a permutation of 0..{n - 1}")
    return perm


class BrockettPotential(Potential):
    """U(X) = tr(X^T B X N), N = diag(1, ..., n), B = R diag(lam) R^T.

    Construct with :meth:`from_spectrum`, :meth:`from_matrix` or
    :meth:`from_json`. ``R`` and ``lam`` are kept so the exact minimizer is
    available for distance-to-optimum diagnostics.
    """

    def __init__(self, R: GroupElement, eigenvalues, B: np.ndarray | None = None):
        lam = np.asarray(eigenvalues, dtype=np.float64)
        if lam.ndim != 1 or lam.size != R.n:
            raise DimensionMismatch("eigenvalue count must match the rotation size")
        if np.any(np.diff(lam) < 0):
            raise ValueError("eigenvalues must be ascending")
        if np.min(np.diff(lam)) <= 0.0:
            raise DegenerateSpectrum("repeated eigenvalues give mu = 0")
        self.n = R.n
        self.R = R
        self.eigenvalues = lam
        if B is None:
            B = R.mat @ np.diag(lam) @ R.mat.T
            B = 0.5 * (B + B.T)
        self.B = np.ascontiguousarray(B, dtype=np.float64)
        if np.max(np.abs(self.B - self.B.T)) > 1e-12 * max(1.0, np.max(np.abs(self.B))):
            raise ValueError("B must be symmetric")
        self.weights = np.arange(1.0, self.n + 1.0)
        self._minimizer = self.stationary_point(tuple(range(self.n)))
        # X*^T B X* in exact arithmetic
        self._dstar = lam[::-1].copy()
        self._spec: dict | None = None

    # -- construction -------------------------------------------------------

    @classmethod
    def from_spectrum(cls, spec: SpectrumSpec, seed: int | np.random.Generator | None = None) -> BrockettPotential:
        R = sample_haar_rotation(spec.n, seed)
        pot = cls(R, spec.eigenvalues())
        if not isinstance(seed, np.random.Generator):
            pot._spec = {"n": spec.n, "kappa": spec.kappa, "seed": seed}
        return pot

    @classmethod
    def from_matrix(cls, B) -> BrockettPotential:
        B = np.asarray(B, dtype=np.float64)
        if B.ndim != 2 or B.shape[0] != B.shape[1]:
            raise DimensionMismatch("B must be square")
        if np.max(np.abs(B - B.T)) > 1e-12 * max(1.0, np.max(np.abs(B))):
            raise ValueError("B must be symmetric")
        lam, V = np.linalg.eigh(B)
        if np.linalg.det(V) < 0:
            V[:, 0] = -V[:, 0]
        pot = cls(GroupElement(V, check=False), lam, B=B)
        pot._spec = {"B": B.tolist()}
        return pot

    @classmethod
    def from_json(cls, obj: dict | str) -> BrockettPotential:
        """Accepts ``{"n", "kappa", "seed"}`` or ``{"B": [[...], ...]}``."""
        if isinstance(obj, str):
            obj = json.loads(obj)
        if "B" in obj:
            return cls.from_matrix(obj["B"])
        spec = SpectrumSpec(int(obj["n"]), float(obj["kappa"]))
        return cls.from_spectrum(spec, int(obj.get("seed", 0)))

    def to_json(self) -> dict:
        if self._spec is not None:
            return dict(self._spec)
        return {"B": self.B.tolist()}

    # -- Potential contract -------------------------------------------------

    def _check(self, g: GroupElement) -> np.ndarray:
        if g.n != self.n:
            raise DimensionMismatch(f"potential is on SO({self.n}), got SO({g.n})")
        return np.ascontiguousarray(g.mat)

    def value(self, g: GroupElement) -> float:
        return float(_kernels.brockett_value(self._check(g), self.B, self.weights))

    def trivialized_grad(self, g: GroupElement) -> AlgebraElement:
        return AlgebraElement(_kernels.brockett_grad(self._check(g), self.B, self.weights))

    def known_minimizer(self) -> GroupElement:
        return self._minimizer

    def known_min_value(self) -> float:
        return float(np.dot(self.weights, self._dstar))

    def smoothness_estimate(self) -> tuple[float, float]:
        return estimate_L_mu(self.eigenvalues)

    def suboptimality(self, g: GroupElement) -> float:
        return float(_kernels.brockett_subopt(self._check(g), np.ascontiguousarray(self._minimizer.mat),
                                              self._dstar, self.weights))

    # -- stationary points --------------------------------------------------

    def stationary_point(self, pi, signs=None) -> GroupElement:
        """X_pi with column i = s_i * r_{pi(n-1-i)}; det fixed to +1 by flipping column 0."""
        perm = _validate_permutation(pi, self.n)
        cols = [perm[self.n - 1 - i] for i in range(self.n)]
        X = self.R.mat[:, cols].copy()
        if signs is not None:
            X = X * np.asarray(signs, dtype=np.float64)
        if np.linalg.det(X) < 0:
            X[:, 0] = -X[:, 0]
        return GroupElement(X, check=False)

    def stationary_value(self, pi) -> float:
        perm = _validate_permutation(pi, self.n)
        return float(sum(self.weights[i] * self.eigenvalues[perm[self.n - 1 - i]] for i in range(self.n)))

    def hessian_spectrum_at(self, pi) -> np.ndarray:
        return hessian_spectrum_at_minimum(self, pi)


def brockett_value(P: BrockettPotential, X: GroupElement) -> float:
    return P.value(X)


def brockett_grad(P: BrockettPotential, X: GroupElement) -> AlgebraElement:
    """[X^T B X, N], the left-trivialized gradient under the trace metric."""
    return P.trivialized_grad(X)


def hessian_spectrum_at_minimum(P: BrockettPotential, pi) -> np.ndarray:
    """sigma_ij = (j - i)(lambda_{pi(j)} - lambda_{pi(i)}) for i < j, row-major order."""
    perm = _validate_permutation(pi, P.n)
    lam = P.eigenvalues
    out = []
    for i in range(P.n):
        for j in range(i + 1, P.n):
            out.append((j - i) * (lam[perm[j]] - lam[perm[i]]))
    return np.array(out)


def finite_difference_hessian(pot: Potential, g: GroupElement, step: float = 1e-4) -> np.ndarray:
    """Symmetric Hessian of t -> U(g exp(t . e)) in the orthonormal so(n) basis.

    Central differences of the trivialized gradient; meaningful at stationary
    points (elsewhere this is the symmetrized derivative of the gradient field).
    """
    from .lie_core import group_exp, inner, so_basis

    basis = so_basis(pot.n)
    H = np.zeros((len(basis), len(basis)))
    for j, e in enumerate(basis):
        gp = pot.trivialized_grad(g @ group_exp(e * step))
        gm = pot.trivialized_grad(g @ group_exp(e * -step))
        diff = (gp - gm) / (2.0 * step)
        for i, f in enumerate(basis):
            H[i, j] = inner(f, diff)
    return 0.5 * (H + H.T)


@dataclass(frozen=True)
class StationaryPoint:
    perm: tuple[int, ...]
    signs: tuple[int, ...]
    value: float
    grad_norm: float
    morse_index: int


def stationary_census(P: BrockettPotential, hessian_step: float = 1e-4) -> list[StationaryPoint]:
    """Enumerate every signed permutation matrix with det +1 (brute force, small n).

    Records value, gradient norm and the empirical Morse index (number of
    negative finite-difference Hessian eigenvalues).
    """
    out = []
    for perm in itertools.permutations(range(P.n)):
        for signs in itertools.product((1, -1), repeat=P.n):
            cols = [perm[P.n - 1 - i] for i in range(P.n)]
            X = P.R.mat[:, cols] * np.asarray(signs, dtype=np.float64)
            if np.linalg.det(X) < 0:
                continue
            g = GroupElement(X, check=False)
            H = finite_difference_hessian(P, g, hessian_step)
            ev = np.linalg.eigvalsh(H)
            scale = max(1.0, float(np.max(np.abs(ev))))
            out.append(StationaryPoint(
                perm=perm, signs=signs, value=P.value(g),
                grad_norm=P.trivialized_grad(g).norm(),
                morse_index=int(np.sum(ev < -1e-6 * scale))))
    return out


def condition_number(spec: SpectrumSpec) -> float:
    L, mu = estimate_L_mu(spec)
    return L / mu


__all__ = [
    "Potential", "SpectrumSpec", "BrockettPotential", "StationaryPoint",
    "brockett_value", "brockett_grad", "hessian_spectrum_at_minimum",
    "estimate_L_mu", "sample_haar_rotation", "stationary_census",
    "finite_difference_hessian", "condition_number",
]
