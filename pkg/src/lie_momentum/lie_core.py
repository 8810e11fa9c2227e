"""Arithmetic on SO(n) and so(n) under the trace metric <X, Y> = tr(X^T Y).

With this metric ``ad`` is skew-adjoint, so the group exponential coincides
with the Riemannian one and geodesics through g are the curves g exp(t X).
"""

from __future__ import annotations

import math
from dataclasses import dataclass

import numpy as np
import scipy.linalg
from scipy.special import zeta

from . import _kernels
from .errors import AngleAtCut, DimensionMismatch, SeriesDivergence

TOL_ORTH = 1e-10
TOL_CUT = 1e-8
# dlog_apply refuses ||ad_{log g}||_op >= 2*pi - DLOG_MARGIN
DLOG_MARGIN = 1e-3
DLOG_TAIL = 1e-12
DLOG_MIN_ORDER = 20


@dataclass(frozen=True, eq=False)
class GroupElement:
    """A rotation matrix in SO(n)."""

    mat: np.ndarray

    def __init__(self, mat, *, check: bool = True, tol: float = TOL_ORTH):
        arr = np.array(mat, dtype=np.float64)
        if arr.ndim != 2 or arr.shape[0] != arr.shape[1]:
            raise DimensionMismatch(f"expected a square matrix, got shape {arr.shape}")
        if check:
            defect = np.linalg.norm(arr.T @ arr - np.eye(arr.shape[0]))
            if defect > tol:
                raise ValueError(f"matrix is not orthogonal (defect {defect:.3e} > {tol:g})")
            det = np.linalg.det(arr)
            if abs(det - 1.0) > tol:
                raise ValueError(f"determinant {det:.12g} is not +1")
        arr.setflags(write=False)
        object.__setattr__(self, "mat", arr)

    @classmethod
    def identity(cls, n: int) -> GroupElement:
        return cls(np.eye(n), check=False)

    @property
    def n(self) -> int:
        return self.mat.shape[0]

    def __matmul__(self, other: GroupElement) -> GroupElement:
        _same_dim(self, other)
        return GroupElement(self.mat @ other.mat, check=False)

    def inverse(self) -> GroupElement:
        return GroupElement(self.mat.T, check=False)

    def orthogonality_defect(self) -> float:
        return float(np.linalg.norm(self.mat.T @ self.mat - np.eye(self.n)))

    def __repr__(self) -> str:
        return f"GroupElement(n={self.n})"


@dataclass(frozen=True, eq=False)
class AlgebraElement:
    """A skew-symmetric matrix in so(n). The constructor takes the skew part."""

    mat: np.ndarray

    def __init__(self, mat):
        arr = np.array(mat, dtype=np.float64)
        if arr.ndim != 2 or arr.shape[0] != arr.shape[1]:
            raise DimensionMismatch(f"expected a square matrix, got shape {arr.shape}")
        arr = 0.5 * (arr - arr.T)
        arr.setflags(write=False)
        object.__setattr__(self, "mat", arr)

    @classmethod
    def zeros(cls, n: int) -> AlgebraElement:
        return cls(np.zeros((n, n)))

    @property
    def n(self) -> int:
        return self.mat.shape[0]

    def __add__(self, other: AlgebraElement) -> AlgebraElement:
        _same_dim(self, other)
        return AlgebraElement(self.mat + other.mat)

    def __sub__(self, other: AlgebraElement) -> AlgebraElement:
        _same_dim(self, other)
        return AlgebraElement(self.mat - other.mat)

    def __neg__(self) -> AlgebraElement:
        return AlgebraElement(-self.mat)

    def __mul__(self, scalar: float) -> AlgebraElement:
        return AlgebraElement(float(scalar) * self.mat)

    __rmul__ = __mul__

    def __truediv__(self, scalar: float) -> AlgebraElement:
        return AlgebraElement(self.mat / float(scalar))

    def norm(self) -> float:
        return math.sqrt(inner(self, self))

    def __repr__(self) -> str:
        return f"AlgebraElement(n={self.n}, norm={self.norm():.6g})"


def _same_dim(a, b) -> None:
    if a.n != b.n:
        raise DimensionMismatch(f"dimension mismatch: {a.n} vs {b.n}")


def random_algebra_element(n: int, rng: np.random.Generator, norm: float | None = None) -> AlgebraElement:
    """Gaussian skew matrix, optionally rescaled to a given Frobenius norm."""
    xi = AlgebraElement(rng.standard_normal((n, n)))
    if norm is not None:
        current = xi.norm()
        xi = xi * (norm / current) if current > 0 else xi
    return xi


def so_basis(n: int) -> list[AlgebraElement]:
    """Orthonormal basis (E_ij - E_ji)/sqrt(2), i < j, of so(n)."""
    basis = []
    for i in range(n):
        for j in range(i + 1, n):
            e = np.zeros((n, n))
            e[i, j] = -1.0 / math.sqrt(2.0)
            e[j, i] = 1.0 / math.sqrt(2.0)
            basis.append(AlgebraElement(e))
    return basis


# ---------------------------------------------------------------------------
# metric and bracket


def inner(x: AlgebraElement, y: AlgebraElement) -> float:
    _same_dim(x, y)
    return float(np.sum(x.mat * y.mat))


def bracket(x: AlgebraElement, y: AlgebraElement) -> AlgebraElement:
    _same_dim(x, y)
    return AlgebraElement(x.mat @ y.mat - y.mat @ x.mat)


def ad_matrix(x: AlgebraElement) -> np.ndarray:
    """Matrix of ad_x in the orthonormal basis from :func:`so_basis`.

    Skew-symmetric because the trace metric makes ad skew-adjoint.
    """
    basis = so_basis(x.n)
    cols = [bracket(x, e) for e in basis]
    return np.array([[inner(ei, c) for c in cols] for ei in basis]).reshape(len(basis), len(basis))


def ad_operator_norm(x: AlgebraElement) -> float:
    if x.n < 3:
        return 0.0
    return float(np.linalg.norm(ad_matrix(x), 2))


# ---------------------------------------------------------------------------
# exp / log


def group_exp(xi: AlgebraElement) -> GroupElement:
    return GroupElement(_kernels.expm(np.ascontiguousarray(xi.mat)), check=False)


def rotation_angles(g: GroupElement) -> np.ndarray:
    """Nonnegative rotation angles of g, one per invariant 2-plane (zeros included)."""
    T, _ = scipy.linalg.schur(g.mat, output="real")
    return np.array([abs(a) for a, _ in _schur_blocks(T)])


def _schur_blocks(T: np.ndarray):
    """Yield (angle, slice) for each diagonal block of a real Schur form of a rotation."""
    n = T.shape[0]
    i = 0
    while i < n:
        if i + 1 < n and abs(T[i + 1, i]) > 0.0:
            c = 0.5 * (T[i, i] + T[i + 1, i + 1])
            s = 0.5 * (T[i + 1, i] - T[i, i + 1])
            yield math.atan2(s, c), slice(i, i + 2)
            i += 2
        else:
            yield (0.0 if T[i, i] > 0 else math.pi), slice(i, i + 1)
            i += 1


def group_log(g: GroupElement, tol_cut: float = TOL_CUT) -> AlgebraElement:
    """Principal logarithm via the real Schur form.

    Raises AngleAtCut when any rotation angle is within ``tol_cut`` of pi.
    """
    T, Z = scipy.linalg.schur(g.mat, output="real")
    L = np.zeros_like(T)
    for angle, sl in _schur_blocks(T):
        if math.pi - abs(angle) <= tol_cut:
            raise AngleAtCut(f"rotation angle {abs(angle):.12g} is at the cut locus (pi)")
        if sl.stop - sl.start == 2:
            i = sl.start
            L[i, i + 1] = -angle
            L[i + 1, i] = angle
    return AlgebraElement(Z @ L @ Z.T)


def group_log_near_identity(g: GroupElement, tol_cut: float = TOL_CUT) -> AlgebraElement:
    """Principal log, taking the Cayley/artanh fast path when g is close to e.

    Falls back to :func:`group_log` away from the identity.
    """
    X, ok = _kernels.log_near_identity(np.ascontiguousarray(g.mat), 0.3)
    if ok:
        return AlgebraElement(X)
    return group_log(g, tol_cut)


def geodesic_distance(g: GroupElement, h: GroupElement, tol_cut: float = TOL_CUT) -> float:
    return group_log(g.inverse() @ h, tol_cut).norm()


def project_to_group(mat: np.ndarray) -> GroupElement:
    """Nearest rotation in Frobenius norm (polar factor), det forced to +1."""
    U, _, Vt = np.linalg.svd(mat)
    if np.linalg.det(U @ Vt) < 0:
        U[:, -1] = -U[:, -1]
    return GroupElement(U @ Vt, check=False)


# ---------------------------------------------------------------------------
# dlog calculus


def p_series(x):
    """x / (1 - exp(-x)), with the removable singularity at 0 handled.

    Accepts real or complex scalars and arrays.
    """
    z = np.asarray(x)
    cplx = np.iscomplexobj(z)
    z = z.astype(np.complex128 if cplx else np.float64)
    small = np.abs(z) < 1e-4
    out = np.empty_like(z)
    zs = z[small]
    out[small] = 1.0 + zs / 2.0 + zs**2 / 12.0 - zs**4 / 720.0
    zb = z[~small]
    out[~small] = zb / (-np.expm1(-zb))
    if out.ndim == 0:
        return out[()].item()
    return out


def q_bound(x: float) -> float:
    """|p(i x) - 1| for 0 < x < 2 pi, in a cancellation-free half-angle form.

    With s = sin(x/2), c = cos(x/2):  q(x) = sqrt((2s - x c)^2 + x^2 s^2) / (2 s).
    """
    if not 0.0 < x < 2.0 * math.pi:
        raise ValueError(f"q_bound is defined on (0, 2*pi), got {x!r}")
    s = math.sin(0.5 * x)
    c = math.cos(0.5 * x)
    return math.hypot(2.0 * s - x * c, x * s) / (2.0 * s)


def estimate_A(n: int, samples: int, seed: int | np.random.Generator = 0, power_iters: int = 50) -> float:
    """Sampled lower bound on max_{||X|| = 1} ||ad_X||_op.

    Each sample draws a unit X and runs power iteration on -ad_X^2 (positive
    semidefinite); the running maximum is returned.
    """
    if n < 2 or samples < 1:
        raise ValueError("need n >= 2 and samples >= 1")
    rng = np.random.default_rng(seed)
    best = 0.0
    for _ in range(samples):
        x = random_algebra_element(n, rng, norm=1.0)
        y = random_algebra_element(n, rng, norm=1.0)
        est = 0.0
        for _ in range(power_iters):
            z = -bracket(x, bracket(x, y))
            nz = z.norm()
            if nz == 0.0:
                est = 0.0
                break
            est = math.sqrt(nz)
            y = z / nz
        best = max(best, est)
    return best


def ad_norm_constant(n: int) -> float:
    """Exact max_{||X|| = 1} ||ad_X||_op for so(n) with the trace metric.

    ad_X has eigenvalues +-i(theta_a +- theta_b) (and +-i theta_a for odd n)
    where ||X||^2 = 2 sum theta_a^2; the maximum is 1 for n >= 4, 1/sqrt(2)
    for n = 3 and 0 for the abelian so(2).
    """
    if n <= 2:
        return 0.0
    if n == 3:
        return 1.0 / math.sqrt(2.0)
    return 1.0


def _p_even_coefficient(k: int) -> float:
    """B_{2k} / (2k)! scaled by (2 pi)^(2k), i.e. (-1)^(k+1) 2 zeta(2k).

    The unscaled coefficient underflows long before the series is done, so
    :func:`dlog_apply` sums in powers of ad_X / (2 pi) instead.
    """
    return (-1.0) ** (k + 1) * 2.0 * float(zeta(2 * k))


def dlog_order(radius: float, tail: float = DLOG_TAIL, min_order: int = DLOG_MIN_ORDER) -> int:
    """Number of even terms needed so the series tail is below ``tail``.

    Tail bound: sum_{k>K} 2 zeta(2k) q^(2k) <= 2 zeta(2) q^(2K+2) / (1 - q^2), q = radius / 2 pi.
    """
    q = radius / (2.0 * math.pi)
    if q >= 1.0:
        raise SeriesDivergence(f"||ad|| = {radius} is outside the radius 2*pi")
    if q == 0.0:
        return min_order
    q2 = q * q
    bound_const = 2.0 * (math.pi**2 / 6.0) / (1.0 - q2)
    # solve bound_const * q2^(k+1) <= tail directly
    k = math.ceil(math.log(tail / bound_const) / math.log(q2)) - 1
    return max(min_order, k)


def _dlog_spectral(X: AlgebraElement, xi: AlgebraElement) -> np.ndarray:
    # i * ad_X is Hermitian, so eigh gives an exact functional calculus
    basis = so_basis(X.n)
    w, V = np.linalg.eigh(1j * ad_matrix(X))
    pw = np.asarray(p_series(-1j * w), dtype=np.complex128)
    c = np.array([inner(e, xi) for e in basis])
    out = ((V * pw) @ (V.conj().T @ c)).real
    return sum((e.mat * ci for e, ci in zip(basis, out)), np.zeros((X.n, X.n)))


def dlog_apply(g: GroupElement, xi: AlgebraElement, tol_cut: float = TOL_CUT,
               margin: float = DLOG_MARGIN, max_order: int = 400) -> AlgebraElement:
    """p(ad_{log g}) xi, the left-trivialized differential of log at g along xi.

    Sums the even Bernoulli series; when it would need more than
    ``max_order`` terms (radius close to 2 pi) the operator function is
    evaluated through the eigendecomposition of ad instead.
    """
    _same_dim(g, xi)
    X = group_log(g, tol_cut)
    radius = ad_operator_norm(X)
    if radius >= 2.0 * math.pi - margin:
        raise SeriesDivergence(
            f"||ad_log g||_op = {radius:.6g} too close to 2*pi for the dlog series")
    order = dlog_order(radius)
    if order > max_order:
        return AlgebraElement(_dlog_spectral(X, xi))
    Xm = X.mat
    Ym = Xm / (2.0 * math.pi)
    result = xi.mat + 0.5 * (Xm @ xi.mat - xi.mat @ Xm)
    term = xi.mat
    for k in range(1, order + 1):
        # term <- ad_Y^2 term
        t1 = Ym @ term - term @ Ym
        term = Ym @ t1 - t1 @ Ym
        result = result + _p_even_coefficient(k) * term
    return AlgebraElement(result)
