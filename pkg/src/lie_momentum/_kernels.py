"""Compiled numerical kernels shared by the reference and fast code paths.

Everything here operates on plain float64 arrays so it can be compiled with
numba. The public, validated API lives in :mod:`lie_momentum.lie_core` and
:mod:`lie_momentum.potentials`.
"""

import math

import numpy as np
from numba import njit

# Higham (2005) degree-selection thresholds for the [m/m] Pade approximant,
# measured in the matrix 1-norm.
_THETA3 = 1.495585217958292e-2
_THETA5 = 2.539398330063230e-1
_THETA7 = 9.504178996162932e-1
_THETA9 = 2.097847961257068e0
_THETA13 = 5.371920351148152e0

_B3 = np.array([120.0, 60.0, 12.0, 1.0])
_B5 = np.array([30240.0, 15120.0, 3360.0, 420.0, 30.0, 1.0])
_B7 = np.array([17297280.0, 8648640.0, 1995840.0, 277200.0, 25200.0, 1512.0, 56.0, 1.0])
_B9 = np.array([
    17643225600.0, 8821612800.0, 2075673600.0, 302702400.0, 30270240.0,
    2162160.0, 110880.0, 3960.0, 90.0, 1.0,
])
_B13 = np.array([
    64764752532480000.0, 32382376266240000.0, 7771770303897600.0,
    1187353796428800.0, 129060195264000.0, 10559470521600.0,
    670442572800.0, 33522128640.0, 1323241920.0, 40840800.0, 960960.0,
    16380.0, 182.0, 1.0,
])


@njit(cache=True)
def norm1(A):
    n = A.shape[0]
    best = 0.0
    for j in range(n):
        s = 0.0
        for i in range(n):
            s += abs(A[i, j])
        if s > best:
            best = s
    return best


@njit(cache=True)
def _pade_solve(U, V):
    return np.ascontiguousarray(np.linalg.solve(V - U, V + U))


@njit(cache=True)
def _pade_low(A, b, m):
    # degrees 3, 5, 7, 9: U = A * sum_odd, V = sum_even
    n = A.shape[0]
    ident = np.eye(n)
    A2 = A @ A
    Uacc = b[1] * ident
    Vacc = b[0] * ident
    P = ident
    for j in range(1, (m - 1) // 2 + 1):
        P = P @ A2
        Uacc = Uacc + b[2 * j + 1] * P
        Vacc = Vacc + b[2 * j] * P
    return _pade_solve(A @ Uacc, Vacc)


@njit(cache=True)
def expm(A):
    """Scaling-and-squaring matrix exponential with Pade degrees 3..13."""
    n = A.shape[0]
    ident = np.eye(n)
    nrm = norm1(A)
    if nrm == 0.0:
        return ident.copy()
    if nrm <= _THETA3:
        return _pade_low(A, _B3, 3)
    if nrm <= _THETA5:
        return _pade_low(A, _B5, 5)
    if nrm <= _THETA7:
        return _pade_low(A, _B7, 7)
    if nrm <= _THETA9:
        return _pade_low(A, _B9, 9)
    s = 0
    if nrm > _THETA13:
        s = int(np.ceil(np.log2(nrm / _THETA13)))
    As = A / (2.0 ** s)
    b = _B13
    A2 = As @ As
    A4 = A2 @ A2
    A6 = A4 @ A2
    U = As @ (A6 @ (b[13] * A6 + b[11] * A4 + b[9] * A2)
              + b[7] * A6 + b[5] * A4 + b[3] * A2 + b[1] * ident)
    V = (A6 @ (b[12] * A6 + b[10] * A4 + b[8] * A2)
         + b[6] * A6 + b[4] * A4 + b[2] * A2 + b[0] * ident)
    R = _pade_solve(U, V)
    for _ in range(s):
        R = R @ R
    return R


@njit(cache=True)
def log_near_identity(Q, max_cayley):
    """Principal log of an orthogonal matrix close to the identity.

    Uses log Q = 2 artanh(C) with C the Cayley transform (Q - I)(Q + I)^-1.
    Returns ``(X, ok)``; ``ok`` is False unless ||Q - I||_F <= 2 sin(atan(max_cayley)),
    in which case X is meaningless. That test runs before any solve: it caps
    every rotation angle, so Q + I is well conditioned and ||C||_2 <= max_cayley.
    """
    n = Q.shape[0]
    ident = np.eye(n)
    M = Q - ident
    fro = 0.0
    for i in range(n):
        for j in range(n):
            fro += M[i, j] * M[i, j]
    if not (math.sqrt(fro) <= 2.0 * math.sin(math.atan(max_cayley))):
        return np.zeros((n, n)), False
    P = Q + ident
    C = np.linalg.solve(P.T.copy(), M.T.copy()).T.copy()
    C = 0.5 * (C - C.T)
    C2 = C @ C
    S = C.copy()
    term = C.copy()
    for k in range(1, 200):
        term = term @ C2
        add = term / (2.0 * k + 1.0)
        S = S + add
        amax = 0.0
        smax = 0.0
        for i in range(n):
            for j in range(n):
                if abs(add[i, j]) > amax:
                    amax = abs(add[i, j])
                if abs(S[i, j]) > smax:
                    smax = abs(S[i, j])
        if amax <= 1e-18 * smax:
            break
    X = 2.0 * S
    return 0.5 * (X - X.T), True


@njit(cache=True)
def frob_sq(A):
    s = 0.0
    for i in range(A.shape[0]):
        for j in range(A.shape[1]):
            s += A[i, j] * A[i, j]
    return s


@njit(cache=True)
def brockett_value(X, B, w):
    M = X.T @ B @ X
    s = 0.0
    for i in range(M.shape[0]):
        s += M[i, i] * w[i]
    return s


@njit(cache=True)
def brockett_grad(X, B, w):
    """[X^T B X, N] with N = diag(w); exactly skew in floating point."""
    M = X.T @ B @ X
    n = M.shape[0]
    G = np.empty((n, n))
    for i in range(n):
        for j in range(n):
            m = 0.5 * (M[i, j] + M[j, i])
            G[i, j] = m * w[j] - w[i] * m
    return G


@njit(cache=True)
def brockett_value_grad(X, B, w):
    """Value and trivialized gradient sharing one X^T B X product."""
    M = X.T @ B @ X
    n = M.shape[0]
    G = np.empty((n, n))
    U = 0.0
    for i in range(n):
        U += M[i, i] * w[i]
        for j in range(n):
            m = 0.5 * (M[i, j] + M[j, i])
            G[i, j] = m * w[j] - w[i] * m
    return U, G


@njit(cache=True)
def brockett_subopt(X, Xstar, dstar, w):
    """U(X) - U(X*) computed without the O(|U|) cancellation.

    With Q = X*^T X and D = X*^T B X* = diag(dstar), the identity
    sum_k Q_ki^2 = 1 turns U - U* into sum_i w_i sum_{k != i} (D_k - D_i) Q_ki^2,
    which only involves off-diagonal entries of Q.
    """
    Q = Xstar.T @ X
    n = Q.shape[0]
    total = 0.0
    for i in range(n):
        s = 0.0
        for k in range(n):
            if k != i:
                s += (dstar[k] - dstar[i]) * Q[k, i] * Q[k, i]
        total += w[i] * s
    return total
