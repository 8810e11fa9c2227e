import cmath
import math

import numpy as np
import pytest
import scipy.linalg
from mpmath import mp
from hypothesis import given
from hypothesis import strategies as st

from lie_momentum import lie_core as lc
from lie_momentum.errors import AngleAtCut, DimensionMismatch, SeriesDivergence

seeds = st.integers(0, 2**32 - 1)
dims = st.integers(2, 7)


def rot2(theta):
    c, s = math.cos(theta), math.sin(theta)
    return np.array([[c, -s], [s, c]])


def taylor_expm(A, terms=60):
    out = np.eye(A.shape[0])
    term = np.eye(A.shape[0])
    for k in range(1, terms + 1):
        term = term @ A / k
        out = out + term
    return out


# -- element types ---------------------------------------------------------


def test_group_element_rejects_non_rotations():
    with pytest.raises(ValueError):
        lc.GroupElement(np.diag([1.0, -1.0]))
    with pytest.raises(ValueError):
        lc.GroupElement(2.0 * np.eye(3))
    with pytest.raises(DimensionMismatch):
        lc.GroupElement(np.ones((2, 3)))


def test_algebra_element_skew_symmetrizes_and_mixes_dims():
    x = lc.AlgebraElement(np.array([[0.0, -1.0], [1.0, 0.0]]))
    assert np.allclose(x.mat, -x.mat.T)
    with pytest.raises(DimensionMismatch):
        lc.inner(x, lc.AlgebraElement.zeros(3))


def test_so_basis_is_orthonormal():
    for n in (2, 3, 5):
        B = lc.so_basis(n)
        assert len(B) == n * (n - 1) // 2
        G = np.array([[lc.inner(a, b) for b in B] for a in B])
        assert np.allclose(G, np.eye(len(B)), atol=1e-15)


# -- exp -------------------------------------------------------------------


def test_exp_of_zero_is_identity():
    assert np.array_equal(lc.group_exp(lc.AlgebraElement.zeros(3)).mat, np.eye(3))


def test_exp_quarter_turn():
    xi = lc.AlgebraElement(np.array([[0.0, -math.pi / 2], [math.pi / 2, 0.0]]))
    assert np.allclose(lc.group_exp(xi).mat, [[0.0, -1.0], [1.0, 0.0]], atol=1e-15)


def test_exp_matches_taylor_oracle(rng):
    for _ in range(10):
        xi = lc.random_algebra_element(5, rng)
        assert np.max(np.abs(lc.group_exp(xi).mat - taylor_expm(xi.mat))) < 1e-10


@given(seeds, dims, st.floats(1e-6, 20.0))
def test_exp_matches_scipy_and_is_orthogonal(seed, n, scale):
    xi = lc.random_algebra_element(n, np.random.default_rng(seed), norm=scale)
    g = lc.group_exp(xi)
    assert np.max(np.abs(g.mat - scipy.linalg.expm(xi.mat))) < 1e-12 * max(1.0, scale)
    assert g.orthogonality_defect() < 1e-12
    assert np.linalg.det(g.mat) == pytest.approx(1.0, abs=1e-12)


@given(seeds, dims)
def test_exp_of_negative_is_inverse(seed, n):
    xi = lc.random_algebra_element(n, np.random.default_rng(seed), norm=2.0)
    prod = lc.group_exp(xi) @ lc.group_exp(-xi)
    assert np.max(np.abs(prod.mat - np.eye(n))) < 1e-13


# -- log -------------------------------------------------------------------


def test_log_identity_is_zero():
    assert np.array_equal(lc.group_log(lc.GroupElement.identity(4)).mat, np.zeros((4, 4)))


def test_log_rotation_by_three():
    X = lc.group_log(lc.GroupElement(rot2(3.0))).mat
    assert np.allclose(X, [[0.0, -3.0], [3.0, 0.0]], atol=1e-14)


def test_log_at_cut_raises():
    with pytest.raises(AngleAtCut):
        lc.group_log(lc.GroupElement(rot2(math.pi)))
    with pytest.raises(AngleAtCut):
        lc.group_log(lc.GroupElement(np.diag([-1.0, -1.0, 1.0])))


def test_exp_log_roundtrip_unit_norm(rng):
    worst = 0.0
    for n in (2, 3, 4, 6, 10):
        for _ in range(20):
            xi = lc.random_algebra_element(n, rng, norm=1.0)
            worst = max(worst, np.max(np.abs(lc.group_log(lc.group_exp(xi)).mat - xi.mat)))
    assert worst < 1e-10


@given(seeds, dims, st.floats(0.0, 0.95))
def test_log_exp_roundtrip_inside_injectivity(seed, n, frac):
    # rotation angles stay below pi when the spectral norm of xi does
    rng = np.random.default_rng(seed)
    xi = lc.random_algebra_element(n, rng)
    s = np.linalg.norm(xi.mat, 2)
    if s > 0:
        xi = xi * (frac * math.pi / s)
    back = lc.group_log(lc.group_exp(xi))
    assert np.max(np.abs(back.mat - xi.mat)) < 1e-9


@given(seeds, dims, st.floats(1e-8, 0.29))
def test_near_identity_log_agrees_with_schur(seed, n, r):
    rng = np.random.default_rng(seed)
    g = lc.group_exp(lc.random_algebra_element(n, rng, norm=r))
    a = lc.group_log_near_identity(g).mat
    b = lc.group_log(g).mat
    assert np.max(np.abs(a - b)) < 1e-12


def test_near_identity_log_falls_back_far_away(rng):
    g = lc.group_exp(lc.random_algebra_element(4, rng, norm=2.0))
    assert np.allclose(lc.group_log_near_identity(g).mat, lc.group_log(g).mat, atol=1e-12)


def test_rotation_angles_block_diagonal():
    g = np.eye(5)
    g[:2, :2] = rot2(0.4)
    g[2:4, 2:4] = rot2(-2.5)
    ang = np.sort(lc.rotation_angles(lc.GroupElement(g)))
    assert np.allclose(ang, [0.0, 0.4, 2.5], atol=1e-12)


# -- metric and bracket -------------------------------------------------------


def test_inner_examples():
    J = lc.AlgebraElement(np.array([[0.0, -1.0], [1.0, 0.0]]))
    assert lc.inner(J, J) == 2.0
    e01 = np.zeros((4, 4))
    e01[0, 1], e01[1, 0] = -1.0, 1.0
    e23 = np.zeros((4, 4))
    e23[2, 3], e23[3, 2] = -1.0, 1.0
    assert lc.inner(lc.AlgebraElement(e01), lc.AlgebraElement(e23)) == 0.0


def test_ad_skew_adjoint_thousand_triples(rng):
    worst = 0.0
    for _ in range(1000):
        n = int(rng.integers(2, 8))
        x, y, z = (lc.random_algebra_element(n, rng) for _ in range(3))
        val = lc.inner(lc.bracket(x, y), z) + lc.inner(y, lc.bracket(x, z))
        worst = max(worst, abs(val) / (x.norm() * y.norm() * z.norm()))
    assert worst < 1e-12


def test_bracket_so3_structure():
    # axis generators: (E_k) acting as v -> e_k x v
    def hat(v):
        return np.array([[0, -v[2], v[1]], [v[2], 0, -v[0]], [-v[1], v[0], 0]], dtype=float)
    e1, e2, e3 = (lc.AlgebraElement(hat(v)) for v in np.eye(3))
    assert np.allclose(lc.bracket(e1, e2).mat, e3.mat)
    assert np.allclose(lc.bracket(e2, e3).mat, e1.mat)
    assert np.allclose(lc.bracket(e3, e1).mat, e2.mat)


@given(seeds, dims)
def test_bracket_antisymmetric_and_jacobi(seed, n):
    rng = np.random.default_rng(seed)
    x, y, z = (lc.random_algebra_element(n, rng) for _ in range(3))
    assert np.array_equal(lc.bracket(x, x).mat, np.zeros((n, n)))
    assert np.allclose(lc.bracket(x, y).mat, -lc.bracket(y, x).mat, atol=1e-13)
    jac = (lc.bracket(x, lc.bracket(y, z)) + lc.bracket(y, lc.bracket(z, x))
           + lc.bracket(z, lc.bracket(x, y)))
    assert np.max(np.abs(jac.mat)) < 1e-11


@given(seeds, st.integers(2, 6))
def test_ad_matrix_is_skew_and_represents_bracket(seed, n):
    rng = np.random.default_rng(seed)
    x, y = lc.random_algebra_element(n, rng), lc.random_algebra_element(n, rng)
    M = lc.ad_matrix(x)
    assert np.allclose(M, -M.T, atol=1e-13)
    B = lc.so_basis(n)
    coords = np.array([lc.inner(e, y) for e in B])
    target = np.array([lc.inner(e, lc.bracket(x, y)) for e in B])
    assert np.allclose(M @ coords, target, atol=1e-12)


# -- distance --------------------------------------------------------------------


def test_distance_basics(rng):
    g = lc.group_exp(lc.random_algebra_element(4, rng, norm=1.3))
    assert lc.geodesic_distance(g, g) < 1e-14
    xi = lc.random_algebra_element(4, rng, norm=0.8)
    I = lc.GroupElement.identity(4)
    assert lc.geodesic_distance(I, lc.group_exp(xi)) == pytest.approx(0.8, abs=1e-12)


def test_distance_triangle_inequality(rng):
    for _ in range(100):
        a, b, c = (lc.group_exp(lc.random_algebra_element(4, rng, norm=1.0)) for _ in range(3))
        dab, dbc, dac = (lc.geodesic_distance(a, b), lc.geodesic_distance(b, c),
                         lc.geodesic_distance(a, c))
        assert dac <= dab + dbc + 1e-9


@given(seeds, st.integers(2, 6))
def test_distance_left_invariant_and_symmetric(seed, n):
    rng = np.random.default_rng(seed)
    a, b, k = (lc.group_exp(lc.random_algebra_element(n, rng, norm=0.9)) for _ in range(3))
    d = lc.geodesic_distance(a, b)
    assert lc.geodesic_distance(b, a) == pytest.approx(d, abs=1e-10)
    assert lc.geodesic_distance(k @ a, k @ b) == pytest.approx(d, abs=1e-10)


def test_project_to_group(rng):
    g = lc.group_exp(lc.random_algebra_element(5, rng))
    noisy = g.mat + 1e-6 * rng.standard_normal((5, 5))
    p = lc.project_to_group(noisy)
    assert p.orthogonality_defect() < 1e-14
    assert np.max(np.abs(p.mat - g.mat)) < 1e-5


# -- p, q -------------------------------------------------------------------------


def test_p_series_values():
    assert lc.p_series(0.0) == 1.0
    assert lc.p_series(1.0) == pytest.approx(1.0 / (1.0 - math.exp(-1.0)), rel=1e-15)
    assert lc.p_series(1.0) == pytest.approx(1.58198, abs=5e-6)
    # pi / (1 - e^-pi) evaluated at 30 digits
    assert lc.p_series(math.pi) == pytest.approx(3.28348490175454, abs=1e-13)


@given(st.floats(-5e-4, 5e-4))
def test_p_series_continuous_across_branch(x):
    if x == 0.0:
        return
    assert lc.p_series(x) == pytest.approx(x / -math.expm1(-x), rel=1e-13)


def test_p_series_complex_argument():
    z = 0.7j
    assert lc.p_series(z) == pytest.approx(z / (1 - cmath.exp(-z)), rel=1e-14)


def test_q_small_and_midpoint():
    assert lc.q_bound(1e-6) == pytest.approx(5e-7, rel=1e-6)
    ref = abs(0.5j * math.pi / (1 - cmath.exp(-0.5j * math.pi)) - 1)
    assert lc.q_bound(math.pi / 2) == pytest.approx(ref, rel=1e-14)


def test_q_grid_against_two_oracles():
    mp.dps = 40
    xs = np.linspace(1e-3, 2 * math.pi - 1e-3, 1000)
    for x in xs:
        q = lc.q_bound(float(x))
        X = mp.mpf(float(x))
        # complex evaluation of |p(ix) - 1|
        a = abs(1j * X / (1 - mp.exp(-1j * X)) - 1)
        # real and imaginary parts in closed form
        b = mp.sqrt((X * mp.sin(X) / (2 - 2 * mp.cos(X)) - 1) ** 2 + (X / 2) ** 2)
        assert abs(q - float(a)) <= 1e-12 * max(1.0, float(a))
        assert abs(q - float(b)) <= 1e-12 * max(1.0, float(b))


def test_q_domain():
    for bad in (0.0, 2 * math.pi, -1.0):
        with pytest.raises(ValueError):
            lc.q_bound(bad)


# -- ad norm constant -------------------------------------------------------------------


def test_estimate_A_values():
    assert lc.estimate_A(2, 50) == 0.0
    a3 = lc.estimate_A(3, 200, seed=1)
    assert a3 == pytest.approx(1 / math.sqrt(2), abs=1e-6)
    a5 = lc.estimate_A(5, 200, seed=1)
    assert a5 <= 1.0 + 1e-9
    assert a5 > 0.8


def test_estimate_A_monotone_in_samples():
    vals = [lc.estimate_A(5, m, seed=3) for m in (1, 5, 20, 80)]
    assert all(b >= a for a, b in zip(vals, vals[1:]))


def test_ad_norm_constant_matches_sampling():
    assert lc.ad_norm_constant(2) == 0.0
    assert lc.ad_norm_constant(3) == pytest.approx(1 / math.sqrt(2))
    for n in (4, 6):
        assert lc.estimate_A(n, 100, seed=0) <= lc.ad_norm_constant(n) + 1e-9
    # the maximizer for n >= 4: rotation in two planes with equal angles
    X = np.zeros((4, 4))
    X[0, 1], X[1, 0], X[2, 3], X[3, 2] = -0.5, 0.5, -0.5, 0.5
    assert lc.ad_operator_norm(lc.AlgebraElement(X)) == pytest.approx(1.0, abs=1e-12)


# -- dlog ---------------------------------------------------------------------------------


def test_dlog_at_identity_is_identity(rng):
    xi = lc.random_algebra_element(4, rng)
    out = lc.dlog_apply(lc.GroupElement.identity(4), xi)
    assert np.allclose(out.mat, xi.mat, atol=1e-15)


def dlog_oracle(X, xi):
    """p(ad_X) xi by diagonalizing the (normal) ad matrix."""
    B = lc.so_basis(X.n)
    M = lc.ad_matrix(X)
    w, V = np.linalg.eig(M)
    pw = np.array([complex(lc.p_series(z)) for z in w])
    P = (V * pw) @ np.linalg.inv(V)
    c = np.array([lc.inner(e, xi) for e in B])
    out = (P @ c).real
    return sum((e.mat * ci for e, ci in zip(B, out)), np.zeros((X.n, X.n)))


def test_dlog_matches_spectral_oracle(rng):
    for n in (3, 4, 5):
        for _ in range(5):
            X = lc.random_algebra_element(n, rng, norm=2.0)
            xi = lc.random_algebra_element(n, rng)
            got = lc.dlog_apply(lc.group_exp(X), xi).mat
            assert np.max(np.abs(got - dlog_oracle(X, xi))) < 1e-10


def test_dlog_matches_derivative_of_log(rng):
    for _ in range(5):
        X = lc.random_algebra_element(4, rng, norm=1.5)
        xi = lc.random_algebra_element(4, rng, norm=1.0)
        g = lc.group_exp(X)
        t = 1e-5
        fd = (lc.group_log(g @ lc.group_exp(xi * t)).mat - lc.group_log(g @ lc.group_exp(xi * -t)).mat) / (2 * t)
        assert np.max(np.abs(lc.dlog_apply(g, xi).mat - fd)) < 1e-8


@given(seeds, st.integers(3, 6), st.floats(0.05, 2.5))
def test_dlog_identities(seed, n, r):
    rng = np.random.default_rng(seed)
    X = lc.random_algebra_element(n, rng, norm=r)
    xi = lc.random_algebra_element(n, rng)
    g = lc.group_exp(X)
    logg = lc.group_log(g)
    d = lc.dlog_apply(g, xi)
    # pairing with log g is unchanged
    assert abs(lc.inner(d, logg) - lc.inner(logg, xi)) < 1e-10 * max(1.0, xi.norm() * r)
    # p(ad_X) X = X
    assert np.max(np.abs(lc.dlog_apply(g, logg).mat - logg.mat)) < 1e-10


def test_dlog_operator_bound(rng):
    # ||p(ad_X) - Id|| <= q(a) when ||X|| <= a / A
    for n in (3, 4, 6):
        A = lc.ad_norm_constant(n)
        for a in (0.5, 1.5, 3.0):
            X = lc.random_algebra_element(n, rng, norm=a / A)
            M = lc.ad_matrix(X)
            w, V = np.linalg.eig(M)
            P = (V * np.array([complex(lc.p_series(z)) for z in w])) @ np.linalg.inv(V)
            op = np.linalg.norm(P.real - np.eye(M.shape[0]), 2)
            assert op <= lc.q_bound(a) + 1e-10


def test_dlog_refuses_past_margin():
    with pytest.raises(SeriesDivergence):
        lc.dlog_order(2 * math.pi)
    X = np.zeros((4, 4))
    X[0, 1], X[1, 0] = -3.1413, 3.1413
    X[2, 3], X[3, 2] = 3.1413, -3.1413
    # ad eigenvalue 6.2826 lies inside the margin below 2 pi
    with pytest.raises(SeriesDivergence):
        lc.dlog_apply(lc.group_exp(lc.AlgebraElement(X)), lc.AlgebraElement(X))


def test_dlog_close_to_radius_uses_exact_path(rng):
    X = np.zeros((4, 4))
    X[0, 1], X[1, 0] = -3.14, 3.14
    X[2, 3], X[3, 2] = 3.14, -3.14
    X = lc.AlgebraElement(X)
    xi = lc.random_algebra_element(4, rng)
    got = lc.dlog_apply(lc.group_exp(X), xi).mat
    assert np.all(np.isfinite(got))
    assert np.max(np.abs(got - dlog_oracle(X, xi))) < 1e-8 * np.max(np.abs(got))


def test_dlog_series_and_spectral_paths_agree(rng):
    X = lc.random_algebra_element(5, rng, norm=2.0)
    xi = lc.random_algebra_element(5, rng)
    g = lc.group_exp(X)
    a = lc.dlog_apply(g, xi).mat
    b = lc.dlog_apply(g, xi, max_order=0).mat
    assert np.max(np.abs(a - b)) < 1e-12


def test_dlog_order_tail_bound():
    for r in (0.1, 1.0, 3.0, 6.0):
        K = lc.dlog_order(r, min_order=1)
        q2 = (r / (2 * math.pi)) ** 2
        const = 2 * (math.pi ** 2 / 6) / (1 - q2)
        assert const * q2 ** (K + 1) <= 1e-12
        if K > 1:
            assert const * q2 ** K > 1e-12


def test_near_identity_log_at_cut_falls_back_and_raises():
    g = lc.GroupElement(np.diag([-1.0, -1.0, 1.0]))
    with pytest.raises(AngleAtCut):
        lc.group_log_near_identity(g)
    assert lc.group_log_near_identity(lc.GroupElement(rot2(3.0))).mat[1, 0] == pytest.approx(3.0)
