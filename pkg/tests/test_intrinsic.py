from __future__ import annotations

import math

import numpy as np
import pytest
from hypothesis import given
from hypothesis import strategies as st
from scipy import integrate
from scipy.spatial import ConvexHull
from scipy.stats import special_ortho_group

from vallab import bodies as B
from vallab import intrinsic as I
from vallab.mc import MCConfig

from conftest import within

seeds = st.integers(0, 2**31 - 1)


def omega(n):
    return math.pi ** (n / 2) / math.gamma(n / 2 + 1)


# --- normalization ------------------------------------------------------------


@pytest.mark.parametrize("n", [1, 2, 3, 4])
def test_every_intrinsic_volume_of_the_unit_ball_is_omega_n(n):
    vals = I.intrinsic_volumes(B.Ball(np.zeros(n), 1.0))
    assert [v.mean for v in vals] == pytest.approx([omega(n)] * (n + 1), rel=1e-12)


def test_conversion_constants_are_ball_normalizing():
    # kappa_k-style oracle: the Steiner coefficient of eps^{n-i} for the ball is omega_n C(n, i)
    for n in (1, 2, 3, 4):
        c = I.conversion_constants(n)
        assert c * np.array([omega(n) * math.comb(n, i) for i in range(n + 1)]) == pytest.approx(
            [omega(n)] * (n + 1))


def test_unit_square_and_cube_examples():
    sq = [v.mean for v in I.intrinsic_volumes(B.Box(np.zeros(2), np.ones(2)))]
    # Steiner: vol(Q + eps D) = 1 + 4 eps + pi eps^2
    assert I.steiner_fit(B.Box(np.zeros(2), np.ones(2))).coeffs == pytest.approx([1, 4, math.pi])
    assert sq[2] == pytest.approx(1.0) and sq[0] == pytest.approx(omega(2))
    cube = I.steiner_fit(B.Box(np.zeros(3), np.ones(3))).coeffs
    assert cube == pytest.approx([1, 6, 3 * math.pi, 4 * math.pi / 3])


def test_point_steiner_polynomial():
    fit = I.steiner_fit(B.point(np.zeros(3)))
    assert fit.coeffs == pytest.approx([0, 0, 0, omega(3)], abs=1e-12)


def test_v1_of_rectangle_is_linear_in_the_side():
    vals = [I.intrinsic_volume(B.Box(np.zeros(2), np.array([a, 1.0])), 1).mean for a in (1.0, 2.0, 3.0)]
    assert np.diff(vals) == pytest.approx([vals[1] - vals[0]] * 2)


@given(seeds)
def test_polygon_steiner_matches_perimeter_and_area(seed):
    V = np.random.default_rng(seed).standard_normal((9, 2))
    hull = ConvexHull(V)
    c = I.steiner_fit(B.Polytope(V)).coeffs
    # scipy: in 2D `area` is the perimeter and `volume` the area
    assert c == pytest.approx([hull.volume, hull.area, math.pi], rel=1e-9)


# --- Monte Carlo and quadrature routes --------------------------------------


def test_montecarlo_steiner_of_square_within_three_sigma():
    fit = I.steiner_fit(B.Box(np.zeros(2), np.ones(2)), mc=MCConfig(200_000, seed=1), method="montecarlo")
    for j, want in enumerate([1.0, 4.0, math.pi]):
        assert within(fit.coefficient(j), want)


def test_quadrature_route_matches_exact_on_a_ball():
    fit = I.steiner_fit(B.Ball(np.zeros(3), 0.7), method="quadrature")
    want = [omega(3) * math.comb(3, j) * 0.7 ** (3 - j) for j in range(4)]
    assert fit.coeffs == pytest.approx(want, rel=1e-6)


def test_ill_conditioned_radii_are_rejected():
    with pytest.raises(I.SteinerConditionError):
        I.steiner_fit(B.Ellipsoid.axis_aligned(np.zeros(3), [1, 1, 2]), radii=[1.0, 1.0001, 1.0002, 1.0003],
                      method="quadrature")
    with pytest.raises(ValueError):
        I.steiner_fit(B.Ellipsoid.axis_aligned(np.zeros(2), [1, 2]), radii=[0.1, 0.2], method="quadrature")


@given(seeds, st.floats(0.3, 3.0))
def test_homogeneity_and_motion_invariance(seed, lam):
    rng = np.random.default_rng(seed)
    lo = rng.uniform(-1, 0, 3)
    K = B.Box(lo, lo + rng.uniform(0.2, 2, 3))
    base = [v.mean for v in I.intrinsic_volumes(K)]
    scaled = [v.mean for v in I.intrinsic_volumes(K.scale(lam))]
    assert scaled == pytest.approx([lam**i * b for i, b in enumerate(base)], rel=1e-9)
    R = special_ortho_group.rvs(3, random_state=seed % 2**32)
    moved = [v.mean for v in I.intrinsic_volumes(K.transform(R, rng.standard_normal(3)))]
    assert moved == pytest.approx(base, rel=1e-9)


@given(seeds, st.floats(0.05, 1.0))
def test_monotone_under_inclusion(seed, eps):
    V = np.random.default_rng(seed).standard_normal((8, 3))
    K = B.Polytope(V)
    L = B.Polytope(np.vstack([V, 1.3 * V]))  # K is a subset of L
    a = [v.mean for v in I.intrinsic_volumes(K)]
    b = [v.mean for v in I.intrinsic_volumes(L)]
    assert all(x <= y + 1e-9 for x, y in zip(a, b))


# --- curvature route -------------------------------------------------------------


def test_circle_and_sphere_curvature_integrals():
    assert I.curvature_intrinsic_volume(I.circle_boundary(1.0), 0) == pytest.approx(math.pi, rel=1e-10)
    assert I.curvature_intrinsic_volume(I.circle_boundary(1.0), 1) == pytest.approx(math.pi, rel=1e-10)
    for i in range(3):
        assert I.curvature_intrinsic_volume(I.sphere_boundary(1.0), i) == pytest.approx(4 * math.pi / 3, rel=1e-8)


def test_ellipse_perimeter_against_arc_length_integral():
    a, b = 2.0, 1.0
    arc, _ = integrate.quad(lambda t: math.hypot(a * math.sin(t), b * math.cos(t)), 0, 2 * math.pi, epsabs=1e-13)
    v1 = I.curvature_intrinsic_volume(I.ellipse_boundary(a, b), 1)
    ref = I.curvature_intrinsic_volume(I.circle_boundary(1.0), 1) / (2 * math.pi)  # V_1 per unit length
    assert v1 == pytest.approx(ref * arc, rel=1e-10)


def test_ellipse_two_routes_agree():
    E = B.Ellipsoid.axis_aligned(np.zeros(2), [2.0, 1.0])
    q = I.intrinsic_volumes(E, method="quadrature")
    for i in range(2):
        c = I.curvature_intrinsic_volume(I.ellipse_boundary(2.0, 1.0), i)
        assert abs(q[i].mean - c) / c < 1e-3


def test_ellipsoid_two_routes_agree():
    E = B.Ellipsoid.axis_aligned(np.zeros(3), [1.0, 1.0, 2.0])
    q = I.intrinsic_volumes(E, method="quadrature")
    for i in range(3):
        c = I.curvature_intrinsic_volume(I.ellipsoid_boundary(1.0, 1.0, 2.0), i)
        assert abs(q[i].mean - c) / c < 1e-3


def test_prolate_spheroid_surface_area_closed_form():
    # surface area of the spheroid (1, 1, 2): 2 pi (1 + c * asin(e) / e), e = sqrt(1 - 1/c^2)
    c = 2.0
    e = math.sqrt(1 - 1 / c**2)
    area = 2 * math.pi * (1 + c * math.asin(e) / e)
    v2 = I.curvature_intrinsic_volume(I.ellipsoid_boundary(1.0, 1.0, 2.0), 2)
    ball = I.curvature_intrinsic_volume(I.sphere_boundary(1.0), 2)
    assert v2 == pytest.approx(ball * area / (4 * math.pi), rel=1e-8)


def test_segment_boundary_in_one_dimension():
    assert I.curvature_intrinsic_volume(I.segment_boundary(0.0, 3.0), 0) == pytest.approx(2.0)


def test_negative_curvature_is_rejected():
    def h(t):
        return 1.0 + 0.5 * np.cos(2 * t)

    def dh(t):
        return -np.sin(2 * t)

    def d2h(t):
        return -2 * np.cos(2 * t)

    # h + h'' = 1 - 1.5 cos 2t is negative near t = 0: not a convex support function
    with pytest.raises(ValueError):
        I.curvature_intrinsic_volume(I.support_curve(h, dh, d2h), 0)


# --- Lambda --------------------------------------------------------------------


def _v(i):
    return lambda L: I.intrinsic_volume(L, i)


@pytest.mark.parametrize("K", [B.Box(np.zeros(2), np.ones(2)), B.Ball(np.zeros(2), 0.8),
                               B.Polytope(np.array([[0.0, 0.0], [1.0, 0.0], [0.0, 1.0]]))])
def test_lambda_v2_is_twice_v1(K):
    lam = I.lambda_apply(_v(2), K).value
    assert abs(lam - 2 * I.intrinsic_volume(K, 1).mean) < 1e-3


def test_lambda_kills_chi_and_v0():
    K = B.Box(np.zeros(2), np.ones(2))
    assert I.lambda_apply(lambda L: 1.0, K).value == pytest.approx(0.0, abs=1e-12)
    assert I.lambda_apply(_v(0), K).value == pytest.approx(0.0, abs=1e-9)


def test_lambda_lowers_degree_by_one():
    K = B.Box(np.zeros(3), np.array([1.0, 2.0, 0.5]))
    a = I.lambda_apply(_v(2), K).value
    b = I.lambda_apply(_v(2), K.scale(2.0)).value
    assert b == pytest.approx(2.0 * a, rel=1e-6)


def test_lambda_rejects_a_non_smooth_family():
    K = B.Ball(np.zeros(2), 1.0)

    def rough(L):
        eps = L.radius - 1.0 if isinstance(L, B.Ball) else 0.0
        return eps * math.sin(1.0 / eps) if eps > 0 else 0.0

    with pytest.raises(I.ExtrapolationError):
        I.lambda_apply(rough, K, h0=0.7, levels=6)


@pytest.mark.parametrize("n", [1, 2, 3, 4])
def test_lefschetz_powers_are_nonzero(n):
    bodies = [B.Box(np.zeros(n), np.ones(n)), B.Ball(np.zeros(n), 1.0)]
    M, spread = I.lambda_matrix(n, bodies)
    # Lambda V_i = c_i V_{i-1}: the realized ratio is the same on every body
    assert np.all(spread[np.arange(1, n + 1), np.arange(n)] < 1e-3)
    assert np.allclose(M, np.diag(np.diag(M, -1), -1))
    for k in range(n // 2 + 1, n + 1):
        assert abs(I.lefschetz_power(M, k)) > 1e-3
