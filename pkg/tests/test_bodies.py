from __future__ import annotations

import math

import numpy as np
import pytest
from hypothesis import given
from hypothesis import strategies as st
from scipy.spatial import ConvexHull
from scipy.stats import special_ortho_group

from vallab import bodies as B
from vallab.mc import MCConfig

from conftest import within


def _rot(n, seed):
    return special_ortho_group.rvs(n, random_state=seed) if n > 1 else np.eye(1)


seeds = st.integers(0, 2**31 - 1)


def _random_body(n, seed):
    rng = np.random.default_rng(seed)
    kind = seed % 4
    if kind == 0:
        lo = rng.uniform(-1, 0, n)
        return B.Box(lo, lo + rng.uniform(0.2, 2, n))
    if kind == 1:
        return B.Ball(rng.uniform(-1, 1, n), rng.uniform(0.1, 2))
    if kind == 2:
        return B.Ellipsoid(rng.uniform(-1, 1, n), _rot(n, seed) @ np.diag(rng.uniform(0.1, 2, n)) @ _rot(n, seed).T)
    return B.Polytope(rng.standard_normal((n + 6, n)))


# --- support functions -------------------------------------------------------


def test_cube_support_is_vertex_maximum():
    cube = B.Box(-np.ones(3), np.ones(3)).to_polytope()
    assert cube.support([1.0, 0.0, 0.0]) == pytest.approx(1.0)
    u = np.array([0.3, -0.5, 0.8])
    assert cube.support(u) == pytest.approx(np.abs(u).sum())


def test_ball_support_is_radius(rng):
    u = rng.standard_normal(3)
    assert B.Ball(np.zeros(3), 1.7).support(u / np.linalg.norm(u)) == pytest.approx(1.7)


@given(seeds, seeds, st.integers(2, 4))
def test_support_is_sublinear_and_additive(s1, s2, n):
    K, L = _random_body(n, s1), _random_body(n, s2)
    rng = np.random.default_rng(s1 ^ s2)
    U, V = rng.standard_normal((20, n)), rng.standard_normal((20, n))
    c = rng.uniform(0, 3, 20)[:, None]
    hK = K.support
    assert np.all(hK(U + V) <= hK(U) + hK(V) + 1e-9)
    assert np.allclose(hK(c * U), c[:, 0] * hK(U), atol=1e-9)
    S = B.minkowski_sum(K, L)
    assert np.allclose(S.support(U), hK(U) + L.support(U), atol=1e-9)


@given(seeds, st.integers(2, 4))
def test_polytope_support_matches_vertex_maximum(seed, n):
    rng = np.random.default_rng(seed)
    V = rng.standard_normal((n + 5, n))
    U = rng.standard_normal((30, n))
    assert np.allclose(B.Polytope(V).support(U), (U @ V.T).max(axis=1))


# --- membership and projections --------------------------------------------


def test_membership_examples():
    assert B.Ball(np.zeros(3), 1.0).contains(np.zeros(3))
    assert not B.Ball(np.zeros(2), 1.0).contains([2.0, 0.0])


def test_parallel_body_membership_is_distance_threshold(rng):
    sq = B.Box(np.zeros(2), np.ones(2))
    eps = 0.35
    P = B.parallel_body(sq, eps)
    X = rng.uniform(-1, 2, (1000, 2))
    # independent oracle: distance to the unit square by clipping
    dist = np.linalg.norm(X - np.clip(X, 0, 1), axis=1)
    away = np.abs(dist - eps) > 1e-7
    assert np.array_equal(P.contains(X)[away], (dist <= eps)[away])


@given(seeds, st.integers(2, 4))
def test_projection_satisfies_obtuse_angle_criterion(seed, n):
    K = _random_body(n, seed)
    rng = np.random.default_rng(seed + 1)
    X = 3 * rng.standard_normal((10, n))
    P = K.project(X)
    U = rng.standard_normal((40, n))
    Y = K.support_point(U)
    # <x - P x, y - P x> <= 0 for every y in K
    inner = np.einsum("ij,kj->ik", X - P, Y) - np.einsum("ij,ij->i", X - P, P)[:, None]
    assert inner.max() <= 1e-6 * (1 + np.abs(X).max() ** 2)


def test_box_projection_matches_clipping(rng):
    lo, hi = np.array([0.0, -1.0, 2.0]), np.array([1.0, 1.0, 2.5])
    X = rng.uniform(-3, 4, (200, 3))
    assert np.allclose(B.Box(lo, hi).project(X), np.clip(X, lo, hi))


# --- Hausdorff distance ----------------------------------------------------


def test_hausdorff_examples():
    assert B.hausdorff_distance(B.Ball(np.zeros(2), 0.5), B.Ball(np.zeros(2), 1.25)) == pytest.approx(0.75)
    K = B.Box(np.zeros(2), np.ones(2))
    assert B.hausdorff_distance(K, K) == 0.0


def test_hausdorff_square_vs_inscribed_disk_against_dense_sweep():
    sq, disk = B.Box(-0.5 * np.ones(2), 0.5 * np.ones(2)), B.Ball(np.zeros(2), 0.5)
    t = np.linspace(0, 2 * np.pi, 200_001)
    sweep = np.max(0.5 * (np.abs(np.cos(t)) + np.abs(np.sin(t))) - 0.5)
    est = [B.hausdorff_distance(sq, disk, n) for n in (64, 256, 1024, 4096)]
    assert all(a <= b + 1e-15 for a, b in zip(est, est[1:]))  # nested directions
    assert est[-1] <= sweep + 1e-12
    assert est[-1] == pytest.approx(sweep, rel=1e-4)


@given(seeds, seeds, seeds, st.integers(2, 3))
def test_hausdorff_triangle_inequality(s1, s2, s3, n):
    K, L, M = (_random_body(n, s) for s in (s1, s2, s3))
    d = B.hausdorff_distance
    assert d(K, M, 512) <= d(K, L, 512) + d(L, M, 512) + 1e-9


# --- volume -------------------------------------------------------------------


def test_volume_closed_forms():
    assert B.volume(B.Box(np.zeros(3), np.ones(3))).mean == pytest.approx(1.0)
    assert B.volume(B.Ball(np.zeros(2), 1.0)).mean == pytest.approx(math.pi)
    assert B.volume(B.Ellipsoid.axis_aligned(np.zeros(3), [1, 1, 2])).mean == pytest.approx(8 * math.pi / 3)


def test_volume_of_rounded_square_by_monte_carlo():
    S = B.parallel_body(B.Box(np.zeros(2), np.ones(2)), 1.0)
    est = B.volume(S, "montecarlo", MCConfig(200_000, seed=4))
    assert within(est, 1 + 4 + math.pi)


def test_volume_quadrature_matches_closed_form():
    E = B.Ellipsoid.axis_aligned(np.zeros(3), [1.0, 0.5, 2.0])
    assert B.volume(E, "quadrature").mean == pytest.approx(4 * math.pi / 3, rel=1e-6)


@given(seeds, st.integers(2, 4))
def test_polytope_volume_matches_qhull(seed, n):
    V = np.random.default_rng(seed).standard_normal((n + 6, n))
    assert B.volume(B.Polytope(V)).mean == pytest.approx(ConvexHull(V).volume, rel=1e-9)


@given(seeds, st.integers(2, 4), st.floats(0.2, 3.0))
def test_volume_scaling_and_motion_invariance(seed, n, lam):
    K = _random_body(n, seed)
    v = B.volume(K).mean
    assert B.volume(K.scale(lam)).mean == pytest.approx(lam**n * v, rel=1e-9)
    M = K.transform(_rot(n, seed), np.random.default_rng(seed).standard_normal(n))
    assert B.volume(M).mean == pytest.approx(v, rel=1e-9)


@given(seeds, st.integers(2, 3))
def test_hausdorff_is_motion_invariant(seed, n):
    K, L = _random_body(n, seed), _random_body(n, seed + 7)
    R, t = _rot(n, seed), np.ones(n)
    a = B.hausdorff_distance(K, L, 2048)
    b = B.hausdorff_distance(K.transform(R, t), L.transform(R, t), 2048)
    # both are direction samples of the same supremum; they agree up to sampling
    assert b == pytest.approx(a, rel=0.05, abs=1e-9)


# --- slices -------------------------------------------------------------------


def test_ball_slice_is_pythagorean():
    t = 0.6
    E = B.AffineSubspace(np.array([0.0, 0.0, t]), np.eye(3)[:, :2])
    s = B.slice_body(B.Ball(np.zeros(3), 1.0), E)
    assert isinstance(s, B.Ball) and s.radius == pytest.approx(math.sqrt(1 - t * t))


def test_cube_slice_through_center_is_square():
    sq = B.slice_body(B.Box(-np.ones(3), np.ones(3)), B.AffineSubspace(np.zeros(3), np.eye(3)[:, :2]))
    assert B.hausdorff_distance(sq, B.Box(-np.ones(2), np.ones(2))) < 1e-9


def test_missed_slice_is_empty():
    E = B.AffineSubspace(np.array([0.0, 0.0, 3.0]), np.eye(3)[:, :2])
    assert B.slice_body(B.Ball(np.zeros(3), 1.0), E).is_empty
    assert not B.slice_nonempty(B.Ball(np.zeros(3), 1.0), E)


@given(seeds)
def test_polytope_slice_membership_round_trip(seed):
    rng = np.random.default_rng(seed)
    V = rng.standard_normal((12, 4))
    K = B.Polytope(V)
    Q, _ = np.linalg.qr(rng.standard_normal((4, 2)))
    E = B.AffineSubspace(0.2 * rng.standard_normal(4), Q)
    S = B.slice_body(K, E)
    eq = ConvexHull(V).equations
    Y = rng.uniform(-3, 3, (400, 2))
    X = E.embed(Y)
    inside = (X @ eq[:, :-1].T + eq[:, -1]).max(axis=1)
    clear = np.abs(inside) > 1e-7
    got = np.zeros(len(Y), bool) if S.is_empty else S.contains(Y)
    assert np.array_equal(got[clear], (inside <= 0)[clear])


def test_polytope_slice_area_against_qhull():
    rng = np.random.default_rng(3)
    V = rng.standard_normal((15, 4))
    E = B.AffineSubspace(np.zeros(4), np.eye(4)[:, :2])
    S = B.slice_body(B.Polytope(V), E)
    eq = ConvexHull(V).equations
    # membership oracle on a fine grid of the plane
    g = np.linspace(-3, 3, 1201)
    X, Y = np.meshgrid(g, g)
    P = np.column_stack([X.ravel(), Y.ravel(), np.zeros(X.size), np.zeros(X.size)])
    area = ((P @ eq[:, :-1].T + eq[:, -1]).max(axis=1) <= 0).sum() * (g[1] - g[0]) ** 2
    assert B.volume(S).mean == pytest.approx(area, rel=0.01)


# --- intersection tests --------------------------------------------------------


def test_disk_intersection_examples():
    d = B.Ball(np.zeros(2), 1.0)
    assert B.intersect_nonempty(d, B.Ball(np.array([1.5, 0.0]), 1.0))
    assert not B.intersect_nonempty(d, B.Ball(np.array([2.5, 0.0]), 1.0))


def test_random_square_translates_hitting_disk():
    # P(square + t meets disk) = area(square + (-disk)) / window area
    rng = np.random.default_rng(8)
    sq = B.Box(np.zeros(2), np.ones(2)).to_polytope()
    r = 0.4
    disk = B.Ball(np.zeros(2), r)
    T = rng.uniform(-2, 2, (3000, 2))
    hits = np.array([B.intersect_nonempty(sq.translate(t), disk) for t in T])
    p = (1 + 4 * r + math.pi * r * r) / 16
    se = math.sqrt(p * (1 - p) / len(T))
    assert abs(hits.mean() - p) <= 3 * se


@given(seeds, st.integers(2, 4))
def test_intersection_agrees_with_distance_for_polytope_pairs(seed, n):
    rng = np.random.default_rng(seed)
    P = B.Polytope(rng.standard_normal((n + 4, n)))
    Q = B.Polytope(rng.standard_normal((n + 4, n)) + rng.uniform(-3, 3, n))
    # oracle: LP feasibility of a common convex combination
    from scipy.optimize import linprog
    m1, m2 = len(P.vertices), len(Q.vertices)
    A_eq = np.vstack([np.hstack([P.vertices.T, -Q.vertices.T]),
                      np.r_[np.ones(m1), np.zeros(m2)], np.r_[np.zeros(m1), np.ones(m2)]])
    b_eq = np.r_[np.zeros(n), 1.0, 1.0]
    lp = linprog(np.zeros(m1 + m2), A_eq=A_eq, b_eq=b_eq, bounds=(0, None), method="highs")
    try:
        got = B.intersect_nonempty(P, Q)
    except B.ConvergenceError:
        return  # nearly tangent pair; the bracket is reported instead of a guess
    assert got == (lp.status == 0)


def test_unresolved_test_reports_bracket():
    sq = B.Box(np.zeros(2), np.ones(2)).to_polytope()
    far = B.Polytope(np.array([[1 + 1e-7, 0.5], [3.0, 0.0], [3.0, 5.0]]))
    with pytest.raises(B.ConvergenceError) as info:
        B.alternating_gap_test(lambda X, i: sq._project(X), lambda U, i: sq._support(U),
                               lambda X, i: far._project(X), lambda U, i: far._support(U),
                               np.array([[3.0, 5.0]]), max_iter=1)
    lo, hi = info.value.gap_bounds
    assert 0.0 <= lo <= 1e-7 <= hi


# --- minimum-norm subproblem ---------------------------------------------------


@given(seeds, st.integers(1, 4), st.integers(1, 6))
def test_min_norm_hull_matches_face_enumeration(seed, d, m):
    W = np.random.default_rng(seed).standard_normal((m, d)) + 0.5
    p, _ = B._min_norm_hull(W)
    q, _ = B._min_norm_enumerate(W)
    assert np.linalg.norm(p) == pytest.approx(np.linalg.norm(q), abs=1e-9)
    assert np.all(W @ p >= p @ p - 1e-9)


@given(seeds, st.integers(2, 4))
def test_gjk_distance_bracket_contains_true_distance(seed, n):
    rng = np.random.default_rng(seed)
    ball = B.Ball(rng.standard_normal(n), rng.uniform(0.2, 1.5))
    z = 3 * rng.standard_normal(n)
    true = max(0.0, np.linalg.norm(z - ball.center) - ball.radius)
    if abs(true) < 1e-6:
        return
    hit, lo, hi = B.gjk_decide(ball.support_point, z)
    assert hit == (true <= B.DEFAULT_TOL)
    assert lo - 1e-9 <= true


# --- serialization ---------------------------------------------------------------


@given(seeds, st.integers(2, 4))
def test_json_round_trip_preserves_support(seed, n):
    K = _random_body(n, seed)
    L = B.body_from_json(K.to_json())
    U = B.direction_set(n, 50)
    assert np.allclose(K.support(U), L.support(U))


def test_dimension_mismatch_raises():
    with pytest.raises(B.DimensionError):
        B.minkowski_sum(B.Ball(np.zeros(2), 1.0), B.Ball(np.zeros(3), 1.0))


@pytest.mark.parametrize("gap", [1e-6, 1e-9, 1e-11])
def test_min_norm_hull_resolves_tiny_gaps(gap):
    Q = special_ortho_group.rvs(4, random_state=1)
    W = np.array([[1.0, 0.3, 0.0, gap], [-1.0, 0.2, 0.0, gap], [0.0, -0.5, 0.0, gap], [0.0, 0.1, 2.0, gap + 1.0]])
    W = W @ Q.T  # a rotation keeps the distance at `gap`
    p, _ = B._min_norm_hull(W)
    assert np.linalg.norm(p) == pytest.approx(gap, rel=1e-4)
