from __future__ import annotations

import math

import numpy as np
import pytest
from hypothesis import given
from hypothesis import strategies as st
from scipy import stats
from scipy.spatial import ConvexHull

from vallab import bodies as B
from vallab import hermitian as H
from vallab import intrinsic as I
from vallab.mc import MCConfig

from conftest import within

seeds = st.integers(0, 2**31 - 1)
BALL = B.Ball(np.zeros(4), 1.0)
CUBE = B.Box(np.zeros(4), np.ones(4))
BOX = B.Box(np.zeros(4), np.array([1.0, 2.0, 0.5, 1.0]))


# --- complex structure and unitary sampling ---------------------------------------


@pytest.mark.parametrize("m", [1, 2, 3])
def test_complex_structure_squares_to_minus_one(m):
    J = H.ComplexStructure(m).J
    assert np.allclose(J @ J, -np.eye(2 * m)) and np.allclose(J.T @ J, np.eye(2 * m))


@given(seeds, st.integers(1, 4))
def test_unitaries_are_orthogonal_and_commute_with_j(seed, m):
    U = H.sample_unitary(m, np.random.default_rng(seed), 5)
    for R in U:
        assert np.allclose(R.T @ R, np.eye(2 * m), atol=1e-10)
        assert H.ComplexStructure(m).commutes(R)


def test_u1_phases_are_uniform():
    R = H.sample_unitary(1, np.random.default_rng(0), 100_000)
    theta = np.arctan2(R[:, 1, 0], R[:, 0, 0])
    assert stats.kstest(theta, stats.uniform(-math.pi, 2 * math.pi).cdf).pvalue > 0.01


def test_u2_entry_modulus_is_uniform():
    # for Haar U(2) the squared modulus of an entry is Beta(1, 1)
    R = H.sample_unitary(2, np.random.default_rng(1), 50_000)
    mod2 = R[:, 0, 0] ** 2 + R[:, 1, 0] ** 2
    assert stats.kstest(mod2, "uniform").pvalue > 0.01


def test_grassmann_planes_are_complex_and_offset_in_the_complement():
    planes, vols = H.sample_grassmann(CUBE, 1, np.random.default_rng(2), 20)
    J = B.complex_structure(2)
    for g in planes:
        E = g.subspace
        assert np.allclose(E.basis.T @ g.complement, 0, atol=1e-10)
        assert np.allclose(J @ E.basis, E.basis @ (E.basis.T @ J @ E.basis), atol=1e-10)
    assert np.all(vols > 0)


def test_valid_p_ranges():
    assert H.basis_dimensions(2) == [1, 1, 2, 1, 1]
    assert H.basis_dimensions(3) == [1, 1, 2, 2, 2, 1, 1]
    with pytest.raises(ValueError):
        H.valid_p(5, 2)


# --- projected volumes ------------------------------------------------------------------


@given(seeds)
def test_projected_area_matches_hull_of_projected_vertices(seed):
    rng = np.random.default_rng(seed)
    K = B.Box(np.zeros(4), rng.uniform(0.2, 2.0, 4))
    C = H.sample_unitary(2, rng, 6)[:, :, 2:]
    V = K.to_polytope().vertices
    want = [ConvexHull(V @ c).volume for c in C]
    assert H.projected_volume(K, C) == pytest.approx(want, rel=1e-9)


@given(seeds)
def test_projected_area_of_polydisk_against_support_polygon(seed):
    rng = np.random.default_rng(seed)
    K = B.Product((B.Ball(np.zeros(2), 1.0), B.Ball(np.zeros(2), 0.5)))
    C = H.sample_unitary(2, rng, 3)[:, :, 2:]
    # oracle: area of the polygon of support points on a fine circle of directions
    t = np.linspace(0, 2 * np.pi, 20_000, endpoint=False)
    U = np.column_stack([np.cos(t), np.sin(t)])
    for c, got in zip(C, H.projected_volume(K, C)):
        P = K.support_point(U @ c.T) @ c
        assert got == pytest.approx(ConvexHull(P).volume, rel=1e-6)


# --- U_{k,p} identities ---------------------------------------------------------------


def test_p_zero_is_the_intrinsic_volume():
    for k in range(5):
        assert H.u_kp(BOX, k, 0).mean == I.intrinsic_volume(BOX, k).mean


@pytest.mark.parametrize("r", [1.0, 0.7])
def test_u21_of_ball(r):
    # V_0 of a planar slice is pi, integrated over the projected disk of area pi r^2
    est = H.u_kp(B.Ball(np.zeros(4), r), 2, 1, MCConfig(200_000, seed=3))
    assert within(est, math.pi**2 * r**2)


def test_u31_of_ball_by_fubini():
    # slices at distance s are disks of radius sqrt(1 - s^2) with V_1 = pi sqrt(1 - s^2);
    # integrating over the complementary plane gives 2 pi^2 / 3
    est = H.u_kp(BALL, 3, 1, MCConfig(4_000, seed=4))
    assert within(est, 2 * math.pi**2 / 3)


@pytest.mark.parametrize("K", [CUBE, BOX])
def test_top_degree_slices_integrate_to_volume(K):
    # area of the slices integrated over the complement is the volume (Fubini)
    assert within(H.u_kp(K, 4, 1, MCConfig(2_000, seed=5)), B.volume(K).mean)
    assert H.u_kp(K, 4, 2, MCConfig(1000, seed=5), "projection").mean == pytest.approx(B.volume(K).mean)


def test_slice_and_projection_estimators_agree():
    a = H.u_kp(BOX, 2, 1, MCConfig(50_000, seed=6), "slice")
    b = H.u_kp(BOX, 2, 1, MCConfig(50_000, seed=7), "projection")
    assert within(a, b)


@pytest.mark.parametrize("k,p,samples", [(2, 1, 50_000), (3, 1, 3_000)])
def test_homogeneity_under_scaling(k, p, samples):
    est = "projection" if k == 2 * p else "slice"
    a = H.u_kp(BOX, k, p, MCConfig(samples, seed=8), est)
    b = H.u_kp(BOX.scale(2.0), k, p, MCConfig(samples, seed=9), est)
    assert within(b, 2**k * a)


def test_unitary_motion_invariance():
    rng = np.random.default_rng(10)
    g = H.unitary_motion(2, rng)
    moved = g.apply(BOX)
    a = H.u_kp(BOX, 2, 1, MCConfig(50_000, seed=11), "projection")
    b = H.u_kp(moved, 2, 1, MCConfig(50_000, seed=12), "projection")
    assert within(a, b)
    c = H.u_kp(moved, 2, 1, MCConfig(50_000, seed=13), "slice")
    assert within(a, c)


def test_even_parity():
    a = H.u_kp(BOX, 2, 1, MCConfig(50_000, seed=14), "projection")
    b = H.u_kp(BOX.reflect(), 2, 1, MCConfig(50_000, seed=15), "projection")
    assert within(a, b)


def test_polydisk_is_not_a_multiple_of_v2():
    # U_{2,1} / V_2 is the same for every unitarily symmetric body; the polydisk differs from the ball
    mc = MCConfig(100_000, seed=16)
    poly = B.Product((B.Ball(np.zeros(2), 1.0), B.Ball(np.zeros(2), 1.0)))
    ra = H.u_kp(BALL, 2, 1, mc, "projection") / I.intrinsic_volume(BALL, 2).mean
    v2 = I.intrinsic_volume(poly, 2).mean
    rb = H.u_kp(poly, 2, 1, mc.child(1), "projection") / v2
    assert not within(ra, rb, sigmas=5)


def test_invalid_arguments():
    with pytest.raises(ValueError):
        H.u_kp(CUBE, 2, 2)
    with pytest.raises(ValueError):
        H.u_kp(CUBE, 3, 1, estimator="projection")
    with pytest.raises(B.DimensionError):
        H.u_kp(B.Box(np.zeros(3), np.ones(3)), 2, 1)


# --- basis rank ---------------------------------------------------------------------------


def test_ranks_of_the_hermitian_basis():
    fam = H.default_family(2)
    ranks = [H.basis_rank(k, 2, fam, MCConfig(50_000, seed=17)).rank for k in range(5)]
    assert ranks == [1, 1, 2, 1, 1]


def test_rank_two_on_polydisk_ball_cube():
    disk = B.Ball(np.zeros(2), 1.0)
    fam = [B.Product((disk, B.Box(np.zeros(2), np.ones(2)))), BALL, CUBE]
    res = H.basis_rank(2, 2, fam, MCConfig(50_000, seed=18))
    assert res.independent and res.rank == 2


def test_unitarily_symmetric_family_is_rank_deficient():
    fam = [B.Ball(np.zeros(4), r) for r in (0.5, 1.0, 1.5)]
    assert H.basis_rank(2, 2, fam, MCConfig(20_000, seed=19)).rank == 1
