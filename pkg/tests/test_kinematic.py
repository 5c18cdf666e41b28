from __future__ import annotations

import math

import numpy as np
import pytest
from hypothesis import given
from hypothesis import strategies as st
from scipy.stats import special_ortho_group

from vallab import bodies as B
from vallab import hermitian as H
from vallab import kinematic as KM
from vallab.mc import MCConfig

from conftest import within


def omega(n):
    return math.pi ** (n / 2) / math.gamma(n / 2 + 1)


def ball(n, r=1.0, c=None):
    return B.Ball(np.zeros(n) if c is None else np.asarray(c, float), r)


SQ = B.Box(np.zeros(2), np.ones(2))
ISO2 = KM.MotionMeasure.iso(2)


# --- kinematic integrals with closed forms --------------------------------------


def test_two_unit_disks():
    # the center of the moving disk must land within distance 2: pi * 2^2
    assert within(KM.kinematic_integral(ball(2), ball(2), ISO2, MCConfig(200_000, seed=1)), 4 * math.pi)


def test_disk_and_point():
    r = 0.8
    est = KM.kinematic_integral(ball(2, r), B.point([3.0, -1.0]), ISO2, MCConfig(200_000, seed=2))
    assert within(est, math.pi * r * r)


def test_two_unit_balls_in_space():
    est = KM.kinematic_integral(ball(3), ball(3), KM.MotionMeasure.iso(3), MCConfig(100_000, seed=3))
    assert within(est, 4 / 3 * math.pi * 8)


def test_square_and_point_is_area():
    est = KM.kinematic_integral(SQ, B.point([0.0, 0.0]), ISO2, MCConfig(100_000, seed=4))
    assert within(est, 1.0)


def test_square_and_small_disk_is_parallel_area():
    # a disk of radius r meets Q iff its center lies in Q + rD
    r = 0.3
    est = KM.kinematic_integral(SQ, ball(2, r, [5.0, 5.0]), ISO2, MCConfig(200_000, seed=5))
    assert within(est, 1 + 4 * r + math.pi * r * r)


def test_unitary_motions_on_balls():
    est = KM.kinematic_integral(ball(4, 0.5), ball(4, 1.0), KM.MotionMeasure.iu(2), MCConfig(100_000, seed=6))
    assert within(est, omega(4) * 1.5**4)


def test_one_dimensional_segments():
    a, b = B.Polytope(np.array([[0.0], [1.0]])), B.Polytope(np.array([[0.0], [0.5]]))
    est = KM.kinematic_integral(a, b, KM.MotionMeasure.iso(1), MCConfig(50_000, seed=7))
    assert within(est, 1.5)


# --- invariances ---------------------------------------------------------------------


def test_invariant_under_moving_the_fixed_body():
    tri = B.Polytope(np.array([[0.0, 0.0], [2.0, 0.0], [0.3, 1.0]]))
    moved = tri.transform(special_ortho_group.rvs(2, random_state=1), [4.0, -2.0])
    a = KM.kinematic_integral(tri, SQ, ISO2, MCConfig(100_000, seed=8))
    b = KM.kinematic_integral(moved, SQ, ISO2, MCConfig(100_000, seed=9))
    assert within(a, b)


def test_iu_invariant_under_unitary_motion():
    A = B.Box(np.zeros(4), np.array([1.0, 0.5, 1.0, 0.5]))
    Bd = ball(4, 0.4)
    g = H.unitary_motion(2, np.random.default_rng(3))
    iu = KM.MotionMeasure.iu(2)
    a = KM.kinematic_integral(A, Bd, iu, MCConfig(50_000, seed=10))
    b = KM.kinematic_integral(g.apply(A), Bd, iu, MCConfig(50_000, seed=11))
    assert within(a, b)


def test_swap_symmetry():
    tri = B.Polytope(np.array([[0.0, 0.0], [2.0, 0.0], [0.3, 1.0]]))
    a = KM.kinematic_integral(tri, SQ, ISO2, MCConfig(100_000, seed=12))
    b = KM.kinematic_integral(SQ, tri, ISO2, MCConfig(100_000, seed=13))
    assert within(a, b)


def test_window_validation_happens_before_sampling():
    small = KM.MotionMeasure.iso(2, window=([0.0, 0.0], [1.0, 1.0]))
    with pytest.raises(KM.WindowError):
        KM.kinematic_integral(SQ, ball(2), small, MCConfig(10, seed=0))
    big = KM.MotionMeasure.iso(2, window=([-5.0, -5.0], [6.0, 6.0]))
    assert within(KM.kinematic_integral(SQ, B.point([0.0, 0.0]), big, MCConfig(200_000, seed=1)), 1.0)


def test_bad_measures():
    with pytest.raises(B.DimensionError):
        KM.MotionMeasure("IU", 3)
    with pytest.raises(ValueError):
        KM.MotionMeasure("SL", 2)
    with pytest.raises(B.DimensionError):
        KM.kinematic_integral(SQ, ball(3), ISO2)


# --- principal kinematic constants ------------------------------------------------------


@pytest.mark.parametrize("n", [1, 2, 3, 4, 5])
def test_kappa_from_binomial_expansion(n):
    # omega_n (r + s)^n = sum_k C(n, k) r^k s^(n-k) omega_n and V_k(B_r) = omega_n r^k
    table = KM.derive_kappa(n)
    want = [math.comb(n, k) / omega(n) for k in range(n + 1)]
    assert table.kappa == pytest.approx(want, rel=1e-9)
    assert table.residual < 1e-10
    assert table.kappa == pytest.approx(table.kappa[::-1], rel=1e-10)


def test_kappa_in_the_plane():
    assert math.pi * KM.derive_kappa(2).kappa == pytest.approx([1, 2, 1])


@given(st.lists(st.tuples(st.floats(0.1, 3), st.floats(0.1, 3)), min_size=4, max_size=8))
def test_kappa_reproduces_the_ball_system(pairs):
    ratios = {round(r / s, 6) for r, s in pairs}
    if len(ratios) < 4:
        with pytest.raises(np.linalg.LinAlgError):
            KM.derive_kappa(3, pairs)
        return
    t = KM.derive_kappa(3, pairs)
    r, s = np.array(pairs).T
    pred = sum(t.kappa[k] * omega(3) * r**k * omega(3) * s ** (3 - k) for k in range(4))
    assert pred == pytest.approx(omega(3) * (r + s) ** 3, rel=1e-8)


def test_singular_ball_system():
    with pytest.raises(np.linalg.LinAlgError):
        KM.derive_kappa(2, [[1.0, 1.0], [2.0, 2.0], [0.5, 0.5]])


def test_kappa_crosscheck():
    t = KM.derive_kappa(2, crosscheck_mc=MCConfig(100_000, seed=3))
    assert t.crosscheck is not None and t.crosscheck.passed


def test_principal_formula_on_planar_pairs():
    tri = B.Polytope(np.array([[0.0, 0.0], [2.0, 0.0], [0.3, 1.0]]))
    for A, Bd in [(ball(2), ball(2)), (SQ, ball(2, 0.5)), (tri, SQ)]:
        assert KM.principal_kinematic_check(A, Bd, mc=MCConfig(100_000, seed=4)).passed


def test_principal_formula_degenerates_to_volume_for_a_point():
    kappa = KM.derive_kappa(3)
    cube = B.Box(np.zeros(3), np.ones(3))
    rhs = KM.principal_rhs(cube, B.point(np.zeros(3)), kappa)
    assert rhs.mean == pytest.approx(1.0, rel=1e-9)


def test_mismatched_kappa_table():
    with pytest.raises(KeyError):
        KM.principal_kinematic_check(SQ, ball(2), kappa=KM.derive_kappa(3), mc=MCConfig(10, 0))


# --- Hermitian kinematic fit ------------------------------------------------------------


def test_hermitian_indices():
    ix = KM.hermitian_indices(2)
    assert len(ix) == 8 and all(k1 + k2 == 4 for k1, k2, _, _ in ix)
    assert (2, 2, 1, 1) in ix and (1, 3, 0, 0) in ix


@pytest.fixture(scope="module")
def small_fit():
    return KM.fit_hermitian_constants(mc=MCConfig(30_000, seed=21), profile_mc=MCConfig(50_000, seed=22))


def test_fit_is_well_conditioned_and_validates(small_fit):
    fit = small_fit
    assert fit.condition < KM.MAX_CONDITION
    assert fit.holdout_relative < KM.HOLDOUT_TOLERANCE
    assert fit.symmetry_passed and fit.balls_passed
    assert len(fit.training) == 24 and len(fit.holdout) == 4


def test_fit_reproduces_the_real_formula_on_balls(small_fit):
    # on balls U_{k,p} = c_{k,p} V_k, so the fitted constants must collapse onto the real ones
    real = KM.derive_kappa(4)
    for c in small_fit.ball_checks:
        assert c.passed
        r, s = c.radii
        assert c.principal == pytest.approx(omega(4) * (r + s) ** 4, rel=1e-9)
        assert real.residual < 1e-10


def test_fit_predicts_scaled_pairs(small_fit):
    # U_{k,p}(lambda K) = lambda^k U_{k,p}(K); the prediction is bilinear in the profiles
    fam = KM.symmetry_breaking_family()
    A, Bd, lam = fam["cube"], fam["complex_slab"], 0.6
    pa = KM.hermitian_profile(A, MCConfig(50_000, seed=23))
    pb = KM.hermitian_profile(Bd, MCConfig(50_000, seed=24))
    pb_scaled = {kp: v * lam ** kp[0] for kp, v in pb.items()}
    pred, err = small_fit.predict(pa, pb_scaled)
    lhs = KM.kinematic_integral(A, Bd.scale(lam), KM.MotionMeasure.iu(2), MCConfig(30_000, seed=25))
    assert abs(lhs.mean - pred) <= 3 * math.hypot(lhs.stderr, err)


def test_fit_json_carries_conventions(small_fit):
    doc = small_fit.to_json()
    assert doc["conventions"] == KM.CONVENTIONS
    assert len(doc["constants"]) == 8


def test_unitarily_symmetric_pairs_are_ill_conditioned():
    balls = [ball(4, r) for r in (0.4, 0.6, 0.8, 1.0, 1.2)]
    pairs = [(a, b) for a in balls for b in balls][:16]
    hold = pairs[:3]
    with pytest.raises(KM.FitConditionError):
        KM.fit_hermitian_constants(pairs, MCConfig(2_000, seed=1), hold, profile_mc=MCConfig(2_000, seed=2))


def test_too_few_pairs():
    fam = KM.symmetry_breaking_family()
    pairs = [(fam["cube"], fam["ball"])] * 5
    with pytest.raises(ValueError):
        KM.fit_hermitian_constants(pairs, MCConfig(100, 0), pairs[:3])
