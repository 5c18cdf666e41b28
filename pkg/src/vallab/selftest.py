"""Quick closed-form checks across all modules, run by ``vallab selftest``.

Each check returns (passed, detail).  Budgets are small; the full suites
live in the test directory.
"""
from __future__ import annotations

import math
from dataclasses import dataclass
from typing import Callable

import numpy as np

from . import bodies as B
from . import hermitian as H
from . import intrinsic as I
from . import kinematic as KM
from . import valgebra as VA
from .mc import MCConfig


@dataclass(frozen=True)
class CheckResult:
    name: str
    passed: bool
    detail: str

    def to_json(self) -> dict:
        return {"name": self.name, "passed": self.passed, "detail": self.detail}


def _close(a: float, b: float, tol: float = 1e-9) -> tuple[bool, str]:
    return abs(a - b) <= tol * max(1.0, abs(b)), f"{a!r} vs {b!r}"


def _support(seed):
    cube = B.Box(-np.ones(3), np.ones(3)).to_polytope()
    return _close(cube.support([1.0, 0.0, 0.0]), 1.0)


def _ball_support(seed):
    u = np.random.default_rng(seed).standard_normal(3)
    return _close(B.Ball(np.zeros(3), 1.7).support(u / np.linalg.norm(u)), 1.7)


def _minksum_support(seed):
    A = B.Box(np.zeros(3), np.array([1.0, 2.0, 0.5]))
    Bb = B.Ball(np.ones(3), 0.3)
    U = B.direction_set(3, 100)
    err = float(np.abs(B.minkowski_sum(A, Bb).support(U) - A.support(U) - Bb.support(U)).max())
    return err < 1e-12, f"max error {err:.2e}"


def _membership(seed):
    inside = B.Ball(np.zeros(3), 1.0).contains(np.zeros(3))
    outside = B.Ball(np.zeros(2), 1.0).contains([2.0, 0.0])
    return inside and not outside, f"origin {inside}, (2,0) {outside}"


def _hausdorff(seed):
    d = B.hausdorff_distance(B.Ball(np.zeros(2), 0.5), B.Ball(np.zeros(2), 1.25))
    K = B.Box(np.zeros(2), np.ones(2))
    ok = abs(d - 0.75) < 1e-12 and B.hausdorff_distance(K, K) == 0.0
    return ok, f"d(B_.5, B_1.25) = {d}"


def _volumes(seed):
    cube = B.volume(B.Box(np.zeros(3), np.ones(3))).mean
    disk = B.volume(B.Ball(np.zeros(2), 1.0)).mean
    return abs(cube - 1) < 1e-12 and abs(disk - math.pi) < 1e-12, f"cube {cube}, disk {disk}"


def _slices(seed):
    t = 0.6
    E = B.AffineSubspace(np.array([0.0, 0.0, t]), np.eye(3)[:, :2])
    s = B.slice_body(B.Ball(np.zeros(3), 1.0), E)
    r = B.hausdorff_distance(s, B.Ball(np.zeros(2), math.sqrt(1 - t * t)))
    sq = B.slice_body(B.Box(-np.ones(3), np.ones(3)), B.AffineSubspace(np.zeros(3), np.eye(3)[:, :2]))
    h = B.hausdorff_distance(sq, B.Box(-np.ones(2), np.ones(2)))
    return r < 1e-9 and h < 1e-9, f"ball slice error {r:.2e}, cube slice error {h:.2e}"


def _disk_pairs(seed):
    d = B.Ball(np.zeros(2), 1.0)
    near = B.intersect_nonempty(d, B.Ball(np.array([1.5, 0.0]), 1.0))
    far = B.intersect_nonempty(d, B.Ball(np.array([2.5, 0.0]), 1.0))
    return near and not far, f"1.5 apart {near}, 2.5 apart {far}"


def _point_steiner(seed):
    fit = I.steiner_fit(B.point(np.zeros(3)))
    want = np.zeros(4)
    want[3] = B.unit_ball_volume(3)
    err = float(np.abs(fit.coeffs - want).max())
    return err < 1e-12, f"coefficients {fit.coeffs.tolist()}"


def _homogeneity(seed):
    K = B.Box(np.zeros(3), np.array([1.0, 2.0, 0.5]))
    v1 = [v.mean for v in I.intrinsic_volumes(K)]
    v2 = [v.mean for v in I.intrinsic_volumes(K.scale(2.0))]
    err = max(abs(b - 2**k * a) / max(1.0, abs(b)) for k, (a, b) in enumerate(zip(v1, v2)))
    return err < 1e-12, f"max relative error {err:.2e}"


def _lambda_low(seed):
    K = B.Box(np.zeros(2), np.ones(2))
    chi = I.lambda_apply(lambda L: 1.0, K).value
    v0 = I.lambda_apply(lambda L: I.intrinsic_volume(L, 0), K).value
    return abs(chi) < 1e-12 and abs(v0) < 1e-9, f"Lambda chi {chi}, Lambda V_0 {v0}"


def _grep_volume(seed):
    K = B.Box(np.zeros(2), np.array([2.0, 0.5]))
    v = VA.evaluate(VA.volume_grep(2), K, method="exact").mean
    return _close(v, 1.0, 1e-12)


def _grep_chi(seed):
    v = VA.evaluate(VA.GRep.euler(2, 2.5), B.Ball(np.zeros(2), 1.0), MCConfig(1000, seed)).mean
    return _close(v, 2.5, 0.0)


def _additivity(seed):
    K1, K2 = B.Box(np.zeros(2), np.ones(2)), B.Box(np.array([1.0, 0.0]), np.array([2.0, 1.0]))
    res = VA.check_additivity(VA.volume_grep(2), K1, K2, MCConfig(20_000, seed))
    return res.residual.mean == 0.0, f"residual {res.residual.mean}"


def _translation_invariance(seed):
    phi = VA.GRep.measure(VA.Polynomial.constant(2), B.Ball(np.zeros(2), 0.5))
    T = np.random.default_rng(seed).uniform(-1, 1, (5, 2))
    fit = VA.check_polynomiality(phi, B.Box(np.zeros(2), np.ones(2)), T, 0, MCConfig(20_000, seed))
    return fit.residual_rms < 1e-9, f"residual rms {fit.residual_rms:.2e}"


def _volume_components(seed):
    K = B.Box(np.zeros(2), np.array([1.0, 2.0]))
    c = VA.homogeneous_components(VA.volume(2), K, mc=MCConfig(20_000, seed)).values
    # slack covers the 1e-9 membership tolerance times the perimeter
    ok = np.abs(c.mean - np.array([0.0, 0.0, 2.0])) <= 3 * c.stderr + 1e-7
    return bool(np.all(ok)), f"components {c.mean.tolist()}"


def _v1_components(seed):
    K = B.Box(np.zeros(2), np.array([1.0, 2.0]))
    c = VA.homogeneous_components(VA.intrinsic(1), K).values.mean
    v1 = I.intrinsic_volume(K, 1).mean
    err = float(np.abs(c - np.array([0.0, v1, 0.0])).max())
    return err < 1e-9, f"components {c.tolist()}"


def _hadwiger_volume(seed):
    a = VA.hadwiger_decompose(VA.volume(3), 3, mc=MCConfig(1000, seed)).coeffs
    err = float(np.abs(a - np.array([0.0, 0.0, 0.0, 1.0])).max())
    return err < 1e-9, f"coefficients {a.tolist()}"


def _unit_law(seed):
    phi = VA.intrinsic_grep_2d(1)
    errs = []
    for K in (B.Box(np.zeros(2), np.ones(2)), B.Ball(np.zeros(2), 1.0),
              B.Polytope(np.array([[0.0, 0.0], [1.0, 0.0], [0.0, 1.0]]))):
        a = VA.alesker_product(VA.GRep.euler(2), phi, K, MCConfig(20_000, seed)).mean
        b = VA.evaluate(phi, K, method="auto").mean
        errs.append(abs(a - b))
    return max(errs) < 1e-9, f"max difference {max(errs):.2e}"


def _grading_exclusion(seed):
    res = VA.pairing_matrix([VA.intrinsic(0, n=2), VA.intrinsic(1, n=2)][:1],
                            [B.Box(np.zeros(2), np.ones(2))], MCConfig(1000, seed))
    return res.matrix[0, 0] == 0.0, f"pairing entry {res.matrix[0, 0]}"


def _unitary_frames(seed):
    U = H.sample_unitary(3, np.random.default_rng(seed))
    J = B.complex_structure(3)
    ortho = float(np.abs(U.T @ U - np.eye(6)).max())
    comm = float(np.abs(U @ J - J @ U).max())
    return ortho < 1e-10 and comm < 1e-10, f"orthogonality {ortho:.1e}, commutator {comm:.1e}"


def _ukp_zero(seed):
    K = B.Box(np.zeros(4), np.array([1.0, 2.0, 0.5, 1.0]))
    v = I.intrinsic_volume(K, 2).mean
    u = H.u_kp(K, 2, 0).mean
    return u == v, f"U_20 {u} vs V_2 {v}"


def _ukp_invariance(seed):
    K = B.Box(np.zeros(4), np.array([1.0, 2.0, 0.5, 1.0]))
    rng = np.random.default_rng(seed)
    UK = K.transform(H.sample_unitary(2, rng), rng.standard_normal(4))
    mc = MCConfig(50_000, seed)
    a = H.u_kp(K, 2, 1, mc.child(0), "projection")
    b = H.u_kp(UK, 2, 1, mc.child(1), "projection")
    z = a.zscore(b)
    return z < 3, f"z = {z:.2f}"


def _kinematic_point(seed):
    r = 0.8
    est = KM.kinematic_integral(B.Ball(np.zeros(2), r), B.point([3.0, -1.0]),
                                KM.MotionMeasure.iso(2), MCConfig(100_000, seed))
    z = est.zscore(math.pi * r * r)
    return z < 3, f"{est.mean:.4f} +- {est.stderr:.4f}, z = {z:.2f}"


def _kappa_symmetry(seed):
    errs = []
    for n in (1, 2, 3, 4):
        k = KM.derive_kappa(n).kappa
        errs.append(float(np.abs(k - k[::-1]).max()))
    return max(errs) < 1e-10, f"max asymmetry {max(errs):.1e}"


CHECKS: dict[str, Callable[[int], tuple[bool, str]]] = {
    "support_vertex_max": _support,
    "support_ball": _ball_support,
    "support_additivity": _minksum_support,
    "membership": _membership,
    "hausdorff_concentric": _hausdorff,
    "volume_closed_forms": _volumes,
    "slice_pythagoras": _slices,
    "disk_intersection": _disk_pairs,
    "steiner_point": _point_steiner,
    "intrinsic_homogeneity": _homogeneity,
    "lambda_degree_zero": _lambda_low,
    "grep_volume": _grep_volume,
    "grep_chi": _grep_chi,
    "additivity_volume": _additivity,
    "translation_invariance": _translation_invariance,
    "components_volume": _volume_components,
    "components_v1": _v1_components,
    "hadwiger_volume": _hadwiger_volume,
    "product_unit_law": _unit_law,
    "pairing_grading": _grading_exclusion,
    "unitary_frames": _unitary_frames,
    "ukp_p_zero": _ukp_zero,
    "ukp_unitary_invariance": _ukp_invariance,
    "kinematic_point": _kinematic_point,
    "kappa_symmetry": _kappa_symmetry,
}


def run(seed: int = 0, names=None) -> list[CheckResult]:
    out = []
    for name, check in CHECKS.items():
        if names and name not in names:
            continue
        try:
            ok, detail = check(seed)
        except Exception as exc:  # a crash is a failed check, reported with its message
            ok, detail = False, f"{type(exc).__name__}: {exc}"
        out.append(CheckResult(name, bool(ok), detail))
    return out
