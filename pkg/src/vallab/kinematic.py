"""Kinematic integrals over the motion groups ISO(n) and IU(m).

    I(A, B) = integral over motions g of chi(A ∩ g B) dg

For convex bodies chi of the intersection is the indicator that it is
nonempty.  dg is the Haar probability on rotations times Lebesgue measure on
translations.  A motion acts as x -> R (x - c) + t, where c is the center of
the bounding box of B; the shift by R c preserves Lebesgue measure, so this
only changes the parameterization and keeps the translation window small.

The principal kinematic formula expresses I(A, B) through products of
intrinsic volumes with constants kappa_k.  Those constants are re-derived
here from the ball system.  In C^2 the unitary analogue is fitted by least
squares against products of Hermitian valuations U_{k,p}.
"""
from __future__ import annotations

import math
from dataclasses import dataclass, field
from typing import Sequence

import numpy as np
from scipy.stats import special_ortho_group

from . import bodies as B
from .bodies import ConvexBody, unit_ball_volume
from .hermitian import sample_unitary, u_kp, valid_p
from .intrinsic import intrinsic_volumes
from .mc import MCConfig, MCEstimate, estimate

GROUPS = ("ISO", "IU")
AP_MAX_ITER = 1000
MAX_CONDITION = 1e6
HOLDOUT_TOLERANCE = 0.05

CONVENTIONS = {
    "intrinsic_volumes": "V_i(unit ball in R^n) = omega_n for every i",
    "dU": "Haar probability on SO(n) or U(m) times Lebesgue measure on translations",
    "dE": "Haar probability on complex (m-p)-planes through 0 times Lebesgue measure on the real 2p-dim complement",
    "U_kp": "U_{k,p}(K) = int V_{k-2p}(K ∩ E) dE, slice volumes taken in the slice dimension",
    "complex_coordinates": "interleaved, z_j = x_{2j} + i x_{2j+1}",
}


class WindowError(ValueError):
    """The translation window does not cover every hitting translation."""


class FitConditionError(ValueError):
    """The kinematic design matrix is too ill-conditioned to fit."""


# ---------------------------------------------------------------------------
# Motion measure


def bounding_radius(body: ConvexBody) -> tuple[np.ndarray, float]:
    """(center, radius) of a ball around the bounding box of ``body``."""
    lo, hi = body.bbox(inflate=0.0)
    return 0.5 * (lo + hi), float(np.linalg.norm(0.5 * (hi - lo)))


@dataclass(frozen=True)
class MotionMeasure:
    """Haar rotations times Lebesgue translations over a box window.

    ``group`` is ``"ISO"`` (rotations SO(n)) or ``"IU"`` (unitary rotations
    of C^m, n = 2m).  ``window`` optionally fixes the translation box; it
    must contain every translation that can produce a hit, which is checked
    against a certified bound before any sampling.
    """

    group: str
    n: int
    window: tuple | None = None

    def __post_init__(self):
        if self.group not in GROUPS:
            raise ValueError(f"group must be one of {GROUPS}")
        if self.n < 1:
            raise ValueError("dimension must be positive")
        if self.group == "IU" and self.n % 2:
            raise B.DimensionError("IU(m) acts on R^{2m}")
        if self.window is not None:
            lo, hi = (np.asarray(w, dtype=float).reshape(-1) for w in self.window)
            if lo.shape != (self.n,) or hi.shape != (self.n,) or np.any(hi <= lo):
                raise WindowError("window must be a nondegenerate box in R^n")
            object.__setattr__(self, "window", (lo, hi))

    @classmethod
    def iso(cls, n: int, window=None) -> "MotionMeasure":
        return cls("ISO", n, window)

    @classmethod
    def iu(cls, m: int, window=None) -> "MotionMeasure":
        return cls("IU", 2 * m, window)

    @property
    def tag(self) -> str:
        return f"ISO({self.n})" if self.group == "ISO" else f"IU({self.n // 2})"

    def rotations(self, rng: np.random.Generator, size: int) -> np.ndarray:
        """Haar-distributed rotations, shape (size, n, n)."""
        if self.group == "IU":
            return sample_unitary(self.n // 2, rng, size)
        if self.n == 1:
            return np.ones((size, 1, 1))
        R = special_ortho_group.rvs(self.n, size=size, random_state=rng)
        return R.reshape(size, self.n, self.n)

    def window_for(self, A: ConvexBody, Bd: ConvexBody) -> tuple[np.ndarray, np.ndarray]:
        """Translation box for placing the center of ``Bd`` so that it may meet ``A``.

        Every rotated copy of ``Bd`` lies in the ball of radius rho about its
        center, so hits need t in bbox(A) grown by rho on each side.
        """
        if A.dim != self.n or Bd.dim != self.n:
            raise B.DimensionError("bodies do not match the motion dimension")
        alo, ahi = A.bbox(inflate=0.0)
        _, rho = bounding_radius(Bd)
        need_lo, need_hi = alo - rho, ahi + rho
        if not (np.all(np.isfinite(need_lo)) and np.all(np.isfinite(need_hi))):
            raise WindowError("bodies must be bounded")
        if self.window is None:
            return need_lo, need_hi
        lo, hi = self.window
        if np.any(lo > need_lo + 1e-12) or np.any(hi < need_hi - 1e-12):
            raise WindowError("window does not contain bbox(A) grown by the radius of B")
        return lo, hi


# ---------------------------------------------------------------------------
# Hit test


def motion_hits(A: ConvexBody, Bc: ConvexBody, R: np.ndarray, t: np.ndarray,
                tol: float = B.DEFAULT_TOL) -> np.ndarray:
    """A ∩ (R Bc + t) != ∅ for each sample (R: (N,n,n), t: (N,n))."""
    N = len(t)
    if isinstance(Bc, B.Ball):
        return A.distance(np.einsum("nij,j->ni", R, Bc.center) + t) <= Bc.radius + tol
    if isinstance(A, B.Ball):
        return Bc.distance(np.einsum("nji,nj->ni", R, A.center - t)) <= A.radius + tol
    if B._is_point(Bc):
        return A.distance(np.einsum("nij,j->ni", R, Bc.vertices[0]) + t) <= tol
    if B._is_point(A):
        return Bc.distance(np.einsum("nji,nj->ni", R, A.vertices[0] - t)) <= tol

    def project_b(X, idx):
        local = np.einsum("nji,nj->ni", R[idx], X - t[idx])
        return np.einsum("nij,nj->ni", R[idx], Bc._project(local)) + t[idx]

    def support_b(U, idx):
        return Bc._support(np.einsum("nji,nj->ni", R[idx], U)) + np.einsum("ni,ni->n", U, t[idx])

    def fallback(idx):
        # 0 in A - (R Bc + t), decided from support points of the difference
        out = np.zeros(len(idx), dtype=bool)
        for j, i in enumerate(idx):
            Ri, ti = R[i], t[i]

            def sp(u):
                return A._support_point(u[None, :])[0] - Ri @ Bc._support_point((-(Ri.T @ u))[None, :])[0] - ti
            out[j] = B.gjk_decide(sp, np.zeros(len(ti)), tol)[0]
        return out

    start = np.einsum("nij,j->ni", R, Bc.interior_point()) + t
    return B.alternating_gap_test(lambda X, idx: A._project(X), lambda U, idx: A._support(U),
                                  project_b, support_b, start, tol, AP_MAX_ITER, fallback)


class _MotionKernel:
    def __init__(self, A: ConvexBody, Bc: ConvexBody, measure: MotionMeasure, lo, hi, tol: float):
        self.A, self.Bc, self.measure, self.lo, self.hi, self.tol = A, Bc, measure, lo, hi, tol
        self.volume = float(np.prod(hi - lo))

    def __call__(self, rng, size):
        R = self.measure.rotations(rng, size)
        t = self.lo + rng.random((size, len(self.lo))) * (self.hi - self.lo)
        return self.volume * motion_hits(self.A, self.Bc, R, t, self.tol)


def kinematic_integral(A: ConvexBody, Bd: ConvexBody, measure: MotionMeasure | None = None,
                       mc: MCConfig | None = None, tol: float = B.DEFAULT_TOL) -> MCEstimate:
    """Monte Carlo estimate of the integral of chi(A ∩ g Bd) over the motion group.

    Window volume times the hit fraction over Haar rotations and uniform
    translations of the center of ``Bd``.
    """
    mc = mc or MCConfig()
    measure = measure or MotionMeasure.iso(A.dim)
    if A.dim != Bd.dim:
        raise B.DimensionError("bodies live in different dimensions")
    lo, hi = measure.window_for(A, Bd)
    if A.is_empty or Bd.is_empty:
        return MCEstimate.exact(0.0)
    c, _ = bounding_radius(Bd)
    return estimate(_MotionKernel(A, Bd.translate(-c), measure, lo, hi, tol), mc)


# ---------------------------------------------------------------------------
# Principal kinematic formula


@dataclass(frozen=True)
class KappaTable:
    """Principal kinematic constants and the ball system they solve."""

    n: int
    kappa: np.ndarray
    pairs: np.ndarray
    residual: float
    crosscheck: "KinematicCheck | None" = None

    def __getitem__(self, k: int) -> float:
        return float(self.kappa[k])


def default_ball_pairs(n: int) -> np.ndarray:
    return np.column_stack([0.5 * np.arange(1, n + 2), np.ones(n + 1)])


def derive_kappa(n: int, pairs=None, crosscheck_mc: MCConfig | None = None) -> KappaTable:
    """Solve I(B_r, B_s) = omega_n (r+s)^n = sum_k kappa_k V_k(B_r) V_{n-k}(B_s) for kappa.

    ``pairs`` is a list of (r, s) with at least n+1 distinct ratios r/s.
    With ``crosscheck_mc`` the constants are also checked by Monte Carlo on
    a square (or cube) against a ball.
    """
    if n < 1:
        raise ValueError("dimension must be positive")
    pairs = default_ball_pairs(n) if pairs is None else np.atleast_2d(np.asarray(pairs, dtype=float))
    if pairs.shape[1] != 2 or np.any(pairs <= 0):
        raise ValueError("pairs must be positive (r, s) radius pairs")
    ratios = np.unique(np.round(pairs[:, 0] / pairs[:, 1], 12))
    if len(ratios) < n + 1:
        raise np.linalg.LinAlgError(f"need {n + 1} distinct radius ratios, got {len(ratios)}")
    w = unit_ball_volume(n)
    r, s = pairs[:, :1], pairs[:, 1:]
    k = np.arange(n + 1)
    A = (w * r ** k) * (w * s ** (n - k))
    b = w * (pairs[:, 0] + pairs[:, 1]) ** n
    scale = np.abs(A).max(axis=0)
    sol, _, rank, _ = np.linalg.lstsq(A / scale, b, rcond=None)
    if rank < n + 1:
        raise np.linalg.LinAlgError("ball system is singular")
    kappa = sol / scale
    residual = float(np.abs(A @ kappa - b).max() / np.abs(b).max())
    table = KappaTable(n, kappa, pairs, residual)
    if crosscheck_mc is not None:
        cube = B.Box(np.zeros(n), np.ones(n))
        check = principal_kinematic_check(cube, B.Ball(np.zeros(n), 0.5), n, crosscheck_mc, table)
        table = KappaTable(n, kappa, pairs, residual, check)
    return table


@dataclass(frozen=True)
class KinematicCheck:
    lhs: MCEstimate
    rhs: MCEstimate
    z: float
    measure: str

    @property
    def passed(self) -> bool:
        return self.z < 3.0

    def to_json(self) -> dict:
        return {"lhs": self.lhs.to_dict(), "rhs": self.rhs.to_dict(), "z": self.z,
                "passed": self.passed, "measure": self.measure}


def principal_rhs(A: ConvexBody, Bd: ConvexBody, kappa: KappaTable, mc: MCConfig | None = None,
                  method: str = "auto") -> MCEstimate:
    """sum_k kappa_k V_k(A) V_{n-k}(Bd)."""
    n = kappa.n
    mc = mc or MCConfig(samples=200_000)
    va = intrinsic_volumes(A, mc.child(1), method)
    vb = intrinsic_volumes(Bd, mc.child(2), method)
    value = sum(kappa[k] * va[k].mean * vb[n - k].mean for k in range(n + 1))
    # first-order propagation; the two bodies use independent streams
    grad_a = np.array([kappa[k] * vb[n - k].mean for k in range(n + 1)])
    grad_b = np.array([kappa[n - k] * va[n - k].mean for k in range(n + 1)])
    sa = np.array([v.stderr for v in va])
    sb = np.array([v.stderr for v in vb])
    err = math.sqrt(float(np.sum((grad_a * sa) ** 2) + np.sum((grad_b * sb) ** 2)))
    return MCEstimate(float(value), err, max(v.samples for v in va + vb))


def principal_kinematic_check(A: ConvexBody, Bd: ConvexBody, n: int | None = None,
                              mc: MCConfig | None = None, kappa: KappaTable | None = None,
                              method: str = "auto") -> KinematicCheck:
    """Compare the ISO(n) kinematic integral with the principal kinematic formula.

    Without ``kappa`` the constants are derived from the ball system first.
    """
    n = A.dim if n is None else n
    if A.dim != n or Bd.dim != n:
        raise B.DimensionError("bodies do not match n")
    kappa = derive_kappa(n) if kappa is None else kappa
    if kappa.n != n:
        raise KeyError(f"no kinematic constants for n={n}")
    mc = mc or MCConfig()
    lhs = kinematic_integral(A, Bd, MotionMeasure.iso(n), mc.child(0))
    rhs = principal_rhs(A, Bd, kappa, mc.with_samples(min(mc.samples, 200_000)).child(1), method)
    return KinematicCheck(lhs, rhs, _zscore(lhs, rhs), f"ISO({n})")


def _zscore(a: MCEstimate, b: MCEstimate, atol: float = 1e-12) -> float:
    err = math.hypot(a.stderr, b.stderr)
    diff = abs(a.mean - b.mean)
    if err == 0:
        return 0.0 if diff <= atol * max(1.0, abs(b.mean)) else math.inf
    return diff / err


# ---------------------------------------------------------------------------
# Hermitian kinematic constants


def hermitian_indices(m: int = 2) -> list[tuple[int, int, int, int]]:
    """(k1, k2, p1, p2) with k1 + k2 = 2m and p_i in the basis range for k_i."""
    return [(k1, 2 * m - k1, p1, p2)
            for k1 in range(2 * m + 1)
            for p1 in valid_p(k1, m)
            for p2 in valid_p(2 * m - k1, m)]


def hermitian_profile(K: ConvexBody, mc: MCConfig | None = None,
                      method: str = "auto") -> dict[tuple[int, int], MCEstimate]:
    """All basis values U_{k,p}(K); k = 2p uses the projection estimator."""
    if K.dim % 2:
        raise B.DimensionError("Hermitian valuations need even real dimension")
    m = K.dim // 2
    mc = mc or MCConfig(samples=200_000)
    out = {}
    v = intrinsic_volumes(K, mc.child(0), method)
    for k in range(2 * m + 1):
        for p in valid_p(k, m):
            if p == 0:
                out[(k, p)] = v[k]
            else:
                est = "projection" if k == 2 * p else "slice"
                out[(k, p)] = u_kp(K, k, p, mc.child(k, p), est, method)
    return out


def _design(indices, pa: dict, pb: dict) -> tuple[np.ndarray, np.ndarray]:
    """Design row and the standard errors of the factors it multiplies."""
    row = np.array([pa[(k1, p1)].mean * pb[(k2, p2)].mean for k1, k2, p1, p2 in indices])
    return row, np.zeros(0)


def _prediction_variance(indices, kappa: np.ndarray, cov: np.ndarray, pa: dict, pb: dict,
                         same: bool) -> float:
    """Variance of sum_j kappa_j U(A) U(B) from the constants and the U estimates."""
    row, _ = _design(indices, pa, pb)
    var = float(row @ cov @ row)
    grad: dict[tuple, float] = {}
    for kj, (k1, k2, p1, p2) in zip(kappa, indices):
        ka, kb = ("a", k1, p1), ("b" if not same else "a", k2, p2)
        grad[ka] = grad.get(ka, 0.0) + kj * pb[(k2, p2)].mean
        grad[kb] = grad.get(kb, 0.0) + kj * pa[(k1, p1)].mean
    for (side, k, p), g in grad.items():
        s = (pa if side == "a" else pb)[(k, p)].stderr
        var += (g * s) ** 2
    return var


@dataclass(frozen=True)
class PairOutcome:
    name: str
    lhs: MCEstimate
    prediction: float
    prediction_stderr: float

    @property
    def relative(self) -> float:
        return abs(self.lhs.mean - self.prediction) / abs(self.lhs.mean)

    @property
    def z(self) -> float:
        return _zscore(self.lhs, MCEstimate(self.prediction, self.prediction_stderr, 1))

    def to_json(self) -> dict:
        return {"name": self.name, "lhs": self.lhs.mean, "lhs_stderr": self.lhs.stderr,
                "prediction": self.prediction, "prediction_stderr": self.prediction_stderr,
                "relative_residual": self.relative, "z": self.z}


@dataclass(frozen=True)
class SymmetryDefect:
    index: tuple
    partner: tuple
    defect: float
    stderr: float

    @property
    def passed(self) -> bool:
        return self.defect <= 3.0 * self.stderr + 1e-12

    def to_json(self) -> dict:
        return {"index": list(self.index), "partner": list(self.partner), "defect": self.defect,
                "stderr": self.stderr, "passed": self.passed}


@dataclass(frozen=True)
class BallCheck:
    radii: tuple
    fitted: float
    fitted_stderr: float
    principal: float

    @property
    def z(self) -> float:
        return _zscore(MCEstimate(self.fitted, self.fitted_stderr, 1), MCEstimate.exact(self.principal))

    @property
    def passed(self) -> bool:
        return self.z < 3.0

    def to_json(self) -> dict:
        return {"radii": list(self.radii), "fitted": self.fitted, "fitted_stderr": self.fitted_stderr,
                "principal": self.principal, "z": self.z, "passed": self.passed}


@dataclass(frozen=True)
class KinematicFit:
    """Fitted Hermitian kinematic constants kappa(k1, k2, p1, p2) in C^m."""

    m: int
    indices: list
    design: np.ndarray
    lhs: np.ndarray
    lhs_stderr: np.ndarray
    constants: np.ndarray
    covariance: np.ndarray
    condition: float
    chi2_dof: float
    training: list = field(default_factory=list)
    holdout: list = field(default_factory=list)
    symmetry: list = field(default_factory=list)
    ball_checks: list = field(default_factory=list)
    samples: int = 0
    seed: int = 0

    @property
    def stderr(self) -> np.ndarray:
        return np.sqrt(np.clip(np.diag(self.covariance), 0.0, None))

    @property
    def holdout_relative(self) -> float:
        return max((o.relative for o in self.holdout), default=math.nan)

    @property
    def symmetry_defect(self) -> float:
        return max((s.defect for s in self.symmetry), default=0.0)

    @property
    def symmetry_passed(self) -> bool:
        return all(s.passed for s in self.symmetry)

    @property
    def balls_passed(self) -> bool:
        return all(b.passed for b in self.ball_checks)

    @property
    def passed(self) -> bool:
        return (self.holdout_relative < HOLDOUT_TOLERANCE and self.symmetry_passed
                and self.balls_passed)

    def constant(self, k1: int, k2: int, p1: int, p2: int) -> float:
        return float(self.constants[self.indices.index((k1, k2, p1, p2))])

    def predict(self, pa: dict, pb: dict, same: bool = False) -> tuple[float, float]:
        row, _ = _design(self.indices, pa, pb)
        var = _prediction_variance(self.indices, self.constants, self.covariance, pa, pb, same)
        return float(row @ self.constants), math.sqrt(var)

    def to_json(self) -> dict:
        return {
            "m": self.m,
            "constants": [{"index": list(ix), "value": float(v), "stderr": float(s)}
                          for ix, v, s in zip(self.indices, self.constants, self.stderr)],
            "condition": self.condition,
            "chi2_dof": self.chi2_dof,
            "holdout_relative_residual": self.holdout_relative,
            "symmetry_defect": self.symmetry_defect,
            "passed": self.passed,
            "training": [o.to_json() for o in self.training],
            "holdout": [o.to_json() for o in self.holdout],
            "symmetry": [s.to_json() for s in self.symmetry],
            "ball_checks": [b.to_json() for b in self.ball_checks],
            "samples": self.samples,
            "seed": self.seed,
            "conventions": CONVENTIONS,
        }


def _rotation(n: int, i: int, j: int, angle: float) -> np.ndarray:
    R = np.eye(n)
    c, s = math.cos(angle), math.sin(angle)
    R[i, i], R[i, j], R[j, i], R[j, j] = c, -s, s, c
    return R


def symmetry_breaking_family() -> dict[str, ConvexBody]:
    """Bodies in C^2 whose real shape is not U(2)-symmetric.

    Thin boxes fat along a complex line versus a totally real plane, a real
    rotation mixing the complex coordinates, a polydisk and mixed products.
    """
    disk = B.Ball(np.zeros(2), 1.0)
    half = B.Ball(np.zeros(2), 0.5)
    unit = B.Box(np.zeros(2), np.ones(2))
    slab_c = B.Box(np.zeros(4), np.array([2.0, 2.0, 0.3, 0.3]))
    slab_r = B.Box(np.zeros(4), np.array([2.0, 0.3, 2.0, 0.3]))
    return {
        "cube": B.Box(np.zeros(4), np.ones(4)),
        "ball": B.Ball(np.zeros(4), 1.0),
        "polydisk": B.Product((disk, half)),
        "disk_square": B.Product((disk, unit)),
        "complex_slab": slab_c,
        "real_slab": slab_r,
        "tilted_slab": slab_c.transform(_rotation(4, 1, 2, math.pi / 4)),
    }


def default_pairs() -> tuple[list[tuple[str, str]], list[tuple[str, str]]]:
    """(training, held-out) name pairs over :func:`symmetry_breaking_family`."""
    names = list(symmetry_breaking_family())
    pairs = [(a, b) for i, a in enumerate(names) for b in names[i:]]
    holdout = [("cube", "tilted_slab"), ("ball", "real_slab"), ("polydisk", "complex_slab"),
               ("disk_square", "disk_square")]
    training = [p for p in pairs if p not in holdout]
    return training, holdout


def fit_hermitian_constants(pairs: Sequence[tuple[ConvexBody, ConvexBody]] | None = None,
                            mc: MCConfig | None = None,
                            holdout: Sequence[tuple[ConvexBody, ConvexBody]] | None = None,
                            m: int = 2, profile_mc: MCConfig | None = None,
                            ball_radii: Sequence[tuple[float, float]] = ((0.5, 1.0), (1.0, 1.5)),
                            names: tuple[list, list] | None = None, method: str = "auto") -> KinematicFit:
    """Weighted least-squares fit of the Hermitian kinematic constants.

    Each training pair contributes one row: the IU(m) kinematic integral
    (Monte Carlo, ``mc.samples`` motions) against the products
    U_{k1,p1}(A) U_{k2,p2}(B).  Rows are weighted by the combined standard
    error of the integral and of the predicted value; the weights are
    refined once with the first-pass constants.  The condition number is
    that of the column-equilibrated weighted design.
    """
    mc = mc or MCConfig()
    profile_mc = profile_mc or MCConfig(samples=200_000, seed=mc.seed)
    if pairs is None:
        fam = symmetry_breaking_family()
        train_names, hold_names = default_pairs()
        pairs = [(fam[a], fam[b]) for a, b in train_names]
        holdout = [(fam[a], fam[b]) for a, b in hold_names] if holdout is None else holdout
        names = (train_names, hold_names) if names is None else names
    holdout = list(holdout or [])
    indices = hermitian_indices(m)
    if len(pairs) < 2 * len(indices):
        raise ValueError(f"need at least {2 * len(indices)} training pairs for {len(indices)} constants")
    if len(holdout) < 3:
        raise ValueError("need at least 3 held-out pairs")
    for A, Bd in list(pairs) + holdout:
        if A.dim != 2 * m or Bd.dim != 2 * m:
            raise B.DimensionError(f"bodies must live in R^{2 * m}")

    profiles: dict[int, dict] = {}

    def profile(K):
        key = id(K)
        if key not in profiles:
            profiles[key] = hermitian_profile(K, profile_mc.child(len(profiles)), method)
        return profiles[key]

    measure = MotionMeasure.iu(m)

    def outcome_inputs(plist, offset):
        rows, lhs = [], []
        for i, (A, Bd) in enumerate(plist):
            rows.append(_design(indices, profile(A), profile(Bd))[0])
            lhs.append(kinematic_integral(A, Bd, measure, mc.child(offset + i)))
        return np.array(rows), lhs

    X, lhs_est = outcome_inputs(pairs, 0)
    y = np.array([e.mean for e in lhs_est])
    sy = np.array([e.stderr for e in lhs_est])
    sy = np.where(sy > 0, sy, 1e-12 * np.maximum(1.0, np.abs(y)))

    def solve(sigma):
        Xw = X / sigma[:, None]
        scale = np.linalg.norm(Xw, axis=0)
        scale = np.where(scale > 0, scale, 1.0)
        Xe = Xw / scale
        sv = np.linalg.svd(Xe, compute_uv=False)
        cond = float(sv[0] / sv[-1]) if sv[-1] > 0 else math.inf
        if cond > MAX_CONDITION:
            raise FitConditionError(
                f"design condition number {cond:.3g} exceeds {MAX_CONDITION:.0e}; "
                "choose body pairs that break unitary symmetry more strongly")
        coef, *_ = np.linalg.lstsq(Xe, y / sigma, rcond=None)
        cov_e = np.linalg.inv(Xe.T @ Xe)
        return coef / scale, cov_e / np.outer(scale, scale), cond

    kappa, cov, cond = solve(sy)
    same = [A is Bd for A, Bd in pairs]
    sigma = np.sqrt(sy ** 2 + np.array([
        _prediction_variance(indices, kappa, np.zeros_like(cov), profile(A), profile(Bd), s)
        for (A, Bd), s in zip(pairs, same)]))
    kappa, cov, cond = solve(sigma)
    resid = (y - X @ kappa) / sigma
    dof = max(len(y) - len(indices), 1)
    chi2 = float(resid @ resid / dof)

    train_names, hold_names = names if names is not None else (None, None)

    def label(plist_names, i):
        return f"{plist_names[i][0]}|{plist_names[i][1]}" if plist_names else f"pair{i}"

    def outcomes(plist, ests, plist_names):
        out = []
        for i, ((A, Bd), e) in enumerate(zip(plist, ests)):
            pa, pb = profile(A), profile(Bd)
            row, _ = _design(indices, pa, pb)
            var = _prediction_variance(indices, kappa, cov, pa, pb, A is Bd)
            out.append(PairOutcome(label(plist_names, i), e, float(row @ kappa), math.sqrt(var)))
        return out

    training = outcomes(pairs, lhs_est, train_names)
    _, hold_est = outcome_inputs(holdout, len(pairs))
    held = outcomes(holdout, hold_est, hold_names)

    sym = []
    for a, ix in enumerate(indices):
        partner = (ix[1], ix[0], ix[3], ix[2])
        b = indices.index(partner)
        if b > a:
            var = cov[a, a] + cov[b, b] - 2 * cov[a, b]
            sym.append(SymmetryDefect(ix, partner, abs(float(kappa[a] - kappa[b])), math.sqrt(max(var, 0.0))))

    balls = []
    real = derive_kappa(2 * m)
    for r, s in ball_radii:
        Ba, Bb = B.Ball(np.zeros(2 * m), r), B.Ball(np.zeros(2 * m), s)
        pa = hermitian_profile(Ba, profile_mc, method)
        pb = hermitian_profile(Bb, profile_mc, method)
        row, _ = _design(indices, pa, pb)
        var = _prediction_variance(indices, kappa, cov, pa, pb, False)
        rhs = principal_rhs(Ba, Bb, real, profile_mc, method)
        balls.append(BallCheck((r, s), float(row @ kappa), math.sqrt(var), rhs.mean))

    return KinematicFit(m, indices, X, y, sy, kappa, cov, cond, chi2, training, held, sym, balls,
                        mc.samples, mc.seed)
