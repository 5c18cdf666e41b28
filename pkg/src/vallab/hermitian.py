"""Unitarily invariant valuations U_{k,p} on C^m = R^{2m}.

    U_{k,p}(K) = integral over complex affine (m-p)-planes E of V_{k-2p}(K ∩ E) dE

with dE the Haar probability on the linear part times Lebesgue measure on
translations in the real 2p-dimensional orthogonal complement.  Under this
convention U_{k,0} = V_k.  V_{k-2p} of a slice is taken in the slice's own
dimension 2(m-p), so a nonempty slice has V_0 = omega_{2(m-p)}.

Complex coordinates are interleaved: z_j = x_{2j} + i x_{2j+1}.
"""
from __future__ import annotations

import itertools
import math
from dataclasses import dataclass
from typing import Sequence

import numpy as np
from scipy.spatial import ConvexHull, QhullError

from . import bodies as B
from .bodies import AffineSubspace, ConvexBody, RigidMotion, complex_structure, unit_ball_volume
from .intrinsic import intrinsic_volumes
from .mc import MCConfig, MCEstimate, estimate

ESTIMATORS = ("slice", "projection")
SUPPORT_POLYGON_SIDES = 1024
WINDOW_INFLATE = 1e-6


@dataclass(frozen=True)
class ComplexStructure:
    """Multiplication by i on R^{2m}."""

    m: int

    @property
    def dim(self) -> int:
        return 2 * self.m

    @property
    def J(self) -> np.ndarray:
        return complex_structure(self.m)

    def commutes(self, R, tol: float = 1e-10) -> bool:
        R = np.asarray(R, float)
        return bool(np.abs(R @ self.J - self.J @ R).max() <= tol)


def realify(Q: np.ndarray) -> np.ndarray:
    """Complex (..., m, m) matrices as real (..., 2m, 2m) blocks [[a, -b], [b, a]]."""
    Q = np.asarray(Q)
    m = Q.shape[-1]
    out = np.empty(Q.shape[:-2] + (2 * m, 2 * m))
    out[..., 0::2, 0::2] = Q.real
    out[..., 0::2, 1::2] = -Q.imag
    out[..., 1::2, 0::2] = Q.imag
    out[..., 1::2, 1::2] = Q.real
    return out


def sample_unitary(m: int, rng: np.random.Generator, size: int | None = None) -> np.ndarray:
    """Haar-random unitary matrices in real form, by QR of complex Gaussians with phase fix."""
    if m < 1:
        raise ValueError("m must be at least 1")
    shape = (1 if size is None else size, m, m)
    Z = (rng.standard_normal(shape) + 1j * rng.standard_normal(shape)) / math.sqrt(2)
    Q, R = np.linalg.qr(Z)
    d = np.diagonal(R, axis1=-2, axis2=-1)
    Q = Q * (d / np.abs(d))[:, None, :]
    out = realify(Q)
    return out[0] if size is None else out


def unitary_motion(m: int, rng: np.random.Generator, shift: float = 1.0) -> RigidMotion:
    """Random element of the unitary motion group (Haar rotation, Gaussian translation)."""
    return RigidMotion(sample_unitary(m, rng), shift * rng.standard_normal(2 * m))


def valid_p(k: int, m: int) -> list[int]:
    """Indices p with 0 <= p <= min(k, 2m - k) / 2, the U_{k,p} basis of degree k."""
    if not 0 <= k <= 2 * m:
        raise ValueError(f"degree {k} outside 0..{2 * m}")
    return list(range(min(k, 2 * m - k) // 2 + 1))


def basis_dimensions(m: int) -> list[int]:
    return [len(valid_p(k, m)) for k in range(2 * m + 1)]


# ---------------------------------------------------------------------------
# Grassmann samples


@dataclass(frozen=True)
class GrassmannSample:
    """Complex affine (m-p)-plane: rotation columns [E | C], offset t in the complement."""

    rotation: np.ndarray
    p: int
    translation: np.ndarray

    @property
    def m(self) -> int:
        return self.rotation.shape[0] // 2

    @property
    def directions(self) -> np.ndarray:
        return self.rotation[:, : 2 * (self.m - self.p)]

    @property
    def complement(self) -> np.ndarray:
        return self.rotation[:, 2 * (self.m - self.p):]

    @property
    def subspace(self) -> AffineSubspace:
        return AffineSubspace(self.complement @ self.translation, self.directions, complex_compatible=True)


def translation_window(K: ConvexBody, C: np.ndarray) -> tuple[np.ndarray, np.ndarray]:
    """Box around the projection of K on span(C), per sample.

    C has shape (N, 2m, q); returns (lo, hi) of shape (N, q).
    """
    N, d, q = C.shape
    U = np.transpose(C, (0, 2, 1)).reshape(N * q, d)
    hi = K._support(U).reshape(N, q) + WINDOW_INFLATE
    lo = -K._support(-U).reshape(N, q) - WINDOW_INFLATE
    return lo, hi


def sample_grassmann(K: ConvexBody, p: int, rng: np.random.Generator,
                     size: int) -> tuple[list[GrassmannSample], np.ndarray]:
    """Planes hitting the translation window of K, with the window volumes."""
    m = K.dim // 2
    R = sample_unitary(m, rng, size)
    lo, hi = translation_window(K, R[:, :, 2 * (m - p):])
    t = lo + rng.random(lo.shape) * (hi - lo)
    return [GrassmannSample(R[i], p, t[i]) for i in range(size)], np.prod(hi - lo, axis=1)


# ---------------------------------------------------------------------------
# Projections


def body_vertices(body: ConvexBody) -> np.ndarray | None:
    """Vertex set (possibly redundant) of polytopal bodies, else None."""
    if isinstance(body, B.Polytope):
        return body.vertices
    if isinstance(body, B.Box):
        return np.array(list(itertools.product(*zip(body.lo, body.hi))), dtype=float)
    if isinstance(body, B.Transformed):
        V = body_vertices(body.body)
        return None if V is None else V @ body.rotation.T + body.translation
    if isinstance(body, B.Scaled):
        V = body_vertices(body.body)
        return None if V is None else body.factor * V
    if isinstance(body, B.Product):
        parts = [body_vertices(f) for f in body.factors]
        if any(v is None for v in parts):
            return None
        return np.array([np.concatenate(c) for c in itertools.product(*parts)])
    return None


def _hull_volume(P: np.ndarray) -> float:
    q = P.shape[1]
    if q == 1:
        return float(np.ptp(P[:, 0]))
    try:
        return float(ConvexHull(P).volume)
    except QhullError:
        return 0.0


def _support_polygon_area(K: ConvexBody, C: np.ndarray, sides: int = SUPPORT_POLYGON_SIDES) -> np.ndarray:
    """Area of the polygon through support points of P_C K on a fine direction grid."""
    N = C.shape[0]
    th = 2 * np.pi * np.arange(sides) / sides
    W = np.column_stack([np.cos(th), np.sin(th)])
    out = np.empty(N)
    step = max(1, 8192 // sides)
    for s in range(0, N, step):
        Cs = C[s:s + step]
        U = np.einsum("nij,kj->nki", Cs, W).reshape(-1, Cs.shape[1])
        X = K._support_point(U).reshape(len(Cs), sides, -1)
        P = np.einsum("nki,nij->nkj", X, Cs)
        x, y = P[..., 0], P[..., 1]
        out[s:s + step] = 0.5 * np.sum(x * np.roll(y, -1, axis=1) - np.roll(x, -1, axis=1) * y, axis=1)
    return out


def _planar_pieces(K: ConvexBody, C: np.ndarray):
    """Decompose the planar projection of K into segments and centred ellipses.

    Returns (segments (N, s, 2), ellipse shapes (N, e, 2, 2)) or None when K
    is not a box, ball, ellipsoid or product of those.
    """
    factors = K.factors if isinstance(K, B.Product) else (K,)
    segs, ells = [], []
    off = 0
    for f in factors:
        d = f.dim
        Cf = C[:, off:off + d, :]
        off += d
        if isinstance(f, B.Box):
            segs.extend(L * Cf[:, i, :] for i, L in enumerate(f.sides) if L > 0)
        elif isinstance(f, B.Ball):
            ells.append(f.radius**2 * np.einsum("nji,njk->nik", Cf, Cf))
        elif isinstance(f, B.Ellipsoid):
            ells.append(np.einsum("nji,jk,nkl->nil", Cf, f.shape, Cf))
        else:
            return None
    N = C.shape[0]
    S = np.stack(segs, axis=1) if segs else np.zeros((N, 0, 2))
    Q = np.stack(ells, axis=1) if ells else np.zeros((N, 0, 2, 2))
    return S, Q


def _ellipse_mixed_area(Q1: np.ndarray, Q2: np.ndarray, nodes: int = 256) -> np.ndarray:
    """V(E1, E2) = 1/2 closed integral of h_{E1}(nu) ds over the boundary of E2."""
    w, V = np.linalg.eigh(Q2)
    A = np.einsum("nij,nj,nkj->nik", V, np.sqrt(np.maximum(w, 0.0)), V)
    phi = 2 * np.pi * np.arange(nodes) / nodes
    dx = np.einsum("nij,kj->nki", A, np.column_stack([-np.sin(phi), np.cos(phi)]))
    nu = np.stack([dx[..., 1], -dx[..., 0]], axis=-1)
    h = np.sqrt(np.maximum(np.einsum("nki,nij,nkj->nk", nu, Q1, nu), 0.0))
    return 0.5 * h.mean(axis=1) * 2 * np.pi


def _pieces_area(S: np.ndarray, Q: np.ndarray) -> np.ndarray:
    """Area of the Minkowski sum of segments and ellipses: sum of mixed areas V(X_i, X_j)."""
    N = S.shape[0]
    area = np.zeros(N)
    ns, ne = S.shape[1], Q.shape[1]
    for i in range(ns):
        for j in range(i + 1, ns):
            area += np.abs(S[:, i, 0] * S[:, j, 1] - S[:, i, 1] * S[:, j, 0])
    for j in range(ne):
        area += np.pi * np.sqrt(np.maximum(np.linalg.det(Q[:, j]), 0.0))
        for i in range(ns):
            perp = np.stack([-S[:, i, 1], S[:, i, 0]], axis=1)
            area += 2 * np.sqrt(np.maximum(np.einsum("ni,nij,nj->n", perp, Q[:, j], perp), 0.0))
        for i in range(j + 1, ne):
            area += 2 * _ellipse_mixed_area(Q[:, i], Q[:, j])
    return area


def projected_volume(K: ConvexBody, C: np.ndarray) -> np.ndarray:
    """vol_q of the orthogonal projection of K onto span(C) for each (2m, q) frame in C."""
    C = np.asarray(C, float)
    if C.ndim == 2:
        C = C[None]
    N, _, q = C.shape
    if isinstance(K, B.Ball):
        return np.full(N, unit_ball_volume(q) * K.radius**q)
    if isinstance(K, B.Ellipsoid):
        S = np.einsum("nji,jk,nkl->nil", C, K.shape, C)
        return unit_ball_volume(q) * np.sqrt(np.maximum(np.linalg.det(S), 0.0))
    if isinstance(K, B.Transformed):
        return projected_volume(K.body, np.einsum("ji,njq->niq", K.rotation, C))
    if isinstance(K, B.Scaled):
        return K.factor**q * projected_volume(K.body, C)
    if q == 2:
        pieces = _planar_pieces(K, C)
        if pieces is not None:
            return _pieces_area(*pieces)
    V = body_vertices(K)
    if V is not None:
        return np.array([_hull_volume(V @ C[i]) for i in range(N)])
    if q == 2:
        return _support_polygon_area(K, C)
    raise NotImplementedError(f"projection volume of {type(K).__name__} onto {q}-planes")


# ---------------------------------------------------------------------------
# Slice tests


def _hits_flats(K: ConvexBody, E: np.ndarray, C: np.ndarray, t: np.ndarray,
                tol: float = B.DEFAULT_TOL) -> np.ndarray:
    """K ∩ (C t + span E) != ∅ for each sample, i.e. t in the projection of K onto span C."""
    N = len(t)
    if isinstance(K, B.Ball):
        return np.linalg.norm(np.einsum("nij,i->nj", C, K.center) - t, axis=1) <= K.radius + tol
    if isinstance(K, B.Ellipsoid):
        S = np.einsum("nji,jk,nkl->nil", C, K.shape, C)
        d = t - np.einsum("nij,i->nj", C, K.center)
        return np.einsum("ni,ni->n", d, np.linalg.solve(S, d[..., None])[..., 0]) <= 1.0 + tol
    base = np.einsum("nij,nj->ni", C, t)

    def project_flat(X, idx):
        Y = X - base[idx]
        return base[idx] + np.einsum("nij,nj->ni", E[idx], np.einsum("nij,ni->nj", E[idx], Y))

    def support_flat(U, idx):
        along = np.einsum("nij,ni->nj", E[idx], U)
        h = np.einsum("ni,ni->n", U, base[idx])
        flat = np.linalg.norm(along, axis=1) <= 1e-12 * np.maximum(1.0, np.linalg.norm(U, axis=1))
        return np.where(flat, h, np.inf)

    def fallback(idx):
        out = np.zeros(len(idx), dtype=bool)
        for j, i in enumerate(idx):
            Ci = C[i]
            out[j] = B.gjk_decide(lambda w: K._support_point((Ci @ w)[None, :])[0] @ Ci, t[i], tol)[0]
        return out

    start = project_flat(np.broadcast_to(K.interior_point(), base.shape).copy(), np.arange(N))
    return B.alternating_gap_test(lambda X, idx: K._project(X), lambda U, idx: K._support(U),
                                  project_flat, support_flat, start, tol, 2000, fallback)


class _UkpKernel:
    def __init__(self, K: ConvexBody, k: int, p: int, estimator: str, method: str):
        self.K, self.k, self.p, self.estimator, self.method = K, k, p, estimator, method
        self.m = K.dim // 2
        self.omega = unit_ball_volume(2 * (self.m - p))

    def __call__(self, rng, size):
        m, p, K = self.m, self.p, self.K
        R = sample_unitary(m, rng, size)
        E, C = R[:, :, : 2 * (m - p)], R[:, :, 2 * (m - p):]
        if self.estimator == "projection":
            return self.omega * projected_volume(K, C)
        lo, hi = translation_window(K, C)
        t = lo + rng.random(lo.shape) * (hi - lo)
        wvol = np.prod(hi - lo, axis=1)
        if self.k == 2 * p:
            return wvol * self.omega * _hits_flats(K, E, C, t)
        out = np.zeros(size)
        i = self.k - 2 * p
        for s in range(size):
            piece = B.slice_body(K, AffineSubspace(C[s] @ t[s], E[s]))
            if not piece.is_empty:
                out[s] = wvol[s] * intrinsic_volumes(piece, method=self.method)[i].mean
        return out


def u_kp(K: ConvexBody, k: int, p: int, mc: MCConfig | None = None, estimator: str = "slice",
         method: str = "auto") -> MCEstimate:
    """U_{k,p}(K) for a body in R^{2m}.

    ``estimator='slice'`` samples (rotation, translation) pairs and evaluates
    V_{k-2p} on the slice.  ``'projection'`` (k = 2p only) integrates the
    translation out exactly: the slice is nonempty precisely over the
    projection of K onto the complement, so the sample value becomes
    omega_{2(m-p)} times the projected volume.
    """
    mc = mc or MCConfig(samples=200_000)
    if K.dim % 2:
        raise B.DimensionError("Hermitian valuations need even real dimension")
    m = K.dim // 2
    if not (0 <= 2 * p <= k <= 2 * m):
        raise ValueError(f"need 0 <= 2p <= k <= 2m, got k={k}, p={p}, m={m}")
    if estimator not in ESTIMATORS:
        raise ValueError(f"estimator must be one of {ESTIMATORS}")
    if K.is_empty:
        return MCEstimate.exact(0.0)
    if p == 0:
        return intrinsic_volumes(K, mc, method)[k]
    if estimator == "projection" and k != 2 * p:
        raise ValueError("the projection estimator covers k = 2p only")
    return estimate(_UkpKernel(K, k, p, estimator, method), mc)


# ---------------------------------------------------------------------------
# Basis rank


@dataclass(frozen=True)
class RankResult:
    k: int
    m: int
    ps: list
    matrix: np.ndarray
    stderr: np.ndarray
    singular_values: np.ndarray
    threshold: float

    @property
    def rank(self) -> int:
        return int(np.sum(self.singular_values > self.threshold))

    @property
    def expected(self) -> int:
        return len(self.ps)

    @property
    def independent(self) -> bool:
        return self.rank == self.expected


def basis_rank(k: int, m: int, family: Sequence[ConvexBody], mc: MCConfig | None = None,
               estimator: str = "projection") -> RankResult:
    """Numerical rank of M[body, p] = U_{k,p}(body) over the valid p range.

    Columns are scaled to unit norm; the threshold is ten times the spectral
    norm of the equally scaled standard-error matrix (the noise floor).
    """
    mc = mc or MCConfig(samples=200_000)
    ps = valid_p(k, m)
    if len(family) < len(ps):
        raise ValueError(f"need at least {len(ps)} bodies for degree {k}")
    M = np.zeros((len(family), len(ps)))
    S = np.zeros_like(M)
    for b, K in enumerate(family):
        for j, p in enumerate(ps):
            est = u_kp(K, k, p, mc.child(b, p), estimator if k == 2 * p else "slice")
            M[b, j], S[b, j] = est.mean, est.stderr
    norms = np.linalg.norm(M, axis=0)
    norms = np.where(norms > 0, norms, 1.0)
    sv = np.linalg.svd(M / norms, compute_uv=False)
    noise = float(np.linalg.norm(S / norms, 2))
    threshold = max(10 * noise, 1e-10 * float(sv.max(initial=0.0)))
    return RankResult(k, m, ps, M, S, sv, threshold)


def default_family(m: int = 2) -> list[ConvexBody]:
    """Bodies without unitary symmetry in C^2 (plus the ball as reference)."""
    if m != 2:
        raise ValueError("default family is defined for m = 2")
    disk = B.Ball(np.zeros(2), 1.0)
    return [
        B.Product((disk, B.Box(np.zeros(2), np.ones(2)))),
        B.Ball(np.zeros(4), 1.0),
        B.Box(np.zeros(4), np.ones(4)),
        B.Box(np.zeros(4), np.array([2.0, 0.5, 1.0, 1.0])),
    ]
