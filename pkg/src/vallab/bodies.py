"""Convex bodies as immutable values.

Each body exposes a support function, a support point (an argmax of the
support function), a metric projection and the oracles derived from them:
distance, membership, bounding box, volume, slicing and pairwise intersection.
All array-valued oracles take points or directions stacked along the first
axis, shape ``(N, n)``; a single vector of shape ``(n,)`` is also accepted.
"""
from __future__ import annotations

import itertools
import math
from dataclasses import dataclass
from functools import cached_property
from typing import Callable

import numpy as np
from scipy.linalg import null_space
from scipy.optimize import nnls
from scipy.spatial import ConvexHull
from scipy.stats import norm as _normal
from scipy.stats import qmc

from .mc import MCConfig, MCEstimate, estimate

DEFAULT_TOL = 1e-9
MAX_ITER = 10_000
_CHUNK = 8192


class DimensionError(ValueError):
    pass


class ConvergenceError(RuntimeError):
    """An iterative convex-projection scheme hit its iteration cap.

    ``gap_bounds`` holds the certified (lower, upper) bracket on the unresolved
    distance with the widest bracket.
    """

    def __init__(self, message: str, gap_bounds: tuple[float, float]):
        super().__init__(f"{message} (gap bracket {gap_bounds})")
        self.gap_bounds = gap_bounds


def unit_ball_volume(n: int) -> float:
    """Volume of the Euclidean unit ball in R^n."""
    return math.pi ** (n / 2) / math.gamma(n / 2 + 1)


def complex_structure(m: int) -> np.ndarray:
    """Standard complex structure on R^{2m} with coordinates (x1, y1, x2, y2, ...)."""
    J = np.zeros((2 * m, 2 * m))
    for j in range(m):
        J[2 * j + 1, 2 * j] = 1.0
        J[2 * j, 2 * j + 1] = -1.0
    return J


def _rows(a, n: int | None = None) -> tuple[np.ndarray, bool]:
    arr = np.asarray(a, dtype=float)
    single = arr.ndim == 1
    arr = np.atleast_2d(arr)
    if n is not None and arr.shape[1] != n:
        raise DimensionError(f"expected vectors of dimension {n}, got {arr.shape[1]}")
    return arr, single


def _norms(X: np.ndarray) -> np.ndarray:
    return np.sqrt(np.einsum("ij,ij->i", X, X))


def direction_set(n: int, count: int) -> np.ndarray:
    """Nested set of unit directions: the first ``k`` rows are a prefix for any ``k < count``.

    Starts with the coordinate directions ``±e_i``; continues with a
    low-discrepancy sequence (van der Corput angles in 2D, Gaussian-mapped
    Halton points otherwise).
    """
    if count <= 0:
        raise ValueError("need at least one direction")
    eye = np.eye(n)
    base = np.empty((2 * n, n))
    base[0::2] = eye
    base[1::2] = -eye
    extra = max(0, count - 2 * n)
    if n == 1 or extra == 0:
        return base[:count]
    if n == 2:
        seq = qmc.Halton(d=1, scramble=False)
        seq.fast_forward(1)
        t = 2 * np.pi * seq.random(extra)[:, 0]
        more = np.column_stack([np.cos(t), np.sin(t)])
    else:
        seq = qmc.Halton(d=n, scramble=False)
        seq.fast_forward(1)
        g = _normal.ppf(np.clip(seq.random(extra), 1e-12, 1 - 1e-12))
        more = g / _norms(g)[:, None]
    return np.vstack([base, more])


class ConvexBody:
    """Common oracle surface.  Subclasses implement the underscored batch methods."""

    dim: int

    # -- batch primitives -------------------------------------------------
    def _support(self, U: np.ndarray) -> np.ndarray:
        raise NotImplementedError

    def _support_point(self, U: np.ndarray) -> np.ndarray:
        raise NotImplementedError

    def _project(self, X: np.ndarray) -> np.ndarray:
        raise NotImplementedError

    # -- public oracles ---------------------------------------------------
    def support(self, u):
        """h(u) = max over the body of <x, u> (positively homogeneous in u)."""
        U, single = _rows(u, self.dim)
        h = self._support(U)
        return float(h[0]) if single else h

    def support_point(self, u):
        U, single = _rows(u, self.dim)
        p = self._support_point(U)
        return p[0] if single else p

    def project(self, x):
        """Closest point of the body (metric projection)."""
        X, single = _rows(x, self.dim)
        out = np.empty_like(X)
        for s in range(0, len(X), _CHUNK):
            out[s:s + _CHUNK] = self._project(X[s:s + _CHUNK])
        return out[0] if single else out

    def distance(self, x):
        X, single = _rows(x, self.dim)
        d = _norms(X - self.project(X))
        return float(d[0]) if single else d

    def contains(self, x, tol: float = DEFAULT_TOL):
        if tol < 0:
            raise ValueError("tolerance must be non-negative")
        X, single = _rows(x, self.dim)
        inside = self.distance(X) <= tol
        return bool(inside[0]) if single else inside

    def bbox(self, inflate: float = 1e-9) -> tuple[np.ndarray, np.ndarray]:
        """Axis-aligned bounding box from support values along ±e_i."""
        eye = np.eye(self.dim)
        hi = self._support(eye) + inflate
        lo = -self._support(-eye) - inflate
        return lo, hi

    def interior_point(self) -> np.ndarray:
        """A point of the body; interior for full-dimensional bodies in general position."""
        return self._support_point(direction_set(self.dim, 4 * self.dim + 8)).mean(axis=0)

    def diameter(self, n_dirs: int = 256) -> float:
        U = direction_set(self.dim, max(n_dirs, 2 * self.dim))
        return float(np.max(self._support(U) + self._support(-U)))

    @property
    def is_empty(self) -> bool:
        return False

    # -- constructors -----------------------------------------------------
    def scale(self, factor: float) -> "ConvexBody":
        return scale(self, factor)

    def translate(self, t) -> "ConvexBody":
        return translate(self, t)

    def transform(self, rotation, translation=None) -> "ConvexBody":
        return RigidMotion(np.asarray(rotation, float),
                           np.zeros(self.dim) if translation is None else np.asarray(translation, float)).apply(self)

    def reflect(self) -> "ConvexBody":
        """The body -K."""
        return self.transform(-np.eye(self.dim))

    def __add__(self, other: "ConvexBody") -> "ConvexBody":
        return minkowski_sum(self, other)

    def to_json(self) -> dict:
        raise NotImplementedError


# ---------------------------------------------------------------------------
# Variants


@dataclass(frozen=True, eq=False)
class Ball(ConvexBody):
    center: np.ndarray
    radius: float

    def __post_init__(self):
        object.__setattr__(self, "center", np.asarray(self.center, dtype=float).reshape(-1))
        if not self.radius > 0:
            raise ValueError("ball radius must be positive")

    @property
    def dim(self) -> int:
        return self.center.shape[0]

    def _support(self, U):
        return U @ self.center + self.radius * _norms(U)

    def _support_point(self, U):
        r = _norms(U)
        return self.center + self.radius * U / np.where(r > 0, r, 1.0)[:, None]

    def _project(self, X):
        d = X - self.center
        r = _norms(d)
        f = np.minimum(1.0, self.radius / np.where(r > 0, r, 1.0))
        return self.center + d * f[:, None]

    def distance(self, x):
        X, single = _rows(x, self.dim)
        d = np.maximum(_norms(X - self.center) - self.radius, 0.0)
        return float(d[0]) if single else d

    def to_json(self):
        return {"type": "ball", "center": self.center.tolist(), "radius": float(self.radius)}


@dataclass(frozen=True, eq=False)
class Ellipsoid(ConvexBody):
    """{x : (x - c)^T Q^{-1} (x - c) <= 1} for a positive-definite shape matrix Q."""

    center: np.ndarray
    shape: np.ndarray

    def __post_init__(self):
        c = np.asarray(self.center, dtype=float).reshape(-1)
        Q = np.asarray(self.shape, dtype=float)
        if Q.shape != (c.size, c.size):
            raise DimensionError("shape matrix does not match center")
        if not np.allclose(Q, Q.T, atol=1e-12):
            raise ValueError("shape matrix must be symmetric")
        object.__setattr__(self, "center", c)
        object.__setattr__(self, "shape", 0.5 * (Q + Q.T))
        if np.linalg.eigvalsh(self.shape).min() <= 0:
            raise ValueError("shape matrix must be positive definite")

    @classmethod
    def axis_aligned(cls, center, semi_axes) -> "Ellipsoid":
        a = np.asarray(semi_axes, dtype=float)
        return cls(center, np.diag(a**2))

    @property
    def dim(self) -> int:
        return self.center.shape[0]

    @cached_property
    def _eig(self):
        w, V = np.linalg.eigh(self.shape)
        return w, V

    @property
    def semi_axes(self) -> np.ndarray:
        return np.sqrt(self._eig[0])

    def _support(self, U):
        return U @ self.center + np.sqrt(np.einsum("ij,jk,ik->i", U, self.shape, U))

    def _support_point(self, U):
        QU = U @ self.shape
        s = np.sqrt(np.einsum("ij,ij->i", QU, U))
        return self.center + QU / np.where(s > 0, s, 1.0)[:, None]

    def _project(self, X):
        a2, V = self._eig
        Y = (X - self.center) @ V
        out = Y.copy()
        outside = (Y**2 / a2).sum(axis=1) > 1.0
        if outside.any():
            y = Y[outside]
            y2 = y * y
            a = np.sqrt(a2)
            t_lo = np.maximum(0.0, (a * np.abs(y) - a2).max(axis=1))
            t_hi = a.max() * _norms(y)
            t = t_lo.copy()
            for _ in range(200):
                den = a2 + t[:, None]
                f = (a2 * y2 / den**2).sum(axis=1) - 1.0
                fp = -2.0 * (a2 * y2 / den**3).sum(axis=1)
                step = f / fp
                t_new = np.clip(t - step, t_lo, t_hi)
                done = np.abs(t_new - t) <= 1e-15 * (1.0 + t)
                t = t_new
                if done.all():
                    break
            out[outside] = a2 * y / (a2 + t[:, None])
        return self.center + out @ V.T

    def to_json(self):
        return {"type": "ellipsoid", "center": self.center.tolist(), "shape": self.shape.tolist()}


class _HullGeom:
    """Full-dimensional hull in its own coordinates, with exact face projection."""

    def __init__(self, pts: np.ndarray):
        hull = ConvexHull(pts)
        self.k = pts.shape[1]
        self.points = pts
        self.hull = hull
        self.A = hull.equations[:, :-1]
        self.b = hull.equations[:, -1]
        faces: set[tuple[int, ...]] = set()
        for simplex in hull.simplices:
            s = tuple(sorted(int(v) for v in simplex))
            for size in range(1, len(s) + 1):
                faces.update(itertools.combinations(s, size))
        self.groups = []
        by_size: dict[int, list] = {}
        for f in faces:
            by_size.setdefault(len(f), []).append(f)
        for size, fl in sorted(by_size.items()):
            idx = np.array(fl)
            V0 = pts[idx[:, 0]]
            if size == 1:
                self.groups.append((V0, None, None))
                continue
            Bm = pts[idx[:, 1:]] - V0[:, None, :]          # (F, s-1, k)
            Bm = np.transpose(Bm, (0, 2, 1))                # (F, k, s-1)
            P = np.linalg.pinv(Bm)                          # (F, s-1, k)
            self.groups.append((V0, Bm, P))

    def project(self, Y: np.ndarray) -> np.ndarray:
        inside = (Y @ self.A.T + self.b <= 1e-12).all(axis=1)
        out = Y.copy()
        if inside.all():
            return out
        Z = Y[~inside]
        best = np.full(len(Z), np.inf)
        best_pt = np.zeros_like(Z)
        for V0, Bm, P in self.groups:
            diff = Z[:, None, :] - V0[None]                 # (N, F, k)
            if Bm is None:
                cand = np.broadcast_to(V0[None], diff.shape)
                valid = np.ones(diff.shape[:2], dtype=bool)
            else:
                lam = np.einsum("fsk,nfk->nfs", P, diff)
                valid = (lam >= -1e-12).all(axis=2) & (lam.sum(axis=2) <= 1 + 1e-12)
                cand = V0[None] + np.einsum("fks,nfs->nfk", Bm, lam)
            d2 = ((Z[:, None, :] - cand) ** 2).sum(axis=2)
            d2 = np.where(valid, d2, np.inf)
            j = d2.argmin(axis=1)
            dj = d2[np.arange(len(Z)), j]
            better = dj < best
            best = np.where(better, dj, best)
            best_pt[better] = cand[np.arange(len(Z)), j][better]
        out[~inside] = best_pt
        return out

    def volume(self) -> float:
        c = self.points[self.hull.vertices].mean(axis=0)
        S = self.points[self.hull.simplices] - c
        return float(np.abs(np.linalg.det(S)).sum() / math.factorial(self.k))


@dataclass(frozen=True, eq=False)
class Polytope(ConvexBody):
    """Convex hull of a vertex list.  Lower-dimensional hulls are handled in their affine frame."""

    vertices: np.ndarray

    def __post_init__(self):
        V = np.atleast_2d(np.asarray(self.vertices, dtype=float))
        if V.shape[0] == 0:
            raise ValueError("polytope needs at least one vertex")
        object.__setattr__(self, "vertices", V)

    @property
    def dim(self) -> int:
        return self.vertices.shape[1]

    @cached_property
    def frame(self):
        """(origin, basis, affine dimension, inner geometry)."""
        V = self.vertices
        o = V.mean(axis=0)
        C = V - o
        if len(V) == 1:
            return o, np.zeros((self.dim, 0)), 0, None
        _, s, Wt = np.linalg.svd(C, full_matrices=False)
        k = int((s > 1e-10 * max(1.0, s[0])).sum())
        if k == self.dim:
            basis = np.eye(self.dim)
            inner = C
        else:
            basis = Wt[:k].T
            inner = C @ basis
        if k == 0:
            geom = None
        elif k == 1:
            geom = (inner[:, 0].min(), inner[:, 0].max())
        else:
            geom = _HullGeom(inner)
        return o, basis, k, geom

    @property
    def affine_dim(self) -> int:
        return self.frame[2]

    def _support(self, U):
        return (U @ self.vertices.T).max(axis=1)

    def _support_point(self, U):
        return self.vertices[(U @ self.vertices.T).argmax(axis=1)]

    def _project(self, X):
        o, B, k, geom = self.frame
        if k == 0:
            return np.broadcast_to(self.vertices[0], X.shape).copy()
        Y = (X - o) @ B
        if k == 1:
            P = np.clip(Y, geom[0], geom[1])
        else:
            P = geom.project(Y)
        return o + P @ B.T

    def halfspaces(self) -> tuple[np.ndarray, np.ndarray]:
        """(A, b) with the polytope equal to {x : A x <= b}."""
        o, B, k, geom = self.frame
        n = self.dim
        if k == 0:
            A_in, b_in = np.zeros((0, 0)), np.zeros(0)
        elif k == 1:
            A_in, b_in = np.array([[1.0], [-1.0]]), np.array([geom[1], -geom[0]])
        else:
            A_in, b_in = geom.A, -geom.b
        A = A_in @ B.T if k else np.zeros((0, n))
        b = b_in + A @ o if k else np.zeros(0)
        if k < n:
            comp = null_space(B.T) if k else np.eye(n)
            A = np.vstack([A, comp.T, -comp.T])
            b = np.concatenate([b, comp.T @ o, -comp.T @ o])
        return A, b

    def exact_volume(self) -> float:
        o, B, k, geom = self.frame
        if k < self.dim:
            return 0.0
        if k == 1:
            return float(geom[1] - geom[0])
        return geom.volume()

    def to_json(self):
        return {"type": "polytope", "vertices": self.vertices.tolist()}


def point(x) -> Polytope:
    return Polytope(np.atleast_2d(np.asarray(x, dtype=float)))


@dataclass(frozen=True, eq=False)
class Box(ConvexBody):
    """Axis-aligned box [lo, hi]; zero-width sides are allowed (flat boxes)."""

    lo: np.ndarray
    hi: np.ndarray

    def __post_init__(self):
        lo = np.asarray(self.lo, dtype=float).reshape(-1)
        hi = np.asarray(self.hi, dtype=float).reshape(-1)
        if lo.shape != hi.shape:
            raise DimensionError("box corners differ in dimension")
        if np.any(hi < lo):
            raise ValueError("box needs lo <= hi")
        object.__setattr__(self, "lo", lo)
        object.__setattr__(self, "hi", hi)

    @property
    def dim(self) -> int:
        return self.lo.shape[0]

    @property
    def sides(self) -> np.ndarray:
        return self.hi - self.lo

    def _support(self, U):
        return np.maximum(U * self.lo, U * self.hi).sum(axis=1)

    def _support_point(self, U):
        return np.where(U >= 0, self.hi, self.lo)

    def _project(self, X):
        return np.clip(X, self.lo, self.hi)

    def halfspaces(self):
        eye = np.eye(self.dim)
        return np.vstack([eye, -eye]), np.concatenate([self.hi, -self.lo])

    def to_polytope(self) -> Polytope:
        corners = np.array(list(itertools.product(*zip(self.lo, self.hi))))
        return Polytope(np.unique(corners, axis=0))

    def exact_volume(self) -> float:
        return float(np.prod(self.sides))

    def to_json(self):
        return {"type": "box", "lo": self.lo.tolist(), "hi": self.hi.tolist()}


@dataclass(frozen=True, eq=False)
class Product(ConvexBody):
    """Cartesian product K_1 x ... x K_r, coordinates concatenated in order."""

    factors: tuple

    def __post_init__(self):
        object.__setattr__(self, "factors", tuple(self.factors))
        if not self.factors:
            raise ValueError("product needs at least one factor")

    @property
    def dim(self) -> int:
        return sum(f.dim for f in self.factors)

    @cached_property
    def _cuts(self):
        edges = np.cumsum([0] + [f.dim for f in self.factors])
        return [slice(int(a), int(b)) for a, b in zip(edges[:-1], edges[1:])]

    def _support(self, U):
        return sum(f._support(U[:, s]) for f, s in zip(self.factors, self._cuts))

    def _support_point(self, U):
        return np.hstack([f._support_point(U[:, s]) for f, s in zip(self.factors, self._cuts)])

    def _project(self, X):
        return np.hstack([f._project(X[:, s]) for f, s in zip(self.factors, self._cuts)])

    def to_json(self):
        return {"type": "product", "factors": [f.to_json() for f in self.factors]}


@dataclass(frozen=True, eq=False)
class Scaled(ConvexBody):
    factor: float
    body: ConvexBody

    def __post_init__(self):
        if not self.factor > 0:
            raise ValueError("scale factor must be positive")

    @property
    def dim(self) -> int:
        return self.body.dim

    def _support(self, U):
        return self.factor * self.body._support(U)

    def _support_point(self, U):
        return self.factor * self.body._support_point(U)

    def _project(self, X):
        return self.factor * self.body._project(X / self.factor)

    def to_json(self):
        return {"type": "scaled", "factor": float(self.factor), "body": self.body.to_json()}


@dataclass(frozen=True, eq=False)
class Transformed(ConvexBody):
    """R K + t for an orthogonal R."""

    rotation: np.ndarray
    translation: np.ndarray
    body: ConvexBody

    def __post_init__(self):
        R = np.asarray(self.rotation, dtype=float)
        t = np.asarray(self.translation, dtype=float).reshape(-1)
        if R.shape != (self.body.dim, self.body.dim) or t.shape != (self.body.dim,):
            raise DimensionError("rigid motion does not match body dimension")
        if np.abs(R.T @ R - np.eye(len(t))).max() > 1e-10:
            raise ValueError("rotation part must be orthogonal")
        object.__setattr__(self, "rotation", R)
        object.__setattr__(self, "translation", t)

    @property
    def dim(self) -> int:
        return self.body.dim

    def _support(self, U):
        return self.body._support(U @ self.rotation) + U @ self.translation

    def _support_point(self, U):
        return self.body._support_point(U @ self.rotation) @ self.rotation.T + self.translation

    def _project(self, X):
        local = (X - self.translation) @ self.rotation
        return self.body._project(local) @ self.rotation.T + self.translation

    def to_json(self):
        return {"type": "transformed", "rotation": self.rotation.tolist(),
                "translation": self.translation.tolist(), "body": self.body.to_json()}


@dataclass(frozen=True, eq=False)
class Embedded(ConvexBody):
    """A k-dimensional body placed in R^n by x = origin + basis @ y (orthonormal basis columns)."""

    basis: np.ndarray
    origin: np.ndarray
    body: ConvexBody

    def __post_init__(self):
        Q = np.asarray(self.basis, dtype=float)
        o = np.asarray(self.origin, dtype=float).reshape(-1)
        if Q.ndim != 2 or Q.shape[1] != self.body.dim or Q.shape[0] != o.size:
            raise DimensionError("embedding does not match body")
        if np.abs(Q.T @ Q - np.eye(Q.shape[1])).max() > 1e-10:
            raise ValueError("embedding basis must be orthonormal")
        object.__setattr__(self, "basis", Q)
        object.__setattr__(self, "origin", o)

    @property
    def dim(self) -> int:
        return self.origin.shape[0]

    def _support(self, U):
        return U @ self.origin + self.body._support(U @ self.basis)

    def _support_point(self, U):
        return self.origin + self.body._support_point(U @ self.basis) @ self.basis.T

    def _project(self, X):
        return self.origin + self.body._project((X - self.origin) @ self.basis) @ self.basis.T

    def to_json(self):
        return {"type": "embedded", "basis": self.basis.tolist(), "origin": self.origin.tolist(),
                "body": self.body.to_json()}


def diagonal(body: ConvexBody, copies: int = 2) -> Embedded:
    """The diagonal image {(k, ..., k) : k in K} in (R^n)^copies."""
    n = body.dim
    Q = np.vstack([np.eye(n)] * copies) / math.sqrt(copies)
    return Embedded(Q, np.zeros(n * copies), Scaled(math.sqrt(copies), body))


@dataclass(frozen=True, eq=False)
class Empty(ConvexBody):
    """The empty set; returned by slices that miss the body."""

    ambient: int

    @property
    def dim(self) -> int:
        return self.ambient

    @property
    def is_empty(self) -> bool:
        return True

    def _support(self, U):
        return np.full(len(U), -np.inf)

    def _support_point(self, U):
        return np.full(U.shape, np.nan)

    def _project(self, X):
        return np.full(X.shape, np.nan)

    def distance(self, x):
        X, single = _rows(x, self.dim)
        d = np.full(len(X), np.inf)
        return float(d[0]) if single else d

    def to_json(self):
        return {"type": "empty", "dim": self.ambient}


@dataclass(frozen=True, eq=False)
class MinkSum(ConvexBody):
    """Minkowski sum; use :func:`minkowski_sum`, which canonicalizes ball summands."""

    summands: tuple
    tol: float = DEFAULT_TOL
    max_iter: int = MAX_ITER

    def __post_init__(self):
        object.__setattr__(self, "summands", tuple(self.summands))
        dims = {s.dim for s in self.summands}
        if len(dims) != 1:
            raise DimensionError("Minkowski summands differ in dimension")

    @property
    def dim(self) -> int:
        return self.summands[0].dim

    @cached_property
    def _split(self):
        balls = [s for s in self.summands if isinstance(s, Ball)]
        rest = [s for s in self.summands if not isinstance(s, Ball)]
        return rest, (balls[0] if len(balls) == 1 else None)

    def _support(self, U):
        return sum(s._support(U) for s in self.summands)

    def _support_point(self, U):
        return sum(s._support_point(U) for s in self.summands)

    def _solve(self, X, decide: bool, tol: float):
        """Alternating block projection onto the summands with a support-function certificate.

        Returns (closest point, upper bound, lower bound) on dist(x, sum).
        """
        rest, ball = self._split
        if ball is not None and len(rest) == 1:
            K = rest[0]
            Y = X - ball.center
            q = K._project(Y)
            d = Y - q
            r = _norms(d)
            dist = np.maximum(r - ball.radius, 0.0)
            f = np.where(r > ball.radius, ball.radius / np.where(r > 0, r, 1.0), 1.0)
            pts = np.where((r > ball.radius)[:, None], q + ball.center + d * f[:, None], X)
            return pts, dist, dist
        parts = [np.broadcast_to(s.interior_point(), X.shape).copy() for s in self.summands]
        N = len(X)
        upper = np.full(N, np.inf)
        lower = np.zeros(N)
        out = np.zeros_like(X)
        active = np.arange(N)
        for _ in range(self.max_iter):
            Xa = X[active]
            total = sum(p for p in parts)
            for j, s in enumerate(self.summands):
                total = total - parts[j]
                parts[j] = s._project(Xa - total)
                total = total + parts[j]
            r = Xa - total
            up = _norms(r)
            u = r / np.where(up > 0, up, 1.0)[:, None]
            low = np.einsum("ij,ij->i", Xa, u) - sum(s._support(u) for s in self.summands)
            low = np.where(up > 0, np.maximum(low, 0.0), 0.0)
            if decide:
                done = (up <= tol) | (low > tol)
            else:
                done = (up <= tol) | (up - low <= tol)
            upper[active], lower[active] = up, low
            out[active] = total
            keep = ~done
            if not keep.any():
                return out, upper, lower
            active = active[keep]
            parts = [p[keep] for p in parts]
        if decide:
            # stragglers near the boundary: certified support-point iteration
            for i in active:
                hit, lower[i], upper[i] = gjk_decide(self._one_support_point, X[i], tol)
                if hit:
                    upper[i] = min(upper[i], tol)
                else:
                    lower[i] = max(lower[i], 2 * tol)
            return out, upper, lower
        gaps = upper[active] - lower[active]
        w = int(np.argmax(gaps))
        raise ConvergenceError(f"Minkowski-sum projection unresolved for {len(active)} points",
                               (float(lower[active][w]), float(upper[active][w])))

    def _one_support_point(self, u):
        return self._support_point(u[None, :])[0]

    def _project(self, X):
        return self._solve(X, decide=False, tol=self.tol)[0]

    def distance(self, x):
        X, single = _rows(x, self.dim)
        d = np.concatenate([self._solve(X[s:s + _CHUNK], False, self.tol)[1]
                            for s in range(0, len(X), _CHUNK)]) if len(X) else np.zeros(0)
        return float(d[0]) if single else d

    def contains(self, x, tol: float = DEFAULT_TOL):
        X, single = _rows(x, self.dim)
        res = []
        for s in range(0, len(X), _CHUNK):
            _, up, low = self._solve(X[s:s + _CHUNK], True, max(tol, 0.0))
            res.append(up <= tol)
        inside = np.concatenate(res) if res else np.zeros(0, bool)
        return bool(inside[0]) if single else inside

    def to_json(self):
        return {"type": "minksum", "summands": [s.to_json() for s in self.summands]}


# ---------------------------------------------------------------------------
# Canonicalizing constructors


def _is_point(body: ConvexBody) -> bool:
    return isinstance(body, Polytope) and len(body.vertices) == 1


def translate(body: ConvexBody, t) -> ConvexBody:
    t = np.asarray(t, dtype=float).reshape(-1)
    if t.shape != (body.dim,):
        raise DimensionError("translation does not match body dimension")
    if isinstance(body, Ball):
        return Ball(body.center + t, body.radius)
    if isinstance(body, Ellipsoid):
        return Ellipsoid(body.center + t, body.shape)
    if isinstance(body, Polytope):
        return Polytope(body.vertices + t)
    if isinstance(body, Box):
        return Box(body.lo + t, body.hi + t)
    if isinstance(body, Transformed):
        return Transformed(body.rotation, body.translation + t, body.body)
    if isinstance(body, Empty):
        return body
    return Transformed(np.eye(body.dim), t, body)


def scale(body: ConvexBody, factor: float) -> ConvexBody:
    if not factor > 0:
        raise ValueError("scale factor must be positive")
    if isinstance(body, Ball):
        return Ball(factor * body.center, factor * body.radius)
    if isinstance(body, Polytope):
        return Polytope(factor * body.vertices)
    if isinstance(body, Box):
        return Box(factor * body.lo, factor * body.hi)
    if isinstance(body, Ellipsoid):
        return Ellipsoid(factor * body.center, factor**2 * body.shape)
    if isinstance(body, Scaled):
        return Scaled(factor * body.factor, body.body)
    if isinstance(body, Empty):
        return body
    return Scaled(factor, body)


def minkowski_sum(*bodies: ConvexBody, tol: float = DEFAULT_TOL, max_iter: int = MAX_ITER) -> ConvexBody:
    """A + B + ...; balls are merged and points become translations."""
    flat: list[ConvexBody] = []
    for b in bodies:
        flat.extend(b.summands if isinstance(b, MinkSum) else [b])
    if len({b.dim for b in flat}) != 1:
        raise DimensionError("Minkowski summands differ in dimension")
    if any(b.is_empty for b in flat):
        return Empty(flat[0].dim)
    shift = np.zeros(flat[0].dim)
    radius = 0.0
    rest = []
    for b in flat:
        if isinstance(b, Ball):
            shift = shift + b.center
            radius += b.radius
        elif _is_point(b):
            shift = shift + b.vertices[0]
        else:
            rest.append(b)
    if not rest:
        return Ball(shift, radius) if radius > 0 else point(shift)
    if radius > 0:
        return MinkSum(tuple(rest) + (Ball(shift, radius),), tol, max_iter)
    if len(rest) == 1:
        return translate(rest[0], shift) if np.any(shift) else rest[0]
    body = MinkSum(tuple(rest), tol, max_iter)
    return translate(body, shift) if np.any(shift) else body


def parallel_body(body: ConvexBody, eps: float) -> ConvexBody:
    """K + eps D with D the unit ball."""
    if eps == 0:
        return body
    return minkowski_sum(body, Ball(np.zeros(body.dim), eps))


# ---------------------------------------------------------------------------
# Rigid motions and affine subspaces


@dataclass(frozen=True, eq=False)
class RigidMotion:
    rotation: np.ndarray
    translation: np.ndarray

    def __post_init__(self):
        R = np.asarray(self.rotation, dtype=float)
        t = np.asarray(self.translation, dtype=float).reshape(-1)
        if R.shape != (t.size, t.size):
            raise DimensionError("rotation and translation disagree in dimension")
        if np.abs(R.T @ R - np.eye(t.size)).max() > 1e-10:
            raise ValueError("rotation part must be orthogonal")
        object.__setattr__(self, "rotation", R)
        object.__setattr__(self, "translation", t)

    @property
    def dim(self) -> int:
        return self.translation.size

    def is_hermitian(self, tol: float = 1e-10) -> bool:
        if self.dim % 2:
            return False
        J = complex_structure(self.dim // 2)
        return bool(np.abs(self.rotation @ J - J @ self.rotation).max() <= tol)

    def apply_points(self, X):
        return np.asarray(X, float) @ self.rotation.T + self.translation

    def apply(self, body: ConvexBody) -> ConvexBody:
        R, t = self.rotation, self.translation
        if body.dim != self.dim:
            raise DimensionError("motion does not match body dimension")
        if isinstance(body, Ball):
            return Ball(R @ body.center + t, body.radius)
        if isinstance(body, Polytope):
            return Polytope(body.vertices @ R.T + t)
        if isinstance(body, Ellipsoid):
            return Ellipsoid(R @ body.center + t, R @ body.shape @ R.T)
        if isinstance(body, Transformed):
            return Transformed(R @ body.rotation, R @ body.translation + t, body.body)
        if isinstance(body, Empty):
            return body
        return Transformed(R, t, body)

    def compose(self, other: "RigidMotion") -> "RigidMotion":
        """self o other."""
        return RigidMotion(self.rotation @ other.rotation, self.rotation @ other.translation + self.translation)

    def inverse(self) -> "RigidMotion":
        return RigidMotion(self.rotation.T, -self.rotation.T @ self.translation)


@dataclass(frozen=True, eq=False)
class AffineSubspace:
    """base + span(basis columns); optionally closed under the complex structure."""

    base: np.ndarray
    basis: np.ndarray
    complex_compatible: bool = False

    def __post_init__(self):
        p = np.asarray(self.base, dtype=float).reshape(-1)
        B = np.asarray(self.basis, dtype=float).reshape(p.size, -1)
        if np.abs(B.T @ B - np.eye(B.shape[1])).max() > 1e-10:
            raise ValueError("spanning directions must be orthonormal")
        if self.complex_compatible:
            if p.size % 2:
                raise ValueError("complex subspace needs even ambient dimension")
            JB = complex_structure(p.size // 2) @ B
            if np.abs(JB - B @ (B.T @ JB)).max() > 1e-10:
                raise ValueError("span is not invariant under the complex structure")
        object.__setattr__(self, "base", p)
        object.__setattr__(self, "basis", B)

    @property
    def ambient(self) -> int:
        return self.base.size

    @property
    def dim(self) -> int:
        return self.basis.shape[1]

    def embed(self, y):
        return self.base + np.asarray(y, float) @ self.basis.T

    def coords(self, x):
        return (np.asarray(x, float) - self.base) @ self.basis

    def project(self, x):
        return self.embed(self.coords(x))

    def contains(self, x, tol: float = 1e-9):
        X, single = _rows(x, self.ambient)
        res = _norms(X - self.project(X)) <= tol
        return bool(res[0]) if single else res


# ---------------------------------------------------------------------------
# Volume


def _sphere_rule(n: int, resolution: int) -> tuple[np.ndarray, np.ndarray]:
    """Product quadrature on S^{n-1}: Gauss-Legendre in polar angles, trapezoid in azimuth."""
    if n == 1:
        return np.array([[1.0], [-1.0]]), np.ones(2)
    if n == 2:
        t = 2 * np.pi * np.arange(resolution) / resolution
        return np.column_stack([np.cos(t), np.sin(t)]), np.full(resolution, 2 * np.pi / resolution)
    sub_dirs, sub_w = _sphere_rule(n - 1, resolution)
    m = max(8, resolution // 2)
    x, w = np.polynomial.legendre.leggauss(m)
    psi = 0.5 * np.pi * (x + 1.0)
    wpsi = 0.5 * np.pi * w * np.sin(psi) ** (n - 2)
    dirs = np.concatenate([np.column_stack([np.full(len(sub_dirs), np.cos(p)), np.sin(p) * sub_dirs])
                           for p in psi])
    weights = np.concatenate([wp * sub_w for wp in wpsi])
    return dirs, weights


def radial_function(body: ConvexBody, center, U, offset: float = 0.0, rtol: float = 1e-14) -> np.ndarray:
    """rho(u) with dist(center + rho u, body) = offset, for center in the body.

    Newton iteration from outside on the convex, nondecreasing ray distance.
    """
    c = np.asarray(center, dtype=float)
    lo, hi = body.bbox(0.0)
    R = 2.0 * float(np.max(_norms(np.array([lo - c, hi - c])))) + 2.0 * offset + 1e-12
    rho = np.full(len(U), R)
    active = np.arange(len(U))
    for _ in range(200):
        X = c + rho[active, None] * U[active]
        P = body.project(X)
        d = X - P
        dist = _norms(d)
        g = dist - offset
        done = g <= rtol * (1.0 + rho[active])
        slope = np.einsum("ij,ij->i", U[active], d) / np.where(dist > 0, dist, 1.0)
        step = np.where(done, 0.0, g / np.where(slope > 0, slope, np.inf))
        new = rho[active] - step
        done |= step <= rtol * (1.0 + rho[active])
        rho[active] = new
        active = active[~done]
        if active.size == 0:
            return rho
    raise ConvergenceError("radial function did not converge", (0.0, float(R)))


def volume(body: ConvexBody, method: str = "exact", mc: MCConfig | None = None,
           resolution: int | None = None) -> MCEstimate:
    """Lebesgue volume.

    ``exact`` covers polytopes (simplicial decomposition), boxes, balls,
    ellipsoids and products/images of those; ``quadrature`` integrates the
    radial function over the sphere (dimension <= 4); ``montecarlo`` samples the
    support-function bounding box.
    """
    if method == "exact":
        v = _exact_volume(body)
        if v is None:
            raise ValueError(f"no exact volume for {type(body).__name__}")
        return MCEstimate.exact(v)
    if method == "quadrature":
        return MCEstimate.exact(_quadrature_volume(body, resolution))
    if method == "montecarlo":
        return _mc_volume(body, mc or MCConfig())
    raise ValueError(f"unknown volume method {method!r}")


def _exact_volume(body: ConvexBody) -> float | None:
    n = body.dim
    if isinstance(body, Ball):
        return unit_ball_volume(n) * body.radius**n
    if isinstance(body, Ellipsoid):
        return unit_ball_volume(n) * float(np.prod(body.semi_axes))
    if isinstance(body, (Polytope, Box)):
        return body.exact_volume()
    if isinstance(body, Empty):
        return 0.0
    if isinstance(body, Product):
        parts = [_exact_volume(f) for f in body.factors]
        return None if any(p is None for p in parts) else float(np.prod(parts))
    if isinstance(body, Scaled):
        v = _exact_volume(body.body)
        return None if v is None else body.factor**n * v
    if isinstance(body, Transformed):
        return _exact_volume(body.body)
    if isinstance(body, Embedded):
        if body.body.dim < n:
            return 0.0
        return _exact_volume(body.body)
    return None


def _quadrature_volume(body: ConvexBody, resolution: int | None = None, offset: float = 0.0) -> float:
    n = body.dim
    if n > 4:
        raise ValueError("radial quadrature is limited to dimension <= 4")
    if resolution is None:
        resolution = {1: 2, 2: 4096, 3: 256, 4: 96}[n]
    c = body.interior_point()
    U, w = _sphere_rule(n, resolution)
    rho = radial_function(body, c, U, offset)
    return float((w * rho**n).sum() / n)


class _MembershipKernel:
    def __init__(self, body: ConvexBody, lo, hi, tol: float):
        self.body, self.lo, self.hi, self.tol = body, lo, hi, tol

    def __call__(self, rng, size):
        X = self.lo + (self.hi - self.lo) * rng.random((size, len(self.lo)))
        return self.body.contains(X, self.tol).astype(float) * float(np.prod(self.hi - self.lo))


def _mc_volume(body: ConvexBody, mc: MCConfig) -> MCEstimate:
    lo, hi = body.bbox()
    if np.any(hi - lo <= 0):
        return MCEstimate(0.0, 0.0, mc.samples, mc.seed)
    return estimate(_MembershipKernel(body, lo, hi, 0.0), mc)


# ---------------------------------------------------------------------------
# Metric, intersection, slicing


def hausdorff_distance(A: ConvexBody, B: ConvexBody, n_dirs: int = 4096) -> float:
    """max over a nested direction sample of |h_A(u) - h_B(u)|."""
    if A.dim != B.dim:
        raise DimensionError("bodies live in different dimensions")
    if n_dirs <= 0:
        raise ValueError("n_dirs must be positive")
    U = direction_set(A.dim, n_dirs)
    return float(np.max(np.abs(A._support(U) - B._support(U))))


def alternating_gap_test(project_a: Callable, support_a: Callable, project_b: Callable,
                         support_b: Callable, start_b: np.ndarray, tol: float = DEFAULT_TOL,
                         max_iter: int = MAX_ITER, fallback: Callable | None = None) -> np.ndarray:
    """Batch decision of dist(A_s, B_s) <= tol by alternating projections.

    The callables take ``(points, index)`` where ``index`` selects the live
    samples, so A_s and B_s may vary per sample.  Each round certifies
    separation through the support functions along the current gap vector.

    Nearly tangent pairs converge slowly.  Pairs still open after
    ``max_iter`` rounds go to ``fallback(index) -> bool array`` when given
    (typically :func:`gjk_decide` per sample); otherwise they raise.
    """
    N = len(start_b)
    result = np.zeros(N, dtype=bool)
    active = np.arange(N)
    b = np.array(start_b, dtype=float)
    up = low = np.zeros(0)
    for _ in range(max_iter):
        a = project_a(b, active)
        b = project_b(a, active)
        d = a - b
        up = _norms(d)
        hit = up <= tol
        v = d / np.where(up > 0, up, 1.0)[:, None]
        low = -support_a(-v, active) - support_b(v, active)
        miss = (~hit) & (low > tol)
        result[active[hit]] = True
        keep = ~(hit | miss)
        if not keep.any():
            return result
        active, b, up, low = active[keep], b[keep], up[keep], low[keep]
    if fallback is not None:
        result[active] = fallback(active)
        return result
    w = int(np.argmax(up - low))
    raise ConvergenceError(f"intersection test unresolved for {len(active)} pairs",
                           (float(max(low[w], 0.0)), float(up[w])))


def _min_norm_enumerate(W: np.ndarray) -> tuple[np.ndarray, np.ndarray]:
    """Exact min-norm point of conv(W) by enumerating faces (small W only)."""
    m = len(W)
    best, best_idx, best_norm = W[0], np.array([0]), float(W[0] @ W[0])
    G_full = W @ W.T
    for size in range(2, m + 1):
        for idx in itertools.combinations(range(m), size):
            ix = list(idx)
            A = np.ones((size + 1, size + 1))
            A[:size, :size] = G_full[np.ix_(ix, ix)]
            A[size, size] = 0.0
            rhs = np.zeros(size + 1)
            rhs[-1] = 1.0
            try:
                lam = np.linalg.solve(A, rhs)[:size]
            except np.linalg.LinAlgError:
                continue
            if np.any(lam < -1e-12):
                continue
            lam = np.maximum(lam, 0.0)
            lam /= lam.sum()
            p = lam @ W[ix]
            nrm = float(p @ p)
            if nrm < best_norm - 1e-15 * max(1.0, best_norm):
                best, best_idx, best_norm = p, np.array(ix)[lam > 0], nrm
    for j in range(m):
        nrm = float(W[j] @ W[j])
        if nrm < best_norm - 1e-15 * max(1.0, best_norm):
            best, best_idx, best_norm = W[j], np.array([j]), nrm
    return best, best_idx


def _min_norm_hull(W: np.ndarray) -> tuple[np.ndarray, np.ndarray]:
    """Closest point to the origin in conv(W) (at most d+2 rows).

    Nonnegative least squares with the affine constraint as a heavily
    weighted extra row, renormalized so the point lies in the hull.  The
    optimality condition <w, p> >= |p|^2 is checked on every row; when it
    fails the faces are enumerated exactly.  Returns (point, indices of the
    supporting face).
    """
    big = 1e3 * max(1.0, float(np.abs(W).max()))
    A = np.vstack([W.T, np.full((1, len(W)), big)])
    rhs = np.zeros(A.shape[0])
    rhs[-1] = big
    lam, _ = nnls(A, rhs)
    if lam.sum() > 0:
        face = np.flatnonzero(lam > 0)
        # the weighted row limits NNLS to ~1e-7; redo the face exactly
        refined = _affine_min_norm(W[face])
        if refined is not None and _is_min_norm(W, refined[0]):
            return refined[0], face[refined[1]]
    return _min_norm_enumerate(W)


def _affine_min_norm(Wf: np.ndarray) -> tuple[np.ndarray, np.ndarray] | None:
    """Projection of the origin onto aff(Wf) if it lies in conv(Wf), else None."""
    if len(Wf) == 1:
        return Wf[0], np.array([0])
    D = (Wf[1:] - Wf[0]).T
    mu, *_ = np.linalg.lstsq(D, -Wf[0], rcond=None)
    lam = np.concatenate([[1.0 - mu.sum()], mu])
    if np.any(lam < -1e-12):
        return None
    return Wf[0] + D @ mu, np.flatnonzero(lam > 0)


def _is_min_norm(W: np.ndarray, p: np.ndarray) -> bool:
    """Optimality on conv(W): <w, p> >= |p|^2 for every row, up to rounding."""
    wmax = float(np.abs(W).max())
    slack = 1e-12 * float(np.linalg.norm(p)) * wmax + 1e-15 * wmax**2
    return float(np.min(W @ p)) >= float(p @ p) - slack


def gjk_decide(support_point: Callable[[np.ndarray], np.ndarray], z: np.ndarray, tol: float = DEFAULT_TOL,
               max_iter: int = 500) -> tuple[bool, float, float]:
    """Decide dist(z, S) <= tol from the support points of S alone.

    Minimum-norm-point iteration on S - z (the GJK distance algorithm).
    Returns (decision, lower bound, upper bound) on the distance; raises
    ConvergenceError when the bracket still straddles ``tol``.
    """
    z = np.asarray(z, dtype=float)
    d = len(z)
    w = support_point(np.eye(d)[0]) - z
    W = w[None, :]
    up, low = float(np.linalg.norm(w)), 0.0
    for _ in range(max_iter):
        p, face = _min_norm_hull(W)
        up = float(np.linalg.norm(p))
        if up <= tol:
            return True, low, up
        v = -p / up
        w = support_point(v) - z
        low = max(low, -float(w @ v))
        if low > tol:
            return False, low, up
        if up - low <= 1e-15 * max(1.0, up):
            break
        W = np.vstack([W[face], w])
    raise ConvergenceError("support-point distance iteration did not separate from the tolerance", (low, up))


def intersect_nonempty(A: ConvexBody, B: ConvexBody, tol: float = DEFAULT_TOL,
                       max_iter: int = MAX_ITER) -> bool:
    """True iff dist(A, B) <= tol."""
    if A.dim != B.dim:
        raise DimensionError("bodies live in different dimensions")
    if A.is_empty or B.is_empty:
        return False
    if isinstance(B, Ball):
        return bool(A.distance(B.center) <= B.radius + tol)
    if isinstance(A, Ball):
        return bool(B.distance(A.center) <= A.radius + tol)
    res = alternating_gap_test(
        lambda X, idx: A._project(X), lambda U, idx: A._support(U),
        lambda X, idx: B._project(X), lambda U, idx: B._support(U),
        B.interior_point()[None, :], tol, max_iter)
    return bool(res[0])


def _polytope_from_halfspaces(A: np.ndarray, b: np.ndarray, d: int, tol: float = 1e-10) -> ConvexBody:
    """{y in R^d : A y <= b} for bounded systems, by brute-force vertex enumeration."""
    row = np.linalg.norm(A, axis=1)
    flat = row <= tol
    if np.any(b[flat] < -tol):
        return Empty(d)
    A, b = A[~flat] / row[~flat, None], b[~flat] / row[~flat]
    if d == 0:
        return point(np.zeros(0)) if np.all(b >= -tol) else Empty(0)
    verts = []
    for combo in itertools.combinations(range(len(A)), d):
        M = A[list(combo)]
        if abs(np.linalg.det(M)) < 1e-12:
            continue
        y = np.linalg.solve(M, b[list(combo)])
        if np.all(A @ y <= b + 1e-9):
            verts.append(y)
    if not verts:
        return Empty(d)
    V = np.unique(np.round(np.array(verts), 12), axis=0)
    return Polytope(V)


def slice_body(body: ConvexBody, E: AffineSubspace) -> ConvexBody:
    """K ∩ E in the intrinsic coordinates of E (an :class:`Empty` when they miss)."""
    if body.dim != E.ambient:
        raise DimensionError("subspace and body live in different dimensions")
    d = E.dim
    if isinstance(body, Empty):
        return Empty(d)
    if isinstance(body, Ball):
        rel = body.center - E.base
        y = rel @ E.basis
        h2 = float(rel @ rel - y @ y)
        s2 = body.radius**2 - h2
        if s2 < 0:
            return Empty(d)
        if s2 <= 1e-24:
            return point(y)
        return Ball(y, math.sqrt(s2))
    if isinstance(body, Ellipsoid):
        Qi = np.linalg.inv(body.shape)
        rel = E.base - body.center
        M = E.basis.T @ Qi @ E.basis
        g = E.basis.T @ Qi @ rel
        y0 = -np.linalg.solve(M, g)
        s = 1.0 - float(rel @ Qi @ rel) + float(g @ np.linalg.solve(M, g))
        if s < 0:
            return Empty(d)
        if s <= 1e-24:
            return point(y0)
        return Ellipsoid(y0, s * np.linalg.inv(M))
    if isinstance(body, (Polytope, Box)):
        A, b = body.halfspaces()
        return _polytope_from_halfspaces(A @ E.basis, b - A @ E.base, d)
    if isinstance(body, Transformed):
        R, t = body.rotation, body.translation
        inner = AffineSubspace(R.T @ (E.base - t), R.T @ E.basis)
        return slice_body(body.body, inner)
    if isinstance(body, Scaled):
        inner = AffineSubspace(E.base / body.factor, E.basis)
        return scale(slice_body(body.body, inner), body.factor)
    if isinstance(body, Product) and all(isinstance(f, (Box, Polytope)) for f in body.factors):
        if all(isinstance(f, Box) for f in body.factors):
            flat = Box(np.concatenate([f.lo for f in body.factors]), np.concatenate([f.hi for f in body.factors]))
            return slice_body(flat, E)
        polys = [f.to_polytope() if isinstance(f, Box) else f for f in body.factors]
        verts = [np.concatenate(c) for c in itertools.product(*[p.vertices for p in polys])]
        return slice_body(Polytope(np.array(verts)), E)
    raise NotImplementedError(f"slicing is not available for {type(body).__name__}")


def slice_nonempty(body: ConvexBody, E: AffineSubspace, tol: float = DEFAULT_TOL) -> bool:
    """K ∩ E != ∅, certified by alternating projections between K and E."""
    res = alternating_gap_test(
        lambda X, idx: body._project(X), lambda U, idx: body._support(U),
        lambda X, idx: E.project(X), lambda U, idx: _flat_support(E, U),
        E.base[None, :], tol)
    return bool(res[0])


def _flat_support(E: AffineSubspace, U: np.ndarray) -> np.ndarray:
    along = U @ E.basis
    h = U @ E.base
    return np.where(_norms(along) <= 1e-12 * np.maximum(1.0, _norms(U)), h, np.inf)


# ---------------------------------------------------------------------------
# JSON


def body_from_json(spec: dict) -> ConvexBody:
    kind = spec.get("type")
    if kind == "ball":
        return Ball(spec["center"], float(spec["radius"]))
    if kind == "ellipsoid":
        if "semi_axes" in spec:
            return Ellipsoid.axis_aligned(spec["center"], spec["semi_axes"])
        return Ellipsoid(spec["center"], spec["shape"])
    if kind == "polytope":
        return Polytope(spec["vertices"])
    if kind == "point":
        return point(spec["x"])
    if kind == "box":
        return Box(spec["lo"], spec["hi"])
    if kind == "product":
        return Product(tuple(body_from_json(f) for f in spec["factors"]))
    if kind == "minksum":
        return minkowski_sum(*[body_from_json(s) for s in spec["summands"]])
    if kind == "scaled":
        return Scaled(float(spec["factor"]), body_from_json(spec["body"]))
    if kind == "transformed":
        return Transformed(spec["rotation"], spec["translation"], body_from_json(spec["body"]))
    if kind == "embedded":
        return Embedded(spec["basis"], spec["origin"], body_from_json(spec["body"]))
    if kind == "empty":
        return Empty(int(spec["dim"]))
    raise ValueError(f"unknown body type {kind!r}")
