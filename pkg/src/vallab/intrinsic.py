"""Intrinsic volumes V_0..V_n, normalized so that V_i(unit ball) = omega_n for every i.

Two independent routes:

* Steiner route -- fit vol(K + eps D) = sum_j c_j eps^j and convert
  V_i = gamma_{n,i} c_{n-i}.  The parallel volumes come from closed forms,
  radial quadrature or Monte Carlo with common random numbers.
* Curvature route -- quadrature of elementary symmetric polynomials of the
  principal curvatures over a parameterized boundary.

The conversion constants gamma_{n,i} are solved from the unit ball, where the
curvature integrand is known exactly.
"""
from __future__ import annotations

import math
from dataclasses import dataclass
from functools import lru_cache
from typing import Callable

import numpy as np
from numpy.polynomial import polynomial as P
from scipy.special import ellipe

from . import bodies as B
from .bodies import ConvexBody, unit_ball_volume
from .mc import MCConfig, MCEstimate, VectorEstimate, sample_mean

METHODS = ("auto", "exact", "quadrature", "montecarlo")


class SteinerConditionError(ValueError):
    def __init__(self, condition: float):
        super().__init__(f"Steiner radii give Vandermonde condition {condition:.3g} >= 1e8")
        self.condition = condition


class ExtrapolationError(RuntimeError):
    pass


def elementary_symmetric(values, j: int) -> float:
    """e_j of the given numbers (e_0 = 1)."""
    coeffs = np.atleast_1d(np.poly(np.asarray(values, dtype=float)))  # prod (x - v)
    return float((-1) ** j * coeffs[j]) if j < len(coeffs) else 0.0


@lru_cache(maxsize=None)
def _conversion(n: int) -> tuple[float, ...]:
    omega = unit_ball_volume(n)
    sphere_area = n * omega  # d/dr of omega r^n at r = 1
    ball_poly = omega * P.polypow([1.0, 1.0], n)  # vol(B + eps D) = omega (1 + eps)^n
    out = []
    for i in range(n + 1):
        if i == n:
            vi = omega
        else:
            curv = elementary_symmetric(np.ones(n - 1), n - 1 - i)
            vi = curv * sphere_area / (n * math.comb(n - 1, n - 1 - i))
        out.append(vi / ball_poly[n - i])
    return tuple(out)


def conversion_constants(n: int) -> np.ndarray:
    """gamma_{n,i}, i = 0..n, with V_i = gamma_{n,i} * c_{n-i}."""
    return np.array(_conversion(n))


# ---------------------------------------------------------------------------
# Closed-form parallel volumes


def _std_from_steiner(c: np.ndarray) -> np.ndarray:
    """Dimension-free intrinsic volumes (Steiner coefficient over omega_j)."""
    n = len(c) - 1
    return np.array([c[n - j] / unit_ball_volume(n - j) for j in range(n + 1)])


def _steiner_from_std(std: np.ndarray, n: int) -> np.ndarray:
    full = np.zeros(n + 1)
    full[: len(std)] = std[: n + 1]
    return np.array([unit_ball_volume(j) * full[n - j] for j in range(n + 1)])


def _polytope_std(body: B.Polytope) -> np.ndarray | None:
    o, basis, k, geom = body.frame
    if k == 0:
        return np.array([1.0])
    if k == 1:
        return np.array([1.0, geom[1] - geom[0]])
    if k == 2:
        pts = geom.points[geom.hull.vertices]
        perim = float(np.linalg.norm(np.roll(pts, -1, axis=0) - pts, axis=1).sum())
        return _std_from_steiner(np.array([geom.volume(), perim, math.pi]))
    if k == 3:
        hull = geom.hull
        tri = geom.points[hull.simplices]
        cross = np.cross(tri[:, 1] - tri[:, 0], tri[:, 2] - tri[:, 0])
        area = 0.5 * float(np.linalg.norm(cross, axis=1).sum())
        normals = geom.A
        edge_term = 0.0
        for s, nbrs in enumerate(hull.neighbors):
            for i, t in enumerate(nbrs):
                if t <= s:
                    continue
                verts = np.delete(hull.simplices[s], i)
                length = float(np.linalg.norm(geom.points[verts[0]] - geom.points[verts[1]]))
                angle = math.atan2(np.linalg.norm(np.cross(normals[s], normals[t])), normals[s] @ normals[t])
                edge_term += 0.5 * length * angle
        return _std_from_steiner(np.array([geom.volume(), area, edge_term, 4 * math.pi / 3]))
    return None


def _exact_std(body: ConvexBody) -> np.ndarray | None:
    """Dimension-free intrinsic volumes when a closed form is available."""
    if isinstance(body, B.Empty):
        return np.zeros(body.dim + 1)
    if isinstance(body, B.Ball):
        n = body.dim
        c = unit_ball_volume(n) * np.array([math.comb(n, j) * body.radius ** (n - j) for j in range(n + 1)])
        return _std_from_steiner(c)
    if isinstance(body, B.Box):
        return _box_std(body)
    if isinstance(body, B.Polytope):
        return _polytope_std(body)
    if isinstance(body, B.Ellipsoid) and body.dim == 1:
        return np.array([1.0, 2 * body.semi_axes[0]])
    if isinstance(body, B.Ellipsoid) and body.dim == 2:
        b, a = np.sort(body.semi_axes)
        perimeter = 4 * a * ellipe(1.0 - (b / a) ** 2)
        return np.array([1.0, perimeter / 2, math.pi * a * b])
    if isinstance(body, B.Product):
        out = np.array([1.0])
        for f in body.factors:
            s = _exact_std(f)
            if s is None:
                return None
            out = np.convolve(out, s)
        return out
    if isinstance(body, B.Scaled):
        s = _exact_std(body.body)
        return None if s is None else s * body.factor ** np.arange(len(s))
    if isinstance(body, (B.Transformed, B.Embedded)):
        return _exact_std(body.body)
    if isinstance(body, B.MinkSum):
        rest, ball = body._split
        if ball is not None and len(rest) == 1:
            inner = exact_steiner(rest[0])
            if inner is None:
                return None
            # vol(K + rD + eps D) = p(r + eps)
            coeffs = np.zeros(body.dim + 1)
            for j, cj in enumerate(inner):
                coeffs[: j + 1] += cj * P.polypow([ball.radius, 1.0], j)
            return _std_from_steiner(coeffs)
    return None


def _box_std(box: B.Box) -> np.ndarray:
    std = np.array([1.0])
    for L in box.sides:
        std = np.convolve(std, [1.0, L])
    return std


def exact_steiner(body: ConvexBody) -> np.ndarray | None:
    """Closed-form Steiner coefficients c_0..c_n, or None when unavailable."""
    std = _exact_std(body)
    if std is None:
        return None
    return _steiner_from_std(std, body.dim)


# ---------------------------------------------------------------------------
# Steiner fit


@dataclass(frozen=True)
class SteinerCoeffs:
    """vol(K + eps D) = sum_j coeffs[j] eps^j, with per-coefficient standard errors."""

    n: int
    coeffs: np.ndarray
    stderr: np.ndarray
    radii: np.ndarray
    residual: float
    condition: float
    method: str
    samples: int = 0
    seed: int | None = None

    def coefficient(self, j: int) -> MCEstimate:
        return MCEstimate(float(self.coeffs[j]), float(self.stderr[j]), self.samples, self.seed)

    def intrinsic(self, i: int) -> MCEstimate:
        return self.coefficient(self.n - i) * conversion_constants(self.n)[i]

    def __call__(self, eps):
        return P.polyval(eps, self.coeffs)


def default_radii(body: ConvexBody) -> np.ndarray:
    n = body.dim
    return 0.1 * body.diameter() * np.arange(1, n + 3)


def _vandermonde(radii: np.ndarray, n: int) -> tuple[np.ndarray, float]:
    V = np.vander(radii, n + 1, increasing=True)
    return V, float(np.linalg.cond(V))


class _SteinerKernel:
    """Common-random-number estimator: one distance per sample serves every radius."""

    def __init__(self, body: ConvexBody, lo, hi, radii, V):
        self.body, self.lo, self.hi, self.radii = body, lo, hi, radii
        self.fit = np.linalg.pinv(V)
        self.misfit = np.eye(len(radii)) - V @ self.fit
        self.vol = float(np.prod(hi - lo))

    def __call__(self, rng, size):
        X = self.lo + (self.hi - self.lo) * rng.random((size, len(self.lo)))
        d = self.body.distance(X)
        y = (d[:, None] <= self.radii[None, :]).astype(float) * self.vol
        return np.hstack([y @ self.fit.T, y @ self.misfit.T])


def resolve_method(body: ConvexBody, method: str) -> str:
    if method not in METHODS:
        raise ValueError(f"unknown method {method!r}")
    if method != "auto":
        return method
    if exact_steiner(body) is not None:
        return "exact"
    return "quadrature" if body.dim <= 3 else "montecarlo"


def steiner_fit(body: ConvexBody, radii=None, mc: MCConfig | None = None, method: str = "auto",
                resolution: int | None = None) -> SteinerCoeffs:
    """Least-squares degree-n polynomial through vol(K + eps D) at the given radii."""
    n = body.dim
    method = resolve_method(body, method)
    if method == "exact":
        c = exact_steiner(body)
        if c is None:
            raise ValueError(f"no closed-form Steiner polynomial for {type(body).__name__}")
        return SteinerCoeffs(n, c, np.zeros(n + 1), np.zeros(0), 0.0, 1.0, "exact")
    radii = default_radii(body) if radii is None else np.asarray(radii, dtype=float)
    if np.any(radii <= 0):
        raise ValueError("Steiner radii must be positive")
    if len(np.unique(radii)) < n + 1:
        raise ValueError(f"need at least {n + 1} distinct radii")
    V, _ = _vandermonde(radii, n)
    # conditioning is judged on radii scaled to unit maximum (column scaling is harmless)
    cond = _vandermonde(radii / radii.max(), n)[1]
    if cond >= 1e8:
        raise SteinerConditionError(cond)
    if method == "quadrature":
        vols = np.array([B._quadrature_volume(body, resolution, offset=0.0) if e == 0 else
                         _parallel_quadrature(body, e, resolution) for e in radii])
        c, *_ = np.linalg.lstsq(V, vols, rcond=None)
        res = float(np.linalg.norm(V @ c - vols) / max(np.linalg.norm(vols), 1e-300))
        return SteinerCoeffs(n, c, np.zeros(n + 1), radii, res, cond, "quadrature")
    mc = mc or MCConfig()
    lo, hi = body.bbox()
    lo, hi = lo - radii.max(), hi + radii.max()
    est: VectorEstimate = sample_mean(_SteinerKernel(body, lo, hi, radii, V), mc)
    coeffs, se = est.mean[: n + 1], est.stderr[: n + 1]
    # misfit of the mean volumes, in units of its own standard error
    mis, mis_se = est.mean[n + 1:], est.stderr[n + 1:]
    ok = mis_se > 0
    res = float(np.sqrt(np.mean((mis[ok] / mis_se[ok]) ** 2))) if ok.any() else 0.0
    return SteinerCoeffs(n, coeffs, se, radii, res, cond, "montecarlo", est.samples, est.seed)


def _parallel_quadrature(body: ConvexBody, eps: float, resolution: int | None) -> float:
    n = body.dim
    if n > 4:
        raise ValueError("radial quadrature is limited to dimension <= 4")
    if resolution is None:
        resolution = {1: 2, 2: 4096, 3: 256, 4: 96}[n]
    c = body.interior_point()
    U, w = B._sphere_rule(n, resolution)
    rho = B.radial_function(body, c, U, offset=eps)
    return float((w * rho**n).sum() / n)


def intrinsic_volume(body: ConvexBody, i: int, mc: MCConfig | None = None, method: str = "auto",
                     radii=None, resolution: int | None = None) -> MCEstimate:
    """V_i(K) through the Steiner route."""
    n = body.dim
    if not 0 <= i <= n:
        raise ValueError(f"intrinsic volume index {i} outside 0..{n}")
    return steiner_fit(body, radii, mc, method, resolution).intrinsic(i)


def intrinsic_volumes(body: ConvexBody, mc: MCConfig | None = None, method: str = "auto",
                      radii=None, resolution: int | None = None) -> list[MCEstimate]:
    fit = steiner_fit(body, radii, mc, method, resolution)
    return [fit.intrinsic(i) for i in range(body.dim + 1)]


# ---------------------------------------------------------------------------
# Curvature route


@dataclass(frozen=True)
class CurvatureBoundary:
    """A closed C^2 hypersurface given by a parameterization.

    ``rule(resolution)`` returns quadrature nodes and weights on the
    parameter domain; ``curvatures(nodes)`` returns the principal curvatures
    (shape ``(M, n-1)``) and ``area_element(nodes)`` the density of the
    induced surface measure.  For n = 1 the boundary is a finite point set
    with counting measure.
    """

    n: int
    rule: Callable[[int], tuple[np.ndarray, np.ndarray]]
    curvatures: Callable[[np.ndarray], np.ndarray]
    area_element: Callable[[np.ndarray], np.ndarray]
    position: Callable[[np.ndarray], np.ndarray] | None = None
    default_resolution: int = 256


def _periodic_rule(m: int):
    t = 2 * np.pi * np.arange(m) / m
    return t[:, None], np.full(m, 2 * np.pi / m)


def segment_boundary(a: float, b: float) -> CurvatureBoundary:
    """Endpoints of [a, b] in R^1."""
    return CurvatureBoundary(
        1, lambda m: (np.array([[a], [b]]), np.ones(2)),
        lambda s: np.zeros((len(s), 0)), lambda s: np.ones(len(s)),
        lambda s: s.copy(), 2)


def support_curve(h: Callable, dh: Callable, d2h: Callable) -> CurvatureBoundary:
    """Planar convex curve from its support function h(theta) and two derivatives.

    Radius of curvature is h + h''; the boundary point is h u + h' u'.
    """
    def radius(s):
        t = s[:, 0]
        return h(t) + d2h(t)

    def position(s):
        t = s[:, 0]
        u = np.column_stack([np.cos(t), np.sin(t)])
        up = np.column_stack([-np.sin(t), np.cos(t)])
        return h(t)[:, None] * u + dh(t)[:, None] * up

    return CurvatureBoundary(2, _periodic_rule, lambda s: (1.0 / radius(s))[:, None], radius, position, 4096)


def circle_boundary(r: float = 1.0) -> CurvatureBoundary:
    return support_curve(lambda t: np.full_like(t, r), np.zeros_like, np.zeros_like)


def ellipse_boundary(a: float, b: float) -> CurvatureBoundary:
    """Ellipse with semi-axes a (x) and b (y), through its support function."""
    da = b * b - a * a

    def g(t):
        return a * a * np.cos(t) ** 2 + b * b * np.sin(t) ** 2

    def h(t):
        return np.sqrt(g(t))

    def dh(t):
        return da * np.sin(2 * t) / (2 * h(t))

    def d2h(t):
        gp = da * np.sin(2 * t)
        gpp = 2 * da * np.cos(2 * t)
        return gpp / (2 * h(t)) - gp**2 / (4 * g(t) ** 1.5)

    return support_curve(h, dh, d2h)


def _ellipsoid_forms(a: float, b: float, c: float, s: np.ndarray):
    th, ph = s[:, 0], s[:, 1]
    st, ct, sp, cp = np.sin(th), np.cos(th), np.sin(ph), np.cos(ph)
    x = np.column_stack([a * st * cp, b * st * sp, c * ct])
    xt = np.column_stack([a * ct * cp, b * ct * sp, -c * st])
    xp = np.column_stack([-a * st * sp, b * st * cp, np.zeros_like(st)])
    xtt = -x
    xtp = np.column_stack([-a * ct * sp, b * ct * cp, np.zeros_like(st)])
    xpp = np.column_stack([-a * st * cp, -b * st * sp, np.zeros_like(st)])
    N = np.cross(xt, xp)
    area = np.linalg.norm(N, axis=1)
    N = N / area[:, None]
    N = N * np.sign(np.einsum("ij,ij->i", N, x))[:, None]  # outward
    E, F, G = (np.einsum("ij,ij->i", u, v) for u, v in ((xt, xt), (xt, xp), (xp, xp)))
    # second fundamental form w.r.t. the inward normal: positive for convex surfaces
    L, M, Nn = (-np.einsum("ij,ij->i", u, N) for u in (xtt, xtp, xpp))
    return x, area, (E, F, G), (L, M, Nn)


def ellipsoid_boundary(a: float, b: float, c: float) -> CurvatureBoundary:
    """Ellipsoid x^2/a^2 + y^2/b^2 + z^2/c^2 = 1; curvatures from the fundamental forms."""

    def rule(m):
        x, w = np.polynomial.legendre.leggauss(max(8, m // 2))
        th = 0.5 * np.pi * (x + 1)
        wt = 0.5 * np.pi * w
        ph = 2 * np.pi * np.arange(m) / m
        T, Ph = np.meshgrid(th, ph, indexing="ij")
        W = np.outer(wt, np.full(m, 2 * np.pi / m))
        return np.column_stack([T.ravel(), Ph.ravel()]), W.ravel()

    def curvatures(s):
        _, _, (E, F, G), (L, M, N) = _ellipsoid_forms(a, b, c, s)
        det1 = E * G - F * F
        mean2 = (E * N - 2 * F * M + G * L) / det1  # k1 + k2
        gauss = (L * N - M * M) / det1  # k1 k2
        disc = np.sqrt(np.maximum(mean2**2 - 4 * gauss, 0.0))
        return np.column_stack([0.5 * (mean2 - disc), 0.5 * (mean2 + disc)])

    return CurvatureBoundary(3, rule, curvatures, lambda s: _ellipsoid_forms(a, b, c, s)[1],
                             lambda s: _ellipsoid_forms(a, b, c, s)[0], 256)


def sphere_boundary(r: float = 1.0) -> CurvatureBoundary:
    return ellipsoid_boundary(r, r, r)


def _elementary_rows(K: np.ndarray, j: int) -> np.ndarray:
    """e_j of each row."""
    e = np.zeros((len(K), j + 1))
    e[:, 0] = 1.0
    for col in K.T:
        e[:, 1:] = e[:, 1:] + col[:, None] * e[:, :-1]
    return e[:, j]


def curvature_intrinsic_volume(boundary: CurvatureBoundary, i: int, resolution: int | None = None) -> float:
    """(1/n) C(n-1, n-1-i)^{-1} times the surface integral of e_{n-1-i}(k_1..k_{n-1})."""
    n = boundary.n
    if not 0 <= i <= n - 1:
        raise ValueError(f"curvature route covers 0 <= i <= {n - 1}")
    nodes, weights = boundary.rule(resolution or boundary.default_resolution)
    K = boundary.curvatures(nodes)
    if K.size and K.min() < -1e-9:
        raise ValueError("negative principal curvature: boundary is not convex")
    j = n - 1 - i
    integrand = _elementary_rows(K, j) * boundary.area_element(nodes)
    return float((weights * integrand).sum() / (n * math.comb(n - 1, j)))


# ---------------------------------------------------------------------------
# Lambda operator


@dataclass(frozen=True)
class LambdaResult:
    value: float
    error: float
    table: np.ndarray


def _as_float(v) -> float:
    return float(v.mean) if isinstance(v, MCEstimate) else float(v)


def lambda_apply(phi: Callable[[ConvexBody], float | MCEstimate], body: ConvexBody,
                 h0: float | None = None, levels: int | None = None) -> LambdaResult:
    """d/d eps of phi(K + eps D) at eps = 0+, by Richardson extrapolation of forward differences.

    Steps are h0 / 2^k, k = 0..levels-1, all positive.  ``phi`` should be
    deterministic (exact or quadrature evaluation); Monte Carlo noise is
    amplified by the differencing.
    """
    n = body.dim
    h0 = 0.25 * body.diameter() if h0 is None else float(h0)
    levels = n + 2 if levels is None else int(levels)
    if h0 <= 0 or levels < 1:
        raise ValueError("need a positive step and at least one level")
    f0 = _as_float(phi(body))
    R = np.full((levels, levels), np.nan)
    for k in range(levels):
        h = h0 / 2**k
        R[k, 0] = (_as_float(phi(B.parallel_body(body, h))) - f0) / h
        for j in range(1, k + 1):
            R[k, j] = (2**j * R[k, j - 1] - R[k - 1, j - 1]) / (2**j - 1)
    diag = np.diag(R)
    value = float(diag[-1])
    err = float(abs(diag[-1] - diag[-2])) if levels > 1 else float("nan")
    scale = max(abs(value), abs(R[0, 0]), 1e-300)
    if not np.isfinite(value) or (levels > 2 and err > 1e-2 * scale and err > abs(diag[-2] - diag[-3])):
        raise ExtrapolationError(f"Richardson table diverges (estimate {value}, error {err})")
    return LambdaResult(value, err, R)


def lambda_matrix(n: int, bodies: list[ConvexBody], method: str = "auto") -> tuple[np.ndarray, np.ndarray]:
    """Numerically realized matrix of Lambda on span(V_0..V_n).

    Entry [i, i-1] is the ratio (Lambda V_i)(K) / V_{i-1}(K), averaged over
    the bodies; the second array holds the spread of that ratio.  All other
    entries are zero because Lambda lowers the degree by one.
    """
    M = np.zeros((n + 1, n + 1))
    spread = np.zeros((n + 1, n + 1))
    for i in range(1, n + 1):
        ratios = []
        for K in bodies:
            def phi(L, i=i):
                return intrinsic_volume(L, i, method=method)
            lam = lambda_apply(phi, K)
            ratios.append(lam.value / intrinsic_volume(K, i - 1, method=method).mean)
        M[i, i - 1] = float(np.mean(ratios))
        spread[i, i - 1] = float(np.ptp(ratios))
    return M, spread


def lefschetz_power(M: np.ndarray, k: int) -> float:
    """Coefficient of Lambda^{2k-n}: span(V_k) -> span(V_{n-k})."""
    n = M.shape[0] - 1
    if not 2 * k > n:
        raise ValueError("hard Lefschetz map needs k > n/2")
    coeff = 1.0
    for j in range(k, n - k, -1):
        coeff *= M[j, j - 1]
    return coeff
