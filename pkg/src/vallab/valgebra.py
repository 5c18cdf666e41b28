"""Valuations as oracles, their G-representations, grading and the product.

A :class:`GRep` stores a valuation as a finite sum of terms

    K  ->  integral over {(x_1..x_k) : K meets every x_i - A_i} of p_1(x_1)...p_k(x_k)

plus a multiple of the Euler characteristic chi.  Ordinary terms have one
factor (k = 1) and reduce to the integral of p over K + A.  Products of
G-representations are again sums of such terms, with the number of factors
adding up, so the product is closed under this representation and can be
evaluated by Monte Carlo in k*n dimensions.
"""
from __future__ import annotations

import itertools
import math
from dataclasses import dataclass, field
from typing import Callable, Sequence

import numpy as np

from . import bodies as B
from .bodies import Ball, Box, ConvexBody, Polytope, unit_ball_volume
from .intrinsic import exact_steiner, intrinsic_volumes, resolve_method
from .mc import MCConfig, MCEstimate, VectorEstimate, sample_mean

PARITIES = ("even", "odd", "mixed")
GROUPS = ("none", "SO", "O", "U")
MAX_PRODUCT_DIM = 2
# alternating projections hand near-tangent lens tests to the support-point solver after this
LENS_MAX_ITER = 300


# ---------------------------------------------------------------------------
# Polynomial densities


@dataclass(frozen=True)
class Polynomial:
    """Polynomial in n variables stored as ``{exponent tuple: coefficient}``."""

    n: int
    coeffs: tuple = ()

    def __post_init__(self):
        clean = {}
        for exps, c in dict(self.coeffs).items():
            exps = tuple(int(e) for e in exps)
            if len(exps) != self.n or min(exps, default=0) < 0:
                raise ValueError(f"bad exponent {exps} for {self.n} variables")
            if c != 0:
                clean[exps] = clean.get(exps, 0.0) + float(c)
        object.__setattr__(self, "coeffs", tuple(sorted(clean.items())))

    @classmethod
    def constant(cls, n: int, c: float = 1.0) -> "Polynomial":
        return cls(n, (((0,) * n, c),))

    @classmethod
    def monomial(cls, exps, c: float = 1.0) -> "Polynomial":
        exps = tuple(exps)
        return cls(len(exps), ((exps, c),))

    @property
    def degree(self) -> int:
        return max((sum(e) for e, _ in self.coeffs), default=0)

    @property
    def is_constant(self) -> bool:
        return self.degree == 0

    @property
    def constant_value(self) -> float:
        return dict(self.coeffs).get((0,) * self.n, 0.0)

    def __call__(self, X) -> np.ndarray:
        X = np.atleast_2d(np.asarray(X, dtype=float))
        out = np.zeros(len(X))
        for exps, c in self.coeffs:
            term = np.full(len(X), c)
            for i, e in enumerate(exps):
                if e:
                    term = term * X[:, i] ** e
            out += term
        return out

    def __mul__(self, c: float) -> "Polynomial":
        return Polynomial(self.n, tuple((e, c * v) for e, v in self.coeffs))

    __rmul__ = __mul__

    def to_json(self) -> dict:
        return {",".join(map(str, e)): c for e, c in self.coeffs}

    @classmethod
    def from_json(cls, spec, n: int) -> "Polynomial":
        if isinstance(spec, (int, float)):
            return cls.constant(n, float(spec))
        items = []
        for key, c in spec.items():
            exps = tuple(int(s) for s in str(key).split(",")) if str(key).strip() else (0,) * n
            items.append((exps, float(c)))
        return cls(n, tuple(items))


# ---------------------------------------------------------------------------
# G-representations


@dataclass(frozen=True)
class Term:
    """One summand: densities p_i and structuring bodies A_i, i = 1..k."""

    densities: tuple
    bodies: tuple

    def __post_init__(self):
        object.__setattr__(self, "densities", tuple(self.densities))
        object.__setattr__(self, "bodies", tuple(self.bodies))
        if len(self.densities) != len(self.bodies) or not self.bodies:
            raise ValueError("a term needs one density per structuring body")
        dims = {b.dim for b in self.bodies} | {p.n for p in self.densities}
        if len(dims) != 1:
            raise B.DimensionError("term mixes dimensions")

    @property
    def fold(self) -> int:
        return len(self.bodies)

    @property
    def n(self) -> int:
        return self.bodies[0].dim

    @property
    def vanishes(self) -> bool:
        """Two point bodies force x_i - a_i = x_j - a_j, a null set."""
        return sum(B._is_point(b) for b in self.bodies) >= 2 or any(not p.coeffs for p in self.densities)

    def scaled(self, c: float) -> "Term":
        return Term((self.densities[0] * c,) + self.densities[1:], self.bodies)


@dataclass(frozen=True)
class GRep:
    """Finite sum of measure-of-Minkowski-sum terms plus ``chi`` times the Euler characteristic."""

    n: int
    terms: tuple = ()
    chi: float = 0.0

    def __post_init__(self):
        object.__setattr__(self, "terms", tuple(self.terms))
        for t in self.terms:
            if t.n != self.n:
                raise B.DimensionError("term dimension differs from the representation")

    @classmethod
    def measure(cls, density: Polynomial, body: ConvexBody) -> "GRep":
        """K -> integral of ``density`` over K + body."""
        return cls(body.dim, (Term((density,), (body,)),))

    @classmethod
    def euler(cls, n: int, c: float = 1.0) -> "GRep":
        return cls(n, (), float(c))

    @property
    def fold(self) -> int:
        return max((t.fold for t in self.terms), default=0)

    @property
    def degree(self) -> int:
        """Largest density degree; the polynomiality degree in translations."""
        return max((sum(p.degree for p in t.densities) for t in self.terms), default=0)

    def __add__(self, other: "GRep") -> "GRep":
        if self.n != other.n:
            raise B.DimensionError("representations live in different dimensions")
        return GRep(self.n, self.terms + other.terms, self.chi + other.chi)

    def __mul__(self, c) -> "GRep":
        if isinstance(c, GRep):
            return self.product(c)
        c = float(c)
        return GRep(self.n, tuple(t.scaled(c) for t in self.terms), c * self.chi)

    def __rmul__(self, c) -> "GRep":
        return self * c

    def __neg__(self) -> "GRep":
        return self * -1.0

    def __sub__(self, other: "GRep") -> "GRep":
        return self + (-other)

    def product(self, other: "GRep") -> "GRep":
        """Symbolic product: factors of paired terms are concatenated, chi acts as the unit."""
        if self.n != other.n:
            raise B.DimensionError("representations live in different dimensions")
        terms = [Term(s.densities + t.densities, s.bodies + t.bodies)
                 for s in self.terms for t in other.terms]
        terms += [t.scaled(self.chi) for t in other.terms if self.chi]
        terms += [t.scaled(other.chi) for t in self.terms if other.chi]
        terms = [t for t in terms if not t.vanishes]
        return GRep(self.n, tuple(terms), self.chi * other.chi)

    def to_json(self) -> dict:
        out = []
        for t in self.terms:
            if t.fold == 1:
                out.append({"density": t.densities[0].to_json(), "body": t.bodies[0].to_json()})
            else:
                out.append({"densities": [p.to_json() for p in t.densities],
                            "bodies": [b.to_json() for b in t.bodies]})
        return {"chi": self.chi, "terms": out}

    @classmethod
    def from_json(cls, spec: dict, n: int | None = None) -> "GRep":
        terms = []
        for item in spec.get("terms", []):
            if "body" in item:
                bodies = [B.body_from_json(item["body"])]
                dens = [item.get("density", 1.0)]
            else:
                bodies = [B.body_from_json(b) for b in item["bodies"]]
                dens = item["densities"]
            d = bodies[0].dim
            terms.append(Term(tuple(Polynomial.from_json(p, d) for p in dens), tuple(bodies)))
        if n is None:
            if not terms:
                raise ValueError("a chi-only representation needs an explicit dimension")
            n = terms[0].n
        return cls(n, tuple(terms), float(spec.get("chi", 0.0)))


def point_body(n: int) -> Polytope:
    return B.point(np.zeros(n))


def unit_disk(n: int) -> Ball:
    return Ball(np.zeros(n), 1.0)


def volume_grep(n: int) -> GRep:
    return GRep.measure(Polynomial.constant(n), point_body(n))


def intrinsic_grep_2d(i: int) -> GRep:
    """V_0, V_1, V_2 on the plane from vol(K + D) = V_2 + 2 V_1 + V_0."""
    vol = volume_grep(2)
    if i == 0:
        return GRep.euler(2, math.pi)
    if i == 1:
        return 0.5 * GRep.measure(Polynomial.constant(2), unit_disk(2)) - 0.5 * vol - GRep.euler(2, math.pi / 2)
    if i == 2:
        return vol
    raise ValueError("planar intrinsic volumes have index 0..2")


# ---------------------------------------------------------------------------
# Membership in the k-fold sets


def _ball_of(body: ConvexBody) -> Ball | None:
    return body if isinstance(body, Ball) else None


def _lens_project(c1, r1, c2, r2, Z):
    """Projection onto B(c1, r1) ∩ B(c2, r2) (row-wise, assumed nonempty)."""
    def onto(c, r, X):
        d = X - c
        nd = np.linalg.norm(d, axis=1)
        f = np.where(nd > r, r / np.where(nd > 0, nd, 1.0), 1.0)
        return c + d * f[:, None]

    p1 = onto(c1, r1, Z)
    ok1 = np.linalg.norm(p1 - c2, axis=1) <= r2 * (1 + 1e-12)
    p2 = onto(c2, r2, Z)
    ok2 = np.linalg.norm(p2 - c1, axis=1) <= r1 * (1 + 1e-12)
    m, rho, w = _lens_circle(c1, r1, c2, r2)
    v = Z - m
    v = v - np.einsum("ij,ij->i", v, w)[:, None] * w
    nv = np.linalg.norm(v, axis=1)
    fallback = np.zeros_like(v)
    fallback[:, 0] = -w[:, 1] if Z.shape[1] > 1 else 0.0
    if Z.shape[1] > 1:
        fallback[:, 1] = w[:, 0]
    v = np.where((nv > 0)[:, None], v / np.where(nv > 0, nv, 1.0)[:, None], fallback)
    p3 = m + rho[:, None] * v
    return np.where(ok1[:, None], p1, np.where(ok2[:, None], p2, p3))


def _lens_circle(c1, r1, c2, r2):
    d = c2 - c1
    nd = np.linalg.norm(d, axis=1)
    safe = np.where(nd > 0, nd, 1.0)
    w = d / safe[:, None]
    a = (nd**2 + r1**2 - r2**2) / (2 * safe)
    rho = np.sqrt(np.maximum(r1**2 - a**2, 0.0))
    return c1 + a[:, None] * w, rho, w


def _lens_support(c1, r1, c2, r2, U):
    q1 = c1 + r1 * U
    q2 = c2 + r2 * U
    ok1 = np.linalg.norm(q1 - c2, axis=1) <= r2 * (1 + 1e-12)
    ok2 = np.linalg.norm(q2 - c1, axis=1) <= r1 * (1 + 1e-12)
    m, rho, w = _lens_circle(c1, r1, c2, r2)
    perp = U - np.einsum("ij,ij->i", U, w)[:, None] * w
    h3 = np.einsum("ij,ij->i", m, U) + rho * np.linalg.norm(perp, axis=1)
    return np.where(ok1, np.einsum("ij,ij->i", q1, U), np.where(ok2, np.einsum("ij,ij->i", q2, U), h3))


def _lens_hits(K: ConvexBody, A: Ball, Bb: Ball, x, y, tol: float) -> np.ndarray:
    """K ∩ (x - A) ∩ (y - B) != ∅ for balls A, B."""
    c1, r1 = x - A.center, A.radius
    c2, r2 = y - Bb.center, Bb.radius
    N = len(x)
    hit = np.zeros(N, dtype=bool)
    live = (np.linalg.norm(c1 - c2, axis=1) <= r1 + r2 + tol)
    live &= K.distance(c1) <= r1 + tol
    live &= K.distance(c2) <= r2 + tol
    idx = np.flatnonzero(live)
    if not len(idx):
        return hit
    # cheap witnesses: projections of the two centres onto K
    for c in (c1, c2):
        p = K._project(c[idx])
        ok = (np.linalg.norm(p - c1[idx], axis=1) <= r1 + tol) & (np.linalg.norm(p - c2[idx], axis=1) <= r2 + tol)
        hit[idx[ok]] = True
        idx = idx[~ok]
        if not len(idx):
            return hit
    C1, C2 = c1[idx], c2[idx]
    res = B.alternating_gap_test(
        lambda X, j: K._project(X), lambda U, j: K._support(U),
        lambda X, j: _lens_project(C1[j], r1, C2[j], r2, X),
        lambda U, j: _lens_support(C1[j], r1, C2[j], r2, U),
        _lens_project(C1, r1, C2, r2, K._project(0.5 * (C1 + C2))), tol,
        LENS_MAX_ITER, lambda j: _gjk_batch(K, (A, Bb), np.hstack([x[idx[j]], y[idx[j]]]), tol))
    hit[idx[res]] = True
    return hit


def _diag_support_point(K: ConvexBody, bodies: Sequence[ConvexBody], u: np.ndarray) -> np.ndarray:
    """Support point of diag(K) + A_1 x ... x A_k in direction u = (u_1..u_k)."""
    n = K.dim
    parts = u.reshape(len(bodies), n)
    k = K._support_point(parts.sum(axis=0)[None, :])[0]
    return np.concatenate([k + b._support_point(p[None, :])[0] for b, p in zip(bodies, parts)])


def _gjk_batch(K: ConvexBody, bodies, Z: np.ndarray, tol: float) -> np.ndarray:
    return np.array([B.gjk_decide(lambda u: _diag_support_point(K, bodies, u), z, tol)[0] for z in Z], dtype=bool)


def term_hits(K: ConvexBody, term: Term, X: np.ndarray, tol: float = B.DEFAULT_TOL) -> np.ndarray:
    """Indicator of K ∩ (x_1 - A_1) ∩ ... ∩ (x_k - A_k) != ∅ for rows X = (x_1, ..., x_k)."""
    n, k = K.dim, term.fold
    if K.is_empty:
        return np.zeros(len(X), dtype=bool)
    if k == 1:
        return np.atleast_1d(B.minkowski_sum(K, term.bodies[0]).contains(X, tol))
    if term.vanishes:
        return np.zeros(len(X), dtype=bool)
    xs = [X[:, i * n:(i + 1) * n] for i in range(k)]
    points = [i for i, b in enumerate(term.bodies) if B._is_point(b)]
    if points:
        j = points[0]
        k0 = xs[j] - term.bodies[j].vertices[0]
        hit = np.atleast_1d(K.contains(k0, tol))
        for i, b in enumerate(term.bodies):
            if i != j:
                live = np.flatnonzero(hit)
                if len(live):
                    hit[live] = np.atleast_1d(b.contains(xs[i][live] - k0[live], tol))
        return hit
    if k == 2 and all(isinstance(b, Ball) for b in term.bodies):
        return _lens_hits(K, term.bodies[0], term.bodies[1], xs[0], xs[1], tol)
    # generic route: (x_1..x_k) in diag(K) + A_1 x ... x A_k
    body = B.MinkSum((B.diagonal(K, k), B.Product(term.bodies)))
    return np.atleast_1d(body.contains(X, tol))


def term_window(K: ConvexBody, term: Term) -> tuple[np.ndarray, np.ndarray]:
    """Box containing every admissible (x_1..x_k): product of bbox(K) + bbox(A_i)."""
    klo, khi = K.bbox(0.0)
    los, his = [], []
    for b in term.bodies:
        lo, hi = b.bbox(0.0)
        los.append(klo + lo - 1e-9)
        his.append(khi + hi + 1e-9)
    return np.concatenate(los), np.concatenate(his)


class _TermKernel:
    """Per-sample integrand of a group of equal-fold terms on several targets.

    All terms and targets share one uniform point per sample.  Target t is
    sampled in the hull W_t of its term windows, and column t of the raw
    output is |W_t| sum_terms p(x) 1[hit(K_t, x)].  ``post`` (if given) maps
    the raw row vector linearly, so derived quantities keep per-sample
    variances and correlated terms cancel sample by sample.
    """

    def __init__(self, terms: Sequence[Term], targets: Sequence[ConvexBody], windows, post=None,
                 tol: float = B.DEFAULT_TOL):
        self.terms = list(terms)
        self.targets = list(targets)
        # windows[term][target] -> (lo, hi)
        self.windows = [[(np.asarray(lo, float), np.asarray(hi, float)) for lo, hi in w] for w in windows]
        self.post = None if post is None else np.asarray(post, float)
        self.tol = tol

    def __call__(self, rng, size):
        n, k = self.terms[0].n, self.terms[0].fold
        U = rng.random((size, n * k))
        raw = np.zeros((size, len(self.targets)))
        for t, K in enumerate(self.targets):
            lo = np.min([w[t][0] for w in self.windows], axis=0)
            hi = np.max([w[t][1] for w in self.windows], axis=0)
            width = hi - lo
            vol = float(np.prod(width))
            if vol <= 0:
                continue
            X = lo + U * width
            for term, w in zip(self.terms, self.windows):
                tlo, thi = w[t]
                dens = np.all((X >= tlo) & (X <= thi), axis=1).astype(float)
                for i, p in enumerate(term.densities):
                    live = np.flatnonzero(dens)
                    dens[live] *= p(X[live, i * n:(i + 1) * n])
                live = np.flatnonzero(dens != 0)
                if len(live):
                    raw[live, t] += vol * dens[live] * term_hits(K, term, X[live], self.tol)
        return raw if self.post is None else raw @ self.post.T


def _chi_vector(targets: Sequence[ConvexBody]) -> np.ndarray:
    return np.array([0.0 if K.is_empty else 1.0 for K in targets])


def _exact_term(K: ConvexBody, term: Term) -> float | None:
    """Closed form for a constant density over K + ball or K + point."""
    if term.fold != 1 or not term.densities[0].is_constant:
        return None
    c = term.densities[0].constant_value
    A = term.bodies[0]
    if K.is_empty:
        return 0.0
    coeffs = exact_steiner(K)
    if coeffs is None:
        return None
    if B._is_point(A):
        return c * float(coeffs[0])
    if isinstance(A, Ball):
        return c * float(np.polyval(coeffs[::-1], A.radius))
    return None


def grep_vector(phi: GRep, targets: Sequence[ConvexBody], mc: MCConfig, windows=None,
                post=None, exact_terms: bool = False) -> VectorEstimate:
    """Evaluate ``phi`` on several bodies with common random numbers.

    ``windows[term_index][t]`` overrides the sampling window of target t; the
    default is each target's own term window.  Terms with the same number of
    factors share samples; groups of different fold use independent streams,
    so their per-component variances add.  With ``exact_terms`` every term
    that has a closed form on all targets is added without sampling.
    """
    r = len(targets)
    P = np.eye(r) if post is None else np.asarray(post, float)
    mean = P @ (phi.chi * _chi_vector(targets))
    var = np.zeros(len(mean))
    samples = 0
    groups: dict[int, list[int]] = {}
    for ti, term in enumerate(phi.terms):
        if term.vanishes:
            continue
        if exact_terms:
            vals = [_exact_term(K, term) for K in targets]
            if all(v is not None for v in vals):
                mean = mean + P @ np.array(vals)
                continue
        groups.setdefault(term.fold, []).append(ti)
    for fold, idx in sorted(groups.items()):
        terms = [phi.terms[i] for i in idx]
        wins = [windows[i] if windows is not None else [term_window(K, phi.terms[i]) for K in targets]
                for i in idx]
        est = sample_mean(_TermKernel(terms, targets, wins, P), mc.child(fold))
        mean = mean + est.mean
        var = var + est.stderr**2
        samples = max(samples, est.samples)
    return VectorEstimate(mean, np.sqrt(var), samples, mc.seed)


def evaluate(phi, K: ConvexBody, mc: MCConfig | None = None, method: str = "montecarlo") -> MCEstimate:
    """phi(K) for a :class:`GRep` or :class:`Valuation`.

    ``method='exact'`` uses closed-form parallel volumes and only accepts
    constant densities over ball or point structuring bodies; ``'auto'``
    takes closed forms where they exist and samples the remaining terms.
    """
    mc = mc or MCConfig()
    if isinstance(phi, Valuation):
        return phi(K, mc)
    if not isinstance(phi, GRep):
        raise TypeError("expected a GRep or Valuation")
    if K.dim != phi.n:
        raise B.DimensionError("body and valuation live in different dimensions")
    if method == "exact":
        total = phi.chi * (0.0 if K.is_empty else 1.0)
        for term in phi.terms:
            v = _exact_term(K, term)
            if v is None:
                raise ValueError("exact evaluation needs constant densities over balls or points")
            total += v
        return MCEstimate.exact(total)
    if method not in ("montecarlo", "auto"):
        raise ValueError(f"unknown method {method!r}")
    return grep_vector(phi, [K], mc, exact_terms=method == "auto")[0]


# ---------------------------------------------------------------------------
# Valuation oracles


Evaluator = Callable[[ConvexBody, MCConfig], MCEstimate]


@dataclass(frozen=True)
class Valuation:
    """An evaluator with metadata.

    ``degree`` is the homogeneity degree when known.  ``grep`` keeps a
    G-representation when one exists, which enables the product and the
    common-random-number checks.
    """

    evaluator: Evaluator
    degree: int | None = None
    parity: str = "mixed"
    group: str = "none"
    name: str = "phi"
    grep: GRep | None = field(default=None, compare=False)

    def __post_init__(self):
        if self.parity not in PARITIES:
            raise ValueError(f"parity must be one of {PARITIES}")
        if self.group not in GROUPS:
            raise ValueError(f"group must be one of {GROUPS}")

    def __call__(self, K: ConvexBody, mc: MCConfig | None = None) -> MCEstimate:
        return self.evaluator(K, mc or MCConfig())

    def _combine(self, other: "Valuation", a: float, b: float, name: str) -> "Valuation":
        def ev(K, mc):
            return self(K, mc.child(0)) * a + other(K, mc.child(1)) * b
        deg = self.degree if self.degree == other.degree else None
        par = self.parity if self.parity == other.parity else "mixed"
        grp = self.group if self.group == other.group else "none"
        grep = a * self.grep + b * other.grep if self.grep is not None and other.grep is not None else None
        return Valuation(ev, deg, par, grp, name, grep)

    def __add__(self, other: "Valuation") -> "Valuation":
        return self._combine(other, 1.0, 1.0, f"({self.name} + {other.name})")

    def __sub__(self, other: "Valuation") -> "Valuation":
        return self._combine(other, 1.0, -1.0, f"({self.name} - {other.name})")

    def __mul__(self, c) -> "Valuation":
        if isinstance(c, Valuation):
            if self.grep is None or c.grep is None:
                raise TypeError("the product needs G-representations of both factors")
            return from_grep(self.grep.product(c.grep), f"{self.name}*{c.name}",
                             None if self.degree is None or c.degree is None else self.degree + c.degree)
        c = float(c)
        return Valuation(lambda K, mc: self(K, mc) * c, self.degree, self.parity, self.group,
                         f"{c:g}*{self.name}", None if self.grep is None else c * self.grep)

    __rmul__ = __mul__


def volume(n: int | None = None, method: str = "auto") -> Valuation:
    """Lebesgue volume; exact or quadrature where possible."""
    def ev(K, mc):
        if K.is_empty:
            return MCEstimate.exact(0.0)
        m = resolve_method(K, method)
        if m == "exact":
            return B.volume(K, "exact")
        if m == "quadrature":
            return B.volume(K, "quadrature")
        return B.volume(K, "montecarlo", mc)
    return Valuation(ev, n, "even", "O", "vol", None if n is None else volume_grep(n))


def euler(n: int | None = None) -> Valuation:
    return Valuation(lambda K, mc: MCEstimate.exact(0.0 if K.is_empty else 1.0), 0, "even", "O", "chi",
                     None if n is None else GRep.euler(n))


def intrinsic(i: int, method: str = "auto", n: int | None = None) -> Valuation:
    """V_i, normalized so that V_i(unit ball) = omega_n."""
    def ev(K, mc):
        if K.is_empty:
            return MCEstimate.exact(0.0)
        return intrinsic_volumes(K, mc, method)[i]
    grep = intrinsic_grep_2d(i) if n == 2 else None
    return Valuation(ev, i, "even", "O", f"V_{i}", grep)


def from_grep(phi: GRep, name: str = "phi", degree: int | None = None,
              method: str = "montecarlo") -> Valuation:
    return Valuation(lambda K, mc: evaluate(phi, K, mc, method), degree, "mixed", "none", name, phi)


def synthesize(a: Sequence[float], method: str = "auto") -> Valuation:
    """sum_i a_i V_i from one Steiner fit per body."""
    a = np.asarray(a, float)

    def ev(K, mc):
        if K.dim + 1 != len(a):
            raise B.DimensionError(f"{len(a)} coefficients for a body in R^{K.dim}")
        if K.is_empty:
            return MCEstimate.exact(0.0)
        vals = intrinsic_volumes(K, mc, method)
        total = MCEstimate.exact(0.0)
        for ai, v in zip(a, vals):
            total = total + v * float(ai)
        return total
    return Valuation(ev, None, "even", "O", "sum a_i V_i")


# ---------------------------------------------------------------------------
# Box pairs for additivity


def box_union(K1: Box, K2: Box, tol: float = 1e-12) -> Box:
    """K1 ∪ K2 when it is itself a box; otherwise ValueError."""
    lo, hi = np.minimum(K1.lo, K2.lo), np.maximum(K1.hi, K2.hi)
    U = Box(lo, hi)
    inter = box_intersection(K1, K2)
    iv = 0.0 if inter.is_empty else inter.exact_volume()
    if abs(U.exact_volume() - (K1.exact_volume() + K2.exact_volume() - iv)) > tol * max(1.0, U.exact_volume()):
        raise ValueError("union of the boxes is not convex")
    return U


def box_intersection(K1: Box, K2: Box) -> ConvexBody:
    lo, hi = np.maximum(K1.lo, K2.lo), np.minimum(K1.hi, K2.hi)
    if np.any(lo > hi):
        return B.Empty(K1.dim)
    return Box(lo, hi)


def abutting_boxes(rng: np.random.Generator, n: int, overlap: bool = False) -> tuple[Box, Box]:
    """Random boxes sharing a facet (or overlapping in a slab) along a random axis."""
    lo = rng.uniform(-1.0, 0.0, n)
    hi = lo + rng.uniform(0.3, 1.5, n)
    axis = int(rng.integers(n))
    cut = rng.uniform(lo[axis] + 0.1, hi[axis] - 0.1)
    hi1, lo2 = hi.copy(), lo.copy()
    hi1[axis] = cut
    lo2[axis] = cut - (rng.uniform(0.0, cut - lo[axis]) * 0.5 if overlap else 0.0)
    return Box(lo, hi1), Box(lo2, hi)


@dataclass(frozen=True)
class AdditivityResult:
    residual: MCEstimate
    scale: float

    @property
    def passed(self) -> bool:
        return abs(self.residual.mean) <= 3 * self.residual.stderr + 1e-9 * max(self.scale, 1.0)


def check_additivity(phi, K1: ConvexBody, K2: ConvexBody, mc: MCConfig | None = None,
                     union: ConvexBody | None = None, intersection: ConvexBody | None = None) -> AdditivityResult:
    """phi(K1 ∪ K2) - phi(K1) - phi(K2) + phi(K1 ∩ K2) with its standard error.

    Boxes get their union and intersection computed; other pairs must supply
    them.  A G-representation is evaluated on all four sets from one stream in
    the window of the union, so each sample carries its own residual.
    """
    mc = mc or MCConfig()
    if union is None or intersection is None:
        if not (isinstance(K1, Box) and isinstance(K2, Box)):
            raise ValueError("pass union and intersection for non-box pairs")
        union, intersection = box_union(K1, K2), box_intersection(K1, K2)
    sets = [union, K1, K2, intersection]
    signs = np.array([[1.0, -1.0, -1.0, 1.0]])
    grep = phi if isinstance(phi, GRep) else getattr(phi, "grep", None)
    if grep is not None and not (isinstance(phi, Valuation) and phi.grep is None):
        windows = [[term_window(union, t)] * 4 for t in grep.terms]
        est = grep_vector(grep, sets, mc, windows, signs)
        res = est[0]
        scale = float(np.max(np.abs(grep_vector(grep, [union], mc.with_samples(min(mc.samples, 4096))).mean)))
        return AdditivityResult(res, scale)
    vals = [evaluate(phi, S, mc.child(j)) for j, S in enumerate(sets)]
    res = vals[0] - vals[1] - vals[2] + vals[3]
    return AdditivityResult(res, max(abs(v.mean) for v in vals))


# ---------------------------------------------------------------------------
# Polynomiality in translations


def _monomials(n: int, d: int) -> list[tuple[int, ...]]:
    return [e for total in range(d + 1) for e in itertools.product(range(total + 1), repeat=n) if sum(e) == total]


@dataclass(frozen=True)
class PolynomialFit:
    degree: int
    monomials: list
    coeffs: VectorEstimate
    residuals: VectorEstimate

    @property
    def residual_rms(self) -> float:
        return float(np.sqrt(np.mean(self.residuals.mean**2)))

    @property
    def max_z(self) -> float:
        z = np.abs(self.residuals.mean) / np.maximum(self.residuals.stderr, 1e-300)
        z = np.where(np.abs(self.residuals.mean) <= 1e-9 * max(1.0, np.abs(self.coeffs.mean).max()), 0.0, z)
        return float(z.max()) if len(z) else 0.0

    @property
    def passed(self) -> bool:
        return self.max_z < 3.0 + 1.0 * math.sqrt(2 * math.log(max(len(self.monomials), 2)))


def check_polynomiality(phi: GRep, K: ConvexBody, translations, d: int,
                        mc: MCConfig | None = None) -> PolynomialFit:
    """Least-squares fit of x -> phi(K + x) by a degree-d polynomial.

    The same uniforms are mapped into each translated window, so the fit
    residual is computed per sample and compared with its own standard error.
    """
    mc = mc or MCConfig()
    T = np.atleast_2d(np.asarray(translations, float))
    n = K.dim
    mons = _monomials(n, d)
    A = np.column_stack([np.prod(T ** np.array(e), axis=1) for e in mons])
    if len(T) < len(mons) or np.linalg.matrix_rank(A) < len(mons):
        raise ValueError(f"translation grid cannot determine a degree-{d} polynomial in {n} variables")
    pinv = np.linalg.pinv(A)
    R = np.eye(len(T)) - A @ pinv
    post = np.vstack([pinv, R])
    targets = [B.translate(K, t) for t in T]
    windows = []
    for term in phi.terms:
        lo, hi = term_window(K, term)
        shift = np.tile(T, (1, term.fold))
        windows.append([(lo + s, hi + s) for s in shift])
    est = grep_vector(phi, targets, mc, windows, post)
    m = len(mons)
    coeffs = VectorEstimate(est.mean[:m], est.stderr[:m], est.samples, est.seed)
    resid = VectorEstimate(est.mean[m:], est.stderr[m:], est.samples, est.seed)
    return PolynomialFit(d, mons, coeffs, resid)


# ---------------------------------------------------------------------------
# Homogeneous components


class GradingError(ValueError):
    pass


@dataclass(frozen=True)
class Components:
    values: VectorEstimate
    lambdas: np.ndarray
    condition: float

    def __getitem__(self, k) -> MCEstimate:
        return self.values[k]


def _scaling_system(lambdas, n: int) -> tuple[np.ndarray, float]:
    lam = np.asarray(lambdas, float)
    if len(lam) < n + 1 or len(np.unique(lam)) < n + 1 or np.any(lam <= 0):
        raise GradingError(f"need at least {n + 1} distinct positive scale factors")
    V = np.vander(lam, n + 1, increasing=True)
    cond = float(np.linalg.cond(V))
    if cond > 1e8:
        raise GradingError(f"scale grid gives condition {cond:.3g}")
    return V, cond


def default_lambdas(n: int) -> np.ndarray:
    return np.linspace(0.5, 2.0, n + 1)


def homogeneous_components(phi, K: ConvexBody, lambdas=None, mc: MCConfig | None = None) -> Components:
    """phi_k(K), k = 0..n, from phi(lambda K) = sum_k lambda^k phi_k(K)."""
    mc = mc or MCConfig()
    n = K.dim
    lam = default_lambdas(n) if lambdas is None else np.asarray(lambdas, float)
    V, cond = _scaling_system(lam, n)
    Vinv = np.linalg.pinv(V)
    targets = [B.scale(K, float(l)) for l in lam]
    grep = phi if isinstance(phi, GRep) else getattr(phi, "grep", None)
    if grep is not None:
        est = grep_vector(grep, targets, mc, None, Vinv)
        return Components(est, lam, cond)
    vals = [evaluate(phi, T, mc.child(j)) for j, T in enumerate(targets)]
    f = np.array([v.mean for v in vals])
    s2 = np.array([v.stderr for v in vals]) ** 2
    mean = Vinv @ f
    stderr = np.sqrt((Vinv**2) @ s2)
    return Components(VectorEstimate(mean, stderr, max(v.samples for v in vals), mc.seed), lam, cond)


def recombine(components: np.ndarray, lambdas) -> np.ndarray:
    """phi(lambda K) from component values."""
    return np.vander(np.asarray(lambdas, float), len(components), increasing=True) @ components


# ---------------------------------------------------------------------------
# Hadwiger decomposition


@dataclass(frozen=True)
class HadwigerResult:
    coeffs: np.ndarray
    stderr: np.ndarray
    condition: float
    holdout: MCEstimate
    holdout_prediction: float

    @property
    def holdout_residual(self) -> float:
        return self.holdout.mean - self.holdout_prediction


def hadwiger_decompose(phi, n: int, probe_radii=None, mc: MCConfig | None = None,
                       holdout: ConvexBody | None = None) -> HadwigerResult:
    """Coefficients a with phi = sum_i a_i V_i, probed on centred balls.

    phi(B_r) = omega_n sum_i a_i r^i, solved as a Vandermonde system in r,
    then validated on a held-out body (the unit cube by default) with exact
    intrinsic volumes.
    """
    mc = mc or MCConfig()
    r = np.linspace(0.5, 2.0, n + 1) if probe_radii is None else np.asarray(probe_radii, float)
    if len(np.unique(r)) < n + 1 or np.any(r <= 0):
        raise np.linalg.LinAlgError(f"need {n + 1} distinct positive probe radii")
    V = unit_ball_volume(n) * np.vander(r, n + 1, increasing=True)
    cond = float(np.linalg.cond(V))
    if not np.isfinite(cond) or cond > 1e12:
        raise np.linalg.LinAlgError(f"probe system is singular (condition {cond:.3g})")
    vals = [evaluate(phi, Ball(np.zeros(n), float(ri)), mc.child(j)) for j, ri in enumerate(r)]
    f = np.array([v.mean for v in vals])
    s = np.array([v.stderr for v in vals])
    Vinv = np.linalg.pinv(V)
    a = Vinv @ f
    a_err = np.sqrt((Vinv**2) @ s**2)
    cube = Box(np.zeros(n), np.ones(n)) if holdout is None else holdout
    basis = np.array([v.mean for v in intrinsic_volumes(cube, method="auto")])
    pred = float(basis @ a)
    pred_err = float(np.sqrt(((basis @ Vinv) ** 2) @ s**2))
    held = evaluate(phi, cube, mc.child(len(r)))
    held = MCEstimate(held.mean, math.hypot(held.stderr, pred_err), held.samples, held.seed)
    return HadwigerResult(a, a_err, cond, held, pred)


# ---------------------------------------------------------------------------
# Product and Poincare pairing


def alesker_product(phi, psi, K: ConvexBody, mc: MCConfig | None = None,
                    allow_high_dim: bool = False, method: str = "auto") -> MCEstimate:
    """(phi . psi)(K) for G-representations by Monte Carlo in the product space.

    The product is expanded symbolically: chi is the unit, terms pairing two
    point bodies vanish, and single-factor terms left over from the chi parts
    are evaluated in closed form when possible (``method='auto'``).
    """
    mc = mc or MCConfig()
    g1 = phi if isinstance(phi, GRep) else phi.grep
    g2 = psi if isinstance(psi, GRep) else psi.grep
    if g1 is None or g2 is None:
        raise TypeError("the product needs G-representations of both factors")
    if g1.n > MAX_PRODUCT_DIM and not allow_high_dim:
        raise ValueError(f"product sampling above R^{MAX_PRODUCT_DIM} needs allow_high_dim=True")
    return evaluate(g1.product(g2), K, mc, method)


class PairingError(RuntimeError):
    pass


@dataclass(frozen=True)
class PairingResult:
    matrix: np.ndarray
    stderr: np.ndarray
    spread: np.ndarray
    singular_values: np.ndarray
    threshold: float

    @property
    def rank(self) -> int:
        return int(np.sum(self.singular_values > self.threshold))


def pairing_matrix(basis: Sequence[Valuation], family: Sequence[ConvexBody], mc: MCConfig | None = None,
                   max_spread: float = 0.10) -> PairingResult:
    """M[i, j] = (b_i . b_j)(K) / vol(K) averaged over the family.

    Pairs whose degrees do not add up to n are zero by grading.  A spread of
    the ratio above ``max_spread`` across bodies means the product is not
    proportional to volume and raises :class:`PairingError`.
    """
    mc = mc or MCConfig()
    n = family[0].dim
    m = len(basis)
    M = np.zeros((m, m))
    E = np.zeros((m, m))
    S = np.zeros((m, m))
    vol = volume(n)
    for i in range(m):
        for j in range(i, m):
            if basis[i].degree is None or basis[j].degree is None:
                raise ValueError("pairing needs basis elements of known degree")
            if basis[i].degree + basis[j].degree != n:
                continue
            ratios, errs = [], []
            for b, K in enumerate(family):
                p = alesker_product(basis[i], basis[j], K, mc.child(i, j, b))
                v = vol(K, mc.child(m + i, j, b)).mean
                ratios.append(p.mean / v)
                errs.append(p.stderr / v)
            ratios = np.array(ratios)
            mean = float(ratios.mean())
            spread = float(np.ptp(ratios) / abs(mean)) if mean else float("inf")
            if spread > max_spread:
                raise PairingError(f"({basis[i].name} . {basis[j].name}) / vol varies by {spread:.1%} across bodies")
            M[i, j] = M[j, i] = mean
            E[i, j] = E[j, i] = float(np.sqrt(np.sum(np.square(errs)))) / len(errs)
            S[i, j] = S[j, i] = spread
    sv = np.linalg.svd(M, compute_uv=False)
    noise = float(E.max())
    threshold = max(10 * noise, 1e-12 * float(sv.max(initial=0.0)))
    return PairingResult(M, E, S, sv, threshold)


def parity_defect(phi, K: ConvexBody, mc: MCConfig | None = None) -> MCEstimate:
    """phi(-K) - phi(K), expected to vanish for even valuations."""
    mc = mc or MCConfig()
    return evaluate(phi, K.reflect(), mc.child(0)) - evaluate(phi, K, mc.child(1))
