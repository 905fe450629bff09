"""Quadrature rules on the reference tetrahedron and their mapped versions.

The reference tetrahedron is ``K = conv{0, e1, e2, e3}`` (volume 1/6).  Every
rule carries a *certified* exactness degree: the largest total polynomial
degree that the rule integrates exactly, established at construction time by
checking all monomials against the closed-form simplex integrals

    int_K x^a y^b z^c dV = a! b! c! / (a+b+c+3)!

Tabulated rules whose certification disagrees with their declared degree
refuse to construct; empirically built rules (tensorized Gauss rules pushed
through the collapsed-coordinate map) are certified by increasing the probe
degree until a monomial fails.
"""

from __future__ import annotations

import math
from dataclasses import dataclass
from functools import lru_cache

import numpy as np
from scipy.special import roots_jacobi, roots_legendre

__all__ = [
    "RefQuadratureRule",
    "MappedQuadrature",
    "VerifyReport",
    "BUILTIN_LABELS",
    "builtin_rule",
    "rule_for_degree",
    "tensorized_gl",
    "conical_rule",
    "integrate_ref",
    "verify_exactness",
    "map_affine",
    "map_curved",
    "dump_rule",
]

#: Relative tolerance for exactness certification.
CERTIFY_RTOL = 1e-12

#: Labels accepted by :func:`builtin_rule`.
BUILTIN_LABELS = ("pt1_offcenter", "pt1_centroid", "pt4", "pt5", "pt15", "high")


@dataclass(frozen=True)
class RefQuadratureRule:
    """Points and weights on the reference tetrahedron.

    ``exactness_degree`` is certified, not merely claimed.  The degenerate
    value -1 marks a rule that does not even integrate constants (the sum of
    its weights differs from 1/6); such rules can arise from the raw
    tensorized construction and are kept for inspection but rejected by
    :func:`rule_for_degree`.
    """

    points: np.ndarray        # (L, 3)
    weights: np.ndarray       # (L,)
    exactness_degree: int
    label: str

    def __post_init__(self):
        pts = np.ascontiguousarray(np.atleast_2d(self.points), dtype=float)
        wts = np.ascontiguousarray(np.atleast_1d(self.weights), dtype=float)
        if pts.shape != (len(wts), 3):
            raise ValueError("points/weights shape mismatch")
        bary = np.column_stack([1.0 - pts.sum(axis=1), pts])
        if bary.min() < -1e-13 or bary.max() > 1.0 + 1e-13:
            raise ValueError(f"rule '{self.label}' has points outside the closed reference tetrahedron")
        pts.flags.writeable = False
        wts.flags.writeable = False
        object.__setattr__(self, "points", pts)
        object.__setattr__(self, "weights", wts)
        if self.exactness_degree >= 0 and abs(wts.sum() - 1.0 / 6.0) > 1e-14:
            raise ValueError(f"rule '{self.label}': weights sum {wts.sum()!r} != 1/6")

    @property
    def npoints(self) -> int:
        return len(self.weights)


@dataclass(frozen=True)
class MappedQuadrature:
    """A reference rule pushed to a physical element (points in R^3)."""

    points: np.ndarray    # (L, 3)
    weights: np.ndarray   # (L,)

    def __post_init__(self):
        if self.points.shape != (len(self.weights), 3):
            raise ValueError("points/weights shape mismatch")


@dataclass(frozen=True)
class VerifyReport:
    ok: bool
    degree: int
    worst_monomial: tuple
    worst_error: float


def exact_monomial_integral(a: int, b: int, c: int) -> float:
    """Closed-form integral of x^a y^b z^c over the reference tetrahedron."""
    return math.factorial(a) * math.factorial(b) * math.factorial(c) / math.factorial(a + b + c + 3)


def monomials_of_degree(d: int):
    for a in range(d + 1):
        for b in range(d + 1 - a):
            yield (a, b, d - a - b)


def integrate_ref(rule: RefQuadratureRule, f) -> complex:
    """Apply ``rule`` to a scalar field on the reference tetrahedron.

    ``f`` is called with an (L, 3) array of points and must return the L
    values (point-wise callables are accepted as a fallback).
    """
    try:
        vals = np.asarray(f(rule.points))
        if vals.shape != (rule.npoints,):
            raise TypeError
    except TypeError:
        vals = np.array([f(p) for p in rule.points])
    return complex(np.dot(rule.weights, vals))


def _quadrature_error(points, weights, abc):
    a, b, c = abc
    approx = np.dot(weights, points[:, 0] ** a * points[:, 1] ** b * points[:, 2] ** c)
    exact = exact_monomial_integral(a, b, c)
    return abs(approx - exact) / max(1.0, abs(exact))


def verify_exactness(rule: RefQuadratureRule, d: int) -> VerifyReport:
    """Check all monomials of total degree <= d against the closed form.

    Returns a report carrying the worst offending monomial (by relative
    error against max(1, |exact|)).
    """
    worst_err = 0.0
    worst = (0, 0, 0)
    for deg in range(d + 1):
        for abc in monomials_of_degree(deg):
            err = _quadrature_error(rule.points, rule.weights, abc)
            if err > worst_err:
                worst_err = err
                worst = abc
    return VerifyReport(ok=worst_err <= CERTIFY_RTOL, degree=d, worst_monomial=worst, worst_error=worst_err)


def _certify(points, weights, max_degree: int = 40) -> int:
    """Largest degree at which every monomial passes; -1 if constants fail."""
    degree = -1
    for d in range(max_degree + 1):
        ok = all(_quadrature_error(points, weights, abc) <= CERTIFY_RTOL for abc in monomials_of_degree(d))
        if not ok:
            break
        degree = d
    return degree


def _make_certified(points, weights, declared: int, label: str) -> RefQuadratureRule:
    """Construct a rule from a table, aborting unless certification is tight."""
    points = np.asarray(points, dtype=float)
    weights = np.asarray(weights, dtype=float)
    actual = _certify(points, weights, max_degree=declared + 1)
    if actual != declared:
        raise RuntimeError(
            f"rule '{label}' certified at degree {actual}, declared {declared}; table rejected"
        )
    return RefQuadratureRule(points, weights, declared, label)


# ----------------------------------------------------------------------------
# Tabulated symmetric rules.  Barycentric orbits are written out explicitly in
# Cartesian coordinates (x, y, z) = (lam1, lam2, lam3).  The 4/5/14/15/24-point
# tables are the published Keast-family rules.
# ----------------------------------------------------------------------------

def _pt4_table():
    a = (5.0 + 3.0 * math.sqrt(5.0)) / 20.0
    b = (5.0 - math.sqrt(5.0)) / 20.0
    pts = [[a, b, b], [b, a, b], [b, b, a], [b, b, b]]
    wts = [1.0 / 24.0] * 4
    return pts, wts


def _pt5_table():
    q = 1.0 / 4.0
    a, b = 1.0 / 2.0, 1.0 / 6.0
    pts = [[q, q, q], [a, b, b], [b, a, b], [b, b, a], [b, b, b]]
    wts = [-0.8 / 6.0] + [0.45 / 6.0] * 4
    return pts, wts


def _keast14_table():
    # 14 points, degree 4; mid-edge orbit plus two (a,b,b,b) orbits.
    pts = [
        [0.0, 0.5, 0.5], [0.5, 0.0, 0.5], [0.5, 0.5, 0.0],
        [0.5, 0.0, 0.0], [0.0, 0.5, 0.0], [0.0, 0.0, 0.5],
        [0.6984197043243866, 0.1005267652252045, 0.1005267652252045],
        [0.1005267652252045, 0.1005267652252045, 0.1005267652252045],
        [0.1005267652252045, 0.1005267652252045, 0.6984197043243866],
        [0.1005267652252045, 0.6984197043243866, 0.1005267652252045],
        [0.0568813795204234, 0.3143728734931922, 0.3143728734931922],
        [0.3143728734931922, 0.3143728734931922, 0.3143728734931922],
        [0.3143728734931922, 0.3143728734931922, 0.0568813795204234],
        [0.3143728734931922, 0.0568813795204234, 0.3143728734931922],
    ]
    wts = [0.0190476190476190 / 6.0] * 6 + [0.0885898247429807 / 6.0] * 4 + [0.1328387466855907 / 6.0] * 4
    return pts, wts


def _pt15_table():
    # 15 points, degree 5.
    t = 1.0 / 3.0
    a, b = 8.0 / 11.0, 1.0 / 11.0
    c, d = 0.4334498464263357, 0.0665501535736643
    pts = [
        [0.25, 0.25, 0.25],
        [0.0, t, t], [t, t, t], [t, t, 0.0], [t, 0.0, t],
        [a, b, b], [b, b, b], [b, b, a], [b, a, b],
        [c, d, d], [d, c, d], [d, d, c], [d, c, c], [c, d, c], [c, c, d],
    ]
    wts = (
        [0.1817020685825351 / 6.0]
        + [0.0361607142857143 / 6.0] * 4
        + [0.0698714945161738 / 6.0] * 4
        + [0.0656948493683187 / 6.0] * 6
    )
    return pts, wts


def _keast24_table():
    # 24 points, degree 6.
    a1, b1 = 0.3561913862225449, 0.2146028712591517
    a2, b2 = 0.8779781243961660, 0.0406739585346113
    a3, b3 = 0.0329863295731731, 0.3223378901422757
    p, q, r = 0.0636610018750175, 0.2696723314583159, 0.6030056647916491
    pts = [
        [a1, b1, b1], [b1, b1, b1], [b1, b1, a1], [b1, a1, b1],
        [a2, b2, b2], [b2, b2, b2], [b2, b2, a2], [b2, a2, b2],
        [a3, b3, b3], [b3, b3, b3], [b3, b3, a3], [b3, a3, b3],
        [q, p, p], [p, q, p], [p, p, q],
        [r, p, p], [p, r, p], [p, p, r],
        [p, q, r], [q, r, p], [r, p, q], [p, r, q], [q, p, r], [r, q, p],
    ]
    wts = (
        [0.0399227502581679 / 6.0] * 4
        + [0.0100772110553207 / 6.0] * 4
        + [0.0553571815436544 / 6.0] * 4
        + [0.0482142857142857 / 6.0] * 12
    )
    return pts, wts


def _gl01(n):
    x, w = roots_legendre(n)
    return (x + 1.0) / 2.0, w / 2.0


def _jacobi01(n, alpha):
    # n-point Gauss-Jacobi on [0, 1] with weight (1-u)^alpha.
    x, w = roots_jacobi(n, alpha, 0.0)
    return (x + 1.0) / 2.0, w / 2.0 ** (alpha + 1)


def _duffy_points(u, v, w):
    """Collapsed-coordinate map from the unit cube to the reference tet."""
    x = u
    y = v * (1.0 - u)
    z = w * (1.0 - u) * (1.0 - v)
    return np.column_stack([x, y, z])


@lru_cache(maxsize=None)
def tensorized_gl(n: int) -> RefQuadratureRule:
    """n^3 Gauss-Legendre rule on the unit cube pushed through the collapsed map.

    The weights carry the pointwise Jacobian (1-u)^2 (1-v) of the map; the
    exactness degree is certified empirically, never assumed from the 1D
    order.  The collapsed-map Jacobian raises the per-axis degree of the
    pulled-back integrand, so the certified degree is 2n-3 in practice
    (and -1 for n=1, whose single weight is 1/8 rather than 1/6).
    """
    if n < 1:
        raise ValueError("n must be >= 1")
    xu, wu = _gl01(n)
    xv, wv = _gl01(n)
    xw, ww = _gl01(n)
    U, V, W = np.meshgrid(xu, xv, xw, indexing="ij")
    WU, WV, WW = np.meshgrid(wu, wv, ww, indexing="ij")
    u, v, w = U.ravel(), V.ravel(), W.ravel()
    jac = (1.0 - u) ** 2 * (1.0 - v)
    weights = (WU * WV * WW).ravel() * jac
    points = _duffy_points(u, v, w)
    degree = _certify(points, weights, max_degree=2 * n + 2)
    return RefQuadratureRule(points, weights, degree, f"tensor_gl{n}")


@lru_cache(maxsize=None)
def conical_rule(n: int) -> RefQuadratureRule:
    """Conical-product Gauss-Jacobi rule (n^3 points, degree 2n-1, certified).

    The collapsed-map Jacobian is absorbed into Gauss-Jacobi weights on the
    first two axes, so the classical 2n-1 exactness survives the map.
    """
    if n < 1:
        raise ValueError("n must be >= 1")
    xu, wu = _jacobi01(n, 2.0)
    xv, wv = _jacobi01(n, 1.0)
    xw, ww = _gl01(n)
    U, V, W = np.meshgrid(xu, xv, xw, indexing="ij")
    WU, WV, WW = np.meshgrid(wu, wv, ww, indexing="ij")
    u, v, w = U.ravel(), V.ravel(), W.ravel()
    weights = (WU * WV * WW).ravel()
    points = _duffy_points(u, v, w)
    degree = _certify(points, weights, max_degree=2 * n + 1)
    if degree < 2 * n - 1:
        raise RuntimeError(f"conical rule n={n} certified below 2n-1")
    return RefQuadratureRule(points, weights, degree, f"conical{n}")


@lru_cache(maxsize=None)
def builtin_rule(label: str) -> RefQuadratureRule:
    """Return a named built-in rule with its certified exactness degree."""
    if label == "pt1_centroid":
        return _make_certified([[0.25, 0.25, 0.25]], [1.0 / 6.0], 1, label)
    if label == "pt1_offcenter":
        # Fixed non-centroid interior point so degraded-rate runs are deterministic.
        return _make_certified([[0.3, 0.3, 0.2]], [1.0 / 6.0], 0, label)
    if label == "pt4":
        return _make_certified(*_pt4_table(), 2, label)
    if label == "pt5":
        return _make_certified(*_pt5_table(), 3, label)
    if label == "pt15":
        return _make_certified(*_pt15_table(), 5, label)
    if label == "high":
        rule = conical_rule(4)
        return RefQuadratureRule(rule.points, rule.weights, rule.exactness_degree, "high")
    raise KeyError(f"unknown quadrature label {label!r}; known: {BUILTIN_LABELS}")


@lru_cache(maxsize=None)
def _keast14() -> RefQuadratureRule:
    return _make_certified(*_keast14_table(), 4, "keast14")


@lru_cache(maxsize=None)
def _keast24() -> RefQuadratureRule:
    return _make_certified(*_keast24_table(), 6, "keast24")


def rule_for_degree(d: int) -> RefQuadratureRule:
    """Cheapest stored or constructed rule certified to degree >= d."""
    if d < 0:
        raise ValueError("degree must be >= 0")
    table = [
        builtin_rule("pt1_centroid"),   # 1 point,  degree 1
        builtin_rule("pt4"),            # 4 points, degree 2
        builtin_rule("pt5"),            # 5 points, degree 3
        _keast14(),                     # 14 points, degree 4
        builtin_rule("pt15"),           # 15 points, degree 5
        _keast24(),                     # 24 points, degree 6
        builtin_rule("high"),           # 64 points, degree 7
    ]
    for rule in table:
        if rule.exactness_degree >= d:
            return rule
    return conical_rule((d + 2) // 2)


def map_affine(rule: RefQuadratureRule, emap) -> MappedQuadrature:
    """Push a reference rule through an affine element map.

    Physical points are T(b_l); every weight is scaled by |det J|.
    """
    det = emap.det
    if det == 0.0 or not np.isfinite(det):
        raise ValueError("affine map has singular Jacobian")
    points = emap.apply(rule.points)
    weights = abs(det) * rule.weights
    return MappedQuadrature(points, weights)


def map_curved(rule: RefQuadratureRule, emap) -> MappedQuadrature:
    """Push a reference rule through a polynomial (curved) element map.

    The Jacobian determinant is evaluated at every rule point; it must be
    strictly positive there (an inverted or invalid curved element fails).
    """
    det = emap.det_at(rule.points)
    if np.any(det <= 0.0) or not np.all(np.isfinite(det)):
        raise ValueError("curved map has non-positive Jacobian determinant at a rule point")
    points = emap.apply(rule.points)
    weights = det * rule.weights
    return MappedQuadrature(points, weights)


def dump_rule(rule: RefQuadratureRule) -> str:
    """Plain-text table: header, then one `x y z w` row per point."""
    lines = [f"{rule.label} {rule.exactness_degree} {rule.npoints}"]
    for (x, y, z), w in zip(rule.points, rule.weights):
        lines.append(f"{x:.17g} {y:.17g} {z:.17g} {w:.17g}")
    return "\n".join(lines) + "\n"
