"""Error norms, convergence-rate fits and quadrature consistency probes.

Errors against a manufactured field use per-element integration with a
certified high-degree rule.  The consistency probes measure the gap between
the configured numeric forms and a high-degree reference ('exact') evaluation;
the curved probe measures the same gap on a single quadratic element family
that shrinks with its curvature scaling like the square of its size.
"""

from __future__ import annotations

import math
from dataclasses import dataclass, field

import numpy as np

from .assembly import (
    Coefficients,
    QuadratureConfig,
    SolutionField,
    _dof_layout,
    evaluate_forms,
    reference_config,
)
from .mesh import CurvedMap, TetMesh, all_affine_data, curved_map
from .quadrature import RefQuadratureRule, map_curved, rule_for_degree, tensorized_gl
from .reference_element import curl_basis

__all__ = [
    "ErrorRecord",
    "RateFit",
    "hcurl_error",
    "fit_rate",
    "records_to_csv",
    "discrete_hcurl_norm",
    "random_field",
    "interpolate",
    "smooth_random_field",
    "probe_field",
    "consistency_error",
    "consistency_probe",
    "curved_local_error",
    "curved_probe",
    "shrunk_quadratic_map",
    "CSV_HEADER",
]

DEFAULT_SEED = 1318

CSV_HEADER = "n,h,dofs,l2_error,curl_error,hcurl_error,iters"


@dataclass(frozen=True)
class ErrorRecord:
    """One mesh's error entry of a convergence study."""

    n: int
    h: float
    dofs: int
    l2_error: float
    curl_error: float
    iterations: int = 0
    hcurl_error: float = field(init=False)

    def __post_init__(self):
        object.__setattr__(self, "hcurl_error", math.hypot(self.l2_error, self.curl_error))


@dataclass(frozen=True)
class RateFit:
    slope: float
    intercept: float
    n_points: int
    residual: float


def fit_rate(records, x_axis: str = "dofs", window: int = 0) -> RateFit:
    """Least-squares slope of log(error) against log(h) or log(dofs).

    ``window`` keeps only the last that many records (0 = all); at least
    three points are required.
    """
    if x_axis == "h":
        xs = [r.h for r in records]
    elif x_axis == "dofs":
        xs = [r.dofs for r in records]
    else:
        raise ValueError("x_axis must be 'h' or 'dofs'")
    ys = [r.hcurl_error for r in records]
    if window:
        xs, ys = xs[-window:], ys[-window:]
    if len(xs) < 3:
        raise ValueError("rate fit needs at least 3 points")
    lx, ly = np.log(np.asarray(xs, float)), np.log(np.asarray(ys, float))
    slope, intercept = np.polyfit(lx, ly, 1)
    resid = float(np.sqrt(np.mean((ly - (slope * lx + intercept)) ** 2)))
    return RateFit(float(slope), float(intercept), len(xs), resid)


def records_to_csv(records) -> str:
    lines = [CSV_HEADER]
    for r in records:
        lines.append(
        f"{r.n},{r.h:.17g},{r.dofs},{r.l2_error:.17g},{r.curl_error:.17g},{r.hcurl_error:.17g},{r.iterations}"
        )
    return "\n".join(lines) + "\n"


def _error_integrals(sol: SolutionField, exact, exact_curl, rule: RefQuadratureRule):
    mesh = sol.mesh
    jac, origin, det, inv = all_affine_data(mesh)
    weights = np.abs(det)[:, None] * rule.weights[None, :]
    l2_sq = 0.0
    curl_sq = 0.0
    step = max(1, 2_000_000 // (rule.npoints * 4))
    for lo in range(0, mesh.n_tets, step):
        hi = min(lo + step, mesh.n_tets)
        idx = np.arange(lo, hi)
        vh, ch = sol.eval_elements(rule.points, idx)
        pts = origin[idx][:, None, :] + np.einsum("epc,lc->elp", jac[idx], rule.points)
        flat = pts.reshape(-1, 3)
        ve = np.asarray(exact(flat), dtype=complex).reshape(hi - lo, rule.npoints, 3)
        ce = np.asarray(exact_curl(flat), dtype=complex).reshape(hi - lo, rule.npoints, 3)
        l2_sq += float(np.sum(weights[idx] * np.sum(np.abs(vh - ve) ** 2, axis=2)))
        curl_sq += float(np.sum(weights[idx] * np.sum(np.abs(ch - ce) ** 2, axis=2)))
    return l2_sq, curl_sq


def hcurl_error(sol: SolutionField, exact_pair, quad_degree: int,
                n: int = 0, dofs: int = 0, iterations: int = 0) -> ErrorRecord:
    """H(curl) error of a discrete field against a manufactured pair.

    ``exact_pair`` is (E, curl E), both callables mapping (N, 3) points to
    (N, 3) values.  The integration rule is certified to ``quad_degree``.
    """
    order = sol.order
    if quad_degree < 2 * order + 4:
        raise ValueError("quad_degree must be at least 2k+4")
    rule = rule_for_degree(quad_degree)
    l2_sq, curl_sq = _error_integrals(sol, exact_pair[0], exact_pair[1], rule)
    return ErrorRecord(n=n, h=sol.mesh.h, dofs=dofs,
                       l2_error=math.sqrt(l2_sq), curl_error=math.sqrt(curl_sq),
                       iterations=iterations)


def discrete_hcurl_norm(mesh: TetMesh, order: int, dofs: np.ndarray) -> float:
    """sqrt(||u||^2 + ||curl u||^2) of a discrete field given by full dofs."""
    sol = _field(mesh, order, dofs)
    rule = rule_for_degree(2 * order + 2)
    zero = lambda pts: np.zeros((len(pts), 3))
    l2_sq, curl_sq = _error_integrals(sol, zero, zero, rule)
    return math.sqrt(l2_sq + curl_sq)


def _field(mesh: TetMesh, order: int, dofs: np.ndarray) -> SolutionField:
    from .assembly import _orientation_transforms

    _, gdof, _, _ = _dof_layout(mesh, order)
    X = _orientation_transforms(mesh, curl_basis(order))
    return SolutionField(mesh=mesh, order=order, dofs=np.asarray(dofs, complex), gdof=gdof, orientations=X)


def random_field(mesh: TetMesh, order: int, seed: int, normalize: bool = True,
                 interior_only: bool = True) -> np.ndarray:
    """Seeded random dof vector, optionally PEC-zeroed and H(curl)-normalized."""
    n_dofs, _, constrained, _ = _dof_layout(mesh, order)
    rng = np.random.default_rng(seed)
    u = rng.standard_normal(n_dofs).astype(complex)
    if interior_only:
        u[constrained] = 0.0
    if normalize:
        u /= discrete_hcurl_norm(mesh, order, u)
    return u


def interpolate(mesh: TetMesh, order: int, field) -> np.ndarray:
    """Tangential-moment interpolant of a smooth vector field, full dof layout.

    Evaluates the same edge/face functionals that define the global dofs, so
    a field already in the discrete space is reproduced exactly.
    """
    from scipy.special import roots_legendre

    n_dofs, _, _, _ = _dof_layout(mesh, order)
    out = np.zeros(n_dofs, dtype=complex)

    x, w = roots_legendre(8)
    s, w = (x + 1.0) / 2.0, w / 2.0
    a = mesh.vertices[mesh.edges[:, 0]]
    d = mesh.vertices[mesh.edges[:, 1]] - a
    pts = a[:, None, :] + s[None, :, None] * d[:, None, :]
    vals = np.asarray(field(pts.reshape(-1, 3)), dtype=complex).reshape(len(a), len(s), 3)
    mom0 = np.einsum("l,elc,ec->e", w, vals, d)
    if order == 1:
        out[:] = mom0
        return out
    out[0: 2 * mesh.n_edges: 2] = mom0
    out[1: 2 * mesh.n_edges: 2] = np.einsum("l,elc,ec->e", w * (2.0 * s - 1.0), vals, d)

    from .reference_element import _tri_rule

    st, tw = _tri_rule(6)
    fa = mesh.vertices[mesh.faces[:, 0]]
    d1 = mesh.vertices[mesh.faces[:, 1]] - fa
    d2 = mesh.vertices[mesh.faces[:, 2]] - fa
    fpts = fa[:, None, :] + st[None, :, :1] * d1[:, None, :] + st[None, :, 1:] * d2[:, None, :]
    fvals = np.asarray(field(fpts.reshape(-1, 3)), dtype=complex).reshape(len(fa), len(tw), 3)
    base = 2 * mesh.n_edges
    out[base::2] = np.einsum("l,elc,ec->e", tw, fvals, d1)
    out[base + 1::2] = np.einsum("l,elc,ec->e", tw, fvals, d2)
    return out


def smooth_random_field(seed: int, n_modes: int = 4):
    """A fixed random smooth vector field (finite low-frequency spectrum)."""
    rng = np.random.default_rng(seed)
    kvecs = rng.integers(1, 3, size=(n_modes, 3)).astype(float) * (np.pi / 2.0)
    amps = rng.standard_normal((n_modes, 3))
    phases = rng.uniform(0.0, 2.0 * np.pi, size=(n_modes, 3))

    def field(pts):
        pts = np.atleast_2d(pts)
        out = np.zeros((len(pts), 3))
        for k, a, p in zip(kvecs, amps, phases):
            out += a[None, :] * np.sin((pts @ k)[:, None] + p[None, :])
        return out

    return field


def probe_field(mesh: TetMesh, order: int, seed: int) -> np.ndarray:
    """Interpolated fixed random smooth field, PEC-zeroed, H(curl)-normalized."""
    _, _, constrained, _ = _dof_layout(mesh, order)
    u = interpolate(mesh, order, smooth_random_field(seed))
    u[constrained] = 0.0
    return u / discrete_hcurl_norm(mesh, order, u)


def consistency_error(mesh: TetMesh, order: int, coeffs: Coefficients, config: QuadratureConfig,
                      U_dofs, V_dofs, ref_degree: int = 10):
    """|Phi - Phi_h| and |F - F_h| between the configured and reference rules."""
    phi_h, load_h = evaluate_forms(mesh, order, coeffs, config, U_dofs, V_dofs)
    phi, load = evaluate_forms(mesh, order, coeffs, reference_config(ref_degree), U_dofs, V_dofs)
    return abs(phi - phi_h), abs(load - load_h)


def consistency_probe(order: int, mesh_ns, coeffs: Coefficients, config: QuadratureConfig,
                      seed: int = 0, builder=None):
    """Refinement sweep of the form-consistency gap with normalized probe fields.

    Returns (rows, fit) where each row is (n, h, |Phi - Phi_h|, |F - F_h|) and
    the fit is the log-log slope of the sesquilinear gap against h.
    """
    from .mesh import structured_cube_mesh

    builder = builder or structured_cube_mesh
    seed = seed or DEFAULT_SEED
    rows = []
    for n in mesh_ns:
        mesh = builder(n)
        U = probe_field(mesh, order, seed + 11)
        V = probe_field(mesh, order, seed + 23)
        dphi, dload = consistency_error(mesh, order, coeffs, config, U, V)
        rows.append((n, mesh.h, dphi, dload))
    records = [ErrorRecord(n=n, h=h, dofs=1, l2_error=max(dphi, 1e-300), curl_error=0.0)
               for n, h, dphi, _ in rows]
    return rows, fit_rate(records, "h")


# -- curved single-element probe -------------------------------------------------

def shrunk_quadratic_map(s: float, offsets=None) -> CurvedMap:
    """A quadratic element of size s whose mid-edge bumps scale like s^2.

    The s^2 scaling keeps the family regular in the mapping sense (second
    derivatives of the map decay like the squared element size, as for meshes
    of a fixed smooth boundary).
    """
    from .reference_element import LOCAL_EDGES, REF_VERTICES

    if offsets is None:
        offsets = {0: np.array([0.0, 0.12, 0.10]), 5: np.array([0.14, 0.0, -0.08])}
    ctrl = [s * v for v in REF_VERTICES]
    for k, (a, b) in enumerate(LOCAL_EDGES):
        mid = s * (REF_VERTICES[a] + REF_VERTICES[b]) / 2.0
        if k in offsets:
            mid = mid + s * s * np.asarray(offsets[k], float)
        ctrl.append(mid)
    return curved_map(np.array(ctrl))


def curved_local_error(cmap: CurvedMap, coeff, rule: RefQuadratureRule, order: int,
                       mode: str, u_ref=None, v_ref=None, ref_rule=None) -> float:
    """Quadrature error of one form term on a single curved element.

    ``coeff`` is a MatrixField for modes 'mass' and 'curlcurl', a VectorField
    for 'load'.  Test/trial fields are reference dof vectors of the order-k
    basis pushed through the curved covariant Piola map.  The reference value
    integrates the same integrand with a high-degree certified tensor rule
    through the same map.
    """
    basis = curl_basis(order)
    if u_ref is None:
        u_ref = np.cos(1.0 + np.arange(basis.n_dofs))
    if v_ref is None:
        v_ref = np.sin(2.0 + 0.7 * np.arange(basis.n_dofs))
    if ref_rule is None:
        ref_rule = tensorized_gl(10)

    def term(rule_):
        mq = map_curved(rule_, cmap)                      # weights carry det J
        ref_pts = rule_.points
        J = cmap.jacobian(ref_pts)
        det = cmap.det_at(ref_pts)
        if mode == "mass":
            vals = basis.eval_many(ref_pts)
            Jinv = np.linalg.inv(J)
            u = np.einsum("m,lmc,lcp->lp", u_ref, vals, Jinv)
            v = np.einsum("m,lmc,lcp->lp", v_ref, vals, Jinv)
            mat = np.asarray(coeff(mq.points))
            g = np.einsum("lpq,lq,lp->l", mat, u, v.conj())
        elif mode == "curlcurl":
            curls = basis.curl_many(ref_pts)
            u = np.einsum("m,lmc,lpc->lp", u_ref, curls, J) / det[:, None]
            v = np.einsum("m,lmc,lpc->lp", v_ref, curls, J) / det[:, None]
            mat = np.asarray(coeff(mq.points))
            g = np.einsum("lpq,lq,lp->l", mat, u, v.conj())
        elif mode == "load":
            vals = basis.eval_many(ref_pts)
            Jinv = np.linalg.inv(J)
            v = np.einsum("m,lmc,lcp->lp", v_ref, vals, Jinv)
            cur = np.asarray(coeff(mq.points))
            g = np.einsum("lp,lp->l", cur, v.conj())
        else:
            raise ValueError("mode must be 'mass', 'curlcurl' or 'load'")
        return complex(np.dot(mq.weights, g))

    return abs(term(ref_rule) - term(rule))


def probe_matrix_field(pts):
    """Smooth non-polynomial symmetric matrix coefficient for the curved probe."""
    pts = np.atleast_2d(pts)
    out = np.zeros((len(pts), 3, 3))
    base = 2.0 + 0.7 * np.sin(pts[:, 0] + 2.0 * pts[:, 1] - pts[:, 2])
    out[:, 0, 0] = out[:, 1, 1] = out[:, 2, 2] = base
    off = 0.4 * np.cos(2.0 * pts[:, 0] - pts[:, 1])
    out[:, 0, 1] = out[:, 1, 0] = off
    return out


def probe_vector_field(pts):
    pts = np.atleast_2d(pts)
    return np.column_stack([
        np.sin(pts[:, 0] + pts[:, 1]),
        np.cos(2.0 * pts[:, 1] + pts[:, 2]),
        np.sin(pts[:, 0]) * np.cos(pts[:, 2]),
    ])


def curved_rule_degree(mode: str, order: int, m: int, map_degree: int = 2) -> int:
    """Exactness threshold of the curved local error lemma for one form term."""
    if mode == "curlcurl":
        return order + map_degree + m - 3
    return order + 2 * map_degree + m - 3


def curved_probe(mode: str, order: int, m: int, below: bool = False,
                 svals=(0.5, 0.25, 0.125, 0.0625)):
    """Shrinking-family sweep of the curved local quadrature error.

    Returns (rows, fit): rows are (s, error); the fit is the log-log slope of
    the error against the shrink factor s.
    """
    from .quadrature import builtin_rule

    degree = curved_rule_degree(mode, order, m) - (1 if below else 0)
    if degree < 0:
        raise ValueError("rule degree below zero; nothing to probe")
    rule = builtin_rule("pt1_offcenter") if degree == 0 else rule_for_degree(degree)
    coeff = probe_vector_field if mode == "load" else probe_matrix_field
    rows = []
    for s in svals:
        err = curved_local_error(shrunk_quadratic_map(s), coeff, rule, order, mode)
        rows.append((s, err))
    records = [ErrorRecord(n=0, h=s, dofs=1, l2_error=max(e, 1e-300), curl_error=0.0) for s, e in rows]
    return rows, fit_rate(records, "h")
