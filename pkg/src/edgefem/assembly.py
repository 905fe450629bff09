"""Numeric sesquilinear/antilinear forms, global assembly and PEC elimination.

Three independent reference rules drive the three terms:

    q1 :  curl-curl      sum_K Q1_K( mu^-1 curl u . conj curl v )
    q2 :  mass           sum_K Q2_K( -omega^2 eps u . conj v )
    q3 :  load           sum_K Q3_K( -i omega J . conj v )

Coefficients are evaluated at the physical quadrature points (no coefficient
interpolation).  Assembly is complex throughout, scatters element blocks with
the per-element orientation transform applied, and then eliminates every DOF
sitting on a boundary edge or boundary face (PEC: vanishing tangential trace).
Element blocks are accumulated in a fixed element order, so repeated
assemblies of the same inputs are bit-identical.
"""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np
import scipy.sparse as sp

from .mesh import TetMesh, all_affine_data
from .quadrature import RefQuadratureRule, rule_for_degree
from .reference_element import CurlBasis, curl_basis, dof_transform, orientation_key

__all__ = [
    "MatrixField",
    "VectorField",
    "Coefficients",
    "QuadratureConfig",
    "SparseSystem",
    "SolutionField",
    "element_matrices",
    "assemble",
    "evaluate_forms",
    "reference_config",
    "dump_matrix",
]

_CHUNK_BUDGET = 3_000_000   # floats per pushed-basis scratch block


class MatrixField:
    """A (possibly constant) field of complex symmetric 3x3 matrices."""

    def __init__(self, value):
        if callable(value):
            self.constant = None
            self._fn = value
        else:
            mat = np.asarray(value, dtype=complex)
            if mat.shape == ():
                mat = mat * np.eye(3)
            if mat.shape != (3, 3):
                raise ValueError("constant coefficient must be scalar or 3x3")
            self.constant = mat
            self._fn = None

    def __call__(self, pts):
        pts = np.atleast_2d(pts)
        if self.constant is not None:
            return np.broadcast_to(self.constant, (len(pts), 3, 3))
        out = np.asarray(self._fn(pts), dtype=complex)
        if out.shape != (len(pts), 3, 3):
            raise ValueError("matrix field must return (N, 3, 3)")
        return out


class VectorField:
    """A (possibly constant) field of complex 3-vectors."""

    def __init__(self, value):
        if callable(value):
            self.constant = None
            self._fn = value
        else:
            vec = np.asarray(value, dtype=complex)
            if vec.shape != (3,):
                raise ValueError("constant current must be a 3-vector")
            self.constant = vec
            self._fn = None

    def __call__(self, pts):
        pts = np.atleast_2d(pts)
        if self.constant is not None:
            return np.broadcast_to(self.constant, (len(pts), 3))
        out = np.asarray(self._fn(pts), dtype=complex)
        if out.shape != (len(pts), 3):
            raise ValueError("vector field must return (N, 3)")
        return out


@dataclass(frozen=True)
class Coefficients:
    """PDE data: inverse permeability, permittivity, frequency and current."""

    mu_inv: MatrixField
    eps: MatrixField
    omega: float
    current: VectorField

    def __post_init__(self):
        object.__setattr__(self, "mu_inv", self.mu_inv if isinstance(self.mu_inv, MatrixField) else MatrixField(self.mu_inv))
        object.__setattr__(self, "eps", self.eps if isinstance(self.eps, MatrixField) else MatrixField(self.eps))
        object.__setattr__(self, "current", self.current if isinstance(self.current, VectorField) else VectorField(self.current))
        if not (self.omega > 0):
            raise ValueError("omega must be positive")
        sample = np.array([[-0.9, 0.4, 0.7], [0.0, 0.0, 0.0], [0.8, -0.5, -1.0], [0.3, 0.9, -0.2]])
        for fld in (self.mu_inv, self.eps):
            mats = fld(sample)
            if np.abs(mats - np.swapaxes(mats, 1, 2)).max() > 1e-14:
                raise ValueError("coefficient matrices must be symmetric")


@dataclass(frozen=True)
class QuadratureConfig:
    """The three reference rules: q1 curl-curl, q2 mass, q3 load."""

    q1: RefQuadratureRule
    q2: RefQuadratureRule
    q3: RefQuadratureRule


def reference_config(degree: int = 10) -> QuadratureConfig:
    """High-degree configuration used as the 'exact integration' stand-in."""
    rule = rule_for_degree(degree)
    return QuadratureConfig(rule, rule, rule)


# -- dof numbering -------------------------------------------------------------

def _dof_layout(mesh: TetMesh, order: int):
    """Global dof count, per-element dof map and the PEC-constrained mask."""
    if order == 1:
        n_dofs = mesh.n_edges
        gdof = mesh.tet2edge.copy()
        constrained = np.zeros(n_dofs, dtype=bool)
        constrained[mesh.boundary_edges] = True
        entities = [("edge", int(e), 0) for e in range(mesh.n_edges)]
    elif order == 2:
        ne = mesh.n_edges
        n_dofs = 2 * ne + 2 * mesh.n_faces
        e_part = (2 * mesh.tet2edge[:, :, None] + np.arange(2)).reshape(mesh.n_tets, 12)
        f_part = (2 * ne + 2 * mesh.tet2face[:, :, None] + np.arange(2)).reshape(mesh.n_tets, 8)
        gdof = np.concatenate([e_part, f_part], axis=1)
        constrained = np.zeros(n_dofs, dtype=bool)
        for e in mesh.boundary_edges:
            constrained[2 * e] = constrained[2 * e + 1] = True
        for f in mesh.boundary_faces:
            constrained[2 * ne + 2 * f] = constrained[2 * ne + 2 * f + 1] = True
        entities = [("edge", e, m) for e in range(ne) for m in (0, 1)]
        entities += [("face", f, m) for f in range(mesh.n_faces) for m in (0, 1)]
    else:
        raise ValueError("order must be 1 or 2")
    return n_dofs, gdof, constrained, entities


def _orientation_transforms(mesh: TetMesh, basis: CurlBasis) -> np.ndarray:
    X = np.empty((mesh.n_tets, basis.n_dofs, basis.n_dofs))
    for e in range(mesh.n_tets):
        X[e] = dof_transform(orientation_key(mesh.tets[e]), basis)
    return X


@dataclass
class SparseSystem:
    """Assembled complex system after PEC elimination.

    ``matrix``/``rhs`` are the reduced (free-dof) objects; ``full_matrix`` and
    ``full_rhs`` keep the unconstrained scatter for cross-checks and form
    evaluation.  ``dof_map[g]`` names global dof g as (entity kind, index,
    moment).
    """

    matrix: sp.csr_matrix
    rhs: np.ndarray
    dof_map: list
    constrained: np.ndarray
    n_free: int
    full_matrix: sp.csr_matrix
    full_rhs: np.ndarray
    mesh: TetMesh
    order: int
    gdof: np.ndarray
    orientations: np.ndarray
    free_index: np.ndarray

    def expand(self, reduced: np.ndarray) -> np.ndarray:
        """Insert the constrained zeros back into a reduced vector."""
        full = np.zeros(len(self.constrained), dtype=complex)
        full[self.free_index] = reduced
        return full


@dataclass
class SolutionField:
    """Discrete field: full dof vector plus per-element evaluation."""

    mesh: TetMesh
    order: int
    dofs: np.ndarray              # full layout, constrained entries zero
    gdof: np.ndarray              # (nt, nd)
    orientations: np.ndarray      # (nt, nd, nd)

    def __post_init__(self):
        self.basis = curl_basis(self.order)
        # local coefficients of the physical per-element expansion
        self.local = np.einsum("emd,ed->em", self.orientations, self.dofs[self.gdof])

    def eval_in_element(self, tet_index: int, ref_points):
        """(values, curls) of the field at reference points of one element."""
        ref_points = np.atleast_2d(ref_points)
        jac, origin, det, inv = _tet_affine(self.mesh, tet_index)
        vals = self.basis.eval_many(ref_points)
        curls = self.basis.curl_many(ref_points)
        w = self.local[tet_index]
        v = np.einsum("nmc,m->nc", vals, w) @ inv
        c = (np.einsum("nmc,m->nc", curls, w) @ jac.T) / det
        return v, c

    def eval_elements(self, ref_points, tet_indices=None):
        """Vectorized (values, curls) over many elements: (E, L, 3) arrays."""
        ref_points = np.atleast_2d(ref_points)
        mesh = self.mesh
        idx = np.arange(mesh.n_tets) if tet_indices is None else np.asarray(tet_indices)
        jac, origin, det, inv = all_affine_data(mesh)
        jac, det, inv = jac[idx], det[idx], inv[idx]
        vals = self.basis.eval_many(ref_points)       # (L, nd, 3)
        curls = self.basis.curl_many(ref_points)
        w = self.local[idx]                           # (E, nd)
        v = np.einsum("lmc,em->elc", vals, w)
        c = np.einsum("lmc,em->elc", curls, w)
        v = np.einsum("elc,ecp->elp", v, inv)
        c = np.einsum("elc,epc->elp", c, jac) / det[:, None, None]
        return v, c


def _tet_affine(mesh, e):
    v = mesh.vertices[mesh.tets[e]]
    jac = (v[1:] - v[0]).T
    return jac, v[0], float(np.linalg.det(jac)), np.linalg.inv(jac)


# -- element matrices ------------------------------------------------------------

def element_matrices(emap, basis: CurlBasis, coeffs: Coefficients, config: QuadratureConfig, key=None):
    """Curl-curl block, mass block and load vector of one affine element.

    With ``key`` given, the orientation transform is applied so the blocks
    refer to the globally oriented dofs.
    """
    if emap.kind != "affine":
        raise ValueError("element_matrices expects an affine map")
    det = emap.det
    jac, inv = emap.jac, emap.inv

    def mapped(rule):
        return emap.apply(rule.points)

    # curl-curl
    r1 = config.q1
    chat = basis.curl_many(r1.points)                     # (L, nd, 3)
    c_phys = np.einsum("lnc,pc->lnp", chat, jac) / det
    mu = coeffs.mu_inv(mapped(r1))                        # (L, 3, 3)
    A = np.einsum("l,lip,lpq,ljq->ij", abs(det) * r1.weights, c_phys, mu, c_phys)

    # mass (includes the -omega^2 factor)
    r2 = config.q2
    vhat = basis.eval_many(r2.points)
    v_phys = np.einsum("lnc,cp->lnp", vhat, inv)
    eps = coeffs.eps(mapped(r2))
    M = -coeffs.omega ** 2 * np.einsum("l,lip,lpq,ljq->ij", abs(det) * r2.weights, v_phys, eps, v_phys)

    # load
    r3 = config.q3
    vhat3 = basis.eval_many(r3.points)
    v3 = np.einsum("lnc,cp->lnp", vhat3, inv)
    J = coeffs.current(mapped(r3))
    f = -1j * coeffs.omega * np.einsum("l,lp,lip->i", abs(det) * r3.weights, J, v3)

    if key is not None:
        X = dof_transform(key, basis)
        A = X.T @ A @ X
        M = X.T @ M @ X
        f = X.T @ f
    return A, M, f


def _chunks(n_items, per_item_cost):
    step = max(1, _CHUNK_BUDGET // max(per_item_cost, 1))
    for start in range(0, n_items, step):
        yield start, min(start + step, n_items)


def _term_blocks(mesh, basis, rule, jac, origin, det, inv, kind, coeff_field, omega):
    """Element blocks of one form term for all elements, orientation not applied.

    kind is 'curl', 'mass' or 'load'.
    """
    L, nd = rule.npoints, basis.n_dofs
    nt = mesh.n_tets
    if kind == "curl":
        table = basis.curl_many(rule.points)
    else:
        table = basis.eval_many(rule.points)

    out = np.zeros((nt, nd, nd), dtype=complex) if kind != "load" else np.zeros((nt, nd), dtype=complex)
    for lo, hi in _chunks(nt, L * nd * 3):
        j, o, d, iv = jac[lo:hi], origin[lo:hi], det[lo:hi], inv[lo:hi]
        pts = o[:, None, :] + np.einsum("epc,lc->elp", j, rule.points)
        flat = pts.reshape(-1, 3)
        w = np.abs(d)[:, None] * rule.weights[None, :]
        if kind == "curl":
            phys = np.einsum("lnc,epc->elnp", table, j) / d[:, None, None, None]
            mat = coeff_field(flat).reshape(hi - lo, L, 3, 3)
            out[lo:hi] = np.einsum("el,elip,elpq,eljq->eij", w, phys, mat, phys)
        elif kind == "mass":
            phys = np.einsum("lnc,ecp->elnp", table, iv)
            mat = coeff_field(flat).reshape(hi - lo, L, 3, 3)
            out[lo:hi] = -omega ** 2 * np.einsum("el,elip,elpq,eljq->eij", w, phys, mat, phys)
        else:
            phys = np.einsum("lnc,ecp->elnp", table, iv)
            cur = coeff_field(flat).reshape(hi - lo, L, 3)
            out[lo:hi] = -1j * omega * np.einsum("el,elp,elip->ei", w, cur, phys)
    return out


def assemble(mesh: TetMesh, order: int, coeffs: Coefficients, config: QuadratureConfig) -> SparseSystem:
    """Assemble the numeric forms into a PEC-constrained sparse system."""
    basis = curl_basis(order)
    n_dofs, gdof, constrained, entities = _dof_layout(mesh, order)
    jac, origin, det, inv = all_affine_data(mesh)
    if np.any(det <= 0):
        raise ValueError("mesh must be positively oriented")

    A = _term_blocks(mesh, basis, config.q1, jac, origin, det, inv, "curl", coeffs.mu_inv, coeffs.omega)
    M = _term_blocks(mesh, basis, config.q2, jac, origin, det, inv, "mass", coeffs.eps, coeffs.omega)
    f = _term_blocks(mesh, basis, config.q3, jac, origin, det, inv, "load", coeffs.current, coeffs.omega)

    X = _orientation_transforms(mesh, basis)
    K = np.einsum("emi,emn,enj->eij", X, A + M, X)
    fo = np.einsum("emi,em->ei", X, f)

    nd = basis.n_dofs
    rows = np.repeat(gdof, nd, axis=1).ravel()
    cols = np.tile(gdof, (1, nd)).ravel()
    full = sp.coo_matrix((K.ravel(), (rows, cols)), shape=(n_dofs, n_dofs)).tocsr()
    full_rhs = np.zeros(n_dofs, dtype=complex)
    np.add.at(full_rhs, gdof.ravel(), fo.ravel())

    free = np.flatnonzero(~constrained)
    reduced = full[free][:, free].tocsr()
    reduced.sum_duplicates()
    return SparseSystem(
        matrix=reduced,
        rhs=full_rhs[free],
        dof_map=entities,
        constrained=constrained,
        n_free=len(free),
        full_matrix=full,
        full_rhs=full_rhs,
        mesh=mesh,
        order=order,
        gdof=gdof,
        orientations=X,
        free_index=free,
    )


def evaluate_forms(mesh: TetMesh, order: int, coeffs: Coefficients, config: QuadratureConfig,
                   U_dofs: np.ndarray, V_dofs: np.ndarray):
    """Numeric forms evaluated directly by quadrature from full dof vectors.

    Returns (Phi(U, V), F(V)); sesquilinear in (U, conj V).  Passing
    :func:`reference_config` gives the high-degree 'exact' reference values.
    """
    basis = curl_basis(order)
    n_dofs, gdof, _, _ = _dof_layout(mesh, order)
    if len(U_dofs) != n_dofs or len(V_dofs) != n_dofs:
        raise ValueError(f"dof vectors must have the full length {n_dofs}")
    jac, origin, det, inv = all_affine_data(mesh)
    X = _orientation_transforms(mesh, curl_basis(order))
    u_loc = np.einsum("emd,ed->em", X, np.asarray(U_dofs, dtype=complex)[gdof])
    v_loc = np.einsum("emd,ed->em", X, np.asarray(V_dofs, dtype=complex)[gdof])

    phi = 0.0 + 0.0j
    load = 0.0 + 0.0j
    nt = mesh.n_tets

    for kind, rule in (("curl", config.q1), ("mass", config.q2), ("load", config.q3)):
        L = rule.npoints
        table = basis.curl_many(rule.points) if kind == "curl" else basis.eval_many(rule.points)
        for lo, hi in _chunks(nt, L * 4):
            j, o, d, iv = jac[lo:hi], origin[lo:hi], det[lo:hi], inv[lo:hi]
            pts = (o[:, None, :] + np.einsum("epc,lc->elp", j, rule.points)).reshape(-1, 3)
            w = np.abs(d)[:, None] * rule.weights[None, :]
            if kind == "curl":
                uc = np.einsum("lnc,en->elc", table, u_loc[lo:hi])
                vc = np.einsum("lnc,en->elc", table, v_loc[lo:hi])
                u = np.einsum("elc,epc->elp", uc, j) / d[:, None, None]
                v = np.einsum("elc,epc->elp", vc, j) / d[:, None, None]
                mu = coeffs.mu_inv(pts).reshape(hi - lo, L, 3, 3)
                phi += np.einsum("el,elpq,elq,elp->", w, mu, u, v.conj())
            elif kind == "mass":
                uv = np.einsum("lnc,en->elc", table, u_loc[lo:hi])
                vv = np.einsum("lnc,en->elc", table, v_loc[lo:hi])
                u = np.einsum("elc,ecp->elp", uv, iv)
                v = np.einsum("elc,ecp->elp", vv, iv)
                eps = coeffs.eps(pts).reshape(hi - lo, L, 3, 3)
                phi += -coeffs.omega ** 2 * np.einsum("el,elpq,elq,elp->", w, eps, u, v.conj())
            else:
                vv = np.einsum("lnc,en->elc", table, v_loc[lo:hi])
                v = np.einsum("elc,ecp->elp", vv, iv)
                cur = coeffs.current(pts).reshape(hi - lo, L, 3)
                load += -1j * coeffs.omega * np.einsum("el,elp,elp->", w, cur, v.conj())
    return complex(phi), complex(load)


def dump_matrix(system: SparseSystem, full: bool = False) -> str:
    """Coordinate text dump `i j re im` (0-based) of the assembled matrix."""
    mat = (system.full_matrix if full else system.matrix).tocoo()
    lines = [f"{i} {j} {v.real:.17g} {v.imag:.17g}" for i, j, v in zip(mat.row, mat.col, mat.data)]
    return "\n".join(lines) + "\n"
