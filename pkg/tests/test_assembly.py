import numpy as np
import pytest

from edgefem.assembly import (
    Coefficients,
    MatrixField,
    QuadratureConfig,
    VectorField,
    assemble,
    dump_matrix,
    element_matrices,
    evaluate_forms,
    reference_config,
)
from edgefem.mesh import AffineMap, TetMesh, structured_cube_mesh, element_map
from edgefem.problems import catalog
from edgefem.quadrature import builtin_rule, tensorized_gl
from edgefem.reference_element import curl_basis, orientation_key
from edgefem.solver import solve

from conftest import random_tet

OFF = builtin_rule("pt1_offcenter")
CEN = builtin_rule("pt1_centroid")
PT4 = builtin_rule("pt4")
PT5 = builtin_rule("pt5")
PT15 = builtin_rule("pt15")


def unit_coeffs(current=np.zeros(3)):
    return Coefficients(mu_inv=np.eye(3), eps=-np.eye(3), omega=1.0, current=current)


def test_coefficients_reject_asymmetric():
    bad = np.eye(3)
    bad[0, 1] = 0.5
    with pytest.raises(ValueError):
        Coefficients(mu_inv=bad, eps=np.eye(3), omega=1.0, current=np.zeros(3))
    with pytest.raises(ValueError):
        Coefficients(mu_inv=np.eye(3), eps=np.eye(3), omega=0.0, current=np.zeros(3))


def test_curlcurl_block_exact_for_k1_any_rule(rng):
    # k=1 curls are constant, so even the degree-0 rule integrates exactly
    basis = curl_basis(1)
    coeffs = unit_coeffs()
    verts = random_tet(rng)
    emap = AffineMap(jac=(verts[1:] - verts[0]).T.copy(), origin=verts[0])
    ref = reference_config(8)
    A0, _, _ = element_matrices(emap, basis, coeffs, QuadratureConfig(OFF, CEN, CEN))
    A1, _, _ = element_matrices(emap, basis, coeffs, ref)
    assert np.abs(A0 - A1).max() <= 1e-13 * np.abs(A1).max()


def test_mass_block_rule_gap_shrinks_quadratically(rng):
    # centroid-rule mass differs from the high-order reference; the gap
    # measured against the system scale (the curl-curl block) decays ~h^2.
    # Relative to the mass block itself the gap is scale-free, since every
    # mass entry and its error carry the same power of h.
    basis = curl_basis(1)
    coeffs = unit_coeffs()
    verts = random_tet(rng)
    gaps, rel_gaps = [], []
    scales = (1.0, 0.5, 0.25, 0.125)
    for s in scales:
        emap = AffineMap(jac=s * (verts[1:] - verts[0]).T, origin=verts[0])
        A0, M0, _ = element_matrices(emap, basis, coeffs, QuadratureConfig(CEN, CEN, CEN))
        cfg6 = QuadratureConfig(CEN, tensorized_gl(6), CEN)
        _, M1, _ = element_matrices(emap, basis, coeffs, cfg6)
        assert np.linalg.norm(M0 - M1) > 1e-8 * np.linalg.norm(M1)
        gaps.append(np.linalg.norm(M0 - M1) / np.linalg.norm(A0))
        rel_gaps.append(np.linalg.norm(M0 - M1) / np.linalg.norm(M1))
    slope = np.polyfit(np.log(scales), np.log(gaps), 1)[0]
    assert abs(slope - 2.0) < 0.05
    assert max(rel_gaps) - min(rel_gaps) <= 1e-12 * max(rel_gaps)


def test_zero_current_gives_zero_load(rng):
    basis = curl_basis(2)
    coeffs = unit_coeffs()
    verts = random_tet(rng)
    emap = AffineMap(jac=(verts[1:] - verts[0]).T.copy(), origin=verts[0])
    _, _, f = element_matrices(emap, basis, coeffs, QuadratureConfig(PT5, PT5, PT15))
    assert np.abs(f).max() == 0.0


def test_element_matrices_reject_curved():
    class FakeCurved:
        kind = "curved"

    with pytest.raises(ValueError):
        element_matrices(FakeCurved(), curl_basis(1), unit_coeffs(), reference_config(2))


def test_assemble_unit_cube_example():
    prob = catalog("cube_poly")
    system = assemble(structured_cube_mesh(1), 1, prob.coefficients,
                      QuadratureConfig(OFF, CEN, CEN))
    assert len(system.constrained) == 19
    assert system.constrained.sum() == 18
    assert system.matrix.shape == (1, 1)
    assert system.n_free == 1


def test_assembled_matrix_hermitian_positive_definite():
    # mu0 = 10, eps0 = -10, omega = 1: real symmetric positive definite
    prob = catalog("cube_poly")
    system = assemble(structured_cube_mesh(2), 1, prob.coefficients,
                      QuadratureConfig(OFF, CEN, CEN))
    dense = system.matrix.toarray()
    assert np.abs(dense.imag).max() == 0.0
    assert np.abs(dense - dense.T.conj()).max() <= 1e-12
    assert np.linalg.eigvalsh(dense).min() > 0.0


def test_doubled_mass_weights_double_mass_blocks(rng):
    from edgefem.quadrature import RefQuadratureRule

    basis = curl_basis(1)
    coeffs = unit_coeffs()
    verts = random_tet(rng)
    emap = AffineMap(jac=(verts[1:] - verts[0]).T.copy(), origin=verts[0])
    doubled = RefQuadratureRule(CEN.points, 2.0 * CEN.weights, -1, "doubled")
    A0, M0, _ = element_matrices(emap, basis, coeffs, QuadratureConfig(CEN, CEN, CEN))
    A1, M1, _ = element_matrices(emap, basis, coeffs, QuadratureConfig(CEN, doubled, CEN))
    assert np.abs(A1 - A0).max() == 0.0
    assert np.abs(M1 - 2.0 * M0).max() <= 1e-14 * np.abs(M0).max()


def test_evaluate_forms_zero_and_symmetry(rng):
    prob = catalog("cube_poly")
    mesh = structured_cube_mesh(2)
    cfg = QuadratureConfig(OFF, CEN, CEN)
    n = mesh.n_edges
    zero = np.zeros(n, dtype=complex)
    assert evaluate_forms(mesh, 1, prob.coefficients, cfg, zero, zero) == (0.0, 0.0)

    U = rng.standard_normal(n) + 1j * rng.standard_normal(n)
    V = rng.standard_normal(n) + 1j * rng.standard_normal(n)
    phi_uv, _ = evaluate_forms(mesh, 1, prob.coefficients, cfg, U, V)
    phi_vu, _ = evaluate_forms(mesh, 1, prob.coefficients, cfg, V, U)
    assert phi_uv == pytest.approx(np.conj(phi_vu), rel=1e-12)

    with pytest.raises(ValueError):
        evaluate_forms(mesh, 1, prob.coefficients, cfg, zero[:-1], zero)


def test_assembled_quadratic_form_matches_forms(rng):
    # V^H K U (full scatter, before elimination) equals the numeric form
    prob = catalog("cube_poly")
    mesh = structured_cube_mesh(2)
    cfg = QuadratureConfig(OFF, CEN, CEN)
    system = assemble(mesh, 1, prob.coefficients, cfg)
    n = mesh.n_edges
    U = rng.standard_normal(n) + 1j * rng.standard_normal(n)
    V = rng.standard_normal(n) + 1j * rng.standard_normal(n)
    phi, load = evaluate_forms(mesh, 1, prob.coefficients, cfg, U, V)
    quad = np.vdot(V, system.full_matrix @ U)
    rhs = np.vdot(V, system.full_rhs)
    scale = max(abs(phi), abs(quad), 1.0)
    assert abs(phi - quad) <= 1e-11 * scale
    assert abs(load - rhs) <= 1e-11 * max(abs(load), 1.0)


@pytest.mark.parametrize("order,q1,q2", [(1, CEN, PT4), (2, PT4, builtin_rule("pt15"))])
def test_quadrature_exactness_equivalence(order, q1, q2):
    # constant coefficients with q1 deg >= 2(k-1), q2 deg >= 2k match the
    # high-order reference element blocks
    prob = catalog("cube_poly")
    mesh = structured_cube_mesh(1)
    basis = curl_basis(order)
    ref = QuadratureConfig(tensorized_gl(8), tensorized_gl(8), tensorized_gl(8))
    for e in range(mesh.n_tets):
        emap = element_map(mesh, e)
        A0, M0, _ = element_matrices(emap, basis, prob.coefficients, QuadratureConfig(q1, q2, q2))
        A1, M1, _ = element_matrices(emap, basis, prob.coefficients, ref)
        assert np.linalg.norm(A0 - A1) <= 1e-11 * np.linalg.norm(A1)
        assert np.linalg.norm(M0 - M1) <= 1e-11 * np.linalg.norm(M1)


def test_curlcurl_annihilates_hat_gradients():
    mesh = structured_cube_mesh(2)
    coeffs = Coefficients(mu_inv=np.eye(3) / 10.0, eps=np.zeros((3, 3)), omega=1.0,
                          current=np.zeros(3))
    system = assemble(mesh, 1, coeffs, QuadratureConfig(OFF, CEN, CEN))
    K = system.full_matrix
    scale = np.abs(K.data).max()
    for v in (0, 5, 13):
        grad = np.zeros(mesh.n_edges, dtype=complex)
        for e, (a, b) in enumerate(mesh.edges):
            grad[e] = (1.0 if b == v else 0.0) - (1.0 if a == v else 0.0)
        assert np.abs(K @ grad).max() <= 1e-10 * scale


def test_pec_tangential_trace(rng):
    prob = catalog("cube_poly")
    mesh = structured_cube_mesh(2)
    system = assemble(mesh, 1, prob.coefficients, QuadratureConfig(OFF, CEN, CEN))
    field, report = solve(system, tol=1e-12)
    assert report.converged
    tet_of_face = {}
    for e in range(mesh.n_tets):
        for f in mesh.tet2face[e]:
            tet_of_face.setdefault(f, e)
    worst = 0.0
    for f in rng.choice(mesh.boundary_faces, size=8, replace=False):
        a, b, c = mesh.faces[f]
        p0, p1, p2 = mesh.vertices[[a, b, c]]
        nrm = np.cross(p1 - p0, p2 - p0)
        nrm /= np.linalg.norm(nrm)
        uv = rng.random((5, 2))
        uv = np.where(uv.sum(axis=1, keepdims=True) > 1.0, 1.0 - uv, uv)
        pts = p0 + uv[:, :1] * (p1 - p0) + uv[:, 1:] * (p2 - p0)
        tet = tet_of_face[f]
        emap = element_map(mesh, tet)
        ref = (pts - emap.origin) @ emap.inv.T
        vals, _ = field.eval_in_element(tet, ref)
        tang = vals - (vals @ nrm)[:, None] * nrm
        worst = max(worst, np.abs(tang).max())
    assert worst <= 1e-9


def test_sparsity_pattern_symmetric_and_finite():
    prob = catalog("cube_poly")
    system = assemble(structured_cube_mesh(2), 1, prob.coefficients,
                      QuadratureConfig(OFF, CEN, CEN))
    K = system.matrix
    pattern = K.copy()
    pattern.data[:] = 1.0
    assert (pattern != pattern.T).nnz == 0
    assert np.all(np.isfinite(K.data))
    assert np.all(np.isfinite(system.rhs))


def test_scatter_determinism():
    prob = catalog("cube_poly")
    mesh = structured_cube_mesh(2)
    cfg = QuadratureConfig(OFF, CEN, PT5)
    s1 = assemble(mesh, 1, prob.coefficients, cfg)
    s2 = assemble(mesh, 1, prob.coefficients, cfg)
    assert np.array_equal(s1.matrix.data, s2.matrix.data)
    assert np.array_equal(s1.matrix.indices, s2.matrix.indices)
    assert np.array_equal(s1.rhs, s2.rhs)


def test_order2_dof_layout_and_pec():
    prob = catalog("cube_poly")
    mesh = structured_cube_mesh(1)
    system = assemble(mesh, 2, prob.coefficients, QuadratureConfig(PT5, PT5, PT15))
    expected = 2 * mesh.n_edges + 2 * mesh.n_faces
    assert len(system.constrained) == expected
    # constrained: both moments of all boundary edges and boundary faces
    n_con = 2 * len(mesh.boundary_edges) + 2 * len(mesh.boundary_faces)
    assert system.constrained.sum() == n_con
    dense = system.matrix.toarray()
    assert np.linalg.eigvalsh(dense).min() > 0.0


def test_solution_field_eval_consistency(rng):
    prob = catalog("cube_poly")
    mesh = structured_cube_mesh(2)
    system = assemble(mesh, 1, prob.coefficients, QuadratureConfig(OFF, CEN, CEN))
    field, _ = solve(system, tol=1e-12)
    pts = rng.random((4, 3)) * 0.2
    vals_vec, curls_vec = field.eval_elements(pts, tet_indices=[3, 11])
    for row, tet in enumerate((3, 11)):
        v, c = field.eval_in_element(tet, pts)
        assert np.abs(v - vals_vec[row]).max() <= 1e-14
        assert np.abs(c - curls_vec[row]).max() <= 1e-14


def test_dump_matrix_format():
    prob = catalog("cube_poly")
    system = assemble(structured_cube_mesh(1), 1, prob.coefficients,
                      QuadratureConfig(OFF, CEN, CEN))
    text = dump_matrix(system)
    lines = text.strip().split("\n")
    assert len(lines) == system.matrix.nnz
    i, j, re, im = lines[0].split()
    assert i == "0" and j == "0"
    assert float(im) == 0.0


def test_matrix_field_vector_field_validation():
    with pytest.raises(ValueError):
        MatrixField(np.ones((2, 2)))
    with pytest.raises(ValueError):
        VectorField(np.ones(4))
    fld = MatrixField(lambda pts: np.ones((len(pts), 3)))
    with pytest.raises(ValueError):
        fld(np.zeros((2, 3)))
