"""Tetrahedral meshes, element maps and mesh metrics.

Meshes are immutable after construction: the edge/face tables, boundary sets
and size metrics are derived once.  Vertex order inside each tet is whatever
makes the signed volume positive; all global conventions (edge directions,
face frames) are derived from global vertex ids, never from local order.
"""

from __future__ import annotations

from dataclasses import dataclass, field
from functools import cached_property
from itertools import permutations

import numpy as np

from .reference_element import LOCAL_EDGES, LOCAL_FACES

__all__ = [
    "TetMesh",
    "AffineMap",
    "CurvedMap",
    "structured_cube_mesh",
    "read_gmsh",
    "write_gmsh",
    "element_map",
    "curved_map",
    "mesh_metrics",
]


@dataclass(frozen=True)
class AffineMap:
    """T(x) = origin + J x with constant Jacobian J."""

    jac: np.ndarray       # (3, 3)
    origin: np.ndarray    # (3,)
    kind: str = field(default="affine", init=False)

    def __post_init__(self):
        det = float(np.linalg.det(self.jac))
        if det == 0.0 or not np.isfinite(det):
            raise ValueError("degenerate element: zero-volume tetrahedron")
        object.__setattr__(self, "det", det)
        object.__setattr__(self, "inv", np.linalg.inv(self.jac))

    def apply(self, pts):
        return self.origin + np.atleast_2d(pts) @ self.jac.T


# 10-node quadratic Lagrange tet: 4 vertices then LOCAL_EDGES midpoints.
_Q2_NODES = 4 + len(LOCAL_EDGES)


def _q2_shape(pts):
    """Quadratic Lagrange shape functions, (N, 10)."""
    pts = np.atleast_2d(pts)
    lam = np.column_stack([1.0 - pts.sum(axis=1), pts[:, 0], pts[:, 1], pts[:, 2]])
    cols = [lam[:, i] * (2.0 * lam[:, i] - 1.0) for i in range(4)]
    cols += [4.0 * lam[:, a] * lam[:, b] for a, b in LOCAL_EDGES]
    return np.column_stack(cols)


def _q2_shape_grad(pts):
    """Gradients of the quadratic shape functions, (N, 10, 3)."""
    pts = np.atleast_2d(pts)
    lam = np.column_stack([1.0 - pts.sum(axis=1), pts[:, 0], pts[:, 1], pts[:, 2]])
    glam = np.array([[-1.0, -1.0, -1.0], [1.0, 0.0, 0.0], [0.0, 1.0, 0.0], [0.0, 0.0, 1.0]])
    n = len(pts)
    out = np.zeros((n, _Q2_NODES, 3))
    for i in range(4):
        out[:, i, :] = (4.0 * lam[:, i] - 1.0)[:, None] * glam[i]
    for k, (a, b) in enumerate(LOCAL_EDGES):
        out[:, 4 + k, :] = 4.0 * (lam[:, a][:, None] * glam[b] + lam[:, b][:, None] * glam[a])
    return out


def _lattice_points(degree):
    pts = []
    for i in range(degree + 1):
        for j in range(degree + 1 - i):
            for k in range(degree + 1 - i - j):
                pts.append((i / degree, j / degree, k / degree))
    return np.array(pts)


@dataclass(frozen=True)
class CurvedMap:
    """Degree-2 Lagrange map from the reference tet (10 control points)."""

    control_points: np.ndarray   # (10, 3)
    degree: int = 2
    kind: str = field(default="curved", init=False)

    def __post_init__(self):
        cp = np.asarray(self.control_points, dtype=float)
        if self.degree != 2 or cp.shape != (_Q2_NODES, 3):
            raise ValueError("curved maps are degree 2 with 10 control points")
        object.__setattr__(self, "control_points", cp)
        sample = np.vstack([_lattice_points(3), [[0.25, 0.25, 0.25]]])
        if np.any(self.det_at(sample) <= 0.0):
            raise ValueError("curved map has non-positive Jacobian on the sampling grid")

    def apply(self, pts):
        return _q2_shape(pts) @ self.control_points

    def jacobian(self, pts):
        g = _q2_shape_grad(pts)                       # (N, 10, 3)
        return np.einsum("nkq,kp->npq", g, self.control_points)

    def det_at(self, pts):
        return np.linalg.det(self.jacobian(pts))


@dataclass(frozen=True)
class TetMesh:
    """An immutable tetrahedral mesh with derived topology."""

    vertices: np.ndarray     # (nv, 3)
    tets: np.ndarray         # (nt, 4) vertex ids, positively oriented

    def __post_init__(self):
        verts = np.ascontiguousarray(self.vertices, dtype=float)
        tets = np.ascontiguousarray(self.tets, dtype=np.int64)
        if len(tets) == 0:
            raise ValueError("mesh contains no tetrahedra")
        vols = _signed_volumes(verts, tets)
        if np.any(np.abs(vols) < 1e-300):
            raise ValueError("mesh contains a degenerate (zero volume) tetrahedron")
        flip = vols < 0.0
        if np.any(flip):
            tets = tets.copy()
            rows = np.flatnonzero(flip)
            tets[rows, 2], tets[rows, 3] = tets[rows, 3].copy(), tets[rows, 2].copy()
        verts.flags.writeable = False
        tets.flags.writeable = False
        object.__setattr__(self, "vertices", verts)
        object.__setattr__(self, "tets", tets)
        self._build_topology()

    def _build_topology(self):
        tets = self.tets
        nt = len(tets)

        raw_edges = np.sort(tets[:, LOCAL_EDGES], axis=2).reshape(-1, 2)
        edges, tet2edge = np.unique(raw_edges, axis=0, return_inverse=True)
        tet2edge = tet2edge.reshape(nt, 6)

        raw_faces = np.sort(tets[:, LOCAL_FACES], axis=2).reshape(-1, 3)
        faces, tet2face = np.unique(raw_faces, axis=0, return_inverse=True)
        tet2face = tet2face.reshape(nt, 4)

        counts = np.bincount(tet2face.ravel(), minlength=len(faces))
        if counts.max() > 2:
            raise ValueError("non-manifold mesh: a face is shared by more than two tets")
        boundary_faces = np.flatnonzero(counts == 1)

        bf = faces[boundary_faces]
        bedge_rows = np.sort(bf[:, [(0, 1), (0, 2), (1, 2)]], axis=2).reshape(-1, 2)
        key = edges[:, 0] * (self.vertices.shape[0] + 1) + edges[:, 1]
        bkey = np.unique(bedge_rows[:, 0] * (self.vertices.shape[0] + 1) + bedge_rows[:, 1])
        boundary_edges = np.searchsorted(key, bkey)

        diffs = self.vertices[tets[:, 1:]] - self.vertices[tets[:, :1]]
        corners = self.vertices[tets]
        pair_d = corners[:, :, None, :] - corners[:, None, :, :]
        diam = np.sqrt((pair_d ** 2).sum(-1)).max(axis=(1, 2))

        for name, value in [
            ("edges", edges), ("faces", faces),
            ("tet2edge", tet2edge), ("tet2face", tet2face),
            ("boundary_faces", boundary_faces), ("boundary_edges", boundary_edges),
            ("tet_diameters", diam),
        ]:
            value.flags.writeable = False
            object.__setattr__(self, name, value)
        object.__setattr__(self, "h", float(diam.max()))

    @property
    def n_vertices(self):
        return len(self.vertices)

    @property
    def n_tets(self):
        return len(self.tets)

    @property
    def n_edges(self):
        return len(self.edges)

    @property
    def n_faces(self):
        return len(self.faces)

    @cached_property
    def volumes(self):
        return _signed_volumes(self.vertices, self.tets)


def _signed_volumes(verts, tets):
    d = verts[tets[:, 1:]] - verts[tets[:, :1]]
    return np.linalg.det(d) / 6.0


def element_map(mesh: TetMesh, tet_index: int) -> AffineMap:
    """Affine map of one tet: columns of J are the edge vectors from vertex 0."""
    v = mesh.vertices[mesh.tets[tet_index]]
    return AffineMap(jac=(v[1:] - v[0]).T.copy(), origin=v[0].copy())


def all_affine_data(mesh: TetMesh):
    """Vectorized Jacobian data for every element: (J, origin, det, Jinv)."""
    v = mesh.vertices[mesh.tets]
    jac = np.swapaxes(v[:, 1:] - v[:, :1], 1, 2)      # (nt, 3, 3), columns = edges
    det = np.linalg.det(jac)
    inv = np.linalg.inv(jac)
    return jac, v[:, 0], det, inv


def curved_map(control_points, degree: int = 2) -> CurvedMap:
    """Degree-2 Lagrange tet map; rejects inverted control configurations."""
    return CurvedMap(np.asarray(control_points, dtype=float), degree)


def structured_cube_mesh(n: int) -> TetMesh:
    """Kuhn split of [-1, 1]^3 into 6 n^3 tets with a consistent diagonal.

    Each cell's six tets are the chains from the low corner to the high
    corner along the axis permutations, so neighbouring cells agree on every
    face diagonal and the mesh is conforming.
    """
    if n < 1:
        raise ValueError("n must be >= 1")
    coords = np.linspace(-1.0, 1.0, n + 1)
    X, Y, Z = np.meshgrid(coords, coords, coords, indexing="ij")
    vertices = np.column_stack([X.ravel(), Y.ravel(), Z.ravel()])

    def vid(i, j, k):
        return (i * (n + 1) + j) * (n + 1) + k

    tets = []
    unit = {0: (1, 0, 0), 1: (0, 1, 0), 2: (0, 0, 1)}
    for i in range(n):
        for j in range(n):
            for k in range(n):
                base = np.array([i, j, k])
                for perm in permutations((0, 1, 2)):
                    p0 = base
                    p1 = p0 + unit[perm[0]]
                    p2 = p1 + unit[perm[1]]
                    p3 = p2 + unit[perm[2]]
                    tets.append([vid(*p0), vid(*p1), vid(*p2), vid(*p3)])
    return TetMesh(vertices, np.array(tets, dtype=np.int64))


def mesh_metrics(mesh: TetMesh) -> dict:
    """Mesh size and shape regularity (diameter over insphere diameter)."""
    verts = mesh.vertices
    tets = mesh.tets
    vols = np.abs(mesh.volumes)
    corners = verts[tets]
    areas = np.zeros(len(tets))
    for (a, b, c) in LOCAL_FACES:
        e1 = corners[:, b] - corners[:, a]
        e2 = corners[:, c] - corners[:, a]
        areas += 0.5 * np.linalg.norm(np.cross(e1, e2), axis=1)
    inradius = 3.0 * vols / areas
    ratio = mesh.tet_diameters / (2.0 * inradius)
    return {
        "h": float(mesh.tet_diameters.max()),
        "h_min": float(mesh.tet_diameters.min()),
        "regularity": float(ratio.max()),
    }


# -- Gmsh MSH 2.2 ASCII ---------------------------------------------------------

def write_gmsh(mesh: TetMesh, path):
    """Write the mesh as MSH ASCII v2.2 (4-node tets, 1-based ids)."""
    with open(path, "w") as fh:
        fh.write("$MeshFormat\n2.2 0 8\n$EndMeshFormat\n")
        fh.write(f"$Nodes\n{mesh.n_vertices}\n")
        for i, (x, y, z) in enumerate(mesh.vertices, start=1):
            fh.write(f"{i} {x:.17g} {y:.17g} {z:.17g}\n")
        fh.write("$EndNodes\n")
        fh.write(f"$Elements\n{mesh.n_tets}\n")
        for i, tet in enumerate(mesh.tets, start=1):
            a, b, c, d = (tet + 1).tolist()
            fh.write(f"{i} 4 2 0 1 {a} {b} {c} {d}\n")
        fh.write("$EndElements\n")


def read_gmsh(path) -> TetMesh:
    """Read an MSH ASCII v2.2 file; elements other than 4-node tets are skipped."""
    with open(path) as fh:
        lines = [ln.strip() for ln in fh]
    pos = 0
    nodes = {}
    tets = []

    def expect(header):
        nonlocal pos
        if pos >= len(lines) or lines[pos] != header:
            found = lines[pos] if pos < len(lines) else "<eof>"
            raise ValueError(f"malformed section header: expected {header!r}, found {found!r}")
        pos += 1

    expect("$MeshFormat")
    version = lines[pos].split()[0]
    if not version.startswith("2."):
        raise ValueError(f"unsupported MSH version {version!r} (need ASCII v2.x)")
    pos += 1
    expect("$EndMeshFormat")

    expect("$Nodes")
    n_nodes = int(lines[pos]); pos += 1
    for _ in range(n_nodes):
        parts = lines[pos].split(); pos += 1
        nodes[int(parts[0])] = [float(parts[1]), float(parts[2]), float(parts[3])]
    expect("$EndNodes")

    expect("$Elements")
    n_elems = int(lines[pos]); pos += 1
    for _ in range(n_elems):
        parts = lines[pos].split(); pos += 1
        etype = int(parts[1])
        if etype != 4:
            continue
        ntags = int(parts[2])
        conn = [int(p) for p in parts[3 + ntags:]]
        if len(conn) != 4:
            raise ValueError("4-node tetrahedron with wrong connectivity length")
        tets.append(conn)
    expect("$EndElements")

    if not tets:
        raise ValueError("MSH file contains no 4-node tetrahedra")
    ids = sorted(nodes)
    remap = {gid: i for i, gid in enumerate(ids)}
    vertices = np.array([nodes[g] for g in ids])
    tet_arr = np.array([[remap[v] for v in t] for t in tets], dtype=np.int64)
    return TetMesh(vertices, tet_arr)
