"""Structured triangulations of rectangles, face connectivity, periodicity.

Triangles are stored counter-clockwise.  Local edge ``e`` of a triangle is
the edge opposite local vertex ``e``, traversed in the counter-clockwise
direction, so its outward normal is the tangent rotated by -90 degrees.
"""

from __future__ import annotations

from dataclasses import dataclass, field

import numpy as np

# Local edge e runs from EDGE_VERTICES[e][0] to EDGE_VERTICES[e][1].
EDGE_VERTICES = ((1, 2), (2, 0), (0, 1))


@dataclass
class Mesh:
    """Triangulation of an axis-aligned rectangle."""

    vertices: np.ndarray   # (nv, 2) float
    triangles: np.ndarray  # (nt, 3) int, counter-clockwise
    domain: tuple[float, float, float, float]  # (x0, x1, y0, y1)
    shape: tuple[int, int] | None = None       # (nx, ny) cell grid if structured

    @property
    def n_vertices(self) -> int:
        return self.vertices.shape[0]

    @property
    def n_triangles(self) -> int:
        return self.triangles.shape[0]


@dataclass
class FaceSet:
    """Unique edges of a triangulation with two-sided adjacency.

    The plus side of an interior face is the adjacent triangle with the
    smaller index; ``normal`` points from plus to minus, and outward on the
    boundary.  ``va < vb`` gives each face a mesh-wide direction used to
    orient shared degrees of freedom.
    """

    va: np.ndarray           # (nf,) smaller endpoint vertex id
    vb: np.ndarray           # (nf,) larger endpoint vertex id
    elem_plus: np.ndarray    # (nf,)
    elem_minus: np.ndarray   # (nf,), -1 on the boundary
    local_plus: np.ndarray   # (nf,) local edge in plus triangle
    local_minus: np.ndarray  # (nf,), -1 on the boundary
    normal: np.ndarray       # (nf, 2) unit, plus -> minus
    length: np.ndarray       # (nf,) face diameter h_F
    interior_ids: np.ndarray = field(default_factory=lambda: np.empty(0, dtype=int))
    boundary_ids: np.ndarray = field(default_factory=lambda: np.empty(0, dtype=int))

    @property
    def n_faces(self) -> int:
        return self.va.shape[0]


@dataclass
class PeriodicMap:
    """Identification of opposite boundary faces under translation."""

    face_pairs: np.ndarray  # (np, 2) [master, twin] face ids
    vertex_map: np.ndarray  # (nv,) representative vertex for each vertex


def build_structured_triangle_mesh(
    nx: int, ny: int, rect: tuple[float, float, float, float] = (0.0, 1.0, 0.0, 1.0)
) -> Mesh:
    """Split an nx-by-ny cell grid of ``rect`` into congruent triangle pairs.

    Each cell is cut along the diagonal from its lower-left to its
    upper-right corner; both triangles come out counter-clockwise.
    """
    if nx <= 0 or ny <= 0:
        raise ValueError(f"cell counts must be positive, got nx={nx}, ny={ny}")
    x0, x1, y0, y1 = map(float, rect)
    if not (x1 > x0 and y1 > y0):
        raise ValueError(f"degenerate rectangle {rect}")
    xs = np.linspace(x0, x1, nx + 1)
    ys = np.linspace(y0, y1, ny + 1)
    gx, gy = np.meshgrid(xs, ys)            # row j holds y = ys[j]
    vertices = np.column_stack([gx.ravel(), gy.ravel()])

    tris = np.empty((2 * nx * ny, 3), dtype=int)
    for j in range(ny):
        for i in range(nx):
            v00 = j * (nx + 1) + i
            v10 = v00 + 1
            v01 = v00 + (nx + 1)
            v11 = v01 + 1
            c = 2 * (j * nx + i)
            tris[c] = (v00, v10, v11)       # below the diagonal
            tris[c + 1] = (v00, v11, v01)   # above the diagonal
    return Mesh(vertices, tris, (x0, x1, y0, y1), shape=(nx, ny))


def triangle_areas(mesh: Mesh) -> np.ndarray:
    """Signed areas; positive for counter-clockwise triangles."""
    p = mesh.vertices[mesh.triangles]
    d1 = p[:, 1] - p[:, 0]
    d2 = p[:, 2] - p[:, 0]
    return 0.5 * (d1[:, 0] * d2[:, 1] - d1[:, 1] * d2[:, 0])


def build_face_connectivity(mesh: Mesh) -> FaceSet:
    """Enumerate unique edges and record plus/minus adjacency.

    Faces appear in order of first touch while scanning triangles in
    ascending index, which makes the smaller-index triangle the plus side.
    """
    first: dict[tuple[int, int], int] = {}
    va, vb, ep, em, lp, lm = [], [], [], [], [], []
    nrm, hln = [], []
    verts = mesh.vertices
    for e, tri in enumerate(mesh.triangles):
        for le, (a, b) in enumerate(EDGE_VERTICES):
            ga, gb = int(tri[a]), int(tri[b])
            key = (ga, gb) if ga < gb else (gb, ga)
            if key not in first:
                first[key] = len(va)
                t = verts[gb] - verts[ga]
                h = float(np.hypot(t[0], t[1]))
                va.append(key[0])
                vb.append(key[1])
                ep.append(e)
                em.append(-1)
                lp.append(le)
                lm.append(-1)
                nrm.append((t[1] / h, -t[0] / h))
                hln.append(h)
            else:
                f = first[key]
                if em[f] != -1:
                    raise ValueError(
                        f"edge {key} shared by more than two triangles; mesh is not manifold"
                    )
                em[f] = e
                lm[f] = le
    faces = FaceSet(
        va=np.array(va), vb=np.array(vb),
        elem_plus=np.array(ep), elem_minus=np.array(em),
        local_plus=np.array(lp), local_minus=np.array(lm),
        normal=np.array(nrm), length=np.array(hln),
    )
    faces.interior_ids = np.flatnonzero(faces.elem_minus >= 0)
    faces.boundary_ids = np.flatnonzero(faces.elem_minus < 0)
    return faces


def _pair_axis(
    mesh: Mesh, faces: FaceSet, axis: int, tol: float
) -> list[tuple[int, int]]:
    """Match boundary faces on the low side of ``axis`` with the high side."""
    x0, x1, y0, y1 = mesh.domain
    lo, hi = (x0, x1) if axis == 0 else (y0, y1)
    verts = mesh.vertices
    low, high = {}, {}
    for f in faces.boundary_ids:
        pa, pb = verts[faces.va[f]], verts[faces.vb[f]]
        if abs(pa[axis] - lo) < tol and abs(pb[axis] - lo) < tol:
            low[round(float(pa[1 - axis] + pb[1 - axis]) / 2 / tol)] = int(f)
        elif abs(pa[axis] - hi) < tol and abs(pb[axis] - hi) < tol:
            high[round(float(pa[1 - axis] + pb[1 - axis]) / 2 / tol)] = int(f)
    if set(low) != set(high):
        raise ValueError(
            f"periodic boundaries along axis {axis} are not translates of each other"
        )
    return [(low[k], high[k]) for k in sorted(low)]


def apply_periodic_identification(
    mesh: Mesh, faces: FaceSet, periodic_x: bool, periodic_y: bool
) -> PeriodicMap:
    """Pair opposite boundary faces and build the vertex identification.

    The low-coordinate face of each pair is the master.  Twin vertices map
    to master vertices; with both directions periodic the corner closure is
    taken so all four corners share one representative.
    """
    x0, x1, y0, y1 = mesh.domain
    tol = 1e-10 * max(x1 - x0, y1 - y0)
    pairs: list[tuple[int, int]] = []
    vmap = np.arange(mesh.n_vertices)
    verts = mesh.vertices
    for axis, on in ((0, periodic_x), (1, periodic_y)):
        if not on:
            continue
        shift = (x1 - x0) if axis == 0 else (y1 - y0)
        for fl, fh in _pair_axis(mesh, faces, axis, tol):
            pairs.append((fl, fh))
            for vtwin, vmaster in ((faces.va[fh], faces.va[fl]),
                                   (faces.vb[fh], faces.vb[fl])):
                d = verts[vtwin] - verts[vmaster]
                d[axis] -= shift
                if np.hypot(d[0], d[1]) > 1e3 * tol:
                    raise ValueError(
                        f"periodic faces {fl} and {fh} are misaligned along axis {axis}"
                    )
                vmap[vtwin] = vmaster
    # Corner closure: follow chains until every vertex names its representative.
    for _ in range(4):
        nxt = vmap[vmap]
        if np.array_equal(nxt, vmap):
            break
        vmap = nxt
    fp = np.array(pairs, dtype=int).reshape(-1, 2)
    if fp.size and len(np.unique(fp)) != 2 * len(fp):
        raise ValueError("a boundary face appears in more than one periodic pair")
    return PeriodicMap(face_pairs=fp, vertex_map=vmap)


def mesh_to_text(mesh: Mesh) -> str:
    """Plain-text dump: one 'v x y' line per vertex, one 't i j k' per triangle."""
    lines = [f"v {x:.17g} {y:.17g}" for x, y in mesh.vertices]
    lines += [f"t {i} {j} {k}" for i, j, k in mesh.triangles]
    return "\n".join(lines) + "\n"
