"""Global function spaces over a triangulation.

Families are named by the pairing index k of a velocity-pressure pair:
'TH-velocity' is continuous vector Lagrange of degree k+1, 'TH-pressure'
continuous Lagrange of degree k, 'DC-pressure' discontinuous Lagrange of
degree k, 'BDM' the Brezzi-Douglas-Marini space of degree k+1, and 'RT'
the Raviart-Thomas space of index k.  With that bookkeeping every pairing
satisfies div(velocity space) contained in the pressure space.

Shared H(div) edge dofs are Legendre moments along each face's canonical
direction (smaller vertex id first).  An element whose local edge runs the
other way picks up the Legendre parity factor (-1)^m, and the side whose
outward normal opposes the face's stored normal contributes a further -1;
the product is the orientation sign kept in ``cell_signs``.
"""

from __future__ import annotations

from dataclasses import dataclass, field

import numpy as np

from .element import (
    ElementMap,
    REF_EDGE_ENDPOINTS,
    REF_EDGE_LENGTHS,
    REF_EDGE_NORMALS,
    REF_VERTICES,
    ReferenceBasis,
    build_element_map,
    map_to_reference,
    reference_basis,
)
from .mesh import EDGE_VERTICES, FaceSet, Mesh, PeriodicMap
from .quadrature import edge_rule, triangle_rule

FAMILIES = ("TH-velocity", "TH-pressure", "DC-pressure", "BDM", "RT")


@dataclass
class FunctionSpace:
    """Dof-numbered finite element space; immutable after construction."""

    mesh: Mesh
    faces: FaceSet
    periodic: PeriodicMap | None
    family: str
    degree: int               # pairing index k
    element_degree: int
    value_rank: str           # 'scalar' | 'vector'
    basis: ReferenceBasis     # scalar basis for the Lagrange families
    emap: ElementMap
    cell_dofs: np.ndarray     # (nt, n_local)
    cell_signs: np.ndarray    # (nt, n_local)
    n_dofs: int
    _cell_cache: dict = field(default_factory=dict, repr=False)
    _face_cache: dict = field(default_factory=dict, repr=False)
    _points_cache: dict = field(default_factory=dict, repr=False)
    _aface_cache: list | None = field(default=None, repr=False)

    @property
    def n_local(self) -> int:
        return self.cell_dofs.shape[1]


@dataclass
class DiscreteField:
    """Coefficient vector attached to its space."""

    space: FunctionSpace
    coefficients: np.ndarray

    def __post_init__(self):
        self.coefficients = np.asarray(self.coefficients, dtype=float)
        if self.coefficients.shape != (self.space.n_dofs,):
            raise ValueError(
                f"coefficient length {self.coefficients.shape} does not match "
                f"space dof count {self.space.n_dofs}"
            )


def _merged_face_ids(faces: FaceSet, periodic: PeriodicMap | None):
    """Representative face for each face, plus compressed numbering."""
    frep = np.arange(faces.n_faces)
    if periodic is not None and len(periodic.face_pairs):
        frep[periodic.face_pairs[:, 1]] = periodic.face_pairs[:, 0]
    used = np.unique(frep)
    fid = -np.ones(faces.n_faces, dtype=int)
    fid[used] = np.arange(len(used))
    return frep, fid[frep], len(used)


def _face_lookup(mesh: Mesh, faces: FaceSet) -> np.ndarray:
    """face id indexed by (triangle, local edge)."""
    out = np.full((mesh.n_triangles, 3), -1, dtype=int)
    out[faces.elem_plus, faces.local_plus] = np.arange(faces.n_faces)
    ii = faces.interior_ids
    out[faces.elem_minus[ii], faces.local_minus[ii]] = ii
    return out


def _number_scalar_lagrange(mesh, faces, periodic, basis):
    deg = basis.degree
    vrep = periodic.vertex_map if periodic is not None else np.arange(mesh.n_vertices)
    vused = np.unique(vrep)
    vid = -np.ones(mesh.n_vertices, dtype=int)
    vid[vused] = np.arange(len(vused))
    vglob = vid[vrep]
    nvm = len(vused)

    _, fglob, nfm = _merged_face_ids(faces, periodic)
    flook = _face_lookup(mesh, faces)
    n_edge = deg - 1
    n_int = (deg - 1) * (deg - 2) // 2
    base_edge = nvm
    base_int = nvm + nfm * n_edge
    n_dofs = base_int + mesh.n_triangles * n_int

    cell_dofs = np.empty((mesh.n_triangles, basis.dim), dtype=int)
    for e, tri in enumerate(mesh.triangles):
        for j, ent in enumerate(basis.dof_entities):
            if ent[0] == "vertex":
                cell_dofs[e, j] = vglob[tri[ent[1]]]
            elif ent[0] == "edge":
                le, i = ent[1], ent[2]
                a, b = EDGE_VERTICES[le]
                f = flook[e, le]
                # canonical direction starts at the smaller vertex id
                slot = (n_edge - 1 - i) if tri[a] > tri[b] else i
                cell_dofs[e, j] = base_edge + fglob[f] * n_edge + slot
            else:
                cell_dofs[e, j] = base_int + e * n_int + ent[1]
    return cell_dofs, np.ones_like(cell_dofs, dtype=float), n_dofs


def _number_hdiv(mesh, faces, periodic, basis):
    Me = basis.edge_app["n_moments"]
    frep, fglob, nfm = _merged_face_ids(faces, periodic)
    flook = _face_lookup(mesh, faces)
    n_int = sum(1 for ent in basis.dof_entities if ent[0] == "interior")
    base_int = nfm * Me
    n_dofs = base_int + mesh.n_triangles * n_int

    cell_dofs = np.empty((mesh.n_triangles, basis.dim), dtype=int)
    cell_signs = np.ones((mesh.n_triangles, basis.dim))
    for e, tri in enumerate(mesh.triangles):
        for j, ent in enumerate(basis.dof_entities):
            if ent[0] == "edge":
                le, m = ent[1], ent[2]
                a, b = EDGE_VERTICES[le]
                f = flook[e, le]
                rep = frep[f]
                outward = 1.0 if faces.elem_plus[f] == e else -1.0
                align = float(np.sign(faces.normal[f] @ faces.normal[rep]))
                flip = tri[a] > tri[b]
                sign = outward * align * ((-1.0) ** m if flip else 1.0)
                cell_dofs[e, j] = fglob[f] * Me + m
                cell_signs[e, j] = sign
            else:
                cell_dofs[e, j] = base_int + e * n_int + ent[1]
    return cell_dofs, cell_signs, n_dofs


def build_function_space(
    mesh: Mesh,
    faces: FaceSet,
    periodic: PeriodicMap | None,
    family: str,
    k: int,
) -> FunctionSpace:
    """Build a global space for pairing index ``k``.

    Raises NotImplementedError for unsupported family/degree combinations
    and ValueError for unknown family names.
    """
    if family not in FAMILIES:
        raise ValueError(f"unknown family {family!r}; expected one of {FAMILIES}")
    caps = {
        "TH-velocity": (1, 3),
        "TH-pressure": (1, 4),
        "DC-pressure": (0, 4),
        "BDM": (0, 3),
        "RT": (0, 3),
    }
    lo, hi = caps[family]
    if not lo <= k <= hi:
        raise NotImplementedError(f"{family} pairing index {k} unsupported ({lo}..{hi})")

    emap = build_element_map(mesh)
    if family == "TH-velocity":
        basis = reference_basis("lagrange", k + 1)
        sc_dofs, _, n_sc = _number_scalar_lagrange(mesh, faces, periodic, basis)
        cell_dofs = np.empty((mesh.n_triangles, 2 * basis.dim), dtype=int)
        cell_dofs[:, 0::2] = 2 * sc_dofs
        cell_dofs[:, 1::2] = 2 * sc_dofs + 1
        signs = np.ones_like(cell_dofs, dtype=float)
        return FunctionSpace(mesh, faces, periodic, family, k, k + 1, "vector",
                             basis, emap, cell_dofs, signs, 2 * n_sc)
    if family == "TH-pressure":
        basis = reference_basis("lagrange", k)
        cd, cs, nd = _number_scalar_lagrange(mesh, faces, periodic, basis)
        return FunctionSpace(mesh, faces, periodic, family, k, k, "scalar",
                             basis, emap, cd, cs, nd)
    if family == "DC-pressure":
        basis = reference_basis("lagrange", k)
        nt = mesh.n_triangles
        cd = np.arange(nt * basis.dim, dtype=int).reshape(nt, basis.dim)
        return FunctionSpace(mesh, faces, periodic, family, k, k, "scalar",
                             basis, emap, cd, np.ones_like(cd, dtype=float),
                             nt * basis.dim)
    ed = k + 1 if family == "BDM" else k
    basis = reference_basis(family.lower(), ed)
    cd, cs, nd = _number_hdiv(mesh, faces, periodic, basis)
    return FunctionSpace(mesh, faces, periodic, family, k, ed, "vector",
                         basis, emap, cd, cs, nd)


def boundary_velocity_dofs(space: FunctionSpace) -> np.ndarray:
    """Global dofs pinned to zero by the homogeneous Dirichlet condition.

    For TH velocity every boundary node is eliminated (both components);
    for BDM/RT only the normal moments on non-periodic boundary faces are,
    leaving tangential control to the face terms.
    """
    faces, periodic = space.faces, space.periodic
    paired = set()
    if periodic is not None:
        paired = set(periodic.face_pairs.ravel().tolist())
    wall = [f for f in faces.boundary_ids.tolist() if f not in paired]
    if not wall:
        return np.empty(0, dtype=int)
    if space.family in ("TH-pressure", "DC-pressure"):
        return np.empty(0, dtype=int)

    if space.family == "TH-velocity":
        deg = space.element_degree
        flook = _face_lookup(space.mesh, faces)
        nodes = set()
        wallset = set(wall)
        for e, tri in enumerate(space.mesh.triangles):
            for le in range(3):
                if flook[e, le] not in wallset:
                    continue
                for j, ent in enumerate(space.basis.dof_entities):
                    if ent[0] == "vertex" and ent[1] in EDGE_VERTICES[le]:
                        nodes.add(space.cell_dofs[e, 2 * j] // 2)
                    elif ent[0] == "edge" and ent[1] == le:
                        nodes.add(space.cell_dofs[e, 2 * j] // 2)
        out = []
        for n in sorted(nodes):
            out += [2 * n, 2 * n + 1]
        return np.array(out, dtype=int)

    Me = space.basis.edge_app["n_moments"]
    _, fglob, _ = _merged_face_ids(faces, periodic)
    out = []
    for f in wall:
        out += [fglob[f] * Me + m for m in range(Me)]
    return np.unique(np.array(out, dtype=int))


# ------------------------------------------------------------ interpolation


def interpolate_field(space: FunctionSpace, f) -> DiscreteField:
    """Canonical interpolation of ``f``; f maps (n, 2) points to values.

    Lagrange families sample nodes; H(div) families apply the edge moment
    and interior moment functionals element by element.
    """
    coeffs = np.zeros(space.n_dofs)
    emap, basis = space.emap, space.basis
    nt = space.mesh.n_triangles

    if space.family in ("TH-pressure", "DC-pressure", "TH-velocity"):
        nodes = basis.nodes
        phys = emap.v0[:, None, :] + np.einsum("ecd,nd->enc", emap.J, nodes)
        vals = np.asarray(f(phys.reshape(-1, 2)))
        if space.family == "TH-velocity":
            vals = vals.reshape(nt, len(nodes), 2)
            coeffs[space.cell_dofs] = vals.reshape(nt, -1)
        else:
            coeffs[space.cell_dofs] = vals.reshape(nt, len(nodes))
        return DiscreteField(space, coeffs)

    eapp, iapp = basis.edge_app, basis.int_app
    epts, wmom = eapp["pts"], eapp["wmom"]          # (3, nqe, 2), (3, Me, nqe)
    local = np.empty((nt, basis.dim))
    # pull back f onto each reference element: uhat = detJ Jinv f(F(xhat))
    for le in range(3):
        phys = emap.v0[:, None, :] + np.einsum("ecd,qd->eqc", emap.J, epts[le])
        fv = np.asarray(f(phys.reshape(-1, 2))).reshape(nt, -1, 2)
        uhat = np.einsum("e,edc,eqc->eqd", emap.detJ, emap.Jinv, fv)
        un = uhat @ REF_EDGE_NORMALS[le]            # (nt, nqe)
        mom = np.einsum("mq,eq->em", wmom[le], un)  # (nt, Me)
        for j, ent in enumerate(basis.dof_entities):
            if ent[0] == "edge" and ent[1] == le:
                local[:, j] = mom[:, ent[2]]
    if iapp["psi_w"].shape[0]:
        phys = emap.v0[:, None, :] + np.einsum("ecd,qd->eqc", emap.J, iapp["pts"])
        fv = np.asarray(f(phys.reshape(-1, 2))).reshape(nt, -1, 2)
        uhat = np.einsum("e,edc,eqc->eqd", emap.detJ, emap.Jinv, fv)
        mom = np.einsum("iqc,eqc->ei", iapp["psi_w"], uhat)
        for j, ent in enumerate(basis.dof_entities):
            if ent[0] == "interior":
                local[:, j] = mom[:, ent[1]]
    # local coefficient = sign * global; duplicates agree when f is
    # normal-continuous, numpy assignment keeps the last write
    coeffs[space.cell_dofs] = space.cell_signs * local
    return DiscreteField(space, coeffs)


# ---------------------------------------------------------- point evaluation


def _locate(space: FunctionSpace, x: np.ndarray) -> tuple[int, np.ndarray]:
    mesh = space.mesh
    x0, x1, y0, y1 = mesh.domain
    eps = 1e-10 * max(x1 - x0, y1 - y0)
    if not (x0 - eps <= x[0] <= x1 + eps and y0 - eps <= x[1] <= y1 + eps):
        raise ValueError(f"point {tuple(x)} lies outside the domain {mesh.domain}")
    if mesh.shape is not None:
        nx, ny = mesh.shape
        fx = (x[0] - x0) / (x1 - x0) * nx
        fy = (x[1] - y0) / (y1 - y0) * ny
        i = min(max(int(np.floor(fx)), 0), nx - 1)
        j = min(max(int(np.floor(fy)), 0), ny - 1)
        elem = 2 * (j * nx + i) + (0 if fx - i >= fy - j else 1)
        return elem, map_to_reference(space.emap, elem, x)[0]
    for elem in range(mesh.n_triangles):
        r = map_to_reference(space.emap, elem, x)[0]
        if r[0] >= -1e-12 and r[1] >= -1e-12 and r.sum() <= 1 + 1e-12:
            return elem, r
    raise ValueError(f"point {tuple(x)} not found in any triangle")


def evaluate_field(field: DiscreteField, x) -> float | np.ndarray:
    """Evaluate a discrete field at one physical point."""
    space = field.space
    x = np.asarray(x, dtype=float)
    elem, ref = _locate(space, x)
    cloc = field.coefficients[space.cell_dofs[elem]] * space.cell_signs[elem]
    if space.value_rank == "scalar":
        V, _ = space.basis.tabulate(ref[None, :])
        return float(V[0] @ cloc)
    if space.family == "TH-velocity":
        V, _ = space.basis.tabulate(ref[None, :])
        return np.array([V[0] @ cloc[0::2], V[0] @ cloc[1::2]])
    V, _, _ = space.basis.tabulate(ref[None, :])
    vhat = V[0].T @ cloc
    return space.emap.J[elem] @ vhat / space.emap.detJ[elem]


# ------------------------------------------------------- assembly tabulation


@dataclass
class CellBatch:
    """Physical-frame basis tables shared by all triangles of one shape."""

    elems: np.ndarray        # (E,)
    detJ: float
    weights: np.ndarray      # (nq,) physical = reference * detJ
    points: np.ndarray       # (nq, 2) reference points
    phi: np.ndarray          # (nq, nl) scalar / (nq, nl, 2) vector
    grad: np.ndarray         # (nq, nl, 2) scalar / (nq, nl, 2, 2) vector
    div: np.ndarray | None   # (nq, nl) for vector families


def _transform_tables(space, ref_pts, J, Jinv, det):
    basis = space.basis
    if space.value_rank == "scalar":
        V, G = basis.tabulate(ref_pts)
        return V, np.einsum("pjd,dc->pjc", G, Jinv), None
    if space.family == "TH-velocity":
        V, G = basis.tabulate(ref_pts)
        Gp = np.einsum("pjd,dc->pjc", G, Jinv)
        nq, nd = V.shape
        phi = np.zeros((nq, 2 * nd, 2))
        grad = np.zeros((nq, 2 * nd, 2, 2))
        div = np.zeros((nq, 2 * nd))
        for c in range(2):
            phi[:, c::2, c] = V
            grad[:, c::2, c, :] = Gp
            div[:, c::2] = Gp[:, :, c]
        return phi, grad, div
    V, G, D = basis.tabulate(ref_pts)
    phi = np.einsum("cd,pjd->pjc", J, V) / det
    grad = np.einsum("ce,pjef,fd->pjcd", J, G, Jinv) / det
    return phi, grad, D / det


def cell_batches(space: FunctionSpace, degree: int) -> list[CellBatch]:
    """Volume tables for a quadrature degree, grouped by geometry class."""
    if degree not in space._cell_cache:
        rule = triangle_rule(degree)
        emap = space.emap
        out = []
        for rep in emap.class_reps:
            cls = emap.class_of[rep]
            elems = np.flatnonzero(emap.class_of == cls)
            det = float(emap.detJ[rep])
            phi, grad, div = _transform_tables(
                space, rule.points, emap.J[rep], emap.Jinv[rep], det
            )
            out.append(CellBatch(elems, det, rule.weights * det, rule.points,
                                 phi, grad, div))
        space._cell_cache[degree] = out
    return space._cell_cache[degree]


def physical_points(space: FunctionSpace, degree: int) -> np.ndarray:
    """Physical quadrature points for every triangle, (nt, nq, 2)."""
    if degree not in space._points_cache:
        rule = triangle_rule(degree)
        emap = space.emap
        space._points_cache[degree] = emap.v0[:, None, :] + np.einsum(
            "ecd,qd->eqc", emap.J, rule.points
        )
    return space._points_cache[degree]


@dataclass
class AssemblyFace:
    """One face as the assembler sees it (periodic twins already merged)."""

    fid: int                  # geometric face id (master face for merged)
    elem_p: int
    lep: int
    flip_p: bool
    elem_m: int               # -1 on one-sided boundary faces
    lem: int
    flip_m: bool


def assembly_faces(space: FunctionSpace) -> list[AssemblyFace]:
    if space._aface_cache is not None:
        return space._aface_cache
    faces, periodic = space.faces, space.periodic
    tri = space.mesh.triangles
    out = []

    def flip_of(elem, le, f):
        a, _ = EDGE_VERTICES[le]
        return int(tri[elem, a]) != int(faces.va[f])

    for f in faces.interior_ids:
        ep, lep = int(faces.elem_plus[f]), int(faces.local_plus[f])
        em, lem = int(faces.elem_minus[f]), int(faces.local_minus[f])
        out.append(AssemblyFace(int(f), ep, lep, flip_of(ep, lep, f),
                                em, lem, flip_of(em, lem, f)))
    paired = set()
    if periodic is not None:
        for mst, twn in periodic.face_pairs:
            mst, twn = int(mst), int(twn)
            paired.update((mst, twn))
            ep, lep = int(faces.elem_plus[mst]), int(faces.local_plus[mst])
            em, lem = int(faces.elem_plus[twn]), int(faces.local_plus[twn])
            out.append(AssemblyFace(mst, ep, lep, flip_of(ep, lep, mst),
                                    em, lem, flip_of(em, lem, twn)))
    for f in faces.boundary_ids:
        f = int(f)
        if f in paired:
            continue
        ep, lep = int(faces.elem_plus[f]), int(faces.local_plus[f])
        out.append(AssemblyFace(f, ep, lep, flip_of(ep, lep, f), -1, -1, False))
    space._aface_cache = out
    return out


@dataclass
class FaceBatch:
    """Trace tables for a group of geometrically congruent faces.

    Quadrature point q sits at the same physical location seen from both
    sides; plus/minus tables are already Piola- or gradient-transformed.
    """

    face_ids: np.ndarray     # (F,)
    elem_p: np.ndarray       # (F,)
    elem_m: np.ndarray | None
    h: float
    normal: np.ndarray       # (2,)
    weights: np.ndarray      # (nq,) physical, sum to h
    phi_p: np.ndarray
    grad_p: np.ndarray
    div_p: np.ndarray | None
    phi_m: np.ndarray | None = None
    grad_m: np.ndarray | None = None
    div_m: np.ndarray | None = None

    @property
    def boundary(self) -> bool:
        return self.elem_m is None


def _edge_ref_points(le: int, t: np.ndarray, flipped: bool) -> np.ndarray:
    a, b = REF_EDGE_ENDPOINTS[le]
    s = 1.0 - t if flipped else t
    return REF_VERTICES[a][None, :] + s[:, None] * (REF_VERTICES[b] - REF_VERTICES[a])[None, :]


def face_batches(space: FunctionSpace, degree: int) -> list[FaceBatch]:
    """Face trace tables grouped by (shape, local edge, flip) signature."""
    if degree in space._face_cache:
        return space._face_cache[degree]
    rule = edge_rule(degree)
    emap, faces = space.emap, space.faces
    groups: dict[tuple, list[AssemblyFace]] = {}
    order: list[tuple] = []
    for af in assembly_faces(space):
        key = (
            int(emap.class_of[af.elem_p]), af.lep, af.flip_p,
            -1 if af.elem_m < 0 else int(emap.class_of[af.elem_m]),
            af.lem, af.flip_m,
            tuple(np.round(faces.normal[af.fid], 12)),
            round(float(faces.length[af.fid]), 12),
        )
        if key not in groups:
            groups[key] = []
            order.append(key)
        groups[key].append(af)
    out = []
    for key in order:
        afs = groups[key]
        f0 = afs[0]
        h = float(faces.length[f0.fid])
        normal = faces.normal[f0.fid].copy()
        rp = f0.elem_p
        pts_p = _edge_ref_points(f0.lep, rule.points, f0.flip_p)
        phi_p, grad_p, div_p = _transform_tables(
            space, pts_p, emap.J[rp], emap.Jinv[rp], float(emap.detJ[rp])
        )
        batch = FaceBatch(
            face_ids=np.array([af.fid for af in afs]),
            elem_p=np.array([af.elem_p for af in afs]),
            elem_m=None,
            h=h, normal=normal, weights=rule.weights * h,
            phi_p=phi_p, grad_p=grad_p, div_p=div_p,
        )
        if f0.elem_m >= 0:
            rm = f0.elem_m
            pts_m = _edge_ref_points(f0.lem, rule.points, f0.flip_m)
            phi_m, grad_m, div_m = _transform_tables(
                space, pts_m, emap.J[rm], emap.Jinv[rm], float(emap.detJ[rm])
            )
            batch.elem_m = np.array([af.elem_m for af in afs])
            batch.phi_m, batch.grad_m, batch.div_m = phi_m, grad_m, div_m
        out.append(batch)
    space._face_cache[degree] = out
    return out


def local_coefficients(space: FunctionSpace, coeffs: np.ndarray,
                       elems: np.ndarray | slice = slice(None)) -> np.ndarray:
    """Signed per-element coefficient blocks, (E, n_local)."""
    return coeffs[space.cell_dofs[elems]] * space.cell_signs[elems]
