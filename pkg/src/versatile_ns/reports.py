"""Error tables and field snapshots.

Tables go out as small CSV files mirroring the convergence-study layout
(one row per mesh, orders between consecutive rows).  Field snapshots go
out as legacy ASCII VTK unstructured grids: every element is subdivided
into the lattice of its polynomial degree, fields are sampled per
element (so discontinuities survive), and vorticity is attached to the
sub-triangles.  All node orderings are fixed functions of the mesh, so
identical runs emit identical bytes.
"""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from .analysis import ErrorReport
from .space import DiscreteField, local_coefficients
from .space import _transform_tables


def format_error_table(reports) -> str:
    lines = ["k,h,dof,vel_error,vel_order,pres_error,pres_order"]
    for r in reports:
        vo = "" if r.vel_order is None else f"{r.vel_order:.2f}"
        po = "" if r.pres_order is None else f"{r.pres_order:.2f}"
        lines.append(f"{r.k},{r.h:.4g},{r.dof},{r.vel_l2:.2e},{vo},"
                     f"{r.pres_l2:.2e},{po}")
    return "\n".join(lines) + "\n"


def write_error_table(reports, path) -> None:
    with open(path, "w") as fh:
        fh.write(format_error_table(reports))


def read_error_table(path):
    """Parse a table written by write_error_table back into reports."""
    with open(path) as fh:
        lines = [ln.strip() for ln in fh if ln.strip()]
    if not lines or lines[0] != "k,h,dof,vel_error,vel_order,pres_error,pres_order":
        raise ValueError(f"not an error table: {path}")
    out = []
    for ln in lines[1:]:
        k, h, dof, ve, vo, pe, po = ln.split(",")
        out.append(ErrorReport(
            k=int(k), h=float(h), dof=int(dof), vel_l2=float(ve),
            pres_l2=float(pe), vel_order=None if vo == "" else float(vo),
            pres_order=None if po == "" else float(po)))
    return out


def _lattice(m: int):
    """Degree-m principal lattice of the reference triangle.

    Returns (points (n,2), triangles (m*m,3)) with nodes ordered row by
    row from the bottom and consistent counter-clockwise sub-triangles.
    """
    pts = []
    index = {}
    for j in range(m + 1):
        for i in range(m + 1 - j):
            index[(i, j)] = len(pts)
            pts.append((i / m, j / m))
    tris = []
    for j in range(m):
        for i in range(m - j):
            tris.append((index[(i, j)], index[(i + 1, j)],
                         index[(i, j + 1)]))
            if i + j + 2 <= m:
                tris.append((index[(i + 1, j)], index[(i + 1, j + 1)],
                             index[(i, j + 1)]))
    return np.array(pts, dtype=float), np.array(tris, dtype=int)


def _eval_on_lattice(field: DiscreteField, ref_pts, want_curl=False):
    """Per-element values (and optionally curl) at reference points."""
    space = field.space
    emap = space.emap
    nt = space.mesh.n_triangles
    nq = len(ref_pts)
    scalar = space.value_rank == "scalar"
    vals = np.empty((nt, nq) if scalar else (nt, nq, 2))
    curl = np.empty((nt, nq)) if want_curl else None
    for rep in emap.class_reps:
        cls = emap.class_of[rep]
        elems = np.flatnonzero(emap.class_of == cls)
        phi, grad, _ = _transform_tables(
            space, ref_pts, emap.J[rep], emap.Jinv[rep],
            float(emap.detJ[rep]))
        c = local_coefficients(space, field.coefficients, elems)
        if scalar:
            vals[elems] = np.einsum("el,ql->eq", c, phi, optimize=False)
        else:
            vals[elems] = np.einsum("el,qlc->eqc", c, phi, optimize=False)
            if want_curl:
                curl[elems] = np.einsum(
                    "el,ql->eq", c, grad[:, :, 1, 0] - grad[:, :, 0, 1],
                    optimize=False)
    return vals, curl


@dataclass
class FieldSampling:
    """Flattened per-element lattice samples ready for writers/plots."""

    points: np.ndarray        # (N, 2) physical node coordinates
    triangles: np.ndarray     # (M, 3) sub-triangle connectivity
    velocity: np.ndarray      # (N, 2)
    speed: np.ndarray         # (N,)
    pressure: np.ndarray      # (N,)
    vorticity_nodes: np.ndarray   # (N,)
    vorticity_cells: np.ndarray   # (M,)


def sample_fields(u: DiscreteField, p: DiscreteField) -> FieldSampling:
    V = u.space
    m = max(1, V.element_degree)
    ref_pts, ref_tris = _lattice(m)
    nt = V.mesh.n_triangles
    npt = len(ref_pts)
    emap = V.emap
    phys = emap.v0[:, None, :] + np.einsum(
        "ecd,qd->eqc", emap.J, ref_pts, optimize=False)
    vel, vort = _eval_on_lattice(u, ref_pts, want_curl=True)
    centroids = ref_pts[ref_tris].mean(axis=1)
    _, vort_c = _eval_on_lattice(u, centroids, want_curl=True)
    pres, _ = _eval_on_lattice(p, ref_pts)
    offs = npt * np.arange(nt)[:, None, None]
    tris = (ref_tris[None, :, :] + offs).reshape(-1, 3)
    velocity = vel.reshape(-1, 2)
    return FieldSampling(
        points=phys.reshape(-1, 2),
        triangles=tris,
        velocity=velocity,
        speed=np.sqrt(np.sum(velocity * velocity, axis=1)),
        pressure=pres.reshape(-1),
        vorticity_nodes=vort.reshape(-1),
        vorticity_cells=vort_c.reshape(-1),
    )


def _fmt(x: float) -> str:
    # normalize negative zero so identical fields give identical bytes
    if x == 0.0:
        x = 0.0
    return f"{x:.9g}"


def write_field_output(u: DiscreteField, p: DiscreteField, t: float,
                       path) -> None:
    """Legacy ASCII VTK snapshot of velocity, pressure, speed, vorticity.

    Nodes are the per-element lattice points (duplicated on shared faces
    so discontinuous fields render faithfully); vorticity rides on the
    sub-triangles as cell data.
    """
    s = sample_fields(u, p)
    n_pts = len(s.points)
    n_cells = len(s.triangles)
    lines = [
        "# vtk DataFile Version 3.0",
        f"velocity/pressure snapshot t={t:.6g}",
        "ASCII",
        "DATASET UNSTRUCTURED_GRID",
        f"POINTS {n_pts} double",
    ]
    for x, y in s.points:
        lines.append(f"{_fmt(x)} {_fmt(y)} 0")
    lines.append(f"CELLS {n_cells} {4 * n_cells}")
    for a, b, c in s.triangles:
        lines.append(f"3 {a} {b} {c}")
    lines.append(f"CELL_TYPES {n_cells}")
    lines.extend(["5"] * n_cells)
    lines.append(f"POINT_DATA {n_pts}")
    lines.append("VECTORS velocity double")
    for vx, vy in s.velocity:
        lines.append(f"{_fmt(vx)} {_fmt(vy)} 0")
    lines.append("SCALARS pressure double 1")
    lines.append("LOOKUP_TABLE default")
    lines.extend(_fmt(v) for v in s.pressure)
    lines.append("SCALARS velocity_magnitude double 1")
    lines.append("LOOKUP_TABLE default")
    lines.extend(_fmt(v) for v in s.speed)
    lines.append(f"CELL_DATA {n_cells}")
    lines.append("SCALARS vorticity double 1")
    lines.append("LOOKUP_TABLE default")
    lines.extend(_fmt(v) for v in s.vorticity_cells)
    with open(path, "w") as fh:
        fh.write("\n".join(lines) + "\n")
