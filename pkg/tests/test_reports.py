"""Error-table CSV format and the VTK snapshot writer."""

import re

import numpy as np
import pytest

from versatile_ns.analysis import ErrorReport
from versatile_ns.cases import CaseConfig, setup_case
from versatile_ns.reports import (
    _lattice,
    format_error_table,
    read_error_table,
    sample_fields,
    write_error_table,
    write_field_output,
)
from versatile_ns.space import DiscreteField, interpolate_field

HEADER = "k,h,dof,vel_error,vel_order,pres_error,pres_order"


def _tg_fields(nx=8, k=1, formulation="BDM-Symmetric"):
    ctx = setup_case(CaseConfig(case="taylor_green", formulation=formulation,
                                k=k, nx=nx))
    u = interpolate_field(ctx.V, lambda p: ctx.initial_velocity(p))
    p = DiscreteField(ctx.Q, np.zeros(ctx.Q.n_dofs))
    return ctx, u, p


def test_single_row_has_blank_orders():
    text = format_error_table([ErrorReport(h=0.5, dof=100, vel_l2=1e-3,
                                           pres_l2=1e-2, k=1)])
    lines = text.strip().split("\n")
    assert lines[0] == HEADER
    assert lines[1] == "1,0.5,100,1.00e-03,,1.00e-02,"


def test_error_format_three_significant_digits():
    text = format_error_table([
        ErrorReport(h=0.8886, dof=2101, vel_l2=1.98e-2, pres_l2=6.79e-2, k=1),
        ErrorReport(h=0.4443, dof=8401, vel_l2=2.46e-3, pres_l2=1.72e-2,
                    vel_order=3.012, pres_order=1.979, k=1)])
    lines = text.strip().split("\n")
    assert "1.98e-02" in lines[1] and "6.79e-02" in lines[1]
    assert ",3.01," in lines[2] and lines[2].endswith("1.98")
    for ln in lines[1:]:
        assert re.search(r"\d\.\d{2}e-\d{2}", ln)


def test_round_trip(tmp_path):
    rows = [ErrorReport(h=0.8886, dof=2101, vel_l2=1.98e-2, pres_l2=6.79e-2,
                        k=2),
            ErrorReport(h=0.4443, dof=8401, vel_l2=2.46e-3, pres_l2=1.72e-2,
                        vel_order=3.01, pres_order=1.98, k=2)]
    path = tmp_path / "orders.csv"
    write_error_table(rows, path)
    back = read_error_table(path)
    assert len(back) == 2
    assert back[0].k == 2 and back[0].dof == 2101
    assert back[0].vel_order is None and back[0].pres_order is None
    assert back[1].vel_order == 3.01 and back[1].pres_order == 1.98
    assert back[1].vel_l2 == 2.46e-3


def test_reader_rejects_other_files(tmp_path):
    path = tmp_path / "junk.csv"
    path.write_text("a,b,c\n1,2,3\n")
    with pytest.raises(ValueError, match="not an error table"):
        read_error_table(path)


@pytest.mark.parametrize("m", [1, 2, 3])
def test_lattice_counts_and_orientation(m):
    pts, tris = _lattice(m)
    assert len(pts) == (m + 1) * (m + 2) // 2
    assert len(tris) == m * m
    p = pts[tris]
    areas = 0.5 * ((p[:, 1, 0] - p[:, 0, 0]) * (p[:, 2, 1] - p[:, 0, 1])
                   - (p[:, 1, 1] - p[:, 0, 1]) * (p[:, 2, 0] - p[:, 0, 0]))
    assert (areas > 0).all()
    assert np.isclose(areas.sum(), 0.5)


def test_zero_fields_valid_structure(tmp_path):
    ctx, u, p = _tg_fields(nx=4)
    u = DiscreteField(ctx.V, np.zeros(ctx.V.n_dofs))
    path = tmp_path / "zero.vtk"
    write_field_output(u, p, 0.0, path)
    lines = path.read_text().strip().split("\n")
    assert lines[0] == "# vtk DataFile Version 3.0"
    assert lines[2] == "ASCII"
    assert lines[3] == "DATASET UNSTRUCTURED_GRID"
    n_pts = int(lines[4].split()[1])
    # degree-2 lattice on 32 elements, nodes duplicated per element
    assert n_pts == 32 * 6
    cells_at = 5 + n_pts
    assert lines[cells_at].startswith("CELLS ")
    n_cells = int(lines[cells_at].split()[1])
    assert n_cells == 32 * 4
    for row in lines[cells_at + 1:cells_at + 1 + n_cells]:
        parts = row.split()
        assert parts[0] == "3" and len(parts) == 4
        assert all(0 <= int(t) < n_pts for t in parts[1:])
    types_at = cells_at + 1 + n_cells
    assert lines[types_at] == f"CELL_TYPES {n_cells}"
    assert all(ln == "5" for ln in lines[types_at + 1:types_at + 1 + n_cells])

    def section(header, count, width):
        at = lines.index(header) + (1 if "VECTORS" in header else 2)
        block = lines[at:at + count]
        assert len(block) == count
        vals = np.array([[float(t) for t in ln.split()] for ln in block])
        assert vals.shape == (count, width)
        return vals

    assert f"POINT_DATA {n_pts}" in lines
    assert f"CELL_DATA {n_cells}" in lines
    for header, count, width in (
            ("VECTORS velocity double", n_pts, 3),
            ("SCALARS pressure double 1", n_pts, 1),
            ("SCALARS velocity_magnitude double 1", n_pts, 1),
            ("SCALARS vorticity double 1", n_cells, 1)):
        assert np.abs(section(header, count, width)).max() == 0.0


def test_point_and_cell_counts_consistent(tmp_path):
    ctx, u, p = _tg_fields(nx=4, k=2)
    path = tmp_path / "f.vtk"
    write_field_output(u, p, 0.25, path)
    text = path.read_text()
    n_pts = int(re.search(r"POINTS (\d+)", text).group(1))
    n_cells = int(re.search(r"CELLS (\d+)", text).group(1))
    assert int(re.search(r"POINT_DATA (\d+)", text).group(1)) == n_pts
    assert int(re.search(r"CELL_DATA (\d+)", text).group(1)) == n_cells
    # BDM at pairing k=2 has polynomial degree 3: 10 nodes, 9 subcells
    assert n_pts == 32 * 10
    assert n_cells == 32 * 9


def test_taylor_green_vorticity_peak():
    # exact vorticity 2 sin(x) sin(y): equals 2 at the vortex center
    ctx, u, p = _tg_fields(nx=8, k=2)
    s = sample_fields(u, p)
    i = np.linalg.norm(s.points - [np.pi / 2, np.pi / 2], axis=1).argmin()
    assert abs(np.linalg.norm(s.points[i] - [np.pi / 2, np.pi / 2])) < 1e-12
    assert abs(s.vorticity_nodes[i] - 2.0) < 0.05


def test_gresho_sampled_peak_speed():
    ctx = setup_case(CaseConfig(case="gresho", k=1, nx=28))
    u = interpolate_field(ctx.V, ctx.initial_velocity)
    p = DiscreteField(ctx.Q, np.zeros(ctx.Q.n_dofs))
    s = sample_fields(u, p)
    assert abs(s.speed.max() - 1.0) < 0.08


def test_speed_matches_velocity_columns():
    ctx, u, p = _tg_fields(nx=6)
    s = sample_fields(u, p)
    assert np.allclose(s.speed, np.linalg.norm(s.velocity, axis=1))


def test_vtk_deterministic_bytes(tmp_path):
    ctx, u, p = _tg_fields(nx=5)
    a, b = tmp_path / "a.vtk", tmp_path / "b.vtk"
    write_field_output(u, p, 0.5, a)
    write_field_output(u, p, 0.5, b)
    assert a.read_bytes() == b.read_bytes()


def test_vorticity_cells_near_node_values():
    # cell samples are centroid values; on a fine mesh they stay close
    # to the surrounding node samples
    ctx, u, p = _tg_fields(nx=10)
    s = sample_fields(u, p)
    node_avg = s.vorticity_nodes[s.triangles].mean(axis=1)
    assert np.abs(node_avg - s.vorticity_cells).max() < 0.1
