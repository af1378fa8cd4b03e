"""Mesh construction, face connectivity, and periodic identification."""

import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st

from versatile_ns.mesh import (
    apply_periodic_identification,
    build_face_connectivity,
    build_structured_triangle_mesh,
    mesh_to_text,
    triangle_areas,
)


def shoelace(poly):
    # independent signed-area oracle
    x, y = poly[:, 0], poly[:, 1]
    return 0.5 * np.sum(x * np.roll(y, -1) - np.roll(x, -1) * y)


def test_unit_square_single_cell():
    m = build_structured_triangle_mesh(1, 1, (0, 1, 0, 1))
    assert m.n_vertices == 4
    assert m.n_triangles == 2
    assert abs(triangle_areas(m).sum() - 1.0) < 1e-15


def test_five_by_five_areas():
    m = build_structured_triangle_mesh(5, 5, (0, 1, 0, 1))
    areas = triangle_areas(m)
    assert (areas > 0).all()
    assert abs(areas.sum() - 1.0) < 1e-13
    oracle = sum(shoelace(m.vertices[t]) for t in m.triangles)
    assert abs(areas.sum() - oracle) < 1e-13


@settings(max_examples=30, deadline=None)
@given(
    st.integers(min_value=1, max_value=7),
    st.integers(min_value=1, max_value=7),
    st.floats(min_value=-3, max_value=3),
    st.floats(min_value=0.1, max_value=7),
    st.floats(min_value=-3, max_value=3),
    st.floats(min_value=0.1, max_value=7),
)
def test_structured_mesh_counts_and_orientation(nx, ny, x0, lx, y0, ly):
    m = build_structured_triangle_mesh(nx, ny, (x0, x0 + lx, y0, y0 + ly))
    assert m.n_vertices == (nx + 1) * (ny + 1)
    assert m.n_triangles == 2 * nx * ny
    areas = triangle_areas(m)
    assert (areas > 0).all()
    assert abs(areas.sum() - lx * ly) < 1e-10 * lx * ly


def test_invalid_arguments():
    with pytest.raises(ValueError):
        build_structured_triangle_mesh(0, 3)
    with pytest.raises(ValueError):
        build_structured_triangle_mesh(3, -1)
    with pytest.raises(ValueError):
        build_structured_triangle_mesh(2, 2, (1, 1, 0, 1))


def test_two_triangle_face_counts():
    m = build_structured_triangle_mesh(1, 1)
    f = build_face_connectivity(m)
    assert f.n_faces == 5
    assert len(f.interior_ids) == 1
    assert len(f.boundary_ids) == 4
    d = f.interior_ids[0]
    assert f.elem_plus[d] == 0 and f.elem_minus[d] == 1
    # diagonal of the unit square
    assert abs(f.length[d] - np.sqrt(2)) < 1e-15


def test_face_count_euler():
    # E = 3T - interior count; each triangle contributes 3, interiors shared
    for nx, ny in ((2, 2), (3, 5), (10, 10)):
        m = build_structured_triangle_mesh(nx, ny)
        f = build_face_connectivity(m)
        n_int = len(f.interior_ids)
        assert 3 * m.n_triangles == 2 * n_int + len(f.boundary_ids)
        # structured count: (nx+1)*ny vertical + nx*(ny+1) horizontal + nx*ny diagonal
        assert f.n_faces == (nx + 1) * ny + nx * (ny + 1) + nx * ny


def test_plus_side_has_smaller_index_and_normal_orientation():
    m = build_structured_triangle_mesh(4, 3, (0, 2, 0, 1.5))
    f = build_face_connectivity(m)
    assert (f.elem_plus[f.interior_ids] < f.elem_minus[f.interior_ids]).all()
    np.testing.assert_allclose(np.hypot(f.normal[:, 0], f.normal[:, 1]), 1.0, atol=1e-14)
    cent = m.vertices[m.triangles].mean(axis=1)
    mid = 0.5 * (m.vertices[f.va] + m.vertices[f.vb])
    # normal points away from the plus triangle's centroid
    away = ((mid - cent[f.elem_plus]) * f.normal).sum(axis=1)
    assert (away > 0).all()
    # and toward the minus centroid on interior faces
    ii = f.interior_ids
    toward = ((cent[f.elem_minus[ii]] - mid[ii]) * f.normal[ii]).sum(axis=1)
    assert (toward > 0).all()


def test_face_endpoints_sorted():
    m = build_structured_triangle_mesh(3, 3)
    f = build_face_connectivity(m)
    assert (f.va < f.vb).all()


def test_nonmanifold_rejected():
    m = build_structured_triangle_mesh(1, 1)
    # third triangle glued onto the diagonal edge (0, 3): not manifold
    bad = np.vstack([m.triangles, [[0, 3, 1]]])
    m.triangles = bad
    with pytest.raises(ValueError):
        build_face_connectivity(m)


def test_periodic_two_by_two_collapse():
    m = build_structured_triangle_mesh(2, 2)
    f = build_face_connectivity(m)
    assert len(f.boundary_ids) == 8
    pm = apply_periodic_identification(m, f, True, True)
    # 8 boundary faces merge into 4 identified pairs
    assert pm.face_pairs.shape == (4, 2)
    masters = set(pm.face_pairs[:, 0]) | set(pm.face_pairs[:, 1])
    assert masters == set(f.boundary_ids.tolist())
    # all four corners share one representative
    corners = [0, 2, 6, 8]
    reps = {pm.vertex_map[c] for c in corners}
    assert reps == {0}
    # edge midside vertices pair with their translate
    assert pm.vertex_map[5] == 3   # (1, 0.5) -> (0, 0.5)
    assert pm.vertex_map[7] == 1   # (0.5, 1) -> (0.5, 0)


def test_periodic_one_direction():
    m = build_structured_triangle_mesh(3, 2, (0, 3, 0, 2))
    f = build_face_connectivity(m)
    pm = apply_periodic_identification(m, f, True, False)
    assert pm.face_pairs.shape == (2, 2)
    for fl, fh in pm.face_pairs:
        assert abs(m.vertices[f.va[fl]][0] - 0.0) < 1e-12
        assert abs(m.vertices[f.va[fh]][0] - 3.0) < 1e-12


def test_periodic_misaligned_rejected():
    m = build_structured_triangle_mesh(2, 2)
    f = build_face_connectivity(m)
    skew = m.vertices.copy()
    # stretch the right boundary so intervals no longer line up
    right = np.abs(skew[:, 0] - 1.0) < 1e-12
    skew[right & (skew[:, 1] > 0.4) & (skew[:, 1] < 0.6), 1] = 0.7
    m2 = build_structured_triangle_mesh(2, 2)
    m2.vertices = skew
    f2 = build_face_connectivity(m2)
    with pytest.raises(ValueError):
        apply_periodic_identification(m2, f2, True, False)


def test_text_dump_round_trip():
    m = build_structured_triangle_mesh(2, 1, (0, 1, 0, 0.5))
    txt = mesh_to_text(m)
    vlines = [l for l in txt.splitlines() if l.startswith("v ")]
    tlines = [l for l in txt.splitlines() if l.startswith("t ")]
    assert len(vlines) == m.n_vertices
    assert len(tlines) == m.n_triangles
    v0 = np.array([float(tok) for tok in vlines[0].split()[1:]])
    np.testing.assert_allclose(v0, m.vertices[0], atol=0)
    t0 = [int(tok) for tok in tlines[0].split()[1:]]
    assert t0 == m.triangles[0].tolist()
