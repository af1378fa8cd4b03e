"""Reference basis construction, Piola mapping, duality, trace moments."""

import numpy as np
import pytest

from versatile_ns.element import (
    REF_EDGE_ENDPOINTS,
    REF_EDGE_LENGTHS,
    REF_EDGE_NORMALS,
    REF_VERTICES,
    build_element_map,
    eval_hdiv_basis,
    eval_scalar_basis,
    lagrange_nodes,
    map_to_physical,
    map_to_reference,
    monomial_exponents,
    reference_basis,
    shifted_legendre,
)
from versatile_ns.mesh import build_structured_triangle_mesh
from versatile_ns.quadrature import edge_rule, triangle_rule

RNG = np.random.default_rng(20260822)


def random_ref_points(n):
    p = RNG.random((n, 2))
    flip = p.sum(axis=1) > 1
    p[flip] = 1.0 - p[flip][:, ::-1]
    return p


# ---------------------------------------------------------------- scalar


def test_lagrange_dimensions_and_nodal_property():
    for k in range(1, 5):
        basis = reference_basis("lagrange", k)
        assert basis.dim == (k + 1) * (k + 2) // 2
        nodes, _ = lagrange_nodes(k)
        V, _ = basis.tabulate(nodes)
        np.testing.assert_allclose(V, np.eye(basis.dim), atol=1e-12)


def test_partition_of_unity():
    pts = random_ref_points(40)
    for k in range(1, 5):
        basis = reference_basis("lagrange", k)
        V, G = basis.tabulate(pts)
        np.testing.assert_allclose(V.sum(axis=1), 1.0, atol=1e-13)
        np.testing.assert_allclose(G.sum(axis=1), 0.0, atol=1e-12)


def test_eval_scalar_basis_single_point():
    basis = reference_basis("lagrange", 2)
    v, g = eval_scalar_basis(basis, (0.3, 0.4))
    assert v.shape == (6,) and g.shape == (6, 2)
    assert abs(v.sum() - 1.0) < 1e-14


def test_scalar_gradients_match_finite_differences():
    h = 1e-7
    pts = random_ref_points(10) * 0.8 + 0.05
    for k in (1, 3):
        basis = reference_basis("lagrange", k)
        _, G = basis.tabulate(pts)
        for d in range(2):
            e = np.zeros(2)
            e[d] = h
            Vp, _ = basis.tabulate(pts + e)
            Vm, _ = basis.tabulate(pts - e)
            fd = (Vp - Vm) / (2 * h)
            assert np.abs(fd - G[:, :, d]).max() < 1e-6


def test_unsupported_degrees_raise():
    for fam, deg in (("lagrange", 5), ("lagrange", -1), ("bdm", 5), ("bdm", 0), ("rt", 4)):
        with pytest.raises(NotImplementedError):
            reference_basis(fam, deg)
    with pytest.raises(ValueError):
        reference_basis("nedelec", 1)


# ---------------------------------------------------------------- vector


def test_vector_dimensions():
    for k in range(1, 5):
        assert reference_basis("bdm", k).dim == (k + 1) * (k + 2)
    for k in range(0, 4):
        assert reference_basis("rt", k).dim == (k + 1) * (k + 3)


def test_duality_refined_quadrature():
    # re-apply every functional with a finer rule than construction used
    for fam, degs in (("bdm", range(1, 5)), ("rt", range(0, 4))):
        for k in degs:
            basis = reference_basis(fam, k)
            erule = edge_rule(2 * k + 8)
            got = np.zeros((3 * (k + 1), basis.dim))
            row = 0
            for e, (a, b) in enumerate(REF_EDGE_ENDPOINTS):
                pa, pb = REF_VERTICES[a], REF_VERTICES[b]
                pts = pa[None, :] + erule.points[:, None] * (pb - pa)[None, :]
                V, _, _ = basis.tabulate(pts)
                vn = V @ REF_EDGE_NORMALS[e]
                for m in range(k + 1):
                    leg = shifted_legendre(m, erule.points)
                    got[row] = REF_EDGE_LENGTHS[e] * (erule.weights * leg) @ vn
                    row += 1
            expect = np.zeros_like(got)
            for j, ent in enumerate(basis.dof_entities):
                if ent[0] == "edge":
                    expect[ent[1] * (k + 1) + ent[2], j] = 1.0
            np.testing.assert_allclose(got, expect, atol=1e-12)


def test_rt0_constant_normal_trace():
    basis = reference_basis("rt", 0)
    t = np.linspace(0.05, 0.95, 7)
    for e, (a, b) in enumerate(REF_EDGE_ENDPOINTS):
        pa, pb = REF_VERTICES[a], REF_VERTICES[b]
        pts = pa[None, :] + t[:, None] * (pb - pa)[None, :]
        V, _, _ = basis.tabulate(pts)
        vn = V @ REF_EDGE_NORMALS[e]
        for j, ent in enumerate(basis.dof_entities):
            want = 1.0 / REF_EDGE_LENGTHS[e] if ent[1] == e else 0.0
            np.testing.assert_allclose(vn[:, j], want, atol=1e-13)


def test_divergence_is_polynomial_of_expected_degree():
    # fit sampled divergence in P_k; residual vanishes if it lies there
    pts = random_ref_points(120)
    for fam, k, div_deg in (("bdm", 2, 1), ("bdm", 3, 2), ("rt", 1, 1), ("rt", 2, 2)):
        basis = reference_basis(fam, k)
        _, _, D = basis.tabulate(pts)
        M = np.column_stack(
            [pts[:, 0] ** a * pts[:, 1] ** b for a, b in monomial_exponents(div_deg)]
        )
        coef, *_ = np.linalg.lstsq(M, D, rcond=None)
        assert np.abs(M @ coef - D).max() < 1e-9


def test_vector_gradients_match_finite_differences():
    h = 1e-7
    pts = random_ref_points(8) * 0.8 + 0.05
    for fam, k in (("bdm", 2), ("rt", 1)):
        basis = reference_basis(fam, k)
        _, G, D = basis.tabulate(pts)
        np.testing.assert_allclose(G[:, :, 0, 0] + G[:, :, 1, 1], D, atol=1e-11)
        for d in range(2):
            e = np.zeros(2)
            e[d] = h
            Vp, _, _ = basis.tabulate(pts + e)
            Vm, _, _ = basis.tabulate(pts - e)
            fd = (Vp - Vm) / (2 * h)
            assert np.abs(fd - G[:, :, :, d]).max() < 1e-6


# ------------------------------------------------------------ element map


def test_map_round_trip():
    mesh = build_structured_triangle_mesh(3, 2, (-1.0, 2.0, 0.5, 1.5))
    emap = build_element_map(mesh)
    pts = random_ref_points(20)
    for e in (0, 5, 11):
        phys = map_to_physical(emap, e, pts)
        back = map_to_reference(emap, e, phys)
        assert np.abs(back - pts).max() < 1e-13


def test_structured_mesh_has_two_geometry_classes():
    mesh = build_structured_triangle_mesh(8, 8, (0, 2 * np.pi, 0, 2 * np.pi))
    emap = build_element_map(mesh)
    assert len(emap.class_reps) == 2
    assert np.abs(emap.detJ - emap.detJ[0]).max() < 1e-14 * emap.detJ[0]


def test_piola_preserves_physical_normal_moments():
    # mapped basis keeps unit normal moments on physical edges
    mesh = build_structured_triangle_mesh(2, 2, (0.0, 1.3, -0.2, 1.1))
    emap = build_element_map(mesh)
    basis = reference_basis("bdm", 2)
    k = 2
    erule = edge_rule(2 * k + 8)
    for elem in (0, 3):
        tri = mesh.triangles[elem]
        for le, (a, b) in enumerate(REF_EDGE_ENDPOINTS):
            pa, pb = mesh.vertices[tri[a]], mesh.vertices[tri[b]]
            tang = pb - pa
            L = np.hypot(*tang)
            n_out = np.array([tang[1], -tang[0]]) / L
            ref_pts = (
                REF_VERTICES[a][None, :]
                + erule.points[:, None] * (REF_VERTICES[b] - REF_VERTICES[a])[None, :]
            )
            for j, ent in enumerate(basis.dof_entities):
                vals = np.array(
                    [eval_hdiv_basis(basis, emap, elem, p)[0][j] for p in ref_pts]
                )
                for m in range(k + 1):
                    leg = shifted_legendre(m, erule.points)
                    got = L * (erule.weights * leg) @ (vals @ n_out)
                    want = 1.0 if ent == ("edge", le, m) else 0.0
                    assert abs(got - want) < 1e-12


def test_piola_divergence_scaling():
    mesh = build_structured_triangle_mesh(1, 1, (0, 0.5, 0, 0.25))
    emap = build_element_map(mesh)
    basis = reference_basis("rt", 0)
    _, _, div_ref = basis.tabulate(np.array([[0.25, 0.25]]))
    vals, divs, grads = eval_hdiv_basis(basis, emap, 0, (0.25, 0.25))
    np.testing.assert_allclose(divs, div_ref[0] / emap.detJ[0], atol=1e-13)
    np.testing.assert_allclose(grads[:, 0, 0] + grads[:, 1, 1], divs, atol=1e-13)
