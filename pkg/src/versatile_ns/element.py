"""Reference bases: Lagrange, Brezzi-Douglas-Marini, Raviart-Thomas.

Each basis is built numerically as the dual of its degree-of-freedom set:
the functionals are applied to a generating monomial family, and inverting
that matrix yields the coefficient representation.  Vector traces use
shifted Legendre moments along each edge so that neighbouring triangles
agree on shared normal components up to a sign and a parity flip.
"""

from __future__ import annotations

from dataclasses import dataclass, field
from functools import lru_cache

import numpy as np
from numpy.polynomial.legendre import legval

from .quadrature import edge_rule, triangle_rule

# Reference triangle (0,0), (1,0), (0,1).  Edge e is opposite vertex e and
# runs counter-clockwise; normals point outward.
REF_VERTICES = np.array([[0.0, 0.0], [1.0, 0.0], [0.0, 1.0]])
REF_EDGE_ENDPOINTS = ((1, 2), (2, 0), (0, 1))
REF_EDGE_NORMALS = np.array(
    [[1.0 / np.sqrt(2.0), 1.0 / np.sqrt(2.0)], [-1.0, 0.0], [0.0, -1.0]]
)
REF_EDGE_LENGTHS = np.array([np.sqrt(2.0), 1.0, 1.0])

MAX_LAGRANGE = 4
MAX_BDM = 4
MAX_RT = 3


def monomial_exponents(k: int) -> list[tuple[int, int]]:
    """(a, b) with a + b <= k, grouped by total degree."""
    return [(d - b, b) for d in range(k + 1) for b in range(d + 1)]


def shifted_legendre(m: int, t: np.ndarray) -> np.ndarray:
    """Legendre polynomial of degree m rescaled to [0, 1]."""
    c = np.zeros(m + 1)
    c[m] = 1.0
    return legval(2.0 * np.asarray(t) - 1.0, c)


def _mono_val(pts: np.ndarray, expo) -> np.ndarray:
    pts = np.atleast_2d(pts)
    out = np.empty((pts.shape[0], len(expo)))
    for i, (a, b) in enumerate(expo):
        out[:, i] = pts[:, 0] ** a * pts[:, 1] ** b
    return out


def _mono_grad(pts: np.ndarray, expo) -> np.ndarray:
    pts = np.atleast_2d(pts)
    out = np.zeros((pts.shape[0], len(expo), 2))
    for i, (a, b) in enumerate(expo):
        if a > 0:
            out[:, i, 0] = a * pts[:, 0] ** (a - 1) * pts[:, 1] ** b
        if b > 0:
            out[:, i, 1] = b * pts[:, 0] ** a * pts[:, 1] ** (b - 1)
    return out


class _VectorMonomials:
    """Generating family for vector polynomial spaces.

    Each generator is a list of (component, coefficient, a, b) terms; this
    covers both plain monomial fields and the x-weighted tip of the
    Raviart-Thomas space.
    """

    def __init__(self, gens):
        self.gens = gens

    def __len__(self):
        return len(self.gens)

    def values(self, pts):
        pts = np.atleast_2d(pts)
        out = np.zeros((pts.shape[0], len(self.gens), 2))
        for g, terms in enumerate(self.gens):
            for c, coef, a, b in terms:
                out[:, g, c] += coef * pts[:, 0] ** a * pts[:, 1] ** b
        return out

    def gradients(self, pts):
        pts = np.atleast_2d(pts)
        out = np.zeros((pts.shape[0], len(self.gens), 2, 2))
        for g, terms in enumerate(self.gens):
            for c, coef, a, b in terms:
                if a > 0:
                    out[:, g, c, 0] += coef * a * pts[:, 0] ** (a - 1) * pts[:, 1] ** b
                if b > 0:
                    out[:, g, c, 1] += coef * b * pts[:, 0] ** a * pts[:, 1] ** (b - 1)
        return out

    def divergences(self, pts):
        grad = self.gradients(pts)
        return grad[:, :, 0, 0] + grad[:, :, 1, 1]


@dataclass
class ReferenceBasis:
    """Nodal/dual basis on the reference triangle.

    ``dof_entities`` labels every basis function with the entity its
    functional lives on: ('vertex', v), ('edge', e, i), or ('interior', i).
    For the vector families, edge entry i is the moment against the shifted
    Legendre polynomial of degree i, taken along the edge's local direction.

    ``nodes`` holds the Lagrange lattice for scalar bases.  For vector
    bases, ``edge_app``/``int_app`` carry quadrature tables that apply the
    dof functionals to an arbitrary reference field (used to interpolate).
    """

    family: str       # 'lagrange' | 'bdm' | 'rt'
    degree: int
    dim: int
    value_rank: str   # 'scalar' | 'vector'
    dof_entities: tuple = field(repr=False)
    _coeffs: np.ndarray = field(repr=False)        # (n_gen, dim)
    _gens: object = field(repr=False)              # monomial family
    nodes: np.ndarray | None = field(default=None, repr=False)
    edge_app: dict | None = field(default=None, repr=False)
    int_app: dict | None = field(default=None, repr=False)

    def tabulate(self, pts: np.ndarray):
        """Reference values at ``pts``.

        Scalar: (values (n, dim), gradients (n, dim, 2)).
        Vector: (values (n, dim, 2), gradients (n, dim, 2, 2),
        divergences (n, dim)); all pre-Piola.
        """
        if self.value_rank == "scalar":
            V = _mono_val(pts, self._gens)
            G = _mono_grad(pts, self._gens)
            return V @ self._coeffs, np.einsum("pgd,gj->pjd", G, self._coeffs)
        V = self._gens.values(pts)
        G = self._gens.gradients(pts)
        D = self._gens.divergences(pts)
        return (
            np.einsum("pgc,gj->pjc", V, self._coeffs),
            np.einsum("pgcd,gj->pjcd", G, self._coeffs),
            D @ self._coeffs,
        )


def lagrange_nodes(k: int) -> tuple[np.ndarray, tuple]:
    """Lattice nodes ordered vertices, then per-edge, then interior."""
    nodes = [REF_VERTICES[v] for v in range(3)]
    ents: list[tuple] = [("vertex", v) for v in range(3)]
    for e, (a, b) in enumerate(REF_EDGE_ENDPOINTS):
        pa, pb = REF_VERTICES[a], REF_VERTICES[b]
        for i in range(1, k):
            nodes.append(pa + (i / k) * (pb - pa))
            ents.append(("edge", e, i - 1))
    n_int = 0
    for j in range(1, k):
        for i in range(1, k - j):
            nodes.append(np.array([i / k, j / k]))
            ents.append(("interior", n_int))
            n_int += 1
    return np.array(nodes), tuple(ents)


def _build_lagrange(k: int) -> ReferenceBasis:
    if k == 0:
        # constant element, nodal at the centroid; only used discontinuously
        nodes = np.array([[1.0 / 3.0, 1.0 / 3.0]])
        return ReferenceBasis("lagrange", 0, 1, "scalar", (("interior", 0),),
                              np.ones((1, 1)), [(0, 0)], nodes=nodes)
    nodes, ents = lagrange_nodes(k)
    expo = monomial_exponents(k)
    V = _mono_val(nodes, expo)
    C = np.linalg.solve(V, np.eye(len(expo)))
    return ReferenceBasis("lagrange", k, len(expo), "scalar", ents, C, expo,
                          nodes=nodes)


def _edge_moment_rows(gens: _VectorMonomials, k: int):
    """Apply the 3*(k+1) edge normal-moment functionals to every generator.

    Also returns the application tables (points and moment weights per local
    edge) so the same functionals can later be applied to analytic fields.
    """
    rule = edge_rule(2 * k + 3)
    rows, ents = [], []
    pts_all = np.empty((3, len(rule.points), 2))
    wmom = np.empty((3, k + 1, len(rule.points)))
    for e, (a, b) in enumerate(REF_EDGE_ENDPOINTS):
        pa, pb = REF_VERTICES[a], REF_VERTICES[b]
        pts = pa[None, :] + rule.points[:, None] * (pb - pa)[None, :]
        pts_all[e] = pts
        vn = gens.values(pts) @ REF_EDGE_NORMALS[e]       # (nq, ngen)
        for m in range(k + 1):
            leg = shifted_legendre(m, rule.points)
            wmom[e, m] = REF_EDGE_LENGTHS[e] * rule.weights * leg
            rows.append(np.einsum("q,qg->g", wmom[e, m], vn))
            ents.append(("edge", e, m))
    edge_app = {"pts": pts_all, "wmom": wmom, "n_moments": k + 1}
    return rows, ents, edge_app


def _bubble_and_grads(pts: np.ndarray):
    """Cubic bubble x*y*(1-x-y) and its gradient at ``pts``."""
    x, y = pts[:, 0], pts[:, 1]
    b = x * y * (1.0 - x - y)
    bx = y - 2.0 * x * y - y * y
    by = x - x * x - 2.0 * x * y
    return b, bx, by


def _dual_solve(D: np.ndarray, gens: _VectorMonomials, rule) -> np.ndarray:
    """Invert the functional matrix through an L2-orthonormalized frame.

    Raw monomial generators make D ill conditioned by degree 4; solving
    against Gram-Cholesky-orthonormalized generators keeps the dual basis
    accurate to ~1e-13.
    """
    gv = gens.values(rule.points)
    G = np.einsum("qgc,qhc->gh", rule.weights[:, None, None] * gv, gv)
    T = np.linalg.inv(np.linalg.cholesky(G).T)
    C_on = np.linalg.solve(D @ T, np.eye(D.shape[0]))
    return T @ C_on


def _build_bdm(k: int) -> ReferenceBasis:
    expo = monomial_exponents(k)
    gens = _VectorMonomials(
        [[(c, 1.0, a, b)] for c in range(2) for (a, b) in expo]
    )
    rows, ents, edge_app = _edge_moment_rows(gens, k)
    rule = triangle_rule(2 * k + 4)
    gv = gens.values(rule.points)                          # (nq, ngen, 2)
    wq = rule.weights
    # interior weights: gradients of monomials of degree 1..k-1, then
    # curls of bubble-weighted monomials of degree <= k-2
    psis = []
    for a, b in monomial_exponents(k - 1):
        if a + b < 1:
            continue
        psis.append(_mono_grad(rule.points, [(a, b)])[:, 0, :])
    b_, bx, by = _bubble_and_grads(rule.points)
    for a, b in monomial_exponents(k - 2):
        mv = rule.points[:, 0] ** a * rule.points[:, 1] ** b
        mg = _mono_grad(rule.points, [(a, b)])[:, 0, :]
        dx = bx * mv + b_ * mg[:, 0]
        dy = by * mv + b_ * mg[:, 1]
        psis.append(np.column_stack([dy, -dx]))
    psi_w = np.zeros((len(psis), len(wq), 2))
    for n_int, psi in enumerate(psis):
        # unit L2 scale keeps the dual solve well conditioned; interior
        # dofs are cell local so the scale never crosses an element edge
        psi = psi / np.sqrt(np.einsum("q,qc,qc->", wq, psi, psi))
        psi_w[n_int] = wq[:, None] * psi
        rows.append(np.einsum("qc,qgc->g", psi_w[n_int], gv))
        ents.append(("interior", n_int))
    D = np.vstack(rows)
    C = _dual_solve(D, gens, rule)
    int_app = {"pts": rule.points, "psi_w": psi_w}
    return ReferenceBasis("bdm", k, len(gens), "vector", tuple(ents), C, gens,
                          edge_app=edge_app, int_app=int_app)


def _build_rt(k: int) -> ReferenceBasis:
    expo = monomial_exponents(k)
    gen_list = [[(c, 1.0, a, b)] for c in range(2) for (a, b) in expo]
    for a, b in expo:
        if a + b == k:  # homogeneous tip x * (x^a y^b)
            gen_list.append([(0, 1.0, a + 1, b), (1, 1.0, a, b + 1)])
    gens = _VectorMonomials(gen_list)
    rows, ents, edge_app = _edge_moment_rows(gens, k)
    rule = triangle_rule(2 * k + 4)
    gv = gens.values(rule.points)
    wq = rule.weights
    n_psi = 2 * len(monomial_exponents(k - 1)) if k >= 1 else 0
    psi_w = np.zeros((n_psi, len(wq), 2))
    n_int = 0
    for c in range(2):
        for a, b in monomial_exponents(k - 1):
            mv = rule.points[:, 0] ** a * rule.points[:, 1] ** b
            mv = mv / np.sqrt(np.einsum("q,q,q->", wq, mv, mv))
            psi_w[n_int, :, c] = wq * mv
            rows.append(np.einsum("q,qg->g", wq * mv, gv[:, :, c]))
            ents.append(("interior", n_int))
            n_int += 1
    D = np.vstack(rows)
    C = _dual_solve(D, gens, rule)
    int_app = {"pts": rule.points, "psi_w": psi_w}
    return ReferenceBasis("rt", k, len(gens), "vector", tuple(ents), C, gens,
                          edge_app=edge_app, int_app=int_app)


@lru_cache(maxsize=None)
def reference_basis(family: str, degree: int) -> ReferenceBasis:
    """Construct (and cache) a reference basis.

    Degrees beyond the tabulated range raise NotImplementedError; the
    solver never needs them and the dual-basis conditioning degrades.
    """
    if family == "lagrange":
        if not 0 <= degree <= MAX_LAGRANGE:
            raise NotImplementedError(
                f"scalar Lagrange degree {degree} unsupported (0..{MAX_LAGRANGE})"
            )
        return _build_lagrange(degree)
    if family == "bdm":
        if not 1 <= degree <= MAX_BDM:
            raise NotImplementedError(
                f"BDM degree {degree} unsupported (1..{MAX_BDM})"
            )
        return _build_bdm(degree)
    if family == "rt":
        if not 0 <= degree <= MAX_RT:
            raise NotImplementedError(
                f"RT degree {degree} unsupported (0..{MAX_RT})"
            )
        return _build_rt(degree)
    raise ValueError(f"unknown element family {family!r}")


@dataclass
class ElementMap:
    """Affine maps x = v0 + J xhat for every triangle, grouped by Jacobian.

    On a structured mesh only a handful of distinct Jacobians occur;
    ``class_of`` assigns each triangle to its group so basis tables can be
    shared.
    """

    v0: np.ndarray       # (nt, 2)
    J: np.ndarray        # (nt, 2, 2)
    detJ: np.ndarray     # (nt,)
    Jinv: np.ndarray     # (nt, 2, 2)
    class_of: np.ndarray  # (nt,)
    class_reps: np.ndarray  # (nclass,) representative triangle per class


def build_element_map(mesh) -> ElementMap:
    p = mesh.vertices[mesh.triangles]
    v0 = p[:, 0]
    J = np.stack([p[:, 1] - v0, p[:, 2] - v0], axis=2)
    detJ = J[:, 0, 0] * J[:, 1, 1] - J[:, 0, 1] * J[:, 1, 0]
    if (detJ <= 0).any():
        raise ValueError("mesh contains a degenerate or clockwise triangle")
    Jinv = np.empty_like(J)
    Jinv[:, 0, 0] = J[:, 1, 1] / detJ
    Jinv[:, 0, 1] = -J[:, 0, 1] / detJ
    Jinv[:, 1, 0] = -J[:, 1, 0] / detJ
    Jinv[:, 1, 1] = J[:, 0, 0] / detJ
    scale = np.abs(J).max()
    keys = np.round(J.reshape(-1, 4) / scale, 12)
    _, reps, inverse = np.unique(
        keys, axis=0, return_index=True, return_inverse=True
    )
    return ElementMap(v0, J, detJ, Jinv, inverse, reps)


def map_to_physical(emap: ElementMap, elem: int, ref_pts: np.ndarray) -> np.ndarray:
    return emap.v0[elem] + np.atleast_2d(ref_pts) @ emap.J[elem].T


def map_to_reference(emap: ElementMap, elem: int, phys_pts: np.ndarray) -> np.ndarray:
    return (np.atleast_2d(phys_pts) - emap.v0[elem]) @ emap.Jinv[elem].T


def eval_scalar_basis(basis: ReferenceBasis, point) -> tuple[np.ndarray, np.ndarray]:
    """Reference values and gradients of a scalar basis at one point."""
    if basis.value_rank != "scalar":
        raise ValueError("eval_scalar_basis needs a scalar basis")
    V, G = basis.tabulate(np.atleast_2d(point))
    return V[0], G[0]


def eval_hdiv_basis(basis: ReferenceBasis, emap: ElementMap, elem: int, point):
    """Piola-mapped values, divergences, and gradients on one triangle.

    The contravariant map v = J vhat / det J preserves normal moments, so
    shared-face traces stay single valued; divergence scales by 1/det J and
    the physical gradient is J Ghat Jinv / det J.
    """
    if basis.value_rank != "vector":
        raise ValueError("eval_hdiv_basis needs a vector basis")
    V, G, D = basis.tabulate(np.atleast_2d(point))
    J, Ji, det = emap.J[elem], emap.Jinv[elem], emap.detJ[elem]
    vals = np.einsum("cd,jd->jc", J, V[0]) / det
    grads = np.einsum("ce,jef,fd->jcd", J, G[0], Ji) / det
    divs = D[0] / det
    return vals, divs, grads
