"""Assembly of the discrete variational forms.

Volume integrals use basis tables shared across each geometry class, so a
local matrix is computed once per class and scattered with the per-element
orientation signs.  Face integrals stack the plus and minus trace tables
into one block of 2*n_local dofs; jumps and averages are then coefficient
vectors (+1/-1 and 1/2,1/2) applied to the stacked block, with one-sided
conventions (jump = trace, average = trace) on true boundary faces.

The viscous matrix is assembled without the viscosity factor: the solver
multiplies by nu when it builds the time-step system.  The interior
penalty eta, by contrast, is baked into the matrix.

Matrices come back in CSR form.  Duplicate coordinate entries are merged
by scipy in a fixed order and the element-block products run in a fixed
chunk order, so assembly is bit-reproducible for any VNS_THREADS value.
"""

from __future__ import annotations

import os
from concurrent.futures import ThreadPoolExecutor
from dataclasses import dataclass
from enum import Enum

import numpy as np
import scipy.sparse as sp

from .space import (
    DiscreteField,
    FunctionSpace,
    cell_batches,
    face_batches,
    local_coefficients,
    physical_points,
)

HDIV_FAMILIES = ("BDM", "RT")
NORMAL_CONTINUOUS = ("BDM", "RT", "TH-velocity")


class StressVariant(Enum):
    """Which gradient combination plays the role of the viscous stress."""

    FULL_DEVIATORIC = "full-deviatoric"   # grad + grad^T - (2/3)(div) I
    SYMMETRIC_PAIR = "symmetric-pair"     # grad + grad^T
    GRADIENT_ONLY = "gradient-only"       # grad


@dataclass(frozen=True)
class FluxParams:
    """Scalar knobs of the discretization.

    zeta   convective penalty, 0 = central flux, 0.5 = upwind
    eta    interior-penalty weight of the viscous flux
    nu     kinematic viscosity, applied at system-build time
    delta  nonlinear grad-div coefficient
    """

    zeta: float
    eta: float
    nu: float
    delta: float = 0.0

    def __post_init__(self):
        if self.eta <= 0:
            raise ValueError(f"eta must be positive, got {self.eta}")
        if self.nu <= 0:
            raise ValueError(f"nu must be positive, got {self.nu}")
        if self.zeta < 0:
            raise ValueError(f"zeta must be nonnegative, got {self.zeta}")
        if self.delta < 0:
            raise ValueError(f"delta must be nonnegative, got {self.delta}")


@dataclass
class FormMatrices:
    """Time-independent matrices of one velocity-pressure pairing."""

    M: sp.csr_matrix        # velocity mass
    A: sp.csr_matrix        # viscous form, nu factored out, eta included
    B: sp.csr_matrix        # pressure-divergence, shape (n_pressure, n_velocity)
    mean: np.ndarray        # pressure mean functional (1, q)


def _workers() -> int:
    try:
        n = int(os.environ.get("VNS_THREADS", "1"))
    except ValueError:
        return 1
    return max(1, n)


def _row_blocks(n: int, nw: int):
    step = -(-n // nw)
    return [slice(s, min(s + step, n)) for s in range(0, n, step)]


def _blocked_matmul(a: np.ndarray, b: np.ndarray) -> np.ndarray:
    """a @ b with the rows of a split across VNS_THREADS workers.

    Each row of the product is computed by exactly one worker with the
    same reduction order as the serial call, so the result is identical
    bytes no matter how many workers run.
    """
    nw = _workers()
    if nw == 1 or a.shape[0] < 2 * nw:
        return a @ b
    out = np.empty((a.shape[0], b.shape[1]), dtype=np.result_type(a, b))
    blocks = _row_blocks(a.shape[0], nw)
    with ThreadPoolExecutor(max_workers=nw) as pool:
        futs = [pool.submit(np.matmul, a[sl], b, out=out[sl]) for sl in blocks]
        for f in futs:
            f.result()
    return out


def volume_degree(space: FunctionSpace) -> int:
    return 3 * space.element_degree + 2


def stress_tables(grad: np.ndarray, div: np.ndarray,
                  variant: StressVariant) -> np.ndarray:
    """Stress tensor per basis function from gradient/divergence tables.

    grad has shape (..., nl, 2, 2) with entry [c, d] = d phi_c / d x_d;
    the result has the same shape.
    """
    if variant is StressVariant.GRADIENT_ONLY:
        return grad
    sig = grad + np.swapaxes(grad, -1, -2)
    if variant is StressVariant.FULL_DEVIATORIC:
        sig = sig.copy()
        corr = (2.0 / 3.0) * div
        sig[..., 0, 0] -= corr
        sig[..., 1, 1] -= corr
    return sig


def _coo_to_csr(rows, cols, vals, shape) -> sp.csr_matrix:
    if not rows:
        return sp.csr_matrix(shape)
    r = np.concatenate([x.ravel() for x in rows])
    c = np.concatenate([x.ravel() for x in cols])
    v = np.concatenate([x.ravel() for x in vals])
    out = sp.coo_matrix((v, (r, c)), shape=shape).tocsr()
    out.sum_duplicates()
    return out


@dataclass
class _CouplingPattern:
    """Frozen triplet layout of the square velocity-coupling assembly.

    The cell (and optionally face) scatter blocks always emit the same
    row/column indices in the same order; only the values change with
    the advecting field.  This records, for every emitted triplet slot,
    its position in the deduplicated CSR data array, so a re-assembly is
    one bincount instead of a full coordinate-to-CSR conversion.
    """

    n: int
    indptr: np.ndarray       # CSR row pointers, len n + 1
    indices: np.ndarray      # CSR column indices, sorted per row
    dest: np.ndarray         # triplet slot -> CSR data position
    nnz: int
    n_cell_entries: int      # cell blocks occupy dest[:n_cell_entries]
    codes: np.ndarray        # sorted row * n + col of the stored entries


def _coupling_pattern(space: FunctionSpace,
                      with_faces: bool) -> _CouplingPattern:
    cache = getattr(space, "_pattern_cache", None)
    if cache is None:
        cache = {}
        space._pattern_cache = cache
    if with_faces in cache:
        return cache[with_faces]
    degree = volume_degree(space)
    rows, cols = [], []
    for b in cell_batches(space, degree):
        dofs = space.cell_dofs[b.elems]
        e, nl = dofs.shape
        rows.append(np.broadcast_to(dofs[:, :, None], (e, nl, nl)))
        cols.append(np.broadcast_to(dofs[:, None, :], (e, nl, nl)))
    n_cell = sum(x.size for x in rows)
    if with_faces:
        for b in face_batches(space, degree):
            dofs, _ = _stacked_face_dofs(space, b)
            f, ns = dofs.shape
            rows.append(np.broadcast_to(dofs[:, :, None], (f, ns, ns)))
            cols.append(np.broadcast_to(dofs[:, None, :], (f, ns, ns)))
    n = space.n_dofs
    r = np.concatenate([x.reshape(-1) for x in rows]).astype(np.int64)
    c = np.concatenate([x.reshape(-1) for x in cols]).astype(np.int64)
    codes = r * n + c
    order = np.argsort(codes, kind="stable")
    sc = codes[order]
    novel = np.empty(sc.size, dtype=bool)
    novel[0] = True
    np.not_equal(sc[1:], sc[:-1], out=novel[1:])
    dest = np.empty(sc.size, dtype=np.int64)
    dest[order] = np.cumsum(novel) - 1
    ucodes = sc[novel]
    indices = (ucodes % n).astype(np.int32)
    indptr = np.zeros(n + 1, dtype=np.int32)
    np.cumsum(np.bincount(ucodes // n, minlength=n), out=indptr[1:])
    pat = _CouplingPattern(n=n, indptr=indptr, indices=indices, dest=dest,
                           nnz=int(ucodes.size), n_cell_entries=int(n_cell),
                           codes=ucodes)
    cache[with_faces] = pat
    return pat


def _family_has_faces(space: FunctionSpace) -> bool:
    return space.family in HDIV_FAMILIES


def _data_from_values(pat: _CouplingPattern, vals) -> np.ndarray:
    # bincount accumulates in slot order: serial, hence reproducible
    v = np.concatenate([x.reshape(-1) for x in vals])
    return np.bincount(pat.dest[: v.size], weights=v, minlength=pat.nnz)


def _pattern_matrix(pat: _CouplingPattern, data: np.ndarray) -> sp.csr_matrix:
    m = sp.csr_matrix((data, pat.indices, pat.indptr), shape=(pat.n, pat.n),
                      copy=False)
    m.has_canonical_format = True
    return m


def coupling_matrix(space: FunctionSpace, data: np.ndarray) -> sp.csr_matrix:
    """CSR matrix over the velocity-coupling pattern from a data vector.

    Matrices built this way share their index arrays, which lets the
    saddle solver recognize repeat patterns and skip structural work.
    """
    return _pattern_matrix(_coupling_pattern(space, _family_has_faces(space)),
                           data)


def coupling_data_of_matrix(K, space: FunctionSpace) -> np.ndarray:
    """Data vector of ``K`` laid out on the velocity-coupling pattern.

    Rejects matrices with entries outside the pattern; used to place the
    time-independent mass/viscous combination on the same layout as the
    per-sweep convective values so the sum is a vector add.
    """
    pat = _coupling_pattern(space, _family_has_faces(space))
    K = K.tocsr()
    if not K.has_canonical_format:
        K = K.copy()
        K.sum_duplicates()
    kr = np.repeat(np.arange(pat.n, dtype=np.int64), np.diff(K.indptr))
    kc = kr * pat.n + K.indices
    pos = np.searchsorted(pat.codes, kc)
    if pos.size and (pos.max(initial=0) >= pat.nnz
                     or not np.array_equal(pat.codes[pos], kc)):
        raise ValueError("matrix has entries outside the coupling pattern")
    out = np.zeros(pat.nnz)
    out[pos] = K.data
    return out


def _scatter_shared(space, elems, local, rows, cols, vals):
    # same local matrix for every element of the class; signs differ
    dofs = space.cell_dofs[elems]
    signs = space.cell_signs[elems]
    v = signs[:, :, None] * signs[:, None, :] * local[None, :, :]
    rows.append(np.broadcast_to(dofs[:, :, None], v.shape))
    cols.append(np.broadcast_to(dofs[:, None, :], v.shape))
    vals.append(v)



def assemble_mass_matrix(space: FunctionSpace, degree: int | None = None):
    """Velocity (or scalar) mass matrix (v, w)."""
    if degree is None:
        degree = volume_degree(space)
    n = space.n_dofs
    rows, cols, vals = [], [], []
    for b in cell_batches(space, degree):
        if space.value_rank == "vector":
            loc = np.einsum("q,qic,qjc->ij", b.weights, b.phi, b.phi,
                            optimize=False)
        else:
            loc = np.einsum("q,qi,qj->ij", b.weights, b.phi, b.phi,
                            optimize=False)
        # exact symmetry: einsum's operand order is not ij-symmetric in FP
        loc = 0.5 * (loc + loc.T)
        _scatter_shared(space, b.elems, loc, rows, cols, vals)
    return _coo_to_csr(rows, cols, vals, (n, n))


def _stacked_face_tables(b):
    """Concatenate plus/minus trace tables with jump/average coefficients."""
    if b.boundary:
        phi, grad, div = b.phi_p, b.grad_p, b.div_p
        jc = np.ones(phi.shape[1])
        ac = np.ones(phi.shape[1])
    else:
        phi = np.concatenate([b.phi_p, b.phi_m], axis=1)
        grad = np.concatenate([b.grad_p, b.grad_m], axis=1)
        div = np.concatenate([b.div_p, b.div_m], axis=1)
        nl = b.phi_p.shape[1]
        jc = np.concatenate([np.ones(nl), -np.ones(nl)])
        ac = np.full(2 * nl, 0.5)
    return phi, grad, div, jc, ac


def _stacked_face_dofs(space, b):
    if b.boundary:
        return space.cell_dofs[b.elem_p], space.cell_signs[b.elem_p]
    dofs = np.concatenate(
        [space.cell_dofs[b.elem_p], space.cell_dofs[b.elem_m]], axis=1)
    signs = np.concatenate(
        [space.cell_signs[b.elem_p], space.cell_signs[b.elem_m]], axis=1)
    return dofs, signs


def _scatter_faces_shared(space, b, local, rows, cols, vals):
    dofs, signs = _stacked_face_dofs(space, b)
    v = signs[:, :, None] * signs[:, None, :] * local[None, :, :]
    rows.append(np.broadcast_to(dofs[:, :, None], v.shape))
    cols.append(np.broadcast_to(dofs[:, None, :], v.shape))
    vals.append(v)



def assemble_viscous_form(space: FunctionSpace, variant: StressVariant,
                          params: FluxParams,
                          include_faces: bool | None = None):
    """Viscous bilinear form, without the viscosity factor.

    Volume term (stress(v), grad w) on every element; for discontinuous
    (H(div)) velocity spaces the interior-penalty face terms

        - <[[v]], {{stress(w)}} n> - <[[w]], {{stress(v)}} n>
        + (eta / h_F) <[[v]], [[w]]>

    are added on interior and boundary faces.  Continuous spaces have no
    jumps, so their face sums vanish identically and are skipped unless
    include_faces forces the issue (used by matrix-identity checks).
    """
    if include_faces is None:
        include_faces = space.family in HDIV_FAMILIES
    degree = volume_degree(space)
    n = space.n_dofs
    rows, cols, vals = [], [], []
    for b in cell_batches(space, degree):
        sig = stress_tables(b.grad, b.div, variant)
        loc = np.einsum("q,qjcd,qicd->ij", b.weights, sig, b.grad,
                        optimize=False)
        loc = 0.5 * (loc + loc.T)
        _scatter_shared(space, b.elems, loc, rows, cols, vals)
    if include_faces:
        for b in face_batches(space, degree):
            phi, grad, div, jc, ac = _stacked_face_tables(b)
            sig = stress_tables(grad, div, variant)
            sign_n = np.einsum("qscd,d->qsc", sig, b.normal, optimize=False)
            avg_sn = ac[None, :, None] * sign_n
            jmp = jc[None, :, None] * phi
            t1 = np.einsum("q,qjc,qic->ij", b.weights, jmp, avg_sn,
                           optimize=False)
            pen = np.einsum("q,qic,qjc->ij", b.weights, jmp, jmp,
                            optimize=False)
            pen = (0.5 * params.eta / b.h) * (pen + pen.T)
            loc = -t1 - t1.T + pen
            _scatter_faces_shared(space, b, loc, rows, cols, vals)
    return _coo_to_csr(rows, cols, vals, (n, n))


def assemble_pressure_divergence_form(V: FunctionSpace, Q: FunctionSpace):
    """Rectangular matrix of (div v, q), pressure rows by velocity columns."""
    if V.mesh is not Q.mesh:
        raise ValueError("velocity and pressure spaces use different meshes")
    degree = volume_degree(V)
    rows, cols, vals = [], [], []
    for b in cell_batches(V, degree):
        vq = Q.basis.tabulate(b.points)[0]      # scalar values map unchanged
        loc = np.einsum("q,qi,qj->ij", b.weights, vq, b.div, optimize=False)
        pdofs = Q.cell_dofs[b.elems]
        vdofs = V.cell_dofs[b.elems]
        vsigns = V.cell_signs[b.elems]
        v = vsigns[:, None, :] * loc[None, :, :]
        rows.append(np.broadcast_to(pdofs[:, :, None], v.shape))
        cols.append(np.broadcast_to(vdofs[:, None, :], v.shape))
        vals.append(v)
    return _coo_to_csr(rows, cols, vals, (Q.n_dofs, V.n_dofs))


def field_values_on_cells(field: DiscreteField, degree: int):
    """Values and divergence of a field at every cell quadrature point."""
    space = field.space
    nt = space.mesh.n_triangles
    nq = len(cell_batches(space, degree)[0].weights)
    vals = np.empty((nt, nq, 2))
    divs = np.empty((nt, nq))
    for b in cell_batches(space, degree):
        c = local_coefficients(space, field.coefficients, b.elems)
        vals[b.elems] = np.einsum("el,qlc->eqc", c, b.phi, optimize=False)
        divs[b.elems] = np.einsum("el,ql->eq", c, b.div, optimize=False)
    return vals, divs


def field_normal_on_faces(field: DiscreteField, degree: int) -> np.ndarray:
    """Normal trace of a normal-continuous field at face quadrature points.

    Indexed by global face id; rows for faces outside the assembly set
    stay NaN.  Interior values average the two one-sided traces, which
    agree to round-off for H(div) and continuous fields.
    """
    space = field.space
    nfaces = len(space.faces.length)
    nq = None
    out = None
    for b in face_batches(space, degree):
        if nq is None:
            nq = len(b.weights)
            out = np.full((nfaces, nq), np.nan)
        cp = local_coefficients(space, field.coefficients, b.elem_p)
        vp = np.einsum("fl,qlc->fqc", cp, b.phi_p, optimize=False)
        if b.boundary:
            vn = vp @ b.normal
        else:
            cm = local_coefficients(space, field.coefficients, b.elem_m)
            vm = np.einsum("fl,qlc->fqc", cm, b.phi_m, optimize=False)
            vn = 0.5 * (vp + vm) @ b.normal
        out[b.face_ids] = vn
    return out


def _require_normal_continuous(space: FunctionSpace, beta: DiscreteField):
    bs = beta.space
    if bs.family not in NORMAL_CONTINUOUS:
        raise ValueError(
            f"advecting field lives in {bs.family!r}, which is not "
            "normal-continuous across faces")
    if bs.mesh is not space.mesh:
        raise ValueError("advecting field is defined on a different mesh")


def _signed_cell_block(space, elems, local) -> np.ndarray:
    signs = space.cell_signs[elems]
    return signs[:, :, None] * signs[:, None, :] * local


def _signed_face_block(space, b, local) -> np.ndarray:
    _, signs = _stacked_face_dofs(space, b)
    return signs[:, :, None] * signs[:, None, :] * local


def convective_form_data(space: FunctionSpace, beta: DiscreteField,
                         zeta: float) -> np.ndarray:
    """Values of the convective matrix on the coupling pattern."""
    _require_normal_continuous(space, beta)
    degree = volume_degree(space)
    with_faces = _family_has_faces(space)
    pat = _coupling_pattern(space, with_faces)
    bvals, bdivs = field_values_on_cells(beta, degree)
    kernels = getattr(space, "_kernel_cache", None)
    if kernels is None:
        kernels = {}
        space._kernel_cache = kernels
    vals = []
    for i, b in enumerate(cell_batches(space, degree)):
        nl = b.phi.shape[1]
        key = ("cell", degree, i)
        if key not in kernels:
            # shared kernels, one per geometry class: K1[q,d,i,j] pairs
            # grad_j with phi_i, K2 the masses; both beta-independent
            k1 = np.einsum("qjcd,qic->qdij", b.grad, b.phi, optimize=False)
            k2 = np.einsum("qjc,qic->qij", b.phi, b.phi, optimize=False)
            nq = len(b.weights)
            kernels[key] = (
                k1.transpose(1, 0, 2, 3).reshape(2 * nq, nl * nl).copy(),
                k2.reshape(nq, nl * nl))
        k1f, k2f = kernels[key]
        wb = b.weights[None, :, None] * bvals[b.elems]        # (E, nq, 2)
        wd = 0.5 * b.weights[None, :] * bdivs[b.elems]        # (E, nq)
        e = len(b.elems)
        t1 = _blocked_matmul(wb.transpose(0, 2, 1).reshape(e, -1), k1f)
        t2 = _blocked_matmul(wd, k2f)
        loc = (t1 + t2).reshape(e, nl, nl)
        vals.append(_signed_cell_block(space, b.elems, loc))
    if with_faces:
        bn = field_normal_on_faces(beta, degree)
        for i, b in enumerate(face_batches(space, degree)):
            key = ("face", degree, i)
            if key not in kernels:
                phi, _, _, jc, ac = _stacked_face_tables(b)
                jmp = jc[None, :, None] * phi
                avg = ac[None, :, None] * phi
                pa = np.einsum("qic,qjc->qij", avg, jmp, optimize=False)
                pj = np.einsum("qic,qjc->qij", jmp, jmp, optimize=False)
                ns = phi.shape[1]
                kernels[key] = (pa.reshape(-1, ns * ns),
                                pj.reshape(-1, ns * ns), ns)
            paf, pjf, ns = kernels[key]
            bnf = bn[b.face_ids]                              # (F, nq)
            wa = -(b.weights[None, :] * bnf)
            wj = zeta * (b.weights[None, :] * np.abs(bnf))
            loc = _blocked_matmul(wa, paf) + _blocked_matmul(wj, pjf)
            vals.append(_signed_face_block(space, b,
                                           loc.reshape(-1, ns, ns)))
    return _data_from_values(pat, vals)


def assemble_convective_form(space: FunctionSpace, beta: DiscreteField,
                             zeta: float):
    """Linearized convective matrix C(beta).

    Implements (beta . grad v, w) + (1/2)((div beta) v, w) in the volume
    plus, for H(div) velocity spaces, the face terms

        - <(beta . n_F) [[v]], {{w}}> + zeta <|beta . n_F| [[v]], [[w]]>.

    beta is frozen, so the matrix is linear in the trial argument.
    """
    pat = _coupling_pattern(space, _family_has_faces(space))
    return _pattern_matrix(pat, convective_form_data(space, beta, zeta))


def assemble_divdiv_matrix(space: FunctionSpace):
    """Unweighted (div v, div w); scale by a coefficient for grad-div use."""
    degree = volume_degree(space)
    n = space.n_dofs
    rows, cols, vals = [], [], []
    for b in cell_batches(space, degree):
        loc = np.einsum("q,qi,qj->ij", b.weights, b.div, b.div,
                        optimize=False)
        loc = 0.5 * (loc + loc.T)
        _scatter_shared(space, b.elems, loc, rows, cols, vals)
    return _coo_to_csr(rows, cols, vals, (n, n))


def _graddiv_values(space: FunctionSpace, u: DiscreteField, delta: float):
    _require_normal_continuous(space, u)
    degree = volume_degree(space)
    uvals, _ = field_values_on_cells(u, degree)
    umag = np.sqrt(np.sum(uvals ** 2, axis=2))                # (nt, nq)
    vals = []
    for b in cell_batches(space, degree):
        nl = b.div.shape[1]
        dd = np.einsum("qi,qj->qij", b.div, b.div, optimize=False)
        wmag = delta * b.weights[None, :] * umag[b.elems]
        loc = _blocked_matmul(wmag, dd.reshape(-1, nl * nl)).reshape(-1, nl, nl)
        loc = 0.5 * (loc + loc.transpose(0, 2, 1))
        vals.append(_signed_cell_block(space, b.elems, loc))
    return vals


def graddiv_form_data(space: FunctionSpace, u: DiscreteField,
                      delta: float) -> np.ndarray:
    """Values of the grad-div matrix on the coupling pattern.

    The cell blocks occupy a prefix of the pattern's slot list, so the
    result adds directly to convective or fixed-block data vectors.
    """
    pat = _coupling_pattern(space, _family_has_faces(space))
    if delta == 0.0:
        return np.zeros(pat.nnz)
    return _data_from_values(pat, _graddiv_values(space, u, delta))


def assemble_graddiv_stabilization(space: FunctionSpace, u: DiscreteField,
                                   delta: float):
    """Nonlinear grad-div matrix delta (|u| div v, div w), u frozen."""
    if delta < 0:
        raise ValueError("delta must be nonnegative")
    if delta == 0.0:
        return sp.csr_matrix((space.n_dofs, space.n_dofs))
    pat = _coupling_pattern(space, False)
    return _pattern_matrix(pat, _data_from_values(
        pat, _graddiv_values(space, u, delta)))


def assemble_load_vector(space: FunctionSpace, f, t: float = 0.0,
                         degree: int | None = None) -> np.ndarray:
    """Right-hand-side vector (f(., t), w) by quadrature.

    f maps (points (n, 2), t) to an (n, 2) array; f = None means no
    forcing and returns zeros immediately.
    """
    out = np.zeros(space.n_dofs)
    if f is None:
        return out
    if degree is None:
        degree = volume_degree(space)
    pts = physical_points(space, degree)
    fv = np.asarray(f(pts.reshape(-1, 2), t), dtype=float)
    fv = fv.reshape(pts.shape[0], pts.shape[1], 2)
    for b in cell_batches(space, degree):
        loc = np.einsum("q,eqc,qic->ei", b.weights, fv[b.elems], b.phi,
                        optimize=False)
        np.add.at(out, space.cell_dofs[b.elems],
                  loc * space.cell_signs[b.elems])
    return out


def pressure_mean_vector(Q: FunctionSpace) -> np.ndarray:
    """Vector m with m . q = integral of q over the domain."""
    out = np.zeros(Q.n_dofs)
    for b in cell_batches(Q, volume_degree(Q) + 2):
        loc = b.weights @ b.phi
        np.add.at(out, Q.cell_dofs[b.elems],
                  np.broadcast_to(loc, (len(b.elems), len(loc))))
    return out


def build_form_matrices(V: FunctionSpace, Q: FunctionSpace,
                        variant: StressVariant,
                        params: FluxParams) -> FormMatrices:
    return FormMatrices(
        M=assemble_mass_matrix(V),
        A=assemble_viscous_form(V, variant, params),
        B=assemble_pressure_divergence_form(V, Q),
        mean=pressure_mean_vector(Q),
    )


def dump_matrix_text(mat, path) -> None:
    """Write a sparse matrix as 'row col value' lines, row-major order."""
    coo = sp.csr_matrix(mat).tocoo()
    with open(path, "w") as fh:
        for r, c, v in zip(coo.row, coo.col, coo.data):
            fh.write(f"{r} {c} {v:.17g}\n")
