"""Norms, error measures, observed orders, and identity verification.

Everything here is a pure function of discrete fields and analytic
callables; quadrature loops are written independently of the matrix
assembly in forms.py so the two routes can be checked against each
other.  Error norms use a quadrature rule two degrees above the
assembly rule so that integration error stays far below discretization
error at the three significant digits the convergence tables report.
"""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from .forms import (
    FluxParams,
    StressVariant,
    assemble_convective_form,
    assemble_divdiv_matrix,
    assemble_mass_matrix,
    assemble_viscous_form,
    field_normal_on_faces,
    stress_tables,
    volume_degree,
)
from .space import (
    DiscreteField,
    FunctionSpace,
    boundary_velocity_dofs,
    cell_batches,
    face_batches,
    local_coefficients,
    physical_points,
)

IDENTITY_KINDS = ("jump_identity", "allaire", "decomposition", "graddiv_sign",
                  "convective_energy")


@dataclass
class ErrorReport:
    """One row of a convergence table; orders are None on the coarsest mesh."""

    h: float
    dof: int
    vel_l2: float
    pres_l2: float
    vel_order: float | None = None
    pres_order: float | None = None
    k: int = 1


@dataclass(frozen=True)
class KernelField3D:
    """Coefficients k1..k10 of the three-dimensional deviatoric kernel."""

    k: tuple

    def __post_init__(self):
        if len(self.k) != 10:
            raise ValueError("kernel field needs exactly 10 coefficients")


def error_degree(space: FunctionSpace) -> int:
    return 3 * space.element_degree + 4


def _cell_values(field, degree):
    """Yield (batch, values, gradients, divergences) over all cell batches."""
    V = field.space
    for b in cell_batches(V, degree):
        c = local_coefficients(V, field.coefficients, b.elems)
        if V.value_rank == "vector":
            vals = np.einsum("el,qlc->eqc", c, b.phi, optimize=False)
            grads = np.einsum("el,qlcd->eqcd", c, b.grad, optimize=False)
            divs = np.einsum("el,ql->eq", c, b.div, optimize=False)
        else:
            vals = np.einsum("el,ql->eq", c, b.phi, optimize=False)
            grads = np.einsum("el,qld->eqd", c, b.grad, optimize=False)
            divs = None
        yield b, vals, grads, divs


def _face_jump_average(field, degree):
    """Yield (batch, jump values, averaged stress-ready tables) per batch."""
    V = field.space
    for b in face_batches(V, degree):
        cp = local_coefficients(V, field.coefficients, b.elem_p)
        vp = np.einsum("fl,qlc->fqc", cp, b.phi_p, optimize=False)
        gp = np.einsum("fl,qlcd->fqcd", cp, b.grad_p, optimize=False)
        dp = np.einsum("fl,ql->fq", cp, b.div_p, optimize=False)
        if b.boundary:
            yield b, vp, vp, gp, dp
            continue
        cm = local_coefficients(V, field.coefficients, b.elem_m)
        vm = np.einsum("fl,qlc->fqc", cm, b.phi_m, optimize=False)
        gm = np.einsum("fl,qlcd->fqcd", cm, b.grad_m, optimize=False)
        dm = np.einsum("fl,ql->fq", cm, b.div_m, optimize=False)
        yield b, vp - vm, 0.5 * (vp + vm), 0.5 * (gp + gm), 0.5 * (dp + dm)


def sym_triple_norm(w: DiscreteField, eta_weight: float | None = None) -> float:
    """Deviatoric-stress norm with face jump control.

    Returns (|sigma(w)|^2 + sum_F c_F/h_F int |[[w]]|^2)^(1/2) with
    sigma the full deviatoric stress; c_F is 1 unless eta_weight is
    given, in which case the jump sum is weighted by it (the form the
    coercivity bound pairs with the penalty parameter).
    """
    deg = volume_degree(w.space)
    total = 0.0
    for b, _, grads, divs in _cell_values(w, deg):
        sig = stress_tables(grads, divs, StressVariant.FULL_DEVIATORIC)
        total += float(np.einsum("q,fqcd,fqcd->", b.weights, sig, sig,
                                 optimize=False))
    cf = 1.0 if eta_weight is None else eta_weight
    for b, jw, *_ in _face_jump_average(w, deg):
        total += (cf / b.h) * float(np.einsum("q,fqc,fqc->", b.weights, jw, jw,
                                              optimize=False))
    return float(np.sqrt(total))


def jump_seminorm(w: DiscreteField) -> float:
    """Square root of sum over faces of h_F^-1 ||[[w]]||^2."""
    deg = volume_degree(w.space)
    total = 0.0
    for b, jw, *_ in _face_jump_average(w, deg):
        total += (1.0 / b.h) * float(np.einsum("q,fqc,fqc->", b.weights, jw, jw,
                                               optimize=False))
    return float(np.sqrt(total))


def convective_seminorm(beta: DiscreteField, w: DiscreteField,
                        zeta: float) -> float:
    """Seminorm induced by the upwind penalty: (zeta sum_F int |beta.n| |[[w]]|^2)^(1/2)."""
    if zeta == 0.0:
        return 0.0
    deg = volume_degree(w.space)
    bn = field_normal_on_faces(beta, deg)
    total = 0.0
    for b, jw, *_ in _face_jump_average(w, deg):
        total += zeta * float(np.einsum(
            "q,fq,fqc,fqc->", b.weights, np.abs(bn[b.face_ids]), jw, jw,
            optimize=False))
    return float(np.sqrt(total))


def l2_error_field(fh: DiscreteField, f_exact, t: float = 0.0,
                   zero_mean: bool = False) -> float:
    """L2 distance between a discrete field and an analytic one.

    f_exact maps (points (n, 2), t) to values; set zero_mean for
    pressure-like quantities defined only up to a constant, which
    subtracts the domain mean of the pointwise difference.
    """
    V = fh.space
    deg = error_degree(V)
    pts = physical_points(V, deg)
    ex = np.asarray(f_exact(pts.reshape(-1, 2), t), dtype=float)
    vector = V.value_rank == "vector"
    ex = ex.reshape(pts.shape[0], pts.shape[1], 2) if vector \
        else ex.reshape(pts.shape[0], pts.shape[1])
    total = 0.0
    mean_acc = 0.0
    area = 0.0
    diffs = []
    for b, vals, *_ in _cell_values(fh, deg):
        d = ex[b.elems] - vals
        diffs.append((b, d))
        if zero_mean and not vector:
            mean_acc += float(np.einsum("q,fq->", b.weights, d,
                                        optimize=False))
            area += b.weights.sum() * len(b.elems)
    shift = mean_acc / area if (zero_mean and not vector and area > 0) else 0.0
    for b, d in diffs:
        if vector:
            total += float(np.einsum("q,fqc,fqc->", b.weights, d, d,
                                     optimize=False))
        else:
            dd = d - shift
            total += float(np.einsum("q,fq,fq->", b.weights, dd, dd,
                                     optimize=False))
    return float(np.sqrt(total))


def observed_order(errors) -> list:
    """Convergence rates from consecutive (h, error) rows.

    errors is a sequence of (h, e) with h strictly decreasing and e > 0;
    returns one rate per consecutive pair.
    """
    hs = [float(h) for h, _ in errors]
    es = [float(e) for _, e in errors]
    if any(e <= 0 for e in es):
        raise ValueError("errors must be positive to take orders")
    if any(h2 >= h1 for h1, h2 in zip(hs, hs[1:])):
        raise ValueError("mesh sizes must be strictly decreasing")
    return [np.log(e1 / e2) / np.log(h1 / h2)
            for (h1, e1), (h2, e2) in zip(zip(hs, es), zip(hs[1:], es[1:]))]


def kinetic_energy(u: DiscreteField, M=None) -> float:
    """Half the mass-weighted square norm of the velocity coefficients."""
    if M is None:
        M = assemble_mass_matrix(u.space)
    x = u.coefficients
    return 0.5 * float(x @ (M @ x))


def max_cellwise_divergence(u: DiscreteField) -> float:
    """Largest |div u_h| over all volume quadrature points."""
    worst = 0.0
    for _, _, _, divs in _cell_values(u, volume_degree(u.space)):
        worst = max(worst, float(np.abs(divs).max()))
    return worst


def eval_kernel_field(dim: int, coeffs, x):
    """Pointwise kernel field of the deviatoric stress and its stress value.

    dim=2 takes (k1, k2, k3): rotation plus translation.  dim=3 takes
    k1..k10: rotation, translation, dilation, and the quadratic
    inversion-type generators.  Returns (w, S) with S the full
    deviatoric symmetric gradient, which vanishes identically for any
    coefficients; S is computed from the closed-form gradient, not by
    differencing.
    """
    x = np.asarray(x, dtype=float)
    if dim == 2:
        k1, k2, k3 = coeffs
        w = np.array([k1 * x[1] + k2, -k1 * x[0] + k3])
        grad = np.array([[0.0, k1], [-k1, 0.0]])
        div = 0.0
        sig = grad + grad.T
        sig[0, 0] -= (2.0 / 3.0) * div
        sig[1, 1] -= (2.0 / 3.0) * div
        return w, sig
    if dim == 3:
        k = np.asarray(coeffs, dtype=float)
        if k.shape != (10,):
            raise ValueError("3D kernel needs k1..k10")
        A = np.array([[0.0, k[0], k[1]],
                      [-k[0], 0.0, k[2]],
                      [-k[1], -k[2], 0.0]])
        b = k[3:6]
        c = k[7:10]
        scale = 2.0 * (c @ x) + k[6]
        w = A @ x + b - (x @ x) * c + scale * x
        grad = A + 2.0 * (np.outer(x, c) - np.outer(c, x)) + scale * np.eye(3)
        div = np.trace(grad)
        sig = grad + grad.T - (2.0 / 3.0) * div * np.eye(3)
        return w, sig
    raise ValueError("dim must be 2 or 3")


def _require_family(field, families, kind):
    if field.space.family not in families:
        raise ValueError(
            f"{kind} requires a field from {families}, got "
            f"{field.space.family!r}")


def jump_identity_residual(beta: DiscreteField, w: DiscreteField) -> float:
    """Residual of the integration-by-parts face identity.

    (beta . grad w, w) + (1/2)((div beta) w, w) minus the face sum
    <(beta.n_F)[[w]], {{w}}> vanishes when beta has continuous normal
    components and zero normal trace on the boundary.
    """
    _require_family(beta, ("BDM", "RT"), "jump_identity")
    V = w.space
    deg = volume_degree(V)
    from .forms import field_values_on_cells
    bvals, bdivs = field_values_on_cells(beta, deg)
    lhs = 0.0
    for b, vals, grads, _ in _cell_values(w, deg):
        conv = np.einsum("eqd,eqcd->eqc", bvals[b.elems], grads,
                         optimize=False)
        lhs += float(np.einsum("q,eqc,eqc->", b.weights, conv, vals,
                               optimize=False))
        lhs += 0.5 * float(np.einsum("q,eq,eqc,eqc->", b.weights,
                                     bdivs[b.elems], vals, vals,
                                     optimize=False))
    bn = field_normal_on_faces(beta, deg)
    rhs = 0.0
    for b, jw, aw, *_ in _face_jump_average(w, deg):
        rhs += float(np.einsum("q,fq,fqc,fqc->", b.weights, bn[b.face_ids],
                               jw, aw, optimize=False))
    return abs(lhs - rhs) / max(1.0, abs(lhs), abs(rhs))


def allaire_residual(w: DiscreteField) -> float:
    """Residual of the transpose-gradient identity for continuous fields.

    For w continuous with zero boundary values, (grad w^T, grad w)
    equals ||div w||^2.
    """
    _require_family(w, ("TH-velocity",), "allaire")
    deg = volume_degree(w.space)
    lhs = 0.0
    rhs = 0.0
    for b, _, grads, divs in _cell_values(w, deg):
        gt = np.swapaxes(grads, 2, 3)
        lhs += float(np.einsum("q,fqcd,fqcd->", b.weights, gt, grads,
                               optimize=False))
        rhs += float(np.einsum("q,fq,fq->", b.weights, divs, divs,
                               optimize=False))
    return abs(lhs - rhs) / max(1.0, abs(lhs), abs(rhs))


def decomposition_residual(w: DiscreteField, eta: float) -> float:
    """Residual of the viscous energy split for the deviatoric stress.

    Compares w^T A w against (1/2)|sigma(w)|^2 + (2(3-d)/9)||div w||^2
    - 2 sum_F <[[w]], {{sigma(w)}} n_F> + eta |w|_J^2 with d = 2, all
    right-hand terms by independent quadrature.
    """
    _require_family(w, ("BDM", "RT", "TH-velocity"), "decomposition")
    V = w.space
    params = FluxParams(zeta=0.0, eta=eta, nu=1.0)
    A = assemble_viscous_form(V, StressVariant.FULL_DEVIATORIC, params,
                              include_faces=True)
    lhs = float(w.coefficients @ (A @ w.coefficients))
    deg = volume_degree(V)
    half_sig = 0.0
    div_term = 0.0
    for b, _, grads, divs in _cell_values(w, deg):
        sig = stress_tables(grads, divs, StressVariant.FULL_DEVIATORIC)
        half_sig += 0.5 * float(np.einsum("q,fqcd,fqcd->", b.weights, sig, sig,
                                          optimize=False))
        div_term += (2.0 / 9.0) * float(np.einsum(
            "q,fq,fq->", b.weights, divs, divs, optimize=False))
    cross = 0.0
    for b, jw, _, ga, da in _face_jump_average(w, deg):
        sig_n = np.einsum("fqcd,d->fqc",
                          stress_tables(ga, da, StressVariant.FULL_DEVIATORIC),
                          b.normal, optimize=False)
        cross += -2.0 * float(np.einsum("q,fqc,fqc->", b.weights, jw, sig_n,
                                        optimize=False))
    pen = eta * jump_seminorm(w) ** 2
    rhs = half_sig + div_term + cross + pen
    return abs(lhs - rhs) / max(1.0, abs(lhs), abs(rhs))


def convective_energy_residual(beta: DiscreteField, w: DiscreteField,
                               zeta: float) -> float:
    """Residual of the convective quadratic-energy identity.

    With normal-continuous beta of zero normal boundary trace, the
    skew part of the convective form cancels and w^T C(beta) w reduces
    to the upwind jump penalty alone; this returns the relative gap
    between the two evaluations.
    """
    _require_family(beta, ("BDM", "RT"), "convective_energy")
    C = assemble_convective_form(w.space, beta, zeta)
    lhs = float(w.coefficients @ (C @ w.coefficients))
    rhs = convective_seminorm(beta, w, zeta) ** 2
    return abs(lhs - rhs) / max(1.0, abs(lhs), abs(rhs))


def graddiv_sign_residual(space: FunctionSpace) -> float:
    """Entrywise residual of: deviatoric volume matrix minus symmetric-pair
    volume matrix equals -(2/3)(div v, div w)."""
    params = FluxParams(zeta=0.0, eta=1.0, nu=1.0)
    full = assemble_viscous_form(space, StressVariant.FULL_DEVIATORIC, params,
                                 include_faces=False)
    pair = assemble_viscous_form(space, StressVariant.SYMMETRIC_PAIR, params,
                                 include_faces=False)
    dd = assemble_divdiv_matrix(space)
    diff = (full - pair) + (2.0 / 3.0) * dd
    resid = np.abs(diff.data).max() if diff.nnz else 0.0
    return resid / np.abs(pair.data).max()


def verify_identity(kind: str, *, beta=None, w=None, eta=None,
                    space=None, zeta=0.5) -> float:
    """Dispatch to one of the named identity residuals."""
    if kind == "jump_identity":
        return jump_identity_residual(beta, w)
    if kind == "allaire":
        return allaire_residual(w)
    if kind == "decomposition":
        return decomposition_residual(w, eta)
    if kind == "graddiv_sign":
        return graddiv_sign_residual(space)
    if kind == "convective_energy":
        return convective_energy_residual(beta, w, zeta)
    raise ValueError(f"unknown identity {kind!r}; choose from {IDENTITY_KINDS}")


def coercivity_diagnostic(space: FunctionSpace, eta: float, n_draws: int,
                          rng) -> tuple[float, bool]:
    """Empirical coercivity constant of the viscous form.

    Draws random coefficient vectors, returns (smallest Rayleigh
    quotient a_h(w,w) / |||w|||^2, all_positive).  The constant is a
    diagnostic; strict positivity of a_h(w,w) is the hard property.
    """
    params = FluxParams(zeta=0.0, eta=eta, nu=1.0)
    A = assemble_viscous_form(space, StressVariant.FULL_DEVIATORIC, params,
                              include_faces=True)
    worst = np.inf
    positive = True
    for _ in range(n_draws):
        x = rng.standard_normal(space.n_dofs)
        energy = float(x @ (A @ x))
        if energy <= 0.0:
            positive = False
        nrm = sym_triple_norm(DiscreteField(space, x))
        if nrm > 0:
            worst = min(worst, energy / nrm ** 2)
    return worst, positive


def zero_boundary_projection(space: FunctionSpace, coeffs: np.ndarray):
    """Copy of a coefficient vector with all boundary velocity dofs zeroed."""
    out = np.array(coeffs, dtype=float, copy=True)
    out[boundary_velocity_dofs(space)] = 0.0
    return out


@dataclass
class CheckResult:
    """One line of the verification report."""

    name: str
    passed: bool
    worst: float
    bound: float
    detail: str = ""


def _suite_space(nx, family, k, periodic_both):
    from .mesh import (apply_periodic_identification, build_face_connectivity,
                       build_structured_triangle_mesh)
    from .space import build_function_space
    mesh = build_structured_triangle_mesh(nx, nx)
    faces = build_face_connectivity(mesh)
    pmap = apply_periodic_identification(mesh, faces, True, True) \
        if periodic_both else None
    return build_function_space(mesh, faces, pmap, family, k)


def identity_suite(n_draws: int = 100, nx: int = 4,
                   seed: int = 20260822) -> list:
    """Worst-case residuals of the four face/volume identities.

    Normal-continuous draws live on a doubly periodic mesh (every face
    interior, zero net normal trace for free); the transpose-gradient
    identity needs globally continuous zero-boundary fields, so those
    draws live on a walled mesh instead.
    """
    rng = np.random.default_rng(seed)
    bound = 1e-10
    results = []
    for k in (1, 2):
        Vb = _suite_space(nx, "BDM", k, True)
        Vt = _suite_space(nx, "TH-velocity", k, False)
        eta = 3.0 * (k + 1) * (k + 2)
        worst = {"jump identity": 0.0, "convective energy identity": 0.0,
                 "viscous energy split": 0.0,
                 "transpose gradient identity": 0.0}
        for _ in range(n_draws):
            beta = DiscreteField(Vb, rng.standard_normal(Vb.n_dofs))
            w = DiscreteField(Vb, rng.standard_normal(Vb.n_dofs))
            zeta = float(rng.uniform(0.0, 1.0))
            worst["jump identity"] = max(
                worst["jump identity"], jump_identity_residual(beta, w))
            worst["convective energy identity"] = max(
                worst["convective energy identity"],
                convective_energy_residual(beta, w, zeta))
            worst["viscous energy split"] = max(
                worst["viscous energy split"],
                decomposition_residual(w, eta))
            wt = DiscreteField(Vt, zero_boundary_projection(
                Vt, rng.standard_normal(Vt.n_dofs)))
            worst["transpose gradient identity"] = max(
                worst["transpose gradient identity"], allaire_residual(wt))
        for name, r in worst.items():
            results.append(CheckResult(
                f"{name} (k={k}, {n_draws} draws)", r <= bound, r, bound))
        r = graddiv_sign_residual(Vb)
        results.append(CheckResult(
            f"stress-matrix divergence split (k={k})", r <= bound, r, bound))
    return results


def kernel_suite(n_draws_3d: int = 1000, n_draws_2d: int = 200,
                 seed: int = 20260822) -> list:
    """Residual of the stress-free velocity family at random points."""
    rng = np.random.default_rng(seed)
    bound = 1e-12
    results = []
    for dim, n_draws, n_coef in ((3, n_draws_3d, 10), (2, n_draws_2d, 3)):
        worst = 0.0
        for _ in range(n_draws):
            coefs = rng.standard_normal(n_coef)
            x = rng.uniform(-2.0, 2.0, dim)
            _, sig = eval_kernel_field(dim, coefs, x)
            scale = max(1.0, float(np.abs(coefs).max()) * (1.0 + float(x @ x)))
            worst = max(worst, float(np.abs(sig).max()) / scale)
        results.append(CheckResult(
            f"deviatoric stress kernel {dim}D ({n_draws} draws)",
            worst <= bound, worst, bound))
    return results


def coercivity_suite(n_draws: int = 200, nx: int = 4,
                     seed: int = 20260822) -> list:
    """Positivity of the viscous form and SPD mass on low-order spaces.

    Covers the two lowest normal-continuous families (polynomial degree
    1 and 2) with the default penalty 3(k+1)(k+2); the empirical
    coercivity constant rides along in the detail string.
    """
    rng = np.random.default_rng(seed)
    results = []
    for k in (0, 1):
        V = _suite_space(nx, "BDM", k, False)
        eta = 3.0 * (k + 1) * (k + 2)
        c, positive = coercivity_diagnostic(V, eta, n_draws, rng)
        results.append(CheckResult(
            f"viscous form positivity, degree {k + 1} normal-continuous "
            f"(eta={eta:g}, {n_draws} draws)",
            positive and c > 0.0, c, 0.0,
            detail=f"empirical coercivity constant {c:.3e}"))
        M = assemble_mass_matrix(V).toarray()
        try:
            np.linalg.cholesky(M)
            spd = True
        except np.linalg.LinAlgError:
            spd = False
        results.append(CheckResult(
            f"mass matrix SPD via Cholesky, degree {k + 1} "
            "normal-continuous", spd, 0.0 if spd else 1.0, 0.0))
    return results


def verification_suite(identity_draws: int = 100, kernel_draws_3d: int = 1000,
                       kernel_draws_2d: int = 200,
                       coercivity_draws: int = 200) -> list:
    """Full property-check battery; returns one CheckResult per line."""
    out = []
    out.extend(identity_suite(identity_draws))
    out.extend(kernel_suite(kernel_draws_3d, kernel_draws_2d))
    out.extend(coercivity_suite(coercivity_draws))
    return out
