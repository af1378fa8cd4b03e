"""Time integration of the discrete momentum/continuity system.

The spatial discretization hands us block matrices; this module owns the
rest: backward-differentiation time stepping up to order three, Picard
linearization of the convective term, and direct sparse solves of the
velocity/pressure saddle system with a scalar multiplier fixing the
pressure gauge.

The factorization strategy matters for speed.  Partial pivoting on the
indefinite saddle matrix destroys any fill-reducing ordering, so we
factor a quasi-definite proxy instead: the zero pressure/multiplier
diagonal is shifted by a tiny negative regularization, SuperLU runs with
diagonal pivoting on a symmetric-pattern minimum-degree ordering, and
iterative refinement against the unperturbed matrix removes the shift.
The same refinement loop lets one factorization serve many nearby
velocity blocks, so Picard sweeps and consecutive time steps usually
cost triangular solves only.
"""

from __future__ import annotations

from dataclasses import dataclass, field

import numpy as np
import scipy.sparse as sp
import scipy.sparse.linalg as spla

from .analysis import kinetic_energy, max_cellwise_divergence
from .cases import CaseConfig, CaseContext, ConfigError, setup_case
from .forms import (
    assemble_convective_form,
    assemble_graddiv_stabilization,
    assemble_load_vector,
    build_form_matrices,
    convective_form_data,
    coupling_data_of_matrix,
    coupling_matrix,
    field_values_on_cells,
    graddiv_form_data,
    volume_degree,
)
from .space import DiscreteField, boundary_velocity_dofs

# order -> (a0, history weights); the step reads
#   (1/dt) * (a0 * u_new - sum_i a_i * u_old[i]) = spatial terms
BDF_WEIGHTS = {
    1: (1.0, (1.0,)),
    2: (1.5, (2.0, -0.5)),
    3: (11.0 / 6.0, (3.0, -1.5, 1.0 / 3.0)),
}

RESIDUAL_TOL = 1e-9
MAX_REFINE = 30
REFRESH_ITERS = 8
PICARD_TOL = 1e-10
PICARD_MAX_ITER = 50

_FACTOR_OPTIONS = dict(DiagPivotThresh=0.0, SymmetricMode=True)


class SolverError(RuntimeError):
    """Linear-algebra failure: singular factorization or bad residual."""


class NonlinearDivergenceError(SolverError):
    """Picard sweep hit its iteration cap; carries the update history."""

    def __init__(self, message: str, history):
        super().__init__(message)
        self.history = list(history)


def _inf_norm(x) -> float:
    x = np.asarray(x)
    return float(np.max(np.abs(x))) if x.size else 0.0


class SaddleOperator:
    """Velocity/pressure/multiplier system with a reusable factorization.

    Unknowns (u_free, p, lam) solve

        K_ff u - B_f^T p          = rhs_u
        B_f u           + lam e_0 = rhs_p
                  e_0^T p         = 0

    which pins one pressure value during the solve; the returned pressure
    is then shifted to exact zero mean.  Because the pressure rows of B
    are linearly dependent for the boundary conditions used here, lam
    vanishes and the shifted answer also solves the mean-constrained
    system.  ``set_velocity_block`` swaps in a new K without refactoring;
    ``solve`` refines until the residual of the current (unregularized)
    matrix meets RESIDUAL_TOL and refactors automatically if the cached
    factorization is too stale to converge.
    """

    def __init__(self, B, mean, free=None, n_vel=None):
        self.n_vel = B.shape[1] if n_vel is None else n_vel
        self.n_pres = B.shape[0]
        if free is None:
            self.free = None
            self.Bf = B.tocsr()
        else:
            self.free = np.asarray(free, dtype=int)
            self.Bf = B.tocsc()[:, self.free].tocsr()
        self.mean = np.asarray(mean, dtype=float)
        self.gauge = float(self.mean.sum())
        self.n_free = self.Bf.shape[1]
        self._Kff = None
        self._Bs = None
        self._pscale = None     # pressure equilibration factor
        self._lu = None
        self._current = False   # factorization matches the current K
        self._refresh = False   # refinement is straining; refactor soon
        self._tpl_indices = None
        self._keep = None       # K.data slots surviving the restriction

    def _restrict_velocity_block(self, K):
        """Build K[free][:, free] and remember the data-slot mapping.

        Repeat calls with a matrix sharing the same index arrays (the
        assembly layer reuses them per pattern) reduce to one gather
        into the cached structure; anything else rebuilds the map.
        """
        if self._tpl_indices is not None and K.indices is self._tpl_indices:
            np.take(K.data, self._keep, out=self._Kff.data)
            return
        if not K.has_canonical_format:
            K = K.copy()
            K.sum_duplicates()
        if self.free is None:
            self._keep = np.arange(K.nnz, dtype=np.int32)
            self._Kff = K.copy()
        else:
            in_free = np.zeros(K.shape[0], dtype=bool)
            in_free[self.free] = True
            krows = np.repeat(np.arange(K.shape[0]), np.diff(K.indptr))
            keep = np.flatnonzero(in_free[krows] & in_free[K.indices])
            renum = np.cumsum(in_free) - 1
            sub_indices = renum[K.indices[keep]].astype(K.indices.dtype)
            counts = np.bincount(renum[krows[keep]], minlength=self.n_free)
            sub_indptr = np.zeros(self.n_free + 1, dtype=K.indptr.dtype)
            np.cumsum(counts, out=sub_indptr[1:])
            self._Kff = sp.csr_matrix(
                (K.data[keep], sub_indices, sub_indptr),
                shape=(self.n_free, self.n_free))
            self._Kff.has_canonical_format = True
            self._keep = keep.astype(np.int32)
        self._tpl_indices = K.indices

    def set_velocity_block(self, K, refactor: bool = False):
        self._restrict_velocity_block(K.tocsr())
        if self._pscale is None:
            # bring the divergence rows onto the scale of the momentum
            # rows; otherwise refinement bottoms out while the continuity
            # residual (hence the divergence of the answer) is still
            # orders of magnitude above roundoff
            kdiag = np.abs(self._Kff.diagonal())
            kscale = float(np.median(kdiag[kdiag > 0])) \
                if np.any(kdiag > 0) else 1.0
            brow = np.asarray(self.Bf.multiply(self.Bf).sum(axis=1)).ravel()
            bscale = float(np.sqrt(np.median(brow[brow > 0]))) \
                if np.any(brow > 0) else 1.0
            self._pscale = kscale / bscale
            self._kscale = kscale
            self._Bs = (self._pscale * self.Bf).tocsr()
        self._current = False
        if refactor or self._lu is None:
            self._factor()
        return self

    def _bordered(self, Kff):
        pin = sp.csr_matrix(
            (np.full(1, self._kscale),
             (np.zeros(1, dtype=int), np.zeros(1, dtype=int))),
            shape=(1, self.n_pres))
        return sp.bmat(
            [[Kff, -self._Bs.T, None], [self._Bs, None, pin.T],
             [None, pin, None]], format="csc")

    def _factor(self):
        S = self._bordered(self._Kff)
        n = S.shape[0]
        indicator = np.zeros(n)
        indicator[self.n_free:] = 1.0
        # after equilibration the pressure Schur complement sits at the
        # scale of diag(K); shift 8 orders below it
        eps = 1e-8 * self._kscale
        Sreg = (S - eps * sp.diags(indicator)).tocsc()
        try:
            self._lu = spla.splu(Sreg, permc_spec="MMD_AT_PLUS_A",
                                 options=dict(_FACTOR_OPTIONS))
        except RuntimeError as exc:
            raise SolverError(self._diagnose(exc)) from exc
        self._current = True

    def _diagnose(self, exc) -> str:
        try:
            spla.splu(self._Kff.tocsc())
        except RuntimeError:
            return ("saddle factorization failed: zero pivot in the "
                    f"velocity block ({exc})")
        return ("saddle factorization failed: zero pivot in the "
                f"pressure/constraint block ({exc})")

    def _apply(self, x: np.ndarray) -> np.ndarray:
        nf, npr = self.n_free, self.n_pres
        xu, xp, xl = x[:nf], x[nf:nf + npr], x[nf + npr]
        out = np.empty_like(x)
        out[:nf] = self._Kff @ xu - self._Bs.T @ xp
        out[nf:nf + npr] = self._Bs @ xu
        out[nf] += self._kscale * xl
        out[nf + npr] = self._kscale * xp[0]
        return out

    def _refine(self, rhs: np.ndarray):
        # drive the residual to near machine precision (the divergence
        # constraint rides on the continuity rows, so stopping at the
        # acceptance threshold would leak into the divergence); stop
        # early once refinement stagnates
        x = self._lu.solve(rhs)
        scale = _inf_norm(rhs)
        prev = np.inf
        for it in range(1, MAX_REFINE + 1):
            r = rhs - self._apply(x)
            rn = _inf_norm(r)
            if rn <= 1e-13 * scale:
                return x, it
            if rn >= 0.5 * prev:
                break
            prev = rn
            x = x + self._lu.solve(r)
        if _inf_norm(rhs - self._apply(x)) <= RESIDUAL_TOL * scale:
            return x, MAX_REFINE
        return None, MAX_REFINE

    def solve(self, rhs_u: np.ndarray, rhs_p: np.ndarray | None = None):
        """Return (u, p, lam); u re-embedded on the full dof set."""
        nf, npr = self.n_free, self.n_pres
        rhs = np.zeros(nf + npr + 1)
        rhs[:nf] = rhs_u if self.free is None else rhs_u[self.free]
        if rhs_p is not None:
            rhs[nf:nf + npr] = self._pscale * rhs_p
        if self._refresh and not self._current:
            # the previous solve leaned hard on refinement; a stale
            # factorization converges slowly long before it fails, so
            # refresh it against the current block while it is cheap
            self._factor()
            self._refresh = False
        x, iters = self._refine(rhs)
        if x is None and not self._current:
            self._factor()
            x, iters = self._refine(rhs)
        if x is None:
            self._raise_unconverged(rhs)
        if iters > REFRESH_ITERS:
            self._refresh = True
        u = np.zeros(self.n_vel)
        if self.free is None:
            u[:] = x[:nf]
        else:
            u[self.free] = x[:nf]
        p = self._pscale * x[nf:nf + npr]
        if self.gauge != 0.0:
            p -= (self.mean @ p) / self.gauge
        lam = float(x[-1]) * self._kscale / self._pscale
        return u, p, lam

    def _raise_unconverged(self, rhs):
        try:
            spla.splu(self._bordered(self._Kff))
        except RuntimeError as exc:
            raise SolverError(self._diagnose(exc)) from exc
        r = _inf_norm(rhs - self._apply(self._lu.solve(rhs)))
        raise SolverError(
            f"saddle solve stalled: residual {r:.3e} will not reach "
            f"{RESIDUAL_TOL:.0e} * {_inf_norm(rhs):.3e} by refinement")


def solve_saddle_system(K, B, mean, rhs_u, rhs_p=None, free=None):
    """Factor once and solve once; convenience path for projections and
    tests.  Returns (u, p, lam) with zero-mean pressure."""
    op = SaddleOperator(B, mean, free, n_vel=K.shape[1])
    op.set_velocity_block(K)
    return op.solve(rhs_u, rhs_p)


def picard_iterate(operator: SaddleOperator, K_of_beta, rhs_u, beta0, *,
                   rhs_p=None, tol=PICARD_TOL, max_iter=PICARD_MAX_ITER):
    """Fixed-point sweep freezing the transport field at the last iterate.

    Each pass rebuilds the velocity block via ``K_of_beta`` and solves
    the saddle system with unchanged right-hand side; terminates once the
    successive velocity update satisfies |du|_inf <= tol * max(1, |u|_inf).
    Returns (u, p, lam, sweeps, update_history).
    """
    beta = np.array(beta0, dtype=float, copy=True)
    history = []
    for sweep in range(1, max_iter + 1):
        operator.set_velocity_block(K_of_beta(beta))
        u, p, lam = operator.solve(rhs_u, rhs_p)
        update = _inf_norm(u - beta)
        history.append(update)
        if update <= tol * max(1.0, _inf_norm(u)):
            return u, p, lam, sweep, history
        beta = u
    raise NonlinearDivergenceError(
        f"transport linearization did not converge within {max_iter} "
        f"sweeps; update norms ran {history[0]:.3e} -> {history[-1]:.3e}",
        history)


def extrapolated_guess(history, order: int) -> np.ndarray:
    """Polynomial-in-time predictor from the newest-first history list."""
    if order >= 3 and len(history) >= 3:
        return 3.0 * history[0] - 3.0 * history[1] + history[2]
    if order >= 2 and len(history) >= 2:
        return 2.0 * history[0] - history[1]
    return history[0].copy()


@dataclass
class RunDiagnostics:
    """Per-state time series; seeds and the initial state count as rows."""

    times: list = field(default_factory=list)
    kinetic_energy: list = field(default_factory=list)
    max_divergence: list = field(default_factory=list)
    max_speed: list = field(default_factory=list)
    picard_sweeps: list = field(default_factory=list)

    def record(self, t, u_field, M, sweeps):
        vals, _ = field_values_on_cells(u_field, volume_degree(u_field.space))
        self.times.append(float(t))
        self.kinetic_energy.append(kinetic_energy(u_field, M))
        self.max_divergence.append(max_cellwise_divergence(u_field))
        self.max_speed.append(float(np.sqrt(
            np.max(np.sum(vals * vals, axis=-1)))))
        self.picard_sweeps.append(int(sweeps))

    def as_arrays(self):
        return {k: np.asarray(v) for k, v in vars(self).items()}


@dataclass
class RunResult:
    context: CaseContext
    velocity: DiscreteField
    pressure: DiscreteField
    diagnostics: RunDiagnostics
    vel_error: float | None = None
    pres_error: float | None = None


def project_divergence_free(V, f, t, operator: SaddleOperator):
    """Best L2 fit of ``f(., t)`` subject to the discrete divergence
    constraint; for the pointwise-divergence-free pairs the result has
    elementwise zero divergence up to roundoff.  ``operator`` must hold
    the velocity mass matrix."""
    rhs_u = assemble_load_vector(V, f, t)
    u, _, _ = operator.solve(rhs_u)
    return u


def consistent_initial_pressure(ctx: CaseContext, mats, u0: np.ndarray,
                                mass_op: SaddleOperator) -> np.ndarray:
    """Pressure matching the initial state: project the initial
    acceleration onto the divergence constraint and read the pressure off
    the momentum balance."""
    V = ctx.V
    cfg = ctx.config
    beta = DiscreteField(V, u0)
    rhs_u = assemble_load_vector(V, ctx.forcing, 0.0)
    rhs_u = rhs_u - (cfg.nu * mats.A) @ u0
    rhs_u = rhs_u - assemble_convective_form(V, beta, cfg.zeta) @ u0
    if cfg.delta > 0.0:
        rhs_u = rhs_u - assemble_graddiv_stabilization(
            V, beta, cfg.delta) @ u0
    _, p, _ = mass_op.solve(rhs_u)
    return p


def _step_count(cfg: CaseConfig) -> int:
    n = int(round(cfg.t_end / cfg.dt))
    if abs(n * cfg.dt - cfg.t_end) > 1e-9 * max(1.0, cfg.t_end):
        raise ConfigError(
            "config key 't_end' must be an integer multiple of 'dt', "
            f"got t_end={cfg.t_end} dt={cfg.dt}")
    return n


def run_case(cfg_or_ctx) -> RunResult:
    """Integrate one configured case from t=0 to t_end.

    Cases with a closed-form solution seed a full three-level history by
    constrained projection at t=0, dt, 2*dt, so every computed step runs
    at order three.  Otherwise the order ramps 1 -> 2 -> 3 from a
    projected initial state whose pressure comes from a consistent
    initial solve.  Returns the final fields plus per-state diagnostics
    (energy, divergence, peak speed, sweep counts).
    """
    if isinstance(cfg_or_ctx, CaseContext):
        ctx = cfg_or_ctx
    else:
        ctx = setup_case(cfg_or_ctx)
    cfg = ctx.config
    V, Q = ctx.V, ctx.Q
    mats = build_form_matrices(V, Q, ctx.variant, ctx.params)
    free = None
    if ctx.dirichlet:
        bdofs = boundary_velocity_dofs(V)
        free = np.setdiff1d(np.arange(V.n_dofs), bdofs)
    dt, nu, delta, zeta = cfg.dt, cfg.nu, cfg.delta, cfg.zeta
    n_steps = _step_count(cfg)
    diag = RunDiagnostics()
    mass_op = SaddleOperator(mats.B, mats.mean, free)
    mass_op.set_velocity_block(mats.M)

    history = []            # newest first, at most three states
    pressure = np.zeros(Q.n_dofs)
    if ctx.exact_velocity is not None and n_steps >= 3:
        for j in (0, 1, 2):
            u_j = project_divergence_free(V, ctx.exact_velocity, j * dt,
                                          mass_op)
            history.insert(0, u_j)
            diag.record(j * dt, DiscreteField(V, u_j), mats.M, 0)
        first_step = 3
    else:
        init = ctx.initial_velocity
        u0 = project_divergence_free(V, lambda p, t: init(p), 0.0, mass_op)
        history.insert(0, u0)
        pressure = consistent_initial_pressure(ctx, mats, u0, mass_op)
        diag.record(0.0, DiscreteField(V, u0), mats.M, 0)
        first_step = 1

    step_op = SaddleOperator(mats.B, mats.mean, free)
    K_fixed_cache = {}

    def fixed_data(order):
        # mass/viscous combination laid out on the convective pattern so
        # each Picard sweep composes the system by vector adds alone
        if order not in K_fixed_cache:
            a0 = BDF_WEIGHTS[order][0]
            K_fixed_cache[order] = coupling_data_of_matrix(
                (a0 / dt) * mats.M + nu * mats.A, V)
        return K_fixed_cache[order]

    for step in range(first_step, n_steps + 1):
        t_new = step * dt
        order = min(3, len(history))
        K_fixed = fixed_data(order)
        weights = BDF_WEIGHTS[order][1]
        acc = weights[0] * history[0]
        for w, u_old in zip(weights[1:], history[1:]):
            acc = acc + w * u_old
        rhs_u = (mats.M @ acc) / dt + assemble_load_vector(
            V, ctx.forcing, t_new)

        def K_of_beta(b):
            bf = DiscreteField(V, b)
            data = K_fixed + convective_form_data(V, bf, zeta)
            if delta > 0.0:
                data = data + graddiv_form_data(V, bf, delta)
            return coupling_matrix(V, data)

        beta0 = extrapolated_guess(history, order)
        u_new, pressure, _, sweeps, _ = picard_iterate(
            step_op, K_of_beta, rhs_u, beta0)
        history.insert(0, u_new)
        del history[3:]
        diag.record(t_new, DiscreteField(V, u_new), mats.M, sweeps)

    u_field = DiscreteField(V, history[0])
    p_field = DiscreteField(Q, pressure)
    result = RunResult(ctx, u_field, p_field, diag)
    if ctx.exact_velocity is not None:
        from .analysis import l2_error_field
        result.vel_error = l2_error_field(u_field, ctx.exact_velocity,
                                          t=cfg.t_end)
        result.pres_error = l2_error_field(p_field, ctx.exact_pressure,
                                           t=cfg.t_end, zero_mean=True)
    return result
