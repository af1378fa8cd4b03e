"""Benchmark case definitions and run configuration.

Two built-in cases: a periodic vortex with a known closed-form solution
(used for convergence tables) and a compactly supported vortex ring in a
box with no-slip walls (used as a long-time robustness test).  Each
formulation name picks a velocity/pressure pairing together with the
gradient combination used in the viscous stress.
"""

from __future__ import annotations

from dataclasses import dataclass, field, fields, replace

import numpy as np

from .forms import FluxParams, StressVariant
from .mesh import (
    apply_periodic_identification,
    build_face_connectivity,
    build_structured_triangle_mesh,
)
from .space import FunctionSpace, build_function_space

CASES = ("taylor_green", "gresho")

# formulation -> (velocity family, pressure family, stress variant)
FORMULATIONS = {
    "TH-Symmetric": ("TH-velocity", "TH-pressure",
                     StressVariant.FULL_DEVIATORIC),
    "TH-NonSymmetric": ("TH-velocity", "TH-pressure",
                        StressVariant.GRADIENT_ONLY),
    "BDM-Symmetric": ("BDM", "DC-pressure", StressVariant.SYMMETRIC_PAIR),
    "BDM-NonSymmetric": ("BDM", "DC-pressure", StressVariant.GRADIENT_ONLY),
    "RT-Symmetric": ("RT", "DC-pressure", StressVariant.SYMMETRIC_PAIR),
}

# per-case fallbacks applied by finalize_config when a field is unset
CASE_DEFAULTS = {
    "taylor_green": dict(nu=0.01, dt=0.01, t_end=1.0, nx=10),
    "gresho": dict(nu=5e-6, dt=0.01, t_end=14.0, nx=28),
}


class ConfigError(ValueError):
    """Raised for unknown keys or out-of-range configuration values."""


@dataclass(frozen=True)
class CaseConfig:
    """A fully validated run description; None fields mean case defaults."""

    case: str = "taylor_green"
    formulation: str = "BDM-Symmetric"
    k: int = 1
    nx: int | None = None
    ny: int | None = None
    nu: float | None = None
    zeta: float = 0.5
    eta: float | None = None
    delta: float = 0.0
    dt: float | None = None
    t_end: float | None = None
    out_dir: str = "."


_FIELD_TYPES = {
    "case": str, "formulation": str, "k": int, "nx": int, "ny": int,
    "nu": float, "zeta": float, "eta": float, "delta": float,
    "dt": float, "t_end": float, "out_dir": str,
}


def config_from_dict(raw: dict) -> CaseConfig:
    """Build a config from parsed JSON or flag values, naming bad keys."""
    known = {f.name for f in fields(CaseConfig)}
    clean = {}
    for key, value in raw.items():
        if key not in known:
            raise ConfigError(f"unknown config key {key!r}")
        if value is None:
            continue
        want = _FIELD_TYPES[key]
        try:
            clean[key] = want(value)
        except (TypeError, ValueError):
            raise ConfigError(
                f"config key {key!r} expects {want.__name__}, got {value!r}")
    return finalize_config(CaseConfig(**clean))


def finalize_config(cfg: CaseConfig) -> CaseConfig:
    """Apply case defaults and validate every field, naming the offender."""
    if cfg.case not in CASES:
        raise ConfigError(f"config key 'case' must be one of {CASES}, "
                          f"got {cfg.case!r}")
    if cfg.formulation not in FORMULATIONS:
        raise ConfigError(
            f"config key 'formulation' must be one of "
            f"{tuple(FORMULATIONS)}, got {cfg.formulation!r}")
    if cfg.k not in (1, 2, 3):
        raise ConfigError(f"config key 'k' must be 1, 2, or 3, got {cfg.k}")
    if not 0.0 <= cfg.zeta <= 1.0:
        raise ConfigError(
            f"config key 'zeta' must lie in [0, 1], got {cfg.zeta}")
    if cfg.delta < 0.0:
        raise ConfigError(
            f"config key 'delta' must be nonnegative, got {cfg.delta}")
    defaults = CASE_DEFAULTS[cfg.case]
    upd = {}
    if cfg.nx is None:
        upd["nx"] = defaults["nx"]
    if cfg.ny is None:
        upd["ny"] = upd.get("nx", cfg.nx)
    if cfg.nu is None:
        upd["nu"] = defaults["nu"]
    if cfg.dt is None:
        upd["dt"] = defaults["dt"]
    if cfg.t_end is None:
        upd["t_end"] = defaults["t_end"]
    if cfg.eta is None:
        upd["eta"] = 3.0 * (cfg.k + 1) * (cfg.k + 2)
    cfg = replace(cfg, **upd)
    for key in ("nx", "ny"):
        if getattr(cfg, key) < 1:
            raise ConfigError(f"config key {key!r} must be positive, "
                              f"got {getattr(cfg, key)}")
    for key in ("nu", "eta", "dt", "t_end"):
        if getattr(cfg, key) <= 0.0:
            raise ConfigError(f"config key {key!r} must be positive, "
                              f"got {getattr(cfg, key)}")
    if cfg.t_end < cfg.dt:
        raise ConfigError("config key 't_end' must be at least one time step")
    return cfg


def taylor_green_velocity(nu):
    def u(p, t):
        decay = np.exp(-2.0 * nu * t)
        return decay * np.column_stack(
            [np.sin(p[:, 0]) * np.cos(p[:, 1]),
             -np.cos(p[:, 0]) * np.sin(p[:, 1])])
    return u


def taylor_green_pressure(nu):
    def p_ex(p, t):
        decay = np.exp(-4.0 * nu * t)
        return 0.25 * decay * (np.cos(2.0 * p[:, 0]) + np.cos(2.0 * p[:, 1]))
    return p_ex


def gresho_velocity(p, t=0.0):
    """Piecewise azimuthal vortex: u_phi = 5r, then 2 - 5r, then 0."""
    x, y = p[:, 0], p[:, 1]
    r = np.sqrt(x * x + y * y)
    # azimuthal speed over r, finite at the origin
    factor = np.zeros_like(r)
    inner = r <= 0.2
    ring = (r > 0.2) & (r <= 0.4)
    factor[inner] = 5.0
    with np.errstate(divide="ignore", invalid="ignore"):
        factor[ring] = 2.0 / r[ring] - 5.0
    return np.column_stack([-y * factor, x * factor])


def gresho_speed(r):
    r = np.asarray(r, dtype=float)
    out = np.zeros_like(r)
    out = np.where(r <= 0.2, 5.0 * r, out)
    out = np.where((r > 0.2) & (r <= 0.4), 2.0 - 5.0 * r, out)
    return out


@dataclass
class CaseContext:
    """Everything a time integrator needs to run one configured case."""

    config: CaseConfig
    mesh: object
    faces: object
    periodic: object
    V: FunctionSpace
    Q: FunctionSpace
    variant: StressVariant
    params: FluxParams
    h: float
    initial_velocity: object
    exact_velocity: object = None      # callable (points, t) or None
    exact_pressure: object = None
    forcing: object = None
    dirichlet: bool = False


def setup_case(cfg: CaseConfig) -> CaseContext:
    cfg = finalize_config(cfg)
    vfam, qfam, variant = FORMULATIONS[cfg.formulation]
    if cfg.case == "taylor_green":
        rect = (0.0, 2.0 * np.pi, 0.0, 2.0 * np.pi)
        mesh = build_structured_triangle_mesh(cfg.nx, cfg.ny, rect)
        faces = build_face_connectivity(mesh)
        periodic = apply_periodic_identification(mesh, faces, True, True)
        dirichlet = False
        exact_u = taylor_green_velocity(cfg.nu)
        exact_p = taylor_green_pressure(cfg.nu)
        init = lambda p: exact_u(p, 0.0)
    else:
        rect = (-0.5, 0.5, -0.5, 0.5)
        mesh = build_structured_triangle_mesh(cfg.nx, cfg.ny, rect)
        faces = build_face_connectivity(mesh)
        periodic = None
        dirichlet = True
        exact_u = None
        exact_p = None
        init = gresho_velocity
    V = build_function_space(mesh, faces, periodic, vfam, cfg.k)
    Q = build_function_space(mesh, faces, periodic, qfam, cfg.k)
    params = FluxParams(zeta=cfg.zeta, eta=cfg.eta, nu=cfg.nu,
                        delta=cfg.delta)
    h = float(faces.length.max())
    return CaseContext(
        config=cfg, mesh=mesh, faces=faces, periodic=periodic, V=V, Q=Q,
        variant=variant, params=params, h=h, initial_velocity=init,
        exact_velocity=exact_u, exact_pressure=exact_p, forcing=None,
        dirichlet=dirichlet)
