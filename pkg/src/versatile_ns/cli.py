"""Command-line front end.

Three subcommands: `run` integrates one configured case and drops an
error table (when an exact solution exists), a VTK snapshot, and PNG
contour figures into the output directory; `convergence` sweeps the
four study meshes and writes one order table per invocation; `verify`
runs the randomized identity/kernel/coercivity battery and reports one
pass/fail line per property.
"""

from __future__ import annotations

import argparse
import json
import sys
import time
from dataclasses import replace
from pathlib import Path

from .analysis import ErrorReport, observed_order, verification_suite
from .cases import (
    CASES,
    FORMULATIONS,
    CaseConfig,
    ConfigError,
    config_from_dict,
    finalize_config,
)
from .figures import render_field_figures
from .reports import write_error_table, write_field_output
from .solver import run_case


CONVERGENCE_MESHES = (10, 20, 40, 50)

_FLAG_KEYS = ("case", "formulation", "k", "nx", "ny", "nu", "zeta", "eta",
              "delta", "dt", "t_end", "out_dir")


def _add_config_flags(p: argparse.ArgumentParser) -> None:
    p.add_argument("--config", metavar="FILE",
                   help="JSON file of configuration keys; flags override it")
    p.add_argument("--case", choices=CASES)
    p.add_argument("--formulation", choices=tuple(FORMULATIONS))
    p.add_argument("--k", type=int, help="polynomial pairing index (1..3)")
    p.add_argument("--nx", type=int, help="cells across the domain")
    p.add_argument("--ny", type=int, help="cells up the domain (default nx)")
    p.add_argument("--nu", type=float, help="kinematic viscosity")
    p.add_argument("--zeta", type=float,
                   help="convective flux blend: 0.5 upwind, 0 central")
    p.add_argument("--eta", type=float,
                   help="viscous jump penalty (default 3(k+1)(k+2))")
    p.add_argument("--delta", type=float, help="grad-div weight")
    p.add_argument("--dt", type=float, help="time step")
    p.add_argument("--t-end", dest="t_end", type=float, help="final time")
    p.add_argument("--out-dir", dest="out_dir", metavar="DIR",
                   help="directory for emitted files (default .)")


def load_config(args: argparse.Namespace) -> CaseConfig:
    """Merge a JSON config file with command-line overrides."""
    raw = {}
    if args.config:
        text = Path(args.config).read_text().strip()
        if text:
            try:
                raw = json.loads(text)
            except json.JSONDecodeError as exc:
                raise ConfigError(f"config file {args.config}: {exc}") from exc
            if not isinstance(raw, dict):
                raise ConfigError(
                    f"config file {args.config} must hold a JSON object")
    for key in _FLAG_KEYS:
        val = getattr(args, key, None)
        if val is not None:
            raw[key] = val
    return config_from_dict(raw)


def _flux_tag(cfg: CaseConfig) -> str:
    if cfg.zeta == 0.5:
        tag = "upwind"
    elif cfg.zeta == 0.0:
        tag = "central"
    else:
        tag = f"zeta{cfg.zeta:g}"
    if cfg.delta > 0.0:
        tag += f"_delta{cfg.delta:g}"
    return tag


def _run_stem(cfg: CaseConfig) -> str:
    return (f"{cfg.case}_{cfg.formulation}_k{cfg.k}_nx{cfg.nx}_"
            f"{_flux_tag(cfg)}")


def _system_size(ctx) -> int:
    # velocity + pressure + the mean-value multiplier
    return ctx.V.n_dofs + ctx.Q.n_dofs + 1


def cmd_run(args: argparse.Namespace) -> int:
    cfg = load_config(args)
    out = Path(cfg.out_dir)
    out.mkdir(parents=True, exist_ok=True)
    stem = _run_stem(cfg)
    t0 = time.perf_counter()
    result = run_case(cfg)
    elapsed = time.perf_counter() - t0
    ctx = result.context
    diag = result.diagnostics
    print(f"case {cfg.case}  formulation {cfg.formulation}  k={cfg.k}  "
          f"nx={cfg.nx}  zeta={cfg.zeta:g}  delta={cfg.delta:g}")
    print(f"  {len(diag.times) - 1} states recorded, "
          f"t in [{diag.times[0]:g}, {diag.times[-1]:g}], "
          f"{elapsed:.1f} s wall")
    print(f"  kinetic energy {diag.kinetic_energy[0]:.6g} -> "
          f"{diag.kinetic_energy[-1]:.6g}")
    print(f"  max |div u| over run {max(diag.max_divergence):.3e}")
    written = []
    if result.vel_error is not None:
        row = ErrorReport(h=ctx.h, dof=_system_size(ctx),
                          vel_l2=result.vel_error,
                          pres_l2=result.pres_error, k=cfg.k)
        table = out / f"{stem}_errors.csv"
        write_error_table([row], table)
        written.append(table)
        print(f"  velocity L2 error {result.vel_error:.3e}   "
              f"pressure L2 error {result.pres_error:.3e}")
    u, p = result.velocity, result.pressure
    vtk = out / f"{stem}_t{cfg.t_end:g}.vtk"
    write_field_output(u, p, cfg.t_end, vtk)
    written.append(vtk)
    written.extend(render_field_figures(u, p, cfg.t_end, out, stem))
    for path in written:
        print(f"  wrote {path}")
    return 0


def cmd_convergence(args: argparse.Namespace) -> int:
    cfg = load_config(args)
    if cfg.case != "taylor_green":
        raise ConfigError(
            "convergence studies need the closed-form case; "
            "set case=taylor_green")
    out = Path(cfg.out_dir)
    out.mkdir(parents=True, exist_ok=True)
    rows = []
    t0 = time.perf_counter()
    for n in CONVERGENCE_MESHES:
        sub = finalize_config(replace(cfg, nx=n, ny=n))
        result = run_case(sub)
        ctx = result.context
        rows.append(ErrorReport(h=ctx.h, dof=_system_size(ctx),
                                vel_l2=result.vel_error,
                                pres_l2=result.pres_error, k=cfg.k))
        print(f"  nx={n:3d}  h={ctx.h:.4g}  dof={rows[-1].dof:7d}  "
              f"vel {result.vel_error:.3e}  pres {result.pres_error:.3e}")
    vo = observed_order([(r.h, r.vel_l2) for r in rows])
    po = observed_order([(r.h, r.pres_l2) for r in rows])
    for r, v, p in zip(rows[1:], vo, po):
        r.vel_order = float(v)
        r.pres_order = float(p)
    table = out / (f"convergence_{cfg.formulation}_k{cfg.k}_"
                   f"{_flux_tag(cfg)}.csv")
    write_error_table(rows, table)
    print(f"  orders: velocity {', '.join(f'{v:.2f}' for v in vo)}; "
          f"pressure {', '.join(f'{p:.2f}' for p in po)}")
    print(f"  wrote {table}  ({time.perf_counter() - t0:.1f} s wall)")
    return 0


def cmd_verify(args: argparse.Namespace) -> int:
    t0 = time.perf_counter()
    results = verification_suite()
    failed = 0
    for r in results:
        mark = "PASS" if r.passed else "FAIL"
        line = f"[{mark}] {r.name}"
        if r.bound > 0.0:
            line += f": worst residual {r.worst:.3e} (bound {r.bound:g})"
        if r.detail:
            line += f"  [{r.detail}]"
        print(line)
        failed += 0 if r.passed else 1
    total = len(results)
    print(f"{total - failed}/{total} checks passed "
          f"({time.perf_counter() - t0:.1f} s)")
    return 0 if failed == 0 else 1


def build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(
        prog="versatile-ns",
        description="Mixed finite element solver for incompressible flow "
                    "with a full symmetric viscous stress")
    sub = parser.add_subparsers(dest="command", required=True)
    p_run = sub.add_parser(
        "run", help="integrate one case and emit table/VTK/figures")
    _add_config_flags(p_run)
    p_run.set_defaults(func=cmd_run)
    p_conv = sub.add_parser(
        "convergence", help="sweep the study meshes and emit an order table")
    _add_config_flags(p_conv)
    p_conv.set_defaults(func=cmd_convergence)
    p_ver = sub.add_parser(
        "verify", help="run the randomized identity/property battery")
    p_ver.set_defaults(func=cmd_verify)
    return parser


def main(argv=None) -> int:
    args = build_parser().parse_args(argv)
    try:
        return args.func(args)
    except ConfigError as exc:
        print(f"configuration error: {exc}", file=sys.stderr)
        return 2
    except FileNotFoundError as exc:
        print(f"error: {exc}", file=sys.stderr)
        return 2


if __name__ == "__main__":
    sys.exit(main())
