"""Batch command-line front-end: configs in, CSV + summary records out.

Exit codes: 0 success, 1 check/report failure, 2 usage or config error.
CSV files are comma-separated with a header row and 17 significant digits;
every run also writes a `key = value` summary record.
"""

from __future__ import annotations

import argparse
import math
import sys
from concurrent.futures import ThreadPoolExecutor
from pathlib import Path

import numpy as np

from . import damping, dynamics, envelope as env_mod, modes, observability
from .discretization import Grid, assemble, solve_static
from .dynamics import SimConfig, fit_decay, simulate
from .errors import ConfigError, GradthermError, InsufficientDecay
from .material import check_positivity, expand_isotropic, load_params


def _write_csv(path: Path, header, columns):
    with open(path, "w") as fh:
        fh.write(",".join(header) + "\n")
        for row in zip(*columns):
            fh.write(",".join(f"{v:.17g}" for v in row) + "\n")


def _write_summary(path: Path, entries: dict):
    with open(path, "w") as fh:
        for key, val in entries.items():
            fh.write(f"{key} = {val}\n")


def _outdir(args) -> Path:
    out = Path(args.out)
    out.mkdir(parents=True, exist_ok=True)
    return out


def _parse_law(spec: str | None):
    if spec is None or spec == "none":
        return None
    kind, _, val = spec.partition(":")
    if kind == "linear":
        return damping.linear_law(float(val or 1.0))
    if kind == "power":
        return damping.power_law(float(val or 2.0))
    raise ConfigError(f"unknown damping law {spec!r} (use linear:A or power:P)")


def _parse_init(spec: str):
    kind, _, val = spec.partition(":")
    if kind == "mode":
        return ("mode", int(val or 1))
    if kind == "bump":
        return ("bump", float(val) if val else 1.0)
    if kind == "file":
        if not val:
            raise ConfigError("init file: needs a path")
        return ("file", val)
    raise ConfigError(f"unknown initial data {spec!r}")


def cmd_check_coeffs(args) -> int:
    params = load_params(args.params)
    coeffs = expand_isotropic(params, dim=args.dim)
    rep = check_positivity(coeffs)
    out = _outdir(args)
    _write_summary(out / "positivity.txt", {
        "alpha_joint": rep.alpha_joint,
        "alpha_elastic": rep.alpha_elastic,
        "alpha_elastic_sym": rep.alpha_elastic_sym,
        "b4_margin": rep.b4_margin,
        "m2_margin": rep.m2_margin,
        "e2_margin": rep.e2_margin,
        "rho_ok": rep.rho_ok,
        "a_ok": rep.a_ok,
        "joint_pd": rep.joint_pd,
        "damping_psd": rep.damping_psd,
    })
    ok = rep.rho_ok and rep.a_ok and rep.joint_pd and rep.damping_psd
    print(f"alpha_joint = {rep.alpha_joint:.6g}  "
          f"alpha_elastic = {rep.alpha_elastic:.6g}  ok = {ok}")
    return 0 if ok else 1


def cmd_counterexample(args) -> int:
    params = load_params(args.params)
    table = modes.resolvent_blowup_scan(params, args.nmax)
    out = _outdir(args)
    sols = table.solutions
    _write_csv(out / "counterexample.csv",
               ["n", "lambda_n", "U_lower", "U_velocity_norm", "F_norm_sq",
                "residual"],
               [[s.n for s in sols],
                [s.lambda_n for s in sols],
                [math.sqrt(s.U_norm_sq) for s in sols],
                [math.sqrt(s.velocity_norm_sq) for s in sols],
                [s.F_norm_sq for s in sols],
                [s.residual for s in sols]])
    max_res = max((s.residual for s in sols), default=0.0)
    max_ab = max((abs(s.A + s.B - 2.0 * params.rho) for s in sols), default=0.0)
    bc_max = 0.0
    if not args.skip_bc:
        for s in sols:
            bc_max = max(bc_max, modes.verify_ansatz_bc(
                params, s, sample_count=args.bc_samples).max_residual)
    summary = {
        "n_solved": len(sols),
        "n_failed": len(table.annotations),
        "growth_exponent": table.growth_exponent,
        "monotone": table.monotone,
        "max_mode_residual": max_res,
        "max_amplitude_sum_error": max_ab,
        "max_bc_residual": bc_max,
    }
    for n, msg in table.annotations.items():
        summary[f"annotation_{n}"] = msg
    _write_summary(out / "counterexample_summary.txt", summary)
    ok = (max_res <= 1e-10 and max_ab <= 1e-9
          and abs(table.growth_exponent - 2.0) <= 0.05
          and bc_max <= 1e-12)
    print(f"modes solved: {len(sols)}  growth exponent: "
          f"{table.growth_exponent:.4f}  max residual: {max_res:.3g}  ok = {ok}")
    return 0 if ok else 1


def _build_config(args) -> SimConfig:
    params = load_params(args.params)
    grid = Grid.from_spec(args.grid)
    return SimConfig(params=params, grid=grid, variant=args.variant,
                     T=args.T, dt=args.dt, law=_parse_law(args.law),
                     scheme=args.scheme, sample_every=args.sample_every,
                     init=_parse_init(args.init), seed=args.seed,
                     lyapunov_N=args.lyapunov_N)


def cmd_simulate(args) -> int:
    config = _build_config(args)
    trace = simulate(config)
    out = _outdir(args)
    trace.to_csv(out / f"{args.name}.csv")
    _write_summary(out / f"{args.name}_summary.txt", {
        "variant": trace.variant,
        "samples": len(trace.times),
        "energy_initial": trace.energy[0],
        "energy_final": trace.energy[-1],
        "energy_monotone": bool(np.all(np.diff(trace.energy)
                                       <= 1e-8 * trace.energy[0])),
        **trace.meta,
    })
    print(f"{trace.variant}: E(0) = {trace.energy[0]:.6g} -> "
          f"E({trace.times[-1]:g}) = {trace.energy[-1]:.6g}")
    return 0


def cmd_decay_fit(args) -> int:
    trace = dynamics.EnergyTrace.from_csv(args.trace)
    try:
        fit = fit_decay(trace, drop_frac=args.drop)
    except InsufficientDecay as exc:
        print(f"decay fit failed: {exc}", file=sys.stderr)
        return 1
    out = _outdir(args)
    _write_summary(out / "decay_fit.txt", {
        "C": fit.C, "c0": fit.c0, "r2": fit.r2,
        "pointwise_ok": fit.pointwise_ok,
        "window_start": fit.window[0], "window_end": fit.window[1],
        "n_used": fit.n_used,
    })
    print(f"fitted C = {fit.C:.6g}, c0 = {fit.c0:.6g}, r2 = {fit.r2:.6f}, "
          f"pointwise bound holds: {fit.pointwise_ok}")
    return 0 if (fit.c0 > 0 and fit.pointwise_ok) else 1


def cmd_envelope(args) -> int:
    law = _parse_law(args.law)
    if law is None:
        raise ConfigError("envelope needs --law")
    ensemble = [dynamics.EnergyTrace.from_csv(p) for p in args.ensemble]
    measure = float(ensemble[0].meta.get("domain_measure", math.pi))
    est = env_mod.estimate_C_lemma(ensemble, args.T_window)
    env = env_mod.build_envelope(law, args.T_window, measure,
                                 est.C * args.safety)
    out = _outdir(args)
    rows = {"C_lemma_estimate": est.C, "safety": args.safety,
            "C_lemma_used": est.C * args.safety,
            "n_runs": est.n_runs, "n_windows": est.n_windows, "K": est.K}
    ok = True
    for k, path in enumerate(args.compare or []):
        trace = dynamics.EnergyTrace.from_csv(path)
        rep = env_mod.envelope_compare(trace, env)
        rows[f"holdout_{k}_holds"] = rep.holds
        rows[f"holdout_{k}_min_margin"] = float(np.min(rep.margins))
        ok = ok and rep.holds
        S = env_mod.integrate_S(env, trace.energy[0],
                                horizon=float(trace.times[-1] / args.T_window))
        sel = trace.times > args.T_window
        _write_csv(out / f"envelope_{k}.csv",
                   ["t", "energy", "S_bound", "margin"],
                   [trace.times[sel], trace.energy[sel],
                    [S(t / args.T_window - 1.0) for t in trace.times[sel]],
                    rep.margins])
    _write_summary(out / "envelope_summary.txt", rows)
    print(f"C_lemma = {est.C:.6g} ({est.n_windows} windows); "
          f"holdout envelope holds: {ok}")
    return 0 if ok else 1


def cmd_observability(args) -> int:
    out = _outdir(args)
    if args.params:
        params = load_params(args.params)
        grid = Grid.from_spec(args.grid)
        coeffs = expand_isotropic(params, dim=grid.dim)
        system = assemble(grid, coeffs, "cattaneo",
                          law=damping.linear_law(params.fric or 1.0))
        pair = observability.from_discretization(system)
    else:
        pair = observability.random_stable_pair(args.size, seed=args.seed)
    report = observability.verify_theorem_A(pair, trials=args.trials,
                                            seed=args.seed)
    est = observability.observability_constant(pair, T=report.T_used,
                                               trials=args.trials,
                                               seed=args.seed)
    _write_summary(out / "observability.txt", {
        "N": pair.N, "T0": report.T0, "T_used": report.T_used,
        "abscissa": report.abscissa,
        "all_inequalities_hold": report.all_hold,
        "min_obs_lower_margin": float(np.min(report.obs_lower_margin)),
        "min_psi_phi_margin": float(np.min(report.psi_phi_margin)),
        "min_final_margin": float(np.min(report.final_margin)),
        "observability_constant": est.C,
        "observable": est.observable,
    })
    print(f"N = {pair.N}, T0 = {report.T0:.4g}, chain holds: {report.all_hold}, "
          f"C({report.T_used:.3g}) = {est.C:.6g}")
    return 0 if report.all_hold else 1


def cmd_static_solve(args) -> int:
    params = load_params(args.params)
    grid = Grid.from_spec(args.grid)
    coeffs = expand_isotropic(params, dim=grid.dim)
    system = assemble(grid, coeffs, "kelvin_voigt")
    target = dynamics.initial_data(system, ("bump", 1.0), seed=args.seed)
    F = system.generator() @ target.data
    solution = solve_static(system, F)
    err = (np.linalg.norm(solution.data - target.data)
           / np.linalg.norm(target.data))
    out = _outdir(args)
    _write_summary(out / "static_solve.txt", {
        "grid": args.grid, "relative_error": err, "tolerance": 1e-8,
        "ok": err <= 1e-8,
    })
    print(f"manufactured recovery error = {err:.3g}")
    return 0 if err <= 1e-8 else 1


def build_parser() -> argparse.ArgumentParser:
    ap = argparse.ArgumentParser(prog="gradtherm",
                                 description=__doc__.splitlines()[0])
    sub = ap.add_subparsers(dest="command", required=True)

    def common(p):
        p.add_argument("--out", default="out", help="output directory")
        p.add_argument("--seed", type=int, default=0)

    p = sub.add_parser("check-coeffs", help="positivity report of a parameter file")
    p.add_argument("--params", required=True)
    p.add_argument("--dim", type=int, default=2, choices=(1, 2))
    common(p)
    p.set_defaults(func=cmd_check_coeffs)

    p = sub.add_parser("counterexample", help="per-mode blow-up scan")
    p.add_argument("--params", required=True)
    p.add_argument("--nmax", type=int, default=64)
    p.add_argument("--bc-samples", type=int, default=64)
    p.add_argument("--skip-bc", action="store_true")
    common(p)
    p.set_defaults(func=cmd_counterexample)

    p = sub.add_parser("simulate", help="time integration of one variant")
    p.add_argument("--params", required=True)
    p.add_argument("--variant", required=True,
                   choices=("kelvin_voigt", "frictional", "cattaneo", "undamped"))
    p.add_argument("--grid", default="200", help="e.g. 200 or 48x48")
    p.add_argument("--T", type=float, required=True)
    p.add_argument("--dt", type=float, required=True)
    p.add_argument("--scheme", default="implicit_midpoint",
                   choices=("implicit_midpoint", "backward_euler"))
    p.add_argument("--law", default=None, help="linear:A or power:P")
    p.add_argument("--init", default="mode:1")
    p.add_argument("--sample-every", type=int, default=1)
    p.add_argument("--lyapunov-N", type=float, default=None)
    p.add_argument("--name", default="trace")
    p.add_argument("--workers", type=int, default=1)
    common(p)
    p.set_defaults(func=cmd_simulate)

    p = sub.add_parser("decay-fit", help="exponential fit of a saved trace")
    p.add_argument("--trace", required=True)
    p.add_argument("--drop", type=float, default=0.1)
    common(p)
    p.set_defaults(func=cmd_decay_fit)

    p = sub.add_parser("envelope", help="decay envelope from saved traces")
    p.add_argument("--ensemble", nargs="+", required=True)
    p.add_argument("--compare", nargs="*", default=[])
    p.add_argument("--law", required=True)
    p.add_argument("--T-window", type=float, required=True)
    p.add_argument("--safety", type=float, default=2.0)
    p.add_argument("--workers", type=int, default=1)
    common(p)
    p.set_defaults(func=cmd_envelope)

    p = sub.add_parser("observability", help="stabilization/observability chain")
    p.add_argument("--size", type=int, default=40)
    p.add_argument("--trials", type=int, default=100)
    p.add_argument("--params", default=None,
                   help="bridge a coarse relaxed-flux discretization instead")
    p.add_argument("--grid", default="16")
    common(p)
    p.set_defaults(func=cmd_observability)

    p = sub.add_parser("static-solve", help="stationary solve with manufactured data")
    p.add_argument("--params", required=True)
    p.add_argument("--grid", default="200")
    common(p)
    p.set_defaults(func=cmd_static_solve)
    return ap


def main(argv=None) -> int:
    ap = build_parser()
    try:
        args = ap.parse_args(argv)
    except SystemExit as exc:
        return 2 if exc.code not in (0, None) else 0
    try:
        return args.func(args)
    except FileNotFoundError as exc:
        print(f"missing file: {exc.filename}", file=sys.stderr)
        return 2
    except ConfigError as exc:
        print(f"config error: {exc}", file=sys.stderr)
        return 2
    except GradthermError as exc:
        print(f"error: {exc}", file=sys.stderr)
        return 1


if __name__ == "__main__":
    sys.exit(main())
