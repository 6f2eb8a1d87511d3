"""Batch command-line front end.

Every output file gets a JSON manifest sidecar (<out>.manifest.json) whose
recorded argv reproduces the file byte-exactly. Exit codes: 0 success,
1 statistical check failed, 2 parameter validation failure, 3 numerical
non-convergence.
"""
from __future__ import annotations

import argparse
import json
import os
import sys
import time
from pathlib import Path

import numpy as np

from . import __version__
from ._backend import backend_name
from .errors import (
    ConstraintViolationError,
    ConvergenceError,
    LodsimError,
    ParameterRegimeError,
    ToleranceError,
)
from .model import DetParams, DiffusionParams, MoranParams, read_param_file
from . import deterministic, diffusion, killed_asg, moran, pruned_ldasg
from .rng import RngStream

_EXIT_OK = 0
_EXIT_STATISTICAL = 1
_EXIT_VALIDATION = 2
_EXIT_NUMERICAL = 3


def _fmt(v: float) -> str:
    return f"{float(v):.12g}"


def _write_csv(path: str, header: list[str], rows) -> None:
    with open(path, "w", newline="\n") as fh:
        fh.write(",".join(header) + "\n")
        for row in rows:
            fh.write(",".join(_fmt(v) if isinstance(v, (int, float, np.floating))
                              else str(v) for v in row) + "\n")


def _write_json(path: str, text: str) -> None:
    with open(path, "w", newline="\n") as fh:
        fh.write(text)
        if not text.endswith("\n"):
            fh.write("\n")


def _write_manifest(out: str, args: argparse.Namespace, argv: list[str],
                    outputs: list[str], t0: float) -> None:
    manifest = {
        "subcommand": args.command,
        "argv": argv,
        "seed": args.seed,
        "replicates": getattr(args, "reps", None),
        "outputs": outputs,
        "tool_version": __version__,
        "backend": backend_name(),
        "duration_s": round(time.monotonic() - t0, 6),
    }
    _write_json(out + ".manifest.json", json.dumps(manifest, indent=2, sort_keys=True))


def _merge_params(args: argparse.Namespace) -> dict:
    merged: dict = {}
    if getattr(args, "params", None):
        merged.update(read_param_file(args.params))
    for key in ("N", "s", "u", "nu0", "nu1", "sigma", "theta"):
        v = getattr(args, key, None)
        if v is not None:
            merged[key] = v
    if getattr(args, "mode", None):
        merged["selection_mode"] = args.mode
    return merged


def _require(merged: dict, *keys: str) -> None:
    missing = [k for k in keys if k not in merged]
    if missing:
        raise ConstraintViolationError(missing[0], "missing required parameter")


def _nu_pair(merged: dict) -> tuple[float, float]:
    if "nu0" in merged and "nu1" not in merged:
        merged["nu1"] = 1.0 - merged["nu0"]
    if "nu1" in merged and "nu0" not in merged:
        merged["nu0"] = 1.0 - merged["nu1"]
    _require(merged, "nu0", "nu1")
    return merged["nu0"], merged["nu1"]


def _det_params(merged: dict) -> DetParams:
    _require(merged, "s", "u")
    nu0, nu1 = _nu_pair(merged)
    return DetParams(s=merged["s"], u=merged["u"], nu0=nu0, nu1=nu1)


def _diff_params(merged: dict) -> DiffusionParams:
    nu0, nu1 = _nu_pair(merged)
    if "sigma" not in merged and {"N", "s"} <= merged.keys():
        merged["sigma"] = merged["N"] * merged["s"]
    if "theta" not in merged and {"N", "u"} <= merged.keys():
        merged["theta"] = merged["N"] * merged["u"]
    _require(merged, "sigma", "theta")
    return DiffusionParams(sigma=merged["sigma"], theta=merged["theta"],
                           nu0=nu0, nu1=nu1)


def _limit_params(args: argparse.Namespace):
    merged = _merge_params(args)
    if args.limit in ("det", "deterministic"):
        return "deterministic", _det_params(merged)
    return "diffusion", _diff_params(merged)


def _parse_grid(spec: str) -> np.ndarray:
    """start:stop:num linear grid."""
    try:
        start, stop, num = spec.split(":")
        return np.linspace(float(start), float(stop), int(num))
    except ValueError as exc:
        raise ConstraintViolationError("grid", f"expected start:stop:num, got {spec!r}") from exc


# ---------------------------------------------------------------------------
# subcommands
# ---------------------------------------------------------------------------

def _cmd_moran(args, argv) -> int:
    t0 = time.monotonic()
    merged = _merge_params(args)
    _require(merged, "N", "s", "u")
    nu0, nu1 = _nu_pair(merged)
    params = MoranParams(N=int(merged["N"]), s=merged["s"], u=merged["u"],
                         nu0=nu0, nu1=nu1,
                         selection_mode=merged.get("selection_mode", "fecundity"))
    if args.x is None:
        raise ConstraintViolationError("x", "initial frequency required")
    rng = RngStream(args.seed)
    gen = rng.generator()
    types0 = moran.sample_initial_types(params.N, args.x, gen)
    stream = moran.generate_event_stream(params, args.t, gen=gen)
    path = moran.propagate_types(stream, types0, params.selection_mode)
    outputs = [args.out]
    with open(args.out, "w", newline="\n") as fh:
        moran.frequency_path_to_csv(path, fh)
    if args.events_out:
        with open(args.events_out, "w", newline="\n") as fh:
            moran.event_stream_to_text(stream, fh)
        outputs.append(args.events_out)
    _write_manifest(args.out, args, argv, outputs, t0)
    return _EXIT_OK


def _cmd_ode(args, argv) -> int:
    t0 = time.monotonic()
    params = _det_params(_merge_params(args))
    if args.x is None:
        raise ConstraintViolationError("x", "initial frequency required")
    grid = np.linspace(0.0, args.t, args.grid_points)
    sol = deterministic.solve_ode(params, args.x, grid)
    _write_csv(args.out, ["time", "z"], zip(sol.t, sol.z))
    _write_manifest(args.out, args, argv, [args.out], t0)
    return _EXIT_OK


def _cmd_equilibrium(args, argv) -> int:
    t0 = time.monotonic()
    merged = _merge_params(args)
    nu0, nu1 = _nu_pair(merged)
    _require(merged, "s")
    if args.grid:
        rows = [(u, z) for u, z in
                deterministic.error_threshold_curve(merged["s"], _parse_grid(args.grid),
                                                    nu0=nu0, nu1=nu1)]
        _write_csv(args.out, ["u", "z_inf"], rows)
    else:
        _require(merged, "u")
        params = DetParams(s=merged["s"], u=merged["u"], nu0=nu0, nu1=nu1)
        z = deterministic.z_infinity(params).value
        _write_csv(args.out, ["s", "u", "nu0", "nu1", "z_inf"],
                   [(params.s, params.u, params.nu0, params.nu1, z)])
    _write_manifest(args.out, args, argv, [args.out], t0)
    return _EXIT_OK


def _cmd_diffusion_moments(args, argv) -> int:
    t0 = time.monotonic()
    params = _diff_params(_merge_params(args))
    mom = diffusion.wright_moments(params, n_max=args.nmax, tol=args.tol)
    _write_csv(args.out, ["n", "m"], enumerate(mom.m))
    print(f"C={mom.C:.12g} mean={mom.mean:.12g} order={mom.quadrature_order}")
    _write_manifest(args.out, args, argv, [args.out], t0)
    return _EXIT_OK


def _cmd_killed_asg(args, argv) -> int:
    t0 = time.monotonic()
    limit, params = _limit_params(args)
    prof = killed_asg.absorption_profile(limit, params, args.n, args.reps,
                                         RngStream(args.seed), threads=args.threads)
    payload = {
        "limit": limit, "n": args.n, "replicates": args.reps,
        "p_zero": prof.p_zero, "p_delta": prof.p_delta,
        "p_diverged": prof.p_diverged,
        "se_zero": prof.se_zero, "se_delta": prof.se_delta,
        "se_diverged": prof.se_diverged, "censored": prof.censored,
    }
    _write_json(args.out, json.dumps(payload, indent=2, sort_keys=True))
    _write_manifest(args.out, args, argv, [args.out], t0)
    return _EXIT_OK


def _cmd_duality(args, argv) -> int:
    t0 = time.monotonic()
    limit, params = _limit_params(args)
    report = killed_asg.duality_check(limit, params, args.x, args.t, args.n,
                                      args.reps, RngStream(args.seed),
                                      threads=args.threads)
    _write_json(args.out, report.to_json())
    _write_manifest(args.out, args, argv, [args.out], t0)
    return _EXIT_OK if report.passed else _EXIT_STATISTICAL


def _cmd_ldasg(args, argv) -> int:
    t0 = time.monotonic()
    limit, params = _limit_params(args)
    tails = pruned_ldasg.stationary_tail_empirical(
        limit, params, samples=args.reps, rng=RngStream(args.seed),
        burn_in=args.burn_in, spacing=args.spacing, n_report=args.nmax)
    _write_csv(args.out, ["n", "a", "se"],
               ((n, tails.a[n], tails.se[n]) for n in range(len(tails.a))))
    outputs = [args.out]
    code = _EXIT_OK
    if args.gof:
        if limit != "deterministic":
            raise ParameterRegimeError("--gof tests the deterministic geometric law")
        p = pruned_ldasg.geometric_parameter(params.s, params.u, params.nu0, params.nu1)
        # resample the chain for the raw values the GOF needs
        from ._backend import kernels
        from ._pykernels import L_DET
        burn = args.burn_in if args.burn_in is not None else (
            100.0 / params.s if params.s > 0 else 0.0)
        _, vals = kernels.linecount_stationary_sample(
            L_DET, params.s, params.u, params.nu0, params.nu1, 1, burn,
            args.reps, args.spacing, 100_000_000, 10_000,
            RngStream(args.seed).generator())
        stat, pvalue = pruned_ldasg.geometric_gof(vals, p)
        gof_path = args.out + ".gof.json"
        _write_json(gof_path, json.dumps(
            {"p": p, "statistic": stat, "pvalue": pvalue,
             "pass": bool(pvalue > args.gof_alpha)}, indent=2, sort_keys=True))
        outputs.append(gof_path)
        if pvalue <= args.gof_alpha:
            code = _EXIT_STATISTICAL
    _write_manifest(args.out, args, argv, outputs, t0)
    return code


def _cmd_fearnhead(args, argv) -> int:
    t0 = time.monotonic()
    merged = _merge_params(args)
    nu0, nu1 = _nu_pair(merged)
    _require(merged, "sigma", "theta")
    tails = pruned_ldasg.fearnhead_solve(merged["sigma"], merged["theta"], nu1,
                                         n_max=args.nmax, tol=args.tol)
    upto = min(args.nmax, len(tails.a) - 1)
    _write_csv(args.out, ["n", "a"], ((n, tails.a[n]) for n in range(upto + 1)))
    _write_manifest(args.out, args, argv, [args.out], t0)
    return _EXIT_OK


def _cmd_ancestral(args, argv) -> int:
    t0 = time.monotonic()
    limit, params = _limit_params(args)
    if args.x_rule == "fixed":
        if args.x is None:
            raise ConstraintViolationError("x", "x_rule 'fixed' needs --x")
        xv = args.x
    elif args.x_rule == "zinf":
        merged = _merge_params(args)
        nu0, nu1 = _nu_pair(merged)
        _require(merged, "s", "u")
        xv = deterministic.z_infinity(
            DetParams(s=merged["s"], u=merged["u"], nu0=nu0, nu1=nu1)).value
    else:  # wright
        if limit != "diffusion":
            raise ParameterRegimeError("x_rule 'wright' needs --limit diffusion")
        tails = pruned_ldasg.fearnhead_solve(params.sigma, params.theta, params.nu1)
        h = diffusion.wright_expectation(
            params, lambda xs: pruned_ldasg._h_series(tails.a, xs))
        _write_json(args.out, json.dumps({"limit": limit, "x_rule": "wright",
                                          "h": h}, indent=2, sort_keys=True))
        _write_manifest(args.out, args, argv, [args.out], t0)
        return _EXIT_OK
    res = pruned_ldasg.ancestral_h(limit, params, xv)
    _write_json(args.out, json.dumps(
        {"limit": res.limit, "x": res.x, "h": res.h,
         "tail_bound": res.tail_bound}, indent=2, sort_keys=True))
    _write_manifest(args.out, args, argv, [args.out], t0)
    return _EXIT_OK


def _cmd_phase_diagram(args, argv) -> int:
    t0 = time.monotonic()
    merged = _merge_params(args)
    _require(merged, "s")
    nu0, nu1 = _nu_pair(merged)
    s = merged["s"]
    u_grid = _parse_grid(args.grid)
    rows: list[tuple] = []
    if args.figure == "fig2-left":
        for u, z in deterministic.error_threshold_curve(s, u_grid, nu0=nu0, nu1=nu1):
            rows.append((u, "deterministic", z))
    elif args.figure == "fig8-left":
        for u, h in pruned_ldasg.ancestral_scan("deterministic", s, u_grid,
                                                nu0, nu1, x_rule="zinf"):
            rows.append((u, "deterministic", h))
    else:
        if not args.N_list:
            raise ConstraintViolationError("N", "diffusion panels need --N")
        Ns = [float(v) for v in args.N_list.split(",")]
        for u in u_grid:
            u = float(u)
            det_params = DetParams(s=s, u=u, nu0=nu0, nu1=nu1)
            if args.figure == "fig2-right":
                rows.append((u, "deterministic", deterministic.z_infinity(det_params).value))
            else:
                rows.append((u, "deterministic",
                             pruned_ldasg.ancestral_h(
                                 "deterministic", det_params,
                                 deterministic.z_infinity(det_params).value).h))
            for N in Ns:
                dpar = DiffusionParams(sigma=N * s, theta=N * u, nu0=nu0, nu1=nu1)
                label = f"N={N:g}"
                if args.figure == "fig2-right":
                    value = diffusion.wright_moments(dpar, n_max=1).mean
                else:
                    tails = pruned_ldasg.fearnhead_solve(dpar.sigma, dpar.theta, nu1)
                    value = diffusion.wright_expectation(
                        dpar, lambda xs: pruned_ldasg._h_series(tails.a, xs))
                rows.append((u, label, value))
    _write_csv(args.out, ["u", "curve", "value"], rows)
    _write_manifest(args.out, args, argv, [args.out], t0)
    return _EXIT_OK


# ---------------------------------------------------------------------------
# parser
# ---------------------------------------------------------------------------

def _add_param_flags(p: argparse.ArgumentParser, *, with_N: bool = False) -> None:
    p.add_argument("--params", help="key=value parameter file")
    if with_N:
        p.add_argument("--N", type=int)
    p.add_argument("--s", type=float)
    p.add_argument("--u", type=float)
    p.add_argument("--nu0", type=float)
    p.add_argument("--nu1", type=float)
    p.add_argument("--sigma", type=float)
    p.add_argument("--theta", type=float)


def _add_common(p: argparse.ArgumentParser) -> None:
    p.add_argument("--seed", type=int, default=None,
                   help="master seed (falls back to LOD_SEED, then 0)")
    p.add_argument("--threads", type=int, default=os.cpu_count() or 1)
    p.add_argument("--out", required=True, help="output file")


def build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(
        prog="lodsim",
        description="Two-type mutation-selection models: simulation and numerics")
    parser.add_argument("--version", action="version", version=f"lodsim {__version__}")
    sub = parser.add_subparsers(dest="command", required=True)

    p = sub.add_parser("moran", help="finite-N Moran frequency path")
    _add_param_flags(p, with_N=True)
    _add_common(p)
    p.add_argument("--x", type=float, help="initial type-0 frequency")
    p.add_argument("--t", type=float, required=True, help="time horizon")
    p.add_argument("--mode", choices=["fecundity", "viability"])
    p.add_argument("--events-out", help="also dump the untyped event stream")
    p.set_defaults(fn=_cmd_moran)

    p = sub.add_parser("ode", help="deterministic-limit solution z(t)")
    _add_param_flags(p)
    _add_common(p)
    p.add_argument("--x", type=float, required=True)
    p.add_argument("--t", type=float, required=True)
    p.add_argument("--grid-points", type=int, default=201)
    p.set_defaults(fn=_cmd_ode)

    p = sub.add_parser("equilibrium", help="stationary frequency z_inf")
    _add_param_flags(p)
    _add_common(p)
    p.add_argument("--grid", help="u grid start:stop:num (otherwise single --u)")
    p.set_defaults(fn=_cmd_equilibrium)

    p = sub.add_parser("diffusion-moments", help="stationary moments E[(1-X)^n]")
    _add_param_flags(p, with_N=True)
    _add_common(p)
    p.add_argument("--nmax", type=int, default=20)
    p.add_argument("--tol", type=float, default=1e-8)
    p.set_defaults(fn=_cmd_diffusion_moments)

    p = sub.add_parser("killed-asg", help="absorption profile of the killed ASG")
    _add_param_flags(p, with_N=True)
    _add_common(p)
    p.add_argument("--limit", choices=["det", "deterministic", "diff", "diffusion"],
                   required=True)
    p.add_argument("--n", type=int, default=1, help="initial number of lines")
    p.add_argument("--reps", type=int, default=100_000)
    p.set_defaults(fn=_cmd_killed_asg)

    p = sub.add_parser("duality", help="forward/backward moment-duality check")
    _add_param_flags(p, with_N=True)
    _add_common(p)
    p.add_argument("--limit", choices=["det", "deterministic", "diff", "diffusion"],
                   required=True)
    p.add_argument("--x", type=float, required=True)
    p.add_argument("--t", type=float, required=True)
    p.add_argument("--n", type=int, default=1)
    p.add_argument("--reps", type=int, default=100_000)
    p.set_defaults(fn=_cmd_duality)

    p = sub.add_parser("ldasg", help="stationary line-count tails (empirical)")
    _add_param_flags(p, with_N=True)
    _add_common(p)
    p.add_argument("--limit", choices=["det", "deterministic", "diff", "diffusion"],
                   required=True)
    p.add_argument("--reps", type=int, default=100_000, help="number of samples")
    p.add_argument("--burn-in", type=float, default=None)
    p.add_argument("--spacing", type=float, default=4.0,
                   help="mean exponential gap between samples (decorrelation)")
    p.add_argument("--nmax", type=int, default=20, help="largest reported tail index")
    p.add_argument("--gof", action="store_true",
                   help="chi-square fit against the geometric law (deterministic)")
    p.add_argument("--gof-alpha", type=float, default=0.001)
    p.set_defaults(fn=_cmd_ldasg)

    p = sub.add_parser("fearnhead", help="stationary tails from the recursion")
    _add_param_flags(p)
    _add_common(p)
    p.add_argument("--nmax", type=int, default=64)
    p.add_argument("--tol", type=float, default=1e-12)
    p.set_defaults(fn=_cmd_fearnhead)

    p = sub.add_parser("ancestral", help="ancestral type distribution h")
    _add_param_flags(p, with_N=True)
    _add_common(p)
    p.add_argument("--limit", choices=["det", "deterministic", "diff", "diffusion"],
                   required=True)
    p.add_argument("--x", type=float)
    p.add_argument("--x-rule", choices=["fixed", "zinf", "wright"], default="fixed")
    p.set_defaults(fn=_cmd_ancestral)

    p = sub.add_parser("phase-diagram", help="stationary-curve data for the figures")
    _add_param_flags(p)
    _add_common(p)
    p.add_argument("--figure", choices=["fig2-left", "fig2-right",
                                        "fig8-left", "fig8-right"], required=True)
    p.add_argument("--grid", required=True, help="u grid start:stop:num")
    p.add_argument("--N", dest="N_list", help="comma-separated population sizes")
    p.set_defaults(fn=_cmd_phase_diagram)

    return parser


def run(argv: list[str]) -> int:
    """Parse and execute; returns the exit code (see module docstring)."""
    parser = build_parser()
    args = parser.parse_args(argv)
    if args.seed is None:
        args.seed = int(os.environ.get("LOD_SEED", "0"))
    if getattr(args, "out", None):
        Path(args.out).parent.mkdir(parents=True, exist_ok=True)
    try:
        return args.fn(args, list(argv))
    except (ConstraintViolationError, ParameterRegimeError) as exc:
        print(f"error: {exc}", file=sys.stderr)
        return _EXIT_VALIDATION
    except (ConvergenceError, ToleranceError) as exc:
        print(f"error: {exc}", file=sys.stderr)
        return _EXIT_NUMERICAL
    except LodsimError as exc:
        print(f"error: {exc}", file=sys.stderr)
        return _EXIT_VALIDATION


def main() -> None:
    sys.exit(run(sys.argv[1:]))


if __name__ == "__main__":
    main()
