"""Command-line entry point: batch simulation, steady solves, verification,
and parameter sweeps.

Exit codes: 0 on success, 1 on solver or invariant failure, 2 on
configuration errors.  All outputs are plain text (snapshots, ledger CSV,
JSON verification reports); every run records its seed and is reproducible
bit for bit on one platform.
"""

from __future__ import annotations

import argparse
import concurrent.futures
import json
import os
import sys

from . import io as pfio
from .config import RunConfig, build_problem, parse_config
from .diagnostics import Ledger
from .errors import ConfigError, SimulationError
from .state import conserved_f
from .steady import SteadyProblem, SteadyState, solve_steady
from .stepper import run as run_stepper
from .verify import run_verify

__all__ = ["main"]


def _parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(
        prog="pfsim",
        description="Conserved phase-field simulator with an enthalpy-coupled "
                    "temperature equation")
    sub = parser.add_subparsers(dest="command", required=True)

    common = argparse.ArgumentParser(add_help=False)
    common.add_argument("--config", required=False, help="path to the run config")
    common.add_argument("--out", default=None, help="output directory")
    common.add_argument("--seed", type=int, default=None,
                        help="override the configured seed")
    common.add_argument("--quiet", action="store_true", help="suppress progress output")

    p_sim = sub.add_parser("simulate", parents=[common],
                           help="time-step a configuration, writing ledger and snapshots")
    p_sim.set_defaults(func=_cmd_simulate)

    p_steady = sub.add_parser("steady", parents=[common],
                              help="solve the constrained stationary problem")
    p_steady.set_defaults(func=_cmd_steady)

    p_verify = sub.add_parser("verify", parents=[common],
                              help="run the invariant suite and report pass/fail")
    p_verify.add_argument("--samples", type=int, default=100,
                          help="iterations for sampled checks (0 = vacuous)")
    p_verify.set_defaults(func=_cmd_verify)

    p_sweep = sub.add_parser("sweep", parents=[common],
                             help="run a grid of configurations concurrently")
    p_sweep.set_defaults(func=_cmd_sweep)
    return parser


def _require_config(args) -> RunConfig:
    if not args.config:
        raise ConfigError("--config is required for this command")
    return parse_config(args.config)


def _out_dir(args, cfg: RunConfig, default: str) -> str:
    out = args.out or cfg.out_dir or default
    pfio.ensure_dir(out)
    return out


def _say(args, message: str):
    if not args.quiet:
        print(message)


def _simulate_into(cfg: RunConfig, out: str, seed: int | None, quiet: bool) -> dict:
    grid, model, state = build_problem(cfg, seed=seed)
    ledger = Ledger()
    snap_every = cfg.snapshot_every
    written = []

    def snap_path(step_idx: int) -> str:
        return os.path.join(out, f"snap_{step_idx:08d}.txt")

    pfio.write_snapshot(snap_path(0), state, 0.0)
    written.append(0)
    counter = {"k": 0}

    def observer(result):
        counter["k"] += 1
        if snap_every > 0 and counter["k"] % snap_every == 0:
            pfio.write_snapshot(snap_path(counter["k"]), result.state, result.t)
            written.append(counter["k"])

    summary = run_stepper(state, cfg.t_end, cfg.stepper, model,
                          observer=observer, ledger=ledger,
                          convergence_tol=cfg.convergence_tol,
                          consecutive=cfg.consecutive)
    if summary.steps not in written:
        pfio.write_snapshot(snap_path(summary.steps), summary.state, summary.t)
    pfio.write_ledger_csv(os.path.join(out, "ledger.csv"), ledger)
    info = {
        "steps": summary.steps,
        "t": summary.t,
        "converged": summary.converged,
        "rows": len(ledger),
    }
    if summary.converged:
        info["mu_spread"] = summary.mu_spread
        info["theta_spread"] = summary.theta_spread
    if not quiet:
        tail = " (converged)" if summary.converged else ""
        print(f"simulate: {summary.steps} steps to t={summary.t:g}{tail}; "
              f"outputs in {out}")
    return info


def _cmd_simulate(args) -> int:
    cfg = _require_config(args)
    out = _out_dir(args, cfg, "out")
    _simulate_into(cfg, out, args.seed, args.quiet)
    return 0


def _cmd_steady(args) -> int:
    cfg = _require_config(args)
    out = _out_dir(args, cfg, "out")
    grid, model, state = build_problem(cfg, seed=args.seed)
    from .grid import mean as grid_mean
    m0 = cfg.steady_m0 if cfg.steady_m0 is not None else grid_mean(state.psi, grid)
    h0 = cfg.steady_h0 if cfg.steady_h0 is not None else conserved_f(state, model)
    problem = SteadyProblem(m0, h0, grid, model)
    guess = None
    if cfg.steady_guess == "initial":
        guess = SteadyState(state.psi.copy(), float(state.theta.mean()), 0.0, 0.0)
    elif cfg.steady_guess != "constant":
        raise ConfigError(f"[steady] guess = {cfg.steady_guess!r}: unknown guess")
    sol = solve_steady(problem, guess, tol=cfg.steady_tol)
    pfio.write_snapshot(os.path.join(out, "steady_snapshot.txt"),
                        sol.as_state(grid), 0.0)
    scalars = [
        ("m0", m0), ("h0", h0), ("theta_inf", sol.theta_inf),
        ("mu_inf", sol.mu_inf), ("residual_norm", sol.residual_norm),
        ("mu_consistency", sol.mu_consistency), ("iterations", sol.iterations),
    ]
    with open(os.path.join(out, "steady_scalars.txt"), "w", newline="\n") as fh:
        for key, value in scalars:
            fh.write(f"{key}={pfio.format_float(value) if isinstance(value, float) else value}\n")
    _say(args, f"steady: theta_inf={sol.theta_inf:.12g} mu_inf={sol.mu_inf:.12g} "
               f"residual={sol.residual_norm:.3g}; outputs in {out}")
    return 0


def _cmd_verify(args) -> int:
    kwargs = {}
    if args.config:
        cfg = parse_config(args.config)
        grid, model, _ = build_problem(cfg, seed=args.seed)
        if grid.dim == 1:
            kwargs["grid1d"] = grid
        else:
            kwargs["grid2d"] = grid
        kwargs["model"] = model
    report = run_verify(samples=args.samples, **kwargs)
    text = json.dumps(report.as_dict(), indent=2)
    if args.out:
        pfio.ensure_dir(args.out)
        with open(os.path.join(args.out, "verify_report.json"), "w") as fh:
            fh.write(text + "\n")
    else:
        print(text)
    if not args.quiet:
        for check in report.checks:
            status = "PASS" if check.passed else "FAIL"
            print(f"{status} {check.name}: measured {check.measured:.3g} "
                  f"vs threshold {check.threshold:.3g}", file=sys.stderr)
        for warning in report.warnings:
            print(f"WARNING {warning}", file=sys.stderr)
    return 0 if report.passed else 1


def _sweep_points(cfg: RunConfig) -> list[dict]:
    if cfg.sweep_mode is None:
        raise ConfigError("[sweep]: mode is required for the sweep command")
    points = []
    if cfg.sweep_mode == "dt":
        if not cfg.sweep_dt_values:
            raise ConfigError("[sweep]: dt sweep needs dt_values")
        for dt in cfg.sweep_dt_values:
            points.append({"dt": dt})
    else:
        if not (cfg.sweep_m0_values and cfg.sweep_h0_values):
            raise ConfigError("[sweep]: constraints sweep needs m0_values and h0_values")
        for m0 in cfg.sweep_m0_values:
            for h0 in cfg.sweep_h0_values:
                points.append({"m0": m0, "h0": h0})
    return points


def _run_sweep_point(payload) -> tuple[int, bool, str]:
    index, config_path, out, seed = payload
    try:
        cfg = parse_config(config_path)
        _simulate_into(cfg, out, seed, quiet=True)
        return index, True, "ok"
    except (ConfigError, SimulationError, ValueError) as err:
        return index, False, str(err)


def _cmd_sweep(args) -> int:
    cfg = _require_config(args)
    out = _out_dir(args, cfg, "sweep_out")
    points = _sweep_points(cfg)
    base_seed = args.seed if args.seed is not None else cfg.seed

    import configparser
    jobs = []
    for i, point in enumerate(points):
        point_dir = os.path.join(out, f"point_{i:03d}")
        pfio.ensure_dir(point_dir)
        parser = configparser.ConfigParser()
        parser.read(args.config)
        parser.remove_section("sweep")
        if "dt" in point:
            if not parser.has_section("stepper"):
                parser.add_section("stepper")
            parser.set("stepper", "dt", pfio.format_float(point["dt"]))
        else:
            if not parser.has_section("initial"):
                parser.add_section("initial")
            parser.set("initial", "psi_mean", pfio.format_float(point["m0"]))
            parser.set("initial", "theta_from_enthalpy",
                       pfio.format_float(point["h0"]))
        if not parser.has_section("initial"):
            parser.add_section("initial")
        parser.set("initial", "seed", str(base_seed + i))
        point_config = os.path.join(point_dir, "config.ini")
        with open(point_config, "w", newline="\n") as fh:
            parser.write(fh)
        jobs.append((i, point_config, point_dir, None))

    workers = cfg.sweep_workers or min(len(jobs), os.cpu_count() or 1)
    results = []
    if workers <= 1 or len(jobs) == 1:
        results = [_run_sweep_point(job) for job in jobs]
    else:
        with concurrent.futures.ProcessPoolExecutor(max_workers=workers) as pool:
            results = list(pool.map(_run_sweep_point, jobs))

    manifest = os.path.join(out, "sweep_manifest.csv")
    ok = True
    with open(manifest, "w", newline="\n") as fh:
        fh.write("point,directory,seed,params,status\n")
        for (i, good, message), point in zip(sorted(results), points):
            ok = ok and good
            params = ";".join(f"{k}={pfio.format_float(v)}" for k, v in point.items())
            status = "ok" if good else f"failed: {message}"
            fh.write(f"{i},point_{i:03d},{base_seed + i},{params},{status}\n")
    _say(args, f"sweep: {len(points)} points, "
               f"{sum(1 for _, good, _ in results if good)} succeeded; "
               f"manifest in {manifest}")
    return 0 if ok else 1


def main(argv=None) -> int:
    args = _parser().parse_args(argv)
    try:
        return args.func(args)
    except ConfigError as err:
        print(f"config error: {err}", file=sys.stderr)
        return 2
    except SimulationError as err:
        print(f"solver error: {err}", file=sys.stderr)
        return 1
    except OSError as err:
        print(f"io error: {err}", file=sys.stderr)
        return 1


if __name__ == "__main__":
    raise SystemExit(main())
