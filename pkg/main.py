#!/usr/bin/env python3
"""Command-line front end of the SAIRS control toolkit.

Usage:
    python main.py thresholds --config configs/example1.json
    python main.py simulate   --config configs/example1.json --seed 7 --sweep b=0.1,0.2,0.3
    python main.py ensemble   --config configs/example4.json --trajectories 100
    python main.py stationary --config configs/example5.json
    python main.py control    --config configs/example6.json --mode paper
    python main.py verify     [--quick]

Results go to stdout and to files under the output directory; logs go to
stderr and the log file.
"""

from __future__ import annotations

import argparse
import sys
from typing import Dict, List, Optional, Tuple

from analysis import extinction_summary, histogram_distance, persistence_check, stationary_histogram
from config import (
    APP_NAME,
    APP_VERSION,
    DEFAULT_OUTPUT_DIR,
    EXIT_OK,
    EXIT_RUNTIME_ERROR,
    EXIT_VALIDATION_ERROR,
    EXIT_VERIFY_FAILED,
    PROJECTION_MODES,
)
from control import compare_controlled, forward_backward_sweep, objective_estimate
from errors import ConfigError, DomainError, PreconditionError, SimulationError
from integrator import (
    ControlGrid,
    NoiseStream,
    run_ensemble,
    simulate_batch,
    simulate_deterministic,
    simulate_trajectory,
    sweep_parameter,
)
from logger import logger as app_logger
from model import COMPARTMENTS, ModelParams
from report_writer import (
    ReportWriter,
    comparison_table,
    controls_table,
    ensemble_table,
    histogram_table,
    trajectory_table,
)
from run_config import COMMANDS, RunConfig, apply_overrides, load_config, validate_for_command
from thresholds import ThresholdReport, compute_thresholds
from verify_examples import ExampleSuite, format_results

SWEEPABLE = ("b", "d", "sigma", "lambda", "beta_A", "beta_I", "mu", "gamma", "delta_A", "delta_I", "alpha")


def parse_sweep(text: str) -> Tuple[str, List[float]]:
    """Parse ``NAME=v1,v2,...``."""
    name, sep, values = text.partition("=")
    name = name.strip()
    if not sep or name not in SWEEPABLE:
        raise ConfigError("--sweep", f"expected NAME=v1,v2,... with NAME in {list(SWEEPABLE)}, got {text!r}")
    try:
        parsed = [float(v) for v in values.split(",") if v.strip()]
    except ValueError as exc:
        raise ConfigError("--sweep", f"malformed value list {values!r}") from exc
    if not parsed:
        raise ConfigError("--sweep", "no values given")
    return name, parsed


def format_thresholds(report: ThresholdReport) -> str:
    lines = [
        "=" * 60,
        "SAIRS THRESHOLDS",
        "=" * 60,
        "",
        f"m (rate sum):          {report.m_const:.6g}",
        f"R0s:                   {report.r0s:.6g}",
        f"beta min / max:        {report.beta_min:.6g} / {report.beta_max:.6g}",
        f"h:                     {report.h_const:.6g}",
        f"extinction_index:      {report.extinction_index:.7g}",
        "",
    ]
    if report.persistence_bounds is not None:
        lines.append("Persistence lower bounds on time averages:")
        for name, bound in zip(COMPARTMENTS, report.persistence_bounds):
            lines.append(f"  <{name}> > {bound:.6g}")
        lines.append("")
    lines.extend(
        [
            "=" * 60,
            f"{'✓' if report.persistent else '✗'} persistent in mean (R0s > 1)",
            f"{'✓' if report.extinct else '✗'} extinction predicted (index < 0)",
            "=" * 60,
        ]
    )
    return "\n".join(lines)


# ============================================================================
# Commands
# ============================================================================


def cmd_thresholds(config: RunConfig, writer: ReportWriter) -> int:
    report = compute_thresholds(config.model)
    print(format_thresholds(report))
    writer.write_json("thresholds.json", report.to_dict())
    return EXIT_OK


def cmd_simulate(
    config: RunConfig,
    writer: ReportWriter,
    sweep: Optional[str] = None,
    deterministic: bool = False,
) -> int:
    noise = NoiseStream(config.ensemble.master_seed, 0)
    if deterministic:
        traj = simulate_deterministic(config.init, config.model, config.grid, config.record_every)
        writer.write_table("trajectory_deterministic.csv", trajectory_table(traj))
    if sweep is None:
        traj = simulate_trajectory(config.init, config.model, config.grid, noise, record_every=config.record_every)
        writer.write_table("trajectory.csv", trajectory_table(traj))
        return EXIT_OK

    name, values = parse_sweep(sweep)
    results = sweep_parameter(config.init, config.model, config.grid, name, values, noise, config.record_every)
    for value, traj in results.items():
        writer.write_table(f"trajectory_{name}_{value:g}.csv", trajectory_table(traj))
    return EXIT_OK


def _ensemble_reports(config: RunConfig, ensemble) -> Dict[str, dict]:
    params: ModelParams = config.model
    payload: Dict[str, dict] = {
        "n_traj": ensemble.n_traj,
        "master_seed": ensemble.master_seed,
        "truncation_events": int(ensemble.truncation_events.sum()),
        "mean_time_averages": dict(zip(COMPARTMENTS, ensemble.mean_time_averages.tolist())),
    }
    if params.mu <= 0:
        return payload
    thresholds = compute_thresholds(params)
    payload["thresholds"] = thresholds.to_dict()
    if thresholds.persistent:
        payload["persistence"] = persistence_check(ensemble, params).to_dict()
    if thresholds.extinct:
        analysis = config.analysis.resolved(config.grid)
        summary = extinction_summary(ensemble, params, analysis.fit_window, analysis.extinction_tolerance)
        payload["extinction"] = summary.to_dict()
    return payload


def cmd_ensemble(config: RunConfig, writer: ReportWriter) -> int:
    ensemble = run_ensemble(
        config.init,
        config.model,
        config.grid,
        config.ensemble.n_traj,
        config.ensemble.master_seed,
        record_every=config.record_every if config.record_every > 1 else None,
        workers=config.ensemble.workers,
    )
    writer.write_table("ensemble.csv", ensemble_table(ensemble))
    writer.write_json("ensemble_report.json", _ensemble_reports(config, ensemble))
    return EXIT_OK


def cmd_stationary(config: RunConfig, writer: ReportWriter, component: str = "I") -> int:
    analysis = config.analysis.resolved(config.grid)
    seeds = (config.ensemble.master_seed, config.ensemble.master_seed + 1)
    trajectories = simulate_batch(
        config.init,
        config.model,
        config.grid,
        [NoiseStream(seed) for seed in seeds],
        record_every=config.record_every,
    )
    histograms = [stationary_histogram(t, analysis.burn_in, analysis.n_bins, component) for t in trajectories]
    for seed, histogram in zip(seeds, histograms):
        writer.write_table(f"histogram_{component}_seed{seed}.csv", histogram_table(histogram))
    distance = histogram_distance(*histograms)
    print(f"total-variation distance ({component}, seeds {seeds[0]} and {seeds[1]}): {distance:.6g}")
    writer.write_json(
        "stationary.json",
        {
            "component": component,
            "seeds": list(seeds),
            "burn_in": analysis.burn_in,
            "n_bins": analysis.n_bins,
            "n_samples": [h.n_samples for h in histograms],
            "degenerate": [h.degenerate for h in histograms],
            "total_variation": distance,
        },
    )
    return EXIT_OK


def cmd_control(config: RunConfig, writer: ReportWriter) -> int:
    settings = config.control
    controls, report = forward_backward_sweep(
        config.init, config.model, settings.weights, config.grid, settings.sweep
    )
    writer.write_table("controls.csv", controls_table(controls))

    n_traj, seed, workers = config.ensemble.n_traj, config.ensemble.master_seed, config.ensemble.workers
    comparison = compare_controlled(
        config.init, config.model, config.grid, controls, n_traj, seed, workers=workers,
        record_every=config.record_every if config.record_every > 1 else None,
    )
    writer.write_table("comparison.csv", comparison_table(comparison))

    controlled = objective_estimate(config.init, config.model, settings.weights, controls, n_traj, seed, workers)
    uncontrolled = objective_estimate(
        config.init, config.model, settings.weights, ControlGrid.constant(config.grid), n_traj, seed, workers
    )
    payload = report.to_dict()
    payload["objective"] = {
        "controlled": {"mean": controlled.mean, "std_error": controlled.std_error},
        "uncontrolled": {"mean": uncontrolled.mean, "std_error": uncontrolled.std_error},
        "n_traj": n_traj,
    }
    payload["terminal_ratio"] = {c: comparison.terminal_ratio(c) for c in COMPARTMENTS}
    writer.write_json("sweep_report.json", payload)

    print(
        f"sweep {'converged' if report.converged else 'did NOT converge'} after {report.iterations} "
        f"iteration(s); J controlled {controlled.mean:.6g} +/- {controlled.std_error:.2g}, "
        f"uncontrolled {uncontrolled.mean:.6g} +/- {uncontrolled.std_error:.2g}"
    )
    return EXIT_OK


def cmd_verify(writer: ReportWriter, quick: bool = False, workers: int = 1) -> int:
    results = ExampleSuite(quick=quick, workers=workers).run()
    print(format_results(results))
    writer.write_json(
        "verify.json",
        {
            "quick": quick,
            "criteria": [
                {
                    "number": r.number,
                    "name": r.name,
                    "measured": r.measured,
                    "threshold": r.threshold,
                    "passed": r.passed,
                    "deviation": r.deviation or None,
                }
                for r in results
            ],
        },
    )
    return EXIT_OK if all(r.accepted for r in results) else EXIT_VERIFY_FAILED


def run_command(command: str, config: Optional[RunConfig], writer: ReportWriter, args=None) -> int:
    """Dispatch one command; raises toolkit errors for ``main`` to map onto exit codes."""
    if command == "verify":
        return cmd_verify(writer, quick=bool(getattr(args, "quick", False)), workers=getattr(args, "workers", None) or 1)
    validate_for_command(config, command)
    if command == "thresholds":
        return cmd_thresholds(config, writer)
    if command == "simulate":
        return cmd_simulate(
            config,
            writer,
            sweep=getattr(args, "sweep", None),
            deterministic=bool(getattr(args, "deterministic", False)),
        )
    if command == "ensemble":
        return cmd_ensemble(config, writer)
    if command == "stationary":
        return cmd_stationary(config, writer, component=getattr(args, "component", "I"))
    if command == "control":
        return cmd_control(config, writer)
    raise ConfigError("command", f"unknown command {command!r}")


# ============================================================================
# Entry point
# ============================================================================


def build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(
        prog=APP_NAME,
        description="Simulation, threshold analysis and optimal control of a stochastic SAIRS epidemic model",
    )
    parser.add_argument("command", choices=COMMANDS, help="What to run")
    parser.add_argument("--config", type=str, help="Path to a JSON run config (required except for verify)")
    parser.add_argument("--seed", type=int, help="Override ensemble.master_seed")
    parser.add_argument("--trajectories", type=int, help="Override ensemble.n_traj")
    parser.add_argument("--t-end", type=float, dest="t_end", help="Override grid.t_end")
    parser.add_argument("--dt", type=float, help="Override grid.dt")
    parser.add_argument("--out", type=str, help="Override output_dir")
    parser.add_argument("--mode", choices=PROJECTION_MODES, help="Override control.sweep.mode")
    parser.add_argument("--workers", type=int, help="Override ensemble.workers (threads)")
    parser.add_argument("--sweep", type=str, help="simulate: NAME=v1,v2,... one trajectory per value")
    parser.add_argument("--deterministic", action="store_true", help="simulate: also write the RK4 reference path")
    parser.add_argument("--component", choices=COMPARTMENTS, default="I", help="stationary: compartment to histogram")
    parser.add_argument("--quick", action="store_true", help="verify: reduced ensemble sizes")
    parser.add_argument("--version", action="version", version=f"%(prog)s {APP_VERSION}")
    return parser


def main(argv: Optional[List[str]] = None) -> int:
    parser = build_parser()
    args = parser.parse_args(argv)

    if args.command != "verify" and not args.config:
        parser.error("--config is required for the %s command" % args.command)

    writer = ReportWriter(app_logger, args.out or DEFAULT_OUTPUT_DIR)
    try:
        config = None
        if args.config:
            config = apply_overrides(
                load_config(args.config),
                seed=args.seed,
                trajectories=args.trajectories,
                t_end=args.t_end,
                dt=args.dt,
                out=args.out,
                mode=args.mode,
                workers=args.workers,
            )
            writer = ReportWriter(app_logger, config.output_dir)
        app_logger.info("%s %s: %s", APP_NAME, APP_VERSION, args.command)
        return run_command(args.command, config, writer, args)
    except (ConfigError, DomainError, PreconditionError) as exc:
        writer.abort()
        app_logger.error("Invalid input: %s", exc)
        print(f"ERROR: {exc}", file=sys.stderr)
        return EXIT_VALIDATION_ERROR
    except (SimulationError, OSError) as exc:
        writer.abort()
        app_logger.error("Run failed: %s", exc)
        print(f"ERROR: {exc}", file=sys.stderr)
        return EXIT_RUNTIME_ERROR


if __name__ == "__main__":
    sys.exit(main())
