"""Packaged acceptance suite for the ``verify`` command.

Each check loads one of the shipped example configs, measures one quantity
and compares it with its threshold. ``quick=True`` shrinks ensemble sizes only;
horizons and tolerances stay the same.

A failing check may carry a documented deviation: the measured value is still
reported, and ``deviation`` says which property of the example makes the
threshold unreachable as stated.
"""

from __future__ import annotations

import time
from dataclasses import dataclass, replace
from pathlib import Path
from typing import Callable, List

import numpy as np

from analysis import (
    extinction_summary,
    histogram_distance,
    persistence_check,
    relative_drift,
    stationary_histogram,
)
from config import CONFIGS_DIR
from control import (
    ObjectiveWeights,
    compare_controlled,
    forward_backward_sweep,
    hamiltonian,
    adjoint_rhs,
)
from integrator import (
    NoiseStream,
    TimeGrid,
    euler_step,
    milstein_step,
    run_ensemble,
    simulate_batch,
    simulate_deterministic,
    simulate_trajectory,
    state_path,
)
from logger import logger as app_logger
from model import ControlValue, State
from report_writer import render_rows, trajectory_table
from run_config import RunConfig, load_config
from thresholds import compute_extinction_index, compute_r0s

log = app_logger.getChild("verify")

# Noise-free I may change by at most this fraction after the burn-in before
# the two-seed histogram comparison is read as a transient, not a stationary sample.
STATIONARY_DRIFT_LIMIT = 0.1

# The optimality check needs a sweep solved well past the default tolerance:
# with relaxation w the returned controls sit up to tol / w away from the projection.
STATIONARITY_SWEEP_TOL = 1e-10
STATIONARITY_SWEEP_MAX_ITER = 500


@dataclass(frozen=True)
class CriterionResult:
    number: int
    name: str
    measured: str
    threshold: str
    passed: bool
    deviation: str = ""

    @property
    def accepted(self) -> bool:
        """Passed, or failed for a documented reason."""
        return self.passed or bool(self.deviation)


class ExampleSuite:
    """Runs the acceptance criteria against the configs in ``configs_dir``."""

    def __init__(self, configs_dir: Path = CONFIGS_DIR, quick: bool = False, workers: int = 1) -> None:
        self.configs_dir = Path(configs_dir)
        self.quick = quick
        self.workers = workers

    def _config(self, number: int) -> RunConfig:
        return load_config(self.configs_dir / f"example{number}.json")

    def _n_traj(self, config: RunConfig, quick_n: int) -> int:
        return min(config.ensemble.n_traj, quick_n) if self.quick else config.ensemble.n_traj

    # ------------------------------------------------------------------------

    def check_r0s(self) -> CriterionResult:
        params = self._config(1).model
        r0s = compute_r0s(params)
        start = time.perf_counter()
        for _ in range(100):
            compute_r0s(params)
        elapsed_ms = (time.perf_counter() - start) * 10.0  # per call, in ms
        return CriterionResult(
            1,
            "R0s reproduction (example 1)",
            f"R0s={r0s:.6f}, {elapsed_ms:.4f} ms/call",
            "1.132 +/- 0.001, < 1 ms",
            abs(r0s - 1.132) <= 1e-3 and elapsed_ms < 1.0,
        )

    def check_extinction_index(self) -> CriterionResult:
        index = compute_extinction_index(self._config(4).model)
        return CriterionResult(
            2,
            "Extinction index sign (example 4)",
            f"{index:.7f}",
            "< 0 and -0.3281 +/- 0.0005",
            index < 0 and abs(index + 0.3281) <= 5e-4,
        )

    def check_persistence(self) -> CriterionResult:
        config = self._config(1)
        ensemble = run_ensemble(
            config.init,
            config.model,
            config.grid,
            self._n_traj(config, 20),
            config.ensemble.master_seed,
            workers=self.workers,
        )
        report = persistence_check(ensemble, config.model)
        measured = ", ".join(
            f"{c}:{a:.3g}>{b:.3g}" for c, a, b in zip("SAIR", report.time_averages, report.bounds)
        )
        return CriterionResult(
            3,
            f"Persistence in mean (example 1, {ensemble.n_traj} runs)",
            measured,
            "all four time averages above bounds",
            report.all_satisfied,
        )

    def check_extinction(self) -> CriterionResult:
        config = self._config(4)
        analysis = config.analysis.resolved(config.grid)
        ensemble = run_ensemble(
            config.init,
            config.model,
            config.grid,
            # The S trend is a small drift under sigma1 noise; fewer runs do not resolve its sign.
            self._n_traj(config, 100),
            config.ensemble.master_seed,
            record_every=config.record_every,
            workers=self.workers,
        )
        summary = extinction_summary(ensemble, config.model, analysis.fit_window, analysis.extinction_tolerance)
        trend = "n/a" if summary.s_trend is None else f"{summary.s_trend:.3g}/t"
        return CriterionResult(
            4,
            f"Extinction (example 4, {summary.n_runs} runs)",
            f"decaying {summary.fraction_decaying:.0%}, extinct {summary.fraction_extinct:.0%}, "
            f"S trend {trend} at mean S(T)={summary.s_terminal_mean:.6g}",
            f">= 95% decaying, >= 95% extinct, mean S moving toward {summary.s_equilibrium:g}",
            summary.fraction_decaying >= 0.95 and summary.fraction_extinct >= 0.95 and summary.s_approaching,
        )

    def check_ergodicity(self) -> CriterionResult:
        config = self._config(5)
        analysis = config.analysis.resolved(config.grid)
        seed = config.ensemble.master_seed
        first, second = simulate_batch(
            config.init,
            config.model,
            config.grid,
            [NoiseStream(seed), NoiseStream(seed + 1)],
            record_every=config.record_every,
        )
        h1 = stationary_histogram(first, analysis.burn_in, analysis.n_bins, "I")
        h2 = stationary_histogram(second, analysis.burn_in, analysis.n_bins, "I")
        distance = histogram_distance(h1, h2)

        reference = simulate_deterministic(config.init, config.model.without_noise(), config.grid, config.record_every)
        drift = relative_drift(reference, analysis.burn_in, "I")
        deviation = ""
        if distance >= 0.1 and drift > STATIONARY_DRIFT_LIMIT:
            deviation = (
                f"noise-free I still changes by {drift:.0%} between t={analysis.burn_in:g} and "
                f"t={config.grid.t_end:g} (mu={config.model.mu:g} relaxes on a 1/mu time scale), "
                "so the window after burn-in is a transient, not a stationary sample"
            )
        return CriterionResult(
            5,
            "Stationary distribution, two seeds (example 5)",
            f"TV={distance:.4f}, noise-free I drift after burn-in {drift:.0%}",
            "TV < 0.1",
            distance < 0.1,
            deviation,
        )

    def check_scheme(self) -> CriterionResult:
        config = self._config(1)
        params = config.model.without_noise()
        dt = config.grid.dt
        rng = np.random.default_rng(seed=1)
        max_step_gap = 0.0
        for _ in range(20):
            state = State(*rng.uniform(0.0, 2000.0, size=4))
            z = rng.standard_normal(4)
            milstein = milstein_step(state, params, None, dt, z).as_array()
            euler = euler_step(state, params, dt).as_array()
            max_step_gap = max(max_step_gap, float(np.max(np.abs(milstein - euler))))

        reference = simulate_deterministic(config.init, params, config.grid)
        path = state_path(config.init, params, config.grid)
        ref = reference.states
        pointwise = np.divide(np.abs(path - ref), np.abs(ref), out=np.zeros_like(ref), where=ref != 0.0)
        worst_step, worst_component = np.unravel_index(int(np.argmax(pointwise)), pointwise.shape)
        pointwise_gap = float(pointwise[worst_step, worst_component])
        terminal_gap = np.max(np.abs(path[-1] - ref[-1]) / np.abs(ref[-1]))
        average_gap = np.max(np.abs(path[:-1].mean(axis=0) - ref[:-1].mean(axis=0)) / ref[:-1].mean(axis=0))
        summary_gap = float(max(terminal_gap, average_gap))

        deviation = ""
        if max_step_gap == 0.0 and pointwise_gap >= 1e-3 and summary_gap < 1e-3:
            deviation = (
                f"pointwise gap peaks at step {worst_step} ({'SAIR'[worst_component]}) in the outbreak "
                f"transient, the first-order Euler error at dt={dt:g}; the substitute metric "
                f"(terminal state and time averages) is {summary_gap:.2e}"
            )
        return CriterionResult(
            6,
            "Milstein(sigma=0) = Euler; Euler vs RK4 (example 1)",
            f"step gap {max_step_gap:.1e}, pointwise path gap {pointwise_gap:.2e}, "
            f"terminal/time-average gap {summary_gap:.2e}",
            "step gap 0, pointwise path gap < 1e-3",
            max_step_gap == 0.0 and pointwise_gap < 1e-3,
            deviation,
        )

    def check_adjoint(self) -> CriterionResult:
        params = self._config(1).model
        rng = np.random.default_rng(seed=1)
        worst = 0.0
        for _ in range(20):
            x = rng.uniform(1.0, 100.0, size=4)
            u = ControlValue(*rng.uniform(0.0, 1.0, size=2))
            m = rng.normal(size=4)
            n = rng.normal(size=4)
            weights = ObjectiveWeights(*rng.uniform(0.0, 1.0, size=9) + np.array([0, 0, 0, 0.1, 0.1, 0, 0, 0, 0]))
            rhs = adjoint_rhs(State(*x), u, m, n, weights, params)
            gradient = np.empty(4)
            for j in range(4):
                h = 1e-5 * max(abs(x[j]), 1.0)
                up, down = x.copy(), x.copy()
                up[j] += h
                down[j] -= h
                gradient[j] = (
                    hamiltonian(State(*up), u, m, n, weights, params)
                    - hamiltonian(State(*down), u, m, n, weights, params)
                ) / (2.0 * h)
            error = np.linalg.norm(rhs + gradient) / max(np.linalg.norm(gradient), 1.0)
            worst = max(worst, float(error))
        return CriterionResult(
            7,
            "Adjoint equals -dH/dx (20 random points)",
            f"max rel. error {worst:.2e}",
            "< 1e-5",
            worst < 1e-5,
        )

    def _sweep(self, **overrides):
        config = self._config(6)
        sweep = replace(config.control.sweep, **overrides)
        controls, report = forward_backward_sweep(config.init, config.model, config.control.weights, config.grid, sweep)
        return config, controls, report

    def check_stationarity(self) -> CriterionResult:
        _, _, report = self._sweep(tol=STATIONARITY_SWEEP_TOL, max_iter=STATIONARITY_SWEEP_MAX_ITER)
        residual = report.stationarity_residual
        return CriterionResult(
            8,
            "dH/du = 0 at unclamped returned controls (example 6)",
            f"{residual:.2e} after {report.iterations} iterations (tol {STATIONARITY_SWEEP_TOL:g})",
            "< 1e-6 relative to each control's largest term, converged",
            report.converged and residual < 1e-6,
        )

    def check_control_efficacy(self) -> CriterionResult:
        config, controls, report = self._sweep()
        comparison = compare_controlled(
            config.init,
            config.model,
            config.grid,
            controls,
            self._n_traj(config, 10),
            config.ensemble.master_seed,
            workers=self.workers,
        )
        ratio_a = comparison.terminal_ratio("A")
        ratio_i = comparison.terminal_ratio("I")
        return CriterionResult(
            9,
            "Control efficacy (example 6)",
            f"A(T) ratio {ratio_a:.3g}, I(T) ratio {ratio_i:.3g}, {report.iterations} iterations",
            "both <= 0.5, converged within 100",
            ratio_a <= 0.5 and ratio_i <= 0.5 and report.converged and report.iterations <= 100,
        )

    def check_determinism(self) -> CriterionResult:
        config = self._config(1)
        grid = TimeGrid(config.grid.t0, 5.0, config.grid.dt)
        stream = NoiseStream(config.ensemble.master_seed, 3)
        texts = [
            render_rows(*trajectory_table(simulate_trajectory(config.init, config.model, grid, stream)))
            for _ in range(2)
        ]
        serial = run_ensemble(config.init, config.model, grid, 8, config.ensemble.master_seed, workers=1)
        threaded = run_ensemble(config.init, config.model, grid, 8, config.ensemble.master_seed, workers=3)
        same_csv = texts[0] == texts[1]
        same_ensemble = np.array_equal(serial.paths, threaded.paths) and np.array_equal(
            serial.time_averages, threaded.time_averages
        )
        return CriterionResult(
            10,
            "Determinism across runs and thread counts",
            f"CSV identical: {same_csv}, 1 vs 3 workers identical: {same_ensemble}",
            "both identical",
            same_csv and same_ensemble,
        )

    # ------------------------------------------------------------------------

    def checks(self) -> List[Callable[[], CriterionResult]]:
        return [
            self.check_r0s,
            self.check_extinction_index,
            self.check_persistence,
            self.check_extinction,
            self.check_ergodicity,
            self.check_scheme,
            self.check_adjoint,
            self.check_stationarity,
            self.check_control_efficacy,
            self.check_determinism,
        ]

    def run(self) -> List[CriterionResult]:
        results = []
        for check in self.checks():
            start = time.perf_counter()
            result = check()
            log.info(
                "Criterion %d %s in %.1f s: %s",
                result.number,
                "passed" if result.passed else ("deviates (documented)" if result.deviation else "FAILED"),
                time.perf_counter() - start,
                result.measured,
            )
            results.append(result)
        return results


def format_results(results: List[CriterionResult]) -> str:
    """Framed table of the acceptance results for stdout."""
    lines = [
        "=" * 60,
        "SAIRS EXAMPLE VERIFICATION",
        "=" * 60,
        "",
    ]
    for r in results:
        if r.passed:
            mark = "✓ PASS"
        elif r.deviation:
            mark = "! DEVIATION"
        else:
            mark = "✗ FAIL"
        lines.append(f"[{r.number:2d}] {mark}  {r.name}")
        lines.append(f"      measured:  {r.measured}")
        lines.append(f"      threshold: {r.threshold}")
        if not r.passed and r.deviation:
            lines.append(f"      documented: {r.deviation}")
    passed = sum(r.passed for r in results)
    documented = sum(not r.passed and bool(r.deviation) for r in results)
    lines.extend(
        [
            "",
            "=" * 60,
            f"{passed}/{len(results)} criteria passed"
            + (f", {documented} documented deviation(s)" if documented else ""),
            "=" * 60,
        ]
    )
    return "\n".join(lines)
