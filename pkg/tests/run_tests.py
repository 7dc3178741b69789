"""Fast unit tests for the SAIRS control toolkit.

Every operation is exercised on small grids or synthetic data; the full-scale
example runs live in auto_smoke_test.py.
"""

import sys
import tempfile
import unittest
from pathlib import Path

PROJECT_ROOT = Path(__file__).resolve().parents[1]
sys.path.insert(0, str(PROJECT_ROOT))

import numpy as np
from scipy import stats

import config
import integrator
from analysis import (
    Histogram,
    extinction_check,
    extinction_summary,
    histogram_distance,
    mean_trend,
    persistence_check,
    relative_drift,
    stationary_histogram,
    time_average,
)
from control import (
    ObjectiveWeights,
    SweepConfig,
    adjoint_rhs,
    control_projection,
    forward_backward_sweep,
    hamiltonian,
    hamiltonian_control_gradient,
    objective_estimate,
    stationarity_residual,
    stationary_controls_array,
)
from errors import ConfigError, DomainError, PreconditionError, SimulationError
from integrator import (
    ControlGrid,
    NoiseStream,
    TimeGrid,
    Trajectory,
    euler_step,
    milstein_step,
    milstein_step_array,
    run_ensemble,
    simulate_batch,
    simulate_deterministic,
    simulate_trajectory,
    state_path,
    sweep_parameter,
)
from logger import logger as app_logger
from model import (
    ControlValue,
    ModelParams,
    State,
    bilinear_drift,
    diffusion,
    disease_free_equilibrium,
    drift,
    drift_array,
    drift_controlled,
    saturated_incidence,
)
from report_writer import ReportWriter, ensemble_table, render_rows, trajectory_table
from run_config import apply_overrides, load_config, parse_config, validate_for_command
from thresholds import (
    compute_extinction_index,
    compute_h_const,
    compute_m_const,
    compute_persistence_bounds,
    compute_r0s,
    compute_thresholds,
)

EXAMPLE1 = dict(
    lam=30.0, beta_A=0.01, beta_I=0.01, b=0.2, mu=2e-5, gamma=0.5,
    delta_A=0.2, delta_I=0.2, alpha=0.5, d=0.0027,
    sigma1=0.05, sigma2=0.05, sigma3=0.05, sigma4=0.05,
)
EXAMPLE4 = dict(
    lam=12.0, beta_A=5.0936e-7, beta_I=5.0725e-7, b=3.1124e-7, mu=2e-4, gamma=0.2,
    delta_A=0.4722, delta_I=0.9259, alpha=0.01, d=0.0027,
    sigma1=0.02, sigma2=0.7, sigma3=0.8, sigma4=0.3,
)
EXAMPLE5 = dict(EXAMPLE1, lam=20.0, beta_A=0.02, beta_I=0.02)

EX1 = ModelParams(**EXAMPLE1)
EX4 = ModelParams(**EXAMPLE4)
EX5 = ModelParams(**EXAMPLE5)
INIT1 = State(1500.0, 5.0, 6.0, 25.0)
INIT4 = State(627000.0, 500.0, 600.0, 250000.0)

MINIMAL_CONFIG = """
{
  "model": {"lambda": 30, "beta_A": 0.01, "beta_I": 0.01, "b": 0.2, "mu": 2e-5,
            "gamma": 0.5, "delta_A": 0.2, "delta_I": 0.2, "alpha": 0.5, "d": 0.0027},
  "init": {"S": 1500, "A": 5, "I": 6, "R": 25},
  "grid": {"t_end": 10}
}
"""


def constant_trajectory(values, t_end=1.0, dt=1.0):
    grid = TimeGrid(0.0, t_end, dt)
    states = np.tile(np.asarray(values, dtype=float), (grid.n_steps + 1, 1))
    return Trajectory.from_states(grid, states)


# ============================================================================
# Model
# ============================================================================


class ModelBasicTests(unittest.TestCase):
    """Drift, diffusion and incidence evaluation."""

    def test_saturated_incidence_examples(self):
        """Zero prevalence, bilinear reduction and saturation."""
        self.assertEqual(saturated_incidence(0.01, 0.0, 0.2), 0.0)
        self.assertAlmostEqual(saturated_incidence(0.01, 5.0, 0.0), 0.05, places=15)
        self.assertAlmostEqual(saturated_incidence(0.01, 5.0, 0.2), 0.025, places=15)

    def test_incidence_bounded_and_monotone(self):
        """beta x / (1 + b x) stays below beta / b and never decreases."""
        xs = np.linspace(0.0, 1e6, 200)
        values = [saturated_incidence(0.01, x, 0.2) for x in xs]
        self.assertTrue(all(v < 0.01 / 0.2 for v in values))
        self.assertTrue(all(b >= a for a, b in zip(values, values[1:])))

    def test_drift_at_origin(self):
        """Only recruitment acts on an empty population."""
        np.testing.assert_array_equal(drift(State(0, 0, 0, 0), EX1), [30.0, 0.0, 0.0, 0.0])

    def test_drift_infected_component(self):
        """dI = alpha A - (delta_I + mu + d) I for example 1."""
        self.assertAlmostEqual(drift(State(1500, 5, 6, 25), EX1)[2], 1.28368, places=10)

    def test_drift_sum_identity(self):
        """Component sum equals Lambda - mu N - d I for any state and control."""
        rng = np.random.default_rng(seed=1)
        for _ in range(20):
            state = State(*rng.uniform(0.0, 5000.0, size=4))
            u = ControlValue(*rng.uniform(0.0, 1.0, size=2))
            expected = EX1.lam - EX1.mu * state.total - EX1.d * state.i
            self.assertAlmostEqual(drift_controlled(state, u, EX1).sum(), expected, delta=1e-9 * state.total)

    def test_diffusion(self):
        """sigma_i X_i, homogeneous of degree one."""
        np.testing.assert_allclose(diffusion(State(1500, 5, 6, 25), EX1), [75.0, 0.25, 0.3, 1.25])
        np.testing.assert_allclose(diffusion(State(1, 1, 1, 1), EX1), [0.05] * 4)
        np.testing.assert_array_equal(diffusion(State(1, 2, 3, 4), EX1.without_noise()), np.zeros(4))

    def test_zero_control_matches_drift(self):
        """u = (0, 0) gives the uncontrolled drift exactly."""
        state = State(1500, 5, 6, 25)
        np.testing.assert_array_equal(drift_controlled(state, ControlValue(0, 0), EX1), drift(state, EX1))

    def test_full_isolation(self):
        """u2 = 1 removes new infections."""
        state = State(1500, 5, 6, 25)
        rates = drift_controlled(state, ControlValue(0, 1), EX1)
        self.assertAlmostEqual(rates[1], -(EX1.alpha + EX1.delta_A + EX1.mu) * 5)

    def test_isolation_never_increases_a_inflow(self):
        """dA/dt is nonincreasing in u2 at fixed u1."""
        state = State(1500, 5, 6, 25)
        rates = [drift_controlled(state, ControlValue(0.2, u2), EX1)[1] for u2 in np.linspace(0.0, 1.0, 11)]
        self.assertTrue(all(b <= a for a, b in zip(rates, rates[1:])))
        self.assertLess(rates[-1], rates[0])

    def test_full_vaccination(self):
        """u1 = 1 moves S into R."""
        rates = drift_controlled(State(100, 0, 0, 0), ControlValue(1, 0), EX1)
        self.assertAlmostEqual(rates[0], EX1.lam - (EX1.mu + 1.0) * 100)
        self.assertAlmostEqual(rates[3], 100.0)

    def test_bilinear_reduction(self):
        """With b = d = 0 and nu = 0 both drifts agree term by term."""
        params = EX1.replace(b=0.0, d=0.0)
        state = State(1500, 5, 6, 25)
        np.testing.assert_allclose(drift(state, params), bilinear_drift(state, params, nu=0.0), rtol=1e-14)

    def test_disease_free_equilibrium(self):
        """S = Lambda / mu with no infection."""
        self.assertEqual(disease_free_equilibrium(EX4).s, 12.0 / 2e-4)


class ModelEdgeCaseTests(unittest.TestCase):
    """Validation of model inputs."""

    def test_negative_state_rejected(self):
        """Edge case: negative compartment."""
        with self.assertRaises(DomainError):
            State(-1.0, 0, 0, 0)

    def test_non_finite_parameter_rejected(self):
        """Edge case: infinite rate."""
        with self.assertRaises(DomainError):
            EX1.replace(gamma=float("inf"))

    def test_control_out_of_range(self):
        """Edge case: control above 1."""
        with self.assertRaises(DomainError):
            ControlValue(1.5, 0.0)

    def test_negative_incidence_input(self):
        """Edge case: negative prevalence."""
        with self.assertRaises(DomainError):
            saturated_incidence(0.01, -1.0, 0.2)

    def test_replace_sigma_sets_all(self):
        """Edge case: shared sigma shortcut."""
        params = EX1.replace(sigma=0.02)
        np.testing.assert_array_equal(params.sigmas, [0.02] * 4)

    def test_mapping_round_trip_uses_lambda_key(self):
        """Edge case: lambda is a keyword in Python."""
        data = EX1.to_dict()
        self.assertIn("lambda", data)
        self.assertEqual(ModelParams.from_mapping(data), EX1)


# ============================================================================
# Thresholds
# ============================================================================


class ThresholdBasicTests(unittest.TestCase):
    """Closed-form threshold quantities."""

    def test_m_const_example1(self):
        """m = 4 mu + alpha + delta_A + delta_I + d + gamma + sum sigma^2 / 2."""
        self.assertAlmostEqual(compute_m_const(EX1), 1.40778, places=10)

    def test_r0s_example1(self):
        """R0s reproduces 1.132."""
        self.assertAlmostEqual(compute_r0s(EX1), 1.132, delta=1e-3)

    def test_r0s_example5(self):
        """Formula value for example 5 is 1.246."""
        self.assertAlmostEqual(compute_r0s(EX5), 1.246, delta=1e-3)

    def test_r0s_zero_recruitment(self):
        """Lambda = 0 gives R0s = 0."""
        self.assertEqual(compute_r0s(EX1.replace(lam=0.0)), 0.0)

    def test_r0s_decreases_with_noise(self):
        """More noise, smaller R0s."""
        values = [compute_r0s(EX1.replace(sigma=s)) for s in (0.0, 0.05, 0.1, 0.5)]
        self.assertEqual(values, sorted(values, reverse=True))

    def test_extinction_index_example4(self):
        """-0.3281 from the formula, negative as predicted."""
        index = compute_extinction_index(EX4)
        self.assertLess(index, 0.0)
        self.assertAlmostEqual(index, -0.3281, delta=5e-4)
        self.assertAlmostEqual(compute_h_const(EX4), 0.7174, places=10)

    def test_extinction_index_monotone_in_recovery(self):
        """With sigma2 = sigma3 = 0 the index never rises as delta_A or delta_I grow."""
        params = EX4.replace(sigma2=0.0, sigma3=0.0)
        for name in ("delta_A", "delta_I"):
            values = [compute_extinction_index(params.replace(**{name: v})) for v in np.linspace(0.0, 2.0, 21)]
            self.assertTrue(all(b <= a for a, b in zip(values, values[1:])), name)

    def test_extinction_index_without_transmission(self):
        """beta = 0 leaves -h/2."""
        params = EX4.replace(beta_A=0.0, beta_I=0.0)
        self.assertAlmostEqual(compute_extinction_index(params), -compute_h_const(params) / 2.0)

    def test_persistence_bounds_example1(self):
        """I bound 3.41 and A bound 1.38, in the fixed ratio (delta_I + mu + d) / alpha."""
        s_bound, a_bound, i_bound, r_bound = compute_persistence_bounds(EX1)
        self.assertAlmostEqual(i_bound, 3.41, delta=0.01)
        self.assertAlmostEqual(a_bound, 1.38, delta=0.01)
        self.assertAlmostEqual(a_bound / i_bound, (EX1.delta_I + EX1.mu + EX1.d) / EX1.alpha, places=12)
        self.assertGreater(s_bound, 0.0)
        self.assertGreater(r_bound, 0.0)

    def test_report(self):
        """Report bundles both beta senses and both verdicts."""
        report = compute_thresholds(EX4)
        self.assertIsNone(report.persistence_bounds)
        self.assertTrue(report.extinct)
        self.assertFalse(report.persistent)
        self.assertEqual(report.beta_min, 5.0725e-7)
        self.assertEqual(report.beta_max, 5.0936e-7)
        self.assertIn("extinction_index", report.to_dict())


class ThresholdEdgeCaseTests(unittest.TestCase):
    """Preconditions of the threshold formulas."""

    def test_bounds_need_r0s_above_one(self):
        """Edge case: R0s <= 1."""
        with self.assertRaises(PreconditionError):
            compute_persistence_bounds(EX1.replace(lam=1.0))

    def test_extinction_index_needs_mu(self):
        """Edge case: mu = 0."""
        with self.assertRaises(DomainError):
            compute_extinction_index(EX1.replace(mu=0.0))


# ============================================================================
# Integrator
# ============================================================================


class IntegratorBasicTests(unittest.TestCase):
    """Step functions and trajectory simulation."""

    def test_milstein_without_noise_is_euler(self):
        """sigma = 0 gives exactly the Euler step for any z."""
        params = EX1.without_noise()
        state = State(1500, 5, 6, 25)
        z = np.array([0.3, -1.2, 2.0, 0.7])
        np.testing.assert_array_equal(
            milstein_step(state, params, None, 0.002, z).as_array(),
            euler_step(state, params, 0.002).as_array(),
        )

    def test_milstein_zero_draw(self):
        """z = 0 leaves the Euler step minus sigma^2/2 X dt."""
        state = State(1500, 5, 6, 25)
        dt = 0.002
        expected = state.as_array() + drift(state, EX1) * dt - 0.5 * EX1.sigmas**2 * state.as_array() * dt
        np.testing.assert_allclose(milstein_step(state, EX1, None, dt, np.zeros(4)).as_array(), expected, rtol=1e-14)

    def test_milstein_at_origin(self):
        """Only recruitment moves the empty state."""
        result = milstein_step(State(0, 0, 0, 0), EX1, None, 0.002, np.array([1.0, -2.0, 0.5, 3.0]))
        np.testing.assert_allclose(result.as_array(), [30.0 * 0.002, 0.0, 0.0, 0.0])

    def test_clamp_counts_per_row(self):
        """sigma sqrt(dt) = 2: z = -0.5 turns the factor to -1.5, z = 1 to 3."""
        params = EX1.replace(sigma=20.0)
        dt = 0.01
        x = np.full((2, 4), 100.0)
        z = np.array([[-0.5, -0.5, -0.5, -0.5], [1.0, 1.0, 1.0, -0.5]])
        unclamped = (
            x
            + drift_array(x, params) * dt
            + params.sigmas * x * np.sqrt(dt) * z
            + 0.5 * params.sigmas**2 * x * (z * z - 1.0) * dt
        )
        result, clamps = milstein_step_array(x, params, dt, z)
        np.testing.assert_array_equal(clamps, [4, 1])
        np.testing.assert_array_equal(clamps, (unclamped < 0).sum(axis=1))
        np.testing.assert_array_equal(result, np.maximum(unclamped, 0.0))

    def test_clamped_step_logs_warning(self):
        """A step that clamps components says so at WARNING."""
        params = EX1.replace(sigma=20.0)
        with self.assertLogs(integrator.log, "WARNING") as captured:
            result = milstein_step(State(100, 100, 100, 100), params, None, 0.01, np.full(4, -0.5), step_index=7)
        self.assertIn("Step 7: 4 negative component(s) clamped", captured.output[0])
        np.testing.assert_array_equal(result.as_array(), np.zeros(4))

    def test_trajectory_starts_at_init(self):
        """states[0] is the initial state."""
        traj = simulate_trajectory(INIT1, EX1, TimeGrid(0, 1, 0.002), NoiseStream(7))
        np.testing.assert_array_equal(traj.states[0], INIT1.as_array())
        self.assertEqual(traj.n_points, 501)

    def test_same_stream_same_trajectory(self):
        """Determinism given (master_seed, trajectory_index)."""
        grid = TimeGrid(0, 2, 0.002)
        a = simulate_trajectory(INIT1, EX1, grid, NoiseStream(11, 4))
        b = simulate_trajectory(INIT1, EX1, grid, NoiseStream(11, 4))
        np.testing.assert_array_equal(a.states, b.states)

    def test_batch_matches_single_trajectories(self):
        """A stream gives the same path alone or inside a batch."""
        grid = TimeGrid(0, 1, 0.002)
        streams = [NoiseStream(5, 0), NoiseStream(5, 1), NoiseStream(9, 0)]
        batch = simulate_batch(INIT1, EX1, grid, streams)
        for stream, traj in zip(streams, batch):
            alone = simulate_trajectory(INIT1, EX1, grid, stream)
            np.testing.assert_array_equal(traj.states, alone.states)

    def test_noise_blocks_do_not_change_sequence(self):
        """Drawing in blocks reproduces drawing all at once."""
        whole = NoiseStream(3, 2).generator().standard_normal((10, 4))
        gen = NoiseStream(3, 2).generator()
        parts = np.vstack([gen.standard_normal((4, 4)), gen.standard_normal((6, 4))])
        np.testing.assert_array_equal(whole, parts)

    def test_conservation_without_births_and_deaths(self):
        """Lambda = mu = d = 0 and sigma = 0 keep N constant."""
        params = EX1.replace(lam=0.0, mu=0.0, d=0.0, sigma=0.0)
        grid = TimeGrid(0, 5, 0.002)
        traj = simulate_trajectory(INIT1, params, grid, NoiseStream(1))
        totals = traj.states.sum(axis=1)
        np.testing.assert_allclose(totals, INIT1.total, rtol=1e-10)
        reference = simulate_deterministic(INIT1, params, grid)
        np.testing.assert_allclose(reference.states.sum(axis=1), INIT1.total, rtol=1e-8)

    def test_disease_free_state_is_fixed(self):
        """(Lambda/mu, 0, 0, 0) without transmission stays put."""
        params = EX4.replace(beta_A=0.0, beta_I=0.0, sigma=0.0)
        equilibrium = disease_free_equilibrium(params)
        traj = simulate_deterministic(equilibrium, params, TimeGrid(0, 10, 0.01))
        np.testing.assert_allclose(traj.states[-1], equilibrium.as_array(), rtol=1e-10, atol=1e-12)

    def test_rk4_matches_euler_path(self):
        """Noise-free Milstein path stays within Euler accuracy of RK4."""
        params = EX4.without_noise()
        grid = TimeGrid(0, 5, 0.002)
        reference = simulate_deterministic(INIT4, params, grid)
        path = state_path(INIT4, params, grid)
        scale = np.abs(reference.states).max(axis=0)
        self.assertLess(np.max(np.abs(path - reference.states) / scale), 1e-2)

    def test_record_stride_keeps_endpoints(self):
        """Thinned trajectories keep t0 and the final state."""
        grid = TimeGrid(0, 1, 0.002)
        full = simulate_trajectory(INIT1, EX1, grid, NoiseStream(2))
        thin = simulate_trajectory(INIT1, EX1, grid, NoiseStream(2), record_every=7)
        self.assertEqual(thin.times[0], 0.0)
        self.assertAlmostEqual(thin.times[-1], 1.0)
        np.testing.assert_array_equal(thin.states[-1], full.states[-1])
        np.testing.assert_array_equal(thin.states[1], full.states[7])

    def test_controls_enter_trajectory(self):
        """Full isolation stops new infections."""
        grid = TimeGrid(0, 1, 0.002)
        controls = ControlGrid.constant(grid, 0.0, 1.0)
        params = EX1.without_noise()
        traj = simulate_trajectory(INIT1, params, grid, NoiseStream(0), controls=controls)
        rate = EX1.alpha + EX1.delta_A + EX1.mu
        self.assertAlmostEqual(traj.final.a, 5.0 * (1.0 - rate * 0.002) ** 500, places=8)
        self.assertEqual(traj.controls.shape, (500, 2))

    def test_parameter_sweep(self):
        """One trajectory per value, all on the same noise."""
        results = sweep_parameter(INIT1, EX1, TimeGrid(0, 1, 0.01), "d", [0.0, 0.1, 0.2], NoiseStream(4))
        self.assertEqual(sorted(results), [0.0, 0.1, 0.2])
        finals = [results[d].final.i for d in (0.0, 0.1, 0.2)]
        self.assertGreater(finals[0], finals[2])


class EnsembleTests(unittest.TestCase):
    """Ensemble statistics and their independence from scheduling."""

    def test_single_trajectory_ensemble(self):
        """n_traj = 1: mean equals the trajectory."""
        grid = TimeGrid(0, 1, 0.002)
        summary = run_ensemble(INIT1, EX1, grid, 1, 17)
        traj = simulate_trajectory(INIT1, EX1, grid, NoiseStream(17, 0))
        np.testing.assert_array_equal(summary.mean, traj.states)

    def test_noise_free_quantiles_collapse(self):
        """sigma = 0: every quantile equals the mean."""
        summary = run_ensemble(INIT1, EX1.without_noise(), TimeGrid(0, 1, 0.002), 5, 1)
        for level in config.QUANTILE_LEVELS:
            np.testing.assert_allclose(summary.quantiles[level], summary.mean, rtol=1e-12)

    def test_thread_count_does_not_matter(self):
        """Same seed, 1 or 3 workers: identical arrays."""
        grid = TimeGrid(0, 1, 0.002)
        serial = run_ensemble(INIT1, EX1, grid, 7, 99, workers=1)
        threaded = run_ensemble(INIT1, EX1, grid, 7, 99, workers=3)
        np.testing.assert_array_equal(serial.paths, threaded.paths)
        np.testing.assert_array_equal(serial.time_averages, threaded.time_averages)
        np.testing.assert_array_equal(serial.truncation_events, threaded.truncation_events)

    def test_time_averages_full_resolution(self):
        """Ensemble time averages agree with the per-trajectory left sums."""
        grid = TimeGrid(0, 2, 0.002)
        summary = run_ensemble(INIT1, EX1, grid, 2, 8, record_every=1)
        for k in range(2):
            traj = summary.trajectory(k)
            expected = [time_average(traj, c) for c in "SAIR"]
            np.testing.assert_allclose(summary.time_averages[k], expected, rtol=1e-9)

    def test_terminal_states(self):
        """terminal holds the last state of each trajectory."""
        summary = run_ensemble(INIT1, EX1, TimeGrid(0, 1, 0.002), 3, 8)
        np.testing.assert_array_equal(summary.terminal, summary.paths[-1])

    def test_example1_rarely_clamps(self):
        """Example 1 at dt = 0.002 clamps on fewer than 0.1% of steps."""
        grid = TimeGrid(0, 10, 0.002)
        summary = run_ensemble(INIT1, EX1, grid, 4, 3)
        self.assertLess(summary.truncation_events.max() / grid.n_steps, 1e-3)

    def test_halving_dt_within_standard_error(self):
        """Coupled dt and dt/2 paths: mean I(T) differs by less than one standard error."""
        n, dt, steps = 500, 0.002, 2500
        rng = NoiseStream(2024).generator()
        coarse = np.tile(INIT1.as_array(), (n, 1))
        fine = coarse.copy()
        for _ in range(steps):
            z = rng.standard_normal((2, n, 4))
            fine, _ = milstein_step_array(fine, EX1, dt / 2, z[0])
            fine, _ = milstein_step_array(fine, EX1, dt / 2, z[1])
            coarse, _ = milstein_step_array(coarse, EX1, dt, (z[0] + z[1]) / np.sqrt(2.0))
        gap = abs(fine[:, 2].mean() - coarse[:, 2].mean())
        self.assertLess(gap, stats.sem(fine[:, 2]))


class IntegratorEdgeCaseTests(unittest.TestCase):
    """Invalid grids, controls and diverging steps."""

    def test_bad_grid(self):
        """Edge case: dt <= 0 and reversed interval."""
        with self.assertRaises(DomainError):
            TimeGrid(0, 1, 0.0)
        with self.assertRaises(DomainError):
            TimeGrid(1, 0, 0.1)

    def test_control_grid_validation(self):
        """Edge case: wrong length and out-of-range values."""
        grid = TimeGrid(0, 1, 0.1)
        with self.assertRaises(DomainError):
            ControlGrid(grid, np.zeros(3), np.zeros(3))
        with self.assertRaises(DomainError):
            ControlGrid.constant(grid, 1.5, 0.0)

    def test_control_grid_mismatch(self):
        """Edge case: controls built on another grid."""
        controls = ControlGrid.constant(TimeGrid(0, 1, 0.1))
        with self.assertRaises(DomainError):
            simulate_trajectory(INIT1, EX1, TimeGrid(0, 2, 0.1), NoiseStream(0), controls=controls)

    def test_non_finite_draw(self):
        """Edge case: z contains nan."""
        with self.assertRaises(DomainError):
            milstein_step(INIT1, EX1, None, 0.002, np.array([np.nan, 0, 0, 0]))

    def test_overflow_reports_step(self):
        """Edge case: a diverging step names trajectory and step."""
        params = EX1.replace(beta_A=1e308, beta_I=1e308, b=0.0)
        with np.errstate(all="ignore"):
            with self.assertRaises(SimulationError) as ctx:
                simulate_trajectory(INIT1, params, TimeGrid(0, 1, 0.002), NoiseStream(0, 0))
        self.assertEqual(ctx.exception.step_index, 0)
        self.assertEqual(ctx.exception.trajectory_index, 0)

    def test_invalid_ensemble_size(self):
        """Edge case: empty ensemble."""
        with self.assertRaises(DomainError):
            run_ensemble(INIT1, EX1, TimeGrid(0, 1, 0.1), 0, 1)


# ============================================================================
# Analysis
# ============================================================================


class AnalysisBasicTests(unittest.TestCase):
    """Time averages, persistence, extinction and histograms."""

    def test_time_average_constant(self):
        """Constant path averages to itself."""
        traj = constant_trajectory([3.0, 2.0, 1.0, 4.0], t_end=5.0, dt=0.5)
        self.assertAlmostEqual(time_average(traj, "A"), 2.0, places=12)

    def test_time_average_ramp(self):
        """Linear ramp 0 -> c averages to c/2 within dt c / T."""
        grid = TimeGrid(0, 10, 0.01)
        ramp = 8.0 * grid.times() / 10.0
        states = np.column_stack([ramp, ramp, ramp, ramp])
        traj = Trajectory.from_states(grid, states)
        self.assertAlmostEqual(time_average(traj, "I"), 4.0, delta=0.01 * 8.0 / 10.0)

    def test_time_average_linear(self):
        """average(a x + c) = a average(x) + c."""
        rng = np.random.default_rng(seed=1)
        grid = TimeGrid(0, 1, 0.01)
        x = rng.uniform(0, 10, size=(grid.n_steps + 1, 4))
        base = time_average(Trajectory.from_states(grid, x), "S")
        shifted = time_average(Trajectory.from_states(grid, 3.0 * x + 2.0), "S")
        self.assertAlmostEqual(shifted, 3.0 * base + 2.0, places=10)

    def test_persistence_above_bounds(self):
        """Constant paths above every bound satisfy all four."""
        bounds = np.array(compute_persistence_bounds(EX1))
        report = persistence_check([constant_trajectory(bounds * 1.5)], EX1)
        self.assertTrue(report.all_satisfied)
        self.assertEqual(report.n_traj, 1)

    def test_persistence_at_bounds(self):
        """Strict inequality: paths exactly at the bounds satisfy none."""
        bounds = np.array(compute_persistence_bounds(EX1))
        report = persistence_check([constant_trajectory(bounds), constant_trajectory(bounds)], EX1)
        self.assertEqual(report.satisfied, (False, False, False, False))

    def test_persistence_order_invariant(self):
        """Verdict does not depend on trajectory order."""
        bounds = np.array(compute_persistence_bounds(EX1))
        trajs = [constant_trajectory(bounds * f) for f in (0.5, 1.2, 2.0)]
        forward = persistence_check(trajs, EX1)
        backward = persistence_check(trajs[::-1], EX1)
        self.assertEqual(forward.satisfied, backward.satisfied)
        np.testing.assert_allclose(forward.time_averages, backward.time_averages, rtol=1e-14)

    def test_extinction_exponential(self):
        """A+I = exp(-0.3 t) gives slope -0.3."""
        grid = TimeGrid(0, 20, 0.01)
        states = np.zeros((grid.n_steps + 1, 4))
        states[:, 1] = np.exp(-0.3 * grid.times())
        report = extinction_check(Trajectory.from_states(grid, states), EX4)
        self.assertAlmostEqual(report.log_slope, -0.3, delta=1e-6)
        self.assertTrue(report.decaying)
        self.assertTrue(report.extinct)
        self.assertAlmostEqual(report.s_equilibrium, 60000.0)

    def test_extinction_constant(self):
        """Constant A+I gives slope 0."""
        report = extinction_check(constant_trajectory([10, 2, 3, 4], t_end=10.0, dt=0.1), EX4)
        self.assertAlmostEqual(report.log_slope, 0.0, places=12)
        self.assertFalse(report.extinct)

    def test_extinction_truncated_at_zero(self):
        """Fit stops at the first zero of A+I and is flagged."""
        grid = TimeGrid(0, 10, 0.1)
        states = np.zeros((grid.n_steps + 1, 4))
        states[:90, 2] = np.exp(-0.5 * grid.times()[:90])
        report = extinction_check(Trajectory.from_states(grid, states), EX4, fit_window=(5.0, 10.0))
        self.assertTrue(report.truncated)
        self.assertAlmostEqual(report.log_slope, -0.5, delta=1e-9)

    def test_extinction_without_fit_points(self):
        """No positive samples: verdict from the terminal value."""
        report = extinction_check(constant_trajectory([10, 0, 0, 0], t_end=10.0, dt=0.1), EX4)
        self.assertIsNone(report.log_slope)
        self.assertTrue(report.decaying)

    def test_extinction_summary(self):
        """Fractions over an ensemble."""
        grid = TimeGrid(0, 20, 0.1)
        states = np.zeros((grid.n_steps + 1, 4))
        states[:, 0] = 100.0
        states[:, 1] = np.exp(-0.3 * grid.times())
        decaying = Trajectory.from_states(grid, states)
        growing = Trajectory.from_states(grid, np.column_stack([states[:, 0], np.exp(0.1 * grid.times()), states[:, 2], states[:, 3]]))
        summary = extinction_summary([decaying, growing], EX4)
        self.assertEqual(summary.n_runs, 2)
        self.assertAlmostEqual(summary.fraction_decaying, 0.5)
        self.assertAlmostEqual(summary.s_trend, 0.0, places=9)

    def test_s_trend_direction(self):
        """S above Lambda/mu = 60000 and falling approaches it; S below and falling does not."""
        grid = TimeGrid(0, 20, 0.1)
        t = grid.times()
        decaying_a = np.exp(-0.3 * t)
        zeros = np.zeros_like(t)

        def summary_for(s):
            traj = Trajectory.from_states(grid, np.column_stack([s, decaying_a, zeros, zeros]))
            return extinction_summary([traj], EX4)

        toward = summary_for(70000.0 - 100.0 * t)
        away = summary_for(50000.0 - 100.0 * t)
        self.assertLess(toward.s_trend, 0.0)
        self.assertTrue(toward.s_approaching)
        self.assertFalse(away.s_approaching)
        self.assertIs(toward.to_dict()["s_approaching"], True)

    def test_relative_drift(self):
        """Change after the burn-in relative to the value at its end."""
        grid = TimeGrid(0, 10, 0.5)
        states = np.zeros((grid.n_steps + 1, 4))
        states[:, 2] = 100.0 + 10.0 * grid.times()
        traj = Trajectory.from_states(grid, states)
        self.assertAlmostEqual(relative_drift(traj, 2.0), 80.0 / 120.0, places=12)
        self.assertAlmostEqual(relative_drift(traj, 2.25), 77.5 / 122.5, places=12)
        self.assertEqual(relative_drift(constant_trajectory([1, 2, 3, 4], t_end=10.0), 5.0), 0.0)
        self.assertEqual(relative_drift(traj, 2.0, "R"), 0.0)

    def test_mean_trend(self):
        """Least-squares slope of a line."""
        t = np.linspace(0, 10, 101)
        self.assertAlmostEqual(mean_trend(t, 2.5 * t + 1.0), 2.5, places=12)

    def test_histogram_constant(self):
        """Constant samples: one bin, unit mass, flagged."""
        hist = stationary_histogram(constant_trajectory([1, 2, 3, 4], t_end=10.0, dt=0.1), 2.0, 10, "I")
        self.assertTrue(hist.degenerate)
        np.testing.assert_array_equal(hist.masses, [1.0])

    def test_histogram_constant_large_value(self):
        """A constant 1e20 still yields one bin of positive width around it."""
        hist = stationary_histogram(constant_trajectory([1, 2, 1e20, 4], t_end=10.0, dt=0.1), 2.0, 10, "I")
        self.assertTrue(hist.degenerate)
        self.assertLess(hist.edges[0], 1e20)
        self.assertGreater(hist.edges[1], 1e20)
        self.assertAlmostEqual(histogram_distance(hist, hist), 0.0, places=12)

    def test_histogram_uniform(self):
        """Uniform samples spread evenly over ten bins."""
        rng = np.random.default_rng(seed=1)
        n = 1_000_000
        grid = TimeGrid(0, float(n), 1.0)
        states = np.zeros((n + 1, 4))
        states[:, 2] = rng.uniform(0.0, 1.0, size=n + 1)
        hist = stationary_histogram(Trajectory.from_states(grid, states), 0.0, 10, "I")
        np.testing.assert_allclose(hist.masses, 0.1, atol=0.002)
        self.assertAlmostEqual(hist.masses.sum(), 1.0, delta=1e-12)
        self.assertTrue(np.all(np.diff(hist.edges) > 0))

    def test_histogram_sample_order(self):
        """Masses do not depend on sample order."""
        rng = np.random.default_rng(seed=2)
        grid = TimeGrid(0, 999, 1.0)
        states = rng.uniform(1, 5, size=(1000, 4))
        a = stationary_histogram(Trajectory.from_states(grid, states), 0.0, 20, "S")
        b = stationary_histogram(Trajectory.from_states(grid, states[::-1]), 0.0, 20, "S")
        np.testing.assert_array_equal(a.masses, b.masses)

    def test_histogram_distance(self):
        """Identical, disjoint and half-overlapping histograms."""
        uniform = Histogram("I", np.linspace(0, 1, 11), np.full(10, 0.1), 0.0, 100)
        half = Histogram("I", np.linspace(0, 0.5, 6), np.full(5, 0.2), 0.0, 100)
        far = Histogram("I", np.array([2.0, 3.0]), np.array([1.0]), 0.0, 100)
        self.assertAlmostEqual(histogram_distance(uniform, uniform), 0.0, places=12)
        self.assertAlmostEqual(histogram_distance(uniform, far), 1.0, places=12)
        self.assertAlmostEqual(histogram_distance(uniform, half), 0.5, places=12)


class AnalysisEdgeCaseTests(unittest.TestCase):
    """Preconditions of the statistics."""

    def test_persistence_needs_r0s(self):
        """Edge case: R0s <= 1."""
        with self.assertRaises(PreconditionError):
            persistence_check([constant_trajectory([1, 1, 1, 1])], EX4)

    def test_burn_in_too_long(self):
        """Edge case: nothing left after burn-in."""
        with self.assertRaises(PreconditionError):
            stationary_histogram(constant_trajectory([1, 2, 3, 4], t_end=10.0, dt=0.1), 10.0, 10)

    def test_too_few_bins(self):
        """Edge case: one bin."""
        with self.assertRaises(DomainError):
            stationary_histogram(constant_trajectory([1, 2, 3, 4], t_end=10.0, dt=0.1), 1.0, 1)

    def test_distance_needs_same_component(self):
        """Edge case: S histogram against I histogram."""
        a = Histogram("S", np.array([0.0, 1.0]), np.array([1.0]), 0.0, 1)
        b = Histogram("I", np.array([0.0, 1.0]), np.array([1.0]), 0.0, 1)
        with self.assertRaises(DomainError):
            histogram_distance(a, b)


# ============================================================================
# Control
# ============================================================================


class ControlBasicTests(unittest.TestCase):
    """Objective, Hamiltonian, adjoint and projections."""

    def setUp(self):
        self.grid = TimeGrid(0, 1, 0.01)
        self.x = State(1500, 5, 6, 25)

    def test_zero_weights_zero_objective(self):
        """All weights 0 give J = 0."""
        weights = ObjectiveWeights(q1=0.0, q2=0.0)
        estimate = objective_estimate(INIT1, EX1, weights, ControlGrid.constant(self.grid, 0.2, 0.4), 3, 1)
        self.assertEqual(estimate.mean, 0.0)

    def test_control_only_cost(self):
        """P = k = 0: J = T (Q1 c1^2 + Q2 c2^2) / 2."""
        weights = ObjectiveWeights(q1=2.0, q2=4.0)
        estimate = objective_estimate(INIT1, EX1, weights, ControlGrid.constant(self.grid, 0.3, 0.6), 3, 1)
        self.assertAlmostEqual(estimate.mean, (2.0 * 0.09 + 4.0 * 0.36) / 2.0, places=10)
        self.assertAlmostEqual(estimate.std_error, 0.0, places=10)

    def test_noise_free_objective_is_deterministic(self):
        """sigma = 0: one trajectory or many give the same estimate."""
        weights = ObjectiveWeights(p1=0.1, p2=1.0, p3=1.0, q1=1.0, q2=1.0, k2=0.01)
        controls = ControlGrid.constant(self.grid, 0.1, 0.1)
        params = EX1.without_noise()
        one = objective_estimate(INIT1, params, weights, controls, 1, 5)
        many = objective_estimate(INIT1, params, weights, controls, 6, 5)
        self.assertAlmostEqual(one.mean, many.mean, delta=1e-12 * abs(one.mean))

    def test_hamiltonian_running_cost_only(self):
        """m = n = 0, u = 0: H = l(x, 0)."""
        weights = ObjectiveWeights(p1=1, p2=2, p3=3, k1=0.1, k2=0.2, k3=0.3, k4=0.4)
        x = self.x.as_array()
        expected = x[:3] @ [1, 2, 3] + 0.5 * (x**2) @ [0.1, 0.2, 0.3, 0.4]
        value = hamiltonian(self.x, ControlValue(), np.zeros(4), np.zeros(4), weights, EX1)
        self.assertAlmostEqual(value, expected, places=8)

    def test_hamiltonian_at_origin(self):
        """Empty population, no control: H = Lambda m1."""
        m = np.array([0.7, -1.0, 2.0, 3.0])
        value = hamiltonian(State(0, 0, 0, 0), ControlValue(), m, np.ones(4), ObjectiveWeights(p1=5.0), EX1)
        self.assertAlmostEqual(value, 30.0 * 0.7)

    def test_hamiltonian_inner_product(self):
        """Zero weights and n = 0: H = <f, m>."""
        m = np.array([0.7, -1.0, 2.0, 3.0])
        u = ControlValue(0.2, 0.3)
        weights = ObjectiveWeights(q1=0.0, q2=0.0)
        value = hamiltonian(self.x, u, m, np.zeros(4), weights, EX1)
        self.assertAlmostEqual(value, drift_controlled(self.x, u, EX1) @ m, places=9)

    def test_projection_zero_gradient(self):
        """m1 = m4 and m2 = m3 = m4 give no control in either mode."""
        m = np.array([1.5, 1.5, 1.5, 1.5])
        weights = ObjectiveWeights(q1=1.0, q2=1.0)
        for mode in config.PROJECTION_MODES:
            u = control_projection(self.x, m, weights, EX1, mode)
            self.assertEqual((u.u1, u.u2), (0.0, 0.0))

    def test_projection_clamps(self):
        """(m1 - m4) S / Q1 = 5 clamps to 1, = -3 clamps to 0."""
        weights = ObjectiveWeights(q1=1500.0, q2=1.0)
        self.assertEqual(control_projection(self.x, [5.0, 0, 0, 0], weights, EX1).u1, 1.0)
        self.assertEqual(control_projection(self.x, [-3.0, 0, 0, 0], weights, EX1).u1, 0.0)

    def test_projection_stationary(self):
        """Interior projected controls make dH/du vanish."""
        weights = ObjectiveWeights(q1=1e4, q2=1e3)
        m = np.array([0.1, 0.2, 0.05, 0.0])
        u = control_projection(self.x, m, weights, EX1, "hamiltonian")
        self.assertTrue(0.0 < u.u1 < 1.0 and 0.0 < u.u2 < 1.0)
        g1, g2 = hamiltonian_control_gradient(self.x, u, m, np.zeros(4), weights, EX1)
        self.assertAlmostEqual(g1, 0.0, delta=1e-10 * weights.q1)
        self.assertAlmostEqual(g2, 0.0, delta=1e-10 * weights.q2)

    def test_stationarity_residual(self):
        """Zero at the projection, 0.5 at half of it, distance to the bound when clamped."""
        weights = ObjectiveWeights(q1=1e4, q2=1e3)
        path = np.tile(self.x.as_array(), (4, 1))
        m = np.tile([0.1, 0.2, 0.05, 0.0], (4, 1))
        optimal = stationary_controls_array(path[:-1], m[:-1], weights, EX1)
        self.assertTrue(np.all((optimal > 0.0) & (optimal < 1.0)))
        self.assertLess(stationarity_residual(path, m, optimal, weights, EX1), 1e-12)
        self.assertAlmostEqual(stationarity_residual(path, m, 0.5 * optimal, weights, EX1), 0.5, places=12)

        cheap_isolation = ObjectiveWeights(q1=1e4, q2=1e-3)
        raw = stationary_controls_array(path[:-1], m[:-1], cheap_isolation, EX1)
        self.assertGreater(raw[0, 1], 1.0)
        controls = np.column_stack([raw[:, 0], np.full(3, 0.75)])
        self.assertAlmostEqual(stationarity_residual(path, m, controls, cheap_isolation, EX1), 0.25, places=12)
        controls[:, 1] = 1.0
        self.assertLess(stationarity_residual(path, m, controls, cheap_isolation, EX1), 1e-12)

    def test_adjoint_vanishes_without_weights(self):
        """weights = 0 and m = n = 0: dm/dt = 0."""
        rhs = adjoint_rhs(self.x, ControlValue(0.3, 0.4), np.zeros(4), np.zeros(4), ObjectiveWeights(q1=0.0, q2=0.0), EX1)
        np.testing.assert_array_equal(rhs, np.zeros(4))

    def test_adjoint_m4_line(self):
        """m1 = n4 = 0: dm4/dt = (gamma + mu) m4."""
        rhs = adjoint_rhs(self.x, ControlValue(), [0.0, 0.3, 0.2, 2.0], np.zeros(4), ObjectiveWeights(), EX1)
        self.assertAlmostEqual(rhs[3], (EX1.gamma + EX1.mu) * 2.0, places=12)

    def test_adjoint_is_minus_state_gradient(self):
        """Central differences of H match -adjoint_rhs at random points."""
        rng = np.random.default_rng(seed=1)
        for _ in range(20):
            x = rng.uniform(1.0, 100.0, size=4)
            u = ControlValue(*rng.uniform(0.0, 1.0, size=2))
            m, n = rng.normal(size=4), rng.normal(size=4)
            weights = ObjectiveWeights(*rng.uniform(0.1, 1.0, size=9))
            rhs = adjoint_rhs(State(*x), u, m, n, weights, EX1)
            gradient = np.empty(4)
            for j in range(4):
                h = 1e-5 * max(abs(x[j]), 1.0)
                up, down = x.copy(), x.copy()
                up[j] += h
                down[j] -= h
                gradient[j] = (
                    hamiltonian(State(*up), u, m, n, weights, EX1)
                    - hamiltonian(State(*down), u, m, n, weights, EX1)
                ) / (2 * h)
            error = np.linalg.norm(rhs + gradient) / max(np.linalg.norm(gradient), 1.0)
            self.assertLess(error, 1e-5)


class SweepTests(unittest.TestCase):
    """Forward-backward sweep stopping behaviour."""

    def setUp(self):
        self.grid = TimeGrid(0, 1, 0.01)

    def test_no_incentive_no_control(self):
        """P = k = 0 converges to u = 0 at once."""
        controls, report = forward_backward_sweep(INIT1, EX1, ObjectiveWeights(q1=1.0, q2=1.0), self.grid)
        self.assertTrue(report.converged)
        self.assertLessEqual(report.iterations, 2)
        np.testing.assert_array_equal(controls.as_array(), 0.0)
        self.assertEqual(report.stationarity_residual, 0.0)

    def test_huge_tolerance_stops_after_one_iteration(self):
        """Stopping rule with tol larger than any change."""
        weights = ObjectiveWeights(p2=1.0, p3=1.0, q1=1.0, q2=1.0)
        _, report = forward_backward_sweep(INIT1, EX1, weights, self.grid, SweepConfig(tol=10.0))
        self.assertTrue(report.converged)
        self.assertEqual(report.iterations, 1)

    def test_non_convergence_is_reported(self):
        """max_iter reached: converged is False, no exception."""
        weights = ObjectiveWeights(p2=1.0, p3=1.0, q1=1.0, q2=1e-3)
        _, report = forward_backward_sweep(INIT1, EX1, weights, self.grid, SweepConfig(max_iter=1, tol=1e-12))
        self.assertFalse(report.converged)
        self.assertEqual(len(report.control_change_history), 1)
        # half a step toward clamped controls leaves them far from the bound
        self.assertGreater(report.stationarity_residual, 0.1)

    def test_tight_sweep_is_stationary(self):
        """A sweep run to tol 1e-10 returns controls with dH/du = 0 where unclamped."""
        weights = ObjectiveWeights(p2=1.0, p3=1.0, q1=100.0, q2=10.0)
        _, report = forward_backward_sweep(INIT1, EX1, weights, self.grid, SweepConfig(tol=1e-10, max_iter=500))
        self.assertTrue(report.converged)
        self.assertLess(report.stationarity_residual, 1e-6)

    def test_terminal_costate(self):
        """m(T) = -k X(T)."""
        from control import AdjointState

        weights = ObjectiveWeights(k1=1.0, k2=2.0, k3=3.0, k4=4.0)
        adjoint = AdjointState.terminal(State(1, 2, 3, 4), weights)
        np.testing.assert_array_equal(adjoint.m, [-1.0, -4.0, -9.0, -16.0])
        np.testing.assert_array_equal(adjoint.n, np.zeros(4))

    def test_invalid_settings(self):
        """Edge case: relaxation outside (0, 1] and zero effort weight."""
        with self.assertRaises(DomainError):
            SweepConfig(relaxation=0.0)
        with self.assertRaises(DomainError):
            SweepConfig(mode="other")
        with self.assertRaises(PreconditionError):
            forward_backward_sweep(INIT1, EX1, ObjectiveWeights(q1=0.0), self.grid)


# ============================================================================
# Configuration and output
# ============================================================================


class RunConfigTests(unittest.TestCase):
    """Parsing and validation of run configs."""

    def test_minimal_config_defaults(self):
        """Only model, init and t_end: documented defaults fill the rest."""
        cfg = parse_config(MINIMAL_CONFIG)
        self.assertEqual(cfg.grid.dt, config.DEFAULT_DT)
        self.assertEqual(cfg.ensemble.n_traj, config.DEFAULT_N_TRAJ)
        self.assertEqual(cfg.model.sigma1, 0.0)
        self.assertIsNone(cfg.control)
        analysis = cfg.analysis.resolved(cfg.grid)
        self.assertAlmostEqual(analysis.burn_in, 2.0)
        self.assertEqual(analysis.fit_window, (5.0, 10.0))

    def test_unknown_key(self):
        """Edge case: unknown keys name their path."""
        text = MINIMAL_CONFIG.replace('"d": 0.0027', '"d": 0.0027, "nu": 0.1')
        with self.assertRaises(ConfigError) as ctx:
            parse_config(text)
        self.assertEqual(ctx.exception.key_path, "model.nu")

    def test_negative_rate(self):
        """Edge case: negative rate names the key."""
        with self.assertRaises(ConfigError) as ctx:
            parse_config(MINIMAL_CONFIG.replace('"gamma": 0.5', '"gamma": -0.5'))
        self.assertEqual(ctx.exception.key_path, "model.gamma")

    def test_missing_key(self):
        """Edge case: missing compartment."""
        with self.assertRaises(ConfigError) as ctx:
            parse_config(MINIMAL_CONFIG.replace(', "R": 25', ""))
        self.assertEqual(ctx.exception.key_path, "init.R")

    def test_malformed_number(self):
        """Edge case: a string where a number belongs."""
        with self.assertRaises(ConfigError) as ctx:
            parse_config(MINIMAL_CONFIG.replace('"b": 0.2', '"b": "0.2x"'))
        self.assertEqual(ctx.exception.key_path, "model.b")

    def test_malformed_json(self):
        """Edge case: not JSON at all."""
        with self.assertRaises(ConfigError):
            parse_config("{model: }")

    def test_mu_zero_rejected_for_thresholds(self):
        """mu = 0 parses but the thresholds command refuses it."""
        cfg = parse_config(MINIMAL_CONFIG.replace('"mu": 2e-5', '"mu": 0'))
        validate_for_command(cfg, "simulate")
        with self.assertRaises(ConfigError) as ctx:
            validate_for_command(cfg, "thresholds")
        self.assertEqual(ctx.exception.key_path, "model.mu")

    def test_control_command_needs_section(self):
        """Edge case: control without weights."""
        with self.assertRaises(ConfigError):
            validate_for_command(parse_config(MINIMAL_CONFIG), "control")

    def test_shipped_examples_parse(self):
        """All six example configs load; example 1 gives R0s = 1.132."""
        for k in range(1, 7):
            cfg = load_config(config.CONFIGS_DIR / f"example{k}.json")
            self.assertEqual(cfg.grid.dt, 0.002)
        cfg = load_config(config.CONFIGS_DIR / "example1.json")
        self.assertAlmostEqual(compute_r0s(cfg.model), 1.132, delta=1e-3)
        self.assertIsNotNone(load_config(config.CONFIGS_DIR / "example6.json").control)

    def test_sweep_choices(self):
        """Every projection mode and adjoint path is accepted; others name their key."""
        text = (config.CONFIGS_DIR / "example6.json").read_text(encoding="utf-8")
        for mode in config.PROJECTION_MODES:
            for path in config.ADJOINT_PATHS:
                variant = text.replace('"mode": "hamiltonian"', f'"mode": "{mode}"')
                variant = variant.replace('"adjoint_path": "nominal"', f'"adjoint_path": "{path}"')
                sweep = parse_config(variant).control.sweep
                self.assertEqual((sweep.mode, sweep.adjoint_path), (mode, path))
        with self.assertRaises(ConfigError) as ctx:
            parse_config(text.replace('"mode": "hamiltonian"', '"mode": "exact"'))
        self.assertEqual(ctx.exception.key_path, "control.sweep.mode")
        weights = parse_config(text).control.weights
        self.assertEqual((weights.p2, weights.q1, weights.q2), (1.0, 1e4, 1e-4))

    def test_overrides(self):
        """Command-line flags replace file values."""
        cfg = load_config(config.CONFIGS_DIR / "example6.json")
        cfg = apply_overrides(cfg, seed=5, trajectories=3, t_end=2.0, dt=0.01, mode="paper", out="elsewhere")
        self.assertEqual(cfg.ensemble.master_seed, 5)
        self.assertEqual(cfg.ensemble.n_traj, 3)
        self.assertEqual(cfg.grid.n_steps, 200)
        self.assertEqual(cfg.control.sweep.mode, "paper")
        self.assertEqual(cfg.control.sweep.master_seed, 5)
        self.assertEqual(cfg.output_dir, Path("elsewhere"))


class ReportWriterTests(unittest.TestCase):
    """CSV and JSON outputs."""

    def test_rows_round_trip_floats(self):
        """17 significant digits restore every float."""
        values = [0.1, 1.0 / 3.0, 2.0**-40, 123456789.123456789]
        text = render_rows(["a", "b", "c", "d"], [values])
        parsed = [float(v) for v in text.splitlines()[1].split(",")]
        self.assertEqual(parsed, values)

    def test_atomic_write_leaves_no_temp(self):
        """Only the final file remains."""
        with tempfile.TemporaryDirectory() as tmp_dir:
            writer = ReportWriter(app_logger, Path(tmp_dir) / "out")
            path = writer.write_json("report.json", {"b": 1, "a": np.float64(2.5)})
            self.assertEqual(sorted(p.name for p in path.parent.iterdir()), ["report.json"])
            self.assertTrue(path.read_text(encoding="utf-8").startswith('{\n  "a": 2.5'))
            writer.discard_pending()

    def test_abort_removes_completed_outputs(self):
        """A failed run leaves no files behind, only the directory."""
        with tempfile.TemporaryDirectory() as tmp_dir:
            out = Path(tmp_dir) / "out"
            writer = ReportWriter(app_logger, out)
            writer.write_rows("controls.csv", ["t", "u1", "u2"], [[0.0, 0.1, 0.2]])
            writer.write_json("sweep.json", {"converged": True})
            with self.assertLogs(app_logger, "WARNING"):
                writer.abort()
            self.assertEqual(list(out.iterdir()), [])
            self.assertEqual(writer.written, [])

    def test_trajectory_csv_header(self):
        """Controlled trajectories carry u1, u2 columns."""
        grid = TimeGrid(0, 1, 0.1)
        traj = simulate_trajectory(INIT1, EX1, grid, NoiseStream(0), controls=ControlGrid.constant(grid, 0.1, 0.2))
        header, rows = trajectory_table(traj)
        self.assertEqual(header, ["t", "S", "A", "I", "R", "u1", "u2"])
        self.assertEqual(rows.shape, (11, 7))
        np.testing.assert_array_equal(rows[:, 5], 0.1)

    def test_ensemble_csv_header(self):
        """Mean and three quantile blocks."""
        summary = run_ensemble(INIT1, EX1, TimeGrid(0, 1, 0.1), 3, 1)
        header, rows = ensemble_table(summary)
        self.assertEqual(header[:5], ["t", "mean_S", "mean_A", "mean_I", "mean_R"])
        self.assertEqual(header[5], "q05_S")
        self.assertEqual(header[-1], "q95_R")
        self.assertEqual(rows.shape[1], 17)


if __name__ == "__main__":
    # Run tests with verbosity
    loader = unittest.TestLoader()
    suite = loader.loadTestsFromModule(sys.modules[__name__])
    runner = unittest.TextTestRunner(verbosity=2)
    result = runner.run(suite)

    # Print summary
    print(f"\n{'=' * 70}")
    print(f"TEST SUMMARY")
    print(f"{'=' * 70}")
    print(f"Tests run: {result.testsRun}")
    print(
        f"[PASS] Passed: {result.testsRun - len(result.failures) - len(result.errors) - len(result.skipped)}"
    )
    if result.skipped:
        print(f"[SKIP] Skipped: {len(result.skipped)}")
    if result.failures:
        print(f"[FAIL] Failed: {len(result.failures)}")
    if result.errors:
        print(f"[ERROR] Errors: {len(result.errors)}")
    print(f"{'=' * 70}\n")

    sys.exit(0 if result.wasSuccessful() else 1)
