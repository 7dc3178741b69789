"""Long-run statistics over trajectories and ensembles.

Time averages, persistence and extinction verdicts, and empirical stationary
histograms. The asymptotic statements are checked on finite horizons: burn-in,
fit windows and tolerances are plain arguments with defaults in ``config``.
"""

from __future__ import annotations

from dataclasses import dataclass, field
from typing import List, Optional, Sequence, Tuple, Union

import numpy as np
from scipy import stats

from config import (
    DEFAULT_EXTINCTION_TOLERANCE,
    DEFAULT_N_BINS,
    HISTOGRAM_MASS_TOLERANCE,
)
from errors import DomainError, PreconditionError
from integrator import EnsembleSummary, Trajectory
from logger import logger as app_logger
from model import COMPARTMENTS, ModelParams, compartment_index
from thresholds import compute_extinction_index, compute_persistence_bounds, compute_r0s

log = app_logger.getChild("analysis")

Ensemble = Union[EnsembleSummary, Sequence[Trajectory]]


# ============================================================================
# Report types
# ============================================================================


@dataclass(frozen=True)
class PersistenceReport:
    time_averages: Tuple[float, float, float, float]
    bounds: Tuple[float, float, float, float]
    satisfied: Tuple[bool, bool, bool, bool]
    horizon: float
    n_traj: int

    @property
    def all_satisfied(self) -> bool:
        return all(self.satisfied)

    def to_dict(self) -> dict:
        return {
            "horizon": self.horizon,
            "n_traj": self.n_traj,
            "time_averages": dict(zip(COMPARTMENTS, self.time_averages)),
            "bounds": dict(zip(COMPARTMENTS, self.bounds)),
            "satisfied": dict(zip(COMPARTMENTS, self.satisfied)),
        }


@dataclass(frozen=True)
class ExtinctionReport:
    """Decay of A+I on one trajectory.

    ``log_slope`` is None when fewer than two positive samples fall inside the
    fit window; the verdict then rests on ``terminal_infected`` alone.
    """

    log_slope: Optional[float]
    terminal_infected: float
    s_terminal_mean: float
    s_equilibrium: Optional[float]
    predicted_bound: Optional[float]
    fit_window: Tuple[float, float]
    n_fit_points: int
    truncated: bool
    tolerance: float

    @property
    def extinct(self) -> bool:
        return self.terminal_infected < self.tolerance

    @property
    def decaying(self) -> bool:
        if self.log_slope is None:
            return self.extinct
        return self.log_slope <= 0.0

    def to_dict(self) -> dict:
        return {
            "log_slope": self.log_slope,
            "terminal_infected": self.terminal_infected,
            "s_terminal_mean": self.s_terminal_mean,
            "s_equilibrium": self.s_equilibrium,
            "predicted_bound": self.predicted_bound,
            "fit_window": list(self.fit_window),
            "n_fit_points": self.n_fit_points,
            "truncated": self.truncated,
            "extinct": self.extinct,
            "decaying": self.decaying,
        }


@dataclass(frozen=True)
class ExtinctionSummary:
    n_runs: int
    fraction_decaying: float
    fraction_extinct: float
    s_trend: Optional[float]
    s_terminal_mean: float
    s_equilibrium: Optional[float]
    predicted_bound: Optional[float]
    reports: List[ExtinctionReport] = field(repr=False, default_factory=list)

    @property
    def s_approaching(self) -> bool:
        """Ensemble-mean S moves toward Lambda/mu over the last quarter of the horizon."""
        if self.s_trend is None or self.s_equilibrium is None:
            return False
        return bool(np.sign(self.s_trend) == np.sign(self.s_equilibrium - self.s_terminal_mean))

    def to_dict(self) -> dict:
        return {
            "n_runs": self.n_runs,
            "fraction_decaying": self.fraction_decaying,
            "fraction_extinct": self.fraction_extinct,
            "s_trend": self.s_trend,
            "s_terminal_mean": self.s_terminal_mean,
            "s_equilibrium": self.s_equilibrium,
            "s_approaching": self.s_approaching,
            "predicted_bound": self.predicted_bound,
        }


@dataclass(frozen=True, eq=False)
class Histogram:
    component: str
    edges: np.ndarray
    masses: np.ndarray
    burn_in: float
    n_samples: int
    degenerate: bool = False

    def __post_init__(self) -> None:
        edges = np.asarray(self.edges, dtype=float)
        masses = np.asarray(self.masses, dtype=float)
        if edges.ndim != 1 or len(edges) < 2 or np.any(np.diff(edges) <= 0):
            raise DomainError("histogram edges must be strictly increasing")
        if masses.shape != (len(edges) - 1,):
            raise DomainError("need exactly one mass per bin")
        if masses.min() < 0 or abs(masses.sum() - 1.0) > HISTOGRAM_MASS_TOLERANCE:
            raise DomainError(f"histogram masses must be non-negative and sum to 1, got {masses.sum()}")
        object.__setattr__(self, "component", COMPARTMENTS[compartment_index(self.component)])
        object.__setattr__(self, "edges", edges)
        object.__setattr__(self, "masses", masses)

    @property
    def n_bins(self) -> int:
        return len(self.masses)

    def rows(self):
        """(bin_left, bin_right, mass) per bin."""
        return zip(self.edges[:-1], self.edges[1:], self.masses)

    def cdf(self, x) -> np.ndarray:
        """Distribution function with mass spread uniformly inside each bin."""
        cumulative = np.concatenate(([0.0], np.cumsum(self.masses)))
        return np.interp(x, self.edges, cumulative, left=0.0, right=1.0)


# ============================================================================
# Time averages and persistence
# ============================================================================


def time_average(traj: Trajectory, component: str) -> float:
    """Left Riemann average (1/(t_end - t0)) * sum x(t_k) (t_k+1 - t_k)."""
    values = traj.component(component)
    if traj.n_points == 1:
        return float(values[0])
    widths = np.diff(traj.times)
    return float(np.dot(values[:-1], widths) / (traj.times[-1] - traj.times[0]))


def _time_average_matrix(ensemble: Ensemble) -> Tuple[np.ndarray, float]:
    if isinstance(ensemble, EnsembleSummary):
        return ensemble.time_averages, ensemble.grid.duration
    trajectories = list(ensemble)
    if not trajectories:
        raise DomainError("ensemble is empty")
    averages = np.array([[time_average(t, c) for c in COMPARTMENTS] for t in trajectories])
    horizon = float(trajectories[0].times[-1] - trajectories[0].times[0])
    return averages, horizon


def persistence_check(ensemble: Ensemble, params: ModelParams) -> PersistenceReport:
    """Compare ensemble-mean time averages with the persistence lower bounds."""
    r0s = compute_r0s(params)
    if not r0s > 1.0:
        raise PreconditionError(f"persistence check needs R0s > 1, got R0s = {r0s:.6g}")
    bounds = compute_persistence_bounds(params)
    averages, horizon = _time_average_matrix(ensemble)
    means = averages.mean(axis=0)
    satisfied = tuple(bool(a > b) for a, b in zip(means, bounds))

    log.info(
        "Persistence: %d/4 bounds exceeded over horizon %g (%d trajectories)",
        sum(satisfied),
        horizon,
        len(averages),
    )
    return PersistenceReport(
        time_averages=tuple(float(v) for v in means),
        bounds=tuple(float(v) for v in bounds),
        satisfied=satisfied,
        horizon=horizon,
        n_traj=len(averages),
    )


# ============================================================================
# Extinction
# ============================================================================


def mean_trend(times, values, window: Optional[Tuple[float, float]] = None) -> float:
    """Least-squares slope of ``values`` against ``times`` (optionally inside a window)."""
    times = np.asarray(times, dtype=float)
    values = np.asarray(values, dtype=float)
    if window is not None:
        inside = (times >= window[0]) & (times <= window[1])
        times, values = times[inside], values[inside]
    if len(times) < 2:
        raise DomainError("trend needs at least two points")
    return float(stats.linregress(times, values).slope)


def _default_fit_window(traj: Trajectory, fraction: float = 0.5) -> Tuple[float, float]:
    t0, t1 = float(traj.times[0]), float(traj.times[-1])
    return (t1 - fraction * (t1 - t0), t1)


def _predicted_bound(params: ModelParams) -> Optional[float]:
    if params.mu <= 0:
        return None
    return compute_extinction_index(params)


def extinction_check(
    traj: Trajectory,
    params: ModelParams,
    fit_window: Optional[Tuple[float, float]] = None,
    tolerance: float = DEFAULT_EXTINCTION_TOLERANCE,
) -> ExtinctionReport:
    """Fit the exponential decay rate of A+I and report terminal values."""
    window = fit_window if fit_window is not None else _default_fit_window(traj)
    t_a, t_b = float(window[0]), float(window[1])
    if not t_a < t_b:
        raise DomainError(f"fit window must satisfy t_a < t_b, got {window}")

    infected = traj.component("A") + traj.component("I")
    inside = (traj.times >= t_a) & (traj.times <= t_b)
    times = traj.times[inside]
    values = infected[inside]

    truncated = False
    zeros = np.flatnonzero(values <= 0.0)
    if len(zeros):
        truncated = True
        times = times[: zeros[0]]
        values = values[: zeros[0]]
        log.warning("A+I reached 0 at t=%g; fit window truncated", traj.times[inside][zeros[0]])

    slope = None
    if len(times) >= 2:
        slope = float(stats.linregress(times, np.log(values)).slope)

    s_final = float(traj.component("S")[-1])
    return ExtinctionReport(
        log_slope=slope,
        terminal_infected=float(infected[-1]),
        s_terminal_mean=s_final,
        s_equilibrium=params.lam / params.mu if params.mu > 0 else None,
        predicted_bound=_predicted_bound(params),
        fit_window=(t_a, t_b),
        n_fit_points=len(times),
        truncated=truncated,
        tolerance=float(tolerance),
    )


def extinction_summary(
    ensemble: Ensemble,
    params: ModelParams,
    fit_window: Optional[Tuple[float, float]] = None,
    tolerance: float = DEFAULT_EXTINCTION_TOLERANCE,
) -> ExtinctionSummary:
    """Run ``extinction_check`` on every trajectory and aggregate the verdicts.

    ``s_trend`` is the slope of the ensemble-mean S over the last quarter of
    the horizon.
    """
    if isinstance(ensemble, EnsembleSummary):
        trajectories = ensemble.trajectories()
        times, mean_s = ensemble.times, ensemble.mean[:, 0]
    else:
        trajectories = list(ensemble)
        if not trajectories:
            raise DomainError("ensemble is empty")
        times = trajectories[0].times
        mean_s = np.mean([t.component("S") for t in trajectories], axis=0)

    reports = [extinction_check(t, params, fit_window, tolerance) for t in trajectories]
    n = len(reports)

    quarter = (times[-1] - 0.25 * (times[-1] - times[0]), times[-1])
    try:
        s_trend = mean_trend(times, mean_s, quarter)
    except DomainError:
        s_trend = None

    summary = ExtinctionSummary(
        n_runs=n,
        fraction_decaying=sum(r.decaying for r in reports) / n,
        fraction_extinct=sum(r.extinct for r in reports) / n,
        s_trend=s_trend,
        s_terminal_mean=float(mean_s[-1]),
        s_equilibrium=reports[0].s_equilibrium,
        predicted_bound=reports[0].predicted_bound,
        reports=reports,
    )
    log.info(
        "Extinction: %.0f%% decaying, %.0f%% extinct over %d runs",
        100 * summary.fraction_decaying,
        100 * summary.fraction_extinct,
        n,
    )
    return summary


# ============================================================================
# Stationary distribution
# ============================================================================


def stationary_histogram(
    traj: Trajectory,
    burn_in: float,
    n_bins: int = DEFAULT_N_BINS,
    component: str = "I",
) -> Histogram:
    """Equal-width histogram of the samples recorded after ``t0 + burn_in``."""
    if n_bins < 2:
        raise DomainError(f"n_bins must be >= 2, got {n_bins}")
    if burn_in < 0:
        raise DomainError(f"burn_in must be non-negative, got {burn_in}")
    t0, t_end = float(traj.times[0]), float(traj.times[-1])
    if not t_end - t0 - burn_in > 0:
        raise PreconditionError(f"burn-in {burn_in} leaves no samples before t_end={t_end}")

    samples = traj.component(component)[traj.times >= t0 + burn_in]
    lo, hi = float(samples.min()), float(samples.max())
    if lo == hi:
        log.warning("All %d retained %s samples equal %g; degenerate histogram", len(samples), component, lo)
        half = max(0.5, abs(lo) * 1e-9)
        return Histogram(
            component,
            np.array([lo - half, lo + half]),
            np.array([1.0]),
            burn_in=float(burn_in),
            n_samples=len(samples),
            degenerate=True,
        )

    counts, edges = np.histogram(samples, bins=n_bins, range=(lo, hi))
    return Histogram(
        component,
        edges,
        counts / counts.sum(),
        burn_in=float(burn_in),
        n_samples=len(samples),
    )


def relative_drift(traj: Trajectory, burn_in: float, component: str = "I") -> float:
    """|x(T) - x(t0 + burn_in)| / |x(t0 + burn_in)|, with x(t0 + burn_in) interpolated.

    On a noise-free path this measures how far the state still moves after the
    burn-in; a histogram of that window is not a stationary sample when it is large.
    """
    t0 = float(traj.times[0])
    values = traj.component(component)
    start = float(np.interp(t0 + burn_in, traj.times, values))
    if start == 0.0:
        return 0.0 if values[-1] == 0.0 else float("inf")
    return float(abs(values[-1] - start) / abs(start))


def histogram_distance(h1: Histogram, h2: Histogram) -> float:
    """Total-variation distance after rebinning both histograms onto the union of their edges."""
    if h1.component != h2.component:
        raise DomainError(f"cannot compare a {h1.component} histogram with a {h2.component} histogram")
    grid = np.union1d(h1.edges, h2.edges)
    p = np.diff(h1.cdf(grid))
    q = np.diff(h2.cdf(grid))
    return float(min(1.0, 0.5 * np.abs(p - q).sum()))
