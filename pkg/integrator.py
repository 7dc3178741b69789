"""Time stepping of the deterministic, stochastic and controlled SAIRS systems.

Noise
-----
Every trajectory owns a ``NoiseStream`` keyed by ``(master_seed,
trajectory_index)``. Its generator is numpy's PCG64 seeded with
``SeedSequence(master_seed, spawn_key=(trajectory_index,))``. Per step the four
standard normal draws zeta_1..zeta_4 are consumed in that order; they are drawn
ahead in blocks of shape ``(k, 4)``, which yields the same sequence as drawing
one step at a time.

Batches of trajectories are stepped in lock-step on an ``(n, 4)`` array. Row
``j`` only ever sees its own stream and elementwise arithmetic, so a
trajectory's numbers do not depend on which batch or thread computed it.

Positivity
----------
The Milstein update can leave the positive orthant for large noise. Negative
components are set to 0 after each step and counted as truncation events.
"""

from __future__ import annotations

import math
from concurrent.futures import ThreadPoolExecutor
from dataclasses import dataclass
from functools import cached_property
from typing import Dict, Iterable, List, Optional, Sequence

import numpy as np

from config import (
    DEFAULT_DT,
    DEFAULT_T0,
    DEFAULT_T_END,
    MAX_SUMMARY_POINTS,
    NOISE_CHUNK_STEPS,
    QUANTILE_LEVELS,
)
from errors import DomainError, SimulationError
from logger import logger as app_logger
from model import (
    COMPARTMENTS,
    ControlValue,
    ModelParams,
    State,
    compartment_index,
    diffusion_array,
    drift_array,
)

log = app_logger.getChild("integrator")


# ============================================================================
# Grids and streams
# ============================================================================


@dataclass(frozen=True)
class TimeGrid:
    """Uniform grid t0, t0+dt, ..., t0+n_steps*dt."""

    t0: float = DEFAULT_T0
    t_end: float = DEFAULT_T_END
    dt: float = DEFAULT_DT

    def __post_init__(self) -> None:
        for name in ("t0", "t_end", "dt"):
            value = float(getattr(self, name))
            if not math.isfinite(value):
                raise DomainError(f"{name} must be finite, got {value}")
            object.__setattr__(self, name, value)
        if self.dt <= 0:
            raise DomainError(f"dt must be positive, got {self.dt}")
        if not self.t0 < self.t_end:
            raise DomainError(f"t0 must be before t_end ({self.t0} >= {self.t_end})")
        if self.n_steps < 1:
            raise DomainError("grid must contain at least one step")

    @property
    def n_steps(self) -> int:
        return int(round((self.t_end - self.t0) / self.dt))

    @property
    def duration(self) -> float:
        """Length actually covered by the steps, n_steps * dt."""
        return self.n_steps * self.dt

    def times(self) -> np.ndarray:
        return self.t0 + np.arange(self.n_steps + 1) * self.dt

    def record_indices(self, stride: int = 1) -> np.ndarray:
        """Step indices kept with the given stride; always includes 0 and n_steps."""
        if stride < 1:
            raise DomainError(f"record stride must be >= 1, got {stride}")
        indices = np.arange(0, self.n_steps + 1, stride)
        if indices[-1] != self.n_steps:
            indices = np.append(indices, self.n_steps)
        return indices

    def with_horizon(self, t_end: Optional[float] = None, dt: Optional[float] = None) -> "TimeGrid":
        return TimeGrid(self.t0, self.t_end if t_end is None else t_end, self.dt if dt is None else dt)


@dataclass(frozen=True, eq=False)
class ControlGrid:
    """Piecewise-constant controls: (u1[k], u2[k]) act on [t_k, t_k+1)."""

    grid: TimeGrid
    u1: np.ndarray
    u2: np.ndarray

    def __post_init__(self) -> None:
        for name in ("u1", "u2"):
            values = np.array(getattr(self, name), dtype=float)
            if values.shape != (self.grid.n_steps,):
                raise DomainError(
                    f"{name} needs {self.grid.n_steps} entries, got shape {values.shape}"
                )
            if not np.all(np.isfinite(values)):
                raise DomainError(f"{name} contains non-finite entries")
            if values.min() < 0.0 or values.max() > 1.0:
                raise DomainError(f"{name} must lie in [0, 1]")
            values.setflags(write=False)
            object.__setattr__(self, name, values)

    @classmethod
    def constant(cls, grid: TimeGrid, u1: float = 0.0, u2: float = 0.0) -> "ControlGrid":
        n = grid.n_steps
        return cls(grid, np.full(n, float(u1)), np.full(n, float(u2)))

    @classmethod
    def from_array(cls, grid: TimeGrid, values: np.ndarray) -> "ControlGrid":
        values = np.asarray(values, dtype=float)
        return cls(grid, values[:, 0], values[:, 1])

    def value(self, step: int) -> ControlValue:
        return ControlValue(self.u1[step], self.u2[step])

    def as_array(self) -> np.ndarray:
        return np.column_stack((self.u1, self.u2))

    def sup_distance(self, other: "ControlGrid") -> float:
        return float(
            max(np.max(np.abs(self.u1 - other.u1)), np.max(np.abs(self.u2 - other.u2)))
        )


@dataclass(frozen=True)
class NoiseStream:
    master_seed: int
    trajectory_index: int = 0

    def __post_init__(self) -> None:
        if not 0 <= int(self.master_seed) < 2**64:
            raise DomainError(f"master_seed must be a 64-bit unsigned integer, got {self.master_seed}")
        if int(self.trajectory_index) < 0:
            raise DomainError("trajectory_index must be non-negative")
        object.__setattr__(self, "master_seed", int(self.master_seed))
        object.__setattr__(self, "trajectory_index", int(self.trajectory_index))

    def generator(self) -> np.random.Generator:
        seq = np.random.SeedSequence(self.master_seed, spawn_key=(self.trajectory_index,))
        return np.random.Generator(np.random.PCG64(seq))


class _NoiseBlocks:
    """Serves one (n, 4) block of standard normals per step for a batch of streams."""

    def __init__(self, streams: Sequence[NoiseStream], n_steps: int, enabled: bool) -> None:
        self._generators = [stream.generator() for stream in streams] if enabled else None
        self._zeros = np.zeros((len(streams), 4))
        self._remaining = n_steps
        self._buffer: Optional[np.ndarray] = None
        self._position = 0

    def next(self) -> np.ndarray:
        if self._generators is None:
            return self._zeros
        if self._buffer is None or self._position == len(self._buffer):
            k = min(NOISE_CHUNK_STEPS, self._remaining)
            self._buffer = np.stack([g.standard_normal((k, 4)) for g in self._generators], axis=1)
            self._remaining -= k
            self._position = 0
        z = self._buffer[self._position]
        self._position += 1
        return z


# ============================================================================
# Trajectories
# ============================================================================


@dataclass(frozen=True, eq=False)
class Trajectory:
    """States on (a stride of) the time grid, plus the controls that drove them."""

    grid: TimeGrid
    times: np.ndarray
    states: np.ndarray
    controls: Optional[np.ndarray] = None
    truncation_events: int = 0
    stride: int = 1

    def __post_init__(self) -> None:
        times = np.asarray(self.times, dtype=float)
        states = np.asarray(self.states, dtype=float)
        if states.ndim != 2 or states.shape[1] != 4:
            raise DomainError(f"states must have shape (n, 4), got {states.shape}")
        if times.shape != (states.shape[0],):
            raise DomainError("times and states must have the same length")
        if len(times) == 0:
            raise DomainError("trajectory is empty")
        if not np.all(np.isfinite(states)) or states.min() < 0:
            raise DomainError("trajectory states must be finite and non-negative")
        object.__setattr__(self, "times", times)
        object.__setattr__(self, "states", states)

    @classmethod
    def from_states(cls, grid: TimeGrid, states, stride: int = 1, **kwargs) -> "Trajectory":
        """Build a trajectory whose states sit on ``grid.record_indices(stride)``."""
        times = grid.t0 + grid.record_indices(stride) * grid.dt
        return cls(grid, times, np.asarray(states, dtype=float), stride=stride, **kwargs)

    @property
    def n_points(self) -> int:
        return len(self.times)

    @property
    def final(self) -> State:
        return State.from_array(self.states[-1])

    def component(self, name: str) -> np.ndarray:
        return self.states[:, compartment_index(name)]


@dataclass(frozen=True, eq=False)
class EnsembleSummary:
    """Per-time statistics and per-trajectory aggregates of an ensemble run.

    ``paths`` holds every trajectory on the recorded indices, shape
    (n_points, n_traj, 4). ``time_averages`` are left Riemann sums taken at
    full step resolution regardless of the record stride.
    """

    grid: TimeGrid
    record_indices: np.ndarray
    paths: np.ndarray
    time_averages: np.ndarray
    terminal: np.ndarray
    truncation_events: np.ndarray
    master_seed: int
    controls: Optional[ControlGrid] = None

    @property
    def n_traj(self) -> int:
        return self.paths.shape[1]

    @property
    def times(self) -> np.ndarray:
        return self.grid.t0 + self.record_indices * self.grid.dt

    @cached_property
    def mean(self) -> np.ndarray:
        return self.paths.mean(axis=1)

    @cached_property
    def quantiles(self) -> Dict[float, np.ndarray]:
        values = np.quantile(self.paths, QUANTILE_LEVELS, axis=1)
        return {level: values[j] for j, level in enumerate(QUANTILE_LEVELS)}

    @property
    def mean_time_averages(self) -> np.ndarray:
        return self.time_averages.mean(axis=0)

    def trajectory(self, index: int) -> Trajectory:
        controls = self.controls.as_array() if self.controls is not None else None
        return Trajectory(
            self.grid,
            self.times,
            self.paths[:, index, :],
            controls=controls,
            truncation_events=int(self.truncation_events[index]),
            stride=int(self.record_indices[1] - self.record_indices[0]) if len(self.record_indices) > 1 else 1,
        )

    def trajectories(self) -> List[Trajectory]:
        return [self.trajectory(j) for j in range(self.n_traj)]


# ============================================================================
# Step functions
# ============================================================================


def euler_step_array(x: np.ndarray, params: ModelParams, dt: float, u=None) -> np.ndarray:
    return x + drift_array(x, params, u) * dt


def milstein_step_array(x: np.ndarray, params: ModelParams, dt: float, z: np.ndarray, u=None):
    """One Milstein step for diagonal linear noise; returns (clamped state, clamp counts)."""
    sigmas = params.sigmas
    x_new = (
        x
        + drift_array(x, params, u) * dt
        + diffusion_array(x, params) * math.sqrt(dt) * z
        + 0.5 * sigmas * sigmas * x * (z * z - 1.0) * dt
    )
    negative = x_new < 0.0
    clamps = negative.sum(axis=-1)
    if negative.any():
        x_new = np.where(negative, 0.0, x_new)
    return x_new, clamps


def _check_finite(x: np.ndarray, step: int, trajectory_indices: Sequence[int]) -> None:
    finite = np.isfinite(x)
    if finite.all():
        return
    rows = finite.reshape(-1, 4).all(axis=1)
    bad = int(np.argmin(rows))
    raise SimulationError("non-finite state", step_index=step, trajectory_index=trajectory_indices[bad])


def euler_step(state: State, params: ModelParams, dt: float, u: Optional[ControlValue] = None) -> State:
    """Explicit Euler step of the (controlled) drift; the noise-free reference."""
    if not dt > 0:
        raise DomainError(f"dt must be positive, got {dt}")
    x = euler_step_array(state.as_array(), params, dt, None if u is None else u.as_array())
    _check_finite(x, 0, [0])
    return State.from_array(np.maximum(x, 0.0))


def milstein_step(
    state: State,
    params: ModelParams,
    u: Optional[ControlValue],
    dt: float,
    z,
    step_index: int = 0,
) -> State:
    """Milstein update x + f dt + sigma x sqrt(dt) z + (sigma^2/2) x (z^2 - 1) dt, clamped at 0.

    Clamped components are counted and logged at WARNING.
    """
    if not dt > 0:
        raise DomainError(f"dt must be positive, got {dt}")
    z = np.asarray(z, dtype=float)
    if z.shape != (4,) or not np.all(np.isfinite(z)):
        raise DomainError("z must be four finite standard normal draws")
    x, clamps = milstein_step_array(state.as_array(), params, dt, z, None if u is None else u.as_array())
    _check_finite(x, step_index, [0])
    if clamps:
        log.warning("Step %d: %d negative component(s) clamped to 0", step_index, int(clamps))
    return State.from_array(x)


# ============================================================================
# Integration
# ============================================================================


@dataclass
class _BatchResult:
    paths: np.ndarray
    integrals: np.ndarray
    clamps: np.ndarray


def _integrate_batch(
    x0: np.ndarray,
    params: ModelParams,
    grid: TimeGrid,
    streams: Sequence[NoiseStream],
    controls: Optional[ControlGrid],
    record_indices: np.ndarray,
) -> _BatchResult:
    n = len(streams)
    indices = [s.trajectory_index for s in streams]
    dt = grid.dt
    x = np.array(np.broadcast_to(np.asarray(x0, dtype=float), (n, 4)))
    paths = np.empty((len(record_indices), n, 4))
    integrals = np.zeros((n, 4))
    clamps = np.zeros(n, dtype=np.int64)
    noise = _NoiseBlocks(streams, grid.n_steps, enabled=not params.noise_free)
    u_all = controls.as_array() if controls is not None else None

    paths[0] = x
    slot = 1
    for k in range(grid.n_steps):
        integrals += x * dt
        u = None if u_all is None else u_all[k]
        x, counts = milstein_step_array(x, params, dt, noise.next(), u)
        _check_finite(x, k, indices)
        clamps += counts
        if slot < len(record_indices) and record_indices[slot] == k + 1:
            paths[slot] = x
            slot += 1
    return _BatchResult(paths, integrals, clamps)


def _check_controls(controls: Optional[ControlGrid], grid: TimeGrid) -> None:
    if controls is not None and controls.grid != grid:
        raise DomainError("control grid does not match the simulation grid")


def simulate_batch(
    init: State,
    params: ModelParams,
    grid: TimeGrid,
    streams: Sequence[NoiseStream],
    controls: Optional[ControlGrid] = None,
    record_every: int = 1,
) -> List[Trajectory]:
    """Simulate several independent streams together (one trajectory per stream)."""
    _check_controls(controls, grid)
    record = grid.record_indices(record_every)
    result = _integrate_batch(init.as_array(), params, grid, streams, controls, record)
    times = grid.t0 + record * grid.dt
    control_array = controls.as_array() if controls is not None else None
    trajectories = []
    for j, stream in enumerate(streams):
        clamped = int(result.clamps[j])
        if clamped:
            log.warning(
                "Trajectory %d: %d negative components truncated to 0",
                stream.trajectory_index,
                clamped,
            )
        trajectories.append(
            Trajectory(
                grid,
                times,
                result.paths[:, j, :],
                controls=control_array,
                truncation_events=clamped,
                stride=record_every,
            )
        )
    return trajectories


def simulate_trajectory(
    init: State,
    params: ModelParams,
    grid: TimeGrid,
    noise: NoiseStream,
    controls: Optional[ControlGrid] = None,
    record_every: int = 1,
) -> Trajectory:
    """Milstein path of the (controlled) stochastic system for one noise stream."""
    return simulate_batch(init, params, grid, [noise], controls, record_every)[0]


def state_path(
    init: State,
    params: ModelParams,
    grid: TimeGrid,
    controls: Optional[ControlGrid] = None,
    noise: Optional[NoiseStream] = None,
) -> np.ndarray:
    """Full-resolution (n_steps + 1, 4) path; noise-free unless a stream is given."""
    if noise is None:
        params = params.without_noise()
        noise = NoiseStream(0)
    _check_controls(controls, grid)
    record = grid.record_indices(1)
    return _integrate_batch(init.as_array(), params, grid, [noise], controls, record).paths[:, 0, :]


def simulate_deterministic(
    init: State,
    params: ModelParams,
    grid: TimeGrid,
    record_every: int = 1,
    controls: Optional[ControlGrid] = None,
) -> Trajectory:
    """Classical fourth-order Runge-Kutta integration of the noise-free system."""
    _check_controls(controls, grid)
    dt = grid.dt
    record = grid.record_indices(record_every)
    x = init.as_array()
    states = np.empty((len(record), 4))
    states[0] = x
    u_all = controls.as_array() if controls is not None else None
    clamped = 0
    slot = 1
    for k in range(grid.n_steps):
        u = None if u_all is None else u_all[k]
        k1 = drift_array(x, params, u)
        k2 = drift_array(x + 0.5 * dt * k1, params, u)
        k3 = drift_array(x + 0.5 * dt * k2, params, u)
        k4 = drift_array(x + dt * k3, params, u)
        x = x + dt / 6.0 * (k1 + 2.0 * k2 + 2.0 * k3 + k4)
        _check_finite(x, k, [0])
        negative = x < 0.0
        if negative.any():
            clamped += int(negative.sum())
            x = np.where(negative, 0.0, x)
        if slot < len(record) and record[slot] == k + 1:
            states[slot] = x
            slot += 1
    return Trajectory(
        grid,
        grid.t0 + record * dt,
        states,
        controls=u_all,
        truncation_events=clamped,
        stride=record_every,
    )


def default_record_every(grid: TimeGrid) -> int:
    """Smallest stride keeping at most MAX_SUMMARY_POINTS recorded points."""
    return max(1, math.ceil(grid.n_steps / (MAX_SUMMARY_POINTS - 1)))


def run_ensemble(
    init: State,
    params: ModelParams,
    grid: TimeGrid,
    n_traj: int,
    master_seed: int,
    controls: Optional[ControlGrid] = None,
    record_every: Optional[int] = None,
    workers: int = 1,
) -> EnsembleSummary:
    """Simulate trajectories 0..n_traj-1 of ``master_seed`` and summarise them.

    Trajectories are split into ``workers`` contiguous batches; with more than
    one worker the batches run on a thread pool. Each batch writes into its own
    slice of pre-allocated arrays, so the result does not depend on scheduling.
    """
    if n_traj < 1:
        raise DomainError(f"n_traj must be >= 1, got {n_traj}")
    _check_controls(controls, grid)
    stride = record_every if record_every is not None else default_record_every(grid)
    record = grid.record_indices(stride)
    workers = max(1, min(int(workers), n_traj))

    paths = np.empty((len(record), n_traj, 4))
    integrals = np.empty((n_traj, 4))
    clamps = np.empty(n_traj, dtype=np.int64)
    batches = [b for b in np.array_split(np.arange(n_traj), workers) if len(b)]

    log.info(
        "Ensemble: %d trajectories x %d steps (dt=%g, seed=%d, %d batch(es))",
        n_traj,
        grid.n_steps,
        grid.dt,
        master_seed,
        len(batches),
    )

    def run(batch: np.ndarray) -> None:
        streams = [NoiseStream(master_seed, int(j)) for j in batch]
        result = _integrate_batch(init.as_array(), params, grid, streams, controls, record)
        lo, hi = int(batch[0]), int(batch[-1]) + 1
        paths[:, lo:hi, :] = result.paths
        integrals[lo:hi] = result.integrals
        clamps[lo:hi] = result.clamps
        log.debug("Batch %d-%d done", lo, hi - 1)

    if len(batches) == 1:
        run(batches[0])
    else:
        with ThreadPoolExecutor(max_workers=len(batches)) as pool:
            # list() re-raises the first worker exception
            list(pool.map(run, batches))

    total_clamps = int(clamps.sum())
    if total_clamps:
        log.warning(
            "%d truncation events over %d trajectory steps",
            total_clamps,
            n_traj * grid.n_steps,
        )

    return EnsembleSummary(
        grid=grid,
        record_indices=record,
        paths=paths,
        time_averages=integrals / grid.duration,
        terminal=paths[-1].copy(),
        truncation_events=clamps,
        master_seed=int(master_seed),
        controls=controls,
    )


def sweep_parameter(
    init: State,
    params: ModelParams,
    grid: TimeGrid,
    name: str,
    values: Iterable[float],
    noise: NoiseStream,
    record_every: int = 1,
) -> Dict[float, Trajectory]:
    """Re-run one noise stream for each value of a parameter (``sigma`` sets all four)."""
    results = {}
    for value in values:
        varied = params.replace(**{name: float(value)})
        log.info("Parameter sweep: %s = %g", name, value)
        results[float(value)] = simulate_trajectory(init, varied, grid, noise, record_every=record_every)
    return results


__all__ = [
    "COMPARTMENTS",
    "ControlGrid",
    "EnsembleSummary",
    "NoiseStream",
    "TimeGrid",
    "Trajectory",
    "default_record_every",
    "euler_step",
    "milstein_step",
    "run_ensemble",
    "simulate_batch",
    "simulate_deterministic",
    "simulate_trajectory",
    "state_path",
    "sweep_parameter",
]
