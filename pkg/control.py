"""Optimal vaccination (u1) and isolation (u2) for the controlled SAIRS system.

Pontryagin setup. With running cost

    l(x, u) = P1 S + P2 A + P3 I + Q1 u1^2/2 + Q2 u2^2/2
              + (k1 S^2 + k2 A^2 + k3 I^2 + k4 R^2)/2

the Hamiltonian is H = <f(x, u), m> + l(x, u) + <g(x), n>. The costates obey
dm/dt = -dH/dx (computed exactly, including the saturated-incidence
derivatives) with terminal value m(T) = -k * X(T). The diffusion costates n
are taken as 0 in the sweep.

The forward-backward sweep alternates a forward state pass (noise-free by
default, or one frozen noise realization), a backward Euler pass for m and a
relaxed projection of the controls onto [0, 1].
"""

from __future__ import annotations

from dataclasses import dataclass, field, fields
from typing import List, Optional, Tuple

import numpy as np
from scipy import stats

from config import (
    ADJOINT_PATHS,
    DEFAULT_ADJOINT_PATH,
    DEFAULT_MASTER_SEED,
    DEFAULT_MAX_ITER,
    DEFAULT_PROJECTION_MODE,
    DEFAULT_RELAXATION,
    DEFAULT_TOLERANCE,
    PROJECTION_MODES,
)
from errors import DomainError, PreconditionError
from integrator import ControlGrid, NoiseStream, TimeGrid, run_ensemble, state_path
from logger import logger as app_logger
from model import COMPARTMENTS, ControlValue, ModelParams, State, drift_array, incidence_force

log = app_logger.getChild("control")


# ============================================================================
# Types
# ============================================================================


@dataclass(frozen=True)
class ObjectiveWeights:
    """Cost weights: P on S, A, I; Q on control effort; k on the terminal state.

    All weights are non-negative. The projections divide by q1 and q2, so
    ``require_positive_effort`` is checked wherever controls are optimised.
    """

    p1: float = 0.0
    p2: float = 0.0
    p3: float = 0.0
    q1: float = 1.0
    q2: float = 1.0
    k1: float = 0.0
    k2: float = 0.0
    k3: float = 0.0
    k4: float = 0.0

    def __post_init__(self) -> None:
        for f in fields(self):
            value = getattr(self, f.name)
            if isinstance(value, bool) or not isinstance(value, (int, float, np.floating, np.integer)):
                raise DomainError(f"weight {f.name} must be a number")
            value = float(value)
            if not np.isfinite(value) or value < 0:
                raise DomainError(f"weight {f.name} must be finite and non-negative, got {value}")
            object.__setattr__(self, f.name, value)

    @property
    def p(self) -> np.ndarray:
        """State weights padded to four compartments (R carries no running cost)."""
        return np.array([self.p1, self.p2, self.p3, 0.0])

    @property
    def q(self) -> np.ndarray:
        return np.array([self.q1, self.q2])

    @property
    def k(self) -> np.ndarray:
        return np.array([self.k1, self.k2, self.k3, self.k4])

    def require_positive_effort(self) -> None:
        if not (self.q1 > 0 and self.q2 > 0):
            raise PreconditionError("control projection needs q1 > 0 and q2 > 0")

    @classmethod
    def from_mapping(cls, data) -> "ObjectiveWeights":
        return cls(**dict(data))

    def to_dict(self) -> dict:
        return {f.name: getattr(self, f.name) for f in fields(self)}


@dataclass(frozen=True)
class AdjointState:
    m1: float = 0.0
    m2: float = 0.0
    m3: float = 0.0
    m4: float = 0.0
    n1: float = 0.0
    n2: float = 0.0
    n3: float = 0.0
    n4: float = 0.0

    def __post_init__(self) -> None:
        for f in fields(self):
            value = float(getattr(self, f.name))
            if not np.isfinite(value):
                raise DomainError(f"costate {f.name} must be finite")
            object.__setattr__(self, f.name, value)

    @property
    def m(self) -> np.ndarray:
        return np.array([self.m1, self.m2, self.m3, self.m4])

    @property
    def n(self) -> np.ndarray:
        return np.array([self.n1, self.n2, self.n3, self.n4])

    @classmethod
    def from_arrays(cls, m, n=None) -> "AdjointState":
        n = np.zeros(4) if n is None else n
        return cls(*(float(v) for v in m), *(float(v) for v in n))

    @classmethod
    def terminal(cls, x_final: State, weights: ObjectiveWeights) -> "AdjointState":
        """m(T) = -k * X(T), n(T) = 0."""
        return cls.from_arrays(-weights.k * x_final.as_array())


@dataclass(frozen=True)
class SweepConfig:
    max_iter: int = DEFAULT_MAX_ITER
    tol: float = DEFAULT_TOLERANCE
    relaxation: float = DEFAULT_RELAXATION
    mode: str = DEFAULT_PROJECTION_MODE
    adjoint_path: str = DEFAULT_ADJOINT_PATH
    master_seed: int = DEFAULT_MASTER_SEED

    def __post_init__(self) -> None:
        if isinstance(self.max_iter, bool) or int(self.max_iter) != self.max_iter or self.max_iter < 1:
            raise DomainError(f"max_iter must be a positive integer, got {self.max_iter}")
        if not self.tol > 0:
            raise DomainError(f"tol must be positive, got {self.tol}")
        if not 0 < self.relaxation <= 1:
            raise DomainError(f"relaxation must lie in (0, 1], got {self.relaxation}")
        if self.mode not in PROJECTION_MODES:
            raise DomainError(f"mode must be one of {PROJECTION_MODES}, got {self.mode!r}")
        if self.adjoint_path not in ADJOINT_PATHS:
            raise DomainError(f"adjoint_path must be one of {ADJOINT_PATHS}, got {self.adjoint_path!r}")
        object.__setattr__(self, "max_iter", int(self.max_iter))

    def to_dict(self) -> dict:
        return {f.name: getattr(self, f.name) for f in fields(self)}


@dataclass(frozen=True)
class SweepReport:
    iterations: int
    converged: bool
    final_objective: float
    control_change_history: List[float] = field(default_factory=list)
    objective_history: List[float] = field(default_factory=list)
    stationarity_residual: Optional[float] = None
    mode: str = DEFAULT_PROJECTION_MODE
    adjoint_path: str = DEFAULT_ADJOINT_PATH

    def to_dict(self) -> dict:
        return {
            "iterations": self.iterations,
            "converged": self.converged,
            "final_objective": self.final_objective,
            "control_change_history": list(self.control_change_history),
            "objective_history": list(self.objective_history),
            "stationarity_residual": self.stationarity_residual,
            "mode": self.mode,
            "adjoint_path": self.adjoint_path,
        }


@dataclass(frozen=True)
class ObjectiveEstimate:
    mean: float
    std_error: float
    n_traj: int


@dataclass(frozen=True, eq=False)
class ControlComparison:
    """Ensemble means with and without control, driven by the same noise streams."""

    times: np.ndarray
    uncontrolled_mean: np.ndarray
    controlled_mean: np.ndarray

    def terminal_ratio(self, component: str) -> float:
        """Controlled / uncontrolled ensemble mean of ``component`` at t = T."""
        j = COMPARTMENTS.index(component.upper())
        base = self.uncontrolled_mean[-1, j]
        if base == 0:
            return 0.0 if self.controlled_mean[-1, j] == 0 else float("inf")
        return float(self.controlled_mean[-1, j] / base)


# ============================================================================
# Array kernels
# ============================================================================


def _incidence_partials(a, i, params: ModelParams):
    """(dF/dA, dF/dI) of the incidence sum F(A, I)."""
    return (
        params.beta_A / (1.0 + params.b * a) ** 2,
        params.beta_I / (1.0 + params.b * i) ** 2,
    )


def objective_integrand_array(x: np.ndarray, u: np.ndarray, weights: ObjectiveWeights) -> np.ndarray:
    """P.x + Q.u^2/2, the integrand of the objective."""
    return x @ weights.p + 0.5 * (u * u) @ weights.q


def running_cost_array(x: np.ndarray, u: np.ndarray, weights: ObjectiveWeights) -> np.ndarray:
    """l(x, u) as it enters H: the objective integrand plus k.x^2/2."""
    return objective_integrand_array(x, u, weights) + 0.5 * (x * x) @ weights.k


def hamiltonian_gradient_x(x, u, m, n, weights: ObjectiveWeights, params: ModelParams) -> np.ndarray:
    """dH/dx over ``(..., 4)`` arrays."""
    s, a, i, r = x[..., 0], x[..., 1], x[..., 2], x[..., 3]
    u1, u2 = u[..., 0], u[..., 1]
    m1, m2, m3, m4 = m[..., 0], m[..., 1], m[..., 2], m[..., 3]
    open_frac = 1.0 - u2
    force = incidence_force(a, i, params)
    dF_dA, dF_dI = _incidence_partials(a, i, params)
    spread = m2 - m1

    out = np.empty(np.broadcast_shapes(np.shape(x), np.shape(m)), dtype=float)
    out[..., 0] = (
        force * open_frac * spread
        - (params.mu + u1) * m1
        + u1 * m4
        + weights.p1
        + weights.k1 * s
    )
    out[..., 1] = (
        dF_dA * open_frac * s * spread
        - (params.alpha + params.delta_A + params.mu) * m2
        + params.alpha * m3
        + params.delta_A * m4
        + weights.p2
        + weights.k2 * a
    )
    out[..., 2] = (
        dF_dI * open_frac * s * spread
        - (params.delta_I + params.mu + params.d) * m3
        + params.delta_I * m4
        + weights.p3
        + weights.k3 * i
    )
    out[..., 3] = params.gamma * m1 - (params.gamma + params.mu) * m4 + weights.k4 * r
    return out + params.sigmas * n


def adjoint_rhs_array(x, u, m, n, weights: ObjectiveWeights, params: ModelParams) -> np.ndarray:
    return -hamiltonian_gradient_x(x, u, m, n, weights, params)


def control_gradient_array(x, u, m, weights: ObjectiveWeights, params: ModelParams) -> np.ndarray:
    """(dH/du1, dH/du2) over ``(..., 4)`` arrays; independent of n."""
    s = x[..., 0]
    force = incidence_force(x[..., 1], x[..., 2], params)
    out = np.empty(np.broadcast_shapes(np.shape(x)[:-1], np.shape(m)[:-1]) + (2,))
    out[..., 0] = weights.q1 * u[..., 0] - (m[..., 0] - m[..., 3]) * s
    out[..., 1] = weights.q2 * u[..., 1] + (m[..., 0] - m[..., 1]) * force * s
    return out


def stationary_controls_array(x, m, weights: ObjectiveWeights, params: ModelParams) -> np.ndarray:
    """Unclamped zeros of dH/du; H is convex in u, so clipping them to [0, 1] gives the minimiser."""
    s = x[..., 0]
    m1, m2, m4 = m[..., 0], m[..., 1], m[..., 3]
    out = np.empty(np.broadcast_shapes(np.shape(x), np.shape(m))[:-1] + (2,))
    out[..., 0] = (m1 - m4) * s / weights.q1
    out[..., 1] = (m2 - m1) * incidence_force(x[..., 1], x[..., 2], params) * s / weights.q2
    return out


def projection_array(x, m, weights: ObjectiveWeights, params: ModelParams, mode: str) -> np.ndarray:
    """Pointwise minimisers of H over [0, 1]^2 (mode "hamiltonian") or the isolation-flux closed form ("paper")."""
    if mode == "hamiltonian":
        out = stationary_controls_array(x, m, weights, params)
    elif mode == "paper":
        a, i = x[..., 1], x[..., 2]
        m1, m2, m3, m4 = m[..., 0], m[..., 1], m[..., 2], m[..., 3]
        out = np.empty(np.broadcast_shapes(np.shape(x), np.shape(m))[:-1] + (2,))
        out[..., 0] = (m1 - m4) * x[..., 0] / weights.q1
        out[..., 1] = ((m2 - m4) * a + (m3 - m4) * i) / weights.q2
    else:
        raise DomainError(f"mode must be one of {PROJECTION_MODES}, got {mode!r}")
    return np.clip(out, 0.0, 1.0)


# ============================================================================
# Operations on single points
# ============================================================================


def _costates(m, n) -> Tuple[np.ndarray, np.ndarray]:
    if isinstance(m, AdjointState):
        return m.m, m.n
    m = np.asarray(m, dtype=float)
    n = np.zeros(4) if n is None else np.asarray(n, dtype=float)
    if m.shape != (4,) or n.shape != (4,) or not (np.all(np.isfinite(m)) and np.all(np.isfinite(n))):
        raise DomainError("costates must be four finite values")
    return m, n


def hamiltonian(
    x: State,
    u: ControlValue,
    m,
    n,
    weights: ObjectiveWeights,
    params: ModelParams,
) -> float:
    """H(x, u, m, n) = <f(x, u), m> + l(x, u) + <g(x), n>."""
    m, n = _costates(m, n)
    xs, us = x.as_array(), u.as_array()
    f = drift_array(xs, params, us)
    g = xs * params.sigmas
    return float(f @ m + running_cost_array(xs, us, weights) + g @ n)


def hamiltonian_control_gradient(
    x: State,
    u: ControlValue,
    m,
    n,
    weights: ObjectiveWeights,
    params: ModelParams,
) -> Tuple[float, float]:
    m, _ = _costates(m, n)
    grad = control_gradient_array(x.as_array(), u.as_array(), m, weights, params)
    return float(grad[0]), float(grad[1])


def adjoint_rhs(
    x: State,
    u: ControlValue,
    m,
    n,
    weights: ObjectiveWeights,
    params: ModelParams,
) -> np.ndarray:
    """dm/dt = -dH/dx."""
    m, n = _costates(m, n)
    return adjoint_rhs_array(x.as_array(), u.as_array(), m, n, weights, params)


def control_projection(
    x: State,
    m,
    weights: ObjectiveWeights,
    params: ModelParams,
    mode: str = DEFAULT_PROJECTION_MODE,
) -> ControlValue:
    weights.require_positive_effort()
    m, _ = _costates(m, None)
    u1, u2 = projection_array(x.as_array(), m, weights, params, mode)
    return ControlValue(float(u1), float(u2))


# ============================================================================
# Objective
# ============================================================================


def path_cost(path: np.ndarray, controls: ControlGrid, weights: ObjectiveWeights) -> float:
    """Objective along one full-resolution path: left Riemann sum plus terminal form."""
    dt = controls.grid.dt
    running = objective_integrand_array(path[:-1], controls.as_array(), weights).sum() * dt
    terminal = 0.5 * (path[-1] ** 2) @ weights.k
    return float(running + terminal)


def objective_estimate(
    init: State,
    params: ModelParams,
    weights: ObjectiveWeights,
    controls: ControlGrid,
    n_traj: int,
    master_seed: int,
    workers: int = 1,
) -> ObjectiveEstimate:
    """Monte Carlo estimate of E[int_0^T (P.x + Q.u^2/2) dt + (k.X(T)^2)/2].

    The running integral of P.x comes from the ensemble's full-resolution time
    averages; the control-effort integral is deterministic.
    """
    grid = controls.grid
    ensemble = run_ensemble(init, params, grid, n_traj, master_seed, controls=controls, workers=workers)
    u = controls.as_array()
    effort = 0.5 * float(((u * u) @ weights.q).sum()) * grid.dt
    per_traj = (
        ensemble.time_averages @ weights.p * grid.duration
        + effort
        + 0.5 * (ensemble.terminal**2) @ weights.k
    )
    std_error = float(stats.sem(per_traj)) if n_traj > 1 else 0.0
    if not np.isfinite(std_error):
        std_error = 0.0
    return ObjectiveEstimate(mean=float(np.mean(per_traj)), std_error=std_error, n_traj=n_traj)


# ============================================================================
# Forward-backward sweep
# ============================================================================


def backward_costates(
    path: np.ndarray,
    controls: ControlGrid,
    weights: ObjectiveWeights,
    params: ModelParams,
) -> np.ndarray:
    """Backward Euler pass for m with n = 0; returns an (n_steps + 1, 4) array."""
    grid = controls.grid
    dt = grid.dt
    u = controls.as_array()
    n = np.zeros(4)
    m = np.empty_like(path)
    m[-1] = -weights.k * path[-1]
    for k in range(grid.n_steps - 1, -1, -1):
        m[k] = m[k + 1] - dt * adjoint_rhs_array(path[k + 1], u[k], m[k + 1], n, weights, params)
    if not np.all(np.isfinite(m)):
        raise DomainError("backward costate pass produced non-finite values")
    return m


def stationarity_residual(
    path: np.ndarray,
    m: np.ndarray,
    controls: np.ndarray,
    weights: ObjectiveWeights,
    params: ModelParams,
) -> float:
    """Largest violation of the pointwise optimality conditions at ``controls``.

    ``path`` and ``m`` must belong to ``controls``. Where the minimiser of H is
    interior, the violation is |dH/du| relative to the largest magnitude either
    of its two terms reaches over the grid; where it sits on a bound, it is the
    distance of the control from that bound.
    """
    x, mk = path[:-1], m[:-1]
    stationary = stationary_controls_array(x, mk, weights, params)
    interior = (stationary > 0.0) & (stationary < 1.0)

    grad = control_gradient_array(x, controls, mk, weights, params)
    s = x[:, 0]
    force = incidence_force(x[:, 1], x[:, 2], params)
    terms = np.stack(
        (
            np.maximum(np.abs(weights.q1 * controls[:, 0]), np.abs((mk[:, 0] - mk[:, 3]) * s)),
            np.maximum(np.abs(weights.q2 * controls[:, 1]), np.abs((mk[:, 0] - mk[:, 1]) * force * s)),
        ),
        axis=1,
    )
    # one scale per control, taken over the grid
    scale = np.broadcast_to(terms.max(axis=0, initial=0.0), grad.shape)
    relative = np.divide(np.abs(grad), scale, out=np.zeros_like(grad), where=scale > 0.0)
    bound_gap = np.abs(controls - np.clip(stationary, 0.0, 1.0))
    violation = np.where(interior, relative, bound_gap)
    return float(violation.max()) if violation.size else 0.0


def forward_backward_sweep(
    init: State,
    params: ModelParams,
    weights: ObjectiveWeights,
    grid: TimeGrid,
    config: Optional[SweepConfig] = None,
    initial_controls: Optional[ControlGrid] = None,
) -> Tuple[ControlGrid, SweepReport]:
    """Relaxed fixed-point iteration on the optimality system.

    Non-convergence within ``max_iter`` is reported with ``converged=False``.
    """
    config = config or SweepConfig()
    weights.require_positive_effort()
    controls = initial_controls if initial_controls is not None else ControlGrid.constant(grid)
    if controls.grid != grid:
        raise DomainError("initial controls do not match the sweep grid")

    noise = NoiseStream(config.master_seed) if config.adjoint_path == "frozen" else None
    omega = config.relaxation
    changes: List[float] = []
    objectives: List[float] = []
    converged = False

    log.info(
        "Sweep: %d steps, mode=%s, path=%s, omega=%g, tol=%g",
        grid.n_steps,
        config.mode,
        config.adjoint_path,
        omega,
        config.tol,
    )

    iteration = 0
    for iteration in range(1, config.max_iter + 1):
        path = state_path(init, params, grid, controls, noise)
        m = backward_costates(path, controls, weights, params)
        projected = projection_array(path[:-1], m[:-1], weights, params, config.mode)

        current = controls.as_array()
        updated = np.clip((1.0 - omega) * current + omega * projected, 0.0, 1.0)
        change = float(np.max(np.abs(updated - current)))
        objectives.append(path_cost(path, controls, weights))
        changes.append(change)
        log.debug("Sweep iteration %d: control change %.3e, objective %.6g", iteration, change, objectives[-1])

        controls = ControlGrid.from_array(grid, updated)
        if change < config.tol:
            converged = True
            break

    if not converged:
        log.warning("Sweep did not converge in %d iterations (last change %.3e)", config.max_iter, changes[-1])
    else:
        log.info("Sweep converged after %d iteration(s)", iteration)

    path = state_path(init, params, grid, controls, noise)
    m = backward_costates(path, controls, weights, params)
    report = SweepReport(
        iterations=iteration,
        converged=converged,
        final_objective=path_cost(path, controls, weights),
        control_change_history=changes,
        objective_history=objectives,
        stationarity_residual=stationarity_residual(path, m, controls.as_array(), weights, params),
        mode=config.mode,
        adjoint_path=config.adjoint_path,
    )
    return controls, report


def compare_controlled(
    init: State,
    params: ModelParams,
    grid: TimeGrid,
    controls: ControlGrid,
    n_traj: int,
    master_seed: int,
    workers: int = 1,
    record_every: Optional[int] = None,
) -> ControlComparison:
    """Ensemble means with the given controls and with u = 0, on common noise streams."""
    uncontrolled = run_ensemble(
        init, params, grid, n_traj, master_seed, record_every=record_every, workers=workers
    )
    controlled = run_ensemble(
        init, params, grid, n_traj, master_seed, controls=controls, record_every=record_every, workers=workers
    )
    comparison = ControlComparison(
        times=controlled.times,
        uncontrolled_mean=uncontrolled.mean,
        controlled_mean=controlled.mean,
    )
    log.info(
        "Control effect at T: A ratio %.3g, I ratio %.3g",
        comparison.terminal_ratio("A"),
        comparison.terminal_ratio("I"),
    )
    return comparison
