"""Drift, diffusion and incidence of the SAIRS system with two saturated incidences.

The state is ordered (S, A, I, R). Every evaluation exists twice: a validated
form on ``State``/``ControlValue`` objects and an array kernel
(``drift_array``/``diffusion_array``) over ``(n, 4)`` arrays that the
integrator calls once per step for a whole batch of trajectories. The object
form delegates to the kernel, so both give bit-identical numbers.
"""

from __future__ import annotations

import math
from dataclasses import asdict, dataclass, fields, replace
from typing import Mapping, Optional

import numpy as np

from errors import DomainError

COMPARTMENTS = ("S", "A", "I", "R")


def compartment_index(component: str) -> int:
    """Map a compartment name ("S", "A", "I", "R") to its column."""
    try:
        return COMPARTMENTS.index(str(component).upper())
    except ValueError as exc:
        raise DomainError(f"Unknown compartment: {component!r}") from exc


def _check_value(name: str, value: float) -> float:
    if isinstance(value, bool) or not isinstance(value, (int, float, np.floating, np.integer)):
        raise DomainError(f"{name} must be a number, got {type(value).__name__}")
    value = float(value)
    if not math.isfinite(value):
        raise DomainError(f"{name} must be finite, got {value}")
    if value < 0:
        raise DomainError(f"{name} must be non-negative, got {value}")
    return value


@dataclass(frozen=True)
class ModelParams:
    """Rate constants and noise intensities of the SAIRS model.

    ``lam`` is the recruitment rate (config key ``lambda``). All fields are
    finite and non-negative; the threshold formulas additionally need mu > 0
    and check it themselves.
    """

    lam: float
    beta_A: float
    beta_I: float
    b: float
    mu: float
    gamma: float
    delta_A: float
    delta_I: float
    alpha: float
    d: float
    sigma1: float = 0.0
    sigma2: float = 0.0
    sigma3: float = 0.0
    sigma4: float = 0.0

    def __post_init__(self) -> None:
        for f in fields(self):
            object.__setattr__(self, f.name, _check_value(f.name, getattr(self, f.name)))

    @property
    def sigmas(self) -> np.ndarray:
        return np.array([self.sigma1, self.sigma2, self.sigma3, self.sigma4])

    @property
    def noise_free(self) -> bool:
        return not np.any(self.sigmas)

    def replace(self, **changes: float) -> "ModelParams":
        """Copy with some fields changed; ``sigma`` sets all four intensities."""
        if "sigma" in changes:
            sigma = changes.pop("sigma")
            changes.update(sigma1=sigma, sigma2=sigma, sigma3=sigma, sigma4=sigma)
        if "lambda" in changes:
            changes["lam"] = changes.pop("lambda")
        return replace(self, **changes)

    def without_noise(self) -> "ModelParams":
        return self.replace(sigma=0.0)

    @classmethod
    def from_mapping(cls, data: Mapping[str, float]) -> "ModelParams":
        values = dict(data)
        if "lambda" in values:
            values["lam"] = values.pop("lambda")
        return cls(**values)

    def to_dict(self) -> dict:
        data = asdict(self)
        data["lambda"] = data.pop("lam")
        return data


@dataclass(frozen=True)
class State:
    """Compartment sizes (persons)."""

    s: float
    a: float
    i: float
    r: float

    def __post_init__(self) -> None:
        for f in fields(self):
            object.__setattr__(self, f.name, _check_value(f.name.upper(), getattr(self, f.name)))

    @property
    def total(self) -> float:
        return self.s + self.a + self.i + self.r

    def as_array(self) -> np.ndarray:
        return np.array([self.s, self.a, self.i, self.r], dtype=float)

    @classmethod
    def from_array(cls, values) -> "State":
        s, a, i, r = (float(v) for v in np.asarray(values, dtype=float).reshape(4))
        return cls(s, a, i, r)

    @classmethod
    def from_mapping(cls, data: Mapping[str, float]) -> "State":
        lowered = {str(k).lower(): v for k, v in data.items()}
        return cls(lowered["s"], lowered["a"], lowered["i"], lowered["r"])

    def to_dict(self) -> dict:
        return {"S": self.s, "A": self.a, "I": self.i, "R": self.r}


@dataclass(frozen=True)
class ControlValue:
    """Vaccination (u1) and isolation (u2) effort, each in [0, 1]."""

    u1: float = 0.0
    u2: float = 0.0

    def __post_init__(self) -> None:
        for f in fields(self):
            value = _check_value(f.name, getattr(self, f.name))
            if value > 1.0:
                raise DomainError(f"{f.name} must lie in [0, 1], got {value}")
            object.__setattr__(self, f.name, value)

    def as_array(self) -> np.ndarray:
        return np.array([self.u1, self.u2], dtype=float)


# ============================================================================
# Array kernels
# ============================================================================


def incidence_force(a, i, params: ModelParams):
    """Per-susceptible infection pressure beta_I I/(1+bI) + beta_A A/(1+bA)."""
    return params.beta_I * i / (1.0 + params.b * i) + params.beta_A * a / (1.0 + params.b * a)


def drift_array(x: np.ndarray, params: ModelParams, u: Optional[np.ndarray] = None) -> np.ndarray:
    """Controlled drift over an ``(..., 4)`` state array.

    ``u`` is ``None`` (no control) or an array whose last axis is (u1, u2),
    broadcastable against the leading axes of ``x``.
    """
    s, a, i, r = x[..., 0], x[..., 1], x[..., 2], x[..., 3]
    if u is None:
        u1 = 0.0
        u2 = 0.0
    else:
        u1 = u[..., 0]
        u2 = u[..., 1]

    infection = incidence_force(a, i, params) * (1.0 - u2) * s
    vaccination = u1 * s

    out = np.empty(np.broadcast_shapes(x.shape, np.shape(infection) + (4,)), dtype=float)
    out[..., 0] = params.lam - infection - (params.mu + u1) * s + params.gamma * r
    out[..., 1] = infection - (params.alpha + params.delta_A + params.mu) * a
    out[..., 2] = params.alpha * a - (params.delta_I + params.mu + params.d) * i
    out[..., 3] = params.delta_A * a + params.delta_I * i + vaccination - (params.gamma + params.mu) * r
    return out


def diffusion_array(x: np.ndarray, params: ModelParams) -> np.ndarray:
    return x * params.sigmas


# ============================================================================
# Validated operations
# ============================================================================


def saturated_incidence(beta: float, x: float, b: float) -> float:
    """Saturated force of infection beta*x/(1+b*x); bounded by beta/b when b > 0."""
    beta = _check_value("beta", beta)
    x = _check_value("x", x)
    b = _check_value("b", b)
    return beta * x / (1.0 + b * x)


def drift(state: State, params: ModelParams) -> np.ndarray:
    """(dS, dA, dI, dR)/dt of the uncontrolled system."""
    return drift_array(state.as_array(), params)


def drift_controlled(state: State, u: ControlValue, params: ModelParams) -> np.ndarray:
    """Drift with vaccination u1 moving S to R and isolation u2 scaling incidence."""
    return drift_array(state.as_array(), params, u.as_array())


def diffusion(state: State, params: ModelParams) -> np.ndarray:
    """Noise amplitudes (sigma1 S, sigma2 A, sigma3 I, sigma4 R)."""
    return diffusion_array(state.as_array(), params)


def bilinear_drift(state: State, params: ModelParams, nu: float = 0.0) -> np.ndarray:
    """Drift of the bilinear SAIRS model with vaccination rate nu.

    Ignores ``b`` and ``d``; with b = d = 0 and nu = 0 it matches ``drift``.
    """
    nu = _check_value("nu", nu)
    s, a, i, r = state.s, state.a, state.i, state.r
    infection = (params.beta_A * a + params.beta_I * i) * s
    return np.array(
        [
            params.lam - infection - (params.mu + nu) * s + params.gamma * r,
            infection - (params.alpha + params.delta_A + params.mu) * a,
            params.alpha * a - (params.delta_I + params.mu) * i,
            params.delta_A * a + params.delta_I * i + nu * s - (params.gamma + params.mu) * r,
        ]
    )


def disease_free_equilibrium(params: ModelParams) -> State:
    if params.mu <= 0:
        raise DomainError("disease-free equilibrium needs mu > 0")
    return State(params.lam / params.mu, 0.0, 0.0, 0.0)
