"""Closed-form thresholds: the rate sum m, R0s, persistence bounds, extinction index.

Two different transmission rates appear in the theory: the persistence
threshold uses min(beta_A, beta_I) and the extinction condition uses
max(beta_A, beta_I). ThresholdReport keeps both.
"""

from __future__ import annotations

from dataclasses import dataclass
from typing import Optional, Tuple

import numpy as np

from errors import DomainError, PreconditionError
from model import ModelParams


@dataclass(frozen=True)
class ThresholdReport:
    m_const: float
    r0s: float
    beta_min: float
    beta_max: float
    h_const: float
    extinction_index: float
    persistence_bounds: Optional[Tuple[float, float, float, float]]

    @property
    def persistent(self) -> bool:
        return self.r0s > 1.0

    @property
    def extinct(self) -> bool:
        return self.extinction_index < 0.0

    def to_dict(self) -> dict:
        bounds = None
        if self.persistence_bounds is not None:
            bounds = dict(zip(("S", "A", "I", "R"), self.persistence_bounds))
        return {
            "m_const": self.m_const,
            "r0s": self.r0s,
            "beta_min": self.beta_min,
            "beta_max": self.beta_max,
            "h_const": self.h_const,
            "extinction_index": self.extinction_index,
            "persistence_bounds": bounds,
            "persistent": self.persistent,
            "extinct": self.extinct,
        }


def compute_m_const(params: ModelParams) -> float:
    """m = 4mu + alpha + delta_A + delta_I + d + gamma + (sigma1^2+...+sigma4^2)/2."""
    noise = 0.5 * (params.sigma1**2 + params.sigma2**2 + params.sigma3**2 + params.sigma4**2)
    return (
        4.0 * params.mu
        + params.alpha
        + params.delta_A
        + params.delta_I
        + params.d
        + params.gamma
        + noise
    )


def compute_r0s(params: ModelParams) -> float:
    """Stochastic persistence threshold 3 * cbrt(Lambda * alpha * min(beta_A, beta_I)) / m."""
    m = compute_m_const(params)
    if m <= 0:
        raise DomainError("rate sum m must be positive")
    beta = min(params.beta_A, params.beta_I)
    return 3.0 * float(np.cbrt(params.lam * params.alpha * beta)) / m


def compute_h_const(params: ModelParams) -> float:
    return min(
        params.mu + params.delta_A + params.sigma2**2 / 2.0,
        params.mu + params.delta_I + params.d + params.sigma3**2 / 2.0,
    )


def compute_extinction_index(params: ModelParams) -> float:
    """max(beta_A, beta_I) * Lambda / mu - h / 2; negative predicts extinction."""
    if params.mu <= 0:
        raise DomainError("extinction index is undefined for mu = 0")
    beta = max(params.beta_A, params.beta_I)
    return beta * params.lam / params.mu - compute_h_const(params) / 2.0


def compute_persistence_bounds(params: ModelParams) -> Tuple[float, float, float, float]:
    """Lower bounds on the long-run time averages of S, A, I, R (requires R0s > 1)."""
    r0s = compute_r0s(params)
    if not r0s > 1.0:
        raise PreconditionError(f"persistence bounds need R0s > 1, got R0s = {r0s:.6g}")

    if params.gamma + params.mu <= 0:
        raise DomainError("R bound needs gamma + mu > 0")

    m = compute_m_const(params)
    excess = m * (r0s - 1.0)
    i_loss = params.delta_I + params.mu + params.d
    denom = params.alpha * params.beta_I + (params.beta_A + params.b * params.alpha) * i_loss

    # beta_A + beta_I > 0 and alpha > 0 whenever R0s > 1
    s_bound = (
        excess
        * params.b
        * (params.mu + params.alpha + params.delta_A)
        * i_loss
        / ((params.beta_A + params.beta_I) * denom)
    )
    a_bound = excess * i_loss / denom
    i_bound = excess * params.alpha / denom
    r_bound = (
        excess
        * (params.delta_A * i_loss + params.alpha * params.delta_I)
        / ((params.gamma + params.mu) * denom)
    )
    return (s_bound, a_bound, i_bound, r_bound)


def compute_thresholds(params: ModelParams) -> ThresholdReport:
    r0s = compute_r0s(params)
    bounds = compute_persistence_bounds(params) if r0s > 1.0 else None
    return ThresholdReport(
        m_const=compute_m_const(params),
        r0s=r0s,
        beta_min=min(params.beta_A, params.beta_I),
        beta_max=max(params.beta_A, params.beta_I),
        h_const=compute_h_const(params),
        extinction_index=compute_extinction_index(params),
        persistence_bounds=bounds,
    )
