"""Run configuration files (JSON) and their validation.

Every section is checked against a fixed key set; unknown keys, missing
required keys and bad values raise ``ConfigError`` naming the dotted key path
(``model.mu``, ``control.sweep.relaxation``, ...).
"""

from __future__ import annotations

import json
import math
from dataclasses import dataclass, replace
from pathlib import Path
from typing import Any, Mapping, Optional

from config import (
    ADJOINT_PATHS,
    DEFAULT_ADJOINT_PATH,
    DEFAULT_BURN_IN_FRACTION,
    DEFAULT_DT,
    DEFAULT_EXTINCTION_TOLERANCE,
    DEFAULT_FIT_WINDOW_FRACTION,
    DEFAULT_MASTER_SEED,
    DEFAULT_MAX_ITER,
    DEFAULT_N_BINS,
    DEFAULT_N_TRAJ,
    DEFAULT_OUTPUT_DIR,
    DEFAULT_PROJECTION_MODE,
    DEFAULT_RECORD_EVERY,
    DEFAULT_RELAXATION,
    DEFAULT_T0,
    DEFAULT_T_END,
    DEFAULT_TOLERANCE,
    DEFAULT_WORKERS,
    PROJECTION_MODES,
)
from control import ObjectiveWeights, SweepConfig
from errors import ConfigError, SairsError
from integrator import TimeGrid
from model import ModelParams, State

COMMANDS = ("thresholds", "simulate", "ensemble", "stationary", "control", "verify")

MODEL_KEYS = (
    "lambda", "beta_A", "beta_I", "b", "mu", "gamma",
    "delta_A", "delta_I", "alpha", "d",
)
NOISE_KEYS = ("sigma1", "sigma2", "sigma3", "sigma4")
INIT_KEYS = ("S", "A", "I", "R")
TOP_KEYS = ("model", "init", "grid", "ensemble", "analysis", "control", "output_dir")
GRID_KEYS = ("t0", "t_end", "dt", "record_every")
ENSEMBLE_KEYS = ("n_traj", "master_seed", "workers")
ANALYSIS_KEYS = ("burn_in", "n_bins", "fit_window", "extinction_tolerance")
CONTROL_KEYS = ("weights", "sweep")
WEIGHT_KEYS = ("p1", "p2", "p3", "q1", "q2", "k1", "k2", "k3", "k4")
SWEEP_KEYS = ("max_iter", "tol", "relaxation", "mode", "adjoint_path")


@dataclass(frozen=True)
class EnsembleSettings:
    n_traj: int = DEFAULT_N_TRAJ
    master_seed: int = DEFAULT_MASTER_SEED
    workers: int = DEFAULT_WORKERS


@dataclass(frozen=True)
class AnalysisSettings:
    """``None`` entries resolve against the horizon (see ``resolved``)."""

    burn_in: Optional[float] = None
    n_bins: int = DEFAULT_N_BINS
    fit_window: Optional[tuple] = None
    extinction_tolerance: float = DEFAULT_EXTINCTION_TOLERANCE

    def resolved(self, grid: TimeGrid) -> "AnalysisSettings":
        span = grid.duration
        burn_in = self.burn_in if self.burn_in is not None else DEFAULT_BURN_IN_FRACTION * span
        window = self.fit_window
        if window is None:
            t_last = grid.t0 + span
            window = (t_last - DEFAULT_FIT_WINDOW_FRACTION * span, t_last)
        return replace(self, burn_in=burn_in, fit_window=tuple(window))


@dataclass(frozen=True)
class ControlSettings:
    weights: ObjectiveWeights
    sweep: SweepConfig


@dataclass(frozen=True)
class RunConfig:
    model: ModelParams
    init: State
    grid: TimeGrid
    record_every: int = DEFAULT_RECORD_EVERY
    ensemble: EnsembleSettings = EnsembleSettings()
    analysis: AnalysisSettings = AnalysisSettings()
    control: Optional[ControlSettings] = None
    output_dir: Path = DEFAULT_OUTPUT_DIR
    source: Optional[Path] = None


# ============================================================================
# Field readers
# ============================================================================


def _section(data: Any, path: str, allowed, required=()) -> Mapping[str, Any]:
    if not isinstance(data, Mapping):
        raise ConfigError(path, f"expected an object, got {type(data).__name__}")
    for key in data:
        if key not in allowed:
            raise ConfigError(f"{path}.{key}" if path else key, "unknown key")
    for key in required:
        if key not in data:
            raise ConfigError(f"{path}.{key}" if path else key, "missing required key")
    return data


def _number(data: Mapping[str, Any], key: str, path: str, default=None, minimum=0.0, strict=False) -> float:
    full = f"{path}.{key}"
    value = data.get(key, default)
    if isinstance(value, bool) or not isinstance(value, (int, float)):
        raise ConfigError(full, f"expected a number, got {value!r}")
    value = float(value)
    if not math.isfinite(value):
        raise ConfigError(full, f"must be finite, got {value}")
    if minimum is not None and (value <= minimum if strict else value < minimum):
        relation = ">" if strict else ">="
        raise ConfigError(full, f"must be {relation} {minimum}, got {value}")
    return value


def _integer(data: Mapping[str, Any], key: str, path: str, default: int, minimum: int) -> int:
    full = f"{path}.{key}"
    value = data.get(key, default)
    if isinstance(value, bool) or not isinstance(value, int):
        raise ConfigError(full, f"expected an integer, got {value!r}")
    if value < minimum:
        raise ConfigError(full, f"must be >= {minimum}, got {value}")
    return value


def _choice(data: Mapping[str, Any], key: str, path: str, default: str, choices) -> str:
    value = data.get(key, default)
    if value not in choices:
        raise ConfigError(f"{path}.{key}", f"must be one of {list(choices)}, got {value!r}")
    return value


# ============================================================================
# Sections
# ============================================================================


def _parse_model(data: Any) -> ModelParams:
    section = _section(data, "model", MODEL_KEYS + NOISE_KEYS, required=MODEL_KEYS)
    values = {key: _number(section, key, "model", default=0.0) for key in MODEL_KEYS + NOISE_KEYS}
    try:
        return ModelParams.from_mapping(values)
    except SairsError as exc:
        raise ConfigError("model", str(exc)) from exc


def _parse_init(data: Any) -> State:
    section = _section(data, "init", INIT_KEYS, required=INIT_KEYS)
    return State.from_mapping({key: _number(section, key, "init") for key in INIT_KEYS})


def _parse_grid(data: Any):
    section = _section(data, "grid", GRID_KEYS)
    t0 = _number(section, "t0", "grid", default=DEFAULT_T0, minimum=None)
    t_end = _number(section, "t_end", "grid", default=DEFAULT_T_END, minimum=None)
    dt = _number(section, "dt", "grid", default=DEFAULT_DT, strict=True)
    record_every = _integer(section, "record_every", "grid", DEFAULT_RECORD_EVERY, 1)
    try:
        return TimeGrid(t0, t_end, dt), record_every
    except SairsError as exc:
        raise ConfigError("grid", str(exc)) from exc


def _parse_ensemble(data: Any) -> EnsembleSettings:
    section = _section(data, "ensemble", ENSEMBLE_KEYS)
    seed = _integer(section, "master_seed", "ensemble", DEFAULT_MASTER_SEED, 0)
    if seed >= 2**64:
        raise ConfigError("ensemble.master_seed", "must fit in 64 bits")
    return EnsembleSettings(
        n_traj=_integer(section, "n_traj", "ensemble", DEFAULT_N_TRAJ, 1),
        master_seed=seed,
        workers=_integer(section, "workers", "ensemble", DEFAULT_WORKERS, 1),
    )


def _parse_analysis(data: Any) -> AnalysisSettings:
    section = _section(data, "analysis", ANALYSIS_KEYS)
    burn_in = None
    if "burn_in" in section:
        burn_in = _number(section, "burn_in", "analysis")
    window = None
    if "fit_window" in section:
        raw = section["fit_window"]
        if not isinstance(raw, (list, tuple)) or len(raw) != 2:
            raise ConfigError("analysis.fit_window", "expected [t_a, t_b]")
        pair = {"t_a": raw[0], "t_b": raw[1]}
        t_a = _number(pair, "t_a", "analysis.fit_window", minimum=None)
        t_b = _number(pair, "t_b", "analysis.fit_window", minimum=None)
        if not t_a < t_b:
            raise ConfigError("analysis.fit_window", f"needs t_a < t_b, got {raw}")
        window = (t_a, t_b)
    return AnalysisSettings(
        burn_in=burn_in,
        n_bins=_integer(section, "n_bins", "analysis", DEFAULT_N_BINS, 2),
        fit_window=window,
        extinction_tolerance=_number(
            section, "extinction_tolerance", "analysis", default=DEFAULT_EXTINCTION_TOLERANCE, strict=True
        ),
    )


def _parse_control(data: Any, master_seed: int) -> ControlSettings:
    section = _section(data, "control", CONTROL_KEYS, required=("weights",))
    raw_weights = _section(section["weights"], "control.weights", WEIGHT_KEYS, required=WEIGHT_KEYS)
    weights = ObjectiveWeights.from_mapping(
        {key: _number(raw_weights, key, "control.weights") for key in WEIGHT_KEYS}
    )
    for key in ("q1", "q2"):
        if getattr(weights, key) <= 0:
            raise ConfigError(f"control.weights.{key}", "must be > 0")

    raw_sweep = _section(section.get("sweep", {}), "control.sweep", SWEEP_KEYS)
    relaxation = _number(raw_sweep, "relaxation", "control.sweep", default=DEFAULT_RELAXATION, strict=True)
    if relaxation > 1:
        raise ConfigError("control.sweep.relaxation", f"must be <= 1, got {relaxation}")
    sweep = SweepConfig(
        max_iter=_integer(raw_sweep, "max_iter", "control.sweep", DEFAULT_MAX_ITER, 1),
        tol=_number(raw_sweep, "tol", "control.sweep", default=DEFAULT_TOLERANCE, strict=True),
        relaxation=relaxation,
        mode=_choice(raw_sweep, "mode", "control.sweep", DEFAULT_PROJECTION_MODE, PROJECTION_MODES),
        adjoint_path=_choice(raw_sweep, "adjoint_path", "control.sweep", DEFAULT_ADJOINT_PATH, ADJOINT_PATHS),
        master_seed=master_seed,
    )
    return ControlSettings(weights=weights, sweep=sweep)


# ============================================================================
# Public API
# ============================================================================


def parse_config(contents: str, source: Optional[Path] = None) -> RunConfig:
    """Parse and validate the JSON text of a run configuration."""
    try:
        data = json.loads(contents)
    except json.JSONDecodeError as exc:
        raise ConfigError("<root>", f"malformed JSON at line {exc.lineno}: {exc.msg}") from exc

    _section(data, "", TOP_KEYS, required=("model", "init"))
    grid, record_every = _parse_grid(data.get("grid", {}))
    ensemble = _parse_ensemble(data.get("ensemble", {}))
    control = None
    if "control" in data:
        control = _parse_control(data["control"], ensemble.master_seed)

    output_dir = data.get("output_dir", str(DEFAULT_OUTPUT_DIR))
    if not isinstance(output_dir, str) or not output_dir:
        raise ConfigError("output_dir", "expected a non-empty path string")
    output_path = Path(output_dir)
    if not output_path.is_absolute() and source is not None:
        output_path = source.parent / output_path

    return RunConfig(
        model=_parse_model(data["model"]),
        init=_parse_init(data["init"]),
        grid=grid,
        record_every=record_every,
        ensemble=ensemble,
        analysis=_parse_analysis(data.get("analysis", {})),
        control=control,
        output_dir=output_path,
        source=source,
    )


def load_config(path) -> RunConfig:
    path = Path(path)
    try:
        contents = path.read_text(encoding="utf-8")
    except OSError as exc:
        raise ConfigError(str(path), f"cannot read config: {exc}") from exc
    return parse_config(contents, source=path)


def apply_overrides(
    config: RunConfig,
    seed: Optional[int] = None,
    trajectories: Optional[int] = None,
    t_end: Optional[float] = None,
    dt: Optional[float] = None,
    out: Optional[str] = None,
    mode: Optional[str] = None,
    workers: Optional[int] = None,
) -> RunConfig:
    """Return a copy with command-line flags applied on top of the file values."""
    ensemble = config.ensemble
    if seed is not None:
        if not 0 <= seed < 2**64:
            raise ConfigError("--seed", "must be a 64-bit unsigned integer")
        ensemble = replace(ensemble, master_seed=seed)
    if trajectories is not None:
        if trajectories < 1:
            raise ConfigError("--trajectories", "must be >= 1")
        ensemble = replace(ensemble, n_traj=trajectories)
    if workers is not None:
        if workers < 1:
            raise ConfigError("--workers", "must be >= 1")
        ensemble = replace(ensemble, workers=workers)

    grid = config.grid
    if t_end is not None or dt is not None:
        try:
            grid = grid.with_horizon(t_end=t_end, dt=dt)
        except SairsError as exc:
            raise ConfigError("--t-end/--dt", str(exc)) from exc

    control = config.control
    if control is not None:
        sweep = replace(control.sweep, master_seed=ensemble.master_seed)
        if mode is not None:
            sweep = replace(sweep, mode=mode)
        control = replace(control, sweep=sweep)
    elif mode is not None:
        raise ConfigError("--mode", "config has no control section")

    return replace(
        config,
        grid=grid,
        ensemble=ensemble,
        control=control,
        output_dir=Path(out) if out is not None else config.output_dir,
    )


def validate_for_command(config: RunConfig, command: str) -> None:
    """Command-level preconditions that the schema alone cannot express."""
    if command not in COMMANDS:
        raise ConfigError("command", f"must be one of {list(COMMANDS)}, got {command!r}")
    if command in ("thresholds", "verify") and config.model.mu <= 0:
        raise ConfigError("model.mu", f"the {command} command needs mu > 0 (extinction index divides by mu)")
    if command == "control" and config.control is None:
        raise ConfigError("control", "the control command needs a control section")
    if command == "stationary":
        analysis = config.analysis.resolved(config.grid)
        if analysis.burn_in >= config.grid.duration:
            raise ConfigError("analysis.burn_in", "burn-in must be shorter than the horizon")
