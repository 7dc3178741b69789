"""Output files of the command-line tool.

Every file is written to a temporary sibling first and renamed into place, so
an interrupted run never leaves a truncated CSV behind. Floats use 17
significant digits, which round-trips and keeps reruns byte-identical.
"""

from __future__ import annotations

import json
from pathlib import Path
from typing import Iterable, List, Sequence, Tuple

import numpy as np

from analysis import Histogram
from control import ControlComparison
from integrator import ControlGrid, EnsembleSummary, Trajectory
from model import COMPARTMENTS

QUANTILE_LABELS = ("q05", "q50", "q95")

Table = Tuple[List[str], np.ndarray]


def format_float(value) -> str:
    return format(float(value), ".17g")


def render_rows(header: Sequence[str], rows: Iterable[Sequence[float]]) -> str:
    lines = [",".join(header)]
    lines.extend(",".join(format_float(v) for v in row) for row in rows)
    return "\n".join(lines) + "\n"


def _json_default(value):
    if isinstance(value, np.generic):
        return value.item()
    if isinstance(value, np.ndarray):
        return value.tolist()
    if isinstance(value, Path):
        return str(value)
    raise TypeError(f"Object of type {type(value).__name__} is not JSON serializable")


# ============================================================================
# Tables
# ============================================================================


def trajectory_table(traj: Trajectory) -> Table:
    """``t,S,A,I,R[,u1,u2]``, one row per recorded grid point."""
    header = ["t", *COMPARTMENTS]
    columns = [traj.times[:, None], traj.states]
    if traj.controls is not None:
        header += ["u1", "u2"]
        steps = np.rint((traj.times - traj.grid.t0) / traj.grid.dt).astype(int)
        # the last grid point keeps the control of the final step
        steps = np.minimum(steps, len(traj.controls) - 1)
        columns.append(traj.controls[steps])
    return header, np.hstack(columns)


def ensemble_table(summary: EnsembleSummary) -> Table:
    header = ["t", *(f"mean_{c}" for c in COMPARTMENTS)]
    columns = [summary.times[:, None], summary.mean]
    for label, level in zip(QUANTILE_LABELS, sorted(summary.quantiles)):
        header += [f"{label}_{c}" for c in COMPARTMENTS]
        columns.append(summary.quantiles[level])
    return header, np.hstack(columns)


def histogram_table(histogram: Histogram) -> Table:
    return ["bin_left", "bin_right", "mass"], np.array(list(histogram.rows()))


def controls_table(controls: ControlGrid) -> Table:
    times = controls.grid.t0 + np.arange(controls.grid.n_steps) * controls.grid.dt
    return ["t", "u1", "u2"], np.column_stack((times, controls.u1, controls.u2))


def comparison_table(comparison: ControlComparison) -> Table:
    header = [
        "t",
        *(f"{c}_uncontrolled" for c in COMPARTMENTS),
        *(f"{c}_controlled" for c in COMPARTMENTS),
    ]
    rows = np.hstack((comparison.times[:, None], comparison.uncontrolled_mean, comparison.controlled_mean))
    return header, rows


# ============================================================================
# Writer
# ============================================================================


class ReportWriter:
    def __init__(self, logger, output_dir: Path) -> None:
        self.logger = logger
        self.output_dir = Path(output_dir)
        self.written: List[Path] = []
        self._pending: List[Path] = []

    def _target(self, name: str) -> Path:
        self.output_dir.mkdir(parents=True, exist_ok=True)
        return self.output_dir / name

    def write_text(self, name: str, text: str) -> Path:
        """Write ``text`` atomically (temp file, then rename)."""
        path = self._target(name)
        temp_path = path.with_name(path.name + ".tmp")
        self._pending.append(temp_path)
        try:
            with open(temp_path, "w", encoding="utf-8", newline="\n") as handle:
                handle.write(text)
            temp_path.replace(path)
        except OSError as exc:
            self.logger.error("Failed to write %s: %s", path, exc)
            raise
        finally:
            if temp_path in self._pending and not temp_path.exists():
                self._pending.remove(temp_path)
        self.written.append(path)
        self.logger.info("Wrote %s", path)
        return path

    def write_json(self, name: str, payload: dict) -> Path:
        return self.write_text(name, json.dumps(payload, sort_keys=True, indent=2, default=_json_default) + "\n")

    def write_rows(self, name: str, header: Sequence[str], rows: Iterable[Sequence[float]]) -> Path:
        return self.write_text(name, render_rows(header, rows))

    def write_table(self, name: str, table: Table) -> Path:
        return self.write_rows(name, *table)

    def discard_pending(self) -> None:
        """Remove temporaries left by a failed write."""
        for temp_path in self._pending:
            try:
                temp_path.unlink(missing_ok=True)
            except OSError as exc:
                self.logger.warning("Could not remove %s: %s", temp_path, exc)
        self._pending.clear()

    def abort(self) -> None:
        """Remove temporaries and every file this writer completed; the run failed."""
        self.discard_pending()
        for path in self.written:
            try:
                path.unlink(missing_ok=True)
                self.logger.warning("Removed partial output %s", path)
            except OSError as exc:
                self.logger.warning("Could not remove %s: %s", path, exc)
        self.written.clear()
