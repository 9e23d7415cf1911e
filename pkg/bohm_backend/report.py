"""
Writers for a scenario's output directory.

    trajectories.csv   trajectory, t, Q_1..Q_D, flag
    metrics.json       ScenarioReport, keys sorted
    summary.md/.html   pass/fail table
    <field>.bin        grid dumps with JSON sidecars

Nothing written here carries a timestamp, so equal seeds give byte-identical
CSV and JSON.
"""

import json
import logging
from pathlib import Path
from typing import Any, Dict, List

import markdown2
import numpy as np
import pandas as pd

from bohm_backend.models import ScenarioReport
from bohm_dynamics.models import Ensemble, PhaseField, QtmState
from bohm_dynamics.polar import save_phase_field
from wave_lattice.dump import save_scalar_field, save_vector_field, save_wavefunction
from wave_lattice.models import ScalarField, VectorField, WaveFunction

logger = logging.getLogger(__name__)

CSV_FLOAT_FORMAT = "%.10e"


def plain(value: Any) -> Any:
    """numpy scalars and arrays to built-in types, recursively"""
    if isinstance(value, dict):
        return {str(k): plain(v) for k, v in value.items()}
    if isinstance(value, (list, tuple)):
        return [plain(v) for v in value]
    if isinstance(value, np.ndarray):
        return plain(value.tolist())
    if isinstance(value, np.bool_):
        return bool(value)
    if isinstance(value, np.integer):
        return int(value)
    if isinstance(value, np.floating):
        return float(value)
    return value


def trajectory_table(ensemble: Ensemble, max_trajectories: int) -> pd.DataFrame:
    """Long-format table of the first max_trajectories trajectories"""
    n = min(len(ensemble), max_trajectories)
    T, D = len(ensemble.times), ensemble.dimension
    columns = {
        "trajectory": np.repeat(np.arange(n), T),
        "t": np.tile(ensemble.times, n),
    }
    points = ensemble.points[:n].reshape(n * T, D)
    for axis in range(D):
        columns[f"Q_{axis + 1}"] = points[:, axis]
    columns["flag"] = ensemble.flags[:n].reshape(n * T).astype(int)
    return pd.DataFrame(columns)


def write_trajectories(path: Path, ensemble: Ensemble, max_trajectories: int) -> Path:
    table = trajectory_table(ensemble, max_trajectories)
    table.to_csv(path, index=False, float_format=CSV_FLOAT_FORMAT, lineterminator="\n")
    logger.debug("wrote %d rows to %s", len(table), path)
    return path


def qtm_state_table(states: List[QtmState], max_trajectories: int) -> pd.DataFrame:
    """One row per (snapshot, quantum trajectory): id, t, q_1..q_D, v_1..v_D"""
    frames = []
    for state in states:
        n = min(len(state.points), max_trajectories)
        columns = {"id": np.arange(n), "t": np.full(n, state.time)}
        for axis in range(state.points.shape[1]):
            columns[f"q_{axis + 1}"] = state.points[:n, axis]
        for axis in range(state.velocities.shape[1]):
            columns[f"v_{axis + 1}"] = state.velocities[:n, axis]
        frames.append(pd.DataFrame(columns))
    return pd.concat(frames, ignore_index=True)


def write_qtm_states(path: Path, states: List[QtmState], max_trajectories: int) -> Path:
    table = qtm_state_table(states, max_trajectories)
    table.to_csv(path, index=False, float_format=CSV_FLOAT_FORMAT, lineterminator="\n")
    logger.debug("wrote %d rows to %s", len(table), path)
    return path


def write_metrics(path: Path, report: ScenarioReport) -> Path:
    with open(path, "w", encoding="utf-8") as f:
        json.dump(report.model_dump(), f, ensure_ascii=False, indent=2, sort_keys=True)
        f.write("\n")
    return path


def write_fields(directory: Path, fields: Dict[str, Any]) -> List[Path]:
    """Dump every wave function and field under its name"""
    written = []
    for name, value in fields.items():
        path = directory / f"{name}.bin"
        if isinstance(value, WaveFunction):
            written.append(save_wavefunction(path, value))
        elif isinstance(value, PhaseField):
            written.append(save_phase_field(path, value))
        elif isinstance(value, ScalarField):
            written.append(save_scalar_field(path, value))
        elif isinstance(value, VectorField):
            written.append(save_vector_field(path, value))
        else:
            logger.warning("no dump format for field '%s' (%s)", name, type(value).__name__)
    return written


def _format(value: float) -> str:
    return f"{value:.4g}"


def summary_markdown(report: ScenarioReport, title: str) -> str:
    status = "PASS" if report.passed else "FAIL"
    lines = [
        f"# {title}",
        "",
        f"Scenario `{report.scenario}` (label `{report.label}`, seed {report.seed}): **{status}**",
        "",
        "| | check | value | criterion | detail |",
        "|---|---|---|---|---|",
    ]
    for c in report.checks:
        criterion = (
            f"in [{_format(c.threshold)}, {_format(c.upper)}]" if c.comparison == "in"
            else f"{c.comparison} {_format(c.threshold)}"
        )
        mark = "✓" if c.passed else "✗"
        lines.append(f"| {mark} | {c.name} | {_format(c.value)} | {criterion} | {c.detail} |")
    if report.outputs:
        lines += ["", "## Outputs", ""]
        lines += [f"- `{name}`" for name in report.outputs]
    return "\n".join(lines) + "\n"


def convert_markdown_to_html(markdown_text: str) -> str:
    if not markdown_text or markdown_text.strip() == "":
        return ""
    return markdown2.markdown(
        markdown_text,
        extras=[
            "fenced-code-blocks",
            "code-friendly",
            "cuddled-lists",
            "tables",
        ]
    )
