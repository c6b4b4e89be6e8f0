"""
CSV persistence for trajectories, branches and fit tables.

Files are UTF-8, comma separated, '.' decimal, header row. Trajectory files
start with `# key = value` metadata lines; read_trajectory returns both parts.
"""

import logging
from pathlib import Path
from typing import Any

import numpy as np
import pandas as pd

from app.services.bound_states import BoundStateFamily
from app.services.classifier import TrajectorySeries
from app.services.propagator import TrajectoryRecord

logger = logging.getLogger(__name__)

BRANCH_COLUMNS = ["param", "E", "norm_L2", "c1", "residual"]


def _format_value(value: Any) -> str:
    if isinstance(value, float):
        return repr(value)
    return str(value)


def _parse_value(text: str) -> Any:
    if text in ("None", ""):
        return None
    if text in ("True", "False"):
        return text == "True"
    for cast in (int, float):
        try:
            return cast(text)
        except ValueError:
            pass
    return text


def write_frame(path: Path, frame: pd.DataFrame, metadata: dict | None = None) -> Path:
    """Write `frame` as CSV, preceded by `# key = value` lines when metadata is given."""
    path = Path(path)
    path.parent.mkdir(parents=True, exist_ok=True)
    with path.open("w", encoding="utf-8", newline="") as handle:
        for key, value in (metadata or {}).items():
            handle.write(f"# {key} = {_format_value(value)}\n")
        frame.to_csv(handle, index=False, lineterminator="\n")
    logger.debug(f"Wrote {len(frame)} rows to {path}")
    return path


def read_frame(path: Path) -> tuple[dict, pd.DataFrame]:
    """Inverse of write_frame."""
    path = Path(path)
    metadata = {}
    skip = 0
    with path.open("r", encoding="utf-8") as handle:
        for line in handle:
            if not line.startswith("#"):
                break
            key, _, value = line[1:].strip().partition(" = ")
            metadata[key.strip()] = _parse_value(value.strip())
            skip += 1
    frame = pd.read_csv(path, skiprows=skip, float_precision="round_trip")
    return metadata, frame


def trajectory_frame(record: TrajectoryRecord) -> pd.DataFrame:
    frame = pd.DataFrame(record.rows)
    frame["psi_l2loc"] = record.psi_l2loc
    frame["mass"] = record.mass
    frame["energy"] = record.energy
    frame["m_dot"] = record.m_dot
    return frame


def write_trajectory(path: Path, record: TrajectoryRecord) -> Path:
    return write_frame(path, trajectory_frame(record), record.metadata)


def read_trajectory(path: Path) -> tuple[dict, pd.DataFrame]:
    return read_frame(path)


def series_from_frame(frame: pd.DataFrame) -> TrajectorySeries:
    return TrajectorySeries(
        times=frame["t"].to_numpy(dtype=float),
        abs_x=frame["abs_x"].to_numpy(dtype=float),
        abs_y=frame["abs_y"].to_numpy(dtype=float),
        psi_l2loc=frame["psi_l2loc"].to_numpy(dtype=float),
        xi_l2=frame["xi_l2"].to_numpy(dtype=float),
        xi3_ratio=frame["xi3_ratio"].to_numpy(dtype=float) if "xi3_ratio" in frame else None,
    )


def branch_frame(family: BoundStateFamily) -> pd.DataFrame:
    c1 = family.c1 if family.c1 is not None else np.full(family.amplitudes.size, np.nan)
    return pd.DataFrame(
        {
            "param": family.amplitudes,
            "E": family.energies,
            "norm_L2": family.norms,
            "c1": c1,
            "residual": family.residuals,
        },
        columns=BRANCH_COLUMNS,
    )


def write_branch(path: Path, family: BoundStateFamily) -> Path:
    metadata = {
        "branch": family.branch,
        "lam": family.lam,
        "linear_energy": family.linear_energy,
        "E2": family.coefficient_2,
        "E4": family.coefficient_4,
        "perturbative_E2": family.perturbation_coefficient,
    }
    return write_frame(path, branch_frame(family), metadata)
