"""
Text reports rendered from the Jinja2 templates in app/templates.
"""

import logging
import math
from pathlib import Path
from typing import Any, Iterable, Optional

import numpy as np
import pandas as pd
from jinja2 import Environment, FileSystemLoader, StrictUndefined

from app.services.classifier import ClassificationReport

logger = logging.getLogger(__name__)

TEMPLATES_DIR = Path(__file__).resolve().parent.parent / "templates"


def fmt(value: Any) -> str:
    """Shortest round-trip text for floats, 'none' for missing values."""
    if value is None:
        return "none"
    if isinstance(value, (bool, np.bool_)):
        return str(bool(value)).lower()
    if isinstance(value, (float, np.floating)):
        value = float(value)
        if math.isnan(value):
            return "nan"
        return repr(value)
    if isinstance(value, (tuple, list)):
        return ", ".join(fmt(v) for v in value)
    return str(value)


def threshold(value: Optional[float], horizon: float) -> str:
    if value is None:
        return f"beyond horizon (T = {fmt(horizon)})"
    return fmt(value)


def _environment() -> Environment:
    env = Environment(
        loader=FileSystemLoader(str(TEMPLATES_DIR)),
        undefined=StrictUndefined,
        keep_trailing_newline=True,
        autoescape=False,
    )
    env.filters["fmt"] = fmt
    env.filters["threshold"] = threshold
    return env


_env = _environment()


def render_sections(sections: Iterable[tuple[str, dict]]) -> str:
    """Render `(title, {key: value})` pairs as `[title]` blocks of `key: value` lines."""
    payload = [{"title": title, "items": list(items.items())} for title, items in sections]
    return _env.get_template("report.txt.j2").render(sections=payload)


def render_classification(report: ClassificationReport, extra: Optional[dict] = None) -> str:
    return _env.get_template("classification.txt.j2").render(report=report, extra=extra or {})


def fits_frame(report: ClassificationReport) -> pd.DataFrame:
    """Fit appendix: one row per fit attached to the report."""
    rows = []
    for name, fit in (("local_decay", report.decay), ("late_y_decay", report.late_y_decay)):
        if fit is not None:
            rows.append(
                {
                    "fit": name,
                    "value": fit.slope,
                    "ci_low": fit.ci_low,
                    "ci_high": fit.ci_high,
                    "window_start": fit.window[0],
                    "window_end": fit.window[1],
                }
            )
    if report.growth is not None:
        g = report.growth
        rows.append(
            {
                "fit": "ground_growth",
                "value": g.ratio,
                "ci_low": g.band[0],
                "ci_high": g.band[1],
                "window_start": g.window[0],
                "window_end": g.window[1],
            }
        )
    if report.plateau_xi3_ratio is not None:
        th = report.thresholds
        end = th.t3 if th.t3 is not None else report.horizon
        rows.append(
            {"fit": "xi3_plateau_ratio", "value": report.plateau_xi3_ratio, "window_start": th.t1, "window_end": end}
        )
    if report.phase_drift is not None:
        p = report.phase_drift
        for name, value in (("omega_log", p.log_slope), ("omega_sqrt", p.sqrt_slope)):
            rows.append({"fit": name, "value": value, "window_start": p.window[0], "window_end": p.window[1]})
    return pd.DataFrame(rows, columns=["fit", "value", "ci_low", "ci_high", "window_start", "window_end"])


def write_text(path: Path, text: str) -> Path:
    path = Path(path)
    path.parent.mkdir(parents=True, exist_ok=True)
    path.write_text(text, encoding="utf-8")
    logger.debug(f"Wrote report {path}")
    return path
