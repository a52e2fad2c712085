"""Report output: JSON documents and CSV series under the output directory."""

import json
import logging
from datetime import datetime, timezone
from pathlib import Path
from typing import Any

import numpy as np

from holonomy_lab.models.reports import Check, Report

logger = logging.getLogger(__name__)


def check(
    name: str, value: float | None, tolerance: float | None = None, *, passed: bool | None = None
) -> Check:
    """
    Build a check; without an explicit verdict it passes iff value <= tolerance.

    Args:
        name: Check name
        value: Measured value
        tolerance: Upper bound for the value
        passed: Explicit verdict overriding the comparison
    """
    if passed is None:
        passed = value is not None and tolerance is not None and value <= tolerance
    return Check(name=name, value=value, tolerance=tolerance, passed=bool(passed))


def report_json(report: Report, *, include_duration: bool = True) -> str:
    """Serialize a report; without the duration the output is deterministic."""
    exclude = None if include_duration else {"duration_seconds"}
    payload = report.model_dump(mode="json", by_alias=True, exclude=exclude)
    payload["passed"] = report.passed
    payload["summary"] = report.summary()
    return json.dumps(payload, indent=2, sort_keys=True)


def timestamp() -> str:
    return datetime.now(timezone.utc).strftime("%Y%m%dT%H%M%SZ")


def output_stem(out_dir: str | Path, command: str, stamp: str | None = None) -> Path:
    """Path ``<out>/<command>-<timestamp>`` without suffix; creates the directory."""
    directory = Path(out_dir)
    directory.mkdir(parents=True, exist_ok=True)
    return directory / f"{command}-{stamp or timestamp()}"


def write_report(report: Report, stem: Path) -> Path:
    """Write the report JSON next to its CSV series."""
    path = stem.with_suffix(".json")
    path.write_text(report_json(report, include_duration=False) + "\n", encoding="utf-8")
    logger.info("Wrote %s", path)
    return path


def write_csv(stem: Path, columns: list[str], rows: Any, suffix: str = "") -> Path:
    """
    Write numeric columns as CSV.

    Args:
        stem: Output stem from :func:`output_stem`
        columns: Header names
        rows: Array-like of shape (n, len(columns))
        suffix: Appended to the stem before ``.csv``
    """
    path = stem.parent / f"{stem.name}{suffix}.csv"
    data = np.asarray(rows, dtype=float)
    np.savetxt(path, data, delimiter=",", header=",".join(columns), comments="", fmt="%.17g")
    logger.info("Wrote %s", path)
    return path
