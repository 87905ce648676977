"""CSV reports with a `#` metadata block, and key=value summaries.

The metadata block holds everything run-specific (version, config, seed,
wall clock); the data section below it depends only on the config.
"""

from __future__ import annotations

import csv
import io
import logging
import time
from dataclasses import dataclass, field
from datetime import datetime, timezone
from enum import Enum
from pathlib import Path
from typing import Any, Mapping, Sequence

from . import __version__

logger = logging.getLogger(__name__)


def format_value(value: Any) -> str:
    if isinstance(value, bool):
        return str(value).lower()
    if isinstance(value, float):
        return f"{value:.10g}"
    if isinstance(value, (list, tuple)):
        return "[" + ",".join(format_value(v) for v in value) + "]"
    if isinstance(value, Enum):
        return value.value
    return str(value)


@dataclass
class Report:
    command: str
    columns: Sequence[str]
    config: Mapping[str, Any]
    seed: int
    rows: list[Sequence[Any]] = field(default_factory=list)
    summary: dict[str, Any] = field(default_factory=dict)
    started: float = field(default_factory=time.time)

    def add_row(self, *values: Any) -> None:
        if len(values) != len(self.columns):
            raise ValueError(f"row has {len(values)} values for {len(self.columns)} columns")
        self.rows.append(values)


def format_report_csv(report: Report, *, finished: float | None = None) -> str:
    finished = time.time() if finished is None else finished
    stamp = datetime.fromtimestamp(report.started, tz=timezone.utc).isoformat(timespec="seconds")
    buffer = io.StringIO()
    buffer.write(f"# amcsp {__version__}\n")
    buffer.write(f"# command={report.command}\n")
    buffer.write(f"# seed={report.seed}\n")
    buffer.write(f"# started={stamp}\n")
    buffer.write(f"# wall_clock_s={finished - report.started:.3f}\n")
    for key, value in report.config.items():
        buffer.write(f"# config.{key}={format_value(value)}\n")
    writer = csv.writer(buffer, lineterminator="\n")
    writer.writerow(report.columns)
    for row in report.rows:
        writer.writerow([format_value(v) for v in row])
    return buffer.getvalue()


def format_summary(summary: Mapping[str, Any]) -> str:
    return "".join(f"{key}={format_value(value)}\n" for key, value in summary.items())


def data_section(text: str) -> str:
    """The report with its metadata block removed."""
    return "".join(line for line in text.splitlines(keepends=True) if not line.startswith("#"))


def write_report(out_dir: str | Path, report: Report) -> tuple[Path, Path]:
    out_dir = Path(out_dir)
    out_dir.mkdir(parents=True, exist_ok=True)
    csv_path = out_dir / f"{report.command}.csv"
    summary_path = out_dir / f"{report.command}.summary.txt"
    csv_path.write_text(format_report_csv(report), encoding="utf-8")
    summary_path.write_text(format_summary(report.summary), encoding="utf-8")
    logger.info("Wrote %s and %s", csv_path, summary_path)
    return csv_path, summary_path


def parse_summary(text: str) -> dict[str, str]:
    summary = {}
    for line in text.splitlines():
        if line.strip():
            key, _, value = line.partition("=")
            summary[key] = value
    return summary
