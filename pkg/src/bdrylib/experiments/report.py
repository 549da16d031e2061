"""Module containing experiment reports and their CSV files."""

import csv
import math
from dataclasses import dataclass, field
from pathlib import Path
from typing import Any

from bdrylib.config import ECHO_NAME
from bdrylib.logger import logger

STATUS_OK = "ok"
STATUS_MISCLASSIFIED = "misclassified"
STATUS_NO_BOUNDARY = "no_boundary"
STATUS_UNDEFINED = "undefined"

MEAN_ID = "mean"

###############################################################################
# Class: DExperimentReport
###############################################################################


@dataclass
class DExperimentReport:
    """Per-instance rows and per-method aggregates of one experiment.

    Every row carries the keys id, method and status plus the value
    columns. Only rows with status ok enter the summary.
    """

    name: str
    columns: list[str]
    rows: list[dict[str, Any]] = field(default_factory=list)
    summary: dict[str, dict[str, float | None]] = field(default_factory=dict)
    config_echo: str = ""

    def add(
        self, iid: str, method: str, status: str, **values: Any
    ) -> None:
        """Append one row.

        :param iid: instance id
        :param method: method or variant tag
        :param status: row status
        :param values: column values, missing columns stay empty
        """
        assert set(values) <= set(self.columns)
        row: dict[str, Any] = {"id": iid, "method": method, "status": status}
        row.update({key: values.get(key) for key in self.columns})
        self.rows.append(row)

    def methods(self) -> list[str]:
        """Get the method tags in order of first appearance."""
        return list(dict.fromkeys(row["method"] for row in self.rows))

    def counts(self, method: str) -> tuple[int, int]:
        """Get the evaluated and skipped row counts of a method."""
        rows = [r for r in self.rows if r["method"] == method]
        ok = sum(1 for r in rows if r["status"] == STATUS_OK)
        return ok, len(rows) - ok

    def column(self, method: str, key: str) -> list[float]:
        """Get the defined values of a column over evaluated rows."""
        return [
            float(r[key])
            for r in self.rows
            if r["method"] == method
            and r["status"] == STATUS_OK
            and r[key] is not None
        ]

    def summarize(self) -> None:
        """Compute the column means per method."""
        self.summary = {}
        for method in self.methods():
            means: dict[str, float | None] = {}
            for key in self.columns:
                vals = self.column(method, key)
                means[key] = math.fsum(vals) / len(vals) if vals else None
            self.summary[method] = means
            ok, skipped = self.counts(method)
            if skipped:
                logger.info(
                    "%s: %s skipped %d of %d instances",
                    self.name,
                    method,
                    skipped,
                    ok + skipped,
                )


def _cell(value: Any) -> str:
    if value is None:
        return ""
    if isinstance(value, bool):
        return "true" if value else "false"
    if isinstance(value, float):
        return repr(value)
    return str(value)


def write_rows_csv(
    report: DExperimentReport, path: str | Path, status: bool = True
) -> Path:
    """Write the rows followed by one mean row per method.

    :param report: experiment report
    :param path: output file
    :param status: include the status column
    """
    path = Path(path)
    header = ["id", "method"] + (["status"] if status else [])
    header += report.columns
    with path.open("w", newline="") as f:
        writer = csv.DictWriter(f, fieldnames=header, lineterminator="\n")
        writer.writeheader()
        for row in report.rows:
            writer.writerow({key: _cell(row[key]) for key in header})
        for method, means in report.summary.items():
            row = {"id": MEAN_ID, "method": method}
            if status:
                row["status"] = STATUS_OK
            row.update({key: _cell(means[key]) for key in report.columns})
            writer.writerow(row)
    return path


def write_table_csv(report: DExperimentReport, path: str | Path) -> Path:
    """Write the means as a column-by-method table.

    :param report: experiment report
    :param path: output file
    """
    path = Path(path)
    methods = list(report.summary)
    with path.open("w", newline="") as f:
        writer = csv.writer(f, lineterminator="\n")
        writer.writerow(["metric"] + methods)
        for key in report.columns:
            writer.writerow(
                [key] + [_cell(report.summary[m][key]) for m in methods]
            )
    return path


def write_report(report: DExperimentReport, outdir: str | Path) -> list[Path]:
    """Write the rows, table and configuration files of a report.

    :param report: experiment report
    :param outdir: output directory
    """
    outdir = Path(outdir)
    files = [
        write_rows_csv(report, outdir / f"{report.name}.csv"),
        write_table_csv(report, outdir / f"{report.name}-table.csv"),
    ]
    if report.config_echo:
        echo = outdir / ECHO_NAME
        echo.write_text(report.config_echo)
        files.append(echo)
    logger.info("%s report written to %s", report.name, outdir)
    return files
