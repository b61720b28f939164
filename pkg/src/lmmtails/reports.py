"""CSV and text serialisation of estimator results.

Floats are written with ``repr``: the shortest string that round-trips,
never more than 17 significant digits.
"""

from __future__ import annotations

import csv
from dataclasses import dataclass
from typing import Iterable

from .estimators import MomentScanReport, TailFitReport

__all__ = [
    "CheckRow",
    "fmt",
    "write_scan_csv",
    "scan_text",
    "write_tail_csv",
    "write_validate_csv",
]

SCAN_HEADER = ["v", "estimate", "std_error", "max_share", "n_eff", "verdict"]
TAIL_HEADER = ["slope", "intercept", "r2", "q_lo", "q_hi"]
VALIDATE_HEADER = ["check", "status", "statistic", "threshold"]


def fmt(x: float) -> str:
    return repr(float(x))


def _write(path, header, rows) -> None:
    with open(path, "w", newline="") as fh:
        writer = csv.writer(fh, lineterminator="\n")
        writer.writerow(header)
        writer.writerows(rows)


def write_scan_csv(report: MomentScanReport, path) -> None:
    rows = [
        [fmt(e.v), fmt(e.estimate), fmt(e.std_error), fmt(e.max_contribution_share), fmt(e.n_effective), vd.value]
        for e, vd in zip(report.estimates, report.verdicts)
    ]
    _write(path, SCAN_HEADER, rows)


def scan_text(report: MomentScanReport, label: str = "") -> str:
    lo, hi = report.bracket
    lines = []
    if label:
        lines.append(label)
    lines.append(f"bracket: [{fmt(lo)}, {fmt(hi)}]")
    lines.append(
        f"tail rate: {fmt(report.tail.rate)} +/- {fmt(report.tail.rate_se)} "
        f"(shape {fmt(report.tail.shape)}, {report.tail.n_tail} points above q={report.tail.quantile})"
    )
    lines.append(f"log-center: {fmt(report.center)}")
    if report.theoretical is not None:
        inside = report.contains(report.theoretical)
        width = (hi - lo) / report.theoretical
        lines.append(f"theoretical critical exponent: {fmt(report.theoretical)}")
        lines.append(f"relative bracket width: {fmt(width)}")
        lines.append(f"verdict: {'CONTAINED' if inside else 'NOT CONTAINED'}")
    for w in report.warnings:
        lines.append(f"warning: {w}")
    return "\n".join(lines) + "\n"


def write_tail_csv(report: TailFitReport, path) -> None:
    _write(
        path,
        TAIL_HEADER,
        [[fmt(report.slope), fmt(report.intercept), fmt(report.r2), fmt(report.q_lo), fmt(report.q_hi)]],
    )


@dataclass(frozen=True)
class CheckRow:
    check: str
    passed: bool
    statistic: float
    threshold: float

    @property
    def status(self) -> str:
        return "PASS" if self.passed else "FAIL"


def write_validate_csv(rows: Iterable[CheckRow], path) -> None:
    _write(
        path,
        VALIDATE_HEADER,
        [[r.check, r.status, fmt(r.statistic), fmt(r.threshold)] for r in rows],
    )
