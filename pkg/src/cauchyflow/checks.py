"""Check records and verification reports.

A report is a list of named checks, each tied to the theorem it exercises
(its *anchor*), together with an environment stamp and the echoed run
configuration. The overall verdict is the conjunction of all checks.
"""

from __future__ import annotations

import json
import math
import platform
import sys
from dataclasses import asdict, dataclass, field
from pathlib import Path
from typing import Iterable

import numpy as np
import scipy

from .io import rows_to_csv

CHECK_COLUMNS = ("name", "anchor", "value", "comparison", "tolerance", "upper", "passed")


@dataclass(frozen=True)
class CheckRecord:
    """One measured quantity against its acceptance threshold.

    ``comparison`` is ``"le"`` (value <= tolerance), ``"ge"`` (value >=
    tolerance) or ``"in"`` (tolerance <= value <= upper). NaN never passes.
    """

    name: str
    anchor: str
    value: float
    tolerance: float
    comparison: str = "le"
    upper: float = math.nan
    note: str = ""

    def __post_init__(self):
        if self.comparison not in ("le", "ge", "in"):
            raise ValueError(f"unknown comparison {self.comparison!r}")
        object.__setattr__(self, "value", float(self.value))

    @property
    def passed(self) -> bool:
        v = self.value
        if math.isnan(v):
            return False
        if self.comparison == "le":
            return v <= self.tolerance
        if self.comparison == "ge":
            return v >= self.tolerance
        return self.tolerance <= v <= self.upper

    def row(self) -> dict:
        d = asdict(self)
        d["passed"] = self.passed
        return d


def environment_stamp() -> dict:
    return {
        "python": sys.version.split()[0],
        "numpy": np.__version__,
        "scipy": scipy.__version__,
        "platform": platform.platform(),
    }


def _json_float(v):
    # JSON has no inf/nan; keep them readable and reversible
    if isinstance(v, float) and not math.isfinite(v):
        return repr(v)
    return v


@dataclass
class VerificationReport:
    command: str
    config: dict = field(default_factory=dict)
    checks: list[CheckRecord] = field(default_factory=list)
    environment: dict = field(default_factory=environment_stamp)

    def add(self, record: CheckRecord) -> CheckRecord:
        if any(c.name == record.name for c in self.checks):
            raise ValueError(f"check {record.name!r} recorded twice")
        self.checks.append(record)
        return record

    @property
    def passed(self) -> bool:
        return all(c.passed for c in self.checks)

    def failures(self) -> list[CheckRecord]:
        return [c for c in self.checks if not c.passed]

    def to_dict(self) -> dict:
        return {
            "command": self.command,
            "passed": self.passed,
            "checks": [{k: _json_float(v) for k, v in c.row().items()} for c in self.checks],
            "environment": self.environment,
            "config": self.config,
        }

    def checks_csv(self) -> str:
        return rows_to_csv((c.row() for c in self.checks), CHECK_COLUMNS)

    def write(self, outdir) -> Path:
        """Write ``summary.json`` and ``checks.csv`` into ``outdir``; returns the summary path."""
        out = Path(outdir)
        out.mkdir(parents=True, exist_ok=True)
        (out / "checks.csv").write_text(self.checks_csv())
        path = out / "summary.json"
        path.write_text(json.dumps(self.to_dict(), indent=2, sort_keys=True) + "\n")
        return path

    def lines(self) -> list[str]:
        return [f"{'PASS' if c.passed else 'FAIL'} {c.name} [{c.anchor}] value={c.value:.3e} "
                f"{_describe(c)}" for c in self.checks]


def _describe(c: CheckRecord) -> str:
    if c.comparison == "le":
        return f"<= {c.tolerance:.3e}"
    if c.comparison == "ge":
        return f">= {c.tolerance:.3e}"
    return f"in [{c.tolerance:.3g}, {c.upper:.3g}]"


def _float(v) -> float:
    return float(v) if not isinstance(v, str) else float(v.replace("'", ""))


def load_report(path) -> VerificationReport:
    data = json.loads(Path(path).read_text())
    rep = VerificationReport(data["command"], data.get("config", {}), environment=data.get("environment", {}))
    for c in data["checks"]:
        rep.add(CheckRecord(c["name"], c["anchor"], _float(c["value"]), _float(c["tolerance"]),
                            c.get("comparison", "le"), _float(c.get("upper", math.nan)), c.get("note", "")))
    return rep


def merge_reports(reports: Iterable[tuple[str, VerificationReport]]) -> VerificationReport:
    """Combine reports; check names are prefixed with their source label to stay unique."""
    merged = VerificationReport("report-merge")
    sources = {}
    for label, rep in reports:
        if label in sources:
            raise ValueError(f"duplicate report label {label!r}")
        sources[label] = {"command": rep.command, "passed": rep.passed, "config": rep.config}
        for c in rep.checks:
            merged.add(CheckRecord(f"{label}/{c.name}", c.anchor, c.value, c.tolerance,
                                   c.comparison, c.upper, c.note))
    merged.config = {"sources": sources}
    return merged
