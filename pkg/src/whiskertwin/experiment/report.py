"""Experiment reports: metrics with targets and tolerances, config digest, comparison."""

from __future__ import annotations

import json
import math
from dataclasses import dataclass, field
from datetime import datetime, timezone
from pathlib import Path

REPORT_SCHEMA_VERSION = 1
MODES = ("rel", "abs", "le", "ge", "range", "eq")


@dataclass
class Metric:
    """One reported quantity.

    ``mode`` decides how ``value`` is checked against ``target``:
    ``rel``/``abs`` use ``tolerance``; ``le``/``ge`` treat ``target`` as a
    bound; ``range`` takes ``target = [lo, hi]``; ``eq`` demands equality.
    """

    name: str
    value: float | bool | None
    target: float | list | bool | None = None
    tolerance: float | None = None
    mode: str = "rel"
    informational: bool = False
    note: str = ""

    def __post_init__(self):
        if self.mode not in MODES:
            raise ValueError(f"metric {self.name}: unknown mode {self.mode!r}")
        if not self.informational:
            if self.target is None:
                raise ValueError(f"metric {self.name}: needs a target or informational=True")
            if self.mode in ("rel", "abs") and self.tolerance is None:
                raise ValueError(f"metric {self.name}: mode {self.mode} needs a tolerance")

    @property
    def passed(self) -> bool | None:
        if self.informational or self.target is None:
            return None
        v = self.value
        if v is None or (isinstance(v, float) and math.isnan(v)):
            return False
        m = self.mode
        if m == "eq":
            return v == self.target
        if m == "rel":
            return abs(v - self.target) <= self.tolerance * abs(self.target)
        if m == "abs":
            return abs(v - self.target) <= self.tolerance
        if m == "le":
            return v <= self.target
        if m == "ge":
            return v >= self.target
        lo, hi = self.target
        return lo <= v <= hi

    def to_dict(self) -> dict:
        return {
            "name": self.name,
            "value": _jsonable(self.value),
            "target": _jsonable(self.target),
            "tolerance": self.tolerance,
            "mode": self.mode,
            "pass": self.passed,
            "informational": self.informational,
            "note": self.note,
        }


def _jsonable(x):
    if isinstance(x, (list, tuple)):
        return [_jsonable(v) for v in x]
    if hasattr(x, "item"):
        x = x.item()
    if isinstance(x, float) and not math.isfinite(x):
        return None if math.isnan(x) else ("inf" if x > 0 else "-inf")
    return x


@dataclass
class ExperimentReport:
    experiment: str
    config_digest: str
    seed: int
    metrics: list[Metric] = field(default_factory=list)
    artifacts: list[str] = field(default_factory=list)
    generated_at: str | None = None

    def add(self, *args, **kwargs) -> Metric:
        m = Metric(*args, **kwargs)
        self.metrics.append(m)
        return m

    def metric(self, name: str) -> Metric:
        for m in self.metrics:
            if m.name == name:
                return m
        raise KeyError(name)

    @property
    def failures(self) -> list[Metric]:
        return [m for m in self.metrics if m.passed is False]

    def to_dict(self, timestamp: bool = True) -> dict:
        d = {
            "schema_version": REPORT_SCHEMA_VERSION,
            "experiment": self.experiment,
            "config_digest": self.config_digest,
            "seed": self.seed,
            "metrics": [m.to_dict() for m in self.metrics],
            "artifacts": list(self.artifacts),
        }
        if timestamp:
            d["generated_at"] = self.generated_at or datetime.now(timezone.utc).isoformat(timespec="seconds")
        return d

    def write(self, path, timestamp: bool = True) -> Path:
        path = Path(path)
        path.write_text(json.dumps(self.to_dict(timestamp), indent=2) + "\n", encoding="utf-8", newline="\n")
        return path

    @classmethod
    def from_dict(cls, d: dict) -> "ExperimentReport":
        for key in ("schema_version", "config_digest", "metrics", "artifacts"):
            if key not in d:
                raise ValueError(f"report is missing {key!r}")
        metrics = []
        for m in d["metrics"]:
            value = m["value"]
            if value in ("inf", "-inf"):
                value = float(value)
            metrics.append(
                Metric(m["name"], value, m.get("target"), m.get("tolerance"), m.get("mode", "rel"),
                       m.get("informational", False), m.get("note", ""))
            )
        return cls(d.get("experiment", ""), d["config_digest"], d.get("seed", 0), metrics,
                   list(d["artifacts"]), d.get("generated_at"))

    @classmethod
    def read(cls, path) -> "ExperimentReport":
        return cls.from_dict(json.loads(Path(path).read_text(encoding="utf-8")))


@dataclass
class ComparisonSummary:
    lines: list[str]
    failed: list[str]

    @property
    def exit_code(self) -> int:
        return 1 if self.failed else 0


def compare_to_targets(report: ExperimentReport, tolerance_table: dict | None = None) -> ComparisonSummary:
    """Re-check every metric, optionally overriding target/tolerance/mode by name."""
    if not report.metrics:
        raise ValueError("report has no metrics to compare")
    lines, failed = [], []
    for m in report.metrics:
        override = (tolerance_table or {}).get(m.name)
        if override:
            m = Metric(m.name, m.value, override.get("target", m.target), override.get("tolerance", m.tolerance),
                       override.get("mode", m.mode), override.get("informational", m.informational))
        ok = m.passed
        status = "INFO" if ok is None else ("PASS" if ok else "FAIL")
        target = "" if m.target is None else f" target={_jsonable(m.target)} ({m.mode}"
        if target:
            target += f" {m.tolerance})" if m.tolerance is not None else ")"
        lines.append(f"{status} {m.name} = {_jsonable(m.value)}{target}")
        if ok is False:
            failed.append(m.name)
    return ComparisonSummary(lines, failed)
