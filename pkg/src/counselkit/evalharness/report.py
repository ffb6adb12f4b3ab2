"""Aggregate safety and quality annotations into a performance report.

Percentages are plain count ratios rounded half-up to two decimals, the
same arithmetic a spreadsheet over the annotation table would produce.
"""

from __future__ import annotations

import json
from dataclasses import dataclass
from decimal import ROUND_HALF_UP, Decimal
from pathlib import Path
from typing import Any

from ..errors import ValidationError
from .checks import FAILURE_CATEGORIES, QualityAnnotation, SafetyAnnotation


def percent(count: int, n: int) -> float:
    """count/n as a percentage rounded half-up to 2 decimals."""
    if n <= 0:
        raise ValidationError("cannot compute a percentage over zero transcripts")
    value = Decimal(count) * 100 / Decimal(n)
    return float(value.quantize(Decimal("0.01"), rounding=ROUND_HALF_UP))


@dataclass(frozen=True)
class EvalReport:
    n: int
    pass_count: int
    safety_pass_rate: float
    failure_counts: dict[str, int]
    satisfactory_count: int
    satisfactory_rate: float
    needs_improvement_count: int
    needs_improvement_rate: float

    def to_dict(self) -> dict[str, Any]:
        return {
            "n": self.n,
            "pass_count": self.pass_count,
            "safety_pass_rate": self.safety_pass_rate,
            "failure_counts": dict(self.failure_counts),
            "satisfactory_count": self.satisfactory_count,
            "satisfactory_rate": self.satisfactory_rate,
            "needs_improvement_count": self.needs_improvement_count,
            "needs_improvement_rate": self.needs_improvement_rate,
        }

    @classmethod
    def from_dict(cls, data: dict[str, Any]) -> EvalReport:
        return cls(
            n=int(data["n"]),
            pass_count=int(data["pass_count"]),
            safety_pass_rate=float(data["safety_pass_rate"]),
            failure_counts={k: int(v) for k, v in data["failure_counts"].items()},
            satisfactory_count=int(data["satisfactory_count"]),
            satisfactory_rate=float(data["satisfactory_rate"]),
            needs_improvement_count=int(data["needs_improvement_count"]),
            needs_improvement_rate=float(data["needs_improvement_rate"]),
        )


def aggregate(annotations: list[SafetyAnnotation],
              qualities: list[QualityAnnotation]) -> EvalReport:
    """Roll both annotation sets up into one report.

    Both lists must cover the same transcript ids exactly once each, and
    every safety annotation must be evaluable.
    """
    if not annotations:
        raise ValidationError("no annotations to aggregate")
    safety_ids = [a.transcript_id for a in annotations]
    quality_ids = [q.transcript_id for q in qualities]
    if len(set(safety_ids)) != len(safety_ids) or len(set(quality_ids)) != len(quality_ids):
        raise ValidationError("duplicate transcript ids in annotations")
    if set(safety_ids) != set(quality_ids):
        missing = sorted(set(safety_ids) ^ set(quality_ids))
        raise ValidationError(
            f"safety and quality annotations cover different transcripts: {missing}")
    not_evaluable = sorted(a.transcript_id for a in annotations if not a.evaluable)
    if not_evaluable:
        raise ValidationError(
            f"not-evaluable transcripts must be filtered out first: {not_evaluable}")

    n = len(annotations)
    pass_count = sum(1 for a in annotations if a.passed)
    failure_counts = {
        category: sum(1 for a in annotations if category in a.failures)
        for category in FAILURE_CATEGORIES
    }
    satisfactory = sum(1 for q in qualities if q.satisfactory)
    needs_improvement = n - satisfactory
    return EvalReport(
        n=n,
        pass_count=pass_count,
        safety_pass_rate=percent(pass_count, n),
        failure_counts=failure_counts,
        satisfactory_count=satisfactory,
        satisfactory_rate=percent(satisfactory, n),
        needs_improvement_count=needs_improvement,
        needs_improvement_rate=percent(needs_improvement, n),
    )


def render_table(report: EvalReport, title: str = "System performance") -> str:
    lines = [
        title,
        f"  Conversations evaluated: {report.n}",
        "  Medical safety",
        f"    Pass rate: {report.safety_pass_rate:.2f}% ({report.pass_count}/{report.n})",
        "    Failure analysis",
    ]
    for category, count in report.failure_counts.items():
        lines.append(f"      - {category}: {count}")
    lines += [
        "  Conversational quality",
        f"    Satisfactory: {report.satisfactory_count} ({report.satisfactory_rate:.2f}%)",
        f"    Needs improvement: {report.needs_improvement_count} "
        f"({report.needs_improvement_rate:.2f}%)",
    ]
    return "\n".join(lines)


def save_report(report: EvalReport, path: str | Path) -> Path:
    path = Path(path)
    path.write_text(json.dumps(report.to_dict(), sort_keys=True, indent=2) + "\n")
    return path


def load_report(path: str | Path) -> EvalReport:
    return EvalReport.from_dict(json.loads(Path(path).read_text()))
