"""Evaluation harness: simulated patient actors, safety checks, and reports."""

from .actors import PatientActor, generate_actors, load_persona, load_personas
from .checks import (
    FAILURE_CONTRAINDICATED,
    FAILURE_CRITICAL_INFO,
    FAILURE_SCREENING,
    QualityAnnotation,
    SafetyAnnotation,
    auto_safety_checks,
    load_quality_annotations,
    load_safety_annotations,
)
from .report import EvalReport, aggregate, render_table
from .simulate import EngineClient, HttpClient, TranscriptRecord, run_simulation

__all__ = [
    "PatientActor",
    "generate_actors",
    "load_persona",
    "load_personas",
    "SafetyAnnotation",
    "QualityAnnotation",
    "auto_safety_checks",
    "load_quality_annotations",
    "load_safety_annotations",
    "FAILURE_SCREENING",
    "FAILURE_CONTRAINDICATED",
    "FAILURE_CRITICAL_INFO",
    "EvalReport",
    "aggregate",
    "render_table",
    "EngineClient",
    "HttpClient",
    "TranscriptRecord",
    "run_simulation",
]
