"""counselkit: guided contraceptive-counseling engine with safety rails.

A five-stage counseling conversation backed by an expert-maintained
knowledge store, a guideline-derived eligibility rule engine, reasoning
chains injected verbatim into LLM prompts, an HTTP service, and an
evaluation harness with simulated patients.
"""

from .config import EngineConfig, default_config, load_config
from .dialogue import CounselingEngine, SessionState, required_slots
from .eligibility import (
    MecCategory,
    Recommendation,
    filter_contraindicated,
    load_criteria,
    load_rule_fixture,
    rate_method,
    recommend,
    score_and_rank,
)
from .memory import KnowledgeEntry, KnowledgeStore, extract_factors, load_store, retrieve, upsert_entry
from .profiles import UserProfile, generate_summary, redact_pii, verify_profile
from .stages import Stage

__version__ = "0.1.0"

__all__ = [
    "EngineConfig",
    "default_config",
    "load_config",
    "CounselingEngine",
    "SessionState",
    "required_slots",
    "MecCategory",
    "Recommendation",
    "rate_method",
    "filter_contraindicated",
    "score_and_rank",
    "recommend",
    "load_rule_fixture",
    "load_criteria",
    "KnowledgeEntry",
    "KnowledgeStore",
    "extract_factors",
    "retrieve",
    "load_store",
    "upsert_entry",
    "UserProfile",
    "verify_profile",
    "generate_summary",
    "redact_pii",
    "Stage",
    "__version__",
]
