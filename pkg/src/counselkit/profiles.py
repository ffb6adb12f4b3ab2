"""User profile assembly, stage-5 verification, summary generation, and PII redaction.

The profile is the accumulating record of everything the user reported:
intent, gender, prior method experience, preferences, and the condition
checklist. Stage 5 presents it back for explicit confirmation; only a
verified profile may be turned into a downloadable summary. Transcripts
destined for storage pass through pattern-based PII redaction first.
"""

from __future__ import annotations

import re
from dataclasses import dataclass, field, replace
from datetime import datetime, timezone
from pathlib import Path
from typing import TYPE_CHECKING, Any, Callable

import yaml

from .errors import FixtureError, UnverifiedProfileError, ValidationError

if TYPE_CHECKING:  # pragma: no cover - type-only imports
    from .dialogue import DialogueTurn, SessionState
    from .eligibility import Recommendation


# Condition checklist answers. "unknown" is a recorded answer (the user could
# not say), distinct from a slot that was never asked.
ANSWER_YES = "yes"
ANSWER_NO = "no"
ANSWER_UNKNOWN = "unknown"
CONDITION_ANSWERS = (ANSWER_YES, ANSWER_NO, ANSWER_UNKNOWN)

# Slot ids with dedicated profile fields; everything else lands in
# preferences (criterion slots) or conditions (checklist slots).
SLOT_INTENT = "intent"
SLOT_GENDER = "gender"
SLOT_PRIOR_EXPERIENCE = "prior_experience"


def utc_now() -> datetime:
    return datetime.now(timezone.utc)


@dataclass
class UserProfile:
    """Accumulated user-reported facts driving eligibility and ranking."""

    intent: str | None = None
    gender: str | None = None
    prior_experience: list[str] = field(default_factory=list)
    experience_notes: str = ""
    preferences: dict[str, str] = field(default_factory=dict)
    conditions: dict[str, str] = field(default_factory=dict)
    verified: bool = False
    verified_at: str | None = None

    def condition_present(self, condition_id: str) -> bool:
        """True when the condition was reported or the answer is unknown.

        Unknown counts as present: the engine is conservative about
        contraindications.
        """
        return self.conditions.get(condition_id) in (ANSWER_YES, ANSWER_UNKNOWN)

    def to_dict(self) -> dict[str, Any]:
        return {
            "intent": self.intent,
            "gender": self.gender,
            "prior_experience": list(self.prior_experience),
            "experience_notes": self.experience_notes,
            "preferences": dict(self.preferences),
            "conditions": dict(self.conditions),
            "verified": self.verified,
            "verified_at": self.verified_at,
        }

    @classmethod
    def from_dict(cls, data: dict[str, Any]) -> UserProfile:
        return cls(
            intent=data.get("intent"),
            gender=data.get("gender"),
            prior_experience=list(data.get("prior_experience", [])),
            experience_notes=data.get("experience_notes", ""),
            preferences=dict(data.get("preferences", {})),
            conditions=dict(data.get("conditions", {})),
            verified=bool(data.get("verified", False)),
            verified_at=data.get("verified_at"),
        )


def apply_slot(profile: UserProfile, slot_id: str, value: Any,
               condition_ids: set[str], preference_slots: set[str]) -> None:
    """Project a filled slot value onto the profile.

    Condition answers are normalized to yes/no/unknown; booleans from the
    extractor are accepted. Any change drops a previous verification.
    """
    if slot_id in condition_ids:
        profile.conditions[slot_id] = _normalize_condition_answer(value)
    elif slot_id == SLOT_INTENT:
        profile.intent = str(value)
    elif slot_id == SLOT_GENDER:
        profile.gender = str(value)
    elif slot_id == SLOT_PRIOR_EXPERIENCE:
        if isinstance(value, (list, tuple)):
            profile.prior_experience = [str(v) for v in value]
        elif value in (ANSWER_UNKNOWN, None):
            profile.prior_experience = []
            profile.experience_notes = ANSWER_UNKNOWN
        else:
            profile.prior_experience = []
            profile.experience_notes = str(value)
    elif slot_id in preference_slots:
        profile.preferences[slot_id] = str(value)
    else:
        profile.preferences[slot_id] = str(value)
    profile.verified = False
    profile.verified_at = None


def _normalize_condition_answer(value: Any) -> str:
    if value is True:
        return ANSWER_YES
    if value is False:
        return ANSWER_NO
    if isinstance(value, str) and value in CONDITION_ANSWERS:
        return value
    return ANSWER_UNKNOWN


def verify_profile(state: "SessionState", user_confirmation: bool,
                   corrections: dict[str, Any] | None = None, *,
                   known_slots: set[str], condition_ids: set[str],
                   preference_slots: set[str],
                   clock: Callable[[], datetime] = utc_now) -> UserProfile:
    """Apply stage-5 corrections, then record the user's verdict.

    Corrections are applied before the confirmation is evaluated, so a
    "yes, but fix X" message never verifies the uncorrected profile.
    Declining leaves the profile unverified; the caller re-presents it.
    """
    corrections = corrections or {}
    unknown = sorted(set(corrections) - known_slots)
    if unknown:
        raise ValidationError(
            f"corrections reference unknown slots: {', '.join(unknown)}",
            fields=unknown,
        )
    for slot_id, value in corrections.items():
        state.filled_slots[slot_id] = value
        apply_slot(state.profile, slot_id, value, condition_ids, preference_slots)
    if user_confirmation and not corrections:
        state.profile.verified = True
        state.profile.verified_at = clock().isoformat()
    else:
        state.profile.verified = False
        state.profile.verified_at = None
    return state.profile


# ---------------------------------------------------------------------------
# Summary document
# ---------------------------------------------------------------------------

SUMMARY_SCHEMA_VERSION = 1


@dataclass
class SummaryDocument:
    """Portable counseling summary: verified profile + recommendation.

    Excluded methods always appear with their triggering conditions so a
    provider sees every contraindication the engine applied.
    """

    profile: dict[str, Any]
    recommendation: dict[str, Any]
    citations: list[str]
    generated_at: str
    disclaimer: str

    def to_record(self) -> dict[str, Any]:
        """Machine-readable sidecar for provider systems."""
        return {
            "schema_version": SUMMARY_SCHEMA_VERSION,
            "profile": self.profile,
            "recommendation": self.recommendation,
            "citations": list(self.citations),
            "generated_at": self.generated_at,
            "disclaimer": self.disclaimer,
        }

    @classmethod
    def from_record(cls, record: dict[str, Any]) -> SummaryDocument:
        if record.get("schema_version") != SUMMARY_SCHEMA_VERSION:
            raise ValidationError(
                f"unsupported summary schema version {record.get('schema_version')!r}")
        return cls(
            profile=record["profile"],
            recommendation=record["recommendation"],
            citations=list(record["citations"]),
            generated_at=record["generated_at"],
            disclaimer=record["disclaimer"],
        )

    def render_text(self) -> str:
        """Printable text document for the user to download."""
        lines = ["CONTRACEPTIVE COUNSELING SUMMARY", ""]
        lines.append(f"Generated: {self.generated_at}")
        lines.append("")
        lines.append("USER PROFILE (verified by the user)")
        lines.append(f"  Intent: {self.profile.get('intent') or '-'}")
        lines.append(f"  Gender: {self.profile.get('gender') or '-'}")
        prior = ", ".join(self.profile.get("prior_experience", [])) or "none reported"
        lines.append(f"  Prior method experience: {prior}")
        notes = self.profile.get("experience_notes", "")
        if notes:
            lines.append(f"  Experience notes: {notes}")
        lines.append("  Preferences:")
        for key, value in sorted(self.profile.get("preferences", {}).items()):
            lines.append(f"    - {key}: {value}")
        lines.append("  Health screening answers:")
        for key, value in sorted(self.profile.get("conditions", {}).items()):
            lines.append(f"    - {key}: {value}")
        lines.append("")
        lines.append("RECOMMENDATION")
        ranked = self.recommendation.get("ranked", [])
        if ranked:
            for i, item in enumerate(ranked, start=1):
                lines.append(
                    f"  {i}. {item['method_id']} "
                    f"(suitability {item['total_score']:.3f}, "
                    f"eligibility category {item['category']})")
        else:
            lines.append("  No method could be recommended from the current rule set.")
            lines.append("  Please discuss options directly with a clinician.")
        excluded = self.recommendation.get("excluded", [])
        lines.append("")
        lines.append("METHODS NOT RECOMMENDED (contraindications found)")
        if excluded:
            for item in excluded:
                reasons = ", ".join(item["triggering_condition_ids"]) or "-"
                lines.append(
                    f"  - {item['method_id']} (category {item['category']}; "
                    f"because of: {reasons})")
        else:
            lines.append("  none")
        lines.append("")
        lines.append("GUIDELINE REFERENCES")
        for citation in self.citations:
            lines.append(f"  - {citation}")
        lines.append("")
        lines.append("DISCLAIMER")
        lines.append(f"  {self.disclaimer}")
        return "\n".join(lines) + "\n"


def generate_summary(profile: UserProfile, recommendation: "Recommendation", *,
                     disclaimer: str,
                     clock: Callable[[], datetime] = utc_now) -> SummaryDocument:
    """Build the downloadable summary for a verified profile.

    Raises ``UnverifiedProfileError`` when the user has not confirmed the
    profile in stage 5; there is no way to bypass the check.
    """
    if not profile.verified:
        raise UnverifiedProfileError("profile must be verified before a summary is generated")
    return SummaryDocument(
        profile=profile.to_dict(),
        recommendation=recommendation.to_dict(),
        citations=list(recommendation.citations),
        generated_at=clock().isoformat(),
        disclaimer=disclaimer,
    )


# ---------------------------------------------------------------------------
# PII redaction
# ---------------------------------------------------------------------------


@dataclass(frozen=True)
class RedactionRule:
    """One pattern category from the redaction policy file.

    If a pattern defines a ``pii`` named group only that span is replaced,
    otherwise the whole match is. Placeholders never re-match any pattern,
    which is what makes redaction idempotent.
    """

    category: str
    placeholder: str
    patterns: tuple[re.Pattern, ...]


@dataclass(frozen=True)
class RedactionPolicy:
    rules: tuple[RedactionRule, ...]


def load_redaction_policy(path: str | Path) -> RedactionPolicy:
    path = Path(path)
    try:
        data = yaml.safe_load(path.read_text()) or {}
    except yaml.YAMLError as exc:
        raise FixtureError(f"cannot parse redaction policy {path}: {exc}")
    rules = []
    for i, raw in enumerate(data.get("rules", [])):
        try:
            flags = 0 if raw.get("case_sensitive") else re.IGNORECASE
            patterns = tuple(re.compile(p, flags) for p in raw["patterns"])
            rules.append(RedactionRule(
                category=raw["category"],
                placeholder=raw["placeholder"],
                patterns=patterns,
            ))
        except (KeyError, re.error) as exc:
            raise FixtureError(
                f"bad redaction rule #{i} in {path}: {exc}",
                details=[f"rule index {i}"])
    if not rules:
        raise FixtureError(f"redaction policy {path} defines no rules")
    return RedactionPolicy(rules=tuple(rules))


def redact_text(text: str, policy: RedactionPolicy) -> str:
    for rule in policy.rules:
        for pattern in rule.patterns:
            text = _sub_rule(text, pattern, rule.placeholder)
    return text


def _sub_rule(text: str, pattern: re.Pattern, placeholder: str) -> str:
    def _replace(match: re.Match) -> str:
        if "pii" in (pattern.groupindex or {}):
            start, end = match.span("pii")
            if start == -1:
                return match.group(0)
            whole_start = match.start(0)
            original = match.group(0)
            rel_start, rel_end = start - whole_start, end - whole_start
            return original[:rel_start] + placeholder + original[rel_end:]
        return placeholder

    return pattern.sub(_replace, text)


def redact_pii(transcript: list["DialogueTurn"], policy: RedactionPolicy) -> list["DialogueTurn"]:
    """Redact PII spans in every turn, preserving transcript structure.

    Turn indices, speakers, stage tags, citations, and attachments are
    untouched; only the text changes. Applying the function twice yields
    the same output as applying it once.
    """
    return [replace(turn, text=redact_text(turn.text, policy)) for turn in transcript]
