"""Five-stage guided counseling flow: slots, sessions, and per-turn orchestration.

The engine owns the conversation state machine. A stage advances exactly
when all of its required slots are filled; the marker never regresses, and
corrections update slots in place while invalidating any cached
recommendation. Greeting, stage-opening, and question texts are
fixture-authored so the required screening questions are always asked
verbatim; the LLM adds conversational texture around them.

``process_turn`` works on a copy of the session, so a gateway failure
mid-turn leaves the caller's state untouched.
"""

from __future__ import annotations

import copy
import re
import time
import uuid
from dataclasses import dataclass, field
from datetime import datetime
from pathlib import Path
from typing import Any, Callable

import yaml

from . import memory, profiles, reasoning
from .eligibility import Recommendation, RuleFixture, recommend
from .errors import ConfigurationError, FixtureError, SessionCompleteError
from .gateway import Backend, CompletionRequest, complete
from .memory import (
    DOMAIN_BOOLEAN,
    DOMAIN_ENUM,
    DOMAIN_FREE_TEXT,
    DOMAIN_LIST,
    FactorSpec,
    FactorVocabulary,
    KnowledgeStore,
    PatternRule,
    RetrievalResult,
    build_vocabulary,
)
from .profiles import ANSWER_UNKNOWN, UserProfile, utc_now
from .reasoning import PromptTemplate, default_params, render_prompt
from .stages import Stage

SPEAKER_USER = "user"
SPEAKER_ASSISTANT = "assistant"

# Pseudo-slot used in stage 5 for the user's confirmation verdict.
CONFIRM_SLOT = "profile_confirmed"

DEFAULT_MAX_REASKS = 3


@dataclass(frozen=True)
class SlotSpec:
    """One required (or optional) piece of user information tied to a stage."""

    slot_id: str
    stage: Stage
    prompt_intent: str
    required: bool
    value_domain: str
    question: str
    clarify: str = ""
    patterns: tuple[tuple[str, Any], ...] = ()


@dataclass(frozen=True)
class Attachment:
    kind: str
    uri: str
    caption: str

    def to_dict(self) -> dict[str, Any]:
        return {"kind": self.kind, "uri": self.uri, "caption": self.caption}

    @classmethod
    def from_dict(cls, data: dict[str, Any]) -> Attachment:
        return cls(data["kind"], data["uri"], data.get("caption", ""))


@dataclass
class DialogueTurn:
    turn_index: int
    speaker: str
    text: str
    stage_at_turn: Stage
    cited_entry_ids: list[str] = field(default_factory=list)
    attachments: list[Attachment] = field(default_factory=list)
    asked_slot_id: str | None = None

    def to_dict(self) -> dict[str, Any]:
        return {
            "turn_index": self.turn_index,
            "speaker": self.speaker,
            "text": self.text,
            "stage": self.stage_at_turn.canonical,
            "cited_entry_ids": list(self.cited_entry_ids),
            "attachments": [a.to_dict() for a in self.attachments],
            "asked_slot_id": self.asked_slot_id,
        }

    @classmethod
    def from_dict(cls, data: dict[str, Any]) -> DialogueTurn:
        return cls(
            turn_index=int(data["turn_index"]),
            speaker=data["speaker"],
            text=data["text"],
            stage_at_turn=Stage.from_canonical(data["stage"]),
            cited_entry_ids=list(data.get("cited_entry_ids", [])),
            attachments=[Attachment.from_dict(a) for a in data.get("attachments", [])],
            asked_slot_id=data.get("asked_slot_id"),
        )


@dataclass
class SessionState:
    session_id: str
    current_stage: Stage
    profile: UserProfile
    history: list[DialogueTurn]
    filled_slots: dict[str, Any]
    created_at: str
    updated_at: str
    reask_counts: dict[str, int] = field(default_factory=dict)
    flagged_unknown: list[str] = field(default_factory=list)
    pending_slot: str | None = None
    recommendation: Recommendation | None = None
    slot_events: list[dict[str, Any]] = field(default_factory=list)
    degraded_turns: list[int] = field(default_factory=list)
    terminal: bool = False
    summary_record: dict[str, Any] | None = None
    summary_text: str | None = None

    def to_dict(self) -> dict[str, Any]:
        return {
            "session_id": self.session_id,
            "current_stage": self.current_stage.canonical,
            "profile": self.profile.to_dict(),
            "history": [t.to_dict() for t in self.history],
            "filled_slots": dict(self.filled_slots),
            "created_at": self.created_at,
            "updated_at": self.updated_at,
            "reask_counts": dict(self.reask_counts),
            "flagged_unknown": list(self.flagged_unknown),
            "pending_slot": self.pending_slot,
            "recommendation": self.recommendation.to_dict() if self.recommendation else None,
            "slot_events": [dict(e) for e in self.slot_events],
            "degraded_turns": list(self.degraded_turns),
            "terminal": self.terminal,
            "summary_record": self.summary_record,
            "summary_text": self.summary_text,
        }

    @classmethod
    def from_dict(cls, data: dict[str, Any]) -> SessionState:
        rec = data.get("recommendation")
        return cls(
            session_id=data["session_id"],
            current_stage=Stage.from_canonical(data["current_stage"]),
            profile=UserProfile.from_dict(data["profile"]),
            history=[DialogueTurn.from_dict(t) for t in data["history"]],
            filled_slots=dict(data["filled_slots"]),
            created_at=data["created_at"],
            updated_at=data["updated_at"],
            reask_counts={k: int(v) for k, v in data.get("reask_counts", {}).items()},
            flagged_unknown=list(data.get("flagged_unknown", [])),
            pending_slot=data.get("pending_slot"),
            recommendation=Recommendation.from_dict(rec) if rec else None,
            slot_events=[dict(e) for e in data.get("slot_events", [])],
            degraded_turns=list(data.get("degraded_turns", [])),
            terminal=bool(data.get("terminal", False)),
            summary_record=data.get("summary_record"),
            summary_text=data.get("summary_text"),
        )


@dataclass
class AssistantReply:
    text: str
    stage: Stage
    cited_entry_ids: list[str]
    attachments: list[Attachment]
    asked_slot_id: str | None
    slots_updated: dict[str, Any]
    recommendation: dict[str, Any] | None
    session_complete: bool
    degraded: bool = False


# ---------------------------------------------------------------------------
# Dialogue templates fixture
# ---------------------------------------------------------------------------


@dataclass(frozen=True)
class DialogueTemplates:
    greeting: str
    stage_openers: dict[int, str]
    stage_ready: str
    unknown_recorded: str
    condition_clarify: str
    base_slots: tuple[SlotSpec, ...]
    recommendation_header: str
    recommendation_item: str
    excluded_header: str
    excluded_item: str
    referral: str
    post_recommendation_prompt: str
    verification_intro: str
    verification_prompt: str
    verification_reprompt: str
    verification_clarify: str
    verification_updated: str
    verified_ack: str


_DOMAINS = (DOMAIN_BOOLEAN, DOMAIN_ENUM, DOMAIN_FREE_TEXT, DOMAIN_LIST)


def load_dialogue_templates(path: str | Path) -> DialogueTemplates:
    path = Path(path)
    if not path.exists():
        raise FixtureError(f"dialogue template fixture not found: {path}")
    try:
        data = yaml.safe_load(path.read_text()) or {}
    except yaml.YAMLError as exc:
        raise FixtureError(f"cannot parse dialogue templates {path}: {exc}")

    slots: list[SlotSpec] = []
    seen: set[str] = set()
    for i, raw in enumerate(data.get("slots", []) or []):
        try:
            spec = SlotSpec(
                slot_id=raw["slot_id"],
                stage=Stage.from_ordinal(int(raw["stage"])),
                prompt_intent=raw.get("prompt_intent", ""),
                required=bool(raw.get("required", True)),
                value_domain=raw["value_domain"],
                question=raw["question"],
                clarify=raw.get("clarify", ""),
                patterns=tuple(
                    (p["regex"], p.get("value", True)) for p in raw.get("patterns", [])),
            )
        except KeyError as exc:
            raise FixtureError(f"slot record {i} in {path} missing field {exc}")
        if spec.value_domain not in _DOMAINS:
            raise FixtureError(f"slot {spec.slot_id!r}: unknown value domain {spec.value_domain!r}")
        if spec.slot_id in seen:
            raise FixtureError(f"slot {spec.slot_id!r} declared twice in {path}")
        seen.add(spec.slot_id)
        slots.append(spec)

    stage1 = {s.slot_id for s in slots if s.stage == Stage.INFO_GATHERING and s.required}
    if not {"intent", "gender", "prior_experience"} <= stage1:
        raise FixtureError(
            f"stage-1 slots must include intent, gender, prior_experience; got {sorted(stage1)}")
    stage2 = {s.slot_id for s in slots if s.stage == Stage.PREFERENCE_SCREENING and s.required}
    if not {"frequency_preference", "side_effect_tolerance"} <= stage2:
        raise FixtureError(
            "stage-2 slots must include frequency_preference and side_effect_tolerance")

    templates = data.get("templates", {})
    try:
        return DialogueTemplates(
            greeting=data["greeting"],
            stage_openers={int(k): v for k, v in data.get("stage_openers", {}).items()},
            stage_ready=templates["stage_ready"],
            unknown_recorded=templates["unknown_recorded"],
            condition_clarify=templates["condition_clarify"],
            base_slots=tuple(slots),
            recommendation_header=templates["recommendation_header"],
            recommendation_item=templates["recommendation_item"],
            excluded_header=templates["excluded_header"],
            excluded_item=templates["excluded_item"],
            referral=templates["referral"],
            post_recommendation_prompt=templates["post_recommendation_prompt"],
            verification_intro=templates["verification_intro"],
            verification_prompt=templates["verification_prompt"],
            verification_reprompt=templates["verification_reprompt"],
            verification_clarify=templates["verification_clarify"],
            verification_updated=templates["verification_updated"],
            verified_ack=templates["verified_ack"],
        )
    except KeyError as exc:
        raise FixtureError(f"dialogue templates {path} missing field {exc}")


def required_slots(stage: Stage, fixture: RuleFixture,
                   templates: DialogueTemplates,
                   suppress: tuple[str, ...] = ()) -> list[SlotSpec]:
    """Deterministic required-slot list for a stage.

    Stage 3 gets one condition slot per distinct condition in the rule
    fixture (declaration order), appended to any base checklist slots, so
    the screening always covers every condition a rule can fire on.
    ``suppress`` exists for the evaluation harness's fault injection and
    must stay empty in production configurations.
    """
    slots = [s for s in templates.base_slots if s.stage == stage and s.required]
    if stage == Stage.HEALTH_SCREENING:
        for condition in fixture.conditions.values():
            slots.append(SlotSpec(
                slot_id=condition.condition_id,
                stage=Stage.HEALTH_SCREENING,
                prompt_intent=f"screen for {condition.label}",
                required=True,
                value_domain=DOMAIN_BOOLEAN,
                question=condition.question,
                clarify=condition.clarify or templates.condition_clarify.replace(
                    "{label}", condition.label),
                patterns=tuple((p, True) for p in condition.patterns),
            ))
    return [s for s in slots if s.slot_id not in suppress]


# ---------------------------------------------------------------------------
# Engine
# ---------------------------------------------------------------------------


def _default_id_factory() -> str:
    return uuid.uuid4().hex


class CounselingEngine:
    """Per-turn orchestration of memory, eligibility, reasoning, and the LLM."""

    def __init__(self, *, store: KnowledgeStore, fixture: RuleFixture,
                 criteria, dialogue_templates: DialogueTemplates,
                 prompt_template: PromptTemplate, backend: Backend,
                 retrieval_k: int = 5, context_budget_chars: int = 12000,
                 window_turns: int = 20, max_reasks: int = DEFAULT_MAX_REASKS,
                 extraction_mode: str = "rules",
                 max_retries: int = 3, backoff_s: tuple[float, ...] = (0.5, 1.0, 2.0),
                 request_timeout: float = 30.0,
                 disclaimer: str = "This is educational counseling support, not a medical diagnosis.",
                 clock: Callable[[], datetime] = utc_now,
                 id_factory: Callable[[], str] = _default_id_factory,
                 sleep: Callable[[float], None] = time.sleep,
                 suppress_slots: tuple[str, ...] = ()):
        if not fixture.methods or not fixture.rules:
            raise ConfigurationError("rule fixture must define methods and rules")
        if not criteria:
            raise ConfigurationError("at least one preference criterion is required")
        self.store = store
        self.fixture = fixture
        self.criteria = criteria
        self.templates = dialogue_templates
        self.prompt_template = prompt_template
        self.backend = backend
        self.retrieval_k = retrieval_k
        self.context_budget_chars = context_budget_chars
        self.window_turns = window_turns
        self.max_reasks = max_reasks
        self.extraction_mode = extraction_mode
        self.max_retries = max_retries
        self.backoff_s = backoff_s
        self.request_timeout = request_timeout
        self.disclaimer = disclaimer
        self.clock = clock
        self.id_factory = id_factory
        self.sleep = sleep
        self.suppress_slots = tuple(suppress_slots)

        self._slots_by_stage = {
            stage: required_slots(stage, fixture, dialogue_templates, self.suppress_slots)
            for stage in Stage
        }
        self.condition_ids = set(fixture.condition_ids)
        self.preference_slots = {
            s.slot_id for s in dialogue_templates.base_slots
            if s.stage == Stage.PREFERENCE_SCREENING
        }
        self.known_slots = {
            s.slot_id for specs in self._slots_by_stage.values() for s in specs
        } | {s.slot_id for s in dialogue_templates.base_slots}
        self.vocabulary = self._build_vocabulary()

    # -- fixtures -> extraction vocabulary

    def _build_vocabulary(self) -> FactorVocabulary:
        specs: list[FactorSpec] = []
        for slot in self.templates.base_slots:
            specs.append(FactorSpec(
                factor_id=slot.slot_id,
                domain=slot.value_domain,
                patterns=tuple(
                    PatternRule(re.compile(regex, re.IGNORECASE), value)
                    for regex, value in slot.patterns),
            ))
        for condition in self.fixture.conditions.values():
            specs.append(FactorSpec(
                factor_id=condition.condition_id,
                domain=DOMAIN_BOOLEAN,
                patterns=tuple(
                    PatternRule(re.compile(p, re.IGNORECASE), True)
                    for p in condition.patterns),
            ))
        specs.append(FactorSpec(factor_id=CONFIRM_SLOT, domain=DOMAIN_BOOLEAN))
        return build_vocabulary(specs)

    def required_slots(self, stage: Stage) -> list[SlotSpec]:
        return list(self._slots_by_stage[stage])

    # -- session lifecycle

    def create_session(self) -> SessionState:
        now = self.clock().isoformat()
        state = SessionState(
            session_id=self.id_factory(),
            current_stage=Stage.INFO_GATHERING,
            profile=UserProfile(),
            history=[],
            filled_slots={},
            created_at=now,
            updated_at=now,
        )
        first = self._next_unfilled(state, Stage.INFO_GATHERING)
        text = self.templates.greeting
        if first is not None:
            text = f"{text}\n\n{first.question}"
            state.pending_slot = first.slot_id
        state.history.append(DialogueTurn(
            turn_index=0,
            speaker=SPEAKER_ASSISTANT,
            text=text,
            stage_at_turn=Stage.INFO_GATHERING,
            asked_slot_id=state.pending_slot,
        ))
        return state

    def process_turn(self, state: SessionState, user_text: str) -> tuple[SessionState, AssistantReply]:
        if state.terminal:
            raise SessionCompleteError(
                f"session {state.session_id} already completed stage 5")
        new = copy.deepcopy(state)
        prev_stage = new.current_stage
        user_turn = DialogueTurn(
            turn_index=len(new.history),
            speaker=SPEAKER_USER,
            text=user_text,
            stage_at_turn=prev_stage,
        )
        new.history.append(user_turn)

        extraction = memory.extract_factors(
            new.history[-self.window_turns:], self.vocabulary,
            self.backend if self.extraction_mode == "llm" else None,
            mode=self.extraction_mode)
        if extraction.degraded:
            new.degraded_turns.append(user_turn.turn_index)

        slots_updated = self._apply_factors(new, extraction.factors, user_turn.turn_index)
        confirm_value = self._confirmation_value(extraction.factors)
        flagged_now = self._handle_reask(new, slots_updated, user_turn.turn_index)

        if (new.current_stage.ordinal < Stage.PROFILE_VERIFICATION.ordinal
                and self._stage_complete(new, new.current_stage)):
            new.current_stage = Stage.from_ordinal(new.current_stage.ordinal + 1)
        advanced = new.current_stage != prev_stage
        stage = new.current_stage

        if stage.ordinal <= 3:
            reply = self._reply_screening(new, extraction, flagged_now, advanced)
        elif stage == Stage.RECOMMENDATION:
            reply = self._reply_recommendation(new, advanced)
        else:
            reply = self._reply_verification(new, confirm_value, slots_updated, advanced)

        assistant_turn = DialogueTurn(
            turn_index=len(new.history),
            speaker=SPEAKER_ASSISTANT,
            text=reply.text,
            stage_at_turn=stage,
            cited_entry_ids=list(reply.cited_entry_ids),
            attachments=list(reply.attachments),
            asked_slot_id=reply.asked_slot_id,
        )
        new.history.append(assistant_turn)
        new.pending_slot = reply.asked_slot_id
        new.updated_at = self.clock().isoformat()
        reply.slots_updated = slots_updated
        reply.degraded = extraction.degraded
        return new, reply

    # -- factor application and re-asks

    def _apply_factors(self, state: SessionState, factors, turn_index: int) -> dict[str, Any]:
        updated: dict[str, Any] = {}
        for factor in factors:
            slot_id = factor.factor_id
            if slot_id == CONFIRM_SLOT or slot_id not in self.known_slots:
                continue
            value = self._normalize(slot_id, factor.value)
            if state.filled_slots.get(slot_id, _MISSING) == value:
                continue
            state.filled_slots[slot_id] = value
            profiles.apply_slot(state.profile, slot_id, value,
                                self.condition_ids, self.preference_slots)
            state.slot_events.append(
                {"slot_id": slot_id, "value": value, "turn_index": turn_index})
            updated[slot_id] = value
            state.recommendation = None
        return updated

    def _normalize(self, slot_id: str, value: Any) -> Any:
        if slot_id in self.condition_ids:
            if value is True:
                return "yes"
            if value is False:
                return "no"
            return value if value in profiles.CONDITION_ANSWERS else ANSWER_UNKNOWN
        spec = self.vocabulary.get(slot_id)
        if spec is not None and spec.domain == DOMAIN_LIST:
            if isinstance(value, (list, tuple)):
                return [str(v) for v in value]
            if value in (ANSWER_UNKNOWN, None):
                return ANSWER_UNKNOWN
            return [str(value)]
        if spec is not None and spec.domain == DOMAIN_BOOLEAN:
            if value is True:
                return "yes"
            if value is False:
                return "no"
            return ANSWER_UNKNOWN
        return str(value)

    def _confirmation_value(self, factors) -> Any:
        for factor in factors:
            if factor.factor_id == CONFIRM_SLOT:
                return factor.value
        return None

    def _handle_reask(self, state: SessionState, slots_updated: dict[str, Any],
                      turn_index: int) -> str | None:
        pending = state.pending_slot
        if not pending or pending == CONFIRM_SLOT or pending in state.filled_slots:
            return None
        count = state.reask_counts.get(pending, 0) + 1
        state.reask_counts[pending] = count
        if count <= self.max_reasks:
            return None
        # Out of clarification attempts: record the answer as unknown,
        # flag it, and move on. Unknown is treated conservatively downstream.
        value = self._normalize(pending, ANSWER_UNKNOWN)
        state.filled_slots[pending] = value
        profiles.apply_slot(state.profile, pending, value,
                            self.condition_ids, self.preference_slots)
        state.slot_events.append(
            {"slot_id": pending, "value": value, "turn_index": turn_index})
        state.flagged_unknown.append(pending)
        slots_updated[pending] = value
        state.recommendation = None
        return pending

    def _stage_complete(self, state: SessionState, stage: Stage) -> bool:
        return all(s.slot_id in state.filled_slots
                   for s in self._slots_by_stage[stage])

    def _next_unfilled(self, state: SessionState, stage: Stage) -> SlotSpec | None:
        for spec in self._slots_by_stage[stage]:
            if spec.slot_id not in state.filled_slots:
                return spec
        return None

    # -- per-stage reply composition

    def _reply_screening(self, state: SessionState, extraction,
                         flagged_now: str | None, advanced: bool) -> AssistantReply:
        stage = state.current_stage
        chain = reasoning.build_context_chain(state.profile)
        retrieval = memory.retrieve(self.store, extraction.factors, stage, self.retrieval_k)
        llm_text = self._complete_text(state, chain, retrieval)

        parts = []
        if llm_text:
            parts.append(llm_text)
        if flagged_now:
            parts.append(self.templates.unknown_recorded)
        if advanced and self.templates.stage_openers.get(stage.ordinal):
            parts.append(self.templates.stage_openers[stage.ordinal])
        next_slot = self._next_unfilled(state, stage)
        asked = None
        if next_slot is None:
            parts.append(self.templates.stage_ready)
        else:
            asked = next_slot.slot_id
            reasked = (state.pending_slot == asked
                       and state.reask_counts.get(asked, 0) > 0)
            parts.append(next_slot.clarify if reasked and next_slot.clarify
                         else next_slot.question)
        return AssistantReply(
            text="\n\n".join(parts),
            stage=stage,
            cited_entry_ids=[],
            attachments=[],
            asked_slot_id=asked,
            slots_updated={},
            recommendation=None,
            session_complete=False,
        )

    def _reply_recommendation(self, state: SessionState, advanced: bool) -> AssistantReply:
        if state.recommendation is None:
            state.recommendation = recommend(
                state.profile, self.fixture, self.criteria, self.store)
        rec = state.recommendation
        retrieval = self._recommendation_retrieval(state, rec)
        llm_text = self._complete_text(state, rec.chain, retrieval)
        block, cited, attachments = self._render_recommendation(rec)
        parts = [p for p in (llm_text, block, self.templates.post_recommendation_prompt) if p]
        return AssistantReply(
            text="\n\n".join(parts),
            stage=state.current_stage,
            cited_entry_ids=cited,
            attachments=attachments,
            asked_slot_id=None,
            slots_updated={},
            recommendation=rec.to_dict(),
            session_complete=False,
        )

    def _recommendation_retrieval(self, state: SessionState,
                                  rec: Recommendation) -> RetrievalResult:
        tags = {c for c in self.condition_ids if state.profile.condition_present(c)}
        tags.update(rec.ranked_method_ids)
        tags.update(e.method_id for e in rec.excluded)
        if not tags:
            tags = {state.current_stage.topic_tag}
        entries = memory.retrieve_by_tags(
            self.store, frozenset(tags), max(self.retrieval_k, len(rec.ranked) or 1))
        return RetrievalResult(entries=tuple(entries), query_factors=tuple(sorted(tags)))

    def _render_recommendation(self, rec: Recommendation) -> tuple[str, list[str], list[Attachment]]:
        lines: list[str] = []
        cited: list[str] = []
        attachments: list[Attachment] = []
        if rec.ranked:
            lines.append(self.templates.recommendation_header)
            for rank, item in enumerate(rec.ranked, start=1):
                label = self.fixture.methods[item.method_id].label
                entry_ids = rec.method_entry_ids.get(item.method_id, [])
                for entry_id in entry_ids:
                    if entry_id not in cited:
                        cited.append(entry_id)
                entry_ref = ",".join(entry_ids) if entry_ids else "-"
                lines.append(_fill(self.templates.recommendation_item, {
                    "rank": str(rank),
                    "label": label,
                    "method_id": item.method_id,
                    "score": f"{item.total_score:.3f}",
                    "entry_ref": entry_ref,
                }))
            top = rec.ranked[0]
            for entry_id in rec.method_entry_ids.get(top.method_id, []):
                entry = self.store.get(entry_id)
                if entry and entry.visual_aid:
                    attachments.append(Attachment(
                        kind="image",
                        uri=f"/assets/{entry.visual_aid}",
                        caption=f"{self.fixture.methods[top.method_id].label} overview",
                    ))
                    break
        else:
            lines.append(self.templates.referral)
        if rec.excluded:
            lines.append(self.templates.excluded_header)
            for item in rec.excluded:
                label = self.fixture.methods[item.method_id].label
                reason_labels = [self.fixture.conditions[c].label
                                 for c in item.triggering_condition_ids
                                 if c in self.fixture.conditions]
                entry_ids = rec.method_entry_ids.get(item.method_id, [])
                for entry_id in entry_ids:
                    if entry_id not in cited:
                        cited.append(entry_id)
                lines.append(_fill(self.templates.excluded_item, {
                    "label": label,
                    "method_id": item.method_id,
                    "category": str(int(item.category)),
                    "reasons": ", ".join(reason_labels) or "recorded answers",
                    "entry_ref": ",".join(entry_ids) if entry_ids else "-",
                }))
        return "\n".join(lines), cited, attachments

    def _reply_verification(self, state: SessionState, confirm_value,
                            slots_updated: dict[str, Any], advanced: bool) -> AssistantReply:
        stage = state.current_stage
        if advanced:
            text = "\n\n".join(p for p in (
                self.templates.stage_openers.get(stage.ordinal, ""),
                self._render_profile(state),
                self.templates.verification_prompt) if p)
            return AssistantReply(
                text=text, stage=stage, cited_entry_ids=[], attachments=[],
                asked_slot_id=CONFIRM_SLOT, slots_updated={}, recommendation=None,
                session_complete=False)

        if slots_updated:
            # Corrections invalidated the cached recommendation; rebuild it
            # before asking for verification again.
            state.recommendation = recommend(
                state.profile, self.fixture, self.criteria, self.store)
            text = "\n\n".join((
                self.templates.verification_updated,
                self._render_profile(state),
                self.templates.verification_prompt))
            return AssistantReply(
                text=text, stage=stage, cited_entry_ids=[], attachments=[],
                asked_slot_id=CONFIRM_SLOT, slots_updated={},
                recommendation=state.recommendation.to_dict(),
                session_complete=False)

        if confirm_value is True:
            if state.recommendation is None:
                state.recommendation = recommend(
                    state.profile, self.fixture, self.criteria, self.store)
            profiles.verify_profile(
                state, True, None, known_slots=self.known_slots,
                condition_ids=self.condition_ids,
                preference_slots=self.preference_slots, clock=self.clock)
            summary = profiles.generate_summary(
                state.profile, state.recommendation,
                disclaimer=self.disclaimer, clock=self.clock)
            state.summary_record = summary.to_record()
            state.summary_text = summary.render_text()
            state.terminal = True
            attachment = Attachment(
                kind="document",
                uri=f"/sessions/{state.session_id}/summary",
                caption="Downloadable counseling summary",
            )
            return AssistantReply(
                text=self.templates.verified_ack,
                stage=stage,
                cited_entry_ids=list(state.recommendation.cited_entry_ids),
                attachments=[attachment],
                asked_slot_id=None,
                slots_updated={},
                recommendation=state.recommendation.to_dict(),
                session_complete=True)

        if confirm_value is False:
            text = "\n\n".join((
                self.templates.verification_reprompt,
                self._render_profile(state),
                self.templates.verification_prompt))
        else:
            text = self.templates.verification_clarify
        return AssistantReply(
            text=text, stage=stage, cited_entry_ids=[], attachments=[],
            asked_slot_id=CONFIRM_SLOT, slots_updated={}, recommendation=None,
            session_complete=False)

    def _render_profile(self, state: SessionState) -> str:
        profile = state.profile
        lines = [self.templates.verification_intro]
        lines.append(f"- Goal: {profile.intent or '-'}")
        lines.append(f"- Gender: {profile.gender or '-'}")
        prior = ", ".join(profile.prior_experience) or "none reported"
        lines.append(f"- Prior methods: {prior}")
        for key in sorted(profile.preferences):
            lines.append(f"- {key}: {profile.preferences[key]}")
        for condition_id in self.fixture.condition_ids:
            answer = profile.conditions.get(condition_id, "-")
            label = self.fixture.conditions[condition_id].label
            lines.append(f"- {label}: {answer}")
        return "\n".join(lines)

    # -- gateway plumbing

    def _complete_text(self, state: SessionState, chain, retrieval) -> str:
        bundle = render_prompt(
            chain, retrieval, state, self.prompt_template,
            context_budget_chars=self.context_budget_chars,
            window_turns=self.window_turns,
            params=default_params(state.current_stage))
        request = CompletionRequest(
            request_id=f"{state.session_id}:{len(state.history)}",
            session_id=state.session_id,
            stage_ordinal=state.current_stage.ordinal,
            prompt_text=bundle.rendered(),
            params=bundle.generation_params,
            timeout=self.request_timeout,
        )
        response = complete(request, self.backend,
                            max_retries=self.max_retries,
                            backoff_s=self.backoff_s,
                            sleep=self.sleep)
        return response.text.strip()


class _Missing:
    def __eq__(self, other):  # pragma: no cover - sentinel
        return False


_MISSING = _Missing()


def _fill(template: str, mapping: dict[str, str]) -> str:
    out = template
    for key, value in mapping.items():
        out = out.replace("{" + key + "}", value)
    return out
