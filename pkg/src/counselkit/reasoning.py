"""Clinical reasoning chains and the thought-injection prompt renderer.

The chain is a fixed-order sequence of typed steps (factor summary,
eligibility filter, preference scoring, rationale) built from engine
outputs, never from LLM text. It is serialized verbatim into the prompt
inside a fenced section marked authoritative, so the model is constrained
by the engine's decisions rather than asked to re-derive them. When a
prompt exceeds the context budget, retrieved knowledge entries are dropped
lowest-score-first; chain steps are never dropped.
"""

from __future__ import annotations

from dataclasses import dataclass, field
from pathlib import Path
from typing import TYPE_CHECKING, Any

import yaml

from .errors import FixtureError, PromptBudgetError, ValidationError
from .stages import Stage

if TYPE_CHECKING:  # pragma: no cover - type-only imports
    from .dialogue import SessionState
    from .eligibility import Recommendation
    from .memory import RetrievalResult
    from .profiles import UserProfile

KIND_FACTOR_SUMMARY = "FactorSummary"
KIND_ELIGIBILITY_FILTER = "EligibilityFilter"
KIND_PREFERENCE_SCORING = "PreferenceScoring"
KIND_RATIONALE = "RationaleStatement"

# Steps always appear in this order; a recommendation chain has all four.
KIND_ORDER = (
    KIND_FACTOR_SUMMARY,
    KIND_ELIGIBILITY_FILTER,
    KIND_PREFERENCE_SCORING,
    KIND_RATIONALE,
)


@dataclass(frozen=True)
class ReasoningStep:
    step_kind: str
    inputs: tuple[str, ...]
    conclusion: str

    def __post_init__(self):
        if self.step_kind not in KIND_ORDER:
            raise ValidationError(f"unknown step kind {self.step_kind!r}")
        if "\n" in self.conclusion:
            raise ValidationError("step conclusions must be single-line")


@dataclass
class ReasoningChain:
    steps: list[ReasoningStep]
    final_rationale: str
    cited_entry_ids: list[str] = field(default_factory=list)

    def __post_init__(self):
        order = [KIND_ORDER.index(s.step_kind) for s in self.steps]
        if order != sorted(order):
            raise ValidationError("reasoning steps out of kind order")

    def serialize(self) -> str:
        """Line-oriented text injected verbatim into the prompt."""
        lines = []
        for i, step in enumerate(self.steps, start=1):
            inputs = ",".join(step.inputs)
            lines.append(f"STEP {i} [{step.step_kind}] inputs={inputs} :: {step.conclusion}")
        lines.append(f"RATIONALE: {self.final_rationale}")
        lines.append(f"CITED: {','.join(self.cited_entry_ids)}")
        return "\n".join(lines)

    @classmethod
    def parse(cls, text: str) -> ReasoningChain:
        steps: list[ReasoningStep] = []
        rationale = ""
        cited: list[str] = []
        for line in text.splitlines():
            if line.startswith("STEP "):
                header, _, conclusion = line.partition(" :: ")
                parts = header.split(" ", 3)
                kind = parts[2].strip("[]")
                inputs_text = parts[3].removeprefix("inputs=")
                inputs = tuple(x for x in inputs_text.split(",") if x)
                steps.append(ReasoningStep(kind, inputs, conclusion))
            elif line.startswith("RATIONALE: "):
                rationale = line.removeprefix("RATIONALE: ")
            elif line.startswith("CITED: "):
                cited = [x for x in line.removeprefix("CITED: ").split(",") if x]
        return cls(steps=steps, final_rationale=rationale, cited_entry_ids=cited)

    def to_dict(self) -> dict[str, Any]:
        return {
            "steps": [
                {"step_kind": s.step_kind, "inputs": list(s.inputs), "conclusion": s.conclusion}
                for s in self.steps
            ],
            "final_rationale": self.final_rationale,
            "cited_entry_ids": list(self.cited_entry_ids),
        }

    @classmethod
    def from_dict(cls, data: dict[str, Any]) -> ReasoningChain:
        return cls(
            steps=[ReasoningStep(s["step_kind"], tuple(s["inputs"]), s["conclusion"])
                   for s in data.get("steps", [])],
            final_rationale=data.get("final_rationale", ""),
            cited_entry_ids=list(data.get("cited_entry_ids", [])),
        )


def _summarize_factors(profile: "UserProfile") -> tuple[tuple[str, ...], str]:
    from .profiles import ANSWER_NO

    inputs: list[str] = []
    bits: list[str] = []
    if profile.intent:
        inputs.append("intent")
        bits.append(f"intent={profile.intent}")
    if profile.gender:
        inputs.append("gender")
        bits.append(f"gender={profile.gender}")
    if profile.prior_experience:
        inputs.append("prior_experience")
        bits.append("prior methods: " + ", ".join(profile.prior_experience))
    for key in sorted(profile.preferences):
        inputs.append(key)
        bits.append(f"{key}={profile.preferences[key]}")
    present = sorted(c for c in profile.conditions if profile.condition_present(c))
    denied = sorted(c for c, v in profile.conditions.items() if v == ANSWER_NO)
    for c in present:
        inputs.append(c)
    if present:
        bits.append("conditions reported or unresolved: " + ", ".join(present))
    if denied:
        bits.append("conditions denied: " + ", ".join(denied))
    conclusion = "Patient factors: " + ("; ".join(bits) if bits else "none recorded yet") + "."
    return tuple(inputs), conclusion


def build_chain(profile: "UserProfile", recommendation: "Recommendation") -> ReasoningChain:
    """Four-step chain mirroring the engine's decision path for a recommendation."""
    factor_inputs, factor_conclusion = _summarize_factors(profile)

    filter_inputs = tuple(
        f"{c}->{e.method_id}" for e in recommendation.excluded
        for c in e.triggering_condition_ids)
    if recommendation.excluded:
        parts = ", ".join(
            f"{e.method_id} (category {int(e.category)}; due to "
            f"{', '.join(e.triggering_condition_ids) or 'recorded answers'})"
            for e in recommendation.excluded)
        filter_conclusion = f"Contraindicated and excluded: {parts}."
    else:
        filter_conclusion = "No methods are contraindicated for this profile."

    scoring_inputs = tuple(
        f"{r.method_id}={r.total_score:.3f}" for r in recommendation.ranked)
    if recommendation.ranked:
        parts = ", ".join(
            f"{r.method_id} ({r.total_score:.3f})" for r in recommendation.ranked)
        scoring_conclusion = f"Eligible methods ranked by weighted preference fit: {parts}."
    else:
        scoring_conclusion = "No eligible methods remain to score."

    ranked_ids = recommendation.ranked_method_ids
    if ranked_ids:
        rationale = (
            "Recommended options, best fit first: " + ", ".join(ranked_ids) + ". "
            + ("Ruled out: " + ", ".join(e.method_id for e in recommendation.excluded) + ". "
               if recommendation.excluded else "")
            + "Final choice should be confirmed with a clinician.")
        statement = f"Present {ranked_ids[0]} as the best fit and list the alternatives."
    else:
        rationale = (
            "No method in the current rule set is medically appropriate for this "
            "profile; refer the user to a clinician for individualized options.")
        statement = "Advise a clinician referral instead of a method."

    return ReasoningChain(
        steps=[
            ReasoningStep(KIND_FACTOR_SUMMARY, factor_inputs, factor_conclusion),
            ReasoningStep(KIND_ELIGIBILITY_FILTER, filter_inputs, filter_conclusion),
            ReasoningStep(KIND_PREFERENCE_SCORING, scoring_inputs, scoring_conclusion),
            ReasoningStep(KIND_RATIONALE, tuple(ranked_ids), statement),
        ],
        final_rationale=rationale,
        cited_entry_ids=recommendation.cited_entry_ids,
    )


def build_context_chain(profile: "UserProfile") -> ReasoningChain:
    """Single factor-summary chain for turns that carry no recommendation."""
    inputs, conclusion = _summarize_factors(profile)
    return ReasoningChain(
        steps=[ReasoningStep(KIND_FACTOR_SUMMARY, inputs, conclusion)],
        final_rationale="",
        cited_entry_ids=[],
    )


# ---------------------------------------------------------------------------
# Prompt rendering
# ---------------------------------------------------------------------------


@dataclass(frozen=True)
class GenerationParams:
    temperature: float
    max_tokens: int = 600

    def to_dict(self) -> dict[str, Any]:
        return {"temperature": self.temperature, "max_tokens": self.max_tokens}


# Low temperature once health answers start mattering; conversational
# warmth is fine while gathering basics.
def default_params(stage: Stage) -> GenerationParams:
    if stage.ordinal <= 2:
        return GenerationParams(temperature=0.7)
    return GenerationParams(temperature=0.2)


@dataclass(frozen=True)
class PromptTemplate:
    system_preamble: str
    skeleton: str
    entry_format: str
    turn_format: str
    stage_instructions: dict[int, str]
    empty_knowledge_text: str = "(no retrieved entries)"


def load_prompt_template(path: str | Path) -> PromptTemplate:
    path = Path(path)
    if not path.exists():
        raise FixtureError(f"prompt template not found: {path}")
    try:
        data = yaml.safe_load(path.read_text()) or {}
    except yaml.YAMLError as exc:
        raise FixtureError(f"cannot parse prompt template {path}: {exc}")
    try:
        template = PromptTemplate(
            system_preamble=data["system_preamble"],
            skeleton=data["skeleton"],
            entry_format=data["entry_format"],
            turn_format=data["turn_format"],
            stage_instructions={int(k): v for k, v in data["stage_instructions"].items()},
            empty_knowledge_text=data.get("empty_knowledge_text", "(no retrieved entries)"),
        )
    except KeyError as exc:
        raise FixtureError(f"prompt template {path} missing field {exc}")
    missing = [o for o in range(1, 6) if o not in template.stage_instructions]
    if missing:
        raise FixtureError(f"prompt template {path} lacks stage instructions {missing}")
    for placeholder in ("{system_preamble}", "{retrieved_knowledge}",
                        "{reasoning_chain}", "{stage_instruction}", "{dialogue_window}"):
        if placeholder not in template.skeleton:
            raise FixtureError(f"prompt template skeleton missing {placeholder}")
    return template


@dataclass
class PromptBundle:
    system_preamble: str
    injected_thoughts: str
    retrieved_knowledge: str
    stage_instruction: str
    dialogue_window: str
    generation_params: GenerationParams
    stage: Stage
    dropped_entry_ids: list[str] = field(default_factory=list)
    _skeleton: str = ""

    def rendered(self) -> str:
        return _fill(self._skeleton, {
            "system_preamble": self.system_preamble,
            "retrieved_knowledge": self.retrieved_knowledge,
            "reasoning_chain": self.injected_thoughts,
            "stage_instruction": self.stage_instruction,
            "dialogue_window": self.dialogue_window,
        })


def _fill(template: str, mapping: dict[str, str]) -> str:
    # str.replace instead of str.format: entry bodies and user text may
    # legitimately contain brace characters.
    out = template
    for key, value in mapping.items():
        out = out.replace("{" + key + "}", value)
    return out


def _format_entries(entries, template: PromptTemplate) -> str:
    if not entries:
        return template.empty_knowledge_text
    blocks = []
    for entry, score in entries:
        blocks.append(_fill(template.entry_format, {
            "entry_id": entry.entry_id,
            "title": entry.title,
            "body": entry.body,
            "citation": entry.citation,
            "score": f"{score:.3f}",
        }))
    return "\n".join(blocks)


def render_prompt(chain: ReasoningChain, retrieval: "RetrievalResult",
                  state: "SessionState", template: PromptTemplate, *,
                  context_budget_chars: int, window_turns: int = 20,
                  params: GenerationParams | None = None) -> PromptBundle:
    """Assemble the prompt bundle; byte-deterministic for identical inputs.

    Over budget, retrieved entries are dropped lowest-score-first and the
    drop is recorded on the bundle. If the prompt still exceeds the budget
    with no entries at all, the configuration is too small: hard error.
    """
    stage = state.current_stage
    window = state.history[-window_turns:]
    window_text = "\n".join(
        _fill(template.turn_format, {"speaker": turn.speaker, "text": turn.text})
        for turn in window)
    instruction = template.stage_instructions[stage.ordinal]
    chain_text = chain.serialize()
    kept = list(retrieval.entries)
    dropped: list[str] = []

    def build(entries) -> PromptBundle:
        return PromptBundle(
            system_preamble=template.system_preamble,
            injected_thoughts=chain_text,
            retrieved_knowledge=_format_entries(entries, template),
            stage_instruction=instruction,
            dialogue_window=window_text,
            generation_params=params or default_params(stage),
            stage=stage,
            dropped_entry_ids=list(dropped),
            _skeleton=template.skeleton,
        )

    bundle = build(kept)
    while len(bundle.rendered()) > context_budget_chars and kept:
        entry, _ = kept.pop()
        dropped.append(entry.entry_id)
        bundle = build(kept)
    if len(bundle.rendered()) > context_budget_chars:
        raise PromptBudgetError(
            f"prompt is {len(bundle.rendered())} chars with no retrieved entries; "
            f"budget {context_budget_chars} is too small for the reasoning chain")
    return bundle
