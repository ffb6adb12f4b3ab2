"""Simulated patient actors that answer the engine's questions from a script.

An actor is template-driven: it answers whatever slot the assistant asked
for, using per-slot utterances (optionally a list consumed in order for
re-ask behavior), condition answers derived from its ground-truth condition
set, and a stop condition for stage 5. Scripts are fully deterministic so
repeated runs produce identical transcripts.
"""

from __future__ import annotations

import random
from dataclasses import dataclass, field
from pathlib import Path
from typing import Any

import yaml

from ..dialogue import CONFIRM_SLOT
from ..errors import FixtureError
from ..profiles import ANSWER_NO, ANSWER_UNKNOWN, ANSWER_YES

DEFAULT_MAX_TURNS = 40


@dataclass
class PatientActor:
    persona_id: str
    description: str = ""
    conditions: dict[str, str] = field(default_factory=dict)
    slot_answers: dict[str, Any] = field(default_factory=dict)
    condition_answers: dict[str, Any] = field(default_factory=dict)
    default_yes: str = "Yes."
    default_no: str = "No."
    unsure_text: str = "I'm honestly not sure about that one."
    continue_text: str = "Okay."
    verification_answer: str = "Yes, that's all correct."
    corrections: list[str] = field(default_factory=list)
    refusals: list[str] = field(default_factory=list)
    max_turns: int = DEFAULT_MAX_TURNS

    def __post_init__(self):
        self._cursors: dict[str, int] = {}
        self._corrections_sent = 0
        self._refusals_sent = 0

    def true_condition(self, condition_id: str) -> str:
        return self.conditions.get(condition_id, ANSWER_NO)

    def _scripted(self, table: dict[str, Any], key: str) -> str | None:
        value = table.get(key)
        if value is None:
            return None
        if isinstance(value, list):
            cursor = self._cursors.get(key, 0)
            self._cursors[key] = cursor + 1
            return str(value[min(cursor, len(value) - 1)])
        return str(value)

    def next_message(self, asked_slot_id: str | None) -> str | None:
        """The actor's reply to the assistant, or None to stop talking."""
        if asked_slot_id == CONFIRM_SLOT:
            if self._refusals_sent < len(self.refusals):
                self._refusals_sent += 1
                return self.refusals[self._refusals_sent - 1]
            if self.refusals:
                return None  # refuser is done; leave the session unverified
            if self._corrections_sent < len(self.corrections):
                self._corrections_sent += 1
                return self.corrections[self._corrections_sent - 1]
            return self.verification_answer
        if asked_slot_id is None:
            return self.continue_text
        scripted = self._scripted(self.slot_answers, asked_slot_id)
        if scripted is not None:
            return scripted
        scripted = self._scripted(self.condition_answers, asked_slot_id)
        if scripted is not None:
            return scripted
        if asked_slot_id in self.conditions or asked_slot_id not in self.slot_answers:
            truth = self.true_condition(asked_slot_id)
            if truth == ANSWER_YES:
                return self.default_yes
            if truth == ANSWER_UNKNOWN:
                return self.unsure_text
            return self.default_no
        return self.continue_text


def load_persona(path: str | Path) -> PatientActor:
    path = Path(path)
    try:
        data = yaml.safe_load(path.read_text()) or {}
    except yaml.YAMLError as exc:
        raise FixtureError(f"cannot parse persona {path}: {exc}")
    if "persona_id" not in data:
        raise FixtureError(f"persona {path} missing persona_id")
    known = {f for f in PatientActor.__dataclass_fields__}
    unknown = set(data) - known - {"demographics"}
    if unknown:
        raise FixtureError(f"persona {path} has unknown fields: {sorted(unknown)}")
    kwargs = {k: v for k, v in data.items() if k in known}
    return PatientActor(**kwargs)


def load_personas(directory: str | Path) -> list[PatientActor]:
    directory = Path(directory)
    if directory.is_file():
        return [load_persona(directory)]
    actors = [load_persona(p) for p in sorted(directory.glob("*.yaml"))]
    if not actors:
        raise FixtureError(f"no persona files found in {directory}")
    return actors


# Phrase pools for generated actors. Everything routes through the same
# deterministic answer tables as file-based personas.
_INTENTS = [
    "I want to prevent pregnancy.",
    "Looking for birth control.",
    "Trying to avoid getting pregnant for now.",
]
_GENDERS = ["I'm a woman.", "Female.", "Nonbinary, they/them."]
_PRIORS = [
    "Never used anything before.",
    "I've been on the pill before.",
    "I used the shot for a year.",
]
_FREQS = [
    "Something long term I don't have to think about.",
    "Daily is fine for me.",
    "Honestly, whatever works.",
]
_SIDES = [
    "Hormones are fine with me.",
    "I'd prefer to avoid hormones.",
    "Not really picky about hormones.",
]


def generate_actors(n: int, seed: int, condition_ids: list[str],
                    yes_rate: float = 0.25, unknown_rate: float = 0.1) -> list[PatientActor]:
    """Deterministically generate n randomized actors over the fixture conditions.

    Each condition is independently yes/unknown/no; preferences and
    background answers are drawn from fixed phrase pools. The same (n, seed,
    condition list) always yields the same actors.
    """
    rng = random.Random(seed)
    actors = []
    for i in range(n):
        conditions: dict[str, str] = {}
        for condition_id in condition_ids:
            roll = rng.random()
            if roll < yes_rate:
                conditions[condition_id] = ANSWER_YES
            elif roll < yes_rate + unknown_rate:
                conditions[condition_id] = ANSWER_UNKNOWN
        actors.append(PatientActor(
            persona_id=f"generated_{seed}_{i:03d}",
            description="randomized scripted actor",
            conditions=conditions,
            slot_answers={
                "intent": rng.choice(_INTENTS),
                "gender": rng.choice(_GENDERS),
                "prior_experience": rng.choice(_PRIORS),
                "frequency_preference": rng.choice(_FREQS),
                "side_effect_tolerance": rng.choice(_SIDES),
            },
        ))
    return actors
