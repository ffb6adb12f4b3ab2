"""Drive scripted actors against the service and persist redacted transcripts.

Transcripts are canonical JSON records with no wall-clock timestamps or
random session ids, so identical runs serialize to identical bytes. The
harness can talk to an in-process engine (deterministic default) or a live
HTTP endpoint; both clients expose the same payload shape.
"""

from __future__ import annotations

import json
from dataclasses import dataclass, field
from pathlib import Path
from typing import Any, Protocol

from ..errors import CounselError
from ..profiles import RedactionPolicy, redact_text
from .actors import PatientActor


class ServiceClient(Protocol):  # pragma: no cover - structural type
    def create_session(self) -> dict[str, Any]: ...

    def post_message(self, session_id: str, text: str) -> dict[str, Any]: ...

    def get_summary(self, session_id: str) -> dict[str, Any] | None: ...


class EngineClient:
    """In-process client with the same payload shape as the HTTP service."""

    def __init__(self, engine):
        self.engine = engine
        self._sessions: dict[str, Any] = {}

    def create_session(self) -> dict[str, Any]:
        state = self.engine.create_session()
        self._sessions[state.session_id] = state
        greeting = state.history[0]
        return {
            "session_id": state.session_id,
            "turn_index": greeting.turn_index,
            "reply": greeting.text,
            "stage": {"ordinal": state.current_stage.ordinal,
                      "name": state.current_stage.canonical},
            "asked_slot_id": greeting.asked_slot_id,
            "cited_entry_ids": [],
            "attachments": [],
            "slots_updated": {},
            "recommendation": None,
            "session_complete": False,
        }

    def post_message(self, session_id: str, text: str) -> dict[str, Any]:
        state = self._sessions[session_id]
        new_state, reply = self.engine.process_turn(state, text)
        self._sessions[session_id] = new_state
        from ..service import reply_payload

        return reply_payload(new_state, reply)

    def get_summary(self, session_id: str) -> dict[str, Any] | None:
        state = self._sessions[session_id]
        return state.summary_record


class HttpClient:
    """Talks to a running counseling service over HTTP."""

    def __init__(self, base_url: str, timeout: float = 30.0):
        import httpx

        self.base_url = base_url.rstrip("/")
        self._client = httpx.Client(timeout=timeout)

    def create_session(self) -> dict[str, Any]:
        response = self._client.post(f"{self.base_url}/sessions")
        response.raise_for_status()
        return response.json()

    def post_message(self, session_id: str, text: str) -> dict[str, Any]:
        response = self._client.post(
            f"{self.base_url}/sessions/{session_id}/messages", json={"text": text})
        response.raise_for_status()
        return response.json()

    def get_summary(self, session_id: str) -> dict[str, Any] | None:
        response = self._client.get(f"{self.base_url}/sessions/{session_id}/summary")
        if response.status_code != 200:
            return None
        return response.json()


@dataclass
class TranscriptRecord:
    """Canonical, redacted record of one simulated conversation."""

    transcript_id: str
    actor_id: str
    actor_conditions: dict[str, str]
    engine_mode: str
    turns: list[dict[str, Any]] = field(default_factory=list)
    slot_events: list[dict[str, Any]] = field(default_factory=list)
    recommendation: dict[str, Any] | None = None
    recommendation_turn_index: int | None = None
    verified: bool = False
    completed: bool = False
    incomplete_reason: str = ""
    summary_record: dict[str, Any] | None = None

    def to_dict(self) -> dict[str, Any]:
        return {
            "transcript_id": self.transcript_id,
            "actor_id": self.actor_id,
            "actor_conditions": dict(self.actor_conditions),
            "engine_mode": self.engine_mode,
            "turns": list(self.turns),
            "slot_events": list(self.slot_events),
            "recommendation": self.recommendation,
            "recommendation_turn_index": self.recommendation_turn_index,
            "verified": self.verified,
            "completed": self.completed,
            "incomplete_reason": self.incomplete_reason,
            "summary_record": self.summary_record,
        }

    @classmethod
    def from_dict(cls, data: dict[str, Any]) -> TranscriptRecord:
        return cls(**{k: data[k] for k in cls.__dataclass_fields__ if k in data})

    def canonical_json(self) -> str:
        return json.dumps(self.to_dict(), sort_keys=True, indent=2) + "\n"


def _turn_record(turn_index: int, speaker: str, text: str, stage: dict[str, Any],
                 cited: list[str] | None = None,
                 attachments: list[dict[str, Any]] | None = None,
                 asked_slot_id: str | None = None) -> dict[str, Any]:
    return {
        "turn_index": turn_index,
        "speaker": speaker,
        "text": text,
        "stage_ordinal": stage.get("ordinal"),
        "stage_name": stage.get("name"),
        "cited_entry_ids": list(cited or []),
        "attachments": list(attachments or []),
        "asked_slot_id": asked_slot_id,
    }


def run_simulation(actor: PatientActor, client: ServiceClient,
                   policy: RedactionPolicy, *,
                   engine_mode: str = "guided") -> TranscriptRecord:
    """Run one actor to completion (or its stop condition) and redact the result."""
    record = TranscriptRecord(
        transcript_id=actor.persona_id,
        actor_id=actor.persona_id,
        actor_conditions=dict(actor.conditions),
        engine_mode=engine_mode,
    )
    try:
        payload = client.create_session()
    except Exception as exc:
        raise CounselError(f"service unavailable: {exc}") from exc
    session_id = payload["session_id"]
    record.turns.append(_turn_record(
        payload["turn_index"], "assistant", payload["reply"], payload["stage"],
        payload.get("cited_entry_ids"), payload.get("attachments"),
        payload.get("asked_slot_id")))

    asked = payload.get("asked_slot_id")
    complete = False
    for _ in range(actor.max_turns):
        message = actor.next_message(asked)
        if message is None:
            record.incomplete_reason = "actor stop condition"
            break
        user_index = record.turns[-1]["turn_index"] + 1
        payload = client.post_message(session_id, message)
        stage = payload["stage"]
        record.turns.append(_turn_record(user_index, "user", message, stage))
        record.turns.append(_turn_record(
            payload["turn_index"], "assistant", payload["reply"], stage,
            payload.get("cited_entry_ids"), payload.get("attachments"),
            payload.get("asked_slot_id")))
        for slot_id, value in sorted((payload.get("slots_updated") or {}).items()):
            record.slot_events.append(
                {"slot_id": slot_id, "value": value, "turn_index": user_index})
        if payload.get("recommendation") is not None:
            record.recommendation = payload["recommendation"]
            if record.recommendation_turn_index is None:
                record.recommendation_turn_index = payload["turn_index"]
        asked = payload.get("asked_slot_id")
        if payload.get("session_complete"):
            complete = True
            record.verified = True
            break
    else:
        record.incomplete_reason = "max turns reached"

    record.completed = complete
    if complete:
        record.summary_record = client.get_summary(session_id)
    for turn in record.turns:
        turn["text"] = redact_text(turn["text"], policy)
    return record


def save_transcript(record: TranscriptRecord, directory: str | Path) -> Path:
    directory = Path(directory)
    directory.mkdir(parents=True, exist_ok=True)
    path = directory / f"{record.transcript_id}.json"
    path.write_text(record.canonical_json())
    return path


def load_transcript(path: str | Path) -> TranscriptRecord:
    return TranscriptRecord.from_dict(json.loads(Path(path).read_text()))


def load_transcripts(directory: str | Path) -> list[TranscriptRecord]:
    directory = Path(directory)
    return [load_transcript(p) for p in sorted(directory.glob("*.json"))]
