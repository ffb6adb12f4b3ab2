"""Naive-prompting baseline: one retrieval + one LLM call per message.

This comparator deliberately skips everything the guided engine adds: no
stages, no slot tracking, no eligibility filtering, no reasoning chain,
and no citation discipline. It exists so A/B evaluation runs can contrast
the guided flow against plain prompt-the-model-with-documents behavior.
Enable it with ``engine_mode: naive`` in the service configuration.
"""

from __future__ import annotations

import copy
import time
from typing import Callable

from .dialogue import (
    SPEAKER_ASSISTANT,
    SPEAKER_USER,
    AssistantReply,
    DialogueTurn,
    SessionState,
    _default_id_factory,
)
from .errors import SessionCompleteError
from .gateway import Backend, CompletionRequest, complete
from .memory import KnowledgeStore, retrieve_by_tags
from .profiles import UserProfile, utc_now
from .reasoning import GenerationParams
from .stages import Stage

NAIVE_GREETING = ("Hi! Ask me anything about birth control and I'll do my "
                  "best to help.")

NAIVE_PROMPT = (
    "You are a helpful assistant answering contraception questions.\n"
    "Documents:\n{documents}\n"
    "User: {user_text}\n"
    "Answer:"
)


class NaiveEngine:
    """Single-prompt baseline with the same session surface as the guided engine."""

    def __init__(self, *, store: KnowledgeStore, backend: Backend,
                 retrieval_k: int = 5, max_retries: int = 3,
                 backoff_s: tuple[float, ...] = (0.5, 1.0, 2.0),
                 request_timeout: float = 30.0,
                 clock=utc_now,
                 id_factory: Callable[[], str] = _default_id_factory,
                 sleep: Callable[[float], None] = time.sleep):
        self.store = store
        self.backend = backend
        self.retrieval_k = retrieval_k
        self.max_retries = max_retries
        self.backoff_s = backoff_s
        self.request_timeout = request_timeout
        self.clock = clock
        self.id_factory = id_factory
        self.sleep = sleep
        self._all_keys = sorted({key for e in store.entries.values() for key in e.keys})

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
        state.history.append(DialogueTurn(
            turn_index=0, speaker=SPEAKER_ASSISTANT, text=NAIVE_GREETING,
            stage_at_turn=Stage.INFO_GATHERING))
        return state

    def process_turn(self, state: SessionState, user_text: str) -> tuple[SessionState, AssistantReply]:
        if state.terminal:
            raise SessionCompleteError(f"session {state.session_id} is closed")
        new = copy.deepcopy(state)
        new.history.append(DialogueTurn(
            turn_index=len(new.history), speaker=SPEAKER_USER, text=user_text,
            stage_at_turn=new.current_stage))

        # Crude keyword match: any store key appearing verbatim in the text.
        lowered = user_text.lower()
        tags = frozenset(k for k in self._all_keys if k in lowered)
        entries = retrieve_by_tags(self.store, tags, self.retrieval_k) if tags else []
        documents = "\n".join(f"- {e.title}: {e.body}" for e, _ in entries) or "(none)"
        prompt = NAIVE_PROMPT.replace("{documents}", documents).replace(
            "{user_text}", user_text)
        request = CompletionRequest(
            request_id=f"{new.session_id}:{len(new.history)}",
            session_id=new.session_id,
            stage_ordinal=new.current_stage.ordinal,
            prompt_text=prompt,
            params=GenerationParams(temperature=0.7),
            timeout=self.request_timeout,
        )
        response = complete(request, self.backend, max_retries=self.max_retries,
                            backoff_s=self.backoff_s, sleep=self.sleep)
        text = response.text.strip()
        new.history.append(DialogueTurn(
            turn_index=len(new.history), speaker=SPEAKER_ASSISTANT, text=text,
            stage_at_turn=new.current_stage))
        new.updated_at = self.clock().isoformat()
        reply = AssistantReply(
            text=text,
            stage=new.current_stage,
            cited_entry_ids=[],
            attachments=[],
            asked_slot_id=None,
            slots_updated={},
            recommendation=None,
            session_complete=False,
        )
        return new, reply
