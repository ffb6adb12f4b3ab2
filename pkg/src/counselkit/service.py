"""HTTP counseling service: sessions, messages, state, summary, and admin.

Sessions persist as one JSON snapshot per session under the configured
directory; every successful turn is written atomically before the reply is
returned, so a restart resumes exactly where the transcript left off.
Writes to one session are mutually exclusive: a second concurrent post gets
a 409 instead of blocking. The knowledge-store snapshot swaps atomically on
admin upserts, so in-flight readers keep a consistent view.
"""

from __future__ import annotations

import json
import logging
import os
import threading
from pathlib import Path
from typing import Any

from fastapi import FastAPI, Header
from fastapi.responses import JSONResponse, PlainTextResponse
from fastapi.staticfiles import StaticFiles
from pydantic import BaseModel

from .baseline import NaiveEngine
from .config import MODE_NAIVE, EngineConfig, default_config, load_config, validate_config
from .dialogue import AssistantReply, CounselingEngine, SessionState, load_dialogue_templates
from .eligibility import load_criteria, load_rule_fixture
from .errors import (
    GatewayRejectionError,
    GatewayTransportError,
    MigrationError,
    SessionCompleteError,
    ValidationError,
)
from .gateway import HttpBackend, load_llm_script
from .memory import KnowledgeEntry, load_store, upsert_entry
from .profiles import RedactionPolicy, load_redaction_policy, redact_text
from .reasoning import load_prompt_template

logger = logging.getLogger(__name__)

SESSION_SCHEMA_VERSION = 1


def build_backend(config: EngineConfig):
    if config.backend_kind == "http":
        return HttpBackend(
            url=config.backend_url,
            model=config.backend_model,
            auth_env=config.backend_auth_env,
        )
    return load_llm_script(config.llm_script_path)


def build_engine(config: EngineConfig, *, backend=None, clock=None,
                 id_factory=None, sleep=None,
                 suppress_slots: tuple[str, ...] = ()):
    """Construct the configured engine (guided or naive baseline)."""
    validate_config(config)
    backend = backend if backend is not None else build_backend(config)
    store = load_store(config.knowledge_store_path)
    kwargs: dict[str, Any] = {}
    if clock is not None:
        kwargs["clock"] = clock
    if id_factory is not None:
        kwargs["id_factory"] = id_factory
    if sleep is not None:
        kwargs["sleep"] = sleep
    if config.engine_mode == MODE_NAIVE:
        return NaiveEngine(
            store=store,
            backend=backend,
            retrieval_k=config.retrieval_k,
            max_retries=config.max_retries,
            backoff_s=config.backoff_s,
            request_timeout=config.request_timeout_s,
            **kwargs,
        )
    fixture = load_rule_fixture(config.rules_path)
    return CounselingEngine(
        store=store,
        fixture=fixture,
        criteria=load_criteria(config.criteria_path, fixture),
        dialogue_templates=load_dialogue_templates(config.dialogue_templates_path),
        prompt_template=load_prompt_template(config.prompt_template_path),
        backend=backend,
        retrieval_k=config.retrieval_k,
        context_budget_chars=config.context_budget_chars,
        window_turns=config.window_turns,
        max_reasks=config.max_reasks,
        extraction_mode=config.extraction_mode,
        max_retries=config.max_retries,
        backoff_s=config.backoff_s,
        request_timeout=config.request_timeout_s,
        disclaimer=config.disclaimer,
        suppress_slots=suppress_slots,
        **kwargs,
    )


class SessionRepo:
    """One JSON snapshot file per session; writes are atomic (tmp + rename)."""

    def __init__(self, directory: str | Path):
        self.directory = Path(directory)
        self.directory.mkdir(parents=True, exist_ok=True)

    def _path(self, session_id: str) -> Path:
        return self.directory / f"{session_id}.json"

    def save(self, state: SessionState) -> None:
        payload = {"schema_version": SESSION_SCHEMA_VERSION, "state": state.to_dict()}
        tmp = self._path(state.session_id).with_suffix(".json.tmp")
        tmp.write_text(json.dumps(payload, sort_keys=True))
        os.replace(tmp, self._path(state.session_id))

    def load(self, session_id: str) -> SessionState | None:
        path = self._path(session_id)
        if not path.exists():
            return None
        payload = json.loads(path.read_text())
        version = payload.get("schema_version")
        if version != SESSION_SCHEMA_VERSION:
            raise MigrationError(
                f"session {session_id}: snapshot schema {version!r} is not "
                f"supported (expected {SESSION_SCHEMA_VERSION}); migrate explicitly")
        return SessionState.from_dict(payload["state"])

    def session_ids(self) -> list[str]:
        return sorted(p.stem for p in self.directory.glob("*.json"))


def reply_payload(state: SessionState, reply: AssistantReply) -> dict[str, Any]:
    return {
        "session_id": state.session_id,
        "turn_index": len(state.history) - 1,
        "reply": reply.text,
        "stage": {
            "ordinal": reply.stage.ordinal,
            "name": reply.stage.canonical,
            "label": reply.stage.label,
        },
        "asked_slot_id": reply.asked_slot_id,
        "cited_entry_ids": list(reply.cited_entry_ids),
        "attachments": [a.to_dict() for a in reply.attachments],
        "slots_updated": dict(reply.slots_updated),
        "recommendation": reply.recommendation,
        "session_complete": reply.session_complete,
        "degraded": reply.degraded,
    }


class CounselingService:
    """Engine + persistence + per-session write locks behind the REST surface."""

    def __init__(self, config: EngineConfig, *, engine=None, clock=None,
                 id_factory=None, sleep=None):
        self.config = config
        self.engine = engine if engine is not None else build_engine(
            config, clock=clock, id_factory=id_factory, sleep=sleep)
        self.repo = SessionRepo(config.persistence_dir)
        self.redaction_policy: RedactionPolicy = load_redaction_policy(
            config.redaction_policy_path)
        self._sessions: dict[str, SessionState] = {}
        self._locks: dict[str, threading.Lock] = {}
        self._registry_lock = threading.Lock()

    # -- session access

    def _lock_for(self, session_id: str) -> threading.Lock:
        with self._registry_lock:
            if session_id not in self._locks:
                self._locks[session_id] = threading.Lock()
            return self._locks[session_id]

    def _get_state(self, session_id: str) -> SessionState | None:
        state = self._sessions.get(session_id)
        if state is None:
            state = self.repo.load(session_id)
            if state is not None:
                self._sessions[session_id] = state
        return state

    # -- operations

    def create_session(self) -> dict[str, Any]:
        state = self.engine.create_session()
        self._sessions[state.session_id] = state
        self.repo.save(state)
        greeting = state.history[0]
        return {
            "session_id": state.session_id,
            "reply": greeting.text,
            "turn_index": greeting.turn_index,
            "stage": {
                "ordinal": state.current_stage.ordinal,
                "name": state.current_stage.canonical,
                "label": state.current_stage.label,
            },
            "asked_slot_id": greeting.asked_slot_id,
            "attachments": [],
            "cited_entry_ids": [],
            "slots_updated": {},
            "recommendation": None,
            "session_complete": False,
            "degraded": False,
        }

    def post_message(self, session_id: str, text: str) -> dict[str, Any]:
        state = self._get_state(session_id)
        if state is None:
            raise KeyError(session_id)
        lock = self._lock_for(session_id)
        if not lock.acquire(blocking=False):
            raise ConcurrentPostError(session_id)
        try:
            new_state, reply = self.engine.process_turn(state, text)
            self._sessions[session_id] = new_state
            self.repo.save(new_state)
            return reply_payload(new_state, reply)
        finally:
            lock.release()

    def get_state(self, session_id: str) -> dict[str, Any]:
        state = self._get_state(session_id)
        if state is None:
            raise KeyError(session_id)
        slots = {
            slot: (redact_text(value, self.redaction_policy)
                   if isinstance(value, str) else value)
            for slot, value in sorted(state.filled_slots.items())
        }
        return {
            "session_id": session_id,
            "stage": {
                "ordinal": state.current_stage.ordinal,
                "name": state.current_stage.canonical,
                "label": state.current_stage.label,
            },
            "filled_slots": slots,
            "turn_count": len(state.history),
            "terminal": state.terminal,
            "verified": state.profile.verified,
        }

    def get_summary(self, session_id: str) -> tuple[dict[str, Any], str]:
        state = self._get_state(session_id)
        if state is None:
            raise KeyError(session_id)
        if not state.profile.verified or state.summary_record is None:
            raise SummaryUnavailableError(session_id)
        return state.summary_record, state.summary_text or ""

    def admin_upsert_entry(self, entry_data: dict[str, Any]) -> int:
        entry = KnowledgeEntry.from_dict(entry_data)
        new_store = upsert_entry(self.engine.store, entry, persist=True)
        self.engine.store = new_store  # atomic reference swap
        return new_store.version


class ConcurrentPostError(Exception):
    pass


class SummaryUnavailableError(Exception):
    pass


class MessageBody(BaseModel):
    text: str


class EntryBody(BaseModel):
    entry_id: str
    keys: list[str]
    title: str
    body: str
    citation: str
    visual_aid: str | None = None
    last_reviewed: str = ""


def create_app(config: EngineConfig | None = None, *,
               service: CounselingService | None = None) -> FastAPI:
    if service is None:
        service = CounselingService(config or default_config())
    app = FastAPI(title="counselkit", version="0.1.0")
    app.state.service = service

    assets_dir = Path(service.config.knowledge_store_path).parent / "assets"
    if assets_dir.is_dir():
        app.mount("/assets", StaticFiles(directory=str(assets_dir)), name="assets")

    @app.get("/health")
    def health() -> dict[str, str]:
        return {"status": "ok"}

    @app.post("/sessions", status_code=201)
    def create_session() -> dict[str, Any]:
        return service.create_session()

    @app.post("/sessions/{session_id}/messages")
    def post_message(session_id: str, body: MessageBody):
        try:
            return service.post_message(session_id, body.text)
        except KeyError:
            return _error(404, "unknown-session", f"no session {session_id}")
        except ConcurrentPostError:
            return _error(409, "concurrent-post",
                          "another message for this session is in flight")
        except SessionCompleteError:
            return _error(409, "session-complete",
                          "this session already finished stage 5")
        except GatewayTransportError as exc:
            response = _error(503, "llm-unavailable", str(exc))
            response.headers["Retry-After"] = "2"
            return response
        except GatewayRejectionError as exc:
            return _error(502, "llm-rejected", str(exc))

    @app.get("/sessions/{session_id}/state")
    def get_state(session_id: str):
        try:
            return service.get_state(session_id)
        except KeyError:
            return _error(404, "unknown-session", f"no session {session_id}")

    @app.get("/sessions/{session_id}/summary")
    def get_summary(session_id: str, format: str = "json"):
        try:
            record, text = service.get_summary(session_id)
        except KeyError:
            return _error(404, "unknown-session", f"no session {session_id}")
        except SummaryUnavailableError:
            return _error(409, "profile-not-verified",
                          "the profile has not been verified in stage 5 yet")
        if format == "text":
            return PlainTextResponse(text)
        return record

    @app.post("/admin/entries")
    def admin_upsert(body: EntryBody,
                     x_admin_token: str | None = Header(default=None)):
        expected = os.environ.get(service.config.admin_token_env, "")
        if not expected:
            return _error(503, "admin-disabled",
                          f"set {service.config.admin_token_env} to enable admin access")
        if x_admin_token != expected:
            return _error(401, "bad-token", "missing or invalid admin token")
        try:
            version = service.admin_upsert_entry(body.model_dump())
        except ValidationError as exc:
            return _error(422, "invalid-entry", str(exc))
        return {"store_version": version}

    return app


def _error(status: int, code: str, detail: str) -> JSONResponse:
    return JSONResponse(status_code=status, content={"code": code, "detail": detail})


def main(argv: list[str] | None = None) -> int:
    """Run the service with uvicorn; ``--config`` selects the config file."""
    import argparse

    import uvicorn

    parser = argparse.ArgumentParser(prog="counsel-service")
    parser.add_argument("--config", help="path to service config YAML")
    args = parser.parse_args(argv)
    config = load_config(args.config) if args.config else default_config()
    app = create_app(config)
    uvicorn.run(app, host=config.bind_host, port=config.bind_port)
    return 0


if __name__ == "__main__":  # pragma: no cover
    raise SystemExit(main())
