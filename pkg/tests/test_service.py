"""HTTP service tests: REST semantics, concurrency, and crash consistency."""

from __future__ import annotations

import json
import threading

import pytest
from fastapi.testclient import TestClient

from conftest import HEALTHY_ANSWERS, fixed_clock, sequential_ids
from counselkit.errors import GatewayTransportError, MigrationError
from counselkit.gateway import load_llm_script
from counselkit.service import CounselingService, SessionRepo, create_app


@pytest.fixture
def make_service(config, engine_factory, tmp_path):
    def factory(engine=None, persistence_dir=None, **engine_overrides):
        cfg = config.with_overrides(
            persistence_dir=persistence_dir or str(tmp_path / "sessions"))
        engine = engine or engine_factory(**engine_overrides)
        return CounselingService(cfg, engine=engine)

    return factory


@pytest.fixture
def client(make_service):
    return TestClient(create_app(service=make_service()))


def run_to_verified(client) -> str:
    session_id = client.post("/sessions").json()["session_id"]
    for text in HEALTHY_ANSWERS:
        response = client.post(f"/sessions/{session_id}/messages",
                               json={"text": text})
        assert response.status_code == 200, response.text
    return session_id


class TestBasicFlow:
    def test_health(self, client):
        assert client.get("/health").json() == {"status": "ok"}

    def test_create_session_returns_greeting(self, client):
        payload = client.post("/sessions")
        assert payload.status_code == 201
        body = payload.json()
        assert body["stage"]["ordinal"] == 1
        assert body["stage"]["name"] == "InfoGathering"
        assert body["asked_slot_id"] == "intent"
        assert body["reply"]

    def test_stage2_after_three_stage1_answers(self, client):
        # Hand-traced against the slot specs: intent, gender, prior
        # experience are the stage-1 required slots.
        session_id = client.post("/sessions").json()["session_id"]
        replies = []
        for text in ["I want to prevent pregnancy.", "I'm a woman.",
                     "Never used anything before."]:
            response = client.post(f"/sessions/{session_id}/messages",
                                   json={"text": text})
            replies.append(response.json())
        assert [r["stage"]["ordinal"] for r in replies] == [1, 1, 2]
        state = client.get(f"/sessions/{session_id}/state").json()
        assert state["stage"]["name"] == "PreferenceScreening"
        assert state["turn_count"] == 7

    def test_unknown_session_is_404(self, client):
        assert client.post("/sessions/nope/messages",
                           json={"text": "hi"}).status_code == 404
        assert client.get("/sessions/nope/state").status_code == 404
        assert client.get("/sessions/nope/summary").status_code == 404

    def test_summary_requires_verification(self, client):
        session_id = client.post("/sessions").json()["session_id"]
        response = client.get(f"/sessions/{session_id}/summary")
        assert response.status_code == 409
        assert response.json()["code"] == "profile-not-verified"

    def test_summary_after_verification(self, client):
        session_id = run_to_verified(client)
        record = client.get(f"/sessions/{session_id}/summary").json()
        assert record["profile"]["verified"] is True
        assert record["recommendation"]["ranked"]
        text = client.get(f"/sessions/{session_id}/summary",
                          params={"format": "text"})
        assert "CONTRACEPTIVE COUNSELING SUMMARY" in text.text

    def test_completed_session_conflicts(self, client):
        session_id = run_to_verified(client)
        response = client.post(f"/sessions/{session_id}/messages",
                               json={"text": "more"})
        assert response.status_code == 409
        assert response.json()["code"] == "session-complete"

    def test_state_view_redacts_free_text(self, make_service):
        client = TestClient(create_app(service=make_service()))
        session_id = client.post("/sessions").json()["session_id"]
        client.post(f"/sessions/{session_id}/messages",
                    json={"text": "I want birth control. My email is a@b.com"})
        state = client.get(f"/sessions/{session_id}/state").json()
        assert "a@b.com" not in json.dumps(state)

    def test_assets_served(self, client):
        response = client.get("/assets/hormonal_iud.svg")
        assert response.status_code == 200
        assert "svg" in response.headers["content-type"]


class TestGatewayOutage:
    def test_503_with_retry_after_and_unchanged_state(self, make_service):
        class DeadBackend:
            backend_id = "dead"

            def send(self, request):
                raise GatewayTransportError("provider offline")

        service = make_service(backend=DeadBackend())
        client = TestClient(create_app(service=service))
        session_id = client.post("/sessions").json()["session_id"]
        before = client.get(f"/sessions/{session_id}/state").json()
        response = client.post(f"/sessions/{session_id}/messages",
                               json={"text": "hello"})
        assert response.status_code == 503
        assert response.headers["retry-after"]
        assert client.get(f"/sessions/{session_id}/state").json() == before


class TestConcurrency:
    def test_two_concurrent_posts_one_conflict(self, make_service, config):
        entered = threading.Event()
        release = threading.Event()
        inner = load_llm_script(config.llm_script_path)

        class BlockingBackend:
            backend_id = "blocking"

            def send(self, request):
                entered.set()
                assert release.wait(timeout=10)
                return inner.send(request)

        service = make_service(backend=BlockingBackend())
        client = TestClient(create_app(service=service))
        session_id = client.post("/sessions").json()["session_id"]

        results = {}

        def first_post():
            results["first"] = client.post(
                f"/sessions/{session_id}/messages",
                json={"text": "I want to prevent pregnancy."}).status_code

        worker = threading.Thread(target=first_post)
        worker.start()
        assert entered.wait(timeout=10)
        # The first post holds the session lock inside the backend call.
        second = client.post(f"/sessions/{session_id}/messages",
                             json={"text": "racing message"})
        release.set()
        worker.join(timeout=10)
        assert second.status_code == 409
        assert second.json()["code"] == "concurrent-post"
        assert results["first"] == 200


class TestPersistence:
    def test_restart_resumes_stage_and_slots(self, make_service, tmp_path):
        directory = str(tmp_path / "persist")
        service = make_service(persistence_dir=directory)
        client = TestClient(create_app(service=service))
        session_id = client.post("/sessions").json()["session_id"]
        for text in HEALTHY_ANSWERS[:7]:
            client.post(f"/sessions/{session_id}/messages", json={"text": text})
        before = client.get(f"/sessions/{session_id}/state").json()

        # Fresh service over the same directory: in-memory cache is gone.
        revived = make_service(persistence_dir=directory)
        revived_client = TestClient(create_app(service=revived))
        after = revived_client.get(f"/sessions/{session_id}/state").json()
        assert after == before

        # The revived session keeps going where it left off.
        response = revived_client.post(f"/sessions/{session_id}/messages",
                                       json={"text": "No."})
        assert response.status_code == 200

    def test_snapshot_round_trip(self, engine_factory, tmp_path):
        engine = engine_factory()
        repo = SessionRepo(tmp_path / "repo")
        state = engine.create_session()
        state, _ = engine.process_turn(state, "I want to prevent pregnancy.")
        repo.save(state)
        loaded = repo.load(state.session_id)
        assert loaded.to_dict() == state.to_dict()

    def test_unknown_schema_version_is_migration_error(self, tmp_path, engine_factory):
        engine = engine_factory()
        repo = SessionRepo(tmp_path / "repo")
        state = engine.create_session()
        repo.save(state)
        path = repo._path(state.session_id)
        payload = json.loads(path.read_text())
        payload["schema_version"] = 99
        path.write_text(json.dumps(payload))
        with pytest.raises(MigrationError):
            repo.load(state.session_id)


class TestAdmin:
    ENTRY = {
        "entry_id": "method_patch",
        "keys": ["patch", "method"],
        "title": "Contraceptive patch",
        "body": "A weekly skin patch.",
        "citation": "US MEC 2024: CHC classifications (patch)",
    }

    def test_requires_token(self, make_service, monkeypatch, tmp_path, config, store):
        from counselkit.memory import save_store

        # Work on a copy of the store so the packaged fixture is untouched.
        store_copy = tmp_path / "store.yaml"
        save_store(store, store_copy)
        service = make_service()
        service.engine.store = service.engine.store.__class__(
            entries=dict(store.entries), version=store.version,
            path=str(store_copy))
        client = TestClient(create_app(service=service))

        monkeypatch.delenv("COUNSEL_ADMIN_TOKEN", raising=False)
        assert client.post("/admin/entries", json=self.ENTRY).status_code == 503

        monkeypatch.setenv("COUNSEL_ADMIN_TOKEN", "hunter2")
        assert client.post("/admin/entries", json=self.ENTRY).status_code == 401
        bad = client.post("/admin/entries", json=self.ENTRY,
                          headers={"X-Admin-Token": "wrong"})
        assert bad.status_code == 401

        good = client.post("/admin/entries", json=self.ENTRY,
                           headers={"X-Admin-Token": "hunter2"})
        assert good.status_code == 200
        assert good.json()["store_version"] == store.version + 1
        assert service.engine.store.get("method_patch") is not None

    def test_invalid_entry_is_422(self, make_service, monkeypatch):
        service = make_service()
        client = TestClient(create_app(service=service))
        monkeypatch.setenv("COUNSEL_ADMIN_TOKEN", "t")
        bad_entry = dict(self.ENTRY, keys=[])
        response = client.post("/admin/entries", json=bad_entry,
                               headers={"X-Admin-Token": "t"})
        assert response.status_code == 422


class TestConfigFile:
    def test_load_config_resolves_paths_relative_to_file(self, tmp_path):
        from counselkit.config import FIXTURES_DIR, load_config

        config_path = FIXTURES_DIR / "service_config.yaml"
        loaded = load_config(config_path)
        assert loaded.rules_path == str(FIXTURES_DIR / "eligibility_rules.yaml")
        assert loaded.backend_kind == "scripted"
        assert loaded.backoff_s == (0.5, 1.0, 2.0)

    def test_missing_fixture_file_rejected(self, tmp_path):
        from counselkit.config import load_config
        from counselkit.errors import ConfigurationError

        path = tmp_path / "bad.yaml"
        path.write_text("rules_path: /does/not/exist.yaml\n")
        with pytest.raises(ConfigurationError) as err:
            load_config(path)
        assert "missing fixture" in str(err.value)

    def test_bad_numeric_and_backend_values_rejected(self, config):
        from counselkit.config import validate_config
        from counselkit.errors import ConfigurationError

        with pytest.raises(ConfigurationError):
            validate_config(config.with_overrides(retrieval_k=0))
        with pytest.raises(ConfigurationError):
            validate_config(config.with_overrides(backend_kind="telepathy"))
        with pytest.raises(ConfigurationError):
            validate_config(config.with_overrides(backend_kind="http",
                                                  backend_url=""))
        with pytest.raises(ConfigurationError):
            validate_config(config.with_overrides(engine_mode="chaotic"))


class TestNaiveMode:
    def test_baseline_passthrough(self, config, store, tmp_path):
        from counselkit.baseline import NaiveEngine
        from counselkit.gateway import ScriptedBackend

        backend = ScriptedBackend(
            {"1": ["You could just take the combined pill, it's easy!"]},
            cycle=True)
        engine = NaiveEngine(store=store, backend=backend,
                             clock=fixed_clock, id_factory=sequential_ids("n"),
                             sleep=lambda s: None)
        cfg = config.with_overrides(
            persistence_dir=str(tmp_path / "naive"), engine_mode="naive")
        client = TestClient(create_app(service=CounselingService(cfg, engine=engine)))
        session_id = client.post("/sessions").json()["session_id"]
        reply = client.post(f"/sessions/{session_id}/messages",
                            json={"text": "I get migraines with aura, what should I take?"})
        body = reply.json()
        # No stage progression, no citations, no structured recommendation:
        # exactly the failure modes the guided engine exists to prevent.
        assert body["stage"]["ordinal"] == 1
        assert body["cited_entry_ids"] == []
        assert body["recommendation"] is None
        assert "combined pill" in body["reply"]
