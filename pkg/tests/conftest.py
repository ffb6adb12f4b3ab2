"""Shared fixtures: loaded seed fixtures and deterministic engine factories."""

from __future__ import annotations

from datetime import datetime, timezone

import pytest


@pytest.hookimpl(tryfirst=True, hookwrapper=True)
def pytest_runtest_makereport(item, call):
    # Expose each phase's report on the item so the acceptance module can
    # print one pass/fail line per criterion.
    outcome = yield
    report = outcome.get_result()
    setattr(item, "report_" + report.when, report)

from counselkit.config import default_config
from counselkit.dialogue import CounselingEngine, load_dialogue_templates
from counselkit.eligibility import load_criteria, load_rule_fixture
from counselkit.gateway import load_llm_script
from counselkit.memory import load_store
from counselkit.profiles import load_redaction_policy
from counselkit.reasoning import load_prompt_template

FIXED_TIME = datetime(2025, 1, 1, 12, 0, 0, tzinfo=timezone.utc)


def fixed_clock() -> datetime:
    return FIXED_TIME


def sequential_ids(prefix: str = "s"):
    counter = {"n": 0}

    def factory() -> str:
        counter["n"] += 1
        return f"{prefix}-{counter['n']:04d}"

    return factory


@pytest.fixture(scope="session")
def config(tmp_path_factory):
    return default_config(str(tmp_path_factory.mktemp("sessions")))


@pytest.fixture(scope="session")
def rule_fixture(config):
    return load_rule_fixture(config.rules_path)


@pytest.fixture(scope="session")
def criteria(config, rule_fixture):
    return load_criteria(config.criteria_path, rule_fixture)


@pytest.fixture(scope="session")
def store(config):
    return load_store(config.knowledge_store_path)


@pytest.fixture(scope="session")
def dialogue_templates(config):
    return load_dialogue_templates(config.dialogue_templates_path)


@pytest.fixture(scope="session")
def prompt_template(config):
    return load_prompt_template(config.prompt_template_path)


@pytest.fixture(scope="session")
def redaction_policy(config):
    return load_redaction_policy(config.redaction_policy_path)


@pytest.fixture
def scripted_backend(config):
    return load_llm_script(config.llm_script_path)


@pytest.fixture
def engine_factory(config, rule_fixture, criteria, store, dialogue_templates,
                   prompt_template):
    """Fresh deterministic engine per call: fixed clock, sequential ids."""

    def factory(**overrides) -> CounselingEngine:
        kwargs = dict(
            store=store,
            fixture=rule_fixture,
            criteria=criteria,
            dialogue_templates=dialogue_templates,
            prompt_template=prompt_template,
            backend=load_llm_script(config.llm_script_path),
            clock=fixed_clock,
            id_factory=sequential_ids(),
            sleep=lambda s: None,
        )
        kwargs.update(overrides)
        return CounselingEngine(**kwargs)

    return factory


@pytest.fixture
def engine(engine_factory):
    return engine_factory()


def drive(engine: CounselingEngine, answers: list[str], state=None):
    """Feed a list of user messages through an engine; returns final state."""
    if state is None:
        state = engine.create_session()
    replies = []
    for text in answers:
        state, reply = engine.process_turn(state, text)
        replies.append(reply)
    return state, replies


HEALTHY_ANSWERS = [
    "I'd like to prevent pregnancy for the next few years.",
    "I'm a woman.",
    "I've never used any birth control before.",
    "Something long term I don't have to think about, please.",
    "Hormones are fine with me.",
    "No.", "No.", "No.", "No.", "No.", "No.", "No.", "No.",
    "Okay.",
    "Yes, that's all correct.",
]
