"""Profile verification, summary generation, and PII redaction tests."""

from __future__ import annotations

from pathlib import Path

import pytest

from conftest import HEALTHY_ANSWERS, drive, fixed_clock
from counselkit.dialogue import DialogueTurn
from counselkit.eligibility import recommend
from counselkit.errors import UnverifiedProfileError, ValidationError
from counselkit.profiles import (
    SummaryDocument,
    UserProfile,
    generate_summary,
    redact_pii,
    redact_text,
    verify_profile,
)
from counselkit.stages import Stage

GOLDEN_SUMMARY = Path(__file__).parent / "golden" / "summary_healthy.txt"


def verified_profile(rule_fixture) -> UserProfile:
    return UserProfile(
        intent="prevent_pregnancy",
        gender="female",
        prior_experience=[],
        preferences={"frequency_preference": "infrequent_preferred",
                     "side_effect_tolerance": "hormones_ok"},
        conditions={c: "no" for c in rule_fixture.condition_ids},
        verified=True,
        verified_at="2025-01-01T12:00:00+00:00",
    )


class TestVerifyProfile:
    def kwargs(self, engine):
        return dict(known_slots=engine.known_slots,
                    condition_ids=engine.condition_ids,
                    preference_slots=engine.preference_slots,
                    clock=fixed_clock)

    def test_confirm_without_corrections_verifies(self, engine):
        state, _ = drive(engine, HEALTHY_ANSWERS[:14])
        profile = verify_profile(state, True, None, **self.kwargs(engine))
        assert profile.verified is True
        assert profile.verified_at == fixed_clock().isoformat()

    def test_decline_leaves_unverified(self, engine):
        state, _ = drive(engine, HEALTHY_ANSWERS[:14])
        profile = verify_profile(state, False, None, **self.kwargs(engine))
        assert profile.verified is False and profile.verified_at is None

    def test_corrections_applied_before_verdict(self, engine, rule_fixture, criteria, store):
        state, _ = drive(engine, HEALTHY_ANSWERS[:14])
        before = recommend(state.profile, rule_fixture, criteria, store)
        assert "combined_pill" in before.ranked_method_ids

        profile = verify_profile(state, True, {"migraine_with_aura": "yes"},
                                 **self.kwargs(engine))
        # A correction forces re-verification: not verified yet.
        assert profile.verified is False
        assert profile.conditions["migraine_with_aura"] == "yes"
        after = recommend(profile, rule_fixture, criteria, store)
        assert "combined_pill" not in after.ranked_method_ids
        assert "combined_pill" in [e.method_id for e in after.excluded]

    def test_unknown_correction_slot_rejected(self, engine):
        state, _ = drive(engine, HEALTHY_ANSWERS[:14])
        with pytest.raises(ValidationError) as err:
            verify_profile(state, True, {"shoe_size": "9"}, **self.kwargs(engine))
        assert "shoe_size" in err.value.fields


class TestSummary:
    def test_unverified_profile_is_precondition_error(self, rule_fixture, criteria, store):
        profile = verified_profile(rule_fixture)
        profile.verified = False
        rec = recommend(profile, rule_fixture, criteria, store)
        with pytest.raises(UnverifiedProfileError):
            generate_summary(profile, rec, disclaimer="d", clock=fixed_clock)

    def test_golden_text_document(self, rule_fixture, criteria, store, config):
        profile = verified_profile(rule_fixture)
        rec = recommend(profile, rule_fixture, criteria, store)
        doc = generate_summary(profile, rec, disclaimer=config.disclaimer,
                               clock=fixed_clock)
        assert doc.render_text() == GOLDEN_SUMMARY.read_text()

    def test_record_round_trip(self, rule_fixture, criteria, store, config):
        profile = verified_profile(rule_fixture)
        rec = recommend(profile, rule_fixture, criteria, store)
        doc = generate_summary(profile, rec, disclaimer=config.disclaimer,
                               clock=fixed_clock)
        record = doc.to_record()
        parsed = SummaryDocument.from_record(record)
        assert parsed.profile == profile.to_dict()
        assert parsed.recommendation == rec.to_dict()
        assert parsed.to_record() == record

    def test_referral_summary_includes_every_exclusion(
            self, rule_fixture, criteria, store, config):
        profile = verified_profile(rule_fixture)
        profile.conditions["breast_cancer_current"] = "yes"
        profile.conditions["current_pid"] = "yes"
        rec = recommend(profile, rule_fixture, criteria, store)
        doc = generate_summary(profile, rec, disclaimer=config.disclaimer,
                               clock=fixed_clock)
        text = doc.render_text()
        assert "No method could be recommended" in text
        for item in rec.excluded:
            assert item.method_id in text
            for condition in item.triggering_condition_ids:
                assert condition in text
        assert config.disclaimer in text

    def test_unsupported_schema_version_rejected(self, rule_fixture, criteria, store):
        profile = verified_profile(rule_fixture)
        rec = recommend(profile, rule_fixture, criteria, store)
        record = generate_summary(profile, rec, disclaimer="d",
                                  clock=fixed_clock).to_record()
        record["schema_version"] = 99
        with pytest.raises(ValidationError):
            SummaryDocument.from_record(record)


PII_CASES = [
    ("call me at 919-555-0100", "call me at [PHONE]"),
    ("My number is (212) 555-0142, thanks", "My number is [PHONE], thanks"),
    ("reach me on 555-0199", "reach me on [PHONE]"),
    ("write to jane.doe+test@example.org please",
     "write to [EMAIL] please"),
    ("my name is Sarah", "my name is [NAME]"),
    ("Hi, I'm Maria Lopez and I need advice", "Hi, I'm [NAME] and I need advice"),
    ("my doctor is Dr. Chen", "my doctor is Dr. [NAME]"),
    ("I live at 42 Maple Street, Apt 5", "I live at [ADDRESS]"),
    ("born on March 3, 1992", "born on [DOB]"),
    ("my dob: 03/03/1992", "my dob: [DOB]"),
    ("no personal details here", "no personal details here"),
]


class TestRedaction:
    @pytest.mark.parametrize("raw,expected", PII_CASES)
    def test_policy_patterns(self, redaction_policy, raw, expected):
        assert redact_text(raw, redaction_policy) == expected

    def test_idempotent(self, redaction_policy):
        for raw, _ in PII_CASES:
            once = redact_text(raw, redaction_policy)
            assert redact_text(once, redaction_policy) == once

    def test_transcript_structure_preserved(self, redaction_policy):
        turns = [
            DialogueTurn(0, "assistant", "Welcome.", Stage.INFO_GATHERING,
                         cited_entry_ids=["e1"], asked_slot_id="intent"),
            DialogueTurn(1, "user", "I'm Sarah, call me at 919-555-0100.",
                         Stage.INFO_GATHERING),
            DialogueTurn(2, "assistant", "Thanks.", Stage.INFO_GATHERING),
        ]
        redacted = redact_pii(turns, redaction_policy)
        assert len(redacted) == len(turns)
        for before, after in zip(turns, redacted):
            assert after.turn_index == before.turn_index
            assert after.speaker == before.speaker
            assert after.stage_at_turn == before.stage_at_turn
            assert after.cited_entry_ids == before.cited_entry_ids
            assert after.asked_slot_id == before.asked_slot_id
        assert "[NAME]" in redacted[1].text and "[PHONE]" in redacted[1].text
        assert "Sarah" not in redacted[1].text
        # Original turns untouched.
        assert "Sarah" in turns[1].text

    def test_redact_twice_equals_once_on_transcripts(self, redaction_policy):
        turns = [DialogueTurn(0, "user", raw, Stage.INFO_GATHERING)
                 for raw, _ in PII_CASES]
        once = redact_pii(turns, redaction_policy)
        twice = redact_pii(once, redaction_policy)
        assert [t.text for t in once] == [t.text for t in twice]
