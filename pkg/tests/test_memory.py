"""Memory tests: extraction patterns, Jaccard retrieval, and store round-trips."""

from __future__ import annotations

import random
import re

import pytest

from counselkit.dialogue import DialogueTurn
from counselkit.errors import DuplicateEntryError, FixtureError, ValidationError
from counselkit.memory import (
    DOMAIN_BOOLEAN,
    DOMAIN_ENUM,
    DOMAIN_LIST,
    ExtractedFactor,
    FactorSpec,
    KnowledgeEntry,
    KnowledgeStore,
    PatternRule,
    build_vocabulary,
    extract_factors,
    jaccard,
    load_store,
    query_tags,
    retrieve,
    retrieve_by_tags,
    save_store,
    upsert_entry,
    validate_entry,
)
from counselkit.stages import Stage


def turn(index, speaker, text, asked=None):
    return DialogueTurn(turn_index=index, speaker=speaker, text=text,
                        stage_at_turn=Stage.HEALTH_SCREENING, asked_slot_id=asked)


@pytest.fixture
def vocab():
    return build_vocabulary([
        FactorSpec("migraine_with_aura", DOMAIN_BOOLEAN, (
            PatternRule(re.compile(r"migraines?\s+with\s+aura", re.I), True),
            PatternRule(re.compile(r"\baura\b", re.I), True),
        )),
        FactorSpec("smoker", DOMAIN_BOOLEAN, (
            PatternRule(re.compile(r"smok(?:e|er|ing)", re.I), True),
        )),
        FactorSpec("frequency_preference", DOMAIN_ENUM, (
            PatternRule(re.compile(r"long[- ]?term", re.I), "infrequent_preferred"),
            PatternRule(re.compile(r"daily\s+is\s+fine", re.I), "daily_ok"),
        )),
        FactorSpec("prior_experience", DOMAIN_LIST, (
            PatternRule(re.compile(r"\bthe\s+pill\b", re.I), "combined_pill"),
            PatternRule(re.compile(r"\bthe\s+shot\b", re.I), "injection"),
            PatternRule(re.compile(r"never\s+used", re.I), []),
        )),
    ])


class TestExtraction:
    def test_explicit_condition_mention(self, vocab):
        window = [turn(0, "assistant", "Any conditions?"),
                  turn(1, "user", "I get migraines with aura")]
        result = extract_factors(window, vocab)
        assert [(f.factor_id, f.value, f.confidence) for f in result.factors] == [
            ("migraine_with_aura", True, "explicit")]
        assert result.factors[0].source_turn == 1

    def test_no_vocabulary_terms_yields_nothing(self, vocab):
        window = [turn(0, "assistant", "hello"), turn(1, "user", "hello")]
        assert extract_factors(window, vocab).factors == ()

    def test_negation_flips_boolean(self, vocab):
        window = [turn(0, "assistant", "Do you smoke?"),
                  turn(1, "user", "I don't smoke")]
        result = extract_factors(window, vocab)
        assert [(f.factor_id, f.value) for f in result.factors] == [("smoker", False)]

    def test_pending_slot_yes_no_unsure(self, vocab):
        for text, expected in [("Yes.", True), ("Nope.", False),
                               ("I'm not sure.", "unknown")]:
            window = [turn(0, "assistant", "Do you smoke?", asked="smoker"),
                      turn(1, "user", text)]
            result = extract_factors(window, vocab)
            assert [(f.factor_id, f.value, f.confidence) for f in result.factors] \
                == [("smoker", expected, "inferred")], text

    def test_pending_answer_does_not_leak_to_other_slots(self, vocab):
        window = [turn(0, "assistant", "Aura?", asked="migraine_with_aura"),
                  turn(1, "user", "Yes.")]
        result = extract_factors(window, vocab)
        assert [f.factor_id for f in result.factors] == ["migraine_with_aura"]

    def test_list_domain_merges_mentions(self, vocab):
        window = [turn(0, "assistant", "Methods used?", asked="prior_experience"),
                  turn(1, "user", "I tried the pill and later the shot.")]
        result = extract_factors(window, vocab)
        assert [(f.factor_id, f.value) for f in result.factors] == [
            ("prior_experience", ["combined_pill", "injection"])]

    def test_conflicting_boolean_matches_drop_the_factor(self, vocab):
        window = [turn(0, "assistant", "?"),
                  turn(1, "user", "I smoke. Actually no, I don't smoke.")]
        result = extract_factors(window, vocab)
        assert "smoker" not in [f.factor_id for f in result.factors]

    def test_extracts_only_from_latest_user_turn(self, vocab):
        window = [turn(0, "assistant", "hi"),
                  turn(1, "user", "I get migraines with aura"),
                  turn(2, "assistant", "noted", asked="smoker"),
                  turn(3, "user", "no")]
        result = extract_factors(window, vocab)
        assert [(f.factor_id, f.value) for f in result.factors] == [("smoker", False)]

    def test_empty_window_rejected(self, vocab):
        with pytest.raises(ValidationError):
            extract_factors([], vocab)

    def test_rule_fallback_source_turns_match_oracle(self, vocab):
        # Extraction honesty: each factor's source turn must be one whose
        # text the pattern table itself matches.
        window = [turn(0, "assistant", "?"),
                  turn(1, "user", "long-term please, and I get migraines with aura")]
        result = extract_factors(window, vocab)
        for factor in result.factors:
            spec = vocab.get(factor.factor_id)
            text = window[factor.source_turn].text
            assert any(rule.regex.search(text) for rule in spec.patterns)


class TestLlmExtraction:
    class JsonBackend:
        backend_id = "scripted"

        def __init__(self, payload):
            self.payload = payload

        def send(self, request):
            from counselkit.gateway import CompletionResponse

            return CompletionResponse(self.payload, "scripted", 0.0, 1, 1)

    class FailingBackend:
        backend_id = "scripted"

        def send(self, request):
            from counselkit.errors import GatewayTransportError

            raise GatewayTransportError("connection reset")

    def test_llm_mode_parses_json(self, vocab):
        window = [turn(0, "assistant", "?"), turn(1, "user", "some text")]
        backend = self.JsonBackend('{"smoker": false}')
        result = extract_factors(window, vocab, backend, mode="llm")
        assert [(f.factor_id, f.value) for f in result.factors] == [("smoker", False)]
        assert result.degraded is False

    def test_transport_failure_falls_back_to_rules_and_flags(self, vocab):
        window = [turn(0, "assistant", "?"), turn(1, "user", "I don't smoke")]
        result = extract_factors(window, vocab, self.FailingBackend(), mode="llm")
        assert result.degraded is True
        assert [(f.factor_id, f.value) for f in result.factors] == [("smoker", False)]

    def test_unknown_ids_in_reply_ignored(self, vocab):
        window = [turn(0, "assistant", "?"), turn(1, "user", "x")]
        backend = self.JsonBackend('{"made_up": true, "smoker": true}')
        result = extract_factors(window, vocab, backend, mode="llm")
        assert [f.factor_id for f in result.factors] == ["smoker"]


def entry(entry_id, keys, **kwargs):
    defaults = dict(title=f"t-{entry_id}", body=f"b-{entry_id}",
                    citation="US MEC 2024: test row")
    defaults.update(kwargs)
    return KnowledgeEntry(entry_id=entry_id, keys=frozenset(keys), **defaults)


def factor(factor_id, value=True):
    return ExtractedFactor(factor_id, value, 0, "explicit")


def brute_force_retrieve(store, tags, k):
    """Exhaustive-scan oracle: score every entry, sort, cut."""
    scored = []
    for e in store.entries.values():
        inter = len(e.keys & tags)
        union = len(e.keys | tags)
        score = inter / union if union else 0.0
        if score > 0:
            scored.append((e.entry_id, score))
    scored.sort(key=lambda pair: (-pair[1], pair[0]))
    return scored[:k]


class TestRetrieve:
    def test_single_entry_half_overlap(self):
        store = KnowledgeStore(entries={
            "e1": entry("e1", ["migraine_with_aura", "chc"])})
        result = retrieve(store, [factor("migraine_with_aura")],
                          Stage.HEALTH_SCREENING, k=3)
        assert result.entry_ids == ["e1"]
        assert result.entries[0][1] == pytest.approx(0.5)

    def test_empty_factor_list_uses_stage_topic(self):
        store = KnowledgeStore(entries={
            "a": entry("a", ["topic:health_screening"]),
            "b": entry("b", ["combined_pill"]),
        })
        result = retrieve(store, [], Stage.HEALTH_SCREENING, k=5)
        assert result.entry_ids == ["a"]

    def test_empty_factor_list_no_stage_entries(self):
        store = KnowledgeStore(entries={"b": entry("b", ["combined_pill"])})
        assert retrieve(store, [], Stage.RECOMMENDATION, k=5).entry_ids == []

    def test_k_larger_than_store_returns_all_matching(self):
        store = KnowledgeStore(entries={
            "a": entry("a", ["x"]), "b": entry("b", ["x", "y"])})
        result = retrieve(store, [factor("x")], Stage.INFO_GATHERING, k=99)
        assert len(result.entries) == 2

    def test_empty_store_is_empty_result(self):
        store = KnowledgeStore(entries={})
        assert retrieve(store, [factor("x")], Stage.INFO_GATHERING, k=1).entries == ()

    def test_false_valued_factors_do_not_query(self):
        store = KnowledgeStore(entries={"a": entry("a", ["smoker"])})
        result = retrieve(store, [factor("smoker", False)], Stage.INFO_GATHERING, k=1)
        assert result.entry_ids == []

    def test_string_values_become_tags(self):
        tags = query_tags([factor("prior_experience", ["combined_pill"])],
                          Stage.INFO_GATHERING)
        assert tags == frozenset({"prior_experience", "combined_pill"})

    def test_ties_break_by_entry_id(self):
        store = KnowledgeStore(entries={
            "b": entry("b", ["x"]), "a": entry("a", ["x"])})
        result = retrieve(store, [factor("x")], Stage.INFO_GATHERING, k=2)
        assert result.entry_ids == ["a", "b"]

    def test_matches_exhaustive_scan_on_random_stores(self):
        rng = random.Random(23)
        tag_pool = [f"tag{i}" for i in range(12)]
        for _ in range(150):
            n = rng.randint(1, 20)
            store = KnowledgeStore(entries={
                f"e{i:02d}": entry(
                    f"e{i:02d}", rng.sample(tag_pool, rng.randint(1, 5)))
                for i in range(n)})
            tags = frozenset(rng.sample(tag_pool, rng.randint(1, 6)))
            k = rng.randint(1, 25)
            got = [(e.entry_id, s) for e, s in retrieve_by_tags(store, tags, k)]
            want = brute_force_retrieve(store, tags, k)
            assert [g[0] for g in got] == [w[0] for w in want]
            for (_, a), (_, b) in zip(got, want):
                assert a == pytest.approx(b)

    def test_retrieval_soundness(self, store):
        # Every returned entry exists verbatim in the loaded store.
        result = retrieve(store, [factor("migraine_with_aura")],
                          Stage.HEALTH_SCREENING, k=5)
        for retrieved, _ in result.entries:
            assert store.get(retrieved.entry_id) is retrieved

    def test_scores_in_unit_interval(self, store):
        result = retrieve(store, [factor("migraine_with_aura"), factor("chc")],
                          Stage.HEALTH_SCREENING, k=10)
        assert all(0.0 <= s <= 1.0 for _, s in result.entries)
        assert jaccard(frozenset(), frozenset()) == 0.0

    def test_scorer_is_swappable(self):
        # An alternate scorer (overlap coefficient here, standing in for an
        # embedding scorer) plugs in through the same signature.
        def overlap(keys, tags):
            if not keys or not tags:
                return 0.0
            return len(keys & tags) / min(len(keys), len(tags))

        store = KnowledgeStore(entries={
            "small": entry("small", ["x"]),
            "big": entry("big", ["x", "y", "z"]),
        })
        by_jaccard = retrieve_by_tags(store, frozenset({"x"}), 2)
        by_overlap = retrieve_by_tags(store, frozenset({"x"}), 2, scorer=overlap)
        assert [e.entry_id for e, _ in by_jaccard] == ["small", "big"]
        # Overlap coefficient scores both 1.0; the id tie-break orders them.
        assert [(e.entry_id, s) for e, s in by_overlap] == [("big", 1.0), ("small", 1.0)]

    def test_out_of_range_scorer_rejected(self):
        store = KnowledgeStore(entries={"a": entry("a", ["x"])})
        with pytest.raises(ValidationError):
            retrieve_by_tags(store, frozenset({"x"}), 1, scorer=lambda k, t: 2.0)


class TestStore:
    def test_seed_store_count_matches_file(self, config, store):
        import yaml

        raw = yaml.safe_load(open(config.knowledge_store_path))
        assert len(store) == len(raw["entries"])

    def test_upsert_inserts_and_replaces(self, store):
        new = entry("brand_new", ["x"])
        bigger = upsert_entry(store, new, persist=False)
        assert len(bigger) == len(store) + 1
        assert bigger.version == store.version + 1

        replaced = upsert_entry(bigger, entry("brand_new", ["x"], body="changed"),
                                persist=False)
        assert len(replaced) == len(bigger)
        assert replaced.get("brand_new").body == "changed"

    def test_upsert_leaves_original_snapshot_alone(self, store):
        upsert_entry(store, entry("another", ["y"]), persist=False)
        assert store.get("another") is None

    def test_empty_keys_rejected(self):
        with pytest.raises(ValidationError) as err:
            validate_entry(entry("e", []))
        assert "keys" in err.value.fields

    def test_validation_lists_all_failing_fields(self):
        with pytest.raises(ValidationError) as err:
            validate_entry(KnowledgeEntry("", frozenset(), "", "", ""))
        assert set(err.value.fields) == {"entry_id", "keys", "title", "body", "citation"}

    def test_duplicate_id_load_error(self, tmp_path):
        path = tmp_path / "dup.yaml"
        path.write_text(
            "entries:\n"
            "  - {entry_id: a, keys: [x], title: t, body: b, citation: c}\n"
            "  - {entry_id: a, keys: [y], title: t, body: b, citation: c}\n")
        with pytest.raises(DuplicateEntryError) as err:
            load_store(path)
        assert "a" in str(err.value)

    def test_empty_file_is_empty_store(self, tmp_path, caplog):
        path = tmp_path / "empty.yaml"
        path.write_text("")
        with caplog.at_level("WARNING"):
            loaded = load_store(path)
        assert len(loaded) == 0
        assert any("empty" in r.message for r in caplog.records)

    def test_parse_error_has_diagnostics(self, tmp_path):
        path = tmp_path / "broken.yaml"
        path.write_text("entries:\n  - {entry_id: a, keys: [x\n")
        with pytest.raises(FixtureError):
            load_store(path)

    def test_round_trip_identity(self, store, tmp_path):
        path = save_store(store, tmp_path / "copy.yaml")
        reloaded = load_store(path)
        assert reloaded.version == store.version
        assert set(reloaded.entries) == set(store.entries)
        for entry_id, original in store.entries.items():
            assert reloaded.entries[entry_id] == original

    def test_upsert_persists_to_file(self, store, tmp_path):
        path = save_store(store, tmp_path / "persist.yaml")
        working = load_store(path)
        updated = upsert_entry(working, entry("persisted", ["z"]))
        reloaded = load_store(path)
        assert reloaded.get("persisted") == updated.get("persisted")
        assert reloaded.version == store.version + 1
