"""The bi-level memory: factor extraction and tag-overlap retrieval.

Run: python3 demos/02_knowledge_retrieval.py
"""

from counselkit.config import default_config
from counselkit.dialogue import DialogueTurn, load_dialogue_templates
from counselkit.eligibility import load_rule_fixture
from counselkit.memory import extract_factors, load_store, retrieve, upsert_entry, KnowledgeEntry
from counselkit.service import build_engine
from counselkit.stages import Stage

cfg = default_config("/tmp/counselkit-demo")
store = load_store(cfg.knowledge_store_path)
print(f"loaded store: {len(store)} entries, version {store.version}\n")

# The engine assembles the extraction vocabulary from the slot templates and
# the rule fixture's condition patterns; borrow it for a standalone demo.
engine = build_engine(cfg)
window = [
    DialogueTurn(0, "assistant", "Any health conditions I should know about?",
                 Stage.HEALTH_SCREENING, asked_slot_id="migraine_with_aura"),
    DialogueTurn(1, "user", "I get migraines with aura, and I don't smoke.",
                 Stage.HEALTH_SCREENING),
]
result = extract_factors(window, engine.vocabulary)
print("extracted factors from the last user turn:")
for factor in result.factors:
    print(f"  {factor.factor_id} = {factor.value!r} "
          f"({factor.confidence}, turn {factor.source_turn})")

print("\nretrieval for those factors (Jaccard overlap on entry keys):")
retrieval = retrieve(store, result.factors, Stage.HEALTH_SCREENING, k=3)
for entry, score in retrieval.entries:
    print(f"  {score:.3f}  [{entry.entry_id}] {entry.title}")

print("\nstage-default retrieval when nothing was extracted:")
retrieval = retrieve(store, [], Stage.PREFERENCE_SCREENING, k=2)
for entry, score in retrieval.entries:
    print(f"  {score:.3f}  [{entry.entry_id}] {entry.title}")

# Experts maintain the store as a plain file; upserts bump the version and
# produce a fresh immutable snapshot.
new_entry = KnowledgeEntry(
    entry_id="method_patch",
    keys=frozenset({"patch", "chc", "method"}),
    title="Contraceptive patch",
    body="A weekly skin patch in the combined-hormonal family.",
    citation="US MEC 2024: Classifications for combined hormonal contraceptives",
)
updated = upsert_entry(store, new_entry, persist=False)
print(f"\nafter upsert: {len(updated)} entries, version {updated.version} "
      f"(original snapshot still has {len(store)})")
