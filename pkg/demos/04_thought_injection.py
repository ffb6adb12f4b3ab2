"""Reasoning chains and the thought-injection prompt, including budget drops.

Run: python3 demos/04_thought_injection.py
"""

from counselkit.config import default_config
from counselkit.dialogue import DialogueTurn, SessionState
from counselkit.eligibility import load_criteria, load_rule_fixture, recommend
from counselkit.memory import RetrievalResult, load_store, retrieve_by_tags
from counselkit.profiles import UserProfile
from counselkit.reasoning import load_prompt_template, render_prompt
from counselkit.stages import Stage

cfg = default_config("/tmp/counselkit-demo")
fixture = load_rule_fixture(cfg.rules_path)
criteria = load_criteria(cfg.criteria_path, fixture)
store = load_store(cfg.knowledge_store_path)
template = load_prompt_template(cfg.prompt_template_path)

profile = UserProfile(
    intent="prevent_pregnancy", gender="female",
    preferences={"frequency_preference": "daily_ok",
                 "side_effect_tolerance": "hormones_ok"},
    conditions={**{c: "no" for c in fixture.condition_ids},
                "migraine_with_aura": "yes"},
)
rec = recommend(profile, fixture, criteria, store)

print("=== reasoning chain (serialized verbatim into the prompt) ===")
print(rec.chain.serialize())

state = SessionState(
    session_id="demo", current_stage=Stage.RECOMMENDATION, profile=profile,
    history=[DialogueTurn(0, "assistant", "Welcome.", Stage.INFO_GATHERING),
             DialogueTurn(1, "user", "What fits me?", Stage.RECOMMENDATION)],
    filled_slots={}, created_at="-", updated_at="-")
tags = frozenset({"migraine_with_aura"} | set(rec.ranked_method_ids))
retrieval = RetrievalResult(entries=tuple(retrieve_by_tags(store, tags, 5)),
                            query_factors=tuple(sorted(tags)))

bundle = render_prompt(rec.chain, retrieval, state, template,
                       context_budget_chars=12000)
print("\n=== rendered prompt ===")
print(bundle.rendered())
print(f"prompt size: {len(bundle.rendered())} chars; dropped entries: "
      f"{bundle.dropped_entry_ids}")

# Shrink the budget: retrieved entries fall away lowest-score-first, but the
# chain itself is never dropped - it is the safety artifact.
tight = render_prompt(rec.chain, retrieval, state, template,
                      context_budget_chars=len(bundle.rendered()) - 1)
print(f"\nwith a budget 1 char under the full render, dropped: "
      f"{tight.dropped_entry_ids}")
assert tight.injected_thoughts == rec.chain.serialize()
print("chain still intact in the tighter prompt.")
