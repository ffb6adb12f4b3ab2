"""The eligibility rule engine: rate, filter, rank, and the safety invariant.

Run: python3 demos/03_eligibility_rules.py
"""

import itertools

from counselkit.config import default_config
from counselkit.eligibility import (
    CONTRAINDICATION_CUTOFF,
    filter_contraindicated,
    load_criteria,
    load_rule_fixture,
    rate_method,
    recommend,
)
from counselkit.memory import load_store
from counselkit.profiles import UserProfile

cfg = default_config("/tmp/counselkit-demo")
fixture = load_rule_fixture(cfg.rules_path)
criteria = load_criteria(cfg.criteria_path, fixture)
store = load_store(cfg.knowledge_store_path)

print(f"rule fixture: {len(fixture.methods)} methods, "
      f"{len(fixture.conditions)} conditions, {len(fixture.rules)} rules\n")

profile = UserProfile(
    conditions={"migraine_with_aura": "yes", "hypertension": "unknown"},
    preferences={"frequency_preference": "infrequent_preferred",
                 "side_effect_tolerance": "hormones_ok"},
)
print("profile: migraine with aura = yes, blood pressure = unknown "
      "(unknown counts as present - fail-safe)\n")

print("per-method ratings (max category over fired rules):")
for method_id in fixture.method_ids:
    category, triggers = rate_method(profile, method_id, fixture)
    print(f"  {method_id:20s} category {int(category)}"
          + (f"  <- {', '.join(triggers)}" if triggers else ""))

eligible, excluded = filter_contraindicated(profile, fixture.method_ids, fixture)
print(f"\neligible (category <= 2): {eligible}")
print(f"excluded (category >= {int(CONTRAINDICATION_CUTOFF)}): "
      f"{[(e.method_id, int(e.category)) for e in excluded]}")

rec = recommend(profile, fixture, criteria, store)
print("\nweighted ranking of the eligible set:")
for rank, item in enumerate(rec.ranked, start=1):
    print(f"  {rank}. {item.method_id} ({item.total_score:.3f})")

# The invariant the engine is built around: no contraindicated method can
# ever appear in the ranked list, for any condition combination.
violations = 0
for bits in itertools.product(("no", "yes"), repeat=len(fixture.condition_ids)):
    p = UserProfile(conditions=dict(zip(fixture.condition_ids, bits)))
    r = recommend(p, fixture, criteria, store)
    for method_id in r.ranked_method_ids:
        category, _ = rate_method(p, method_id, fixture)
        if category >= CONTRAINDICATION_CUTOFF:
            violations += 1
combos = 2 ** len(fixture.condition_ids)
print(f"\nexhaustive check over {combos} condition combinations: "
      f"{violations} contraindicated recommendations (expect 0)")

referral = recommend(
    UserProfile(conditions={"breast_cancer_current": "yes", "current_pid": "yes"}),
    fixture, criteria, store)
print(f"\nwhen everything is contraindicated: referral={referral.referral}, "
      f"ranked={referral.ranked_method_ids}")
