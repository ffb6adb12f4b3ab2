"""A/B evaluation: the guided engine versus a naive-prompting baseline.

Runs the ten regression personas against both engine modes, applies the
machine safety checks, and prints side-by-side performance tables. The
baseline's scripted replies deliberately include the kind of answer a
documents-plus-question prompt tends to produce: a method suggestion with
no screening and no citations.

Run: python3 demos/05_evaluation_ab.py
"""

from counselkit.baseline import NaiveEngine
from counselkit.config import FIXTURES_DIR, default_config
from counselkit.eligibility import load_rule_fixture
from counselkit.evalharness import (
    EngineClient,
    QualityAnnotation,
    aggregate,
    auto_safety_checks,
    load_personas,
    render_table,
    run_simulation,
)
from counselkit.gateway import ScriptedBackend
from counselkit.memory import load_store
from counselkit.profiles import load_redaction_policy
from counselkit.service import build_engine

cfg = default_config("/tmp/counselkit-demo")
fixture = load_rule_fixture(cfg.rules_path)
policy = load_redaction_policy(cfg.redaction_policy_path)
personas = load_personas(FIXTURES_DIR / "personas")

# --- guided run ------------------------------------------------------------
guided_records = []
for actor in personas:
    client = EngineClient(build_engine(cfg))
    guided_records.append(run_simulation(actor, client, policy))

# --- naive baseline run ----------------------------------------------------
# One canned reply per message: suggest the combined pill, cite nothing.
naive_script = ScriptedBackend(
    {"1": ["Based on the documents, the combined pill is a popular and easy "
           "choice - most people do well on it!"]},
    cycle=True)
naive_records = []
for actor in personas:
    engine = NaiveEngine(store=load_store(cfg.knowledge_store_path),
                         backend=naive_script)
    record = run_simulation(actor, EngineClient(engine), policy,
                            engine_mode="naive")
    naive_records.append(record)

# --- score and report ------------------------------------------------------
def report_for(records):
    safety = [auto_safety_checks(r, fixture) for r in records]
    safety = [a for a in safety if a.evaluable]
    quality = [QualityAnnotation(a.transcript_id, True, True) for a in safety]
    return aggregate(safety, quality)


print(render_table(report_for(guided_records), title="Guided engine"))
print()
print(render_table(report_for(naive_records), title="Naive-prompting baseline"))
print()
print("Failure notes from the baseline run:")
for record in naive_records:
    annotation = auto_safety_checks(record, fixture)
    if not annotation.passed:
        print(f"  {annotation.transcript_id}: {', '.join(annotation.failures)}")
