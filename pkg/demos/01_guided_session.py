"""Walk a scripted user through the full five-stage counseling flow.

Run: python3 demos/01_guided_session.py
"""

from counselkit.config import default_config
from counselkit.service import build_engine

engine = build_engine(default_config("/tmp/counselkit-demo"))
state = engine.create_session()
print(f"=== session {state.session_id[:8]} ===\n")
print(f"assistant: {state.history[0].text}\n")

script = [
    "I'd like to prevent pregnancy for the next few years.",
    "I'm a woman.",
    "I've been on the pill before.",
    "Something long term I don't have to think about, please.",
    "Hormones are fine with me.",
    "Yes, I get migraines with aura sometimes.",   # flips the eligibility picture
    "No.", "No.", "No.", "No.", "No.", "No.", "No.",
    "Okay.",
    "Yes, that's all correct.",
]

for text in script:
    state, reply = engine.process_turn(state, text)
    print(f"user: {text}")
    stage = f"[stage {reply.stage.ordinal} - {reply.stage.label}]"
    print(f"assistant {stage}: {reply.text}")
    if reply.attachments:
        for attachment in reply.attachments:
            print(f"  (attachment: {attachment.kind} {attachment.uri})")
    print()

print("=== outcome ===")
print(f"stages visited, in order: "
      f"{sorted(set(t.stage_at_turn.ordinal for t in state.history))}")
print(f"profile verified: {state.profile.verified}")
rec = state.recommendation
print(f"ranked: {[(r.method_id, round(r.total_score, 3)) for r in rec.ranked]}")
print(f"excluded: {[(e.method_id, int(e.category), list(e.triggering_condition_ids)) for e in rec.excluded]}")
print("\n=== downloadable summary (text form) ===")
print(state.summary_text)
