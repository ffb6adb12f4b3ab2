"""The REST surface: sessions, messages, state, summary download, admin.

Uses an in-process test client so the demo is self-contained; `counsel-service`
runs the same app over uvicorn for real deployments.

Run: python3 demos/06_service_api.py
"""

import json
import os
import tempfile

from fastapi.testclient import TestClient

from counselkit.config import default_config
from counselkit.service import CounselingService, create_app

workdir = tempfile.mkdtemp(prefix="counselkit-api-")
cfg = default_config(os.path.join(workdir, "sessions"))
service = CounselingService(cfg)
client = TestClient(create_app(service=service))

print("GET /health ->", client.get("/health").json())

created = client.post("/sessions").json()
sid = created["session_id"]
print(f"\nPOST /sessions -> id={sid[:8]} stage={created['stage']}")

answers = [
    "I want to prevent pregnancy.", "I'm a woman.", "Never used anything.",
    "Long term please.", "Hormones are fine.",
    "No.", "No.", "No.", "No.", "No.", "No.", "No.", "No.",
    "Okay.", "Yes, that's all correct.",
]
for text in answers:
    reply = client.post(f"/sessions/{sid}/messages", json={"text": text}).json()
print(f"after {len(answers)} messages: stage={reply['stage']['name']} "
      f"complete={reply['session_complete']}")

state = client.get(f"/sessions/{sid}/state").json()
print(f"\nGET state -> stage={state['stage']['name']} "
      f"turns={state['turn_count']} verified={state['verified']}")

summary = client.get(f"/sessions/{sid}/summary").json()
print(f"GET summary -> schema v{summary['schema_version']}, "
      f"{len(summary['recommendation']['ranked'])} ranked methods, "
      f"{len(summary['citations'])} citations")
text_form = client.get(f"/sessions/{sid}/summary", params={"format": "text"})
print("text form starts with:", text_form.text.splitlines()[0])

# Crash consistency: a brand-new service over the same persistence directory
# resumes every session from its snapshot.
revived = TestClient(create_app(service=CounselingService(cfg)))
resumed = revived.get(f"/sessions/{sid}/state").json()
print(f"\nafter 'restart': stage={resumed['stage']['name']} "
      f"turns={resumed['turn_count']} (identical={resumed == state})")

# Admin upsert requires the token from the environment.
os.environ["COUNSEL_ADMIN_TOKEN"] = "demo-token"
entry = {
    "entry_id": "topic_demo_note",
    "keys": ["topic:recommendation"],
    "title": "Demo note",
    "body": "Inserted through the admin endpoint.",
    "citation": "internal: demo",
}
denied = client.post("/admin/entries", json=entry)
print(f"\nPOST /admin/entries without token -> {denied.status_code}")
granted = client.post("/admin/entries", json=entry,
                      headers={"X-Admin-Token": "demo-token"})
print(f"POST /admin/entries with token -> {granted.status_code} "
      f"{granted.json()}")
