"""Records real /v1 API responses into the explorer UI's test fixture.

Builds the deterministic demo artifacts (same ones the service tests
use), drives the service through a 25-step replay with a what-if
insert/undo detour, and freezes every response the UI consumes into
frontend/test/fixtures/replay.json.
"""

from __future__ import annotations

import json
import sys
import tempfile
from pathlib import Path

REPO = Path(__file__).resolve().parent.parent
sys.path.insert(0, str(REPO))

from fastapi.testclient import TestClient  # noqa: E402

from actioncast.service import create_app  # noqa: E402
from tests.service_artifacts import build_artifacts  # noqa: E402

OUT = REPO / "frontend" / "test" / "fixtures" / "replay.json"
STEPS = 25
WHATIF_ACTION = "CTRL+A"


def scrub(body: dict) -> dict:
    """Zero the timing field; wall-clock noise has no place in a fixture."""
    if isinstance(body, dict) and "elapsed_ms" in body:
        body = dict(body)
        body["elapsed_ms"] = 0.0
    return body


def main() -> None:
    with tempfile.TemporaryDirectory() as tmp:
        artifacts = build_artifacts(Path(tmp))
        client = TestClient(create_app(artifacts["config"]))

        session = client.post(
            "/v1/sessions", json={"actions": str(artifacts["actions_path"])}
        ).json()
        sid = session["id"]
        vocab = client.get("/v1/vocab").json()
        predict_initial = scrub(client.get(f"/v1/sessions/{sid}/predict?k=5").json())

        # The what-if detour is recorded right after step 20, matching the
        # UI acceptance scenario; undo restores the exact service state, so
        # the remaining steps recorded afterwards are unaffected.
        steps = []
        for _ in range(20):
            steps.append(scrub(client.post(f"/v1/sessions/{sid}/step").json()))
        whatif_insert = scrub(
            client.post(f"/v1/sessions/{sid}/whatif", json={"action": WHATIF_ACTION}).json()
        )
        whatif_undo = scrub(client.post(f"/v1/sessions/{sid}/whatif", json={"undo": True}).json())
        for _ in range(STEPS - 20):
            steps.append(scrub(client.post(f"/v1/sessions/{sid}/step").json()))
        field = scrub(
            client.get(
                f"/v1/sessions/{sid}/field",
                params={"ox": 0, "oy": 0, "nx": 8, "ny": 6, "step": 50},
            ).json()
        )
        patch_refs = sorted(
            {
                p["patch_ref"]
                for step in steps
                for p in step.get("predictions", [])
                if "patch_ref" in p
            }
        )
        patches = {}
        for ref in patch_refs[:3]:
            raw = client.get(ref)
            patches[ref] = raw.content.hex()

        fixture = {
            "session": {k: v for k, v in session.items() if k != "id"} | {"id": "fixture"},
            "vocab": vocab,
            "predict_initial": predict_initial,
            "steps": steps,
            "whatif_action": WHATIF_ACTION,
            "whatif_insert": whatif_insert,
            "whatif_undo": whatif_undo,
            "field": field,
            "patches_hex": patches,
        }
        # session ids are random per run; the UI never interprets them
        for body in [fixture["session"], *fixture["steps"], fixture["whatif_insert"],
                     fixture["whatif_undo"]]:
            if "id" in body:
                body["id"] = "fixture"

        OUT.parent.mkdir(parents=True, exist_ok=True)
        OUT.write_text(json.dumps(fixture, indent=1, sort_keys=True) + "\n", encoding="utf-8")
        print(f"wrote {OUT} ({OUT.stat().st_size} bytes, {len(steps)} steps)")


if __name__ == "__main__":
    main()
