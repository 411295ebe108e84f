"""Regenerate the frontend round-trip fixtures from the real serving stack.

The browser tests replay these captured responses through a mocked fetch, so
the DOM assertions are made against byte-faithful server behaviour.

Usage: python3 scripts/make_ui_fixtures.py
"""
from __future__ import annotations

import json
from pathlib import Path

from fastapi.testclient import TestClient

from spanmatch.encoders import EncoderConfig, StaticHashEncoder
from spanmatch.server import WorkspaceStore, create_app

FIXTURE_DIR = Path(__file__).resolve().parent.parent / "frontend" / "tests" / "fixtures"

SUPPORTS = [
    {
        "entity_type": "GAME",
        "tokens": ["i", "purchased", "a", "game", "called", "galaxy", "quest", "two"],
        "entity_start": 5,
        "entity_end": 7,
    },
    {
        "entity_type": "GAME",
        "tokens": ["my", "kids", "love", "playing", "skycraft", "online"],
        "entity_start": 4,
        "entity_end": 4,
    },
    {
        "entity_type": "ERROR-CODE",
        "tokens": ["the", "console", "showed", "error", "0x111", "again"],
        "entity_start": 4,
        "entity_end": 4,
    },
]

QUERY = ["i", "cannot", "play", "skycraft", "with", "error", "0x111"]


def main() -> None:
    encoder = StaticHashEncoder(
        EncoderConfig(kind="static-hash", dim=32, heads=2, vocab_hash_buckets=1024, seed=11)
    )
    store = WorkspaceStore(encoder)
    with TestClient(create_app(store)) as client:
        workspace = "fixture"
        assigned = []
        for record in SUPPORTS:
            resp = client.post(f"/workspaces/{workspace}/supports", json=record)
            resp.raise_for_status()
            assigned.append(resp.json())
        types = client.get(f"/workspaces/{workspace}/entity-types").json()
        supports_listing = client.get(f"/workspaces/{workspace}/supports").json()
        before = client.post(
            f"/workspaces/{workspace}/predict", json={"tokens": QUERY}
        ).json()
        game_span = next(
            s for s in before["prediction"]["spans"] if s["entity_type"] == "GAME"
        )
        top_trace_id = game_span["trace"][0]["support_id"]
        deleted = client.delete(f"/workspaces/{workspace}/supports/{top_trace_id}").json()
        after = client.post(
            f"/workspaces/{workspace}/predict", json={"tokens": QUERY}
        ).json()
        supports_after = client.get(f"/workspaces/{workspace}/supports").json()
        types_after = client.get(f"/workspaces/{workspace}/entity-types").json()

    fixture = {
        "support_payloads": SUPPORTS,
        "assigned": assigned,
        "entity_types": types,
        "supports_listing": supports_listing,
        "query_tokens": QUERY,
        "prediction_before": before,
        "top_trace_support_id": top_trace_id,
        "delete_response": deleted,
        "prediction_after": after,
        "supports_after": supports_after,
        "entity_types_after": types_after,
    }
    FIXTURE_DIR.mkdir(parents=True, exist_ok=True)
    out = FIXTURE_DIR / "roundtrip.json"
    out.write_text(json.dumps(fixture, indent=2, sort_keys=True), encoding="utf-8")
    print(f"wrote {out}")
    changed = json.dumps(before["prediction"]["spans"], sort_keys=True) != json.dumps(
        after["prediction"]["spans"], sort_keys=True
    )
    print(f"prediction changed after deleting top-trace example: {changed}")
    if not changed:
        raise SystemExit("fixture degenerate: deletion did not change the prediction")


if __name__ == "__main__":
    main()
