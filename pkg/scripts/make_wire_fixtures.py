"""Regenerate the golden wire-protocol fixtures under tests/data/wire/.

Every JSON document the service sends or accepts gets one pinned example
here. Run from the repository root after a deliberate protocol change:

    python scripts/make_wire_fixtures.py

and review the diff before committing.
"""

import json
from pathlib import Path

from fastapi.testclient import TestClient

from platelab.design_search import SearchConfig
from platelab.fem_solver import SolverConfig
from platelab.service_api import ServiceState, create_app

OUT = Path(__file__).resolve().parents[1] / "tests" / "data" / "wire"

NEO = {"model": "neo_hookean", "mu": 1.0, "lambda": 10.0}
ROD_GRAPH = {"nodes": [[0.0, 0.0, 0.0], [0.5, 0.0, 0.0]],
             "beams": [{"idx": [0, 1], "r": 0.1}]}
TWO_ISLANDS = {"nodes": [[0.0, 0.0, 0.0], [0.5, 0.0, 0.0],
                         [0.0, 0.5, 0.0], [0.5, 0.5, 0.0]],
               "beams": [{"idx": [0, 1], "r": 0.1},
                         {"idx": [2, 3], "r": 0.1}]}

CREATE_SESSION_REQUEST = {
    "material": NEO,
    "regime": "quasistatic",
    "graph": ROD_GRAPH,
    "solid_plate": None,
    "config": None,
    "seed": 0,
    "resolution": 8,
    "tiling": [1, 1, 1],
}

STEP_REQUEST = {"action": [1.0, 0.0, 0.0, 0.0]}

SEARCH_REQUEST = {
    "graph": ROD_GRAPH,
    "config": SearchConfig(beam_width=2, mutations_per_parent=2,
                           iterations=2, eval_steps=2).to_json(),
    "evaluator": "features",
    "job_key": "demo",
}

SEARCH_STATUS = {"id": "EXAMPLE", "state": "finished", "iteration": 2,
                 "best_score": 1.25, "candidates": 9, "diverged": 0}


def live_docs():
    client = TestClient(create_app(ServiceState()))
    created = client.post("/sessions", json={
        "material": NEO, "regime": "quasistatic",
        "solid_plate": {"resolution": 2, "tiling": [1, 1, 1]}})
    created.raise_for_status()
    session_doc = created.json()
    sid = session_doc["id"]
    session_doc["id"] = "EXAMPLE"

    step_doc = client.post(f"/sessions/{sid}/step",
                           json={"action": [0.0, 0.0, 0.0, 0.0]}).json()
    frame_doc = client.get(f"/sessions/{sid}/frames/0").json()
    with client.websocket_connect(f"/sessions/{sid}/stream") as ws:
        hello = ws.receive_json()

    rejected = client.post("/sessions", json={
        "material": NEO, "regime": "quasistatic", "graph": TWO_ISLANDS})
    assert rejected.status_code == 422, rejected.text
    return session_doc, step_doc, frame_doc, hello, rejected.json()


def main():
    OUT.mkdir(parents=True, exist_ok=True)
    session_doc, step_doc, frame_doc, hello, error_doc = live_docs()
    docs = {
        "create_session_request.json": CREATE_SESSION_REQUEST,
        "step_request.json": STEP_REQUEST,
        "search_request.json": SEARCH_REQUEST,
        "search_status.json": SEARCH_STATUS,
        "solver_config.json": SolverConfig.plate_defaults().to_json(),
        "session_doc.json": session_doc,
        "step_doc.json": step_doc,
        "frame_doc.json": frame_doc,
        "hello.json": hello,
        "validation_error_doc.json": error_doc,
    }
    for name, doc in docs.items():
        path = OUT / name
        path.write_text(json.dumps(doc, indent=2, sort_keys=True) + "\n",
                        encoding="utf-8")
        print("wrote", path)


if __name__ == "__main__":
    main()
