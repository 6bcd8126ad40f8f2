"""Client test fixtures: a live reward service plus a fault-injecting stub."""

from __future__ import annotations

import http.server
import json
import threading
import time

import numpy as np
import pytest
import uvicorn

from sgreward import (
    DatasetProfile,
    RewardConfig,
    build_synthetic_table,
    canonical_form,
)
from sgreward.graph import BoundingBox, ObjectInstance, RelationTriplet, SceneGraph
from sgreward.parsing import serialize_cot
from sgreward.service import build_app
from sgreward.store import GroundTruthStore, save_graphs, save_profile

# same toy vocabulary the engine's own test corpus is written against
CATEGORIES = (
    "person", "dog", "cat", "tree", "car", "building",
    "shirt", "table", "chair", "window", "sign", "pole",
)
TAXONOMY = {
    "on": "spatial", "near": "spatial", "behind": "spatial",
    "has": "possessive", "wearing": "possessive", "of": "possessive",
    "riding": "interactive", "holding": "interactive", "looking at": "interactive",
}
COUNTS = {
    "on": 500, "near": 200, "behind": 100,
    "has": 80, "wearing": 40, "of": 20,
    "riding": 10, "holding": 5, "looking at": 2,
}
REL_TYPES = ("spatial", "possessive", "interactive")
W, H = 640, 480


def make_profile() -> DatasetProfile:
    return DatasetProfile.from_counts(CATEGORIES, COUNTS, TAXONOMY, REL_TYPES,
                                      [("person", "on", "chair")])


def make_table():
    keys = set(CATEGORIES) | set(TAXONOMY)
    keys |= {f"{s} {p} {o}" for s in CATEGORIES for p in TAXONOMY for o in CATEGORIES}
    return build_synthetic_table(sorted(keys), dim=64)


def random_graph(rng: np.random.Generator, profile, image_id: str) -> SceneGraph:
    n = int(rng.integers(2, 7))
    cats = list(rng.choice(CATEGORIES, size=n))
    counters: dict[str, int] = {}
    objects = []
    for cat in cats:
        counters[cat] = counters.get(cat, 0) + 1
        x1 = float(rng.uniform(0, W - 30))
        y1 = float(rng.uniform(0, H - 30))
        objects.append(ObjectInstance(cat, counters[cat], BoundingBox(
            x1, y1, x1 + float(rng.uniform(10, W - x1)), y1 + float(rng.uniform(10, H - y1)))))
    keys = [o.key for o in objects]
    predicates = sorted(profile.predicates)
    relations = []
    seen = set()
    for _ in range(int(rng.integers(0, 7))):
        s, o = rng.choice(len(keys), size=2, replace=False)
        p = predicates[int(rng.integers(0, len(predicates)))]
        spo = (keys[int(s)], p, keys[int(o)])
        if spo not in seen:
            seen.add(spo)
            relations.append(RelationTriplet(*spo, profile.taxonomy[p]))
    graph = SceneGraph(image_id, W, H, tuple(objects), tuple(relations))
    return canonical_form(graph, profile)


@pytest.fixture(scope="session")
def backend(tmp_path_factory):
    tmp = tmp_path_factory.mktemp("svc")
    profile = make_profile()
    rng = np.random.default_rng(0)
    graphs = [random_graph(rng, profile, f"img{i}") for i in range(10)]
    save_profile(profile, tmp / "profile.json")
    save_graphs(graphs, tmp / "gt.jsonl")
    store = GroundTruthStore.load(tmp / "profile.json", tmp / "gt.jsonl")
    table = make_table()
    return store, table, RewardConfig(), graphs


@pytest.fixture(scope="session")
def service_url(backend):
    store, table, cfg, _ = backend
    app = build_app(store, table, cfg, max_batch=256)
    config = uvicorn.Config(app, host="127.0.0.1", port=0, log_level="error")
    server = uvicorn.Server(config)
    thread = threading.Thread(target=server.run, daemon=True)
    thread.start()
    deadline = time.time() + 15
    while not server.started:
        if time.time() > deadline:
            raise RuntimeError("service did not start")
        time.sleep(0.01)
    port = server.servers[0].sockets[0].getsockname()[1]
    yield f"http://127.0.0.1:{port}"
    server.should_exit = True
    thread.join(timeout=5)


def completion_items(backend, rng, n=6):
    store, _, _, graphs = backend
    items = []
    for i in range(n):
        graph = graphs[i % len(graphs)]
        items.append({
            "sample_id": f"s{i}",
            "image_id": graph.image_id,
            "text": serialize_cot(graph, store.profile).response_text,
        })
    return items


class _FaultHandler(http.server.BaseHTTPRequestHandler):
    """Emits scripted status codes, then healthy responses."""

    script: list[int] = []
    calls = 0

    def do_POST(self):
        cls = type(self)
        cls.calls += 1
        length = int(self.headers.get("Content-Length", 0))
        body = json.loads(self.rfile.read(length)) if length else {}
        if cls.script:
            status = cls.script.pop(0)
            self.send_response(status)
            self.send_header("Content-Length", "0")
            self.end_headers()
            return
        items = [{"sample_id": it.get("sample_id"), "image_id": it.get("image_id"),
                  "reward": {"composite": 1.0}} for it in body.get("items", [])]
        payload = json.dumps({"schema_version": 1, "items": items,
                              "summary": {"count": len(items)}}).encode()
        self.send_response(200)
        self.send_header("Content-Type", "application/json")
        self.send_header("Content-Length", str(len(payload)))
        self.end_headers()
        self.wfile.write(payload)

    def log_message(self, *args):
        pass


@pytest.fixture()
def fault_stub():
    _FaultHandler.script = []
    _FaultHandler.calls = 0
    server = http.server.ThreadingHTTPServer(("127.0.0.1", 0), _FaultHandler)
    thread = threading.Thread(target=server.serve_forever, daemon=True)
    thread.start()
    yield f"http://127.0.0.1:{server.server_address[1]}", _FaultHandler
    server.shutdown()
