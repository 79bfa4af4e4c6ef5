import json
import random
import threading
import urllib.error
import urllib.request
from pathlib import Path

import pytest
from scenarios import CLEAN, random_scenario, scenarios, xray_events_for_pairs

from parcelflow.core import EventKind, SimEvent
from parcelflow.engine import run, summarize
from parcelflow.metrics import classification_report, from_pairs, table_reconstruction
from parcelflow.service import ParcelService, encode_body, make_server, pairs_from_events
from parcelflow.tracking import TrackingStore

GOLDEN = (Path(__file__).parent / "golden" / "table_report.json").read_bytes()
ROUTE = [{"name": "JAIPUR", "lat": 26.9124, "lon": 75.7873}, {"name": "NEW_DELHI", "lat": 28.6139, "lon": 77.209}]


class Clock:
    def __init__(self):
        self.t = 100.0

    def __call__(self):
        self.t += 1.0
        return self.t


@pytest.fixture
def service(tmp_path):
    return ParcelService(TrackingStore(tmp_path / "t.jsonl"), clock=Clock())


def post(svc, path, body):
    return svc.handle("POST", path, json.dumps(body).encode())


def test_register_created(service):
    status, body = post(service, "/api/v1/parcels", {**CLEAN, "route": ROUTE})
    assert (status, body) == (201, {"id": "ABC123DEF456"})


def test_register_without_route(service):
    assert post(service, "/api/v1/parcels", CLEAN)[0] == 201
    status, body = service.handle("GET", "/api/v1/parcels/ABC123DEF456/track")
    assert status == 200
    assert body["status"] == "REGISTERED" and body["reached"] == [] and body["remaining"] == []


def test_register_validation(service):
    status, body = post(service, "/api/v1/parcels", {**CLEAN, "weight_g": 0})
    assert status == 400
    assert body["code"] == "VALIDATION"
    assert "weight_g below minimum 1" in body["errors"]
    assert "message" in body


def test_register_duplicate(service):
    post(service, "/api/v1/parcels", CLEAN)
    status, body = post(service, "/api/v1/parcels", CLEAN)
    assert status == 409 and body["code"] == "DUPLICATE"


@pytest.mark.parametrize("raw", [b"{", b"[]", b"\xff\xfe", b""])
def test_malformed_bodies(service, raw):
    status, body = service.handle("POST", "/api/v1/parcels", raw)
    assert status == 400 and body["code"] == "BAD_REQUEST"


@pytest.mark.parametrize("route", ["nope", [{"name": "A"}], [{"name": "A", "lat": 100, "lon": 0}], []])
def test_bad_routes(service, route):
    status, body = post(service, "/api/v1/parcels", {**CLEAN, "route": route})
    assert status == 400 and body["code"] == "VALIDATION"


def test_track_lifecycle(service):
    post(service, "/api/v1/parcels", {**CLEAN, "route": ROUTE})
    status, body = service.handle("GET", "/api/v1/parcels/ABC123DEF456/track")
    assert status == 200 and body["status"] == "REGISTERED" and body["reached"] == []
    assert body["remaining"] == ["JAIPUR", "NEW_DELHI"]
    for name, ts in (("JAIPUR", 200.0), ("NEW_DELHI", 300.0)):
        assert post(service, "/api/v1/parcels/ABC123DEF456/checkpoints", {"name": name, "ts": ts})[0] == 200
    status, body = service.handle("GET", "/api/v1/parcels/ABC123DEF456/track")
    assert body["status"] == "DELIVERED"
    assert [r["name"] for r in body["reached"]] == ["JAIPUR", "NEW_DELHI"]
    assert body["reached"][0] == {"name": "JAIPUR", "lat": 26.9124, "lon": 75.7873, "ts": 200.0}


def test_checkpoint_errors(service):
    assert post(service, "/api/v1/parcels/NOPE/checkpoints", {"name": "X", "ts": 1})[0] == 404
    post(service, "/api/v1/parcels", {**CLEAN, "route": ROUTE})
    status, body = post(service, "/api/v1/parcels/ABC123DEF456/checkpoints", {"name": "NEW_DELHI", "ts": 1})
    assert status == 400 and "OUT_OF_ORDER" in body["message"]
    assert post(service, "/api/v1/parcels/ABC123DEF456/checkpoints", {"ts": 1})[0] == 400


def test_track_unknown(service):
    status, body = service.handle("GET", "/api/v1/parcels/NOPE/track")
    assert status == 404 and body["code"] == "NOT_FOUND"


def test_unknown_route(service):
    assert service.handle("GET", "/api/v1/nothing")[0] == 404
    assert service.handle("DELETE", "/api/v1/parcels")[0] == 404


def test_report_without_data(service):
    status, body = service.handle("GET", "/api/v1/report/classification")
    assert status == 404 and body["code"] == "NOT_FOUND"


def test_report_matches_golden(tmp_path):
    pairs = table_reconstruction().matrix.pairs()
    svc = ParcelService(TrackingStore(), xray_events_for_pairs(pairs))
    status, body = svc.handle("GET", "/api/v1/report/classification")
    assert status == 200
    assert encode_body(body) == GOLDEN


def test_report_perfect_pairs():
    pairs = [("GUN", "GUN"), ("BLADE", "BLADE"), ("NON_DANGEROUS", "NON_DANGEROUS")]
    _, body = ParcelService(TrackingStore(), xray_events_for_pairs(pairs)).handle(
        "GET", "/api/v1/report/classification")
    for name in ("GUN", "BLADE", "NON_DANGEROUS"):
        assert body["classes"][name]["precision"] == body["classes"][name]["recall"] == 1.0
    assert body["accuracy"] == 1.0


def test_report_from_simulation_equals_direct_module_call():
    events = []
    for seed in range(20):
        events += run(random_scenario(random.Random(seed))).events
    svc = ParcelService(TrackingStore(), events)
    status, body = svc.handle("GET", "/api/v1/report/classification")
    assert status == 200
    assert body == classification_report(from_pairs(pairs_from_events(events))).to_dict()


def _bin_log():
    ev = []

    def add(pid, kind, **data):
        ev.append(SimEvent(len(ev), float(len(ev)), pid, EventKind(kind), data))

    for pid in ("A", "B", "C"):
        add(pid, "ARRIVE", label="")
    add("A", "BINNED", bin="W0")
    add("B", "BINNED", bin="W0")
    add("C", "DUMPED", station="METAL")
    return ev


def test_bins():
    status, body = ParcelService(TrackingStore(), _bin_log()).handle("GET", "/api/v1/bins")
    assert status == 200
    assert body == {"bins": {"W0": 2}, "dumped": 1, "injected": 3}
    assert sum(body["bins"].values()) + body["dumped"] == body["injected"]


def test_bins_empty_and_missing():
    assert ParcelService(TrackingStore(), []).handle("GET", "/api/v1/bins") == (
        200, {"bins": {}, "dumped": 0, "injected": 0})
    assert ParcelService(TrackingStore()).handle("GET", "/api/v1/bins")[0] == 404


def test_bins_equal_module_summary():
    events = run(scenarios(1, seed=5)[0]).events
    _, body = ParcelService(TrackingStore(), events).handle("GET", "/api/v1/bins")
    r = summarize(events)
    assert body == {"bins": r.bin_occupancy, "dumped": r.dumped, "injected": r.injected}


def test_reads_are_side_effect_free(service):
    post(service, "/api/v1/parcels", {**CLEAN, "route": ROUTE})
    first = service.handle("GET", "/api/v1/parcels/ABC123DEF456/track")
    assert service.handle("GET", "/api/v1/parcels/ABC123DEF456/track") == first


@pytest.fixture
def live_server(tmp_path):
    pairs = table_reconstruction().matrix.pairs()
    svc = ParcelService(TrackingStore(tmp_path / "t.jsonl"), xray_events_for_pairs(pairs))
    server = make_server(svc, "127.0.0.1", 0)
    thread = threading.Thread(target=server.serve_forever, daemon=True)
    thread.start()
    yield f"http://127.0.0.1:{server.server_address[1]}"
    server.shutdown()
    server.server_close()


def http(method, url, body=None):
    data = None if body is None else (body if isinstance(body, bytes) else json.dumps(body).encode())
    req = urllib.request.Request(url, data=data, method=method, headers={"Content-Type": "application/json"})
    try:
        with urllib.request.urlopen(req, timeout=5) as resp:
            return resp.status, resp.read()
    except urllib.error.HTTPError as exc:
        return exc.code, exc.read()


def test_http_contract(live_server):
    status, raw = http("POST", f"{live_server}/api/v1/parcels", {**CLEAN, "route": ROUTE})
    assert status == 201 and json.loads(raw) == {"id": "ABC123DEF456"}
    assert http("POST", f"{live_server}/api/v1/parcels", {**CLEAN, "route": ROUTE})[0] == 409
    assert http("POST", f"{live_server}/api/v1/parcels", {**CLEAN, "weight_g": 0})[0] == 400
    assert http("POST", f"{live_server}/api/v1/parcels", b"{oops")[0] == 400
    assert http("GET", f"{live_server}/api/v1/parcels/NOPE/track")[0] == 404
    status, raw = http("GET", f"{live_server}/api/v1/parcels/ABC123DEF456/track")
    assert status == 200 and json.loads(raw)["status"] == "REGISTERED"
    status, raw = http("GET", f"{live_server}/api/v1/report/classification")
    assert status == 200 and raw == GOLDEN
    status, raw = http("GET", f"{live_server}/api/v1/bins")
    assert status == 200 and json.loads(raw)["injected"] == 0


def test_http_concurrent_registrations(live_server):
    results = []

    def worker(i):
        results.append(http("POST", f"{live_server}/api/v1/parcels", {**CLEAN, "id": f"C{i:011d}"})[0])

    threads = [threading.Thread(target=worker, args=(i,)) for i in range(20)]
    for t in threads:
        t.start()
    for t in threads:
        t.join()
    assert results == [201] * 20
