import json
import random
import threading

import pytest
from hypothesis import given, settings
from hypothesis import strategies as st

from parcelflow.errors import CorruptLogError, TrackingError, ValidationError
from parcelflow.tracking import Checkpoint, TrackingStore, TrackStatus, replay

ROUTE = [Checkpoint("JAIPUR", 26.9124, 75.7873), Checkpoint("ALWAR", 27.553, 76.6346),
         Checkpoint("NEW_DELHI", 28.6139, 77.209)]


@pytest.fixture
def store(tmp_path):
    return TrackingStore(tmp_path / "track.jsonl")


def codes(exc):
    return exc.value.code


def test_register(store):
    s = store.register_route("P1", ROUTE, ts=1.0)
    assert s.status is TrackStatus.REGISTERED
    assert s.reached == ()


def test_duplicate_register(store):
    store.register_route("P1", ROUTE)
    with pytest.raises(TrackingError) as exc:
        store.register_route("P1", ROUTE)
    assert codes(exc) == "DUPLICATE_PARCEL"


def test_route_errors(store):
    with pytest.raises(TrackingError) as exc:
        store.register_route("P1", [])
    assert codes(exc) == "EMPTY_ROUTE"
    with pytest.raises(TrackingError) as exc:
        store.register_route("P1", [ROUTE[0], ROUTE[0]])
    assert codes(exc) == "EMPTY_ROUTE"


def test_checkpoint_progression(store):
    store.register_route("P1", ROUTE, ts=0.0)
    store.record_checkpoint("P1", "JAIPUR", 1.0)
    s = store.record_checkpoint("P1", "ALWAR", 2.0)
    assert s.status is TrackStatus.IN_TRANSIT
    assert s.reached[-1].checkpoint.name == "ALWAR"
    s = store.record_checkpoint("P1", "NEW_DELHI", 3.0)
    assert s.status is TrackStatus.DELIVERED
    assert [v.ts for v in s.reached] == [1.0, 2.0, 3.0]
    with pytest.raises(TrackingError) as exc:
        store.record_checkpoint("P1", "NEW_DELHI", 4.0)
    assert codes(exc) == "OUT_OF_ORDER"


def test_checkpoint_errors(store):
    store.register_route("P1", ROUTE)
    with pytest.raises(TrackingError) as exc:
        store.record_checkpoint("P1", "ALWAR", 1.0)
    assert codes(exc) == "OUT_OF_ORDER"
    with pytest.raises(TrackingError) as exc:
        store.record_checkpoint("NOPE", "JAIPUR", 1.0)
    assert codes(exc) == "UNKNOWN_PARCEL"
    store.record_checkpoint("P1", "JAIPUR", 5.0)
    with pytest.raises(TrackingError) as exc:
        store.record_checkpoint("P1", "ALWAR", 5.0)
    assert codes(exc) == "STALE_TIMESTAMP"
    assert len(store.query_track("P1").reached) == 1


def test_query(store):
    with pytest.raises(TrackingError) as exc:
        store.query_track("NOPE")
    assert codes(exc) == "UNKNOWN_PARCEL"
    store.register_route("P1", ROUTE)
    assert store.query_track("P1").to_dict()["remaining"] == ["JAIPUR", "ALWAR", "NEW_DELHI"]


def test_dumped_status(store):
    store.register_route("P1", ROUTE)
    s = store.mark_dumped("P1", 7.5)
    assert s.status is TrackStatus.DUMPED and s.dumped_ts == 7.5
    with pytest.raises(TrackingError):
        store.record_checkpoint("P1", "JAIPUR", 8.0)


def test_checkpoint_validation():
    with pytest.raises(ValidationError):
        Checkpoint("X", 91, 0)
    with pytest.raises(ValidationError):
        Checkpoint("", 0, 0)
    assert Checkpoint("X", 1.23456789, -2.0000004).lat == 1.234568


def test_log_schema(store):
    store.register_route("P1", ROUTE[:1], ts=0.5)
    store.record_checkpoint("P1", "JAIPUR", 1.25)
    lines = store.path.read_text(encoding="utf-8").splitlines()
    assert [json.loads(x) for x in lines] == [
        {"seq": 0, "ts": 0.5, "parcel": "P1", "kind": "REGISTER",
         "data": {"route": [{"name": "JAIPUR", "lat": 26.9124, "lon": 75.7873}]}},
        {"seq": 1, "ts": 1.25, "parcel": "P1", "kind": "CHECKPOINT",
         "data": {"name": "JAIPUR", "lat": 26.9124, "lon": 75.7873}},
    ]


def test_replay_empty_file(tmp_path):
    path = tmp_path / "empty.jsonl"
    path.write_text("")
    assert len(replay(path)) == 0


def random_ops(rng, store, n):
    """Drive a store with a random mix of valid and invalid operations."""
    ids = [f"P{i}" for i in range(6)]
    t = 0.0
    for _ in range(n):
        t += rng.choice([0.0, 0.5, 1.0])
        pid = rng.choice(ids)
        op = rng.random()
        try:
            if op < 0.3:
                k = rng.randint(1, 3)
                store.register_route(pid, ROUTE[:k], ts=t)
            elif op < 0.9:
                state = store.query_track(pid)
                names = [c.name for c in state.route] or ["JAIPUR"]
                store.record_checkpoint(pid, rng.choice(names), t)
            else:
                store.mark_dumped(pid, t)
        except TrackingError:
            pass


@settings(max_examples=100)
@given(st.integers(0, 2**32), st.integers(0, 60))
def test_replay_equivalence(tmp_path_factory, seed, n):
    path = tmp_path_factory.mktemp("r") / "log.jsonl"
    store = TrackingStore(path)
    random_ops(random.Random(seed), store, n)
    if not path.exists():
        path.write_text("")
    assert replay(path).snapshot() == store.snapshot()
    assert replay(path).snapshot() == replay(path).snapshot()


def test_truncated_tail_recovers_prefix(tmp_path):
    path = tmp_path / "log.jsonl"
    store = TrackingStore(path)
    random_ops(random.Random(3), store, 80)
    raw = path.read_bytes()
    lines = raw.splitlines(keepends=True)
    assert len(lines) > 5
    cut = len(raw) - len(lines[-1]) // 2
    path.write_bytes(raw[:cut])
    with pytest.raises(CorruptLogError) as exc:
        replay(path)
    assert exc.value.lineno == len(lines)
    prefix = tmp_path / "prefix.jsonl"
    prefix.write_bytes(b"".join(lines[:-1]))
    assert exc.value.store.snapshot() == replay(prefix).snapshot()


def test_corrupt_middle_line(tmp_path):
    path = tmp_path / "log.jsonl"
    store = TrackingStore(path)
    store.register_route("P1", ROUTE)
    store.record_checkpoint("P1", "JAIPUR", 1.0)
    lines = path.read_text().splitlines(keepends=True)
    path.write_text(lines[0] + '{"seq":1,"ts":1.0}\n')
    with pytest.raises(CorruptLogError) as exc:
        replay(path)
    assert exc.value.lineno == 2 and exc.value.code == "CORRUPT_LINE"
    assert "P1" in exc.value.store


def test_open_continues_log(tmp_path):
    path = tmp_path / "log.jsonl"
    a = TrackingStore.open(path)
    a.register_route("P1", ROUTE)
    b = TrackingStore.open(path)
    b.record_checkpoint("P1", "JAIPUR", 1.0)
    assert replay(path).query_track("P1").status is TrackStatus.IN_TRANSIT


def test_readers_see_consistent_snapshots(store):
    store.register_route("P1", ROUTE * 1 + [Checkpoint(f"C{i}", 0, 0) for i in range(200)], ts=0.0)
    names = [c.name for c in store.query_track("P1").route]
    errors = []

    def reader():
        for _ in range(2000):
            s = store.query_track("P1")
            if [v.checkpoint.name for v in s.reached] != names[: len(s.reached)]:
                errors.append("torn read")

    threads = [threading.Thread(target=reader) for _ in range(4)]
    for t in threads:
        t.start()
    for i, name in enumerate(names):
        store.record_checkpoint("P1", name, float(i + 1))
    for t in threads:
        t.join()
    assert errors == []
    assert store.query_track("P1").status is TrackStatus.DELIVERED
