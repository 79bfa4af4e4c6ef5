"""Checkpoint tracking backed by an append-only JSONL log.

Each log line is one object::

    {"seq": int, "ts": float, "parcel": str, "kind": str, "data": {...}}

with kinds ``REGISTER`` (``data.route`` is the checkpoint list),
``CHECKPOINT`` (``data`` is ``{"name", "lat", "lon"}``) and ``DUMPED``.
"""

from __future__ import annotations

import json
import math
import os
import threading
from dataclasses import dataclass, replace
from enum import Enum
from typing import Sequence

from .errors import CorruptLogError, TrackingError, ValidationError


class TrackStatus(str, Enum):
    REGISTERED = "REGISTERED"
    IN_TRANSIT = "IN_TRANSIT"
    DELIVERED = "DELIVERED"
    DUMPED = "DUMPED"


@dataclass(frozen=True)
class Checkpoint:
    name: str
    lat: float
    lon: float

    def __post_init__(self):
        problems = []
        if not isinstance(self.name, str) or not self.name:
            problems.append("checkpoint name must be a non-empty string")
        try:
            lat, lon = float(self.lat), float(self.lon)
        except (TypeError, ValueError):
            raise ValidationError(problems + ["checkpoint coordinates must be numbers"]) from None
        if not (math.isfinite(lat) and -90 <= lat <= 90):
            problems.append("lat must lie in [-90, 90]")
        if not (math.isfinite(lon) and -180 <= lon <= 180):
            problems.append("lon must lie in [-180, 180]")
        if problems:
            raise ValidationError(problems)
        object.__setattr__(self, "lat", round(lat, 6))
        object.__setattr__(self, "lon", round(lon, 6))

    def to_dict(self):
        return {"name": self.name, "lat": self.lat, "lon": self.lon}

    @classmethod
    def from_dict(cls, d):
        return cls(d["name"], d["lat"], d["lon"])


@dataclass(frozen=True)
class Visit:
    checkpoint: Checkpoint
    ts: float

    def to_dict(self):
        return {**self.checkpoint.to_dict(), "ts": self.ts}


@dataclass(frozen=True)
class TrackState:
    parcel_id: str
    route: tuple[Checkpoint, ...]
    reached: tuple[Visit, ...] = ()
    status: TrackStatus = TrackStatus.REGISTERED
    registered_ts: float = 0.0
    dumped_ts: float | None = None

    @property
    def remaining(self):
        return self.route[len(self.reached):]

    def to_dict(self):
        d = {
            "parcel_id": self.parcel_id,
            "status": self.status.value,
            "reached": [v.to_dict() for v in self.reached],
            "remaining": [c.name for c in self.remaining],
            "route": [c.to_dict() for c in self.route],
            "registered_ts": self.registered_ts,
        }
        if self.dumped_ts is not None:
            d["dumped_ts"] = self.dumped_ts
        return d


class TrackingStore:
    """Single-writer, many-reader store.

    Writers serialize on a lock. States are immutable and swapped in whole,
    so :meth:`query_track` reads without locking and always sees a
    point-in-time snapshot of one parcel.
    """

    def __init__(self, path=None):
        self.path = path
        self._states: dict[str, TrackState] = {}
        self._seq = 0
        self._lock = threading.Lock()

    # -- writes --------------------------------------------------------------

    def register_route(self, parcel_id, route: Sequence[Checkpoint], ts=0.0):
        route = tuple(c if isinstance(c, Checkpoint) else Checkpoint.from_dict(c) for c in route)
        if not route:
            raise TrackingError("route must contain at least one checkpoint", "EMPTY_ROUTE")
        return self._register(parcel_id, route, ts)

    def register_parcel(self, parcel_id, ts=0.0):
        """Register without a route; tracking shows REGISTERED with no checkpoints."""
        return self._register(parcel_id, (), ts)

    def _register(self, parcel_id, route, ts):
        names = [c.name for c in route]
        if len(set(names)) != len(names):
            raise TrackingError("checkpoint names must be unique within a route", "EMPTY_ROUTE")
        with self._lock:
            rec = self._record(ts, parcel_id, "REGISTER", {"route": [c.to_dict() for c in route]})
            state = self._apply(rec)
            self._append(rec)
            return state

    def record_checkpoint(self, parcel_id, checkpoint_name, ts):
        with self._lock:
            state = self._require(parcel_id)
            cp = self._next_checkpoint(state, checkpoint_name)
            rec = self._record(ts, parcel_id, "CHECKPOINT", cp.to_dict())
            state = self._apply(rec)
            self._append(rec)
            return state

    def mark_dumped(self, parcel_id, ts):
        with self._lock:
            rec = self._record(ts, parcel_id, "DUMPED", {})
            state = self._apply(rec)
            self._append(rec)
            return state

    # -- reads ---------------------------------------------------------------

    def query_track(self, parcel_id) -> TrackState:
        state = self._states.get(parcel_id)
        if state is None:
            raise TrackingError(f"parcel {parcel_id} is not registered", "UNKNOWN_PARCEL")
        return state

    def snapshot(self):
        return dict(self._states)

    def __contains__(self, parcel_id):
        return parcel_id in self._states

    def __len__(self):
        return len(self._states)

    # -- internals -----------------------------------------------------------

    def _record(self, ts, parcel_id, kind, data):
        return {"seq": self._seq, "ts": float(ts), "parcel": parcel_id, "kind": kind, "data": data}

    def _require(self, parcel_id):
        return self.query_track(parcel_id)

    @staticmethod
    def _next_checkpoint(state, name):
        if state.status in (TrackStatus.DELIVERED, TrackStatus.DUMPED) or not state.remaining:
            raise TrackingError(f"parcel {state.parcel_id} has no further checkpoints", "OUT_OF_ORDER")
        nxt = state.remaining[0]
        if nxt.name != name:
            raise TrackingError(f"expected checkpoint {nxt.name}, got {name}", "OUT_OF_ORDER")
        return nxt

    def _apply(self, rec):
        """Validate one record against current state and install the result."""
        pid, ts, kind, data = rec["parcel"], rec["ts"], rec["kind"], rec["data"]
        if rec["seq"] != self._seq:
            raise ValueError(f"expected seq {self._seq}, got {rec['seq']}")
        if not math.isfinite(ts):
            raise TrackingError("timestamp must be finite", "STALE_TIMESTAMP")
        if kind == "REGISTER":
            if pid in self._states:
                raise TrackingError(f"parcel {pid} is already registered", "DUPLICATE_PARCEL")
            state = TrackState(pid, tuple(Checkpoint.from_dict(c) for c in data["route"]), registered_ts=ts)
        elif kind == "CHECKPOINT":
            state = self._require(pid)
            cp = self._next_checkpoint(state, data["name"])
            last = state.reached[-1].ts if state.reached else None
            if (last is not None and ts <= last) or ts < state.registered_ts:
                raise TrackingError(f"timestamp {ts} is not after the last recorded one", "STALE_TIMESTAMP")
            reached = state.reached + (Visit(cp, ts),)
            status = TrackStatus.DELIVERED if len(reached) == len(state.route) else TrackStatus.IN_TRANSIT
            state = replace(state, reached=reached, status=status)
        elif kind == "DUMPED":
            state = self._require(pid)
            if state.status in (TrackStatus.DELIVERED, TrackStatus.DUMPED):
                raise TrackingError(f"parcel {pid} is already {state.status.value}", "OUT_OF_ORDER")
            state = replace(state, status=TrackStatus.DUMPED, dumped_ts=ts)
        else:
            raise ValueError(f"unknown record kind {kind!r}")
        self._states[pid] = state
        self._seq += 1
        return state

    def _append(self, rec):
        if self.path is None:
            return
        line = json.dumps(rec, separators=(",", ":"), ensure_ascii=False) + "\n"
        # one write per record keeps appends whole at line granularity
        with open(self.path, "a", encoding="utf-8") as fh:
            fh.write(line)
            fh.flush()
            os.fsync(fh.fileno())

    @classmethod
    def open(cls, path):
        """Replay ``path`` if it exists and keep appending to it."""
        store = replay(path) if os.path.exists(path) else cls()
        store.path = path
        return store


def replay(path) -> TrackingStore:
    """Rebuild a store by re-applying every record in a JSONL log.

    Raises :class:`CorruptLogError` at the first bad line; its ``store``
    attribute holds the state from the valid prefix.
    """
    store = TrackingStore()
    with open(path, "rb") as fh:
        for lineno, raw in enumerate(fh, start=1):
            try:
                if not raw.endswith(b"\n"):
                    raise ValueError("truncated line")
                rec = json.loads(raw.decode("utf-8"))
                if not isinstance(rec, dict) or set(rec) != {"seq", "ts", "parcel", "kind", "data"}:
                    raise ValueError("record does not match the log schema")
                store._apply(rec)
            except (ValueError, KeyError, TypeError, TrackingError, ValidationError) as exc:
                raise CorruptLogError(lineno, str(exc), store) from None
    return store
