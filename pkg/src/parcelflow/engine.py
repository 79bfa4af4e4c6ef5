"""Discrete-event simulation of the scan-then-sort conveyor."""

from __future__ import annotations

import heapq
import json
import math
from collections import Counter, deque
from dataclasses import dataclass, field
from typing import Mapping, Sequence

from . import codec
from .core import (
    SCAN_STATIONS,
    EventKind,
    ParcelInstance,
    ScanOutcome,
    SimEvent,
    Station,
    Verdict,
    validate_label,
    validate_log,
)
from .detectors import DetectorConfig, XrayChannelModel, default_channel, ir_scan, measure_weight, metal_scan, xray_classify
from .errors import ParcelFlowError, ScenarioInvalid
from .rng import prng_stream
from .sorter import BinConfig, SortBasis, assign_bin, push_delays

__all__ = ["ScheduledParcel", "Scenario", "SimReport", "run", "summarize", "load_scenario", "validate_log"]

DEFAULT_SERVICE_S = 1.0
DEFAULT_TRANSIT_S = 2.0


@dataclass(frozen=True)
class ScheduledParcel:
    arrival_s: float
    parcel: ParcelInstance


@dataclass(frozen=True)
class Scenario:
    parcels: Sequence[ScheduledParcel] = ()
    detector_config: DetectorConfig = field(default_factory=DetectorConfig)
    xray_model: XrayChannelModel | None = None
    station_service_s: Mapping[Station, float] = field(
        default_factory=lambda: {s: DEFAULT_SERVICE_S for s in SCAN_STATIONS})
    conveyor_transit_s: float = DEFAULT_TRANSIT_S
    sort_basis: SortBasis = SortBasis.WEIGHT
    bins: BinConfig = field(default_factory=BinConfig)
    seed: int = 0

    def check(self):
        problems = []
        ids = [sp.parcel.label.id for sp in self.parcels]
        dupes = sorted(k for k, v in Counter(ids).items() if v > 1)
        if dupes:
            problems.append(f"duplicate parcel ids: {dupes}")
        for sp in self.parcels:
            if not (math.isfinite(sp.arrival_s) and sp.arrival_s >= 0):
                problems.append(f"parcel {sp.parcel.label.id} arrival offset must be finite and non-negative")
        for s in SCAN_STATIONS:
            t = self.station_service_s.get(s)
            if t is None or not (math.isfinite(t) and t > 0):
                problems.append(f"service time for {s.value} must be positive")
        if not (math.isfinite(self.conveyor_transit_s) and self.conveyor_transit_s > 0):
            problems.append("conveyor_transit_s must be positive")
        if not 0 <= self.seed < 2**64:
            problems.append("seed must be a 64-bit unsigned integer")
        if problems:
            raise ScenarioInvalid("; ".join(problems))
        try:
            (self.xray_model or default_channel()).check()
            push_delays(self.bins, self.sort_basis)
        except ParcelFlowError as exc:
            raise ScenarioInvalid(str(exc)) from None
        return self


@dataclass
class SimReport:
    events: list[SimEvent]
    injected: int = 0
    dumped: int = 0
    binned: int = 0
    station_rejects: dict[str, int] = field(default_factory=dict)
    bin_occupancy: dict[str, int] = field(default_factory=dict)

    def totals(self):
        return {"injected": self.injected, "dumped": self.dumped, "binned": self.binned,
                "station_rejects": dict(self.station_rejects), "bin_occupancy": dict(self.bin_occupancy)}

    def to_jsonl(self):
        return "".join(ev.to_json() + "\n" for ev in self.events)


def summarize(events: Sequence[SimEvent]) -> SimReport:
    """Tally totals, per-station rejects and bin occupancy from an event log."""
    report = SimReport(list(events))
    rejects: Counter = Counter()
    bins: Counter = Counter()
    for ev in events:
        if ev.kind is EventKind.ARRIVE:
            report.injected += 1
        elif ev.kind is EventKind.DUMPED:
            report.dumped += 1
            rejects[ev.payload["station"]] += 1
        elif ev.kind is EventKind.BINNED:
            report.binned += 1
            bins[ev.payload["bin"]] += 1
    report.station_rejects = dict(sorted(rejects.items()))
    report.bin_occupancy = dict(sorted(bins.items()))
    return report


_ARRIVE, _REACH, _DONE, _SORT, _BIN = range(5)


def run(s: Scenario) -> SimReport:
    s.check()
    model = s.xray_model or default_channel()
    cfg = s.detector_config
    delays = push_delays(s.bins, s.sort_basis)

    events: list[SimEvent] = []
    heap: list = []
    order = 0

    def schedule(t, action, idx, k=0, extra=None):
        nonlocal order
        heapq.heappush(heap, (t, order, action, idx, k, extra))
        order += 1

    def emit(t, idx, kind, payload):
        events.append(SimEvent(len(events), t, s.parcels[idx].parcel.label.id, kind, payload))

    busy = [False] * len(SCAN_STATIONS)
    waiting = [deque() for _ in SCAN_STATIONS]

    def start(t, idx, k):
        busy[k] = True
        emit(t, idx, EventKind.STATION_START, {"station": SCAN_STATIONS[k].value})
        schedule(t + s.station_service_s[SCAN_STATIONS[k]], _DONE, idx, k)

    def evaluate(idx, k):
        p = s.parcels[idx].parcel
        station = SCAN_STATIONS[k]
        if station is Station.METAL:
            return metal_scan(p, cfg)
        if station is Station.XRAY:
            return xray_classify(p.true_class, model, prng_stream(s.seed, idx, station), cfg)
        if station is Station.IR:
            return ir_scan(p.thermal_map, cfg)
        return measure_weight(p, cfg, prng_stream(s.seed, idx, station))

    for idx, sp in enumerate(s.parcels):
        schedule(float(sp.arrival_s), _ARRIVE, idx)

    while heap:
        t, _, action, idx, k, extra = heapq.heappop(heap)
        if action == _ARRIVE:
            payload = codec.encode(s.parcels[idx].parcel.label)
            emit(t, idx, EventKind.ARRIVE, {"label": payload})
            emit(t, idx, EventKind.STATION_DONE, ScanOutcome(Station.REGISTER, Verdict.PASS, payload).to_dict())
            schedule(t + s.conveyor_transit_s, _REACH, idx, 0)
        elif action == _REACH:
            if busy[k]:
                waiting[k].append(idx)
            else:
                start(t, idx, k)
        elif action == _DONE:
            outcome = evaluate(idx, k)
            data = outcome.to_dict()
            if outcome.station is Station.XRAY:
                data["truth"] = s.parcels[idx].parcel.true_class.value
            emit(t, idx, EventKind.STATION_DONE, data)
            if outcome.rejected:
                emit(t, idx, EventKind.DUMPED, {"station": outcome.station.value})
            elif k + 1 < len(SCAN_STATIONS):
                schedule(t + s.conveyor_transit_s, _REACH, idx, k + 1)
            else:
                schedule(t + s.conveyor_transit_s, _SORT, idx)
            busy[k] = False
            if waiting[k]:
                start(t, waiting[k].popleft(), k)
        elif action == _SORT:
            bin_id = assign_bin(s.parcels[idx].parcel.label, s.sort_basis, s.bins)
            schedule(t + delays.get(bin_id, 0.0), _BIN, idx, extra=bin_id)
        else:
            emit(t, idx, EventKind.BINNED, {"bin": extra})

    return summarize(events)


# -- scenario files ------------------------------------------------------------

def _parcel_from_dict(d, zones):
    if "payload" in d:
        label = codec.decode(d["payload"], zones)
    else:
        label = validate_label(d["label"], zones)
    return ScheduledParcel(
        float(d.get("arrival_s", 0.0)),
        ParcelInstance(
            label=label,
            true_class=d.get("true_class", "NON_DANGEROUS"),
            metal_mass_g=float(d.get("metal_mass_g", 0.0)),
            orientation_factor=float(d.get("orientation_factor", 1.0)),
            true_weight_g=d.get("true_weight_g"),
            thermal_map=d.get("thermal_map", [[22.0]]),
        ),
    )


def _xray_model_from(value):
    if value is None or value == "default":
        return None
    if value == "identity":
        return XrayChannelModel.identity()
    return XrayChannelModel(tuple(value["classes"]), tuple(map(tuple, value["row_probs"])))


_SCENARIO_KEYS = {"parcels", "detector_config", "xray_model", "station_service_s", "conveyor_transit_s",
                  "sort_basis", "bins", "seed"}


def scenario_from_dict(d: Mapping) -> Scenario:
    unknown = set(d) - _SCENARIO_KEYS
    if unknown:
        raise ScenarioInvalid(f"unknown scenario keys: {sorted(unknown)}")
    try:
        bins = BinConfig.from_dict(d.get("bins", {}))
        service = d.get("station_service_s", DEFAULT_SERVICE_S)
        if isinstance(service, Mapping):
            service = {s: float(service.get(s.value, DEFAULT_SERVICE_S)) for s in SCAN_STATIONS}
        else:
            service = {s: float(service) for s in SCAN_STATIONS}
        return Scenario(
            parcels=tuple(_parcel_from_dict(p, bins.zones) for p in d.get("parcels", [])),
            detector_config=DetectorConfig.from_dict(d.get("detector_config", {})),
            xray_model=_xray_model_from(d.get("xray_model")),
            station_service_s=service,
            conveyor_transit_s=float(d.get("conveyor_transit_s", DEFAULT_TRANSIT_S)),
            sort_basis=SortBasis.parse(d.get("sort_basis", "weight")),
            bins=bins,
            seed=int(d.get("seed", 0)),
        ).check()
    except ScenarioInvalid:
        raise
    except (ParcelFlowError, KeyError, TypeError, ValueError) as exc:
        raise ScenarioInvalid(str(exc)) from None


def load_scenario(path) -> Scenario:
    with open(path, encoding="utf-8") as fh:
        try:
            data = json.load(fh)
        except json.JSONDecodeError as exc:
            raise ScenarioInvalid(f"scenario is not valid JSON: {exc}") from None
    if not isinstance(data, Mapping):
        raise ScenarioInvalid("scenario must be a JSON object")
    return scenario_from_dict(data)
