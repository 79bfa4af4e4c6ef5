"""Domain types, label validation and the pipeline event vocabulary."""

from __future__ import annotations

import json
import re
from dataclasses import dataclass, field
from enum import Enum
from typing import Any, Iterable, Mapping, Sequence

from .errors import ValidationError

WEIGHT_RANGE_G = (1, 50_000)
DIM_RANGE_MM = (10, 600)
ADDRESS_MAX_BYTES = 120
TEMP_RANGE_C = (-20.0, 200.0)
DEFAULT_ZONES = ("DL", "RJ", "HR", "PB", "UP", "MH", "GJ", "KA", "TN", "WB")

_ID_RE = re.compile(r"[A-Z0-9]{12}")
_ZONE_RE = re.compile(r"[A-Z]{2}")


class Nature(str, Enum):
    METALLIC = "METALLIC"
    NONMETALLIC = "NONMETALLIC"


class Fragility(str, Enum):
    FRAGILE = "FRAGILE"
    REGULAR = "REGULAR"


class ObjectClass(str, Enum):
    BLADE = "BLADE"
    GUN = "GUN"
    KNIFE = "KNIFE"
    SHURIKEN = "SHURIKEN"
    NON_DANGEROUS = "NON_DANGEROUS"


CLASSES = tuple(c.value for c in ObjectClass)


class Station(str, Enum):
    REGISTER = "REGISTER"
    METAL = "METAL"
    XRAY = "XRAY"
    IR = "IR"
    MEASURE = "MEASURE"

    @property
    def ordinal(self):
        return _STATION_ORDER.index(self)


_STATION_ORDER = list(Station)
SCAN_STATIONS = (Station.METAL, Station.XRAY, Station.IR, Station.MEASURE)


class Verdict(str, Enum):
    PASS = "PASS"
    REJECT = "REJECT"


class EventKind(str, Enum):
    ARRIVE = "ARRIVE"
    STATION_START = "STATION_START"
    STATION_DONE = "STATION_DONE"
    DUMPED = "DUMPED"
    BINNED = "BINNED"
    CHECKPOINT = "CHECKPOINT"


TERMINAL_KINDS = frozenset({EventKind.DUMPED, EventKind.BINNED})

# measurement tag carried by each station's outcome
MEASUREMENT_TAG = {
    Station.REGISTER: "label_payload",
    Station.METAL: "inductance_shift_ppm",
    Station.XRAY: "predicted_class",
    Station.IR: "hotspot_area_cells",
    Station.MEASURE: "measured_weight_g",
}


@dataclass(frozen=True)
class ParcelLabel:
    """Declared shipping attributes; the content of the QR/RFID payload.

    Build through :func:`validate_label` to get the invariants checked.
    """

    id: str
    weight_g: int
    dims_mm: tuple[int, int, int]
    zone: str
    nature: Nature
    fragility: Fragility
    address: str

    @property
    def max_dim_mm(self):
        return max(self.dims_mm)

    def to_dict(self):
        return {
            "id": self.id,
            "weight_g": self.weight_g,
            "dims_mm": list(self.dims_mm),
            "zone": self.zone,
            "nature": self.nature.value,
            "fragility": self.fragility.value,
            "address": self.address,
        }


def _is_int(v):
    return isinstance(v, int) and not isinstance(v, bool)


def validate_label(candidate: Mapping[str, Any], zones: Iterable[str] = DEFAULT_ZONES) -> ParcelLabel:
    """Check raw label fields and build a :class:`ParcelLabel`.

    Every violated rule is collected; a :class:`ValidationError` lists
    them all rather than stopping at the first.
    """
    errors = []
    zones = set(zones)

    pid = candidate.get("id")
    if not isinstance(pid, str) or not _ID_RE.fullmatch(pid):
        errors.append("id must be 12 uppercase alphanumeric characters")

    lo, hi = WEIGHT_RANGE_G
    weight = candidate.get("weight_g")
    if not _is_int(weight):
        errors.append("weight_g must be an integer")
    elif weight < lo:
        errors.append(f"weight_g below minimum {lo}")
    elif weight > hi:
        errors.append(f"weight_g above maximum {hi}")

    dims = candidate.get("dims_mm")
    lo, hi = DIM_RANGE_MM
    if not isinstance(dims, (list, tuple)) or len(dims) != 3:
        errors.append("dims_mm must be a triple of integers")
        dims = None
    else:
        for axis, v in zip(("length", "width", "height"), dims):
            if not _is_int(v):
                errors.append(f"dims_mm {axis} must be an integer")
            elif v < lo:
                errors.append(f"dims_mm {axis} below minimum {lo}")
            elif v > hi:
                errors.append(f"dims_mm {axis} above maximum {hi}")

    zone = candidate.get("zone")
    if not isinstance(zone, str) or not _ZONE_RE.fullmatch(zone):
        errors.append("zone must be 2 uppercase letters")
    elif zone not in zones:
        errors.append(f"zone {zone} not in configured zone set")

    nature = _coerce_enum(Nature, candidate.get("nature"), "nature", errors)
    fragility = _coerce_enum(Fragility, candidate.get("fragility"), "fragility", errors)

    address = candidate.get("address")
    if not isinstance(address, str):
        errors.append("address must be a string")
    else:
        if "|" in address:
            errors.append("address contains '|'")
        if any(ord(ch) < 0x20 or 0x7F <= ord(ch) < 0xA0 for ch in address):
            errors.append("address contains control characters")
        try:
            n = len(address.encode("utf-8"))
        except UnicodeEncodeError:
            errors.append("address is not valid UTF-8")
        else:
            if n > ADDRESS_MAX_BYTES:
                errors.append(f"address longer than {ADDRESS_MAX_BYTES} bytes")

    if errors:
        raise ValidationError(errors)
    return ParcelLabel(pid, weight, tuple(dims), zone, nature, fragility, address)


def _coerce_enum(enum_cls, value, name, errors):
    if isinstance(value, enum_cls):
        return value
    try:
        return enum_cls(value)
    except ValueError:
        allowed = ", ".join(m.value for m in enum_cls)
        errors.append(f"{name} must be one of {allowed}")
        return None


@dataclass(frozen=True)
class ParcelInstance:
    """A label plus the hidden ground truth the detectors probe."""

    label: ParcelLabel
    true_class: ObjectClass = ObjectClass.NON_DANGEROUS
    metal_mass_g: float = 0.0
    orientation_factor: float = 1.0
    true_weight_g: float | None = None
    thermal_map: tuple[tuple[float, ...], ...] = ((22.0,),)

    def __post_init__(self):
        object.__setattr__(self, "true_class", ObjectClass(self.true_class))
        if self.true_weight_g is None:
            object.__setattr__(self, "true_weight_g", float(self.label.weight_g))
        object.__setattr__(self, "thermal_map", tuple(tuple(float(c) for c in row) for row in self.thermal_map))
        problems = []
        if not self.metal_mass_g >= 0:
            problems.append("metal_mass_g must be non-negative")
        if not 0.0 <= self.orientation_factor <= 1.0:
            problems.append("orientation_factor must lie in [0, 1]")
        if not self.true_weight_g > 0:
            problems.append("true_weight_g must be positive")
        lo, hi = TEMP_RANGE_C
        if any(not lo <= t <= hi for row in self.thermal_map for t in row):
            problems.append(f"thermal_map temperatures must lie in [{lo}, {hi}]")
        if problems:
            raise ValidationError(problems)


@dataclass(frozen=True)
class ScanOutcome:
    station: Station
    verdict: Verdict
    value: Any

    def __post_init__(self):
        object.__setattr__(self, "station", Station(self.station))
        object.__setattr__(self, "verdict", Verdict(self.verdict))

    @property
    def tag(self):
        return MEASUREMENT_TAG[self.station]

    @property
    def rejected(self):
        return self.verdict is Verdict.REJECT

    def to_dict(self):
        value = self.value.value if isinstance(self.value, Enum) else self.value
        return {"station": self.station.value, "verdict": self.verdict.value, "measurement": {self.tag: value}}

    @classmethod
    def from_dict(cls, d):
        station = Station(d["station"])
        (tag, value), = d["measurement"].items()
        if tag != MEASUREMENT_TAG[station]:
            raise ValueError(f"measurement {tag} does not match station {station.value}")
        if station is Station.XRAY:
            value = ObjectClass(value)
        return cls(station, Verdict(d["verdict"]), value)


@dataclass(frozen=True)
class SimEvent:
    seq: int
    time_s: float
    parcel_id: str
    kind: EventKind
    payload: Mapping[str, Any] = field(default_factory=dict)

    def to_record(self):
        return {"seq": self.seq, "ts": self.time_s, "parcel": self.parcel_id,
                "kind": self.kind.value, "data": dict(self.payload)}

    def to_json(self):
        return json.dumps(self.to_record(), separators=(",", ":"), ensure_ascii=False)

    @classmethod
    def from_record(cls, rec):
        return cls(int(rec["seq"]), float(rec["ts"]), rec["parcel"], EventKind(rec["kind"]), rec.get("data", {}))


def read_events(lines):
    """Parse JSONL lines (blank lines skipped) into :class:`SimEvent` objects."""
    return [SimEvent.from_record(json.loads(line)) for line in lines if line.strip()]


def write_events(events, fh):
    for ev in events:
        fh.write(ev.to_json() + "\n")


def validate_log(events: Sequence[SimEvent]) -> list[str]:
    """Return every well-formedness violation found in a pipeline event log."""
    violations = []
    for i, ev in enumerate(events):
        if ev.seq != i:
            violations.append(f"seq gap: position {i} has seq {ev.seq}")
            break

    by_parcel: dict[str, list[SimEvent]] = {}
    for ev in events:
        by_parcel.setdefault(ev.parcel_id, []).append(ev)

    for pid, evs in by_parcel.items():
        if any(b.time_s < a.time_s for a, b in zip(evs, evs[1:])):
            violations.append(f"parcel {pid} has decreasing event times")
        terminals = [e for e in evs if e.kind in TERMINAL_KINDS]
        if len(terminals) != 1:
            violations.append(f"parcel {pid} has {len(terminals)} terminal events")
        if terminals and evs[-1].kind not in TERMINAL_KINDS:
            violations.append(f"parcel {pid} has events after {terminals[0].kind.value}")
        if evs[0].kind is not EventKind.ARRIVE:
            violations.append(f"parcel {pid} does not start with ARRIVE")
        violations.extend(_check_station_sequence(pid, evs))
    return violations


def _check_station_sequence(pid, evs):
    out = []
    done = [e for e in evs if e.kind is EventKind.STATION_DONE]
    stations = [Station(e.payload.get("station")) for e in done]
    expected = [Station.REGISTER, *SCAN_STATIONS]
    if stations != expected[: len(stations)]:
        out.append(f"parcel {pid} visits stations out of order: {[s.value for s in stations]}")
        return out
    outcomes = [ScanOutcome.from_dict(e.payload) for e in done]
    rejects = [o for o in outcomes if o.rejected]
    kinds = {e.kind for e in evs}
    if rejects:
        if outcomes[-1] is not rejects[0]:
            out.append(f"parcel {pid} continued scanning after a reject")
        if EventKind.BINNED in kinds:
            out.append(f"parcel {pid} was binned despite a reject")
    elif EventKind.BINNED in kinds and len(outcomes) != len(expected):
        out.append(f"parcel {pid} was binned before completing all stations")
    elif EventKind.DUMPED in kinds:
        out.append(f"parcel {pid} was dumped without a reject")
    starts = [Station(e.payload.get("station")) for e in evs if e.kind is EventKind.STATION_START]
    if starts != [s for s in stations if s is not Station.REGISTER]:
        out.append(f"parcel {pid} has unmatched station start/done events")
    return out
