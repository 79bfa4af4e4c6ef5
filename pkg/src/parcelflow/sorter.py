"""Bin assignment under the run's sort basis and drum actuation timing."""

from __future__ import annotations

import bisect
from dataclasses import dataclass, fields
from enum import Enum
from typing import Mapping, Sequence

from .core import DEFAULT_ZONES, Fragility, Nature
from .errors import DrumLayoutError, UnknownZone, ValidationError

DEFAULT_BELT_SPEED_MPS = 0.5


class SortBasis(str, Enum):
    WEIGHT = "WEIGHT"
    DIMENSIONS = "DIMENSIONS"
    ZONE = "ZONE"

    @classmethod
    def parse(cls, text):
        aliases = {"weight": cls.WEIGHT, "dims": cls.DIMENSIONS, "dimensions": cls.DIMENSIONS, "zone": cls.ZONE}
        if isinstance(text, cls):
            return text
        try:
            return aliases[str(text).lower()]
        except KeyError:
            raise ValidationError([f"sort basis must be one of weight, dims, zone (got {text!r})"]) from None


@dataclass(frozen=True)
class BinConfig:
    """Bin layout for all three bases.

    ``split_nature`` / ``split_fragility`` append ``+M``/``+N`` and
    ``+F``/``+R`` to the bin id. ``positions_m`` maps bin id to the drum
    position along the sorting belt; bins without a position are pushed
    as soon as the parcel enters the sorter.
    """

    weight_thresholds_g: tuple[int, ...] = (1000, 5000)
    dim_thresholds_mm: tuple[int, ...] = (200, 400)
    zones: tuple[str, ...] = DEFAULT_ZONES
    split_nature: bool = False
    split_fragility: bool = False
    positions_m: Mapping[str, float] | None = None
    belt_speed_mps: float = DEFAULT_BELT_SPEED_MPS

    def __post_init__(self):
        for name in ("weight_thresholds_g", "dim_thresholds_mm", "zones"):
            object.__setattr__(self, name, tuple(getattr(self, name)))
        problems = []
        for name in ("weight_thresholds_g", "dim_thresholds_mm"):
            th = getattr(self, name)
            if any(t <= 0 for t in th) or any(b <= a for a, b in zip(th, th[1:])):
                problems.append(f"{name} must be positive and strictly ascending")
        if len(set(self.zones)) != len(self.zones):
            problems.append("zones must be unique")
        if not self.belt_speed_mps > 0:
            problems.append("belt_speed_mps must be positive")
        if problems:
            raise ValidationError(problems)

    def bin_ids(self, basis):
        basis = SortBasis(basis)
        if basis is SortBasis.WEIGHT:
            base = [f"W{i}" for i in range(len(self.weight_thresholds_g) + 1)]
        elif basis is SortBasis.DIMENSIONS:
            base = [f"D{i}" for i in range(len(self.dim_thresholds_mm) + 1)]
        else:
            base = [f"ZONE:{z}" for z in self.zones]
        if self.split_nature:
            base = [f"{b}+{s}" for b in base for s in "MN"]
        if self.split_fragility:
            base = [f"{b}+{s}" for b in base for s in "FR"]
        return base

    @classmethod
    def from_dict(cls, d):
        known = {f.name for f in fields(cls)}
        unknown = set(d) - known
        if unknown:
            raise ValidationError([f"unknown bins key {k}" for k in sorted(unknown)])
        return cls(**d)


def assign_bin(label, basis, cfg=BinConfig()) -> str:
    basis = SortBasis(basis)
    if basis is SortBasis.WEIGHT:
        # left-closed: a weight equal to a threshold lands in the higher bin
        bin_id = f"W{bisect.bisect_right(cfg.weight_thresholds_g, label.weight_g)}"
    elif basis is SortBasis.DIMENSIONS:
        bin_id = f"D{bisect.bisect_right(cfg.dim_thresholds_mm, label.max_dim_mm)}"
    else:
        if label.zone not in cfg.zones:
            raise UnknownZone(f"zone {label.zone} has no bin")
        bin_id = f"ZONE:{label.zone}"
    if cfg.split_nature:
        bin_id += "+M" if label.nature is Nature.METALLIC else "+N"
    if cfg.split_fragility:
        bin_id += "+F" if label.fragility is Fragility.FRAGILE else "+R"
    return bin_id


@dataclass(frozen=True)
class DrumAction:
    bin_id: str
    position_m: float
    delay_s: float


def drum_plan(bins: Sequence[str], belt_positions_m: Sequence[float], belt_speed_mps=DEFAULT_BELT_SPEED_MPS):
    """Map each bin to its sharp-sensor position and push delay after sort entry."""
    if len(bins) != len(belt_positions_m):
        raise DrumLayoutError("need exactly one belt position per bin")
    if len(set(bins)) != len(bins):
        raise DrumLayoutError("bin ids must be unique")
    if any(p < 0 for p in belt_positions_m):
        raise DrumLayoutError("belt positions must be non-negative")
    if any(b <= a for a, b in zip(belt_positions_m, belt_positions_m[1:])):
        raise DrumLayoutError("belt positions must be strictly ascending")
    if not belt_speed_mps > 0:
        raise DrumLayoutError("belt speed must be positive")
    return {b: DrumAction(b, float(p), p / belt_speed_mps) for b, p in zip(bins, belt_positions_m)}


def push_delays(cfg, basis):
    """Per-bin push delay for a run; empty when no drum positions are configured."""
    if not cfg.positions_m:
        return {}
    ids = cfg.bin_ids(basis)
    missing = [b for b in ids if b not in cfg.positions_m]
    if missing:
        raise DrumLayoutError(f"no drum position for bins {missing}")
    plan = drum_plan(ids, [cfg.positions_m[b] for b in ids], cfg.belt_speed_mps)
    return {b: a.delay_s for b, a in plan.items()}
