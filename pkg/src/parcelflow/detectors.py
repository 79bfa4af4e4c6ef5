"""Scanning-station models: metal, X-ray channel, IR hotspot and weight check."""

from __future__ import annotations

import functools
from collections import deque
from dataclasses import dataclass, field, fields
from typing import Sequence

from .core import CLASSES, ObjectClass, ScanOutcome, Station, Verdict
from .errors import EmptyGrid, ModelInvalid, ValidationError

ROW_TOL = 1e-9


@dataclass(frozen=True)
class DetectorConfig:
    metal_k_ppm_per_g: float = 2.0
    metal_threshold_ppm: float = 10.0
    ir_hot_temp_c: float = 35.0
    ir_min_area_cells: int = 4
    weight_mismatch_frac: float = 0.05
    weight_noise_frac: float = 0.02
    dangerous_classes: frozenset = field(
        default_factory=lambda: frozenset(c for c in ObjectClass if c is not ObjectClass.NON_DANGEROUS))

    def __post_init__(self):
        object.__setattr__(self, "dangerous_classes", frozenset(ObjectClass(c) for c in self.dangerous_classes))
        problems = []
        for name in ("metal_k_ppm_per_g", "metal_threshold_ppm", "ir_min_area_cells"):
            if not getattr(self, name) > 0:
                problems.append(f"{name} must be positive")
        if not 0 <= self.weight_mismatch_frac < 1:
            problems.append("weight_mismatch_frac must lie in [0, 1)")
        if not 0 <= self.weight_noise_frac < 1:
            problems.append("weight_noise_frac must lie in [0, 1)")
        if problems:
            raise ValidationError(problems)

    @classmethod
    def from_dict(cls, d):
        known = {f.name for f in fields(cls)}
        unknown = set(d) - known
        if unknown:
            raise ValidationError([f"unknown detector_config key {k}" for k in sorted(unknown)])
        return cls(**d)

    def to_dict(self):
        d = {f.name: getattr(self, f.name) for f in fields(self)}
        d["dangerous_classes"] = sorted(c.value for c in self.dangerous_classes)
        return d


@dataclass(frozen=True)
class XrayChannelModel:
    """Noisy-channel stand-in for the X-ray classifier.

    ``row_probs[i][j]`` is the probability of predicting ``classes[j]``
    when the truth is ``classes[i]``.
    """

    classes: tuple[str, ...]
    row_probs: tuple[tuple[float, ...], ...]

    _problem: str | None = field(default=None, init=False, repr=False, compare=False)

    def __post_init__(self):
        object.__setattr__(self, "classes", tuple(ObjectClass(c).value for c in self.classes))
        object.__setattr__(self, "row_probs", tuple(tuple(float(p) for p in row) for row in self.row_probs))
        object.__setattr__(self, "_problem", self._find_problem())

    def _find_problem(self):
        n = len(self.classes)
        if len(set(self.classes)) != n:
            return "class names must be unique"
        if len(self.row_probs) != n or any(len(r) != n for r in self.row_probs):
            return f"row_probs must be {n}x{n}"
        for name, row in zip(self.classes, self.row_probs):
            if any(not p >= 0 for p in row):
                return f"row {name} has a negative entry"
            if not abs(sum(row) - 1.0) <= ROW_TOL:
                return f"row {name} sums to {sum(row)!r}"
        return None

    def check(self):
        if self._problem:
            raise ModelInvalid(self._problem)
        return self

    @classmethod
    def identity(cls, classes=CLASSES):
        n = len(classes)
        return cls(tuple(classes), tuple(tuple(1.0 if i == j else 0.0 for j in range(n)) for i in range(n)))

    @classmethod
    def from_confusion(cls, matrix):
        """Row-normalize an integer confusion matrix."""
        rows = []
        for name, row in zip(matrix.classes, matrix.counts):
            total = sum(row)
            if total == 0:
                raise ModelInvalid(f"class {name} has no support")
            rows.append(tuple(c / total for c in row))
        return cls(tuple(matrix.classes), tuple(rows)).check()

    def to_dict(self):
        return {"classes": list(self.classes), "row_probs": [list(r) for r in self.row_probs]}


@functools.lru_cache(maxsize=None)
def default_channel():
    """Channel built from the confusion matrix behind the published report."""
    from .metrics import table_reconstruction

    return XrayChannelModel.from_confusion(table_reconstruction().matrix)


def metal_scan(p, cfg=DetectorConfig()):
    shift = cfg.metal_k_ppm_per_g * p.metal_mass_g * p.orientation_factor
    verdict = Verdict.REJECT if shift >= cfg.metal_threshold_ppm else Verdict.PASS
    return ScanOutcome(Station.METAL, verdict, shift)


def sample_class(model, true_class, u):
    """Inverse-CDF lookup of ``u`` in the row for ``true_class``."""
    row = model.row_probs[model.classes.index(ObjectClass(true_class).value)]
    acc = 0.0
    last = 0
    for j, p in enumerate(row):
        if p > 0:
            last = j
        acc += p
        if u < acc:
            return ObjectClass(model.classes[j])
    # float round-off left u above the accumulated sum
    return ObjectClass(model.classes[last])


def xray_classify(true_class, model, rng, cfg=DetectorConfig()):
    model.check()
    predicted = sample_class(model, true_class, rng.random())
    verdict = Verdict.REJECT if predicted in cfg.dangerous_classes else Verdict.PASS
    return ScanOutcome(Station.XRAY, verdict, predicted)


def largest_hot_region(grid: Sequence[Sequence[float]], hot_temp_c: float) -> int:
    """Size of the largest 4-connected region with every cell >= ``hot_temp_c``."""
    if not grid or not grid[0]:
        raise EmptyGrid("thermal map has no cells")
    rows, cols = len(grid), len(grid[0])
    if any(len(r) != cols for r in grid):
        raise EmptyGrid("thermal map is not rectangular")
    seen = [[False] * cols for _ in range(rows)]
    best = 0
    for r0 in range(rows):
        for c0 in range(cols):
            if seen[r0][c0] or grid[r0][c0] < hot_temp_c:
                continue
            seen[r0][c0] = True
            queue = deque([(r0, c0)])
            size = 0
            while queue:
                r, c = queue.popleft()
                size += 1
                for nr, nc in ((r - 1, c), (r + 1, c), (r, c - 1), (r, c + 1)):
                    if 0 <= nr < rows and 0 <= nc < cols and not seen[nr][nc] and grid[nr][nc] >= hot_temp_c:
                        seen[nr][nc] = True
                        queue.append((nr, nc))
            best = max(best, size)
    return best


def ir_scan(thermal_map, cfg=DetectorConfig()):
    area = largest_hot_region(thermal_map, cfg.ir_hot_temp_c)
    verdict = Verdict.REJECT if area >= cfg.ir_min_area_cells else Verdict.PASS
    return ScanOutcome(Station.IR, verdict, area)


def measure_weight(p, cfg, rng):
    eps = (2.0 * rng.random() - 1.0) * cfg.weight_noise_frac
    measured = p.true_weight_g * (1.0 + eps)
    declared = p.label.weight_g
    verdict = Verdict.REJECT if abs(measured - declared) / declared > cfg.weight_mismatch_frac else Verdict.PASS
    return ScanOutcome(Station.MEASURE, verdict, measured)
