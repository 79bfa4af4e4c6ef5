"""Confusion matrices, classification reports and report inversion."""

from __future__ import annotations

import csv
import functools
import math
from collections import deque
from dataclasses import dataclass
from decimal import ROUND_HALF_UP, Decimal
from fractions import Fraction
from typing import Iterable, Mapping, Sequence

from .core import CLASSES
from .errors import Ambiguous, EmptyMatrix, Infeasible, UnknownClass, ValidationError

_CENT = Decimal("0.01")


def round2(x) -> float:
    """Round to 2 decimals, ties away from zero, using the shortest repr of ``x``."""
    return float(Decimal(repr(float(x))).quantize(_CENT, rounding=ROUND_HALF_UP))


def _round2_exact(q: Fraction) -> Fraction:
    # same rule on an exact rational (q >= 0)
    return Fraction(math.floor(q * 100 + Fraction(1, 2)), 100)


def _fmt(x):
    return f"{round2(x):.2f}"


@dataclass(frozen=True)
class ConfusionMatrix:
    classes: tuple[str, ...]
    counts: tuple[tuple[int, ...], ...]

    def __post_init__(self):
        object.__setattr__(self, "classes", tuple(self.classes))
        object.__setattr__(self, "counts", tuple(tuple(int(c) for c in row) for row in self.counts))
        n = len(self.classes)
        problems = []
        if len(set(self.classes)) != n:
            problems.append("class names must be unique")
        if len(self.counts) != n or any(len(r) != n for r in self.counts):
            problems.append(f"counts must be {n}x{n}")
        elif any(c < 0 for r in self.counts for c in r):
            problems.append("counts must be non-negative")
        if problems:
            raise ValidationError(problems)

    @classmethod
    def zeros(cls, classes):
        n = len(classes)
        return cls(tuple(classes), tuple((0,) * n for _ in range(n)))

    @property
    def total(self):
        return sum(map(sum, self.counts))

    @property
    def diagonal(self):
        return [self.counts[i][i] for i in range(len(self.classes))]

    @property
    def row_sums(self):
        return [sum(r) for r in self.counts]

    @property
    def col_sums(self):
        return [sum(col) for col in zip(*self.counts)] if self.counts else []

    def pairs(self):
        """Expand into (truth, predicted) pairs in row-major order."""
        out = []
        for i, row in enumerate(self.counts):
            for j, c in enumerate(row):
                out.extend([(self.classes[i], self.classes[j])] * c)
        return out

    def to_dict(self):
        return {"classes": list(self.classes), "counts": [list(r) for r in self.counts]}

    @classmethod
    def from_dict(cls, d):
        return cls(tuple(d["classes"]), tuple(tuple(r) for r in d["counts"]))


def from_pairs(pairs: Iterable[tuple[str, str]], classes: Sequence[str] = CLASSES) -> ConfusionMatrix:
    index = {c: i for i, c in enumerate(classes)}
    n = len(classes)
    counts = [[0] * n for _ in range(n)]
    for truth, pred in pairs:
        truth, pred = getattr(truth, "value", truth), getattr(pred, "value", pred)
        if truth not in index or pred not in index:
            raise UnknownClass(f"pair ({truth}, {pred}) uses a class outside {list(classes)}")
        counts[index[truth]][index[pred]] += 1
    return ConfusionMatrix(tuple(classes), tuple(map(tuple, counts)))


def read_pairs_csv(fh):
    """Read ``truth,predicted`` rows; the header must be exactly that."""
    reader = csv.reader(fh)
    header = next(reader, None)
    if header is None or [h.strip() for h in header] != ["truth", "predicted"]:
        raise ValidationError(["pairs CSV header must be 'truth,predicted'"])
    pairs = []
    for lineno, row in enumerate(reader, start=2):
        if not row:
            continue
        if len(row) != 2:
            raise ValidationError([f"pairs CSV line {lineno} must have 2 columns"])
        pairs.append((row[0].strip(), row[1].strip()))
    return pairs


@dataclass(frozen=True)
class Rates:
    precision: float
    recall: float
    f1: float


@dataclass(frozen=True)
class ClassStats(Rates):
    support: int


@dataclass(frozen=True)
class ClassReport:
    per_class: Mapping[str, ClassStats]
    accuracy: float
    macro_avg: Rates
    weighted_avg: Rates
    total_support: int

    def to_dict(self, rounded=True):
        r = round2 if rounded else float

        def rates(x):
            return {"precision": r(x.precision), "recall": r(x.recall), "f1": r(x.f1)}

        return {
            "classes": {name: {**rates(s), "support": s.support} for name, s in self.per_class.items()},
            "accuracy": r(self.accuracy),
            "macro_avg": rates(self.macro_avg),
            "weighted_avg": rates(self.weighted_avg),
            "total_support": self.total_support,
        }


def _f1(p, r):
    return 2 * p * r / (p + r) if p + r > 0 else 0.0


def classification_report(m: ConfusionMatrix) -> ClassReport:
    total = m.total
    if total == 0:
        raise EmptyMatrix("confusion matrix has no instances")
    tp, rows, cols = m.diagonal, m.row_sums, m.col_sums
    per_class = {}
    for i, name in enumerate(m.classes):
        p = tp[i] / cols[i] if cols[i] else 0.0
        r = tp[i] / rows[i] if rows[i] else 0.0
        per_class[name] = ClassStats(p, r, _f1(p, r), rows[i])
    stats = list(per_class.values())
    n = len(stats)
    macro = Rates(*(sum(getattr(s, k) for s in stats) / n for k in ("precision", "recall", "f1")))
    weighted = Rates(*(sum(getattr(s, k) * s.support for s in stats) / total
                       for k in ("precision", "recall", "f1")))
    return ClassReport(per_class, sum(tp) / total, macro, weighted, total)


def render_report(r: ClassReport, digits_width=10) -> str:
    """Fixed-width text table: class rows, then accuracy, macro and weighted rows."""
    names = list(r.per_class) + ["weighted avg"]
    w = max(len(n) for n in names)
    head = f"{'':>{w}}" + "".join(f"{h:>{digits_width}}" for h in ("precision", "recall", "f1-score", "support"))
    lines = [head, ""]
    for name, s in r.per_class.items():
        lines.append(f"{name:>{w}}" + "".join(f"{_fmt(v):>{digits_width}}" for v in (s.precision, s.recall, s.f1))
                     + f"{s.support:>{digits_width}}")
    lines.append("")
    lines.append(f"{'accuracy':>{w}}" + " " * (2 * digits_width) + f"{_fmt(r.accuracy):>{digits_width}}"
                 + f"{r.total_support:>{digits_width}}")
    for label, a in (("macro avg", r.macro_avg), ("weighted avg", r.weighted_avg)):
        lines.append(f"{label:>{w}}" + "".join(f"{_fmt(v):>{digits_width}}" for v in (a.precision, a.recall, a.f1))
                     + f"{r.total_support:>{digits_width}}")
    return "\n".join(lines) + "\n"


# -- inverse problem ---------------------------------------------------------

@dataclass(frozen=True)
class Reconstruction:
    matrix: ConfusionMatrix
    solutions: tuple[tuple[tuple[int, ...], tuple[int, ...]], ...]  # (diagonal, column sums)

    @property
    def unique(self):
        return len(self.solutions) == 1

    def to_dict(self):
        return {
            **self.matrix.to_dict(),
            "diagonal": self.matrix.diagonal,
            "column_sums": self.matrix.col_sums,
            "unique": self.unique,
            "solutions": [{"diagonal": list(d), "column_sums": list(c)} for d, c in self.solutions],
        }


def _target(x):
    return Fraction(Decimal(repr(float(x))))


def _class_candidates(p, r, s, total):
    """All (TP, column sum) pairs whose re-rounded recall/precision hit (r, p)."""
    p, r = _target(p), _target(r)
    half = Fraction(1, 200)
    lo = max(0, math.floor((r - half) * s) - 1)
    hi = min(s, math.ceil((r + half) * s) + 1)
    out = []
    for tp in range(lo, hi + 1):
        rec = Fraction(tp, s) if s else Fraction(0)
        if _round2_exact(rec) != r:
            continue
        if tp == 0:
            col_lo, col_hi = 0, total
        else:
            col_lo = max(tp, math.floor(tp / (p + half)) - 1)
            col_hi = total if p <= half else min(total, math.ceil(tp / (p - half)) + 1)
        for col in range(col_lo, col_hi + 1):
            prec = Fraction(tp, col) if col else Fraction(0)
            if _round2_exact(prec) == p:
                out.append((tp, col))
    return out


def _fill_off_diagonal(row_res, col_res):
    """Zero-diagonal integer matrix with the given margins, or None.

    North-west-corner sweep skipping diagonal cells; a max-flow pass
    resolves the rare margins the greedy sweep strands.
    """
    n = len(row_res)
    cells = [[0] * n for _ in range(n)]
    rr, cr = list(row_res), list(col_res)
    for i in range(n):
        for j in range(n):
            if i == j or rr[i] == 0:
                continue
            take = min(rr[i], cr[j])
            cells[i][j] += take
            rr[i] -= take
            cr[j] -= take
    if not any(rr) and not any(cr):
        return cells
    return _max_flow_fill(row_res, col_res)


def _max_flow_fill(row_res, col_res):
    n = len(row_res)
    # nodes: 0 source, 1..n rows, n+1..2n cols, 2n+1 sink
    size = 2 * n + 2
    sink = size - 1
    cap = [[0] * size for _ in range(size)]
    for i in range(n):
        cap[0][1 + i] = row_res[i]
        cap[n + 1 + i][sink] = col_res[i]
        for j in range(n):
            if i != j:
                cap[1 + i][n + 1 + j] = row_res[i]
    flow = [[0] * size for _ in range(size)]
    while True:
        parent = [-1] * size
        parent[0] = 0
        queue = deque([0])
        while queue and parent[sink] < 0:
            u = queue.popleft()
            for v in range(size):
                if parent[v] < 0 and cap[u][v] - flow[u][v] > 0:
                    parent[v] = u
                    queue.append(v)
        if parent[sink] < 0:
            break
        bottleneck, v = math.inf, sink
        while v:
            u = parent[v]
            bottleneck = min(bottleneck, cap[u][v] - flow[u][v])
            v = u
        v = sink
        while v:
            u = parent[v]
            flow[u][v] += bottleneck
            flow[v][u] -= bottleneck
            v = u
    if sum(flow[0]) != sum(row_res) or sum(row_res) != sum(col_res):
        return None
    return [[max(0, flow[1 + i][n + 1 + j]) if i != j else 0 for j in range(n)] for i in range(n)]


def reconstruct_matrix(report: Mapping, allow_ambiguous=False) -> Reconstruction:
    """Recover an integer confusion matrix from a rounded report.

    ``report`` uses the JSON shape of :meth:`ClassReport.to_dict`; only
    per-class precision, recall and support plus the accuracy are read.
    Every (diagonal, column sums) solution is enumerated; off-diagonal
    cells are filled canonically since no reported rate depends on them.
    """
    try:
        names = list(report["classes"])
        precision = [report["classes"][c]["precision"] for c in names]
        recall = [report["classes"][c]["recall"] for c in names]
        support = [int(report["classes"][c]["support"]) for c in names]
        accuracy = _target(report["accuracy"])
    except (KeyError, TypeError, ValueError) as exc:
        raise ValidationError([f"report is missing or has a malformed field: {exc}"]) from None
    total = sum(support)
    if total == 0:
        raise EmptyMatrix("report has zero total support")

    cands = [_class_candidates(p, r, s, total) for p, r, s in zip(precision, recall, support)]
    n = len(names)
    # suffix bounds on column sums prune the search
    min_rest = [0] * (n + 1)
    max_rest = [0] * (n + 1)
    for i in range(n - 1, -1, -1):
        min_rest[i] = min_rest[i + 1] + min((c for _, c in cands[i]), default=0)
        max_rest[i] = max_rest[i + 1] + max((c for _, c in cands[i]), default=0)

    found = []

    def search(i, chosen, colsum):
        if colsum + min_rest[i] > total or colsum + max_rest[i] < total:
            return
        if i == n:
            tps = tuple(t for t, _ in chosen)
            cols = tuple(c for _, c in chosen)
            if _round2_exact(Fraction(sum(tps), total)) != accuracy:
                return
            res_r = [s - t for s, t in zip(support, tps)]
            res_c = [c - t for c, t in zip(cols, tps)]
            off = _fill_off_diagonal(res_r, res_c)
            if off is not None:
                found.append((tps, cols, off))
            return
        for tp, col in cands[i]:
            if tp > support[i]:
                continue
            search(i + 1, chosen + [(tp, col)], colsum + col)

    search(0, [], 0)
    if not found:
        raise Infeasible("no integer confusion matrix reproduces the report")
    tps, cols, off = found[0]
    counts = tuple(tuple(tps[i] if i == j else off[i][j] for j in range(n)) for i in range(n))
    result = Reconstruction(ConfusionMatrix(tuple(names), counts), tuple((t, c) for t, c, _ in found))
    if not result.unique and not allow_ambiguous:
        raise Ambiguous(result.solutions)
    return result


# Published per-class report and aggregates the default X-ray channel is built from.
REFERENCE_REPORT = {
    "classes": {
        "BLADE": {"precision": 0.87, "recall": 0.87, "f1": 0.87, "support": 15},
        "GUN": {"precision": 0.78, "recall": 0.82, "f1": 0.80, "support": 17},
        "KNIFE": {"precision": 0.82, "recall": 0.93, "f1": 0.87, "support": 15},
        "SHURIKEN": {"precision": 0.96, "recall": 0.91, "f1": 0.94, "support": 57},
        "NON_DANGEROUS": {"precision": 0.87, "recall": 0.87, "f1": 0.87, "support": 15},
    },
    "accuracy": 0.89,
    "macro_avg": {"precision": 0.86, "recall": 0.88, "f1": 0.87},
    "weighted_avg": {"precision": 0.89, "recall": 0.89, "f1": 0.89},
    "total_support": 119,
}


@functools.lru_cache(maxsize=None)
def table_reconstruction() -> Reconstruction:
    return reconstruct_matrix(REFERENCE_REPORT)
