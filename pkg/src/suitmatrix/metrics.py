"""Trace analyses (ratio histograms, threshold tables, per-operation means) and
replication summaries with 95% confidence intervals."""

from __future__ import annotations

import math
from collections import defaultdict
from dataclasses import dataclass, field
from typing import Iterable, Mapping, Sequence

from .errors import EmptyTrace, InvalidArgument, NoMatchedPairs, TooFewReps
from .timemodel import BASELINE_VM
from .workload import Operation, TraceRecord

METRICS = ("startup_delay_s", "miss_rate", "cost_usd")
Z_95 = 1.96
_OPS = [op.value for op in Operation]


@dataclass(frozen=True)
class RatioPair:
    video_id: str
    gop_index: int
    operation: str
    vm_type: str
    ratio: float


def ratio_pairs(
    trace: Iterable[TraceRecord],
    baseline_vm: str = BASELINE_VM,
    vm_type: str | None = None,
    operation: str | None = None,
) -> tuple[list[RatioPair], int]:
    """Match every non-baseline record with the baseline record of the same
    (video_id, gop_index, operation) and return ``(pairs, skipped)``.

    Repeated measurements of one (key, vm_type) are averaged. Pairs follow the
    first appearance of each (key, vm_type) in the trace.
    """
    sums: dict[tuple, list[float]] = {}
    for r in trace:
        if operation is not None and r.operation.value != operation:
            continue
        k = (r.video_id, r.gop_index, r.operation.value, r.vm_type)
        acc = sums.setdefault(k, [0.0, 0])
        acc[0] += r.transcode_time_s
        acc[1] += 1
    means = {k: s / n for k, (s, n) in sums.items()}
    pairs, skipped = [], 0
    for (vid, gop, op, vm), t in means.items():
        if vm == baseline_vm or (vm_type is not None and vm != vm_type):
            continue
        base = means.get((vid, gop, op, baseline_vm))
        if base is None:
            skipped += 1
            continue
        pairs.append(RatioPair(vid, gop, op, vm, t / base))
    return pairs, skipped


def _moments(values: Sequence[float]) -> tuple[float, float]:
    n = len(values)
    mean = sum(values) / n
    if n < 2:
        return mean, 0.0
    return mean, math.sqrt(sum((v - mean) ** 2 for v in values) / (n - 1))


@dataclass(frozen=True)
class HistogramFit:
    bin_edges: tuple[float, ...]
    counts: tuple[int, ...]
    mean: float
    std: float
    skipped: int = 0

    @property
    def n(self) -> int:
        return sum(self.counts)

    def to_csv(self) -> str:
        out = ["bin_lo,bin_hi,count"]
        for lo, hi, c in zip(self.bin_edges, self.bin_edges[1:], self.counts):
            out.append(f"{lo:.6f},{hi:.6f},{c}")
        out.append(f"#mean={self.mean:.6f},std={self.std:.6f}")
        return "\n".join(out) + "\n"


def histogram(values: Sequence[float], bin_width: float, skipped: int = 0) -> HistogramFit:
    """Fixed-width histogram anchored at ``floor(min / w) * w`` plus sample moments."""
    if not bin_width > 0:
        raise InvalidArgument("bin_width must be > 0")
    if not values:
        raise NoMatchedPairs("no values to histogram")
    lo_idx = math.floor(min(values) / bin_width)
    idx = [max(0, math.floor(v / bin_width) - lo_idx) for v in values]
    counts = [0] * (max(idx) + 1)
    for i in idx:
        counts[i] += 1
    edges = tuple((lo_idx + i) * bin_width for i in range(len(counts) + 1))
    mean, std = _moments(values)
    return HistogramFit(edges, tuple(counts), mean, std, skipped)


def ratio_histogram(
    trace: Iterable[TraceRecord],
    baseline_vm: str = BASELINE_VM,
    bin_width: float = 0.1,
    *,
    vm_type: str | None = None,
    operation: str | None = None,
) -> HistogramFit:
    """Histogram of VM/baseline time ratios; ``vm_type=None`` pools all VM types."""
    pairs, skipped = ratio_pairs(trace, baseline_vm, vm_type, operation)
    if not pairs:
        raise NoMatchedPairs(f"no records pair with baseline {baseline_vm!r}")
    return pairs_histogram(pairs, bin_width, skipped)


def pairs_histogram(pairs: Iterable[RatioPair], bin_width: float = 0.1, skipped: int = 0) -> HistogramFit:
    """Histogram of already matched pairs.

    Useful for synthetic ratios that cannot be written as positive times,
    such as negative draws from an untruncated Normal.
    """
    return histogram([p.ratio for p in pairs], bin_width, skipped)


@dataclass(frozen=True)
class ThresholdTable:
    threshold: float
    strict: bool
    cells: Mapping[tuple[str, str], float]
    vm_types: tuple[str, ...] = ()

    def to_csv(self) -> str:
        vms = self.vm_types or tuple(sorted({vm for vm, _ in self.cells}))
        out = ["vm_type," + ",".join(_OPS)]
        for vm in vms:
            row = [vm]
            for op in _OPS:
                pct = self.cells.get((vm, op))
                row.append("" if pct is None else f"{pct:.2f}")
            out.append(",".join(row))
        return "\n".join(out) + "\n"


def threshold_table(
    trace: Iterable[TraceRecord],
    baseline_vm: str = BASELINE_VM,
    threshold: float = 1.0,
    strict: bool = True,
) -> ThresholdTable:
    """Percent of matched GOPs per (vm_type, operation) with ratio < (or <=) threshold."""
    pairs, _ = ratio_pairs(trace, baseline_vm)
    if not pairs:
        raise NoMatchedPairs(f"no records pair with baseline {baseline_vm!r}")
    hits: dict[tuple[str, str], list[int]] = {}
    vm_order: list[str] = []
    for p in pairs:
        if p.vm_type not in vm_order:
            vm_order.append(p.vm_type)
        cell = hits.setdefault((p.vm_type, p.operation), [0, 0])
        below = p.ratio < threshold if strict else p.ratio <= threshold
        cell[0] += below
        cell[1] += 1
    cells = {k: 100.0 * h / n for k, (h, n) in hits.items()}
    return ThresholdTable(threshold, strict, cells, tuple(vm_order))


def summarize_by_operation(
    trace: Iterable[TraceRecord], per_video: bool = False
) -> dict[tuple, tuple[float, int]]:
    """Mean transcode seconds and record count per (vm_type, operation).

    With ``per_video`` the key is (video_id, vm_type, operation).
    """
    groups: dict[tuple, list[float]] = defaultdict(list)
    for r in trace:
        key = (r.vm_type, r.operation.value)
        groups[(r.video_id, *key) if per_video else key].append(r.transcode_time_s)
    if not groups:
        raise EmptyTrace("trace has no records")
    return {k: (sum(v) / len(v), len(v)) for k, v in groups.items()}


def summary_to_csv(summary: Mapping[tuple, tuple[float, int]], vm_order: Sequence[str] = ()) -> str:
    per_video = len(next(iter(summary))) == 3
    order = {vm: i for i, vm in enumerate(vm_order)}

    def sort_key(k):
        vm, op = k[-2], k[-1]
        head = (k[0],) if per_video else ()
        return (*head, order.get(vm, len(order)), vm, _OPS.index(op))

    header = "video_id,vm_type,operation,mean_s,n" if per_video else "vm_type,operation,mean_s,n"
    out = [header]
    for k in sorted(summary, key=sort_key):
        mean, n = summary[k]
        out.append(",".join(k) + f",{mean:.6f},{n}")
    return "\n".join(out) + "\n"


# ---------------------------------------------------------------------------
# Replication summaries


@dataclass(frozen=True)
class CiSummary:
    metric: str
    mean: float
    ci_half_width: float
    n_reps: int

    def csv_row(self) -> str:
        return f"{self.metric},{self.mean:.6f},{self.ci_half_width:.6f},{self.n_reps}"


SUMMARY_HEADER = "metric,mean,ci_half_width,n_reps"


def metric_value(result, metric: str) -> float:
    if metric == "startup_delay_s":
        return result.mean_startup_delay_s
    if metric == "miss_rate":
        return result.miss_rate
    if metric == "cost_usd":
        return result.total_cost_usd
    raise InvalidArgument(f"unknown metric {metric!r}; choose from {METRICS}")


def aggregate_values(values: Sequence[float], metric: str) -> CiSummary:
    """Mean and normal-approximation 95% half-width ``1.96 * s / sqrt(n)``."""
    if metric not in METRICS:
        raise InvalidArgument(f"unknown metric {metric!r}; choose from {METRICS}")
    n = len(values)
    if n < 2:
        raise TooFewReps(f"need at least 2 replications, got {n}")
    mean, s = _moments(list(values))
    return CiSummary(metric, mean, Z_95 * s / math.sqrt(n), n)


def aggregate(replications: Sequence, metric: str) -> CiSummary:
    return aggregate_values([metric_value(r, metric) for r in replications], metric)


def summary_csv(replications: Sequence) -> str:
    rows = [SUMMARY_HEADER] + [aggregate(replications, m).csv_row() for m in METRICS]
    return "\n".join(rows) + "\n"
