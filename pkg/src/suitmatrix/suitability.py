"""Suitability scoring of VM types per GOP task.

A user performance preference ``p`` is mapped through a logistic membership
function to a tolerated gap ``delta_th`` (seconds). Each VM type's weight
multiplies a performance factor, the distance of its gap to the gpu baseline
from ``delta_th`` relative to the summed gaps, by a cost factor
``1 - phi_i / sum(phi)``. Weights are min-max normalized per task.

The naive baseline scores a weighted sum of min-max normalized time and cost.
"""

from __future__ import annotations

import math
from dataclasses import dataclass, field
from typing import Sequence

import numpy as np

from .errors import InvalidArgument, PrefOutOfRange, UnknownBaseline
from .timemodel import BASELINE_VM, EtcMatrix
from .workload import VmTypeSpec

GAP_SUM_EPS = 1e-12


@dataclass(frozen=True)
class TradeoffPreference:
    p: float
    c: float | None = None

    def __post_init__(self):
        if not 0 < self.p < 1:
            raise PrefOutOfRange(f"performance preference must lie in (0, 1), got {self.p}")
        if self.c is None:
            object.__setattr__(self, "c", 1.0 - self.p)
        elif abs(self.p + self.c - 1.0) > 1e-9:
            raise PrefOutOfRange(f"p + c must equal 1, got {self.p} + {self.c}")


@dataclass(frozen=True)
class FuzzyParams:
    alpha: float = 1.0
    beta: float = 5.0

    def __post_init__(self):
        if not self.alpha > 0:
            raise InvalidArgument(f"alpha must be > 0, got {self.alpha}")


@dataclass(frozen=True)
class NaiveParams:
    k: float = 0.5

    def __post_init__(self):
        if not 0 <= self.k <= 1:
            raise InvalidArgument(f"k must lie in [0, 1], got {self.k}")


@dataclass(frozen=True)
class SuitabilityRow:
    task_id: int
    delta_th: float
    gaps: np.ndarray
    phis: np.ndarray
    weights: np.ndarray
    scores: np.ndarray


@dataclass(frozen=True)
class SuitabilityMatrix:
    rows: tuple[SuitabilityRow, ...]
    vm_types: tuple[str, ...]
    delta_th: float | None = None

    @property
    def scores(self) -> np.ndarray:
        if not self.rows:
            return np.empty((0, len(self.vm_types)))
        return np.vstack([r.scores for r in self.rows])

    def to_csv(self) -> str:
        out = ["task_id,delta_th," + ",".join(self.vm_types)]
        for r in self.rows:
            out.append(
                f"{r.task_id},{r.delta_th:.4f}," + ",".join(f"{s:.4f}" for s in r.scores)
            )
        return "\n".join(out) + "\n"


def _pref_p(pref) -> float:
    p = pref.p if isinstance(pref, TradeoffPreference) else float(pref)
    if not 0 < p < 1:
        raise PrefOutOfRange(f"performance preference must lie in (0, 1), got {p}")
    return p


def threshold_gap(pref, params: FuzzyParams = FuzzyParams()) -> float:
    """Tolerated performance gap (s) for a performance preference ``p``.

    ``ln((1 - p) / p) / alpha + beta``; decreasing in ``p``.
    """
    p = _pref_p(pref)
    return math.log((1.0 - p) / p) / params.alpha + params.beta


def threshold_gap_from_cost(c: float, params: FuzzyParams = FuzzyParams()) -> float:
    """Cost-preference form ``ln(c / (1 - c)) / alpha - beta``, taken literally.

    Under ``p + c = 1`` this disagrees with :func:`threshold_gap` (it is
    negative for almost every ``c``); kept for comparison only.
    """
    if not 0 < c < 1:
        raise PrefOutOfRange(f"cost preference must lie in (0, 1), got {c}")
    return math.log(c / (1.0 - c)) / params.alpha - params.beta


def perf_gaps(times, vm_types: Sequence[str], baseline: str = BASELINE_VM) -> np.ndarray:
    """Per-VM gap to the baseline, ``t_i - t_baseline`` in seconds (may be negative)."""
    try:
        b = list(vm_types).index(baseline)
    except ValueError:
        raise UnknownBaseline(f"baseline {baseline!r} not among {list(vm_types)}") from None
    times = np.asarray(times, dtype=float)
    return times - times[b]


def _rates(catalog: Sequence[VmTypeSpec], vm_types: Sequence[str]) -> np.ndarray:
    by_name = {vm.name: vm.hourly_cost for vm in catalog}
    try:
        return np.array([by_name[name] for name in vm_types], dtype=float)
    except KeyError as exc:
        raise InvalidArgument(f"VM type {exc.args[0]!r} missing from catalog") from None


def task_costs(times, catalog: Sequence[VmTypeSpec], vm_types: Sequence[str] | None = None) -> np.ndarray:
    """Dollar cost per VM of one task, prorating the hourly rate per second."""
    vm_types = vm_types or [vm.name for vm in catalog]
    return np.asarray(times, dtype=float) * _rates(catalog, vm_types) / 3600.0


def _weights(times, catalog, delta_th, vm_types, baseline):
    gaps = perf_gaps(times, vm_types, baseline)
    phis = task_costs(times, catalog, vm_types)
    gap_sum = gaps.sum()
    if gap_sum <= GAP_SUM_EPS:
        # identical (or baseline-dominating) times carry no usable gap scale
        perf = np.ones_like(gaps)
    else:
        perf = (delta_th - gaps) / gap_sum
    cost = 1.0 - phis / phis.sum()
    return gaps, phis, perf * cost


def weight_row(
    times,
    catalog: Sequence[VmTypeSpec],
    delta_th: float,
    vm_types: Sequence[str] | None = None,
    baseline: str = BASELINE_VM,
) -> np.ndarray:
    """Per-VM weight combining the performance and cost factors."""
    vm_types = vm_types or [vm.name for vm in catalog]
    return _weights(times, catalog, delta_th, vm_types, baseline)[2]


def normalize_row(weights, literal: bool = False) -> np.ndarray:
    """Min-max normalize weights to [0, 1]; all-equal weights map to 1.

    ``literal=True`` subtracts the maximum instead of the minimum, which puts
    scores in [-1, 0].
    """
    w = np.asarray(weights, dtype=float)
    if w.size == 0:
        raise InvalidArgument("cannot normalize an empty row")
    lo, hi = w.min(), w.max()
    if hi == lo:
        return np.ones_like(w)
    return (w - (hi if literal else lo)) / (hi - lo)


def suitability_row(
    task_id: int,
    times,
    catalog: Sequence[VmTypeSpec],
    delta_th: float,
    vm_types: Sequence[str] | None = None,
    baseline: str = BASELINE_VM,
    literal: bool = False,
) -> SuitabilityRow:
    vm_types = vm_types or [vm.name for vm in catalog]
    gaps, phis, w = _weights(times, catalog, delta_th, vm_types, baseline)
    return SuitabilityRow(task_id, delta_th, gaps, phis, w, normalize_row(w, literal))


def suitability_matrix(
    etc: EtcMatrix,
    catalog: Sequence[VmTypeSpec],
    pref=None,
    params: FuzzyParams = FuzzyParams(),
    *,
    delta_th: float | None = None,
    baseline: str = BASELINE_VM,
    literal: bool = False,
) -> SuitabilityMatrix:
    """Suitability rows for every ETC task.

    ``delta_th`` may be given directly; otherwise it is derived from ``pref``.
    """
    if delta_th is None:
        if pref is None:
            raise InvalidArgument("either pref or delta_th is required")
        delta_th = threshold_gap(pref, params)
    rows = tuple(
        suitability_row(tid, row, catalog, delta_th, etc.vm_types, baseline, literal)
        for tid, row in zip(etc.task_ids, etc.times_s)
    )
    return SuitabilityMatrix(rows, tuple(etc.vm_types), delta_th)


def _minmax(x: np.ndarray) -> np.ndarray:
    lo, hi = x.min(), x.max()
    if hi == lo:
        return np.zeros_like(x)
    return (x - lo) / (hi - lo)


def naive_row(
    times,
    catalog: Sequence[VmTypeSpec],
    params: NaiveParams = NaiveParams(),
    vm_types: Sequence[str] | None = None,
) -> np.ndarray:
    """Naive time/cost blend, inverted so that 1 is the best VM."""
    vm_types = vm_types or [vm.name for vm in catalog]
    times = np.asarray(times, dtype=float)
    t_hat = _minmax(times)
    c_hat = _minmax(task_costs(times, catalog, vm_types))
    return 1.0 - (params.k * t_hat + (1.0 - params.k) * c_hat)


def naive_matrix(
    etc: EtcMatrix, catalog: Sequence[VmTypeSpec], params: NaiveParams = NaiveParams()
) -> np.ndarray:
    if not etc.task_ids:
        return np.empty((0, len(etc.vm_types)))
    return np.vstack([naive_row(row, catalog, params, etc.vm_types) for row in etc.times_s])


def naive_to_csv(etc: EtcMatrix, scores: np.ndarray) -> str:
    out = ["task_id,delta_th," + ",".join(etc.vm_types)]
    for tid, row in zip(etc.task_ids, scores):
        out.append(f"{tid},," + ",".join(f"{s:.4f}" for s in row))
    return "\n".join(out) + "\n"
