"""Quadratic transcoding-time regression, VM performance ratios and ETC matrices."""

from __future__ import annotations

from dataclasses import dataclass
from typing import Iterable, Mapping, Sequence, TextIO

import numpy as np

from . import rng as _rng
from .errors import (
    BadColumnCount,
    Degenerate,
    InvalidArgument,
    MissingDistribution,
    MissingHeader,
    NonPositiveValue,
    SingularSystem,
    TooFewPoints,
    UnknownBaseline,
    ZeroVariance,
)
from .workload import TraceRecord, VmTypeSpec, Workload, _real, _int

PREDICTORS = ("frame_count", "gop_size_mb")
T_FLOOR_S = 0.05
RATIO_FLOOR = 0.1
BASELINE_VM = "gpu"


@dataclass(frozen=True)
class QuadraticFit:
    a: float
    b: float
    c: float
    predictor: str = "frame_count"
    r2: float | None = None

    def __post_init__(self):
        if self.predictor not in PREDICTORS:
            raise InvalidArgument(f"unknown predictor {self.predictor!r}")

    def __call__(self, x):
        return self.a + self.b * x + self.c * x * x

    def time(self, x, t_floor: float = T_FLOOR_S):
        """Predicted seconds, clamped below at ``t_floor``."""
        return np.maximum(self(x), t_floor) if isinstance(x, np.ndarray) else max(self(x), t_floor)

    def to_text(self) -> str:
        r2 = "" if self.r2 is None else repr(self.r2)
        return (
            f"a={self.a!r}\nb={self.b!r}\nc={self.c!r}\n"
            f"predictor={self.predictor}\nr2={r2}\n"
        )

    @classmethod
    def from_text(cls, text: str) -> "QuadraticFit":
        kv = dict(
            line.split("=", 1) for line in text.splitlines() if line.strip() and "=" in line
        )
        try:
            r2 = kv.get("r2", "").strip()
            return cls(
                float(kv["a"]),
                float(kv["b"]),
                float(kv["c"]),
                kv.get("predictor", "frame_count").strip(),
                float(r2) if r2 else None,
            )
        except KeyError as exc:
            raise InvalidArgument(f"fit file lacks key {exc.args[0]!r}") from None


# Invented default over frame_count: a 250-frame GOP costs about 3.55 s on gpu.
DEFAULT_BASE_FIT = QuadraticFit(0.30, 0.012, 4.0e-6, "frame_count")


def _solve3(m: list[list[float]], rhs: list[float]) -> list[float]:
    """Gaussian elimination with partial pivoting on a 3x3 system."""
    a = [row[:] + [v] for row, v in zip(m, rhs)]
    n = 3
    for col in range(n):
        piv = max(range(col, n), key=lambda r: abs(a[r][col]))
        if abs(a[piv][col]) < 1e-12:
            raise SingularSystem(f"pivot {a[piv][col]:.3e} below 1e-12 in column {col}")
        a[col], a[piv] = a[piv], a[col]
        for r in range(col + 1, n):
            f = a[r][col] / a[col][col]
            for k in range(col, n + 1):
                a[r][k] -= f * a[col][k]
    x = [0.0] * n
    for r in range(n - 1, -1, -1):
        x[r] = (a[r][n] - sum(a[r][k] * x[k] for k in range(r + 1, n))) / a[r][r]
    return x


def fit_quadratic(points: Iterable[tuple[float, float]], predictor: str = "frame_count") -> QuadraticFit:
    """Least-squares fit of ``t = a + b*x + c*x^2``.

    The predictor is scaled to ``u = x / max|x|`` and the normal equations are
    averaged over the sample before elimination, so the 1e-12 pivot test is
    scale free. Coefficients are mapped back to the unscaled predictor.
    """
    pts = [(float(x), float(t)) for x, t in points]
    if len(pts) < 3:
        raise TooFewPoints(f"need at least 3 points, got {len(pts)}")
    if len({x for x, _ in pts}) < 3:
        raise SingularSystem("need at least 3 distinct x values")
    scale = max(abs(x) for x, _ in pts)
    n = len(pts)
    s = [0.0] * 5  # mean of u^k
    r = [0.0] * 3  # mean of t * u^k
    for x, t in pts:
        u = x / scale
        p = 1.0
        for k in range(5):
            s[k] += p / n
            if k < 3:
                r[k] += t * p / n
            p *= u
    m = [[s[i + j] for j in range(3)] for i in range(3)]
    a, b, c = _solve3(m, r)
    fit = QuadraticFit(a, b / scale, c / (scale * scale), predictor)
    try:
        r2 = r_squared(fit, pts)
    except ZeroVariance:
        r2 = 1.0 if all(abs(fit(x) - t) <= 1e-9 * max(1.0, abs(t)) for x, t in pts) else None
    return QuadraticFit(fit.a, fit.b, fit.c, predictor, r2)


def r_squared(fit: QuadraticFit, points: Iterable[tuple[float, float]]) -> float:
    """Coefficient of determination; negative for fits worse than the mean."""
    pts = [(float(x), float(t)) for x, t in points]
    if not pts:
        raise TooFewPoints("r_squared needs at least one point")
    mean = sum(t for _, t in pts) / len(pts)
    ss_tot = sum((t - mean) ** 2 for _, t in pts)
    if ss_tot == 0.0:
        raise ZeroVariance("all observed times are equal")
    ss_res = sum((t - fit(x)) ** 2 for x, t in pts)
    return 1.0 - ss_res / ss_tot


def trace_points(
    records: Iterable[TraceRecord],
    predictor: str = "frame_count",
    vm_type: str = BASELINE_VM,
    operation: str | None = None,
) -> list[tuple[float, float]]:
    return [
        (float(getattr(r, predictor)), r.transcode_time_s)
        for r in records
        if r.vm_type == vm_type and (operation is None or r.operation.value == operation)
    ]


# ---------------------------------------------------------------------------
# Performance ratios


@dataclass(frozen=True)
class RatioDistribution:
    vm_type: str
    mean: float
    std: float
    floor: float = RATIO_FLOOR

    def __post_init__(self):
        if not self.std > 0:
            raise InvalidArgument(f"{self.vm_type}: std must be > 0")
        if not 0 < self.floor < self.mean:
            raise InvalidArgument(f"{self.vm_type}: need 0 < floor < mean")


# Normal fits of (VM time / gpu time) over the benchmark GOPs.
DEFAULT_RATIOS = {
    "general": RatioDistribution("general", 2.781, 1.524),
    "cpu_opt": RatioDistribution("cpu_opt", 1.263, 0.508),
    "mem_opt": RatioDistribution("mem_opt", 1.608, 0.652),
}

MAX_ATTEMPTS = 1000


def sample_ratio(dist: RatioDistribution, gen: np.random.Generator, truncate: bool = True) -> float:
    """One Normal draw, resampled until it reaches ``dist.floor``."""
    for _ in range(MAX_ATTEMPTS):
        value = float(gen.normal(dist.mean, dist.std))
        if not truncate or value >= dist.floor:
            return value
    raise Degenerate(f"{dist.vm_type}: no draw above floor in {MAX_ATTEMPTS} attempts")


def sample_ratios(
    dist: RatioDistribution, gen: np.random.Generator, size: int, truncate: bool = True
) -> np.ndarray:
    """Vectorized :func:`sample_ratio`; rejected entries are redrawn in rounds.

    Consumes the stream differently from repeated scalar calls.
    """
    out = gen.normal(dist.mean, dist.std, size=size)
    if not truncate:
        return out
    for _ in range(MAX_ATTEMPTS):
        bad = out < dist.floor
        n_bad = int(bad.sum())
        if not n_bad:
            return out
        out[bad] = gen.normal(dist.mean, dist.std, size=n_bad)
    raise Degenerate(f"{dist.vm_type}: draws stuck below floor after {MAX_ATTEMPTS} rounds")


# ---------------------------------------------------------------------------
# ETC matrices


@dataclass(frozen=True, eq=False)
class EtcMatrix:
    task_ids: tuple[int, ...]
    vm_types: tuple[str, ...]
    times_s: np.ndarray

    def __post_init__(self):
        times = np.asarray(self.times_s, dtype=float).reshape(len(self.task_ids), len(self.vm_types))
        if times.size and not (times > 0).all():
            raise InvalidArgument("ETC entries must be > 0")
        if len(set(self.task_ids)) != len(self.task_ids):
            raise InvalidArgument("duplicate task ids in ETC matrix")
        object.__setattr__(self, "times_s", times)
        object.__setattr__(self, "_row", {t: i for i, t in enumerate(self.task_ids)})

    def __eq__(self, other):
        if not isinstance(other, EtcMatrix):
            return NotImplemented
        return (
            self.task_ids == other.task_ids
            and self.vm_types == other.vm_types
            and np.array_equal(self.times_s, other.times_s)
        )

    def row_index(self, task_id: int) -> int:
        return self._row[task_id]

    def row(self, task_id: int) -> np.ndarray:
        return self.times_s[self._row[task_id]]

    def time(self, task_id: int, vm_type: str) -> float:
        return float(self.times_s[self._row[task_id], self.vm_types.index(vm_type)])

    def column(self, vm_type: str) -> np.ndarray:
        return self.times_s[:, self.vm_types.index(vm_type)]

    def to_csv(self) -> str:
        out = ["task_id," + ",".join(self.vm_types)]
        for tid, row in zip(self.task_ids, self.times_s):
            out.append(f"{tid}," + ",".join(f"{v:.6f}" for v in row))
        return "\n".join(out) + "\n"

    @classmethod
    def from_csv(cls, source: str | TextIO) -> "EtcMatrix":
        text = source if isinstance(source, str) else source.read()
        lines = text.split("\n")
        if lines and lines[-1] == "":
            lines.pop()
        if not lines or not lines[0].startswith("task_id,"):
            raise MissingHeader("ETC CSV must start with 'task_id,<vm types>'")
        vm_types = tuple(lines[0].split(",")[1:])
        ids, rows = [], []
        for lineno, line in enumerate(lines[1:], start=2):
            f = line.split(",")
            if len(f) != len(vm_types) + 1:
                raise BadColumnCount(lineno, None, f"expected {len(vm_types) + 1} fields")
            ids.append(_int(f[0], lineno, "task_id"))
            row = []
            for name, v in zip(vm_types, f[1:]):
                val = _real(v, lineno, name)
                if not val > 0:
                    raise NonPositiveValue(lineno, name, f"must be > 0, got {val}")
                row.append(val)
            rows.append(row)
        return cls(tuple(ids), vm_types, np.array(rows, dtype=float).reshape(len(ids), len(vm_types)))


def load_etc(path) -> EtcMatrix:
    with open(path, encoding="utf-8", newline="") as fh:
        return EtcMatrix.from_csv(fh)


def build_etc(
    workload: Workload,
    base_fit: QuadraticFit = DEFAULT_BASE_FIT,
    ratio_dists: Mapping[str, RatioDistribution] = DEFAULT_RATIOS,
    catalog: Sequence[VmTypeSpec] | None = None,
    seed: int = 0,
    *,
    baseline: str = BASELINE_VM,
    t_floor: float = T_FLOOR_S,
) -> EtcMatrix:
    """ETC matrix: baseline time from ``base_fit``, other VMs scaled by a sampled ratio.

    The ratio for ``(task, vm)`` comes from the stream keyed by
    ``(seed, task_id, catalog index of vm)``, so each entry is independent of
    task order.
    """
    from .workload import default_vm_catalog

    catalog = list(catalog or default_vm_catalog())
    names = tuple(vm.name for vm in catalog)
    if baseline not in names:
        raise UnknownBaseline(f"baseline {baseline!r} not in catalog {names}")
    for name in names:
        if name != baseline and name not in ratio_dists:
            raise MissingDistribution(name)

    base_col = names.index(baseline)
    times = np.empty((len(workload.tasks), len(names)))
    for i, task in enumerate(workload.tasks):
        t_base = base_fit.time(float(getattr(task, base_fit.predictor)), t_floor)
        for j, name in enumerate(names):
            if j == base_col:
                times[i, j] = t_base
            else:
                ratio = sample_ratio(ratio_dists[name], _rng.stream(seed, task.task_id, j))
                times[i, j] = t_base * ratio
    return EtcMatrix(tuple(t.task_id for t in workload.tasks), names, times)
