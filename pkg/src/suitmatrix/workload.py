"""Task and VM domain model, trace/workload CSV I/O and workload synthesis."""

from __future__ import annotations

import math
from dataclasses import dataclass
from enum import Enum
from typing import Iterable, Mapping, Sequence, TextIO

import numpy as np

from . import rng as _rng
from .errors import (
    BadColumnCount,
    BadMix,
    BadValue,
    InvalidArgument,
    MissingHeader,
    NonPositiveValue,
    UnknownEnum,
)


class ContentType(str, Enum):
    SLOW = "slow"
    FAST = "fast"
    MIXED = "mixed"

    @classmethod
    def parse(cls, text: str) -> "ContentType":
        try:
            return cls(text)
        except ValueError:
            raise ValueError(f"unknown content type {text!r}") from None


class Operation(str, Enum):
    CODEC = "codec"
    BITRATE = "bitrate"
    FRAMERATE = "framerate"
    RESOLUTION = "resolution"


@dataclass(frozen=True)
class VmTypeSpec:
    name: str
    vcpu: int
    memory_gb: float
    hourly_cost: float

    def __post_init__(self):
        if not self.name:
            raise InvalidArgument("VM type name must be non-empty")
        if self.vcpu < 1:
            raise InvalidArgument(f"{self.name}: vcpu must be >= 1")
        if not self.memory_gb > 0:
            raise InvalidArgument(f"{self.name}: memory_gb must be > 0")
        if not self.hourly_cost > 0:
            raise InvalidArgument(f"{self.name}: hourly_cost must be > 0")


def default_vm_catalog() -> list[VmTypeSpec]:
    """The four EC2 representatives (m4.large, c4.xlarge, r3.xlarge, g2.2xlarge)."""
    return [
        VmTypeSpec("general", 2, 8.0, 0.15),
        VmTypeSpec("cpu_opt", 4, 7.5, 0.20),
        VmTypeSpec("mem_opt", 4, 30.5, 0.33),
        VmTypeSpec("gpu", 8, 15.0, 0.65),
    ]


def check_catalog(catalog: Sequence[VmTypeSpec]) -> None:
    names = [vm.name for vm in catalog]
    if not names:
        raise InvalidArgument("catalog is empty")
    if len(set(names)) != len(names):
        raise InvalidArgument(f"duplicate VM type names in catalog: {names}")


@dataclass(frozen=True)
class GopTask:
    task_id: int
    video_id: str
    gop_index: int
    gop_size_mb: float
    frame_count: int
    fps: float
    content_type: ContentType
    arrival_time_s: float

    def __post_init__(self):
        if self.gop_index < 0:
            raise InvalidArgument(f"task {self.task_id}: gop_index must be >= 0")
        if not self.gop_size_mb > 0:
            raise InvalidArgument(f"task {self.task_id}: gop_size_mb must be > 0")
        if self.frame_count < 1:
            raise InvalidArgument(f"task {self.task_id}: frame_count must be >= 1")
        if not self.fps > 0:
            raise InvalidArgument(f"task {self.task_id}: fps must be > 0")
        if not self.arrival_time_s >= 0:
            raise InvalidArgument(f"task {self.task_id}: arrival_time_s must be >= 0")


@dataclass(frozen=True)
class TraceRecord:
    video_id: str
    gop_index: int
    operation: Operation
    vm_type: str
    content_type: ContentType
    gop_size_mb: float
    frame_count: int
    transcode_time_s: float


@dataclass(frozen=True)
class Workload:
    tasks: tuple[GopTask, ...]
    videos: Mapping[str, tuple[float, tuple[GopTask, ...]]]
    window_s: float

    @classmethod
    def from_tasks(cls, tasks: Iterable[GopTask], window_s: float) -> "Workload":
        """Sort tasks, group them into videos and check the workload invariants."""
        if not window_s > 0:
            raise InvalidArgument("window_s must be > 0")
        ordered = tuple(sorted(tasks, key=lambda t: (t.arrival_time_s, t.task_id)))
        if len({t.task_id for t in ordered}) != len(ordered):
            raise InvalidArgument("task_id values must be unique")
        grouped: dict[str, list[GopTask]] = {}
        for t in ordered:
            if t.arrival_time_s > window_s:
                raise InvalidArgument(
                    f"task {t.task_id} arrives at {t.arrival_time_s} outside window {window_s}"
                )
            grouped.setdefault(t.video_id, []).append(t)
        videos = {}
        for vid in sorted(grouped):
            gops = sorted(grouped[vid], key=lambda t: t.gop_index)
            if [g.gop_index for g in gops] != list(range(len(gops))):
                raise InvalidArgument(f"video {vid}: gop indices must be 0..k-1 without repeats")
            if len({g.fps for g in gops}) != 1:
                raise InvalidArgument(f"video {vid}: fps differs between GOPs")
            videos[vid] = (gops[0].fps, tuple(gops))
        return cls(ordered, videos, float(window_s))


# ---------------------------------------------------------------------------
# CSV formats

TRACE_HEADER = (
    "video_id,gop_index,operation,vm_type,content_type,gop_size_mb,frame_count,transcode_time_s"
)
WORKLOAD_HEADER = (
    "task_id,video_id,gop_index,gop_size_mb,frame_count,fps,content_type,arrival_time_s"
)


def fmt_real(x: float) -> str:
    """Format a real with at most 6 decimals and no trailing zeros."""
    s = f"{x:.6f}".rstrip("0")
    return s + "0" if s.endswith(".") else s


def _read_text(source: str | TextIO) -> str:
    return source if isinstance(source, str) else source.read()


def _data_lines(text: str, header: str) -> list[tuple[int, list[str]]]:
    lines = text.split("\n")
    if lines and lines[-1] == "":
        lines.pop()
    if not lines or lines[0] != header:
        got = lines[0] if lines else "<empty input>"
        raise MissingHeader(f"expected header {header!r}, got {got!r}")
    n_cols = header.count(",") + 1
    rows = []
    for lineno, line in enumerate(lines[1:], start=2):
        fields = line.split(",")
        if len(fields) != n_cols:
            raise BadColumnCount(lineno, None, f"expected {n_cols} fields, got {len(fields)}")
        rows.append((lineno, fields))
    return rows


def _ident(text: str, line: int, column: str) -> str:
    if not text or text != text.strip():
        raise BadValue(line, column, f"invalid identifier {text!r}")
    return text


def _int(text: str, line: int, column: str) -> int:
    try:
        return int(text)
    except ValueError:
        raise BadValue(line, column, f"not an integer: {text!r}") from None


def _real(text: str, line: int, column: str) -> float:
    try:
        value = float(text)
    except ValueError:
        raise BadValue(line, column, f"not a number: {text!r}") from None
    if not math.isfinite(value):
        raise BadValue(line, column, f"not finite: {text!r}")
    return value


def _positive(value, line: int, column: str):
    if not value > 0:
        raise NonPositiveValue(line, column, f"must be > 0, got {value}")
    return value


def _enum(enum_cls, text: str, line: int, column: str):
    try:
        return enum_cls(text)
    except ValueError:
        raise UnknownEnum(line, column, f"unknown value {text!r}") from None


def parse_trace(
    source: str | TextIO, catalog: Sequence[VmTypeSpec] | None = None
) -> list[TraceRecord]:
    """Parse a benchmark trace CSV into records, in file order.

    ``vm_type`` values are checked against ``catalog`` (default catalog when
    omitted). Errors carry the 1-based line number of the first bad row.
    """
    names = {vm.name for vm in (catalog or default_vm_catalog())}
    records = []
    for line, f in _data_lines(_read_text(source), TRACE_HEADER):
        gop_index = _int(f[1], line, "gop_index")
        if gop_index < 0:
            raise BadValue(line, "gop_index", f"must be >= 0, got {gop_index}")
        if f[3] not in names:
            raise UnknownEnum(line, "vm_type", f"unknown VM type {f[3]!r}")
        records.append(
            TraceRecord(
                video_id=_ident(f[0], line, "video_id"),
                gop_index=gop_index,
                operation=_enum(Operation, f[2], line, "operation"),
                vm_type=f[3],
                content_type=_enum(ContentType, f[4], line, "content_type"),
                gop_size_mb=_positive(_real(f[5], line, "gop_size_mb"), line, "gop_size_mb"),
                frame_count=_positive(_int(f[6], line, "frame_count"), line, "frame_count"),
                transcode_time_s=_positive(
                    _real(f[7], line, "transcode_time_s"), line, "transcode_time_s"
                ),
            )
        )
    return records


def serialize_trace(records: Iterable[TraceRecord]) -> str:
    out = [TRACE_HEADER]
    for r in records:
        out.append(
            ",".join(
                [
                    r.video_id,
                    str(r.gop_index),
                    r.operation.value,
                    r.vm_type,
                    r.content_type.value,
                    fmt_real(r.gop_size_mb),
                    str(r.frame_count),
                    fmt_real(r.transcode_time_s),
                ]
            )
        )
    return "\n".join(out) + "\n"


def load_trace(path, catalog: Sequence[VmTypeSpec] | None = None) -> list[TraceRecord]:
    with open(path, encoding="utf-8", newline="") as fh:
        return parse_trace(fh, catalog)


def sample_trace_text() -> str:
    """The bundled 20-row sample trace."""
    from importlib.resources import files

    return files("suitmatrix").joinpath("data/sample_trace.csv").read_text(encoding="utf-8")


def serialize_workload(workload: Workload) -> str:
    out = [WORKLOAD_HEADER]
    for t in workload.tasks:
        out.append(
            ",".join(
                [
                    str(t.task_id),
                    t.video_id,
                    str(t.gop_index),
                    fmt_real(t.gop_size_mb),
                    str(t.frame_count),
                    fmt_real(t.fps),
                    t.content_type.value,
                    fmt_real(t.arrival_time_s),
                ]
            )
        )
    return "\n".join(out) + "\n"


def parse_workload(source: str | TextIO, window_s: float | None = None) -> Workload:
    """Parse a workload CSV. The window defaults to the latest arrival (or 1 s)."""
    tasks = []
    for line, f in _data_lines(_read_text(source), WORKLOAD_HEADER):
        try:
            tasks.append(
                GopTask(
                    task_id=_int(f[0], line, "task_id"),
                    video_id=_ident(f[1], line, "video_id"),
                    gop_index=_int(f[2], line, "gop_index"),
                    gop_size_mb=_positive(_real(f[3], line, "gop_size_mb"), line, "gop_size_mb"),
                    frame_count=_positive(_int(f[4], line, "frame_count"), line, "frame_count"),
                    fps=_positive(_real(f[5], line, "fps"), line, "fps"),
                    content_type=_enum(ContentType, f[6], line, "content_type"),
                    arrival_time_s=_real(f[7], line, "arrival_time_s"),
                )
            )
        except InvalidArgument as exc:
            raise BadValue(line, None, str(exc)) from None
    if window_s is None:
        window_s = max((t.arrival_time_s for t in tasks), default=0.0) or 1.0
    return Workload.from_tasks(tasks, window_s)


def load_workload(path, window_s: float | None = None) -> Workload:
    with open(path, encoding="utf-8", newline="") as fh:
        return parse_workload(fh, window_s)


# ---------------------------------------------------------------------------
# Synthesis


@dataclass(frozen=True)
class ContentProfiles:
    """Lognormal GOP shape parameters per content type.

    Medians are in frames (frame count) and MB/frame (size factor); sigmas are
    the log-space standard deviations.
    """

    slow_frame_median: float = 240.0
    fast_frame_median: float = 36.0
    frame_sigma: float = 0.35
    mb_per_frame_median: float = 0.010
    mb_per_frame_sigma: float = 0.3
    mixed_slow_prob: float = 0.5


def parse_mix(text: str) -> dict[ContentType, float]:
    """Parse ``"slow=0.5,fast=0.5"`` into a content mix."""
    mix: dict[ContentType, float] = {}
    for part in filter(None, (p.strip() for p in text.split(","))):
        key, sep, value = part.partition("=")
        if not sep:
            raise BadMix(f"expected type=fraction, got {part!r}")
        try:
            mix[ContentType(key.strip())] = float(value)
        except ValueError:
            raise BadMix(f"bad mix entry {part!r}") from None
    return mix


def _check_mix(mix: Mapping) -> list[tuple[ContentType, float]]:
    items = []
    for key, frac in mix.items():
        try:
            ct = ContentType(key)
        except ValueError:
            raise BadMix(f"unknown content type {key!r}") from None
        frac = float(frac)
        if not (frac >= 0 and math.isfinite(frac)):
            raise BadMix(f"fraction for {ct.value} must be >= 0, got {frac}")
        items.append((ct, frac))
    if not items or abs(sum(f for _, f in items) - 1.0) > 1e-9:
        raise BadMix(f"fractions must sum to 1, got {sum(f for _, f in items)}")
    # canonical order so the draw does not depend on dict ordering
    order = list(ContentType)
    return sorted(items, key=lambda kv: order.index(kv[0]))


def generate_workload(
    n_tasks: int,
    mix: Mapping,
    window_s: float,
    seed: int,
    *,
    gops_per_video: int = 1,
    fps: float = 30.0,
    arrival: str = "uniform",
    profiles: ContentProfiles = ContentProfiles(),
) -> Workload:
    """Synthesize a workload of ``n_tasks`` GOPs.

    Tasks are grouped into videos of ``gops_per_video`` consecutive GOPs (the
    last video may be shorter). Content type is drawn once per video from
    ``mix``; a mixed video flips slow/fast per GOP. Every GOP of a video
    arrives with the video. Stream arrivals are uniform on ``[0, window_s]``,
    or, with ``arrival="poisson"``, cumulative exponential gaps rescaled to
    end inside the window when they overrun it.
    """
    if not isinstance(n_tasks, (int, np.integer)) or n_tasks < 1:
        raise InvalidArgument(f"n_tasks must be a positive integer, got {n_tasks!r}")
    if gops_per_video < 1:
        raise InvalidArgument("gops_per_video must be >= 1")
    if not window_s > 0:
        raise InvalidArgument("window_s must be > 0")
    if not fps > 0:
        raise InvalidArgument("fps must be > 0")
    items = _check_mix(mix)
    types = [ct for ct, _ in items]
    probs = np.array([f for _, f in items])
    probs = probs / probs.sum()

    gen = _rng.stream(seed)
    n_videos = -(-n_tasks // gops_per_video)
    if arrival == "uniform":
        arrivals = gen.uniform(0.0, window_s, size=n_videos)
    elif arrival == "poisson":
        arrivals = np.cumsum(gen.exponential(window_s / (n_videos + 1), size=n_videos))
        if arrivals[-1] > window_s:
            arrivals = np.minimum(arrivals * (window_s / arrivals[-1]), window_s)
    else:
        raise InvalidArgument(f"unknown arrival process {arrival!r}")

    width = len(str(n_videos - 1))
    tasks = []
    task_id = 0
    for v in range(n_videos):
        video_id = f"v{v:0{width}d}"
        ctype = types[int(gen.choice(len(types), p=probs))]
        n_gops = min(gops_per_video, n_tasks - task_id)
        for g in range(n_gops):
            if ctype is ContentType.MIXED:
                slow = gen.random() < profiles.mixed_slow_prob
            else:
                slow = ctype is ContentType.SLOW
            median = profiles.slow_frame_median if slow else profiles.fast_frame_median
            frames = max(1, int(round(gen.lognormal(math.log(median), profiles.frame_sigma))))
            mb_per_frame = gen.lognormal(
                math.log(profiles.mb_per_frame_median), profiles.mb_per_frame_sigma
            )
            tasks.append(
                GopTask(
                    task_id=task_id,
                    video_id=video_id,
                    gop_index=g,
                    gop_size_mb=float(frames * mb_per_frame),
                    frame_count=frames,
                    fps=float(fps),
                    content_type=ctype,
                    arrival_time_s=float(arrivals[v]),
                )
            )
            task_id += 1
    return Workload.from_tasks(tasks, window_s)
