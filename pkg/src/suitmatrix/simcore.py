"""Discrete-event simulation of GOP transcoding on a static heterogeneous cluster.

Tasks enter one central ready queue ordered by (deadline, task_id). Whenever
a VM is idle and the queue is non-empty the dispatcher assigns the
highest-scoring (task, idle VM) pair among the first ``window_k`` queued
tasks. Service is non-preemptive and takes exactly the ETC entry.
"""

from __future__ import annotations

import bisect
import heapq
import math
from dataclasses import dataclass, field
from typing import Mapping, NamedTuple, Sequence

import numpy as np

from . import rng as _rng
from .errors import EmptyCluster, EtcGap, InvalidArgument
from .suitability import FuzzyParams, NaiveParams, naive_matrix, suitability_matrix
from .timemodel import EtcMatrix
from .workload import GopTask, VmTypeSpec, Workload, default_vm_catalog

POLICIES = ("suitability", "naive", "fastest_vm", "random")
BILLING_MODES = ("span", "busy")


@dataclass(frozen=True)
class ClusterConfig:
    counts: Mapping[str, int]
    billing_quantum_s: float = 3600.0
    startup_allowance_s: float = 5.0
    billing_mode: str = "span"

    def __post_init__(self):
        if self.billing_mode not in BILLING_MODES:
            raise InvalidArgument(f"billing_mode must be one of {BILLING_MODES}")
        if any(n < 0 for n in self.counts.values()):
            raise InvalidArgument("VM counts must be non-negative")
        if sum(self.counts.values()) < 1:
            raise EmptyCluster("cluster has no VMs")
        if not self.billing_quantum_s > 0:
            raise InvalidArgument("billing_quantum_s must be > 0")
        if not self.startup_allowance_s >= 0:
            raise InvalidArgument("startup_allowance_s must be >= 0")


def parse_cluster_spec(spec: str, **kwargs) -> ClusterConfig:
    """Parse ``"gpu=2,cpu_opt=4"``."""
    counts: dict[str, int] = {}
    for part in filter(None, (p.strip() for p in spec.split(","))):
        name, sep, n = part.partition("=")
        if not sep:
            raise InvalidArgument(f"expected type=count, got {part!r}")
        try:
            counts[name.strip()] = int(n)
        except ValueError:
            raise InvalidArgument(f"bad VM count in {part!r}") from None
    if not counts:
        raise EmptyCluster("cluster spec is empty")
    return ClusterConfig(counts, **kwargs)


@dataclass
class VmInstance:
    vm_id: int
    vm_type: str
    busy_until_s: float = 0.0
    first_use_s: float | None = None
    last_release_s: float | None = None
    busy_total_s: float = 0.0
    assignments: list[int] = field(default_factory=list)


def make_vms(cluster: ClusterConfig, vm_types: Sequence[str]) -> list[VmInstance]:
    """Instantiate VMs grouped by type in ``vm_types`` order; ids count from 0."""
    unknown = set(cluster.counts) - set(vm_types)
    if unknown:
        raise EtcGap(f"no ETC column for VM type(s) {sorted(unknown)}")
    vms = []
    for name in vm_types:
        for _ in range(cluster.counts.get(name, 0)):
            vms.append(VmInstance(len(vms), name))
    return vms


def stream_deadlines(gops: Sequence[GopTask], fps: float, allowance_s: float) -> list[float]:
    """Playback deadlines of a stream's GOPs, ordered by gop_index.

    Playback starts ``allowance_s`` after the first GOP arrives and runs
    continuously at ``fps``.
    """
    if not fps > 0:
        raise InvalidArgument("fps must be > 0")
    start = gops[0].arrival_time_s + allowance_s
    out, elapsed = [], 0.0
    for g in gops:
        out.append(start + elapsed)
        elapsed += g.frame_count / fps
    return out


def deadline_of(task: GopTask, stream: Sequence[GopTask], stream_fps: float, cluster: ClusterConfig) -> float:
    """Playback deadline of ``task`` within its (gop_index-ordered) ``stream``."""
    return stream_deadlines(stream[: task.gop_index + 1], stream_fps, cluster.startup_allowance_s)[-1]


def workload_deadlines(workload: Workload, cluster: ClusterConfig) -> dict[int, float]:
    out = {}
    for fps, gops in workload.videos.values():
        for g, d in zip(gops, stream_deadlines(gops, fps, cluster.startup_allowance_s)):
            out[g.task_id] = d
    return out


class QueuedTask(NamedTuple):
    deadline: float
    task_id: int
    row: int


def schedule_next(
    ready_queue: Sequence[QueuedTask],
    idle_vms: Sequence[tuple[int, int]],
    score_matrix: np.ndarray,
    now: float = 0.0,
    window_k: int = 10,
) -> tuple[int, int] | None:
    """Pick the best ``(task_id, vm_id)`` pair, or None.

    ``idle_vms`` holds ``(vm_id, column)`` pairs; ``score_matrix[row, column]``
    is the task's score on that VM type. Ties go to the earlier deadline, then
    the smaller task_id, then the smaller vm_id.
    """
    if not ready_queue or not idle_vms:
        return None
    best_key, best = None, None
    for q in ready_queue[:window_k]:
        row = score_matrix[q.row]
        for vm_id, col in idle_vms:
            key = (-row[col], q.deadline, q.task_id, vm_id)
            if best_key is None or key < best_key:
                best_key, best = key, (q.task_id, vm_id)
    return best


@dataclass(frozen=True)
class TaskLog:
    task_id: int
    vm_id: int
    start_s: float
    finish_s: float
    deadline_s: float
    missed: bool


@dataclass(frozen=True)
class SimEvent:
    time_s: float
    event: str
    task_id: int
    vm_id: int | None


@dataclass(frozen=True)
class SimResult:
    per_task: tuple[TaskLog, ...]
    per_stream_startup_delay_s: Mapping[str, float]
    total_cost_usd: float
    replication_seed: int
    vm_types: tuple[str, ...] = ()
    events: tuple[SimEvent, ...] = ()

    @property
    def miss_rate_defined(self) -> bool:
        return bool(self.per_task)

    @property
    def miss_rate(self) -> float:
        """Fraction of GOPs finishing after their deadline (0 for an empty run)."""
        if not self.per_task:
            return 0.0
        return sum(t.missed for t in self.per_task) / len(self.per_task)

    @property
    def mean_startup_delay_s(self) -> float:
        d = self.per_stream_startup_delay_s
        return sum(d.values()) / len(d) if d else 0.0

    def per_task_csv(self) -> str:
        out = ["task_id,vm_id,vm_type,start_s,finish_s,deadline_s,missed"]
        for t in self.per_task:
            out.append(
                f"{t.task_id},{t.vm_id},{self.vm_types[t.vm_id] if self.vm_types else ''},"
                f"{t.start_s:.6f},{t.finish_s:.6f},{t.deadline_s:.6f},{int(t.missed)}"
            )
        return "\n".join(out) + "\n"

    def events_csv(self) -> str:
        out = ["time_s,event,task_id,vm_id"]
        for e in self.events:
            out.append(f"{e.time_s:.6f},{e.event},{e.task_id},{'' if e.vm_id is None else e.vm_id}")
        return "\n".join(out) + "\n"


def billed_cost(
    vms: Sequence[VmInstance], cluster: ClusterConfig, catalog: Sequence[VmTypeSpec]
) -> float:
    """Charge each used VM for whole billing quanta at its type's hourly rate.

    In the default ``span`` mode a VM is rented from its first use to its last
    release. ``busy`` mode charges only the summed service time, as if the VM
    were released whenever it fell idle.
    """
    rate = {vm.name: vm.hourly_cost for vm in catalog}
    q = cluster.billing_quantum_s
    total = 0.0
    for vm in vms:
        if vm.first_use_s is None:
            continue
        if cluster.billing_mode == "busy":
            span = vm.busy_total_s
        else:
            span = vm.last_release_s - vm.first_use_s
        total += math.ceil(span / q) * rate[vm.vm_type] * q / 3600.0
    return total


def score_matrix_for(
    policy: str,
    etc: EtcMatrix,
    catalog: Sequence[VmTypeSpec],
    pref=None,
    params: FuzzyParams = FuzzyParams(),
    naive: NaiveParams = NaiveParams(),
    seed: int = 0,
    delta_th: float | None = None,
) -> np.ndarray:
    """Higher-is-better scores per (task row, VM column) for a policy."""
    if policy == "suitability":
        return suitability_matrix(etc, catalog, pref, params, delta_th=delta_th).scores
    if policy == "naive":
        return naive_matrix(etc, catalog, naive)
    if policy == "fastest_vm":
        return naive_matrix(etc, catalog, NaiveParams(1.0))
    if policy == "random":
        return _rng.stream(seed, 0x52414E44).random(etc.times_s.shape)
    raise InvalidArgument(f"unknown policy {policy!r}; choose from {POLICIES}")


# event kinds; frees sort before arrivals at equal times (no observable effect,
# dispatch only happens once all events at a timestamp are applied)
_FREE, _ARRIVE = 0, 1


def run_sim(
    workload: Workload,
    etc: EtcMatrix,
    cluster: ClusterConfig,
    policy: str = "suitability",
    pref=None,
    params: FuzzyParams = FuzzyParams(),
    seed: int = 0,
    *,
    catalog: Sequence[VmTypeSpec] | None = None,
    naive: NaiveParams = NaiveParams(),
    window_k: int = 10,
    delta_th: float | None = None,
    estimate_noise: float = 0.0,
    record_events: bool = False,
) -> SimResult:
    """Simulate one replication and return its per-task log, delays and cost.

    ``estimate_noise`` > 0 makes the scheduler score a copy of the ETC with
    multiplicative lognormal error while service still takes the true time.
    """
    catalog = list(catalog or default_vm_catalog())
    if sum(cluster.counts.values()) < 1:
        raise EmptyCluster("cluster has no VMs")
    vms = make_vms(cluster, etc.vm_types)
    col_of = {name: j for j, name in enumerate(etc.vm_types)}
    for task in workload.tasks:
        if task.task_id not in etc._row:
            raise EtcGap(f"task {task.task_id} missing from ETC matrix")

    seen = etc
    if estimate_noise > 0:
        noise = _rng.stream(seed, 0x4E4F4953).lognormal(0.0, estimate_noise, etc.times_s.shape)
        seen = EtcMatrix(etc.task_ids, etc.vm_types, etc.times_s * noise)
    scores = (
        score_matrix_for(policy, seen, catalog, pref, params, naive, seed, delta_th)
        if workload.tasks
        else np.empty((0, len(etc.vm_types)))
    )
    deadlines = workload_deadlines(workload, cluster)

    events: list[tuple] = []
    for task in workload.tasks:
        heapq.heappush(events, (task.arrival_time_s, _ARRIVE, task.task_id))
    queue: list[QueuedTask] = []
    idle = {vm.vm_id for vm in vms}
    logs: dict[int, TaskLog] = {}
    trail: list[SimEvent] = []
    times = etc.times_s

    while events:
        now = events[0][0]
        while events and events[0][0] == now:
            _, kind, ident = heapq.heappop(events)
            if kind == _ARRIVE:
                bisect.insort(queue, QueuedTask(deadlines[ident], ident, etc.row_index(ident)))
                if record_events:
                    trail.append(SimEvent(now, "arrive", ident, None))
            else:
                idle.add(ident)
        while queue and idle:
            idle_pairs = [(v, col_of[vms[v].vm_type]) for v in sorted(idle)]
            task_id, vm_id = schedule_next(queue, idle_pairs, scores, now, window_k)
            pos = next(i for i, q in enumerate(queue) if q.task_id == task_id)
            q = queue.pop(pos)
            vm = vms[vm_id]
            finish = now + times[q.row, col_of[vm.vm_type]]
            idle.discard(vm_id)
            vm.busy_until_s = finish
            if vm.first_use_s is None:
                vm.first_use_s = now
            vm.last_release_s = finish
            vm.busy_total_s += finish - now
            vm.assignments.append(task_id)
            missed = finish > q.deadline
            logs[task_id] = TaskLog(task_id, vm_id, now, finish, q.deadline, missed)
            heapq.heappush(events, (finish, _FREE, vm_id))
            if record_events:
                trail.append(SimEvent(now, "start", task_id, vm_id))
                trail.append(SimEvent(finish, "finish", task_id, vm_id))
                if missed:
                    trail.append(SimEvent(finish, "miss", task_id, vm_id))

    per_task = tuple(logs[t.task_id] for t in workload.tasks)
    startup = {
        vid: logs[gops[0].task_id].finish_s - gops[0].arrival_time_s
        for vid, (_, gops) in workload.videos.items()
    }
    if record_events:
        trail.sort(key=lambda e: (e.time_s, ("finish", "miss", "arrive", "start").index(e.event), e.task_id))
    return SimResult(
        per_task=per_task,
        per_stream_startup_delay_s=startup,
        total_cost_usd=billed_cost(vms, cluster, catalog),
        replication_seed=seed,
        vm_types=tuple(vm.vm_type for vm in vms),
        events=tuple(trail),
    )
