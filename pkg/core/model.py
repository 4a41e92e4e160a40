"""Jobs, compute-task DAGs, metaflows and flows.

A job is released at ``release_time`` with all of its flows present. Each
metaflow groups the flows consumed by exactly one compute task; tasks depend
on metaflows (data) and on other tasks (computation order).
"""

from __future__ import annotations

import logging
from dataclasses import dataclass, field, replace
from enum import Enum
from typing import AbstractSet, Dict, Iterable, Mapping, Optional, Tuple

import networkx as nx

from core.failures import InvalidArgumentError, JobValidationError, UnknownEntityError
from core.state_machine import MetaflowStatus

log = logging.getLogger(__name__)

EPSILON = 1e-9


@dataclass(frozen=True)
class Flow:
    id: str
    job: str
    metaflow: str
    src: int
    dst: int
    size_total: float
    size_remaining: Optional[float] = None

    def __post_init__(self) -> None:
        if not self.size_total > 0:
            raise InvalidArgumentError(f"flow {self.id}: size_total must be positive", flow=self.id)
        if self.size_remaining is None:
            object.__setattr__(self, "size_remaining", self.size_total)
        if not 0 <= self.size_remaining <= self.size_total:
            raise InvalidArgumentError(f"flow {self.id}: size_remaining outside [0, size_total]", flow=self.id)


@dataclass(frozen=True)
class Metaflow:
    id: str
    job: str
    flows: frozenset
    consumer_task: str
    state: MetaflowStatus = MetaflowStatus.ACTIVE


@dataclass(frozen=True)
class ComputeTask:
    id: str
    job: str
    machine: int
    load: float
    metaflow_deps: frozenset = frozenset()
    task_deps: frozenset = frozenset()

    def __post_init__(self) -> None:
        if self.load < 0:
            raise InvalidArgumentError(f"task {self.id}: load must be non-negative", task=self.id)
        object.__setattr__(self, "metaflow_deps", frozenset(self.metaflow_deps))
        object.__setattr__(self, "task_deps", frozenset(self.task_deps))


class GainKind(str, Enum):
    DIRECT = "direct"
    INDIRECT = "indirect"
    # ordering key of a coflow ranked by its effective bottleneck, not a gain
    BOTTLENECK = "bottleneck"


@dataclass(frozen=True)
class Gain:
    kind: GainKind
    value: float

    def __post_init__(self) -> None:
        if self.value < 0:
            raise InvalidArgumentError(f"gain value must be non-negative, got {self.value}")


@dataclass(frozen=True)
class JobDag:
    job: str
    release_time: float
    tasks: Mapping[str, ComputeTask]
    metaflows: Mapping[str, Metaflow]
    flows: Mapping[str, Flow]
    graph: nx.DiGraph = field(compare=False, repr=False)
    topo_order: Tuple[str, ...] = field(compare=False, repr=False)

    def task(self, task_id: str) -> ComputeTask:
        try:
            return self.tasks[task_id]
        except KeyError:
            raise UnknownEntityError("task", task_id) from None

    def metaflow(self, metaflow_id: str) -> Metaflow:
        try:
            return self.metaflows[metaflow_id]
        except KeyError:
            raise UnknownEntityError("metaflow", metaflow_id) from None

    def flow(self, flow_id: str) -> Flow:
        try:
            return self.flows[flow_id]
        except KeyError:
            raise UnknownEntityError("flow", flow_id) from None

    def metaflow_flows(self, metaflow_id: str) -> list[Flow]:
        return [self.flows[f] for f in sorted(self.metaflow(metaflow_id).flows)]

    @property
    def total_bytes(self) -> float:
        return sum(f.size_total for f in self.flows.values())


def build_job(
    job: str,
    release_time: float,
    tasks: Iterable[ComputeTask],
    metaflows: Iterable[Metaflow],
    flows: Iterable[Flow],
) -> JobDag:
    """Validate the parts of one job and assemble them into a JobDag.

    Every invariant is checked eagerly. Metaflow states are normalized from the
    remaining sizes of their flows.
    """

    if release_time < 0:
        raise JobValidationError(job, "release_time must be non-negative")
    task_map = _index(job, "task", tasks)
    metaflow_map = _index(job, "metaflow", metaflows)
    flow_map = _index(job, "flow", flows)
    if not task_map:
        raise JobValidationError(job, "job has no tasks")

    for flow in flow_map.values():
        if flow.metaflow not in metaflow_map:
            raise JobValidationError(job, "flow references missing metaflow", [flow.id])
        if flow.id not in metaflow_map[flow.metaflow].flows:
            raise JobValidationError(job, "flow not listed by its metaflow", [flow.id])

    for mf in metaflow_map.values():
        if not mf.flows:
            raise JobValidationError(job, "metaflow has no flows", [mf.id])
        missing = [f for f in mf.flows if f not in flow_map]
        if missing:
            raise JobValidationError(job, f"metaflow {mf.id} lists unknown flows", missing)
        stray = [f for f in mf.flows if flow_map[f].metaflow != mf.id]
        if stray:
            raise JobValidationError(job, f"flows claimed by {mf.id} belong to another metaflow", stray)
        if mf.consumer_task not in task_map:
            raise JobValidationError(job, "metaflow references missing task", [mf.id, mf.consumer_task])
        if mf.id not in task_map[mf.consumer_task].metaflow_deps:
            raise JobValidationError(job, "consumer task does not depend on its metaflow", [mf.id, mf.consumer_task])

    graph = nx.DiGraph()
    graph.add_nodes_from(sorted(task_map))
    for task in task_map.values():
        unknown_mf = [m for m in task.metaflow_deps if m not in metaflow_map]
        if unknown_mf:
            raise JobValidationError(job, f"task {task.id} depends on unknown metaflows", unknown_mf)
        unknown_tasks = [t for t in task.task_deps if t not in task_map]
        if unknown_tasks:
            raise JobValidationError(job, f"task {task.id} depends on unknown tasks", unknown_tasks)
        for dep in sorted(task.task_deps):
            graph.add_edge(dep, task.id)

    try:
        cycle = nx.find_cycle(graph)
    except nx.exception.NetworkXNoCycle:
        cycle = None
    if cycle:
        raise JobValidationError(job, "task graph is cyclic", {u for u, _ in cycle})

    normalized = {}
    for mf_id, mf in metaflow_map.items():
        done = all(flow_map[f].size_remaining <= EPSILON * flow_map[f].size_total for f in mf.flows)
        state = MetaflowStatus.FINISHED if done else MetaflowStatus.ACTIVE
        normalized[mf_id] = replace(mf, flows=frozenset(mf.flows), state=state)

    return JobDag(
        job=job,
        release_time=release_time,
        tasks=task_map,
        metaflows=normalized,
        flows=flow_map,
        graph=graph,
        topo_order=tuple(nx.lexicographical_topological_sort(graph)),
    )


def _index(job: str, kind: str, items: Iterable) -> Dict[str, object]:
    out: Dict[str, object] = {}
    for item in items:
        if item.job != job:
            raise JobValidationError(job, f"{kind} belongs to job {item.job}", [item.id])
        if item.id in out:
            raise JobValidationError(job, f"duplicate {kind} id", [item.id])
        out[item.id] = item
    return out


def ancestor_metaflows(job: JobDag, task_id: str) -> frozenset:
    """Every metaflow that must finish before ``task_id`` can start."""
    job.task(task_id)
    closure = nx.ancestors(job.graph, task_id) | {task_id}
    return frozenset().union(*(job.tasks[t].metaflow_deps for t in closure))


def _cascade(job: JobDag, finished_metaflows: AbstractSet[str], finished_tasks: AbstractSet[str]) -> set:
    fired = set(finished_tasks)
    for task_id in job.topo_order:
        if task_id in fired:
            continue
        task = job.tasks[task_id]
        if task.metaflow_deps <= finished_metaflows and task.task_deps <= fired:
            fired.add(task_id)
    return fired


def unlockable_tasks(
    job: JobDag,
    metaflow_id: str,
    finished_metaflows: AbstractSet[str],
    finished_tasks: AbstractSet[str],
) -> frozenset:
    """Tasks whose start becomes possible only once ``metaflow_id`` completes.

    Tasks that are already startable (or running) without it are not counted.
    """

    job.metaflow(metaflow_id)
    if metaflow_id in finished_metaflows:
        raise InvalidArgumentError(f"metaflow {metaflow_id} is already finished", metaflow=metaflow_id)
    before = _cascade(job, finished_metaflows, finished_tasks)
    after = _cascade(job, set(finished_metaflows) | {metaflow_id}, finished_tasks)
    return frozenset(after - before)


def remaining_size(job: JobDag, metaflow_id: str, remaining: Optional[Mapping[str, float]] = None) -> float:
    total = 0
    for flow_id in sorted(job.metaflow(metaflow_id).flows):
        flow = job.flows[flow_id]
        total += remaining.get(flow_id, flow.size_remaining) if remaining is not None else flow.size_remaining
    return total if total > EPSILON else 0


def critical_path_load(job: JobDag) -> float:
    best: Dict[str, float] = {}
    for task_id in job.topo_order:
        task = job.tasks[task_id]
        best[task_id] = task.load + max((best[d] for d in task.task_deps), default=0)
    return max(best.values(), default=0)
