"""Rate schedulers: metaflow priority scheduling (MSA), coflow SEBF+MADD, per-flow max-min fair.

Every scheduler is a pure function of a ``SchedulerState`` and returns a
``ScheduleDecision`` whose allocation is valid until the next event.
"""

from __future__ import annotations

import logging
import math
from collections import defaultdict
from dataclasses import dataclass, field
from functools import cached_property
from typing import AbstractSet, Callable, Dict, Iterable, List, Mapping, Optional, Sequence, Tuple

from core.fabric import Fabric, PortId, RateAllocation, egress, flow_ports, ingress
from core.failures import InvalidArgumentError, UnknownEntityError
from core.model import (
    EPSILON,
    Flow,
    Gain,
    GainKind,
    JobDag,
    ancestor_metaflows,
    remaining_size,
    unlockable_tasks,
)

log = logging.getLogger(__name__)

GROUP_TOLERANCE = 1e-9


@dataclass(frozen=True)
class SchedulerState:
    fabric: Fabric
    jobs: Mapping[str, JobDag]
    remaining: Mapping[str, float]
    finished_metaflows: AbstractSet[str] = frozenset()
    finished_tasks: AbstractSet[str] = frozenset()
    now: float = 0.0

    @cached_property
    def owner(self) -> Dict[str, str]:
        return {mf: job.job for job in self.jobs.values() for mf in job.metaflows}

    def released(self) -> List[JobDag]:
        return [self.jobs[j] for j in sorted(self.jobs) if self.jobs[j].release_time <= self.now + EPSILON]

    def left(self, flow: Flow) -> float:
        return self.remaining.get(flow.id, flow.size_remaining)

    def is_live(self, flow: Flow) -> bool:
        return self.left(flow) > EPSILON * flow.size_total

    def job_of(self, metaflow_id: str) -> JobDag:
        try:
            return self.jobs[self.owner[metaflow_id]]
        except KeyError:
            raise UnknownEntityError("metaflow", metaflow_id) from None

    def live_flows(self, metaflow_id: str) -> List[Flow]:
        return [f for f in self.job_of(metaflow_id).metaflow_flows(metaflow_id) if self.is_live(f)]

    def active_metaflows(self) -> List[str]:
        """Released, unfinished metaflows that still have bytes to send, in id order."""
        active = []
        for job in self.released():
            for mf_id in sorted(job.metaflows):
                if mf_id not in self.finished_metaflows and self.live_flows(mf_id):
                    active.append(mf_id)
        return active


@dataclass(frozen=True)
class ScheduleDecision:
    allocation: RateAllocation
    ordered_metaflows: Tuple[Tuple[str, Gain], ...] = ()
    blocked: Tuple[str, ...] = field(default=())


def gain(state: SchedulerState, metaflow_id: str) -> Gain:
    """Direct gain (unlocked load per remaining byte) or indirect attribute (bytes still needed)."""

    job = state.job_of(metaflow_id)
    if job.release_time > state.now + EPSILON:
        raise InvalidArgumentError(f"metaflow {metaflow_id} is not released yet", metaflow=metaflow_id)
    left = remaining_size(job, metaflow_id, state.remaining)
    if metaflow_id in state.finished_metaflows or left <= 0:
        raise InvalidArgumentError(f"metaflow {metaflow_id} is finished", metaflow=metaflow_id)

    unlocked = unlockable_tasks(job, metaflow_id, state.finished_metaflows, state.finished_tasks)
    if unlocked:
        load = sum(job.tasks[t].load for t in sorted(unlocked))
        return Gain(GainKind.DIRECT, load / left)

    consumer = job.metaflow(metaflow_id).consumer_task
    needed = sum(remaining_size(job, m, state.remaining) for m in sorted(ancestor_metaflows(job, consumer)))
    return Gain(GainKind.INDIRECT, needed)


def sort_metaflows(
    gains: Iterable[Tuple[str, Gain]],
    release_of: Optional[Mapping[str, float]] = None,
) -> List[Tuple[str, Gain]]:
    release_of = release_of or {}

    def priority(entry: Tuple[str, Gain]):
        mf_id, g = entry
        release = release_of.get(mf_id, 0.0)
        if g.kind is GainKind.DIRECT:
            return (0, -g.value, release, mf_id)
        return (1, g.value, release, mf_id)

    return sorted(gains, key=priority)


def madd_rates(
    flows: Iterable[Flow],
    residual: Mapping[PortId, float],
    remaining: Optional[Mapping[str, float]] = None,
) -> Tuple[RateAllocation, float]:
    """Slowest rates that still let every flow of the group finish together.

    Γ is the largest ratio of bytes crossing a port to that port's residual.
    A flow's own bound (its bytes over the smaller residual of its two ports)
    never exceeds the ratio of the port sums it belongs to. Returns an empty
    allocation with Γ = inf when a needed port has no residual left.
    """

    members = sorted(flows, key=lambda f: f.id)
    if not members:
        return RateAllocation({}), 0.0

    left: Dict[str, float] = {}
    port_bytes: Dict[PortId, float] = defaultdict(float)
    for flow in members:
        size = remaining.get(flow.id, flow.size_remaining) if remaining is not None else flow.size_remaining
        if not size > 0:
            raise InvalidArgumentError(f"flow {flow.id} has nothing left to send", flow=flow.id)
        left[flow.id] = size
        for port in flow_ports(flow):
            port_bytes[port] += size

    gamma = 0.0
    for port in sorted(port_bytes):
        capacity = residual.get(port, 0.0)
        if capacity <= EPSILON:
            return RateAllocation({}), math.inf
        gamma = max(gamma, port_bytes[port] / capacity)

    return RateAllocation({f.id: left[f.id] / gamma for f in members}), gamma


def _full_residual(fabric: Fabric) -> Dict[PortId, float]:
    return {p: fabric.port_capacity for p in fabric.ports()}


def _consume(residual: Dict[PortId, float], flow: Flow, rate: float) -> None:
    for port in flow_ports(flow):
        residual[port] = max(0.0, residual[port] - rate)


def _port_set(flows: Iterable[Flow]) -> set:
    return {p for f in flows for p in flow_ports(f)}


def _group_equal_attributes(ordered: Sequence[Tuple[str, Gain]], owner: Mapping[str, str]) -> List[List[Tuple[str, Gain]]]:
    groups: List[List[Tuple[str, Gain]]] = []
    for mf_id, g in ordered:
        if groups:
            last_id, last = groups[-1][-1]
            if (
                g.kind is GainKind.INDIRECT
                and last.kind is GainKind.INDIRECT
                and owner[last_id] == owner[mf_id]
                and math.isclose(g.value, last.value, rel_tol=GROUP_TOLERANCE, abs_tol=EPSILON)
            ):
                groups[-1].append((mf_id, g))
                continue
        groups.append([(mf_id, g)])
    return groups


def _fill_leftover(flows: Iterable[Flow], rates: Dict[str, float], residual: Dict[PortId, float]) -> None:
    """Hand leftover port capacity to flows greedily, in the given order."""
    for flow in flows:
        extra = min(residual[egress(flow.src)], residual[ingress(flow.dst)])
        if extra > EPSILON:
            rates[flow.id] = rates.get(flow.id, 0.0) + extra
            _consume(residual, flow, extra)


def msa_schedule(state: SchedulerState, *, work_conserving: bool = False) -> ScheduleDecision:
    active = state.active_metaflows()
    release_of = {mf: state.job_of(mf).release_time for mf in active}
    ordered = sort_metaflows([(mf, gain(state, mf)) for mf in active], release_of)
    groups = _group_equal_attributes(ordered, state.owner)

    group_flows = [[f for mf, _ in group for f in state.live_flows(mf)] for group in groups]
    suffix_ports: List[set] = [set() for _ in range(len(groups) + 1)]
    for i in range(len(groups) - 1, -1, -1):
        suffix_ports[i] = suffix_ports[i + 1] | _port_set(group_flows[i])

    residual = _full_residual(state.fabric)
    rates: Dict[str, float] = {}
    considered: List[Tuple[str, Gain]] = []
    blocked: List[str] = []
    for i, group in enumerate(groups):
        if all(residual[p] <= EPSILON for p in suffix_ports[i]):
            break
        considered.extend(group)
        allocation, gamma = madd_rates(group_flows[i], residual, state.remaining)
        if math.isinf(gamma):
            blocked.extend(mf for mf, _ in group)
            log.debug("Metaflow blocked", extra={"metaflows": [mf for mf, _ in group], "now": state.now})
            continue
        for flow in group_flows[i]:
            rates[flow.id] = allocation.rate(flow.id)
            _consume(residual, flow, rates[flow.id])

    if work_conserving:
        # MADD leaves each group's bottleneck port full, so only per-flow top-ups can use what is left.
        _fill_leftover((f for flows in group_flows for f in sorted(flows, key=lambda f: f.id)), rates, residual)
    return ScheduleDecision(RateAllocation(rates), tuple(considered), tuple(blocked))


def effective_bottleneck(state: SchedulerState, flows: Iterable[Flow]) -> float:
    port_bytes: Dict[PortId, float] = defaultdict(float)
    for flow in flows:
        for port in flow_ports(flow):
            port_bytes[port] += state.left(flow)
    return max(port_bytes.values(), default=0.0) / state.fabric.port_capacity


def varys_schedule(state: SchedulerState, **_options: object) -> ScheduleDecision:
    """One coflow per released job: SEBF order, MADD per coflow, then a greedy work-conserving pass.

    Always work-conserving, so engine options such as ``work_conserving`` are
    ignored. Ordered entries carry ``GainKind.BOTTLENECK`` with the coflow's
    effective bottleneck in seconds.
    """

    coflows = []
    for job in state.released():
        flows = [f for mf in sorted(job.metaflows) if mf not in state.finished_metaflows for f in state.live_flows(mf)]
        if flows:
            coflows.append((effective_bottleneck(state, flows), job.release_time, job.job, flows))
    coflows.sort(key=lambda c: (c[0], c[1], c[2]))

    residual = _full_residual(state.fabric)
    rates: Dict[str, float] = {}
    ordered: List[Tuple[str, Gain]] = []
    blocked: List[str] = []
    for bottleneck, _, job_id, flows in coflows:
        members = sorted({f.metaflow for f in flows})
        ordered.extend((mf, Gain(GainKind.BOTTLENECK, bottleneck)) for mf in members)
        allocation, gamma = madd_rates(flows, residual, state.remaining)
        if math.isinf(gamma):
            blocked.extend(members)
            log.debug("Coflow blocked", extra={"job": job_id, "now": state.now})
            continue
        for flow in flows:
            rates[flow.id] = allocation.rate(flow.id)
            _consume(residual, flow, rates[flow.id])

    _fill_leftover((f for *_, flows in coflows for f in sorted(flows, key=lambda f: f.id)), rates, residual)

    return ScheduleDecision(RateAllocation(rates), tuple(ordered), tuple(blocked))


def fair_schedule(state: SchedulerState, **_options: object) -> ScheduleDecision:
    """Progressive filling over all live flows; flows freeze once any of their ports saturates.

    Max-min fairness is work-conserving by construction; engine options are ignored.
    """

    flows = [f for mf in state.active_metaflows() for f in state.live_flows(mf)]
    flows.sort(key=lambda f: f.id)
    residual = _full_residual(state.fabric)
    rates = {f.id: 0.0 for f in flows}
    unfrozen = list(flows)
    while unfrozen:
        count: Dict[PortId, int] = defaultdict(int)
        for flow in unfrozen:
            for port in flow_ports(flow):
                count[port] += 1
        step = min(residual[p] / n for p, n in count.items())
        for flow in unfrozen:
            rates[flow.id] += step
            _consume(residual, flow, step)
        saturated = {p for p in count if residual[p] <= EPSILON}
        unfrozen = [f for f in unfrozen if not saturated.intersection(flow_ports(f))]
    return ScheduleDecision(RateAllocation(rates), ())


Scheduler = Callable[..., ScheduleDecision]

SCHEDULERS: Dict[str, Scheduler] = {
    "msa": msa_schedule,
    "varys": varys_schedule,
    "fair": fair_schedule,
}


def get_scheduler(name: str) -> Scheduler:
    try:
        return SCHEDULERS[name]
    except KeyError:
        raise UnknownEntityError("scheduler", name) from None
