"""Deterministic event-driven fluid simulator.

Between two events every flow sends at the rate of the last allocation. An
event is a job release, a flow draining to zero, or a running task reaching
the end of its load. After each event the scheduler is asked for a fresh
allocation.
"""

from __future__ import annotations

import heapq
import logging
from dataclasses import dataclass, field
from enum import Enum
from typing import Any, Dict, Iterable, List, Mapping, Optional, Tuple

from core.fabric import Fabric, RateAllocation, validate_allocation
from core.failures import CapacityViolationError, DeadlockError, InvalidArgumentError
from core.metrics import MetricsRecorder
from core.model import EPSILON, Flow, JobDag
from core.run_log import RunLogger
from core.schedulers import ScheduleDecision, SchedulerState, get_scheduler
from core.state_machine import MetaflowStatus, TaskStatus, assert_transition

log = logging.getLogger(__name__)


class EventKind(str, Enum):
    JOB_RELEASE = "job_release"
    FLOW_COMPLETE = "flow_complete"
    METAFLOW_COMPLETE = "metaflow_complete"
    TASK_COMPLETE = "task_complete"


@dataclass(frozen=True)
class SimEvent:
    time: float
    kind: EventKind
    entity: str
    job: str


@dataclass(frozen=True)
class RateInterval:
    start: float
    end: float
    rates: Mapping[str, float]


@dataclass(frozen=True)
class SimOptions:
    work_conserving: bool = False
    record_intervals: bool = False
    log_decisions: bool = False


@dataclass
class RunLog:
    """Raw timestamps collected while simulating; turned into a SimReport by compute_metrics."""

    scheduler: str
    releases: Dict[str, float] = field(default_factory=dict)
    job_flows: Dict[str, Tuple[str, ...]] = field(default_factory=dict)
    job_metaflows: Dict[str, Tuple[str, ...]] = field(default_factory=dict)
    job_tasks: Dict[str, Tuple[str, ...]] = field(default_factory=dict)
    flow_finish: Dict[str, float] = field(default_factory=dict)
    metaflow_finish: Dict[str, float] = field(default_factory=dict)
    task_finish: Dict[str, float] = field(default_factory=dict)
    events: List[SimEvent] = field(default_factory=list)
    intervals: List[RateInterval] = field(default_factory=list)


@dataclass(frozen=True)
class JobRecord:
    job_id: str
    release: float
    cct: float
    jct: float


@dataclass(frozen=True)
class SimReport:
    scheduler: str
    per_job: Tuple[JobRecord, ...]
    per_flow: Tuple[Tuple[str, float], ...]
    per_metaflow: Tuple[Tuple[str, float], ...]
    avg_jct: float
    avg_cct: float
    intervals: Tuple[RateInterval, ...] = field(default=(), compare=False, repr=False)

    def job(self, job_id: str) -> JobRecord:
        for record in self.per_job:
            if record.job_id == job_id:
                return record
        raise KeyError(job_id)

    def to_payload(self) -> Dict[str, Any]:
        return {
            "scheduler": self.scheduler,
            "avg_cct": self.avg_cct,
            "avg_jct": self.avg_jct,
            "jobs": [
                {"job_id": r.job_id, "release": r.release, "cct": r.cct, "jct": r.jct} for r in self.per_job
            ],
            "flows": [{"flow_id": f, "fct": t} for f, t in self.per_flow],
            "metaflows": [{"metaflow_id": m, "completion": t} for m, t in self.per_metaflow],
        }


def compute_metrics(run_log: RunLog) -> SimReport:
    unfinished = [t for tasks in run_log.job_tasks.values() for t in tasks if t not in run_log.task_finish]
    if unfinished:
        raise InvalidArgumentError("run has not reached quiescence", unfinished_tasks=sorted(unfinished))

    per_job = []
    per_flow = []
    for job_id in sorted(run_log.releases):
        release = run_log.releases[job_id]
        fcts = [run_log.flow_finish[f] - release for f in run_log.job_flows[job_id]]
        per_flow.extend((f, run_log.flow_finish[f] - release) for f in run_log.job_flows[job_id])
        jct = max((run_log.task_finish[t] for t in run_log.job_tasks[job_id]), default=release) - release
        per_job.append(JobRecord(job_id, release, max(fcts, default=0.0), jct))

    per_metaflow = sorted(run_log.metaflow_finish.items())
    count = len(per_job)
    return SimReport(
        scheduler=run_log.scheduler,
        per_job=tuple(per_job),
        per_flow=tuple(sorted(per_flow)),
        per_metaflow=tuple(per_metaflow),
        avg_jct=sum(r.jct for r in per_job) / count if count else 0.0,
        avg_cct=sum(r.cct for r in per_job) / count if count else 0.0,
        intervals=tuple(run_log.intervals),
    )


class FluidSimulator:
    """Single-threaded simulation of one batch of jobs under one scheduler."""

    def __init__(
        self,
        jobs: Iterable[JobDag],
        fabric: Fabric,
        scheduler: str = "msa",
        options: Optional[SimOptions] = None,
        *,
        metrics: Optional[MetricsRecorder] = None,
        run_logger: Optional[RunLogger] = None,
    ):
        self.fabric = fabric
        self.scheduler = scheduler
        self.schedule_fn = get_scheduler(scheduler)
        self.options = options or SimOptions()
        self.metrics = metrics or MetricsRecorder()
        self.run_logger = run_logger

        self.jobs: Dict[str, JobDag] = {}
        self.flows: Dict[str, Flow] = {}
        self._check_jobs(jobs)

        self.now = 0.0
        self.remaining: Dict[str, float] = {
            f.id: 0.0 if f.size_remaining <= EPSILON * f.size_total else f.size_remaining for f in self.flows.values()
        }
        self.task_status: Dict[str, TaskStatus] = {}
        self.metaflow_status: Dict[str, MetaflowStatus] = {}
        for job in self.jobs.values():
            self.task_status.update({t: TaskStatus.PENDING for t in job.tasks})
            self.metaflow_status.update({m: MetaflowStatus.PENDING for m in job.metaflows})
        self.finished_metaflows: set = set()
        self.finished_tasks: set = set()
        self.released: Dict[str, JobDag] = {}
        self._pending_releases = sorted(self.jobs.values(), key=lambda j: (j.release_time, j.job))
        self._queues: Dict[int, list] = {}
        self._running: Dict[int, Tuple[str, float]] = {}
        self._task_job: Dict[str, JobDag] = {t: job for job in self.jobs.values() for t in job.tasks}

        self.run_log = RunLog(scheduler=scheduler)
        for job in self.jobs.values():
            self.run_log.releases[job.job] = job.release_time
            self.run_log.job_flows[job.job] = tuple(sorted(job.flows))
            self.run_log.job_metaflows[job.job] = tuple(sorted(job.metaflows))
            self.run_log.job_tasks[job.job] = tuple(sorted(job.tasks))

    def _check_jobs(self, jobs: Iterable[JobDag]) -> None:
        seen: set = set()
        for job in jobs:
            if job.job in self.jobs:
                raise InvalidArgumentError(f"duplicate job id {job.job}", job=job.job)
            ids = set(job.tasks) | set(job.metaflows) | set(job.flows)
            clash = seen & ids
            if clash:
                raise InvalidArgumentError("entity ids must be unique across jobs", ids=sorted(clash))
            seen |= ids
            for flow in job.flows.values():
                self.fabric.check_flow(flow)
            for task in job.tasks.values():
                if not 0 <= task.machine < self.fabric.num_machines:
                    raise InvalidArgumentError(
                        f"task {task.id} runs on machine {task.machine} outside the fabric", task=task.id
                    )
            self.jobs[job.job] = job
            self.flows.update(job.flows)

    @property
    def done(self) -> bool:
        return not self._pending_releases and len(self.finished_tasks) == len(self.task_status)

    def _emit(self, kind: EventKind, entity: str, job: str) -> SimEvent:
        event = SimEvent(self.now, kind, entity, job)
        self.run_log.events.append(event)
        self.metrics.inc(f"events.{kind.value}")
        if self.run_logger is not None:
            self.run_logger.log_event(event)
        return event

    def _release_due(self) -> None:
        while self._pending_releases and self._pending_releases[0].release_time <= self.now + EPSILON:
            job = self._pending_releases.pop(0)
            self.released[job.job] = job
            for mf_id in sorted(job.metaflows):
                assert_transition(self.metaflow_status[mf_id], MetaflowStatus.ACTIVE, entity_id=mf_id)
                self.metaflow_status[mf_id] = MetaflowStatus.ACTIVE
            self._emit(EventKind.JOB_RELEASE, job.job, job.job)

    def _settle_transfers(self) -> None:
        for job_id in sorted(self.released):
            job = self.released[job_id]
            for flow_id in sorted(job.flows):
                if flow_id not in self.run_log.flow_finish and self.remaining[flow_id] <= 0:
                    self.run_log.flow_finish[flow_id] = self.now
                    self._emit(EventKind.FLOW_COMPLETE, flow_id, job_id)
        for job_id in sorted(self.released):
            job = self.released[job_id]
            for mf_id in sorted(job.metaflows):
                if self.metaflow_status[mf_id] is not MetaflowStatus.ACTIVE:
                    continue
                if all(f in self.run_log.flow_finish for f in job.metaflows[mf_id].flows):
                    assert_transition(MetaflowStatus.ACTIVE, MetaflowStatus.FINISHED, entity_id=mf_id)
                    self.metaflow_status[mf_id] = MetaflowStatus.FINISHED
                    self.finished_metaflows.add(mf_id)
                    self.run_log.metaflow_finish[mf_id] = self.now
                    self._emit(EventKind.METAFLOW_COMPLETE, mf_id, job_id)

    def _set_task(self, task_id: str, status: TaskStatus) -> None:
        assert_transition(self.task_status[task_id], status, entity_id=task_id)
        self.task_status[task_id] = status

    def execute_tasks(self) -> List[SimEvent]:
        """Finish due tasks, queue newly ready ones, and start queued tasks on idle machines.

        Repeats until nothing changes, so zero-load tasks cascade within one instant.
        """

        completed: List[SimEvent] = []
        changed = True
        while changed:
            changed = False
            for machine in sorted(self._running):
                task_id, end = self._running[machine]
                if end <= self.now + EPSILON:
                    del self._running[machine]
                    self._set_task(task_id, TaskStatus.DONE)
                    self.finished_tasks.add(task_id)
                    self.run_log.task_finish[task_id] = self.now
                    completed.append(self._emit(EventKind.TASK_COMPLETE, task_id, self._task_job[task_id].job))
                    changed = True

            for job_id in sorted(self.released):
                job = self.released[job_id]
                for task_id in job.topo_order:
                    if self.task_status[task_id] is not TaskStatus.PENDING:
                        continue
                    task = job.tasks[task_id]
                    if task.metaflow_deps <= self.finished_metaflows and task.task_deps <= self.finished_tasks:
                        self._set_task(task_id, TaskStatus.READY)
                        heapq.heappush(self._queues.setdefault(task.machine, []), (self.now, task_id))
                        changed = True

            for machine in sorted(self._queues):
                queue = self._queues[machine]
                if machine in self._running or not queue:
                    continue
                _, task_id = heapq.heappop(queue)
                self._set_task(task_id, TaskStatus.RUNNING)
                self._running[machine] = (task_id, self.now + self._task_job[task_id].tasks[task_id].load)
                changed = True
        return completed

    def _schedule(self) -> RateAllocation:
        state = SchedulerState(
            fabric=self.fabric,
            jobs=dict(self.released),
            remaining=self.remaining,
            finished_metaflows=frozenset(self.finished_metaflows),
            finished_tasks=frozenset(self.finished_tasks),
            now=self.now,
        )
        decision: ScheduleDecision = self.schedule_fn(state, work_conserving=self.options.work_conserving)
        self.metrics.inc("scheduler.rounds")
        if decision.blocked:
            self.metrics.inc("scheduler.blocked", len(decision.blocked))
        report = validate_allocation(self.fabric, decision.allocation, self.flows, self.remaining)
        if not report.ok:
            raise CapacityViolationError(
                f"{self.scheduler} produced an invalid allocation at t={self.now}",
                [v.to_payload() for v in report.violations],
            )
        log.debug(
            "Scheduling round",
            extra={"scheduler": self.scheduler, "now": self.now, "rated_flows": len(decision.allocation.positive())},
        )
        if self.options.log_decisions and self.run_logger is not None:
            self.run_logger.log_decision(self.now, self.scheduler, decision)
        return decision.allocation

    def advance(self, allocation: RateAllocation) -> SimEvent:
        """Move time to the next event and drain every rated flow linearly."""

        candidates: List[Tuple[float, EventKind, str, str]] = []
        if self._pending_releases:
            job = self._pending_releases[0]
            candidates.append((job.release_time - self.now, EventKind.JOB_RELEASE, job.job, job.job))
        rates = allocation.positive()
        for flow_id in sorted(rates):
            if self.remaining[flow_id] > 0:
                flow = self.flows[flow_id]
                candidates.append((self.remaining[flow_id] / rates[flow_id], EventKind.FLOW_COMPLETE, flow_id, flow.job))
        for machine in sorted(self._running):
            task_id, end = self._running[machine]
            candidates.append((end - self.now, EventKind.TASK_COMPLETE, task_id, self._task_job[task_id].job))
        if not candidates:
            blocked = [m for m, s in self.metaflow_status.items() if s is MetaflowStatus.ACTIVE]
            pending = [t for t, s in self.task_status.items() if s is not TaskStatus.DONE]
            log.error("Simulation deadlocked", extra={"now": self.now, "scheduler": self.scheduler})
            raise DeadlockError(self.now, blocked, pending)

        dt, kind, entity, job_id = min(candidates, key=lambda c: c[0])
        dt = max(dt, 0.0)
        for flow_id in sorted(rates):
            left = self.remaining[flow_id]
            if left <= 0:
                continue
            if left / rates[flow_id] <= dt + EPSILON:
                self.remaining[flow_id] = 0.0
                continue
            left -= rates[flow_id] * dt
            self.remaining[flow_id] = 0.0 if left <= EPSILON * self.flows[flow_id].size_total else left
        if self.options.record_intervals and dt > 0:
            self.run_log.intervals.append(RateInterval(self.now, self.now + dt, dict(rates)))
        self.now += dt
        return SimEvent(self.now, kind, entity, job_id)

    def _settle(self) -> None:
        self._release_due()
        self._settle_transfers()
        self.execute_tasks()

    def start(self) -> None:
        log.info(
            "Simulation started",
            extra={"scheduler": self.scheduler, "jobs": len(self.jobs), "flows": len(self.flows)},
        )
        self._settle()

    def step(self) -> SimEvent:
        """One scheduling round followed by one time advance."""
        event = self.advance(self._schedule())
        self._settle()
        return event

    def run(self) -> SimReport:
        self.start()
        while not self.done:
            self.step()
        report = compute_metrics(self.run_log)
        log.info(
            "Simulation finished",
            extra={"scheduler": self.scheduler, "now": self.now, "avg_jct": report.avg_jct, "avg_cct": report.avg_cct},
        )
        return report


def run(
    jobs: Iterable[JobDag],
    fabric: Fabric,
    scheduler: str = "msa",
    options: Optional[SimOptions] = None,
    *,
    metrics: Optional[MetricsRecorder] = None,
    run_logger: Optional[RunLogger] = None,
) -> SimReport:
    return FluidSimulator(jobs, fabric, scheduler, options, metrics=metrics, run_logger=run_logger).run()
