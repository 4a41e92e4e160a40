"""Coflow-benchmark traces and the job DAGs generated from them.

Trace layout, one job per line after a ``<num_machines> <num_jobs>`` header::

    <id> <arrival_ms> <num_mappers> <m_1> ... <m_k> <num_reducers> <r_1>:<mb_1> ... <r_j>:<mb_j>

Machine indices are 1-based in the file and 0-based everywhere else.
"""

from __future__ import annotations

import logging
import math
import zlib
from dataclasses import dataclass
from enum import Enum
from pathlib import Path
from typing import Iterable, List, Sequence, Tuple

import numpy as np

from core.failures import InputFormatError, InvalidArgumentError, JobValidationError
from core.model import ComputeTask, Flow, JobDag, Metaflow, build_job

log = logging.getLogger(__name__)


class DagTopology(str, Enum):
    TOTAL_ORDER = "total"
    PARTIAL_ORDER = "partial"
    DISORDER = "disorder"

    @classmethod
    def from_name(cls, name: str) -> "DagTopology":
        key = name.strip().lower().removesuffix("_order")
        for member in cls:
            if member.value == key:
                return member
        raise InvalidArgumentError(f"unknown topology {name}", topology=name)


class SplitMode(str, Enum):
    PER_MAPPER = "per_mapper"
    LUMP = "lump"


@dataclass(frozen=True)
class TraceJob:
    id: str
    arrival_ms: float
    mappers: Tuple[int, ...]
    reducers: Tuple[Tuple[int, float], ...]  # (machine, MB received)
    mb_scale: float = 1.0

    def __post_init__(self) -> None:
        if not self.mappers or not self.reducers:
            raise InvalidArgumentError(f"trace job {self.id} needs at least one mapper and one reducer", job=self.id)
        if any(not mb > 0 for _, mb in self.reducers):
            raise InvalidArgumentError(f"trace job {self.id} has a non-positive shuffle size", job=self.id)

    @property
    def total_mb(self) -> float:
        return sum(mb for _, mb in self.reducers)

    def reducer_sizes(self) -> List[Tuple[int, float]]:
        return [(machine, mb * self.mb_scale) for machine, mb in self.reducers]


@dataclass(frozen=True)
class LoadModel:
    rho: float = 1.0
    seed: int = 0
    noise: float = 0.2

    def __post_init__(self) -> None:
        if self.rho < 0:
            raise InvalidArgumentError("rho must be non-negative", rho=self.rho)
        if not 0 <= self.noise < 1:
            raise InvalidArgumentError("load noise must lie in [0, 1)", noise=self.noise)

    def rng_for(self, job_id: str) -> np.random.Generator:
        return np.random.default_rng(np.random.SeedSequence([self.seed, zlib.crc32(job_id.encode("utf-8"))]))


@dataclass(frozen=True)
class ShuffleFlow:
    src: int
    dst: int
    size: float


def _int(token: str, source: str, line: int, what: str) -> int:
    try:
        return int(token)
    except ValueError:
        raise InputFormatError(source, line, f"{what} is not an integer: {token!r}") from None


def _number(token: str, source: str, line: int, what: str) -> float:
    try:
        value = float(token)
    except ValueError:
        raise InputFormatError(source, line, f"{what} is not a number: {token!r}") from None
    if not math.isfinite(value):
        raise InputFormatError(source, line, f"{what} is not finite: {token!r}")
    return value


def _machine(token: str, num_machines: int, source: str, line: int) -> int:
    index = _int(token, source, line, "machine index")
    if not 1 <= index <= num_machines:
        raise InputFormatError(source, line, f"machine index {index} outside 1..{num_machines}")
    return index - 1


def _parse_job(tokens: List[str], num_machines: int, mb_scale: float, source: str, line: int) -> TraceJob:
    if len(tokens) < 5:
        raise InputFormatError(source, line, f"expected at least 5 fields, found {len(tokens)}")
    job_id = tokens[0]
    arrival = _number(tokens[1], source, line, "arrival time")
    if arrival < 0:
        raise InputFormatError(source, line, "arrival time must be non-negative")
    num_mappers = _int(tokens[2], source, line, "mapper count")
    if num_mappers < 1 or len(tokens) < 3 + num_mappers + 1:
        raise InputFormatError(source, line, f"mapper count {num_mappers} does not match the fields present")
    mappers = tuple(_machine(t, num_machines, source, line) for t in tokens[3 : 3 + num_mappers])
    pos = 3 + num_mappers
    num_reducers = _int(tokens[pos], source, line, "reducer count")
    expected = pos + 1 + num_reducers
    if num_reducers < 1 or len(tokens) != expected:
        raise InputFormatError(source, line, f"expected {expected} fields for {num_reducers} reducers, found {len(tokens)}")
    reducers = []
    for token in tokens[pos + 1 :]:
        machine, sep, mb = token.partition(":")
        if not sep:
            raise InputFormatError(source, line, f"reducer field {token!r} is not <machine>:<mb>")
        size = _number(mb, source, line, "shuffle size")
        if not size > 0:
            raise InputFormatError(source, line, f"shuffle size must be positive: {token!r}")
        reducers.append((_machine(machine, num_machines, source, line), size))
    return TraceJob(job_id, arrival, mappers, tuple(reducers), mb_scale)


def parse_trace(text: str, mb_scale: float = 1.0, source: str = "<trace>") -> Tuple[int, List[TraceJob]]:
    numbered = [(i, raw.split()) for i, raw in enumerate(text.splitlines(), start=1) if raw.strip()]
    if not numbered:
        raise InputFormatError(source, 1, "empty trace")
    if not mb_scale > 0:
        raise InvalidArgumentError("mb_scale must be positive", mb_scale=mb_scale)

    header_line, header = numbered[0]
    if len(header) != 2:
        raise InputFormatError(source, header_line, "header must be '<num_machines> <num_jobs>'")
    num_machines = _int(header[0], source, header_line, "machine count")
    num_jobs = _int(header[1], source, header_line, "job count")
    if num_machines < 1 or num_jobs < 0:
        raise InputFormatError(source, header_line, "machine count must be positive and job count non-negative")

    body = numbered[1:]
    if len(body) > num_jobs:
        raise InputFormatError(source, body[num_jobs][0], f"header declares {num_jobs} jobs but more lines follow")
    jobs: List[TraceJob] = []
    seen: set = set()
    for line, tokens in body:
        job = _parse_job(tokens, num_machines, mb_scale, source, line)
        if job.id in seen:
            raise InputFormatError(source, line, f"duplicate job id {job.id}")
        seen.add(job.id)
        jobs.append(job)
    if len(jobs) < num_jobs:
        last = numbered[-1][0]
        raise InputFormatError(source, last + 1, f"truncated trace: header declares {num_jobs} jobs, found {len(jobs)}")
    log.debug("Trace parsed", extra={"source": source, "machines": num_machines, "jobs": len(jobs)})
    return num_machines, jobs


def load_trace(path: str | Path, mb_scale: float = 1.0) -> Tuple[int, List[TraceJob]]:
    path = Path(path)
    with path.open("r", encoding="utf-8") as f:
        text = f.read()
    return parse_trace(text, mb_scale=mb_scale, source=str(path))


def expand_flows(job: TraceJob, split: SplitMode | str = SplitMode.PER_MAPPER) -> List[ShuffleFlow]:
    """Turn per-reducer shuffle totals into point-to-point flows, reducer by reducer."""

    split = SplitMode(split)
    mappers = sorted(job.mappers)
    flows: List[ShuffleFlow] = []
    for reducer, size in job.reducer_sizes():
        if split is SplitMode.LUMP:
            flows.append(ShuffleFlow(mappers[0], reducer, size))
            continue
        share = float(math.floor(size / len(mappers)))
        remainder = size - share * len(mappers)
        for i, mapper in enumerate(mappers):
            part = share + remainder if i == 0 else share
            if part > 0:
                flows.append(ShuffleFlow(mapper, reducer, part))
    return flows


def generate_dag(
    job: TraceJob,
    topology: DagTopology,
    loads: LoadModel,
    *,
    k_per_reducer: int = 2,
    split: SplitMode | str = SplitMode.PER_MAPPER,
    time_scale: float = 0.001,
) -> JobDag:
    """Build a JobDag: K metaflows per reducer, one consumer task each, edges per topology."""

    if k_per_reducer < 1:
        raise InvalidArgumentError("k_per_reducer must be at least 1", k_per_reducer=k_per_reducer)
    topology = topology if isinstance(topology, DagTopology) else DagTopology.from_name(topology)
    rng = loads.rng_for(job.id)
    shuffle = expand_flows(job, split)

    flows: List[Flow] = []
    metaflows: List[Tuple[str, str, List[str], float]] = []  # (metaflow, task, flow ids, bytes)
    machines: dict = {}
    chains: List[List[str]] = []
    for reducer, _ in job.reducer_sizes():
        into = [f for f in shuffle if f.dst == reducer]
        shuffle = [f for f in shuffle if f.dst != reducer]
        if not into:
            # a reducer listed twice has all its flows claimed by its first entry
            continue
        chain: List[str] = []
        for part in np.array_split(np.arange(len(into)), min(k_per_reducer, len(into))):
            index = len(metaflows) + 1
            mf_id, task_id = f"{job.id}/mf{index:03d}", f"{job.id}/t{index:03d}"
            ids = []
            for j in part:
                flow_id = f"{job.id}/f{len(flows) + 1:03d}"
                shuffle_flow = into[int(j)]
                flows.append(Flow(flow_id, job.id, mf_id, shuffle_flow.src, shuffle_flow.dst, shuffle_flow.size))
                ids.append(flow_id)
            metaflows.append((mf_id, task_id, ids, sum(into[int(j)].size for j in part)))
            machines[task_id] = reducer
            chain.append(task_id)
        chains.append(chain)
    if not metaflows:
        raise JobValidationError(job.id, "no reducer received any flow")

    all_metaflows = frozenset(mf for mf, _, _, _ in metaflows)
    if topology is DagTopology.TOTAL_ORDER:
        chains = [[t for chain in chains for t in chain]]
    task_deps = {}
    for chain in chains:
        for prev, task_id in zip([None] + chain[:-1], chain):
            task_deps[task_id] = frozenset() if prev is None or topology is DagTopology.DISORDER else frozenset({prev})

    tasks = []
    for mf_id, task_id, _, size in metaflows:
        load = loads.rho * size * float(rng.uniform(1 - loads.noise, 1 + loads.noise))
        mf_deps = all_metaflows if topology is DagTopology.DISORDER else frozenset({mf_id})
        tasks.append(ComputeTask(task_id, job.id, machines[task_id], load, mf_deps, task_deps[task_id]))

    return build_job(
        job.id,
        job.arrival_ms * time_scale,
        tasks,
        [Metaflow(mf_id, job.id, frozenset(ids), task_id) for mf_id, task_id, ids, _ in metaflows],
        flows,
    )


def sample_jobs(jobs: Sequence[TraceJob], n: int, seed: int) -> List[TraceJob]:
    """Uniform sample without replacement, returned in trace order."""

    if n < 0 or n > len(jobs):
        raise InvalidArgumentError(f"cannot sample {n} jobs from a trace of {len(jobs)}", n=n, available=len(jobs))
    rng = np.random.default_rng(seed)
    picked = sorted(int(i) for i in rng.choice(len(jobs), size=n, replace=False))
    return [jobs[i] for i in picked]


def synthesize_trace(
    num_jobs: int,
    *,
    num_machines: int = 150,
    seed: int = 0,
    mappers: Tuple[int, int] = (1, 10),
    reducers: Tuple[int, int] = (1, 10),
    mb: Tuple[int, int] = (1, 100),
    gap_ms: Tuple[int, int] = (0, 1000),
) -> str:
    """Seeded trace text in the coflow-benchmark layout (ranges are inclusive)."""

    if num_jobs < 0 or num_machines < 1:
        raise InvalidArgumentError("num_jobs must be non-negative and num_machines positive")
    for name, (lo, hi) in (("mappers", mappers), ("reducers", reducers)):
        if not 1 <= lo <= hi <= num_machines:
            raise InvalidArgumentError(f"{name} range must lie within 1..{num_machines}", low=lo, high=hi)
    if not 0 < mb[0] <= mb[1] or not 0 <= gap_ms[0] <= gap_ms[1]:
        raise InvalidArgumentError("size and gap ranges must be ordered and non-negative")

    rng = np.random.default_rng(seed)
    lines = [f"{num_machines} {num_jobs}"]
    arrival = 0
    for job in range(1, num_jobs + 1):
        m = sorted(int(x) + 1 for x in rng.choice(num_machines, size=int(rng.integers(mappers[0], mappers[1] + 1)), replace=False))
        r = sorted(int(x) + 1 for x in rng.choice(num_machines, size=int(rng.integers(reducers[0], reducers[1] + 1)), replace=False))
        sizes = [int(rng.integers(mb[0], mb[1] + 1)) for _ in r]
        fields = [str(job), str(arrival), str(len(m)), *map(str, m), str(len(r))]
        fields += [f"{machine}:{size}" for machine, size in zip(r, sizes)]
        lines.append(" ".join(fields))
        arrival += int(rng.integers(gap_ms[0], gap_ms[1] + 1))
    return "\n".join(lines) + "\n"


def build_jobs(
    trace_jobs: Iterable[TraceJob],
    topology: DagTopology,
    loads: LoadModel,
    *,
    k_per_reducer: int = 2,
    split: SplitMode | str = SplitMode.PER_MAPPER,
    time_scale: float = 0.001,
) -> List[JobDag]:
    return [
        generate_dag(job, topology, loads, k_per_reducer=k_per_reducer, split=split, time_scale=time_scale)
        for job in trace_jobs
    ]
