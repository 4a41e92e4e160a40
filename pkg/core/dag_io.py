"""Plain-text job DAG documents.

One document per job, whitespace separated, ``#`` starts a comment::

    JOB 17
    RELEASE 0.25
    TASKS
    17/t001 4 3.0 17/mf001
    17/t002 4 1.5 17/mf002 17/t001
    METAFLOWS
    17/mf001 17/t001
    FLOWS
    17/f001 17/mf001 0 4 3.0

Task dependencies name metaflows or tasks; a name that is a metaflow id is a
metaflow dependency. Machine indices are 0-based.
"""

from __future__ import annotations

import re
from pathlib import Path
from typing import Dict, List, Tuple

from core.failures import InputFormatError
from core.model import ComputeTask, Flow, JobDag, Metaflow, build_job

_SECTIONS = ("TASKS", "METAFLOWS", "FLOWS")


def _num(value: float) -> str:
    return repr(float(value))


def format_dag(job: JobDag) -> str:
    lines = [f"JOB {job.job}", f"RELEASE {_num(job.release_time)}", "TASKS"]
    for task_id in job.topo_order:
        task = job.tasks[task_id]
        deps = sorted(task.metaflow_deps) + sorted(task.task_deps)
        lines.append(" ".join([task.id, str(task.machine), _num(task.load), *deps]))
    lines.append("METAFLOWS")
    for mf_id in sorted(job.metaflows):
        lines.append(f"{mf_id} {job.metaflows[mf_id].consumer_task}")
    lines.append("FLOWS")
    for flow_id in sorted(job.flows):
        f = job.flows[flow_id]
        lines.append(f"{f.id} {f.metaflow} {f.src} {f.dst} {_num(f.size_total)}")
    return "\n".join(lines) + "\n"


def _field(kind, token: str, source: str, line: int, what: str):
    try:
        return kind(token)
    except ValueError:
        raise InputFormatError(source, line, f"{what} is not a valid number: {token!r}") from None


def parse_dag(text: str, source: str = "<dag>") -> JobDag:
    job_id = None
    release = None
    section = None
    raw_tasks: List[Tuple[int, List[str]]] = []
    consumers: Dict[str, str] = {}
    flows: List[Flow] = []
    flow_lines: List[Tuple[int, List[str]]] = []

    for line_no, raw in enumerate(text.splitlines(), start=1):
        tokens = raw.split("#", 1)[0].split()
        if not tokens:
            continue
        head = tokens[0]
        if head == "JOB":
            if len(tokens) != 2 or job_id is not None:
                raise InputFormatError(source, line_no, "expected exactly one 'JOB <id>' line")
            job_id = tokens[1]
        elif head == "RELEASE":
            if len(tokens) != 2 or release is not None:
                raise InputFormatError(source, line_no, "expected exactly one 'RELEASE <time>' line")
            release = _field(float, tokens[1], source, line_no, "release time")
        elif head in _SECTIONS and len(tokens) == 1:
            section = head
        elif section == "TASKS":
            if len(tokens) < 3:
                raise InputFormatError(source, line_no, "task line needs 'id machine load [deps...]'")
            raw_tasks.append((line_no, tokens))
        elif section == "METAFLOWS":
            if len(tokens) != 2:
                raise InputFormatError(source, line_no, "metaflow line needs 'id consumer'")
            if tokens[0] in consumers:
                raise InputFormatError(source, line_no, f"duplicate metaflow {tokens[0]}")
            consumers[tokens[0]] = tokens[1]
        elif section == "FLOWS":
            if len(tokens) != 5:
                raise InputFormatError(source, line_no, "flow line needs 'id metaflow src dst size'")
            flow_lines.append((line_no, tokens))
        else:
            raise InputFormatError(source, line_no, f"unexpected line outside a section: {raw.strip()!r}")

    if job_id is None or release is None:
        raise InputFormatError(source, 1, "document must declare JOB and RELEASE")

    members: Dict[str, set] = {mf: set() for mf in consumers}
    for line_no, (flow_id, mf_id, src, dst, size) in flow_lines:
        try:
            flow = Flow(
                flow_id,
                job_id,
                mf_id,
                _field(int, src, source, line_no, "source machine"),
                _field(int, dst, source, line_no, "destination machine"),
                _field(float, size, source, line_no, "flow size"),
            )
        except ValueError as exc:
            if isinstance(exc, InputFormatError):
                raise
            raise InputFormatError(source, line_no, str(exc)) from None
        flows.append(flow)
        members.setdefault(mf_id, set()).add(flow_id)

    tasks = []
    for line_no, (task_id, machine, load, *deps) in raw_tasks:
        mf_deps = frozenset(d for d in deps if d in consumers)
        task_deps = frozenset(d for d in deps if d not in consumers)
        try:
            tasks.append(
                ComputeTask(
                    task_id,
                    job_id,
                    _field(int, machine, source, line_no, "machine"),
                    _field(float, load, source, line_no, "load"),
                    mf_deps,
                    task_deps,
                )
            )
        except ValueError as exc:
            if isinstance(exc, InputFormatError):
                raise
            raise InputFormatError(source, line_no, str(exc)) from None

    metaflows = [Metaflow(mf, job_id, frozenset(members[mf]), consumers[mf]) for mf in consumers]
    return build_job(job_id, release, tasks, metaflows, flows)


def dag_filename(job_id: str) -> str:
    return "job_" + re.sub(r"[^A-Za-z0-9._-]", "_", job_id) + ".dag"


def write_dag(job: JobDag, out_dir: str | Path) -> Path:
    out_dir = Path(out_dir)
    out_dir.mkdir(parents=True, exist_ok=True)
    path = out_dir / dag_filename(job.job)
    path.write_text(format_dag(job), encoding="utf-8")
    return path


def load_dag(path: str | Path) -> JobDag:
    path = Path(path)
    return parse_dag(path.read_text(encoding="utf-8"), source=str(path))
