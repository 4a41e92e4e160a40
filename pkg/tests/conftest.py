from fnmatch import fnmatch

import numpy as np
import pytest

from core.fabric import new_fabric
from core.fixtures import four_metaflow_job, motivation_jobs
from core.model import ComputeTask, Flow, Metaflow, build_job
from core.workload import synthesize_trace


class InMemoryRedis:
    def __init__(self):
        self.streams = {}
        self.kv = {}

    def delete(self, *names):
        for name in names:
            self.kv.pop(name, None)
            self.streams.pop(name, None)

    def hincrby(self, name, key, amount):
        h = self.kv.setdefault(name, {})
        if not isinstance(h, dict):
            raise ValueError("key not hash")
        h[key] = int(h.get(key, 0)) + amount
        return h[key]

    def hgetall(self, name):
        h = self.kv.get(name, {})
        if not isinstance(h, dict):
            return {}
        return dict(h)

    def keys(self, pattern: str):
        return [k for k in list(self.kv) + list(self.streams) if fnmatch(k, pattern)]

    def xadd(self, name, fields):
        self.streams.setdefault(name, [])
        msg_id = f"{len(self.streams[name]) + 1}-0"
        self.streams[name].append((msg_id, dict(fields)))
        return msg_id

    def xlen(self, name):
        return len(self.streams.get(name, []))

    def xrange(self, name, min="-", max="+", count=None):
        msgs = list(self.streams.get(name, []))
        if count is not None:
            msgs = msgs[:count]
        return msgs


@pytest.fixture(scope="function")
def redis_client():
    return InMemoryRedis()


@pytest.fixture
def motivation():
    return motivation_jobs()


@pytest.fixture
def four_metaflows():
    return four_metaflow_job()


@pytest.fixture
def trace_file(tmp_path):
    path = tmp_path / "trace.txt"
    path.write_text(synthesize_trace(30, num_machines=20, seed=7, mappers=(1, 3), reducers=(1, 4), mb=(1, 40)))
    return path


def single_flow_job(job="A", size=5.0, load=2.0, src=0, dst=1, release=0.0):
    return build_job(
        job,
        release,
        [ComputeTask(f"{job}/t", job, dst, load, {f"{job}/mf"})],
        [Metaflow(f"{job}/mf", job, frozenset({f"{job}/f"}), f"{job}/t")],
        [Flow(f"{job}/f", job, f"{job}/mf", src, dst, size)],
    )


def random_job(rng: np.random.Generator, job: str, num_machines: int, release: float = 0.0, max_tasks: int = 4):
    """A small random job: tasks depend on earlier tasks only, each task consumes 0-2 metaflows."""
    n_tasks = int(rng.integers(1, max_tasks + 1))
    tasks, metaflows, flows = [], [], []
    for i in range(n_tasks):
        task_id = f"{job}/t{i}"
        machine = int(rng.integers(num_machines))
        task_deps = {f"{job}/t{j}" for j in range(i) if rng.random() < 0.4}
        mf_deps = set()
        for m in range(int(rng.integers(0, 3))):
            mf_id = f"{job}/mf{i}.{m}"
            ids = []
            for n in range(int(rng.integers(1, 4))):
                flow_id = f"{mf_id}/f{n}"
                src = int(rng.integers(num_machines))
                dst = machine if rng.random() < 0.7 else int(rng.integers(num_machines))
                flows.append(Flow(flow_id, job, mf_id, src, dst, float(rng.uniform(0.5, 5.0))))
                ids.append(flow_id)
            metaflows.append(Metaflow(mf_id, job, frozenset(ids), task_id))
            mf_deps.add(mf_id)
        load = 0.0 if rng.random() < 0.15 else float(rng.uniform(0.1, 3.0))
        tasks.append(ComputeTask(task_id, job, machine, load, mf_deps, task_deps))
    return build_job(job, release, tasks, metaflows, flows)


def random_batch(seed: int, max_jobs: int = 3, num_machines: int = 4):
    rng = np.random.default_rng(seed)
    jobs = [
        random_job(rng, f"J{n}", num_machines, release=float(rng.choice([0.0, 0.0, rng.uniform(0, 4)])))
        for n in range(int(rng.integers(1, max_jobs + 1)))
    ]
    return jobs, new_fabric(num_machines)
