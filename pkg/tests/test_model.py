import numpy as np
import pytest

from core.failures import InvalidArgumentError, JobValidationError, UnknownEntityError
from core.model import (
    ComputeTask,
    Flow,
    Metaflow,
    ancestor_metaflows,
    build_job,
    critical_path_load,
    remaining_size,
    unlockable_tasks,
)
from core.state_machine import MetaflowStatus
from tests.conftest import random_job, single_flow_job


def test_minimal_job_is_valid():
    job = single_flow_job()
    assert set(job.tasks) == {"A/t"}
    assert job.metaflow("A/mf").state is MetaflowStatus.ACTIVE
    assert job.total_bytes == 5.0


def test_four_metaflow_job_has_four_tasks(four_metaflows):
    assert len(four_metaflows.tasks) == 4
    assert len(four_metaflows.metaflows) == 4
    assert all(len(mf.flows) == 2 for mf in four_metaflows.metaflows.values())


def test_two_cycle_is_rejected():
    tasks = [
        ComputeTask("a", "J", 0, 1.0, task_deps={"b"}),
        ComputeTask("b", "J", 0, 1.0, task_deps={"a"}),
    ]
    with pytest.raises(JobValidationError) as excinfo:
        build_job("J", 0.0, tasks, [], [])
    assert set(excinfo.value.entities) == {"a", "b"}


def test_metaflow_without_flows_is_rejected():
    with pytest.raises(JobValidationError):
        build_job("J", 0.0, [ComputeTask("t", "J", 0, 1.0, {"mf"})], [Metaflow("mf", "J", frozenset(), "t")], [])


def test_flow_referencing_missing_metaflow_is_rejected():
    with pytest.raises(JobValidationError):
        build_job("J", 0.0, [ComputeTask("t", "J", 0, 1.0)], [], [Flow("f", "J", "mf", 0, 1, 1.0)])


def test_metaflow_referencing_missing_task_is_rejected():
    with pytest.raises(JobValidationError):
        build_job(
            "J",
            0.0,
            [ComputeTask("t", "J", 0, 1.0)],
            [Metaflow("mf", "J", frozenset({"f"}), "ghost")],
            [Flow("f", "J", "mf", 0, 1, 1.0)],
        )


def test_consumer_must_depend_on_its_metaflow():
    with pytest.raises(JobValidationError):
        build_job(
            "J",
            0.0,
            [ComputeTask("t", "J", 0, 1.0)],
            [Metaflow("mf", "J", frozenset({"f"}), "t")],
            [Flow("f", "J", "mf", 0, 1, 1.0)],
        )


def test_entities_of_another_job_are_rejected():
    with pytest.raises(JobValidationError):
        build_job("J", 0.0, [ComputeTask("t", "K", 0, 1.0)], [], [])


def test_flow_and_task_field_checks():
    with pytest.raises(InvalidArgumentError):
        Flow("f", "J", "mf", 0, 1, 0.0)
    with pytest.raises(InvalidArgumentError):
        Flow("f", "J", "mf", 0, 1, 2.0, 3.0)
    with pytest.raises(InvalidArgumentError):
        ComputeTask("t", "J", 0, -1.0)


def test_metaflow_state_follows_remaining_sizes():
    job = build_job(
        "J",
        0.0,
        [ComputeTask("t", "J", 0, 1.0, {"mf"})],
        [Metaflow("mf", "J", frozenset({"f"}), "t")],
        [Flow("f", "J", "mf", 0, 1, 2.0, 0.0)],
    )
    assert job.metaflow("mf").state is MetaflowStatus.FINISHED


def test_ancestor_metaflows_follow_task_chains(four_metaflows):
    assert ancestor_metaflows(four_metaflows, "c4") == {"MF1", "MF2", "MF3", "MF4"}
    assert ancestor_metaflows(four_metaflows, "c3") == {"MF1", "MF3"}


def test_ancestor_metaflows_of_free_task_is_empty():
    job = build_job("J", 0.0, [ComputeTask("t", "J", 0, 1.0)], [], [])
    assert ancestor_metaflows(job, "t") == frozenset()


def test_ancestor_metaflows_unknown_task():
    with pytest.raises(UnknownEntityError):
        ancestor_metaflows(single_flow_job(), "nope")


def test_unlockable_tasks_examples(four_metaflows):
    assert unlockable_tasks(four_metaflows, "MF1", set(), set()) == {"c1"}
    assert unlockable_tasks(four_metaflows, "MF2", set(), set()) == {"c2"}
    assert unlockable_tasks(four_metaflows, "MF3", set(), set()) == frozenset()
    assert unlockable_tasks(four_metaflows, "MF2", {"MF1", "MF3", "MF4"}, set()) == {"c2", "c4"}


def test_unlockable_tasks_rejects_finished_and_unknown_metaflows(four_metaflows):
    with pytest.raises(InvalidArgumentError):
        unlockable_tasks(four_metaflows, "MF1", {"MF1"}, set())
    with pytest.raises(UnknownEntityError):
        unlockable_tasks(four_metaflows, "MF9", set(), set())


def test_remaining_size_examples():
    job = build_job(
        "J",
        0.0,
        [ComputeTask("t", "J", 2, 1.0, {"mf"})],
        [Metaflow("mf", "J", frozenset({"a", "b"}), "t")],
        [Flow("a", "J", "mf", 0, 2, 3.0), Flow("b", "J", "mf", 1, 2, 1.0)],
    )
    assert remaining_size(job, "mf") == 4.0
    assert remaining_size(job, "mf", {"a": 1.0, "b": 1.0}) == 2.0
    assert remaining_size(job, "mf", {"a": 0.0, "b": 0.0}) == 0


def test_critical_path_load_takes_the_heaviest_chain():
    tasks = [
        ComputeTask("a", "J", 0, 2.0),
        ComputeTask("b", "J", 0, 5.0),
        ComputeTask("c", "J", 0, 1.0, task_deps={"a"}),
        ComputeTask("d", "J", 0, 1.5, task_deps={"c", "b"}),
    ]
    assert critical_path_load(build_job("J", 0.0, tasks, [], [])) == 6.5


def _fire_all(job, done_metaflows, finished_tasks):
    """Fire any task whose prerequisites are met, one at a time, until nothing changes."""
    fired = set(finished_tasks)
    progress = True
    while progress:
        progress = False
        for task in job.tasks.values():
            if task.id not in fired and task.metaflow_deps <= done_metaflows and task.task_deps <= fired:
                fired.add(task.id)
                progress = True
    return fired


@pytest.mark.parametrize("seed", range(40))
def test_unlockable_tasks_matches_exhaustive_cascade(seed):
    rng = np.random.default_rng(seed)
    job = random_job(rng, "R", num_machines=3, max_tasks=6)
    metaflows = sorted(job.metaflows)
    states = {()}
    for _ in range(30):
        picked = [m for m in metaflows if rng.random() < 0.5]
        states.add(tuple(picked))
    for finished in sorted(states):
        finished = set(finished)
        for done_tasks in (set(), _fire_all(job, finished, set())):
            for target in metaflows:
                if target in finished:
                    continue
                expected = _fire_all(job, finished | {target}, done_tasks) - _fire_all(job, finished, done_tasks)
                assert unlockable_tasks(job, target, finished, done_tasks) == expected


@pytest.mark.parametrize("seed", range(20))
def test_ancestor_metaflows_are_monotone_along_dependencies(seed):
    job = random_job(np.random.default_rng(seed), "R", num_machines=3, max_tasks=6)
    for task in job.tasks.values():
        mine = ancestor_metaflows(job, task.id)
        assert task.metaflow_deps <= mine
        for dep in task.task_deps:
            assert ancestor_metaflows(job, dep) <= mine


@pytest.mark.parametrize("seed", range(20))
def test_sole_unfinished_prerequisite_unlocks_its_consumer(seed):
    job = random_job(np.random.default_rng(seed), "R", num_machines=3, max_tasks=6)
    for mf_id, mf in job.metaflows.items():
        finished = {m for m in job.metaflows if m != mf_id}
        assert mf.consumer_task in unlockable_tasks(job, mf_id, finished, set())
