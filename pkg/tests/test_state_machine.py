import pytest

from core.state_machine import IllegalTransition, MetaflowStatus, TaskStatus, assert_transition, is_allowed


def test_task_lifecycle_is_linear():
    assert assert_transition(TaskStatus.PENDING, TaskStatus.READY).ok
    assert assert_transition(TaskStatus.READY, TaskStatus.RUNNING).ok
    assert assert_transition(TaskStatus.RUNNING, TaskStatus.DONE).ok


def test_task_cannot_skip_ready():
    with pytest.raises(IllegalTransition):
        assert_transition(TaskStatus.PENDING, TaskStatus.RUNNING)


def test_finished_metaflow_is_terminal():
    assert is_allowed(MetaflowStatus.ACTIVE, MetaflowStatus.FINISHED)
    with pytest.raises(IllegalTransition):
        assert_transition(MetaflowStatus.FINISHED, MetaflowStatus.ACTIVE)


def test_statuses_do_not_mix_between_entities():
    assert not is_allowed(TaskStatus.PENDING, MetaflowStatus.ACTIVE)


def test_pending_keeps_its_own_successors_per_entity():
    assert is_allowed(TaskStatus.PENDING, TaskStatus.READY)
    assert is_allowed(MetaflowStatus.PENDING, MetaflowStatus.ACTIVE)
    assert not is_allowed(MetaflowStatus.PENDING, TaskStatus.READY)
    assert not is_allowed(TaskStatus.RUNNING, MetaflowStatus.FINISHED)
