from __future__ import annotations

import logging
from dataclasses import dataclass
from enum import Enum
from typing import Dict, Set, Union

log = logging.getLogger(__name__)


class TaskStatus(str, Enum):
    PENDING = "PENDING"
    READY = "READY"
    RUNNING = "RUNNING"
    DONE = "DONE"


class MetaflowStatus(str, Enum):
    PENDING = "PENDING"
    ACTIVE = "ACTIVE"
    FINISHED = "FINISHED"


Status = Union[TaskStatus, MetaflowStatus]

# Members of both enums compare equal by value (both have PENDING), so each type keeps its own table.
_ALLOWED: Dict[type, Dict[Status, Set[Status]]] = {
    TaskStatus: {
        TaskStatus.PENDING: {TaskStatus.READY},
        TaskStatus.READY: {TaskStatus.RUNNING},
        TaskStatus.RUNNING: {TaskStatus.DONE},
        TaskStatus.DONE: set(),
    },
    MetaflowStatus: {
        MetaflowStatus.PENDING: {MetaflowStatus.ACTIVE},
        MetaflowStatus.ACTIVE: {MetaflowStatus.FINISHED},
        MetaflowStatus.FINISHED: set(),
    },
}


def _allowed_from(from_status: Status) -> Set[Status]:
    return _ALLOWED.get(type(from_status), {}).get(from_status, set())


@dataclass(frozen=True)
class TransitionResult:
    ok: bool
    from_status: Status
    to_status: Status
    reason: str | None = None


@dataclass
class IllegalTransition(Exception):
    entity_id: str | None
    from_state: Status
    to_state: Status
    allowed_transitions: frozenset


def is_allowed(from_status: Status, to_status: Status) -> bool:
    if type(from_status) is not type(to_status):
        return False
    return to_status in _allowed_from(from_status)


def assert_transition(from_status: Status, to_status: Status, *, entity_id: str | None = None) -> TransitionResult:
    if is_allowed(from_status, to_status):
        return TransitionResult(True, from_status, to_status, None)
    allowed = frozenset(_allowed_from(from_status))
    log.error(
        "Illegal transition",
        extra={
            "entity_id": entity_id,
            "from_state": from_status.value,
            "to_state": to_status.value,
            "allowed": sorted(s.value for s in allowed),
        },
    )
    raise IllegalTransition(entity_id=entity_id, from_state=from_status, to_state=to_status, allowed_transitions=allowed)
