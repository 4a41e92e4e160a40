from __future__ import annotations

import enum
from dataclasses import dataclass
from typing import Any, Dict, Iterable, Optional


class FailureCategory(str, enum.Enum):
    INVALID_ARGUMENT = "INVALID_ARGUMENT"
    INPUT_FORMAT = "INPUT_FORMAT"
    UNKNOWN_ENTITY = "UNKNOWN_ENTITY"
    CAPACITY_VIOLATION = "CAPACITY_VIOLATION"
    DEADLOCK = "DEADLOCK"


@dataclass
class Failure:
    category: FailureCategory
    reason: str
    details: Optional[Dict[str, Any]] = None

    def to_payload(self) -> Dict[str, Any]:
        payload: Dict[str, Any] = {"category": self.category.value, "reason": self.reason}
        if self.details:
            payload["details"] = self.details
        return payload


class InvalidArgumentError(ValueError):
    def __init__(self, message: str, **details: Any):
        super().__init__(message)
        self.failure = Failure(FailureCategory.INVALID_ARGUMENT, message, details or None)


class JobValidationError(ValueError):
    def __init__(self, job: str, message: str, entities: Iterable[str] = ()):
        self.job = job
        self.entities = sorted(entities)
        super().__init__(f"job {job}: {message}" + (f" ({', '.join(self.entities)})" if self.entities else ""))
        self.failure = Failure(FailureCategory.INVALID_ARGUMENT, str(self), {"job": job, "entities": self.entities})


class UnknownEntityError(KeyError):
    def __init__(self, kind: str, entity_id: str):
        super().__init__(f"unknown {kind} {entity_id}")
        self.kind = kind
        self.entity_id = entity_id
        self.failure = Failure(FailureCategory.UNKNOWN_ENTITY, f"unknown {kind} {entity_id}", {"kind": kind, "id": entity_id})

    def __str__(self) -> str:
        return f"unknown {self.kind} {self.entity_id}"


class InputFormatError(ValueError):
    def __init__(self, source: str, line: int, message: str):
        super().__init__(f"{source}:{line}: {message}")
        self.source = source
        self.line = line
        self.failure = Failure(FailureCategory.INPUT_FORMAT, message, {"source": source, "line": line})


class CapacityViolationError(RuntimeError):
    def __init__(self, message: str, violations: list[Dict[str, Any]]):
        super().__init__(message)
        self.violations = violations
        self.failure = Failure(FailureCategory.CAPACITY_VIOLATION, message, {"violations": violations})


class DeadlockError(RuntimeError):
    def __init__(self, now: float, blocked_metaflows: Iterable[str], pending_tasks: Iterable[str]):
        self.now = now
        self.blocked_metaflows = sorted(blocked_metaflows)
        self.pending_tasks = sorted(pending_tasks)
        message = (
            f"no further event possible at t={now}: "
            f"blocked metaflows [{', '.join(self.blocked_metaflows)}], pending tasks [{', '.join(self.pending_tasks)}]"
        )
        super().__init__(message)
        self.failure = Failure(
            FailureCategory.DEADLOCK,
            message,
            {"now": now, "blocked_metaflows": self.blocked_metaflows, "pending_tasks": self.pending_tasks},
        )
