"""Event stream of a simulation run.

Records are always kept in memory. They are additionally appended to a JSON
lines file when ``path`` is given and to a Redis stream when a client is
given.
"""

from __future__ import annotations

import json
from dataclasses import asdict, dataclass, field
from pathlib import Path
from typing import Any, Dict, Iterable, Optional

from core.config import Settings


@dataclass
class RunRecord:
    run_id: str
    seq: int
    time: float
    kind: str
    entity: str
    job: Optional[str] = None
    details: Dict[str, Any] = field(default_factory=dict)

    def to_json(self) -> str:
        return json.dumps(asdict(self), sort_keys=True)


class RunLogger:
    def __init__(self, run_id: str, redis_client=None, stream: str | None = None, path: str | Path | None = None):
        self.run_id = run_id
        self.redis = redis_client
        self.stream = stream or Settings().run_log_stream
        self.path = Path(path) if path else None
        self._records: list[RunRecord] = []
        if self.path is not None:
            self.path.parent.mkdir(parents=True, exist_ok=True)

    def record(self, time: float, kind: str, entity: str, job: str | None = None, details: Dict[str, Any] | None = None) -> RunRecord:
        rec = RunRecord(self.run_id, len(self._records), float(time), kind, entity, job, details or {})
        self._records.append(rec)
        payload = rec.to_json()
        if self.path is not None:
            with self.path.open("a", encoding="utf-8") as f:
                f.write(payload + "\n")
        if self.redis is not None and hasattr(self.redis, "xadd"):
            self.redis.xadd(self.stream, {"record": payload})
        return rec

    def log_event(self, event) -> RunRecord:
        return self.record(event.time, event.kind.value, event.entity, event.job)

    def log_decision(self, now: float, scheduler: str, decision) -> RunRecord:
        details = {
            "rates": {f: float(r) for f, r in sorted(decision.allocation.positive().items())},
            "order": [[mf, g.kind.value, float(g.value)] for mf, g in decision.ordered_metaflows],
            "blocked": list(decision.blocked),
        }
        return self.record(now, "schedule", scheduler, None, details)

    def records(self) -> list[Dict[str, Any]]:
        return [asdict(r) for r in self._records]

    def fetch(self, count: int = 1000) -> list[Dict[str, Any]]:
        """Read back this run's records from the Redis stream, or from memory without a client."""
        if self.redis is not None and hasattr(self.redis, "xrange"):
            out = []
            for _, fields in self.redis.xrange(self.stream, count=count):
                raw = fields.get("record") or fields.get(b"record")
                if isinstance(raw, bytes):
                    raw = raw.decode("utf-8")
                rec = json.loads(raw)
                if rec.get("run_id") == self.run_id:
                    out.append(rec)
            return out
        return self.records()[:count]


def load_jsonl(path: str | Path) -> list[Dict[str, Any]]:
    path = Path(path)
    if not path.exists():
        return []
    with path.open("r", encoding="utf-8") as f:
        return [json.loads(line) for line in f if line.strip()]


def write_jsonl(path: str | Path, loggers: Iterable[RunLogger]) -> Path:
    """Dump the in-memory records of several loggers, one logger after another."""
    path = Path(path)
    path.parent.mkdir(parents=True, exist_ok=True)
    with path.open("w", encoding="utf-8") as f:
        for logger in loggers:
            for rec in logger._records:
                f.write(rec.to_json() + "\n")
    return path
