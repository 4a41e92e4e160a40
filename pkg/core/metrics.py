from __future__ import annotations

from collections import defaultdict
from typing import Dict

from core.config import Settings


class MetricsRecorder:
    """Deterministic activity counters for simulation runs, optionally mirrored to Redis hashes."""

    def __init__(self, redis_client=None, prefix: str | None = None):
        self.redis = redis_client
        self.prefix = prefix or Settings().metrics_prefix
        self._counters: Dict[str, int] = defaultdict(int)

    def _key(self, name: str) -> str:
        return f"{self.prefix}:counter:{name}"

    def inc(self, name: str, value: int = 1) -> None:
        self._counters[name] += value
        if self.redis is not None:
            self.redis.hincrby(self._key(name), "value", value)

    def get(self, name: str) -> int:
        return self._counters.get(name, 0)

    def merge(self, other: "MetricsRecorder") -> None:
        for name, value in sorted(other.snapshot().items()):
            self.inc(name, value)

    def snapshot(self) -> Dict[str, int]:
        return {name: self._counters[name] for name in sorted(self._counters)}
