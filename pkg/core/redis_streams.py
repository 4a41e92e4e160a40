from __future__ import annotations

import redis

from core.config import Settings


def build_redis_client(settings: Settings | None = None) -> redis.Redis:
    settings = settings or Settings()
    return redis.Redis(host=settings.redis_host, port=settings.redis_port, db=settings.redis_db, decode_responses=True)
