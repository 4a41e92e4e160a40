import os
from dataclasses import dataclass


@dataclass(frozen=True)
class Settings:
    log_level: str = os.getenv("LOG_LEVEL", "INFO")

    port_capacity: float = float(os.getenv("PORT_CAPACITY", "1.0"))
    mb_scale: float = float(os.getenv("MB_SCALE", "1.0"))
    time_scale: float = float(os.getenv("TIME_SCALE", "0.001"))

    load_noise: float = float(os.getenv("LOAD_NOISE", "0.2"))
    default_rho: float = float(os.getenv("DEFAULT_RHO", "1.0"))
    k_per_reducer: int = int(os.getenv("K_PER_REDUCER", "2"))
    default_seed: int = int(os.getenv("DEFAULT_SEED", "0"))
    default_n_jobs: int = int(os.getenv("DEFAULT_N_JOBS", "50"))
    workers: int = int(os.getenv("WORKERS", "1"))

    redis_host: str = os.getenv("REDIS_HOST", "localhost")
    redis_port: int = int(os.getenv("REDIS_PORT", "6379"))
    redis_db: int = int(os.getenv("REDIS_DB", "0"))

    namespace: str = os.getenv("NAMESPACE", "metaflow")
    run_log_stream: str = os.getenv("RUN_LOG_STREAM", "")
    metrics_prefix: str = os.getenv("METRICS_PREFIX", "")

    def __post_init__(self) -> None:
        namespace = (self.namespace or "metaflow").strip(":")
        if not self.run_log_stream:
            object.__setattr__(self, "run_log_stream", f"{namespace}:runlog")
        if not self.metrics_prefix:
            object.__setattr__(self, "metrics_prefix", f"{namespace}:metrics")
