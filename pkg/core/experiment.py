from __future__ import annotations

import logging
from concurrent.futures import ThreadPoolExecutor
from pathlib import Path
from typing import Dict, List, Literal, Optional, Tuple

from pydantic import BaseModel, ConfigDict, Field, field_validator

from core.config import Settings
from core.engine import SimOptions, SimReport, run
from core.fabric import Fabric, new_fabric
from core.metrics import MetricsRecorder
from core.model import JobDag
from core.run_log import RunLogger
from core.schedulers import SCHEDULERS
from core.workload import DagTopology, LoadModel, SplitMode, build_jobs, load_trace, sample_jobs

log = logging.getLogger(__name__)

_settings = Settings()


class ExperimentConfig(BaseModel):
    model_config = ConfigDict(frozen=True)

    trace_path: Path
    topology: DagTopology = DagTopology.TOTAL_ORDER
    schedulers: List[str] = Field(default_factory=lambda: ["msa", "varys"])
    n_jobs: int = _settings.default_n_jobs
    seed: int = _settings.default_seed
    rho: float = _settings.default_rho
    k_per_reducer: int = _settings.k_per_reducer
    work_conserving: bool = False
    isolation: Literal["single", "shared"] = "single"
    split: SplitMode = SplitMode.PER_MAPPER
    mb_scale: float = _settings.mb_scale
    time_scale: float = _settings.time_scale
    load_noise: float = _settings.load_noise
    port_capacity: float = _settings.port_capacity
    workers: int = _settings.workers
    out: Optional[Path] = None
    format: Literal["csv", "json"] = "csv"

    @field_validator("trace_path")
    @classmethod
    def _trace_exists(cls, v: Path) -> Path:
        if not v.is_file():
            raise ValueError(f"trace file not found: {v}")
        return v

    @field_validator("topology", mode="before")
    @classmethod
    def _topology(cls, v):
        return DagTopology.from_name(v) if isinstance(v, str) else v

    @field_validator("schedulers")
    @classmethod
    def _known_schedulers(cls, v: List[str]) -> List[str]:
        if not v:
            raise ValueError("at least one scheduler is required")
        unknown = [s for s in v if s not in SCHEDULERS]
        if unknown:
            raise ValueError(f"unknown schedulers: {', '.join(unknown)}")
        return list(dict.fromkeys(v))

    @field_validator("n_jobs", "k_per_reducer", "workers")
    @classmethod
    def _at_least_one(cls, v: int) -> int:
        if v < 1:
            raise ValueError("must be at least 1")
        return v

    @field_validator("rho")
    @classmethod
    def _non_negative(cls, v: float) -> float:
        if v < 0:
            raise ValueError("must be non-negative")
        return v

    @field_validator("mb_scale", "time_scale", "port_capacity")
    @classmethod
    def _positive(cls, v: float) -> float:
        if not v > 0:
            raise ValueError("must be positive")
        return v

    def sim_options(self) -> SimOptions:
        return SimOptions(work_conserving=self.work_conserving)

    def to_payload(self) -> Dict[str, object]:
        return self.model_dump(mode="json", exclude={"out", "workers"})


def prepare_jobs(config: ExperimentConfig) -> Tuple[List[JobDag], Fabric]:
    num_machines, trace = load_trace(config.trace_path, config.mb_scale)
    sampled = sample_jobs(trace, config.n_jobs, config.seed)
    loads = LoadModel(rho=config.rho, seed=config.seed, noise=config.load_noise)
    jobs = build_jobs(
        sampled,
        config.topology,
        loads,
        k_per_reducer=config.k_per_reducer,
        split=config.split,
        time_scale=config.time_scale,
    )
    log.info(
        "Jobs prepared",
        extra={"trace": str(config.trace_path), "jobs": len(jobs), "topology": config.topology.value},
    )
    return jobs, new_fabric(num_machines, config.port_capacity)


def merge_reports(scheduler: str, reports: List[SimReport]) -> SimReport:
    per_job = tuple(r for report in reports for r in report.per_job)
    count = len(per_job)
    return SimReport(
        scheduler=scheduler,
        per_job=per_job,
        per_flow=tuple(sorted(f for report in reports for f in report.per_flow)),
        per_metaflow=tuple(sorted(m for report in reports for m in report.per_metaflow)),
        avg_jct=sum(r.jct for r in per_job) / count if count else 0.0,
        avg_cct=sum(r.cct for r in per_job) / count if count else 0.0,
    )


def simulate(
    jobs: List[JobDag],
    fabric: Fabric,
    scheduler: str,
    *,
    isolation: str = "single",
    options: Optional[SimOptions] = None,
    metrics: Optional[MetricsRecorder] = None,
    run_logger: Optional[RunLogger] = None,
) -> SimReport:
    """Run every job alone on the fabric (``single``) or all of them together (``shared``)."""
    if isolation == "shared":
        return run(jobs, fabric, scheduler, options, metrics=metrics, run_logger=run_logger)
    reports = [run([job], fabric, scheduler, options, metrics=metrics, run_logger=run_logger) for job in jobs]
    return merge_reports(scheduler, reports)


def run_experiment(
    config: ExperimentConfig,
    *,
    redis_client=None,
    log_decisions: bool = False,
) -> Tuple[Dict[str, SimReport], Dict[str, RunLogger], MetricsRecorder]:
    """Simulate the sampled batch under every requested scheduler.

    Each scheduler gets its own metrics and run logger so threads share nothing;
    results are merged in scheduler order afterwards.
    """

    jobs, fabric = prepare_jobs(config)
    options = SimOptions(work_conserving=config.work_conserving, log_decisions=log_decisions)

    def one(name: str) -> Tuple[SimReport, RunLogger, MetricsRecorder]:
        metrics = MetricsRecorder(prefix=f"{_settings.metrics_prefix}:{name}")
        logger = RunLogger(run_id=name, redis_client=redis_client)
        report = simulate(
            jobs, fabric, name, isolation=config.isolation, options=options, metrics=metrics, run_logger=logger
        )
        return report, logger, metrics

    with ThreadPoolExecutor(max_workers=config.workers) as pool:
        outcomes = list(pool.map(one, config.schedulers))

    reports: Dict[str, SimReport] = {}
    loggers: Dict[str, RunLogger] = {}
    totals = MetricsRecorder()
    for name, (report, logger, metrics) in zip(config.schedulers, outcomes):
        reports[name] = report
        loggers[name] = logger
        for counter, value in metrics.snapshot().items():
            totals.inc(f"{name}.{counter}", value)
    return reports, loggers, totals
