from __future__ import annotations

import argparse
import json
import logging
import sys
from pathlib import Path
from typing import Dict, Optional, Sequence

from pydantic import ValidationError

from core.config import Settings
from core.dag_io import write_dag
from core.engine import SimOptions, SimReport, run
from core.experiment import ExperimentConfig, prepare_jobs, run_experiment
from core.failures import (
    CapacityViolationError,
    DeadlockError,
    Failure,
    FailureCategory,
    InputFormatError,
    InvalidArgumentError,
    JobValidationError,
    UnknownEntityError,
)
from core.fixtures import MOTIVATION_EXPECTED, motivation_jobs
from core.logging import setup_logging
from core.redis_streams import build_redis_client
from core.results import aggregate, collect_rows, format_csv, format_json, results_document, write_text
from core.run_log import write_jsonl
from core.schedulers import SCHEDULERS
from core.workload import synthesize_trace

log = logging.getLogger("cli")

EXIT_OK = 0
EXIT_USAGE = 1
EXIT_INPUT = 2
EXIT_ACCEPTANCE = 3
TOLERANCE = 1e-6


class _Parser(argparse.ArgumentParser):
    def error(self, message: str):  # argparse exits 2 by default
        self.print_usage(sys.stderr)
        self.exit(EXIT_USAGE, f"{self.prog}: error: {message}\n")


def _range(text: str) -> tuple[int, int]:
    lo, sep, hi = text.partition(",")
    try:
        low, high = int(lo), int(hi if sep else lo)
    except ValueError:
        raise argparse.ArgumentTypeError(f"expected <low>,<high>, got {text!r}") from None
    return low, high


def _experiment_flags(p: argparse.ArgumentParser, settings: Settings) -> None:
    p.add_argument("--trace", required=True, help="coflow-benchmark trace file")
    p.add_argument("--topology", choices=["total", "partial", "disorder"], default="total")
    p.add_argument("--n-jobs", type=int, default=settings.default_n_jobs)
    p.add_argument("--seed", type=int, default=settings.default_seed)
    p.add_argument("--rho", type=float, default=settings.default_rho)
    p.add_argument("--k-per-reducer", type=int, default=settings.k_per_reducer)
    p.add_argument("--split", choices=["per_mapper", "lump"], default="per_mapper")


def build_parser(settings: Settings | None = None) -> argparse.ArgumentParser:
    settings = settings or Settings()
    parser = _Parser(prog="metaflow-sim", description="Metaflow scheduling simulator")
    parser.add_argument("--log-level", default=settings.log_level)
    sub = parser.add_subparsers(dest="command", required=True)

    mot = sub.add_parser("motivation", help="replay the two-job motivation example and check its averages")
    mot.add_argument("--sched", action="append", choices=sorted(SCHEDULERS))
    mot.add_argument("--work-conserving", action="store_true")
    mot.add_argument("--out", help="also write the rows as CSV")

    run_p = sub.add_parser("run", help="simulate sampled trace jobs under one or more schedulers")
    _experiment_flags(run_p, settings)
    run_p.add_argument("--sched", action="append", choices=sorted(SCHEDULERS))
    run_p.add_argument("--work-conserving", action="store_true")
    run_p.add_argument("--isolation", choices=["single", "shared"], default="single")
    run_p.add_argument("--workers", type=int, default=settings.workers)
    run_p.add_argument("--out", help="results file (stdout when omitted)")
    run_p.add_argument("--format", choices=["csv", "json"], default="csv")
    run_p.add_argument("--run-log", help="write the event stream as JSON lines")
    run_p.add_argument("--run-log-redis", action="store_true", help="also append the event stream to Redis")

    gen = sub.add_parser("gen-dag", help="write one DAG document per sampled job")
    _experiment_flags(gen, settings)
    gen.add_argument("--out", required=True, help="output directory")

    syn = sub.add_parser("synth-trace", help="write a seeded synthetic trace")
    syn.add_argument("--jobs", type=int, default=settings.default_n_jobs)
    syn.add_argument("--machines", type=int, default=150)
    syn.add_argument("--seed", type=int, default=settings.default_seed)
    syn.add_argument("--mappers", type=_range, default=(1, 10), metavar="LOW,HIGH")
    syn.add_argument("--reducers", type=_range, default=(1, 10), metavar="LOW,HIGH")
    syn.add_argument("--mb", type=_range, default=(1, 100), metavar="LOW,HIGH")
    syn.add_argument("--gap-ms", type=_range, default=(0, 1000), metavar="LOW,HIGH")
    syn.add_argument("--out", help="trace file (stdout when omitted)")
    return parser


def _emit(text: str, out: Optional[str]) -> None:
    if out:
        write_text(out, text)
    else:
        sys.stdout.write(text)


def _config(args: argparse.Namespace, **extra) -> ExperimentConfig:
    return ExperimentConfig(
        trace_path=Path(args.trace),
        topology=args.topology,
        n_jobs=args.n_jobs,
        seed=args.seed,
        rho=args.rho,
        k_per_reducer=args.k_per_reducer,
        split=args.split,
        **extra,
    )


def _motivation_ok(name: str, report: SimReport, work_conserving: bool) -> bool:
    cct, jct = MOTIVATION_EXPECTED[name]
    if work_conserving and name == "msa":
        return report.avg_jct <= jct + TOLERANCE
    return abs(report.avg_cct - cct) <= TOLERANCE and abs(report.avg_jct - jct) <= TOLERANCE


def cmd_motivation(args: argparse.Namespace) -> int:
    schedulers = list(dict.fromkeys(args.sched or ["varys", "msa"]))
    jobs, fabric = motivation_jobs()
    options = SimOptions(work_conserving=args.work_conserving)
    reports: Dict[str, SimReport] = {name: run(jobs, fabric, name, options) for name in schedulers}

    print(f"{'scheduler':<10}{'job':<6}{'cct':>8}{'jct':>8}")
    for name, report in reports.items():
        for r in report.per_job:
            print(f"{name:<10}{r.job_id:<6}{r.cct:>8.3f}{r.jct:>8.3f}")
        print(f"{name:<10}{'avg':<6}{report.avg_cct:>8.3f}{report.avg_jct:>8.3f}")
    if args.out:
        write_text(args.out, format_csv(collect_rows(reports), aggregate(reports)))

    failed = [name for name, report in reports.items() if not _motivation_ok(name, report, args.work_conserving)]
    if failed:
        log.error("Motivation averages deviate", extra={"schedulers": failed})
        return EXIT_ACCEPTANCE
    return EXIT_OK


def cmd_run(args: argparse.Namespace) -> int:
    config = _config(
        args,
        schedulers=args.sched or ["msa", "varys"],
        work_conserving=args.work_conserving,
        isolation=args.isolation,
        workers=args.workers,
        out=Path(args.out) if args.out else None,
        format=args.format,
    )
    redis_client = build_redis_client() if args.run_log_redis else None
    reports, loggers, metrics = run_experiment(config, redis_client=redis_client, log_decisions=bool(args.run_log))
    rows = collect_rows(reports)
    aggregates = aggregate(reports)
    if config.format == "json":
        text = format_json(results_document(config.to_payload(), rows, aggregates, metrics.snapshot()))
    else:
        text = format_csv(rows, aggregates)
    _emit(text, args.out)
    if args.run_log:
        write_jsonl(args.run_log, loggers.values())
    for agg in aggregates:
        log.info(
            "Scheduler summary",
            extra={"scheduler": agg.scheduler, "avg_jct": agg.avg_jct, "speedup_vs_varys": agg.speedup_vs_varys},
        )
    return EXIT_OK


def cmd_gen_dag(args: argparse.Namespace) -> int:
    jobs, _ = prepare_jobs(_config(args))
    paths = [write_dag(job, args.out) for job in jobs]
    log.info("DAG documents written", extra={"count": len(paths), "out": args.out})
    print(len(paths))
    return EXIT_OK


def cmd_synth_trace(args: argparse.Namespace) -> int:
    text = synthesize_trace(
        args.jobs,
        num_machines=args.machines,
        seed=args.seed,
        mappers=args.mappers,
        reducers=args.reducers,
        mb=args.mb,
        gap_ms=args.gap_ms,
    )
    _emit(text, args.out)
    return EXIT_OK


COMMANDS = {
    "motivation": cmd_motivation,
    "run": cmd_run,
    "gen-dag": cmd_gen_dag,
    "synth-trace": cmd_synth_trace,
}


def _fail(failure: Failure, code: int) -> int:
    print(json.dumps(failure.to_payload(), sort_keys=True), file=sys.stderr)
    return code


def main(argv: Sequence[str] | None = None) -> int:
    args = build_parser().parse_args(argv)
    setup_logging(args.log_level)
    try:
        return COMMANDS[args.command](args)
    except (InputFormatError, JobValidationError, InvalidArgumentError, UnknownEntityError) as exc:
        log.error("Input rejected", extra={"command": args.command, "reason": str(exc)})
        return _fail(exc.failure, EXIT_INPUT)
    except (DeadlockError, CapacityViolationError) as exc:
        log.error("Simulation aborted", extra={"command": args.command, "category": exc.failure.category.value})
        return _fail(exc.failure, EXIT_INPUT)
    except ValidationError as exc:
        log.error("Invalid configuration", extra={"command": args.command})
        return _fail(Failure(FailureCategory.INVALID_ARGUMENT, str(exc)), EXIT_INPUT)
    except OSError as exc:
        log.error("I/O error", extra={"command": args.command, "reason": str(exc)})
        return _fail(Failure(FailureCategory.INPUT_FORMAT, str(exc)), EXIT_INPUT)


if __name__ == "__main__":
    sys.exit(main())
