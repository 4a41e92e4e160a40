from __future__ import annotations

import csv
import io
import json
from dataclasses import asdict, dataclass
from pathlib import Path
from typing import Any, Dict, Iterable, List, Mapping, Optional

from core.engine import SimReport
from core.failures import InvalidArgumentError
from core.schema_validate import validate_object

CSV_HEADER = ("scheduler", "job_id", "release", "cct", "jct")
AGGREGATE_COLUMNS = ("scheduler", "avg_cct", "avg_jct", "speedup_vs_varys")


@dataclass(frozen=True)
class ResultRow:
    scheduler: str
    job_id: str
    release: float
    cct: float
    jct: float


@dataclass(frozen=True)
class Aggregate:
    scheduler: str
    avg_cct: float
    avg_jct: float
    speedup_vs_varys: Optional[float]


def _fmt(value: float) -> str:
    return f"{value:.6f}"


def collect_rows(reports: Mapping[str, SimReport]) -> List[ResultRow]:
    rows = [
        ResultRow(name, r.job_id, float(r.release), float(r.cct), float(r.jct))
        for name, report in reports.items()
        for r in report.per_job
    ]
    return sorted(rows, key=lambda row: (row.scheduler, row.release, row.job_id))


def aggregate(reports: Mapping[str, SimReport]) -> List[Aggregate]:
    """Average CCT/JCT per scheduler; speedup is avg_jct(varys) / avg_jct(scheduler)."""
    baseline = reports.get("varys")
    out = []
    for name in sorted(reports):
        report = reports[name]
        speedup = None
        if baseline is not None and report.avg_jct > 0:
            speedup = float(baseline.avg_jct) / float(report.avg_jct)
        out.append(Aggregate(name, float(report.avg_cct), float(report.avg_jct), speedup))
    return out


def format_csv(rows: Iterable[ResultRow], aggregates: Iterable[Aggregate]) -> str:
    buf = io.StringIO()
    writer = csv.writer(buf, lineterminator="\n")
    writer.writerow(CSV_HEADER)
    for row in rows:
        writer.writerow([row.scheduler, row.job_id, _fmt(row.release), _fmt(row.cct), _fmt(row.jct)])
    writer.writerow(["#columns", *AGGREGATE_COLUMNS])
    for agg in aggregates:
        speedup = "" if agg.speedup_vs_varys is None else _fmt(agg.speedup_vs_varys)
        writer.writerow(["#avg", agg.scheduler, _fmt(agg.avg_cct), _fmt(agg.avg_jct), speedup])
    return buf.getvalue()


def results_document(
    config: Dict[str, Any],
    rows: Iterable[ResultRow],
    aggregates: Iterable[Aggregate],
    metrics: Optional[Dict[str, int]] = None,
) -> Dict[str, Any]:
    doc: Dict[str, Any] = {
        "config": config,
        "rows": [asdict(r) for r in rows],
        "aggregates": [asdict(a) for a in aggregates],
    }
    if metrics is not None:
        doc["metrics"] = metrics
    result = validate_object("experiment_result.v1", doc)
    if not result.ok:
        raise InvalidArgumentError(f"results document does not match schema: {result.error}", schema=result.schema_id)
    return doc


def format_json(doc: Dict[str, Any]) -> str:
    return json.dumps(doc, indent=2, sort_keys=True) + "\n"


def write_text(path: str | Path, text: str) -> Path:
    path = Path(path)
    path.parent.mkdir(parents=True, exist_ok=True)
    path.write_text(text, encoding="utf-8")
    return path
