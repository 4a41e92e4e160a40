import json

import pytest

import services.cli.main as cli
from core.dag_io import load_dag
from core.fabric import RateAllocation
from core.run_log import load_jsonl
from core.schedulers import SCHEDULERS, ScheduleDecision
from core.schema_validate import validate_object
from core.workload import parse_trace


def _error_payload(err: str) -> dict:
    return json.loads(err.strip().splitlines()[-1])


def _run_args(trace, *extra):
    return ["run", "--trace", str(trace), "--n-jobs", "5", "--seed", "3", *extra]


def test_motivation_passes_and_prints_the_table(capsys):
    assert cli.main(["motivation"]) == cli.EXIT_OK
    out = capsys.readouterr().out
    lines = out.splitlines()
    assert lines[0].split() == ["scheduler", "job", "cct", "jct"]
    assert "varys     avg      3.500   8.000" in out
    assert "msa       avg      4.000   7.000" in out


@pytest.mark.parametrize("extra", [["--sched", "fair"], ["--work-conserving"], ["--sched", "msa", "--sched", "varys", "--sched", "fair"]])
def test_motivation_variants_pass(extra):
    assert cli.main(["motivation", *extra]) == cli.EXIT_OK


def test_motivation_writes_csv(tmp_path):
    out = tmp_path / "motivation.csv"
    assert cli.main(["motivation", "--out", str(out)]) == cli.EXIT_OK
    text = out.read_text()
    assert text.splitlines()[0] == "scheduler,job_id,release,cct,jct"
    assert "#avg,msa,4.000000,7.000000,1.142857" in text
    assert "#avg,varys,3.500000,8.000000,1.000000" in text


def test_motivation_deviation_exits_with_acceptance_code(monkeypatch):
    monkeypatch.setitem(cli.MOTIVATION_EXPECTED, "msa", (4.0, 6.0))
    assert cli.main(["motivation"]) == cli.EXIT_ACCEPTANCE


@pytest.mark.parametrize(
    "rates, category",
    [({}, "DEADLOCK"), ({"J1/f1": 2.0}, "CAPACITY_VIOLATION")],
)
def test_simulation_failures_exit_with_a_payload(monkeypatch, capsys, rates, category):
    monkeypatch.setitem(SCHEDULERS, "msa", lambda state, **_: ScheduleDecision(RateAllocation(rates)))
    assert cli.main(["motivation", "--sched", "msa"]) == cli.EXIT_INPUT
    assert _error_payload(capsys.readouterr().err)["category"] == category


def test_run_writes_csv_rows_and_aggregates(trace_file, capsys):
    assert cli.main(_run_args(trace_file)) == cli.EXIT_OK
    lines = capsys.readouterr().out.splitlines()
    assert lines[0] == "scheduler,job_id,release,cct,jct"
    rows = [line for line in lines[1:] if not line.startswith("#")]
    assert len(rows) == 10
    assert [line.split(",")[0] for line in rows] == ["msa"] * 5 + ["varys"] * 5
    assert lines[-3] == "#columns,scheduler,avg_cct,avg_jct,speedup_vs_varys"
    assert lines[-2].startswith("#avg,msa,")
    assert lines[-1].startswith("#avg,varys,") and lines[-1].endswith(",1.000000")
    assert float(lines[-2].split(",")[-1]) > 0


def test_run_single_job(trace_file, capsys):
    assert cli.main(["run", "--trace", str(trace_file), "--n-jobs", "1"]) == cli.EXIT_OK
    rows = [line for line in capsys.readouterr().out.splitlines()[1:] if not line.startswith("#")]
    assert len(rows) == 2


@pytest.mark.parametrize("topology", ["total", "partial", "disorder"])
def test_run_is_byte_identical_when_repeated(trace_file, tmp_path, topology):
    first, second = tmp_path / "a.csv", tmp_path / "b.csv"
    args = _run_args(trace_file, "--topology", topology, "--sched", "fair", "--sched", "msa", "--sched", "varys")
    assert cli.main([*args, "--out", str(first)]) == cli.EXIT_OK
    assert cli.main([*args, "--out", str(second), "--workers", "3"]) == cli.EXIT_OK
    assert first.read_bytes() == second.read_bytes()


def test_run_json_document_matches_schema(trace_file, tmp_path):
    out = tmp_path / "results.json"
    assert cli.main([*_run_args(trace_file, "--isolation", "shared"), "--format", "json", "--out", str(out)]) == cli.EXIT_OK
    doc = json.loads(out.read_text())
    assert validate_object("experiment_result.v1", doc).ok
    assert doc["config"]["topology"] == "total"
    assert doc["config"]["isolation"] == "shared"
    assert doc["metrics"]["msa.scheduler.rounds"] > 0
    assert {a["scheduler"] for a in doc["aggregates"]} == {"msa", "varys"}


def test_run_log_records_match_schema(trace_file, tmp_path):
    log_path = tmp_path / "run.jsonl"
    assert cli.main([*_run_args(trace_file), "--out", str(tmp_path / "r.csv"), "--run-log", str(log_path)]) == cli.EXIT_OK
    records = load_jsonl(log_path)
    assert {r["run_id"] for r in records} == {"msa", "varys"}
    assert any(r["kind"] == "schedule" for r in records)
    assert all(validate_object("run_record.v1", r).ok for r in records)


def test_run_log_can_go_to_redis(trace_file, tmp_path, monkeypatch, redis_client):
    monkeypatch.setattr(cli, "build_redis_client", lambda: redis_client)
    assert cli.main([*_run_args(trace_file), "--out", str(tmp_path / "r.csv"), "--run-log-redis"]) == cli.EXIT_OK
    assert sum(len(v) for v in redis_client.streams.values()) > 0


def test_gen_dag_writes_one_file_per_job(trace_file, tmp_path, capsys):
    out = tmp_path / "dags"
    args = ["gen-dag", "--trace", str(trace_file), "--n-jobs", "7", "--topology", "disorder", "--out", str(out)]
    assert cli.main(args) == cli.EXIT_OK
    assert capsys.readouterr().out.strip() == "7"
    files = sorted(out.iterdir())
    assert len(files) == 7
    for path in files:
        dag = load_dag(path)
        assert all(t.metaflow_deps == set(dag.metaflows) for t in dag.tasks.values())
    names = [p.name for p in files]
    assert cli.main(args) == cli.EXIT_OK
    assert [p.name for p in sorted(out.iterdir())] == names


def test_synth_trace_to_stdout_and_file(tmp_path, capsys):
    assert cli.main(["synth-trace", "--jobs", "4", "--machines", "9", "--seed", "2", "--mappers", "1,3", "--reducers", "1,3"]) == cli.EXIT_OK
    text = capsys.readouterr().out
    num_machines, jobs = parse_trace(text)
    assert (num_machines, len(jobs)) == (9, 4)
    out = tmp_path / "t.txt"
    assert cli.main(["synth-trace", "--jobs", "4", "--machines", "9", "--seed", "2", "--mappers", "1,3", "--reducers", "1,3", "--out", str(out)]) == 0
    assert out.read_text() == text


def test_missing_trace_is_an_input_error(tmp_path, capsys):
    assert cli.main(["run", "--trace", str(tmp_path / "nope.txt")]) == cli.EXIT_INPUT
    assert _error_payload(capsys.readouterr().err)["category"] == "INVALID_ARGUMENT"


def test_malformed_trace_reports_the_line(tmp_path, capsys):
    trace = tmp_path / "bad.txt"
    trace.write_text("4 2\n1 0 1 1 1 2:3\n2 0 x 1 1 2:3\n")
    assert cli.main(["run", "--trace", str(trace), "--n-jobs", "1"]) == cli.EXIT_INPUT
    payload = _error_payload(capsys.readouterr().err)
    assert payload["category"] == "INPUT_FORMAT"
    assert payload["details"] == {"source": str(trace), "line": 3}


def test_oversized_sample_is_an_input_error(trace_file, capsys):
    assert cli.main(["run", "--trace", str(trace_file), "--n-jobs", "31"]) == cli.EXIT_INPUT
    assert _error_payload(capsys.readouterr().err)["category"] == "INVALID_ARGUMENT"


@pytest.mark.parametrize(
    "argv",
    [
        [],
        ["motivation", "--sched", "sjf"],
        ["run"],
        ["synth-trace", "--mappers", "a,b"],
    ],
)
def test_usage_errors_exit_one(argv):
    with pytest.raises(SystemExit) as excinfo:
        cli.main(argv)
    assert excinfo.value.code == cli.EXIT_USAGE
