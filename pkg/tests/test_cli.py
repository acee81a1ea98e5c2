import json
from pathlib import Path

import pytest

import cbsrv
from cbsrv.cli import EXIT_OK, EXIT_USAGE, EXIT_VALIDATION, EXIT_VERIFICATION, main
from cbsrv.model import _load_asset
from cbsrv.traceio import read_trace_file


@pytest.fixture()
def workdir(tmp_path, monkeypatch):
    (tmp_path / "task.model").write_text(_load_asset("task.model"), encoding="utf-8")
    (tmp_path / "homogeneity.monitor").write_text(
        _load_asset("task_homogeneity.monitor"), encoding="utf-8")
    monkeypatch.chdir(tmp_path)
    return tmp_path


def test_run_global_fixed_schedule(workdir, capsys):
    code = main(["run", "task.model", "--mode", "global",
                 "--schedule", "ex12,nt", "-o", "out.trace"])
    assert code == EXIT_OK
    trace, _ = read_trace_file(workdir / "out.trace")
    assert [str(l) for l in trace.labels()] == ["ex12", "nt"]
    assert trace.steps[1][1][3].location == "ready"


def test_run_monitored_json_report(workdir, capsys):
    code = main(["run", "task.model", "--mode", "monitored",
                 "--monitor", "homogeneity.monitor", "--seed", "7",
                 "--steps", "50", "--json", "-o", "m.trace"])
    assert code == EXIT_OK
    report = json.loads(capsys.readouterr().out)
    assert report["interactions"] == report["delivered_states"] == 50
    assert report["extra_interactions"] == \
        report["completions"] + report["delivered_states"]
    assert sum(report["verdicts"].values()) == 50


def test_run_same_seed_identical_outputs(workdir, capsys):
    for name in ("a.trace", "b.trace"):
        assert main(["run", "task.model", "--mode", "partial", "--seed", "5",
                     "--steps", "30", "-o", name]) == EXIT_OK
    assert (workdir / "a.trace").read_text() == (workdir / "b.trace").read_text()


def test_run_zero_steps(workdir, capsys):
    assert main(["run", "task.model", "--steps", "0", "-o", "z.trace"]) == EXIT_OK
    trace, _ = read_trace_file(workdir / "z.trace")
    assert len(trace) == 0


def test_witness_round_trip(workdir, capsys):
    assert main(["run", "task.model", "--mode", "partial", "--seed", "3",
                 "--steps", "12", "-o", "p.trace"]) == EXIT_OK
    capsys.readouterr()
    code = main(["witness", "p.trace", "--model", "task.model", "--json",
                 "-o", "w.trace"])
    assert code == EXIT_OK
    report = json.loads(capsys.readouterr().out)
    trace, _ = read_trace_file(workdir / "w.trace")
    assert len(trace.steps) == report["interactions"]
    # drained run: the witness covers every executed interaction
    assert report["trailing_interaction"] is None


def test_witness_of_init_only_trace(workdir, capsys):
    assert main(["run", "task.model", "--steps", "0", "-o", "i.trace"]) == EXIT_OK
    assert main(["witness", "i.trace", "-o", "iw.trace"]) == EXIT_OK
    trace, _ = read_trace_file(workdir / "iw.trace")
    assert len(trace) == 0


def test_transform_output_revalidates(workdir, capsys):
    code = main(["transform", "task.model", "--monitor", "homogeneity.monitor",
                 "-o", "task_r.model"])
    assert code == EXIT_OK
    assert main(["validate", "task_r.model"]) == EXIT_OK
    sys = cbsrv.parse_model((workdir / "task_r.model").read_text(encoding="utf-8"))
    assert any(c.id == "RGT" for c in sys.components)


def test_validate_bad_model(workdir, capsys):
    (workdir / "bad.model").write_text(
        "component C { ports p; locations a; initial nowhere; }",
        encoding="utf-8")
    assert main(["validate", "bad.model"]) == EXIT_VALIDATION


def test_missing_file_is_usage_error(workdir):
    assert main(["validate", "no-such.model"]) == EXIT_USAGE


def test_verify_equivalence_mutation(workdir, capsys):
    code = main(["verify-equivalence", "task.model", "--stage", "transformed",
                 "--mutate-drop-delivery", "ex12"])
    assert code == EXIT_VERIFICATION
    out = capsys.readouterr().out
    assert "NOT EQUIVALENT" in out and "counterexample" in out
