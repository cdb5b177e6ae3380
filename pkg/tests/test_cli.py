import csv
import json

import pytest

from locim.cli import TraceError, export_trace_summary, main


def run(capsys, *argv):
    code = main(list(argv))
    out = capsys.readouterr()
    return code, out.out, out.err


def test_solve_writes_table(capsys, tmp_path):
    path = tmp_path / "pj.tbl"
    code, out, _ = run(capsys, "solve", "--env", "penalty_jittering", "--xi", "3", "--eta", "8",
                       "--out", str(path))
    assert code == 0 and path.read_bytes().startswith(b"LOCIMTBL")
    assert out.startswith("group states: ")
    assert int(out.split()[2]) > 0


def test_usage_errors(capsys):
    code, _, err = run(capsys, "solve", "--bogus")
    assert code == 2 and "usage" in err
    code, _, err = run(capsys, "rollout", "--env", "maze")
    assert code == 2 and "available" in err
    code, _, err = run(capsys, "rollout")
    assert code == 2 and "--env" in err
    code, _, err = run(capsys, "verify", "--property", "nothing")
    assert code == 2 and "decomposition" in err
    code, _, err = run(capsys, "rollout", "--env", "aisle_walk", "--policy", "greedy")
    assert code == 2
    code, _, err = run(capsys, "summary", "/nonexistent/trace.jsonl")
    assert code == 2


def test_rollout_trace_and_summary(capsys, tmp_path):
    trace, summary = tmp_path / "t.jsonl", tmp_path / "s.csv"
    code, out, _ = run(capsys, "rollout", "--env", "penalty_jittering", "--policy",
                       "trivial:amalgam", "--T", "20", "--trace", str(trace), "--summary",
                       str(summary))
    assert code == 0 and "period=2" in out
    table = export_trace_summary(str(trace))
    assert table.splitlines()[-1].startswith("cycle:") and "period 2" in table
    assert len(table.splitlines()) == 20 + 2
    row = next(csv.DictReader(summary.open()))
    assert row["policy"] == "trivial:amalgam" and row["cycle_period"] == "2"


def test_rollout_is_seeded(capsys, tmp_path):
    outs = []
    for k in range(2):
        path = tmp_path / f"{k}.jsonl"
        run(capsys, "rollout", "--env", "stochastic_transitions", "--policy", "smbe:4",
            "--seed", "5", "--trace", str(path))
        outs.append(path.read_bytes())
    assert outs[0] == outs[1]


def test_summary_of_absorbing_goal(tmp_path, capsys):
    trace = tmp_path / "j.jsonl"
    run(capsys, "rollout", "--env", "penalty_jittering", "--policy", "joint", "--T", "10",
        "--trace", str(trace))
    assert "absorbing fixed point" in export_trace_summary(str(trace))


def test_summary_ignores_revisit_broken_by_memory(tmp_path, capsys):
    # smbe:4 revisits its start configuration at t=2 but then meets and settles
    trace = tmp_path / "pj.jsonl"
    run(capsys, "rollout", "--env", "penalty_jittering", "--policy", "smbe:4", "--trace", str(trace))
    last = export_trace_summary(str(trace)).splitlines()[-1]
    assert last.startswith("absorbing fixed point") and "repeats t=4" in last


def test_summary_edge_cases(tmp_path):
    empty = tmp_path / "e.jsonl"
    empty.write_text("")
    assert export_trace_summary(str(empty)) == ""
    bad = tmp_path / "b.jsonl"
    bad.write_text('{"t": 0, "state": [], "partition": [], "action": [], "reward": 0, '
                   '"return": 0}\n{oops\n')
    with pytest.raises(TraceError, match=":2:"):
        export_trace_summary(str(bad))


def test_bench_subset(capsys, tmp_path):
    report = tmp_path / "out.csv"
    code, out, _ = run(capsys, "bench", "--suite", "appendix-a", "--envs",
                       "penalty_jittering,unanticipated_oov", "--policies",
                       "trivial:amalgam,trivial:cutoff,smbe", "--report", str(report))
    assert code == 0
    rows = list(csv.DictReader(report.open()))
    assert {r["status"] for r in rows} <= {"pass", "order-pass"}
    assert all(r["delta"] != "" for r in rows)


def test_bench_reconstruct(capsys):
    code, out, _ = run(capsys, "bench", "--reconstruct", "penalty_jittering")
    assert code == 0 and json.loads(out)["matched"]
    code, out, _ = run(capsys, "bench", "--reconstruct", "unanticipated_oov", "--limit", "1")
    assert code == 1


def test_sweep(capsys, tmp_path):
    path = tmp_path / "sweep.csv"
    code, out, _ = run(capsys, "sweep", "--xis", "0,6", "--etas", "0,40", "--out", str(path))
    assert code == 0
    lines = dict(((l.split()[0], l.split()[1]), float(l.split()[2])) for l in out.splitlines())
    assert lines[("trivial", "cutoff")] == 140.0 and lines[("smbe", "amalgam")] == 200.0
    assert len(list(csv.DictReader(path.open()))) == 2 * 2 * 2


def test_verify_report(capsys, tmp_path):
    path = tmp_path / "v.json"
    code, out, _ = run(capsys, "verify", "--property", "decomposition", "--instances", "3",
                       "--seed", "7", "--out", str(path))
    rep = json.loads(path.read_text())
    assert code == 0 and rep["decomposition"]["pass"] and rep["decomposition"]["checked"] == 3
    assert json.loads(out) == rep


def test_swarm_trace_summary(capsys, tmp_path):
    trace = tmp_path / "sw.jsonl"
    code, out, _ = run(capsys, "swarm", "--steps", "50", "--agents", "10", "--rooms-x", "2",
                       "--rooms-y", "2", "--trace", str(trace))
    assert code == 0
    stats = json.loads(out.splitlines()[-1])
    table = export_trace_summary(str(trace)).splitlines()
    assert table[1].split()[0] == "50"
    assert int(table[1].split()[5]) == stats["total_objectives"]
    assert int(table[1].split()[1]) == stats["collisions"]
