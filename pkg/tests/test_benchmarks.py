import json
from dataclasses import asdict

import pytest

from locim.benchmarks import REGISTRY, UnknownEnv, build_env, build_model, make, spec_of
from locim.benchmarks.envspec import dump_spec, load_spec
from locim.benchmarks.reconstruct import reconstruct
from locim.benchmarks.suite import (GOLDENS, check_ordering, failed, long_journey_sweep,
                                    run_benchmark_suite, run_env, sweep_corners, write_report)
from locim.benchmarks.swarm import SwarmConfig, Swarm, run_swarm, stats_from_trace
from locim.mmdp import joint_reward, validate_model

CONSTANTS = {
    "aisle_walk": (1, 2, 0.9),
    "bullseye": (20, 25, 0.9),
    "modified_bullseye": (20, 20.5, 0.9),
    "highway": (3, 5, 0.98),
    "modified_highway": (3, 5, 0.98),
    "penalty_jittering": (0, 1, 0.9),
    "long_journey": (1, 5, 0.9),
    "stochastic_transitions": (0, 3, 0.9),
    "unanticipated_oov": (0, 3, 0.9),
    "oov_coordination": (0, 3, 0.9),
}


@pytest.mark.parametrize("env", sorted(REGISTRY))
def test_env_constants_and_validity(env):
    model, s0 = build_env(env)
    assert (model.R, model.V, model.gamma) == CONSTANTS[env]
    assert s0 == model.start
    assert validate_model(model) == []


def test_unknown_env_lists_registry():
    with pytest.raises(UnknownEnv) as err:
        build_env("maze")
    assert "penalty_jittering" in str(err.value)


def test_penalty_jittering_layout():
    m = make("penalty_jittering")
    assert len(m.space) == 5
    assert [m.space.labels[s[0]] for s in m.start] == [(0,), (2,)]
    left, right = m.space.node((0,)), m.space.node((4,))
    assert joint_reward(m, ((left, 0), (right, 0)), ("stay", "stay")) == 250


def test_bullseye_layout():
    m = make("bullseye")
    centre = m.space.node((30,))
    offsets = [m.space.distance(s[0], centre) for s in m.start]
    assert offsets == [24, 25]


def test_long_journey_rewards():
    g = 0.9
    m = make("long_journey", gamma=g)
    rewards = m.self_rewards[1]
    for x in range(1, 11):
        settle = [v for ((pos, internal), a), v in rewards.items()
                  if a == "settle" and internal == (x, 1)]
        assert settle == [pytest.approx((10 - x + 1) * 10 / g ** x)]
        home = (m.space.node((1,)), (x, 2))
        claim = m.pair_reward(1, 0, home, "claim", m.start[0], "stay")
        assert claim == pytest.approx((100 + 10 * x) / g ** (2 * x))


def test_spec_json_round_trip(tmp_path):
    path = tmp_path / "pj.json"
    dump_spec(spec_of("penalty_jittering"), str(path))
    a, b = make("penalty_jittering"), build_model(load_spec(str(path)))
    assert a.start == b.start and a.tables == b.tables
    assert json.loads(path.read_text())["constants"] == {"R": 0, "V": 1, "gamma": 0.9}


def test_suite_cells_and_report(tmp_path):
    rows = run_benchmark_suite(["penalty_jittering", "highway"])
    assert not failed(rows)
    again = run_benchmark_suite(["penalty_jittering", "highway"])
    assert rows == again
    highway = {r["policy"]: r for r in rows if r["env"] == "highway"}
    assert highway["trivial:cutoff"]["return"] == 0.0
    assert highway["trivial:cutoff"]["cycle_period"] == 2
    path = tmp_path / "r.csv"
    write_report(str(path), rows)
    head = path.read_text().splitlines()[0]
    assert head == "env,policy,xi,eta,return,tail,golden,delta,cycle_period,status"


def test_stochastic_suite_uses_exact_expectation():
    rows = {r["policy"]: r for r in run_env("stochastic_transitions")}
    assert rows["smbe:4"]["return"] == pytest.approx(81.50, abs=0.01)
    assert rows["joint"]["cycle_period"] == ""


def test_failed_cells_are_recorded():
    rows = run_env("penalty_jittering", ["trivial:nowhere", "trivial:cutoff"])
    assert rows[0]["status"].startswith("error")
    assert rows[1]["status"] == "ok" or rows[1]["status"] == "pass"
    assert failed(rows) == [rows[0]]


def test_ordering_check():
    rows = [{"policy": "a", "return": 10.0, "status": "pass"},
            {"policy": "b", "return": 5.0, "status": "order"}]
    assert check_ordering(rows, [["a"], ["b"]])
    assert rows[1]["status"] == "order-pass"
    rows = [{"policy": "a", "return": 1.0, "status": "pass"},
            {"policy": "b", "return": 5.0, "status": "order"}]
    assert not check_ordering(rows, [["a"], ["b"]])
    assert [r["status"] for r in rows] == ["fail (ordering)", "order-fail"]


def test_long_journey_sweep_corners():
    rows = long_journey_sweep(0.9, xis=[0, 6], etas=[0, 40], methods=("trivial", "smbe"))
    corners = sweep_corners(rows)
    assert corners[("trivial", "amalgam")] == pytest.approx(10.0, abs=1e-6)
    assert corners[("trivial", "cutoff")] == pytest.approx(140.0, abs=1e-6)
    assert corners[("smbe", "amalgam")] == pytest.approx(200.0, abs=1e-6)


def test_reconstruction_search():
    rep = reconstruct("penalty_jittering")
    assert rep["matched"] and rep["params"] == {"cells": 5} and rep["tried"] == 1
    rep = reconstruct("unanticipated_oov", limit=2)
    assert not rep["matched"] and rep["tried"] == 2 and rep["closest"]
    with pytest.raises(KeyError):
        reconstruct("long_journey")


@pytest.fixture(scope="module")
def small_swarm():
    cfg = SwarmConfig(rooms_x=3, rooms_y=2, agents=16, steps=60, checkpoints=(20, 60),
                      table_max=2, seed=4)
    return cfg, run_swarm(cfg, record=True)


def test_swarm_stats_from_trace(small_swarm):
    cfg, (stats, trace) = small_swarm
    assert [s.t for s in stats] == [20, 60]
    recomputed = stats_from_trace(trace, cfg.agents, cfg.checkpoints)
    for a, b in zip(stats, recomputed):
        da, db = asdict(a), asdict(b)
        da.pop("runtime"), db.pop("runtime")
        assert da == db
    mins = [s.min_objectives for s in stats]
    assert mins == sorted(mins)
    assert stats[-1].total_objectives > 0


def test_swarm_rooms_are_local():
    cfg = SwarmConfig(rooms_x=2, rooms_y=2, agents=8, steps=0, table_max=2)
    swarm = Swarm(cfg)
    placed = sum(len(m) for m in swarm.members)
    queued = sum(len(q) for q in swarm.queues.values())
    assert placed + queued == cfg.agents
    for r, mem in enumerate(swarm.members):
        for i in mem:
            assert swarm.room_of[i] == r
    assert swarm.neighbour(1, 0) == (0, "west")
    assert swarm.neighbour(2, 1) == (0, "north")


def test_swarm_is_seeded():
    cfg = SwarmConfig(rooms_x=2, rooms_y=2, agents=8, steps=15, checkpoints=(15,), table_max=2)
    a = run_swarm(cfg, record=True)[1]
    b = run_swarm(cfg, record=True)[1]
    assert a == b
