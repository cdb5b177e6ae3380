import csv
import json

import pytest

from locim.benchmarks import make
from locim.benchmarks.policies import build_policy, parse_policy
from locim.benchmarks.suite import GOLDENS, is_stochastic, resolve
from locim.cutoff_solver import CoverageError
from locim.mmdp import joint_reward, r_tilde
from locim.rollout_engine import (expected_return, horizon_for, rollout, rollout_mean,
                                  tail_bound, write_summary_csv, write_trace)
from tests.conftest import line_model

DETERMINISTIC = [e for e in GOLDENS if not is_stochastic(make(e))]


def policy(env, label):
    model = make(env)
    return model, build_policy(model, parse_policy(model, label))


class Stay:
    def initial_memory(self):
        return None

    def signature(self, memory):
        return memory

    def act(self, s, t, memory, rng=None):
        return [(1.0, tuple("stay" for _ in s), None)]


class Uncovered(Stay):
    def act(self, s, t, memory, rng=None):
        if t == 3:
            raise CoverageError(((0,), (s[0],)))
        return super().act(s, t, memory, rng)


def test_zero_reward_model():
    m = line_model(5, [0, 3])
    res = rollout(m, Stay(), 20)
    assert res.ret == 0 and res.tail == 0


def test_joint_optimal_values():
    m, pol = policy("long_journey", "joint")
    assert rollout(m, pol, horizon_for(m, 1e-6)).ret == pytest.approx(200.0, abs=1e-4)
    m, pol = policy("bullseye", "joint")
    res = rollout(m, pol, 200)
    assert abs(res.ret - 8.85) <= 0.01 + res.tail


def test_trace_records():
    m, pol = policy("modified_highway", "smbe:9")
    res = rollout(m, pol, 40, record=True)
    acc = 0.0
    for st in res.steps:
        assert st.reward == joint_reward(m, st.state, st.action)
        acc += m.gamma ** st.t * st.reward
        assert st.ret == pytest.approx(acc)
    assert res.ret == pytest.approx(acc)


def test_trace_replay_is_byte_identical(tmp_path):
    paths = []
    for k in range(2):
        m, pol = policy("stochastic_transitions", "smbe:4")
        res = rollout(m, pol, 30, seed=7, record=True)
        path = tmp_path / f"run{k}.jsonl"
        write_trace(str(path), res, m.space)
        paths.append(path)
    assert paths[0].read_bytes() == paths[1].read_bytes()
    first = json.loads(paths[0].read_text().splitlines()[0])
    assert list(first) == ["t", "state", "partition", "action", "reward", "return"]


def test_cycles():
    m, pol = policy("modified_bullseye", "trivial:amalgam")
    assert rollout(m, pol, 200).cycle[1] == 2
    m, pol = policy("penalty_jittering", "joint")
    assert rollout(m, pol, 100).cycle[1] == 1
    m, pol = policy("penalty_jittering", "smbe:4")
    cycle = rollout(m, pol, 100).cycle
    assert cycle is None or cycle[1] == 1


def test_stochastic_rollouts_have_no_cycle_report():
    m, pol = policy("stochastic_transitions", "trivial:cutoff")
    assert rollout(m, pol, 50, seed=1).cycle is None


@pytest.mark.parametrize("env", DETERMINISTIC)
def test_truncation_soundness(env):
    for label in ("trivial:cutoff", "smbe"):
        m, pol = policy(env, resolve(env, label))
        T = horizon_for(m, 0.005)
        a = rollout(m, pol, T, find_cycle=False)
        m, pol = policy(env, resolve(env, label))
        b = rollout(m, pol, T + 50, find_cycle=False)
        assert abs(a.ret - b.ret) <= tail_bound(m, T)


def test_horizon_for():
    m = make("penalty_jittering")
    T = horizon_for(m, 0.005)
    assert tail_bound(m, T) < 0.005 <= tail_bound(m, T - 1)
    assert tail_bound(m, T) == pytest.approx(m.gamma ** T * r_tilde(m) / (1 - m.gamma))


def test_expected_return_matches_sampling():
    m, pol = policy("stochastic_transitions", "trivial:cutoff")
    exact = expected_return(m, pol, 80).ret
    mean, err, _ = rollout_mean(m, pol, 80, 400, seed=3)
    assert abs(mean - exact) <= 4 * err
    m, pol = policy("aisle_walk", "trivial:cutoff")
    mean, err, _ = rollout_mean(m, pol, 60, 5)
    assert err == 0 and mean == pytest.approx(expected_return(m, pol, 60).ret)


def test_coverage_error_names_timestep():
    m = line_model(5, [0, 3])
    with pytest.raises(CoverageError, match="t=3"):
        rollout(m, Uncovered(), 10)


def test_summary_csv(tmp_path):
    path = tmp_path / "s.csv"
    write_summary_csv(str(path), [{"env": "x", "policy": "p", "xi": 0, "eta": 1, "return": 2.5,
                                   "tail": 0.1, "cycle_period": 2, "extra": 9}])
    rows = list(csv.DictReader(path.open()))
    assert list(rows[0]) == ["env", "policy", "xi", "eta", "return", "tail", "cycle_period"]
    assert rows[0]["cycle_period"] == "2"
