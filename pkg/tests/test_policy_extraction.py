import itertools

import pytest
from hypothesis import given, settings
from hypothesis import strategies as st

from locim.benchmarks import make
from locim.benchmarks.policies import PolicySpec, build_policy, parse_policy
from locim.benchmarks.suite import evaluate
from locim.cutoff_solver import CutoffConfig, solve_cutoff
from locim.mmdp import communication_partition, joint_transition
from locim.oracles import all_joint_states, random_instance
from locim.policy_extraction import (AggregatePolicy, InvalidBelief, MemoryConfig, MemoryPolicy,
                                     TrivialPolicy, check_belief, execute_policy_action,
                                     most_likely, uniform_phantom)
from locim.rollout_engine import expected_return, rollout
from tests.conftest import line_model


def value(env, label):
    model = make(env)
    return evaluate(model, parse_policy(model, label))[0]


def test_trivial_acts_with_first_layer():
    model, V_comp, H = random_instance(5)
    sol = solve_cutoff(model, CutoffConfig(model.V, V_comp - model.V, H))
    pol = TrivialPolicy(model, sol, model.V)
    for s in itertools.islice(all_joint_states(model), 40):
        (p, a, _), = pol.act(s, 0, None)
        assert p == 1.0
        assert a == sol.action_of(s, communication_partition(model, s, model.V), 0)


def test_aisle_walk_corners():
    assert value("aisle_walk", "trivial:amalgam") == pytest.approx(202.00, abs=0.01)
    assert value("aisle_walk", "trivial:cutoff") == pytest.approx(400.00, abs=0.01)


def test_belief_validity():
    m = line_model(10, [0, 5, 9], R=0, V=2)
    check_belief(m, (0,), [(0, 0)], (0, 2), ((0, 0), (4, 0)), 2)
    with pytest.raises(InvalidBelief):
        check_belief(m, (0,), [(0, 0)], (0, 2), ((0, 0), (2, 0)), 2)   # phantom within view
    with pytest.raises(InvalidBelief):
        check_belief(m, (0,), [(0, 0)], (0, 2), ((1, 0), (5, 0)), 2)   # observed state changed


def test_uniform_phantom_gives_valid_beliefs():
    m = line_model(12, [2, 9], R=0, V=2)
    place = uniform_phantom(m, 2, 5, 1, 0)
    out = place(m, (0,), [(2, 0)])
    assert sum(p for p, _, _ in out) == pytest.approx(1.0)
    cells = sorted(st[1][0] for _, mem, st in out if len(mem) == 2)
    assert cells == [5, 6, 7]
    for _, members, states in out:
        check_belief(m, (0,), [(2, 0)], members, states, 2)


def test_degenerate_aggregate_is_trivial():
    model, V_comp, H = random_instance(9)
    sol = solve_cutoff(model, CutoffConfig(model.V, V_comp - model.V, H))
    agg = AggregatePolicy(model, sol, model.V, lambda m, z, s_z: [(1.0, tuple(z), tuple(s_z))])
    triv = TrivialPolicy(model, sol, model.V)
    for s in itertools.islice(all_joint_states(model), 40):
        assert agg.act(s, 0, None)[0][1] == triv.act(s, 0, None)[0][1]


def test_aggregate_rejects_bad_placement():
    m = line_model(10, [0, 6], R=0, V=2)
    sol = solve_cutoff(m, CutoffConfig(2, 3, 1))
    bad = AggregatePolicy(m, sol, 2, lambda mm, z, s_z: [(1.0, (0, 1), ((0, 0), (1, 0)))
                                                           if z == (0,) else (1.0, z, tuple(s_z))])
    with pytest.raises(InvalidBelief):
        bad.act(m.start, 0, None)


def test_memory_seeded_at_start():
    m = make("aisle_walk")
    pol = build_policy(m, parse_policy(m, "smbe:3"))
    a, mem = execute_policy_action(pol, m.start, 0, pol.initial_memory())
    merged, zb = pol.belief(m.start, 0, (0, 1), pol.initial_memory())
    assert zb == (0, 1)
    assert {j: v[0] for j, v in merged.items()} == {0: m.start[0], 1: m.start[1]}
    assert all({j for j, _, _ in entry} == {0, 1} for entry in mem)
    assert all(tj == 0 for entry in mem for _, _, tj in entry)


def test_penalty_jittering_memory_keeps_left_agent():
    m = make("penalty_jittering")
    pol = build_policy(m, parse_policy(m, "smbe:4"))
    res = rollout(m, pol, 10, record=True)
    mem = pol.initial_memory()
    met = separated = False
    for st in res.steps:
        _, mem = execute_policy_action(pol, st.state, st.t, mem)
        if len(st.groups) == 1:
            met = True
        elif met:
            separated = True
            assert 0 in {j for j, _, _ in mem[1]}
    assert separated
    assert expected_return(m, pol, 200).ret == pytest.approx(2328.05, abs=0.01)


@pytest.mark.parametrize("env", ["aisle_walk", "long_journey"])
def test_predictions_exact_in_view(env):
    m = make(env)
    pol = build_policy(m, parse_policy(m, "smbe"))
    s, mem = m.start, pol.initial_memory()
    for t in range(30):
        a, mem = execute_policy_action(pol, s, t, mem)
        s = next(iter(joint_transition(m, s, a)))
        for entry in mem:
            for j, sj, _ in entry:
                assert sj == s[j]


def test_memory_runs_are_deterministic():
    m = make("modified_highway")
    runs = []
    for _ in range(2):
        pol = build_policy(m, parse_policy(m, "smbe:9"))
        s, mem, trace = m.start, pol.initial_memory(), []
        for t in range(25):
            a, mem = execute_policy_action(pol, s, t, mem)
            trace.append((s, a, mem))
            s = next(iter(joint_transition(m, s, a)))
        runs.append(trace)
    assert runs[0] == runs[1]


@settings(max_examples=25)
@given(st.integers(0, 5000))
def test_empty_memory_far_apart_matches_trivial(seed):
    model, V_comp, H = random_instance(seed)
    sol = solve_cutoff(model, CutoffConfig(model.V, V_comp - model.V, H))
    smbe = MemoryPolicy(model, sol, model.V)
    triv = TrivialPolicy(model, sol, model.V)
    for s in all_joint_states(model):
        if len(communication_partition(model, s, V_comp)) == model.n:
            a = smbe.act(s, 0, smbe.initial_memory())[0][1]
            assert a == triv.act(s, 0, None)[0][1]


@settings(max_examples=25)
@given(st.integers(0, 5000))
def test_actions_depend_only_on_own_block(seed):
    model, V_comp, H = random_instance(seed)
    sol = solve_cutoff(model, CutoffConfig(model.V, V_comp - model.V, H))
    pol = TrivialPolicy(model, sol, model.V)
    by_block = {}
    for s in all_joint_states(model):
        a = pol.act(s, 0, None)[0][1]
        for z in communication_partition(model, s):
            key = (z, tuple(s[i] for i in z))
            got = tuple(a[i] for i in z)
            assert by_block.setdefault(key, got) == got


def test_contradicted_memory_is_erased():
    m = line_model(12, [0, 8], R=0, V=2)
    sol = solve_cutoff(m, CutoffConfig(2, 4, 1))
    pol = MemoryPolicy(m, sol, 2)
    s = ((0, 0), (8, 0))
    # agent 0 remembers agent 1 at cell 1, which it would see if it were there
    memory = ((((1, (1, 0), 0),)), ())
    merged = pol.consolidate(s, 3, (0,), memory)
    assert set(merged) == {0}
    memory = ((((1, (5, 0), 0),)), ())
    assert set(pol.consolidate(s, 3, (0,), memory)) == {0, 1}


def test_clear_and_heuristic_modifications():
    m = line_model(12, [0, 1, 2, 3], R=0, V=2)
    sol = solve_cutoff(m, CutoffConfig(2, 0, 1), seeds=[((0,), ((0, 0),))])
    calls = []

    def heuristic(model, z, s_z, rng):
        calls.append(z)
        return tuple("stay" for _ in z)

    pol = MemoryPolicy(m, sol, 2, MemoryConfig(heuristic_at=4), heuristic)
    (_, a, mem), = pol.act(m.start, 0, pol.initial_memory())
    assert a == ("stay",) * 4 and calls == [(0, 1, 2, 3)]
    clear = MemoryPolicy(m, sol, 2, MemoryConfig(clear_at=2))
    remembered = ((), ((0, (0, 0), 0),), (), ())
    _, zb = clear.belief(((9, 0), (6, 0), (0, 0), (11, 0)), 1, (1,), remembered)
    assert zb == (1,)


def test_most_likely_tie_break():
    assert most_likely({(2,): 0.5, (1,): 0.5}) == (1,)
    assert most_likely({(2,): 0.6, (1,): 0.4}) == (2,)


def test_policy_spec_labels():
    m = make("long_journey")
    assert parse_policy(m, "joint") == PolicySpec("joint")
    fs = parse_policy(m, "trivial:fsfho")
    assert (fs.xi, fs.eta) == (0.0, 0)
    with pytest.raises(ValueError):
        parse_policy(m, "trivial:nowhere")
    with pytest.raises(ValueError):
        parse_policy(m, "greedy")
