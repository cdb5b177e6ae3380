import itertools
import random

import pytest
from hypothesis import given
from hypothesis import strategies as st

from locim.benchmarks import REGISTRY, make
from locim.geometry import is_finer
from locim.mmdp import (ModelError, PairRule, agent_rewards, blocked_moves_rule,
                        communication_partition, dependence_partition, group_reward,
                        horizon_constant, joint_actions, joint_reward, joint_transition,
                        r_tilde, sample, validate_model)
from locim.oracles import all_joint_states, random_instance
from tests.conftest import line_model


def all_joint_actions(model, s):
    return itertools.product(*[model.actions(i, si) for i, si in enumerate(s)])


def test_horizon_constant():
    assert horizon_constant(2, 1) == 0
    assert horizon_constant(25, 20) == 2
    for R in (0, 1, 3):
        for k in range(1, 5):
            assert horizon_constant(R + 2 * k, R) == k
    with pytest.raises(ModelError):
        horizon_constant(1, 1)


def test_partitions_on_benchmarks():
    bull = make("bullseye")
    assert dependence_partition(bull, bull.start) == ((0,), (1,))
    aisle = make("aisle_walk")
    assert communication_partition(aisle, aisle.start) == ((0, 1),)
    pj = make("penalty_jittering")
    assert communication_partition(pj, pj.start) == ((0,), (1,))


def test_chain_and_overlap_dependence():
    m = line_model(8, [0, 1, 2], R=1, V=2)
    assert dependence_partition(m, m.start) == ((0, 1, 2),)
    m = line_model(4, [2, 2], R=0, V=1)
    assert dependence_partition(m, m.start) == ((0, 1),)
    m = line_model(4, [2], R=0, V=1)
    assert communication_partition(m, m.start) == ((0,),)


def test_penalty_jittering_overlap_reward():
    pj = make("penalty_jittering")
    left = pj.space.node((0,))
    s = ((left, 0), (left, 0))
    assert joint_reward(pj, s, ("stay", "stay")) == 200 + 200 - 500 - 500


def test_aisle_walk_pair_bonus():
    aisle = make("aisle_walk")
    s = aisle.start
    a = tuple(aisle.actions(i, si)[0] for i, si in enumerate(s))
    own = [aisle.pair_reward(i, i, s[i], a[i], s[i], a[i]) for i in range(2)]
    pair = [aisle.pair_reward(0, 1, s[0], a[0], s[1], a[1]),
            aisle.pair_reward(1, 0, s[1], a[1], s[0], a[0])]
    assert pair == [20, 20]
    assert agent_rewards(aisle, s, a) == [own[0] + 20, own[1] + 20]


def test_far_agents_only_self_terms():
    m = line_model(10, [0, 9], R=1, V=2, self_rewards=[{((0, 0), "stay"): 3.0}, {}],
                   pair_value=-7)
    assert joint_reward(m, m.start, ("stay", "stay")) == 3.0


def test_stochastic_assignment_branch():
    m = make("stochastic_transitions")
    s = m.start
    dist = joint_transition(m, s, ("out", "out"))
    by_internal = {}
    for s2, p in dist.items():
        by_internal[s2[0][1]] = by_internal.get(s2[0][1], 0) + p
    assert by_internal == pytest.approx({2: 0.51, 3: 0.49})


def test_deterministic_sample_is_unique_successor():
    m = make("highway")
    s = m.start
    a = tuple(m.actions(i, si)[0] for i, si in enumerate(s))
    dist = joint_transition(m, s, a)
    assert len(dist) == 1
    assert sample(dist, random.Random(0)) == next(iter(dist))


def test_generalized_blocked_move():
    m = line_model(4, [1, 2], R=1, V=2, generalized=True, group_rule=blocked_moves_rule)
    # agent 0 steps into agent 1's cell while agent 1 stays: the mover is blocked
    dist = joint_transition(m, m.start, ("right", "stay"))
    assert dist == {((1, 0), (2, 0)): 1.0}
    # moving apart is unaffected
    assert joint_transition(m, m.start, ("left", "right")) == {((0, 0), (3, 0)): 1.0}


def test_r_tilde_examples():
    assert r_tilde(line_model(5, [0, 3])) == 0
    single = line_model(5, [0], self_rewards=[{((0, 0), "stay"): 200.0, ((1, 0), "stay"): -50.0}])
    assert r_tilde(single) == 200
    assert r_tilde(make("penalty_jittering")) >= 500 + 500 + 200 + 200


def test_validate_flags_bad_models():
    m = line_model(4, [0, 2])
    assert validate_model(m) == []
    bad = line_model(4, [0, 2])
    bad._kern[0][((1, 0), "stay")] = (((1, 0), 0.9),)
    assert any("sums to 0.9" in e for e in validate_model(bad))
    far = line_model(6, [0, 3], R=0, V=2)
    far.pair_rules = [PairRule(value=-1.0, max_dist=1)]
    assert any("beyond radius" in e for e in validate_model(far))


@pytest.mark.parametrize("env", sorted(REGISTRY))
def test_benchmarks_validate(env):
    assert validate_model(make(env)) == []


@given(st.integers(0, 400))
def test_reward_identities_on_random_models(seed):
    model, _, _ = random_instance(seed)
    rt = r_tilde(model)
    rng = random.Random(seed)
    states = list(all_joint_states(model))
    for s in rng.sample(states, min(15, len(states))):
        D = dependence_partition(model, s)
        Z = communication_partition(model, s)
        assert is_finer(D, Z)
        for a in itertools.islice(all_joint_actions(model, s), 6):
            r = joint_reward(model, s, a)
            assert abs(r) <= rt + 1e-9
            if not model.generalized:
                pairwise = sum(model.pair_reward(i, j, s[i], a[i], s[j], a[j])
                               for i in range(model.n) for j in range(model.n))
                assert r == pytest.approx(pairwise)
            for P in (D, Z, ((tuple(range(model.n))),)):
                regrouped = sum(group_reward(model, g, [s[i] for i in g], [a[i] for i in g])
                                for g in P)
                assert regrouped == pytest.approx(r)
            dist = joint_transition(model, s, a)
            assert sum(dist.values()) == pytest.approx(1.0)
            for s2 in dist:
                assert all(model.dist(x, y) <= 1 for x, y in zip(s, s2))


def test_joint_actions_enumerates_product():
    m = line_model(4, [0, 2])
    acts = list(joint_actions(m, (0, 1), m.start))
    assert len(acts) == 9 and len(set(acts)) == 9
