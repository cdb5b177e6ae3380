import math
import random

import pytest
from hypothesis import given, settings
from hypothesis import strategies as st

from locim.benchmarks import make
from locim.benchmarks.policies import build_policy, parse_policy
from locim.cutoff_solver import BudgetError, CutoffConfig, solve_cutoff
from locim.geometry import is_finer
from locim.mmdp import communication_partition, dependence_partition, horizon_constant
from locim.oracles import InstanceConfig, random_instance
from locim.verification import (BoundReport, NonLocalTrajectory, beta_constants, bound_rhs,
                                brute_force_cutoff, check_consistent_performance,
                                check_dependence_time_lemma, check_group_count,
                                check_horizon_truncation, check_theorems, closing_pair_instance,
                                cpp_negative_control, decomposition_suite,
                                dependence_time_negative_control, dependence_time_suite,
                                group_count_bound, random_trajectory, solve_full,
                                solve_joint_optimal, theorem_suite, verify)
from tests.conftest import line_model


def test_bound_report():
    rep = BoundReport("q", 1.0, 2.0, "x")
    assert rep.ok and rep.margin == 1.0 and rep.as_dict()["pass"] is True
    assert not BoundReport("q", 2.5, 2.0, "x").ok


def test_joint_optimum_examples():
    rho, k = 5.0, 3
    m = line_model(6, [0], R=0, V=1, gamma=0.5, self_rewards=[{((k, 0), "stay"): rho}])
    # reach the goal in k steps then collect forever
    assert solve_joint_optimal(m).value() == pytest.approx(0.5 ** k * rho / (1 - 0.5), abs=1e-6)
    assert solve_joint_optimal(make("penalty_jittering")).value() == pytest.approx(2405.0, abs=0.01)
    assert solve_joint_optimal(make("highway")).value() == pytest.approx(73.50, abs=0.01)


def test_joint_optimum_budget(monkeypatch):
    monkeypatch.setenv("LOCIM_BUDGET", "20")
    with pytest.raises(BudgetError):
        solve_joint_optimal(make("bullseye"))


def test_brute_force_zero_horizon_and_split_blocks():
    m = line_model(4, [1, 2], R=1, V=2, pair_value=3.0)
    oracle = brute_force_cutoff(m, 2, 0)
    s = m.start
    together = oracle.value(s, ((0, 1),))
    apart = oracle.value(s, ((0,), (1,)))
    assert together == pytest.approx(6.0)
    assert apart == 0.0


def test_decomposition_suite_small():
    rep = decomposition_suite(5, seed=3)
    assert rep["pass"] and rep["checked"] == 5


def test_dependence_time_delta_zero_is_finer_than():
    m, traj, c = closing_pair_instance(3, 0)
    s = traj[0][0]
    assert is_finer(dependence_partition(m, s), communication_partition(m, s))
    assert check_dependence_time_lemma(m, traj, 0, 0).ok


def test_dependence_time_random_and_control():
    rep = dependence_time_suite(40, seed=1)
    assert rep["pass"] and rep["checked"] > 0
    ctl = dependence_time_negative_control()
    assert ctl["within_c_pass"] and ctl["beyond_c_fails"]


def test_nonlocal_trajectory_rejected():
    m = line_model(8, [0, 5], R=0, V=2)
    traj = [(((0, 0), (5, 0)), ("stay", "stay")), (((3, 0), (5, 0)), ("stay", "stay"))]
    with pytest.raises(NonLocalTrajectory):
        check_dependence_time_lemma(m, traj, 0, 1)


@settings(max_examples=30)
@given(st.integers(0, 10_000))
def test_dependence_time_property(seed):
    rng = random.Random(seed)
    model, _, _ = random_instance(seed, InstanceConfig(generalized_prob=0.3))
    c = horizon_constant(model.V, model.R)
    traj = random_trajectory(model, c + 3, rng)
    for T in range(3):
        for d in range(c + 1):
            assert check_dependence_time_lemma(model, traj, T, d).ok


def test_beta_constants():
    beta, beta_p = beta_constants(0.0, 1, 2, 0)
    assert beta == pytest.approx(4.0) and beta_p == pytest.approx(4.0)
    g = 0.9
    beta, beta_p = beta_constants(g, 2, 2, 0)
    tail = (4 + g + 5 * g * g) / (1 - g)
    assert beta == pytest.approx(g + g * g + g + tail)
    assert beta_p == pytest.approx(g * g + g + tail)
    diffs = [beta_constants(g, 1, 2, 1, n, "generalized")[0] - beta_constants(g, 1, 2, 1)[0]
             for n in (1, 2, 3, 4)]
    steps = [b - a for a, b in zip(diffs, diffs[1:])]
    assert steps == pytest.approx([steps[0]] * 3) and steps[0] > 0
    with pytest.raises(ValueError):
        beta_constants(g, 2, 1, 0)


def test_theorem_on_aisle_walk_exact_optimum():
    m = make("aisle_walk")
    spec = parse_policy(m, "smbe:3")
    pol = build_policy(m, spec)
    t1, t2 = check_theorems(m, pol.solution, pol, m.V, spec.eta)
    assert abs(t1.lhs) < 1e-3 and t1.ok and t2.ok


def test_theorem_suite_small():
    rep = theorem_suite(4, seed=2)
    assert rep["pass"] and rep["checked"] == 4 * 3 * 2


def test_c_zero_bound_is_finite():
    m = line_model(5, [0, 2], R=1, V=2, pair_value=-1)
    sol = solve_cutoff(m, CutoffConfig(2, 0, 2))
    rhs1, rhs2 = bound_rhs(m, 2, 2, 2)
    assert math.isfinite(rhs1) and math.isfinite(rhs2) and sol.H == 2


def test_consistent_performance_single_agent():
    m = line_model(4, [1], R=0, V=1, self_rewards=[{((3, 0), "stay"): 1.0}])
    sol = solve_full(m, 1, 2)
    assert check_consistent_performance(m, sol)["pass"]


def test_consistent_performance_random_and_control():
    model, V_comp, H = random_instance(4, InstanceConfig(max_joint_states=400, horizon=(1, 3)))
    sol = solve_full(model, V_comp, H)
    assert check_consistent_performance(model, sol)["pass"]
    ctl = cpp_negative_control()
    assert ctl["pass"] and max(ctl["worst"].values()) > 1e-9


def test_group_count_bound():
    assert group_count_bound(5, 1, 1)[0] == 25
    binom, power = group_count_bound(10, 2, 1)
    assert binom <= power
    rep = check_group_count(4, 2, 1)
    assert rep["pass"] and rep["group_states"] <= rep["binomial_bound"]


def test_horizon_truncation():
    model, V_comp, H = random_instance(21)
    sol = solve_full(model, V_comp, max(H, 1))
    assert check_horizon_truncation(sol).ok


def test_verify_unknown_property():
    with pytest.raises(KeyError):
        verify("nothing")
