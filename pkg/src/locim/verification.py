"""Empirical checks of the structural claims behind the solver and extraction.

Every check returns a report dict with at least `pass`, `lhs`, `rhs` and
`margin` (rhs - lhs) or per-condition worst violations, so the CLI can
serialise them directly.
"""
from __future__ import annotations

import itertools
import math
import random
from dataclasses import asdict, dataclass, field

from .cutoff_solver import (BudgetError, CutoffConfig, CutoffSolution, budget, solve_cutoff,
                            tail_eta)
from .geometry import (MetricSpace, finer_partitions, is_finer, partition_intersection,
                       proximity_partition)
from .mmdp import (LIMMDP, PairRule, TabularModel, communication_partition, dependence_partition,
                   group_reward, group_transition, horizon_constant, joint_reward,
                   joint_transition, r_tilde, sample)
from .oracles import BruteForceCutoff, InstanceConfig, JointOptimal, all_joint_states, random_instance
from .policy_extraction import (AggregatePolicy, MemoryPolicy, TrivialPolicy, uniform_phantom)
from .rollout_engine import expected_return, horizon_for, rollout

EPS = 1e-9


@dataclass
class BoundReport:
    quantity: str
    lhs: float
    rhs: float
    instance: str = ""
    margin: float = field(init=False)
    ok: bool = field(init=False)

    def __post_init__(self):
        self.margin = self.rhs - self.lhs
        self.ok = self.lhs <= self.rhs + EPS

    def as_dict(self):
        out = asdict(self)
        out["pass"] = out.pop("ok")
        return out


# oracles

def solve_joint_optimal(model: LIMMDP, gamma=None, tol: float = 1e-9, s0=None) -> JointOptimal:
    """Infinite-horizon optimum by value iteration; raises BudgetError past LOCIM_BUDGET."""
    return JointOptimal(model, s0=s0, tol=tol, gamma=gamma, max_states=budget())


def brute_force_cutoff(model: LIMMDP, V_comp: float, H: int, gamma=None) -> BruteForceCutoff:
    n_states = 1
    for i in range(model.n):
        n_states *= len(model.local_states(i))
    if n_states > budget():
        raise BudgetError(f"{n_states} joint states exceed budget {budget()}")
    return BruteForceCutoff(model, V_comp, H, gamma)


def all_block_seeds(model: LIMMDP, V_comp: float):
    """Every block of every Cutoff state (s, P): subsets of the V_comp groups of s."""
    seen = set()
    for s in all_joint_states(model):
        for z in communication_partition(model, s, V_comp):
            for k in range(1, len(z) + 1):
                for p in itertools.combinations(z, k):
                    key = (p, tuple(s[i] for i in p))
                    if key not in seen:
                        seen.add(key)
                        yield key


def solve_full(model: LIMMDP, V_comp: float, H: int, gamma=None) -> CutoffSolution:
    sol = CutoffSolution(model, V_comp, H, gamma)
    for members, states in all_block_seeds(model, V_comp):
        sol.add_seed(members, states)
    return sol.solve()


def check_decomposition(model: LIMMDP, V_comp: float, H: int, oracle=None,
                        solution=None) -> BoundReport:
    """Worst |value_of - brute force| over every (s, P, h)."""
    oracle = oracle or brute_force_cutoff(model, V_comp, H)
    sol = solution or solve_full(model, V_comp, H)
    worst = 0.0
    for (s, P), k in oracle.index.items():
        for h in range(H + 1):
            worst = max(worst, abs(sol.value_of(s, P, h) - oracle.values[h, k]))
    return BoundReport("decomposition", worst, EPS, model.name)


# dependence time lemma

class NonLocalTrajectory(ValueError):
    pass


def check_dependence_time_lemma(model: LIMMDP, trajectory, T: int, delta: int) -> BoundReport:
    """Finer-than relation and reward regrouping at T + delta against Z(s(T)).

    `trajectory` is a list of (joint state, joint action). Generalized models
    also check that the transition factorises over the blocks of Z(s(T)).
    Reports lhs = number of violated identities (0 passes).
    """
    for t in range(len(trajectory) - 1):
        s, s2 = trajectory[t][0], trajectory[t + 1][0]
        if any(model.dist(a, b) > 1 for a, b in zip(s, s2)):
            raise NonLocalTrajectory(f"agent moved more than one unit at t={t}")
    s_T = trajectory[T][0]
    s, a = trajectory[T + delta]
    Z = communication_partition(model, s_T)
    bad = 0
    if not is_finer(dependence_partition(model, s), Z):
        bad += 1
    regrouped = sum(group_reward(model, z, [s[i] for i in z], [a[i] for i in z]) for z in Z)
    if abs(joint_reward(model, s, a) - regrouped) > EPS:
        bad += 1
    if model.generalized:
        full = joint_transition(model, s, a)
        prod = {tuple(s): 1.0}
        for z in Z:
            sub = group_transition(model, z, [s[i] for i in z], [a[i] for i in z])
            nxt = {}
            for base, p in prod.items():
                for s2, q in sub.items():
                    new = list(base)
                    for i, v in zip(z, s2):
                        new[i] = v
                    key = tuple(new)
                    nxt[key] = nxt.get(key, 0.0) + p * q
            prod = nxt
        keys = set(full) | set(prod)
        if any(abs(full.get(k, 0.0) - prod.get(k, 0.0)) > EPS for k in keys):
            bad += 1
    return BoundReport(f"dependence_time(delta={delta})", bad, 0, model.name)


def random_trajectory(model: LIMMDP, length: int, rng: random.Random, s0=None):
    s = tuple(model.start if s0 is None else s0)
    out = []
    for _ in range(length):
        a = tuple(rng.choice(model.actions(i, si)) for i, si in enumerate(s))
        out.append((s, a))
        s = sample(joint_transition(model, s, a), rng)
    return out


def dependence_time_suite(instances: int = 1000, seed: int = 0, generalized_prob: float = 0.3):
    """Random local trajectories on random models, every T and delta <= c."""
    checked, failures = 0, []
    cfg = InstanceConfig(generalized_prob=generalized_prob)
    for k in range(instances):
        rng = random.Random(seed * 100003 + k)
        model, _, _ = random_instance(seed * 100003 + k, cfg)
        c = horizon_constant(model.V, model.R)
        s0 = tuple((rng.randrange(len(model.space)), model.start[i][1]) for i in range(model.n))
        traj = random_trajectory(model, c + 4, rng, s0)
        for T in range(len(traj) - c):
            for delta in range(c + 1):
                rep = check_dependence_time_lemma(model, traj, T, delta)
                checked += 1
                if not rep.ok:
                    failures.append({"instance": k, "T": T, "delta": delta})
    return {"checked": checked, "failures": failures, "pass": not failures}


def closing_pair_instance(V: float = 3, R: float = 0):
    """Two agents V + 1 apart walking towards each other, rewarded -1 within R."""
    c = horizon_constant(V, R)
    gap = int(V) + 1
    L = gap + 2
    space = MetricSpace.line(L)
    tables = []
    for _ in range(2):
        table = {}
        for x in range(L):
            outs = {"left": max(0, x - 1), "right": min(L - 1, x + 1), "stay": x}
            table[(x, 0)] = tuple((a, (((outs[a], 0), 1.0),)) for a in ("stay", "left", "right"))
        tables.append(table)
    start = ((1, 0), (1 + gap, 0))
    model = TabularModel(space=space, tables=tables, start=start, R=R, V=V, gamma=0.9,
                         pair_rules=[PairRule(value=-1.0, max_dist=R)], name="closing-pair")
    traj, s = [], start
    for _ in range(c + 2):
        a = ("right", "left")
        traj.append((s, a))
        s = next(iter(joint_transition(model, s, a)))
    return model, traj, c


def dependence_time_negative_control(V: float = 3, R: float = 0) -> dict:
    """At delta = c + 1 the closing pair meets, so the regrouping identity must fail."""
    model, traj, c = closing_pair_instance(V, R)
    within = [check_dependence_time_lemma(model, traj, 0, d).ok for d in range(c + 1)]
    beyond = check_dependence_time_lemma(model, traj, 0, c + 1)
    return {"c": c, "within_c_pass": all(within), "beyond_c_fails": not beyond.ok,
            "pass": all(within) and not beyond.ok}


# theorem constants

def beta_constants(gamma: float, c: int, c_prime: int, eta: int, n: int = 2,
                   mode: str = "standard") -> tuple[float, float]:
    """(beta, beta') of the extraction bounds."""
    g = gamma
    if c_prime < c or c < 0:
        raise ValueError("need c' >= c >= 0")
    if mode == "standard":
        tail = (4 + g + 5 * g ** 2) / (1 - g)
        beta = g ** (c_prime - c + 1) + g ** 2 + g ** (eta + 1) + tail
        beta_p = g ** 2 + g ** (eta + 1) + tail
    elif mode == "generalized":
        tail = (2 * g * (1 + g) + 4 * n * (1 + g ** 2)) / (1 - g)
        beta = 2 * g ** (c_prime - c + 1) + 2 * g ** 2 + g ** (eta + 1) + tail
        beta_p = 2 * g ** 2 + g ** (eta + 1) + tail
    else:
        raise ValueError(f"unknown mode {mode!r}")
    return beta, beta_p


def bound_rhs(model: LIMMDP, V_exec: float, V_comp: float, eta: int) -> tuple[float, float]:
    """Right-hand sides of both extraction bounds, scaled by r~."""
    c = horizon_constant(V_exec, model.R)
    cp = horizon_constant(V_comp, model.R)
    beta, beta_p = beta_constants(model.gamma, c, cp, eta, model.n,
                                  "generalized" if model.generalized else "standard")
    scale = model.gamma ** (c - 1) / (1 - model.gamma) * r_tilde(model)
    return beta * scale, beta_p * scale


def policy_value(model: LIMMDP, policy, tol: float = 1e-7):
    """Exact expected return up to a tail below `tol`, plus that tail."""
    T = horizon_for(model, tol)
    res = expected_return(model, policy, T)
    return res.ret, res.tail


def check_theorems(model: LIMMDP, solution: CutoffSolution, policy, V_exec: float,
                   eta: int, joint: JointOptimal | None = None, s0=None) -> list[BoundReport]:
    """Both extraction bounds at s0; truncation tails are added to the lhs."""
    s0 = tuple(model.start if s0 is None else s0)
    joint = joint or solve_joint_optimal(model, s0=s0)
    v_star = joint.value(s0)
    v_exec, tail = policy_value(model, policy)
    rhs1, rhs2 = bound_rhs(model, V_exec, solution.V_comp, eta)
    v_comp = solution.value_of(s0, communication_partition(model, s0, solution.V_comp), 0)
    name = f"{model.name}/{getattr(policy, 'name', type(policy).__name__)}"
    # the truncated value is within `tail` of the true one; count it against us
    return [BoundReport("theorem1", v_star - v_exec + tail, rhs1, name),
            BoundReport("theorem2", abs(v_comp - v_exec) + tail, rhs2, name)]


def extraction_policies(model: LIMMDP, solution: CutoffSolution, V_exec: float) -> dict:
    phantom = model.n - 1
    return {
        "trivial": TrivialPolicy(model, solution, V_exec),
        "aggregate": AggregatePolicy(model, solution, V_exec,
                                     uniform_phantom(model, V_exec, solution.V_comp, phantom,
                                                     model.start[phantom][1])),
        "smbe": MemoryPolicy(model, solution, V_exec),
    }


def theorem_suite(instances: int = 100, seed: int = 0) -> dict:
    """Both bounds on random small models for all three extraction methods."""
    reports = []
    for k in range(instances):
        model, V_comp, H = random_instance(seed * 100003 + k)
        c = horizon_constant(model.V, model.R)
        eta = max(0, H - c)
        sol = solve_cutoff(model, CutoffConfig(model.V, V_comp - model.V, eta))
        joint = solve_joint_optimal(model)
        for name, pol in extraction_policies(model, sol, model.V).items():
            pol.name = name
            reports.extend(check_theorems(model, sol, pol, model.V, eta, joint))
    return summarise(reports)


def benchmark_theorem_suite(envs=None) -> dict:
    """Both bounds on the registered benchmarks for the corner and cited policies."""
    from .benchmarks import make
    from .benchmarks.policies import build_policy, parse_policy
    from .benchmarks.suite import GOLDENS, resolve
    reports = []
    for env in envs or list(GOLDENS):
        model = make(env)
        joint = solve_joint_optimal(model)
        for label in ("trivial:cutoff", "trivial:amalgam", resolve(env, "smbe")):
            spec = parse_policy(model, label)
            pol = build_policy(model, spec)
            pol.name = label
            reports.extend(check_theorems(model, pol.solution, pol, model.V, spec.eta, joint))
    return summarise(reports)


def summarise(reports: list[BoundReport]) -> dict:
    fails = [r.as_dict() for r in reports if not r.ok]
    worst = min((r.margin for r in reports), default=math.inf)
    return {"checked": len(reports), "violations": len(fails), "worst_margin": worst,
            "failures": fails[:20], "pass": not fails}


# consistent performance conditions

def table_policy(solution: CutoffSolution, greedy_model: LIMMDP | None = None, corrupt=None):
    """Proper cutoff policy pi(h, s, Q) from a solved table.

    Layer H + 1 (the appended stationary policy) is the one-step greedy
    policy. `corrupt` maps (members, states, h) to a replacement group action.
    """
    model = solution.model
    H = solution.H

    def group(h, members, states):
        if corrupt is not None and (members, states, h) in corrupt:
            return corrupt[(members, states, h)]
        if h > H:
            return greedy_action(model, members, states)
        return solution.group_action(members, states, h)

    def act(h, s, Q):
        a = [None] * len(s)
        for q in Q:
            for i, ai in zip(q, group(h, q, tuple(s[i] for i in q))):
                a[i] = ai
        return tuple(a)

    return act


def greedy_action(model: LIMMDP, members, states):
    best, arg = -math.inf, None
    for a in itertools.product(*[model.actions(i, si) for i, si in zip(members, states)]):
        r = group_reward(model, members, states, a)
        if r > best + EPS:
            best, arg = r, a
    return arg


def _restrict(P, g):
    gs = set(g)
    return tuple(b for b in (tuple(i for i in blk if i in gs) for blk in P) if b)


def block_transition(model: LIMMDP, s, P, a) -> dict:
    """Successor distribution with blocks of P evolving independently."""
    dist = {tuple(s): 1.0}
    for b in P:
        sub = group_transition(model, b, [s[i] for i in b], [a[i] for i in b])
        nxt = {}
        for base, p in dist.items():
            for s2, q in sub.items():
                new = list(base)
                for i, v in zip(b, s2):
                    new[i] = v
                key = tuple(new)
                nxt[key] = nxt.get(key, 0.0) + p * q
        dist = nxt
    return dist


def displaced_value(model: LIMMDP, policy, V_comp, s, P_true, P_act, h0: int, h1: int,
                    g, gamma=None) -> float:
    """[V_{h0,h1}]_g when the environment carries P_true but the policy acts on P_act."""
    gamma = model.gamma if gamma is None else gamma
    dist = {(tuple(s), P_true, P_act): 1.0}
    total = 0.0
    for t in range(h0, h1 + 1):
        nxt = {}
        for (st, Pt, Pa), p in dist.items():
            a = policy(t, st, Pa)
            r = 0.0
            for b in _restrict(Pt, g):
                r += group_reward(model, b, [st[i] for i in b], [a[i] for i in b])
            total += gamma ** (t - h0) * p * r
            if t == h1:
                continue
            for s2, q in block_transition(model, st, Pt, a).items():
                Z2 = communication_partition(model, s2, V_comp)
                key = (s2, partition_intersection(Pt, Z2), partition_intersection(Pa, Z2))
                nxt[key] = nxt.get(key, 0.0) + p * q
        dist = nxt
    return total


def check_consistent_performance(model: LIMMDP, solution: CutoffSolution, policy=None,
                                 states=None) -> dict:
    """Worst violation of the four improvement conditions over every (s, P, P', h, p)."""
    V = solution.V_comp
    H = solution.H
    pol = policy or table_policy(solution)
    worst = {"constructive": -math.inf, "deconstructive": -math.inf,
             "displaced": -math.inf, "contracted": -math.inf}
    where = {}

    def note(name, lhs, rhs, ctx):
        v = lhs - rhs
        if v > worst[name]:
            worst[name] = v
            where[name] = ctx

    for s in (all_joint_states(model) if states is None else states):
        s = tuple(s)
        for P in finer_partitions(communication_partition(model, s, V)):
            for p in P:
                base = {h: displaced_value(model, pol, V, s, P, P, h, H, p) for h in (0, 1)}
                note("displaced", displaced_value(model, pol, V, s, P, P, 1, H + 1, p),
                     base[0], (s, P, p))
                if H >= 1:
                    note("contracted", displaced_value(model, pol, V, s, P, P, 0, H - 1, p),
                         base[1], (s, P, p))
                for Pf in finer_partitions(P):
                    if Pf == P:
                        continue
                    for h in (0, 1):
                        note("constructive", displaced_value(model, pol, V, s, P, Pf, h, H, p),
                             base[h], (s, P, Pf, h, p))
            for Pf in finer_partitions(P):
                if Pf == P:
                    continue
                for pf in Pf:
                    for h in (0, 1):
                        note("deconstructive",
                             displaced_value(model, pol, V, s, Pf, P, h, H, pf),
                             displaced_value(model, pol, V, s, Pf, Pf, h, H, pf), (s, P, Pf, h, pf))
    ok = all(v <= EPS for v in worst.values())
    return {"worst": worst, "where": {k: repr(v) for k, v in where.items()}, "pass": ok}


def cpp_suite(instances: int = 25, seed: int = 0) -> dict:
    """Optimal finite-horizon tables pass every condition on random models."""
    results = []
    cfg = InstanceConfig(max_joint_states=400, horizon=(1, 3))
    for k in range(instances):
        model, V_comp, H = random_instance(seed * 100003 + k, cfg)
        sol = solve_full(model, V_comp, H)
        rep = check_consistent_performance(model, sol)
        results.append({"instance": k, **rep})
    fails = [r for r in results if not r["pass"]]
    return {"checked": len(results), "failures": fails[:5], "pass": not fails}


def cpp_negative_control(seed: int = 0, tries: int = 50) -> dict:
    """Search for a corrupted table (one group action flipped to its worst
    alternative) that breaks at least one condition."""
    cfg = InstanceConfig(agents=(2, 2), max_joint_states=200, horizon=(2, 3))
    for k in range(tries):
        model, V_comp, H = random_instance(seed * 100003 + k, cfg)
        sol = solve_full(model, V_comp, H)
        rng = random.Random(k)
        members, states = rng.choice([key for key in sol.keys if len(key[0]) == 2] or sol.keys)
        h = 1
        qs = sol.q_values(members, states, h)
        worst_a = min(qs, key=lambda x: x[1])[0]
        if abs(min(q for _, q in qs) - max(q for _, q in qs)) < 1e-6:
            continue
        pol = table_policy(sol, corrupt={(tuple(members), tuple(states), h): worst_a})
        rep = check_consistent_performance(model, sol, pol)
        if not rep["pass"]:
            return {"instance": k, "corrupted": repr((members, states, h, worst_a)),
                    "worst": rep["worst"], "pass": True}
    return {"pass": False, "reason": "no corrupted table violated a condition"}


# group counts

def group_count_bound(L: int, n: int, V: float) -> tuple[float, float]:
    """(binomial-sum bound, M (m + 1)^n) on labelled group states of an L x L grid."""
    if V < 0.5:
        raise ValueError("the bound assumes V >= 1/2")
    M = L * L
    m = (2 * (n - 1) * V + 1) ** 2
    total = n * M * sum(math.comb(n - 1, k) * (2 * k * V + 1) ** (2 * k) for k in range(n))
    loose = M * (m + 1) ** n
    assert total <= loose + EPS
    return total, loose


def chebyshev_model(L: int, n: int, V: float) -> TabularModel:
    space = MetricSpace.grid((L, L), "chebyshev")
    moves = [(dx, dy) for dx in (-1, 0, 1) for dy in (-1, 0, 1)]
    table = {}
    for x in range(len(space)):
        entries = []
        for k, d in enumerate(moves):
            tgt = space.step(x, d)
            entries.append((k, (((x if tgt is None else tgt, 0), 1.0),)))
        table[(x, 0)] = tuple(entries)
    return TabularModel(space=space, tables=[table] * n, start=tuple((0, 0) for _ in range(n)),
                        R=0, V=V, gamma=0.9, name=f"chebyshev-{L}-{n}")


def count_group_states(model: LIMMDP, V: float) -> int:
    """|{s_z : z in Z(s), s in S}| by enumerating every joint state."""
    seen = set()
    for s in all_joint_states(model):
        for z in communication_partition(model, s, V):
            seen.add((z, tuple(s[i] for i in z)))
    return len(seen)


def check_group_count(L: int = 4, n: int = 2, V: float = 1) -> dict:
    model = chebyshev_model(L, n, V)
    counted = count_group_states(model, V)
    sol = CutoffSolution(model, V, 0)
    for s in all_joint_states(model):
        for z in communication_partition(model, s, V):
            sol.add_seed(z, [s[i] for i in z])
    sol._expand()
    total, loose = group_count_bound(L, n, V)
    return {"L": L, "n": n, "V": V, "group_states": counted, "solver_keys": len(sol.keys),
            "binomial_bound": total, "power_bound": loose,
            "pass": counted <= total and len(sol.keys) <= loose}


# truncation

def check_truncation(model: LIMMDP, policy_factory, T: int | None = None, extra: int = 50):
    """|return(T) - return(T + extra)| against the tail bound at T."""
    T = horizon_for(model, 0.005) if T is None else T
    a = rollout(model, policy_factory(), T, find_cycle=False)
    b = rollout(model, policy_factory(), T + extra, find_cycle=False)
    return BoundReport(f"truncation(T={T})", abs(a.ret - b.ret), a.tail, model.name)


def check_horizon_truncation(solution: CutoffSolution) -> BoundReport:
    """|V_0 - V_1| <= gamma^H r~_p over every enumerated group state."""
    from .mmdp import r_tilde_group
    sol = solution
    worst = -math.inf
    lhs_at = rhs_at = 0.0
    for k, (members, states) in enumerate(sol.keys):
        if k >= sol._solved_n or sol.H < 1:
            continue
        v0 = sol.group_value(members, states, 0)
        v1 = sol.group_value(members, states, 1)
        rhs = sol.gamma ** sol.H * r_tilde_group(sol.model, members)
        if abs(v0 - v1) - rhs > worst:
            worst = abs(v0 - v1) - rhs
            lhs_at, rhs_at = abs(v0 - v1), rhs
    return BoundReport("horizon_truncation", lhs_at, rhs_at, sol.model.name)


def decomposition_suite(instances: int = 100, seed: int = 0) -> dict:
    reports = []
    for k in range(instances):
        model, V_comp, H = random_instance(seed * 100003 + k)
        rep = check_decomposition(model, V_comp, H)
        rep.instance = f"seed={seed * 100003 + k}"
        reports.append(rep)
    return summarise(reports)


PROPERTIES = ("decomposition", "dependence_time", "theorems", "consistent_performance",
              "group_count")


def verify(prop: str, instances: int | None = None, seed: int = 0) -> dict:
    """One named property suite as a JSON-ready report."""
    if prop == "decomposition":
        return decomposition_suite(instances or 100, seed)
    if prop == "dependence_time":
        out = dependence_time_suite(instances or 1000, seed)
        out["negative_control"] = dependence_time_negative_control()
        out["pass"] = out["pass"] and out["negative_control"]["pass"]
        out["failures"] = out["failures"][:20]
        return out
    if prop == "theorems":
        out = theorem_suite(instances or 100, seed)
        out["benchmarks"] = benchmark_theorem_suite()
        out["pass"] = out["pass"] and out["benchmarks"]["pass"]
        return out
    if prop == "consistent_performance":
        out = cpp_suite(instances or 25, seed)
        out["negative_control"] = cpp_negative_control(seed)
        out["pass"] = out["pass"] and out["negative_control"]["pass"]
        return out
    if prop == "group_count":
        cases = [check_group_count(L, n, V) for L, n, V in ((4, 2, 1), (5, 2, 1), (3, 3, 1), (6, 2, 2))]
        return {"cases": cases, "pass": all(c["pass"] for c in cases)}
    raise KeyError(f"unknown property {prop!r}; available: {', '.join(PROPERTIES)}")
