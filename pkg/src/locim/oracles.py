"""Independent reference computations.

These routines never use the group decomposition. They work on full joint
states (and full Cutoff states (s, P)) so they can be compared against the
decomposed solver and against rollouts.
"""
from __future__ import annotations

import itertools
import random
from dataclasses import dataclass

import numpy as np
from scipy import sparse

from .cutoff_solver import BudgetError, budget
from .geometry import MetricSpace, finer_partitions
from .mmdp import (LIMMDP, TabularModel, blocked_moves_rule, communication_partition,
                   group_reward, group_transition, joint_actions, joint_reward, joint_transition, partition_of)


# random instances

@dataclass(frozen=True)
class InstanceConfig:
    agents: tuple = (2, 3)
    cells: tuple = (4, 7)
    internal: tuple = (1, 2)
    actions: tuple = (2, 3)
    horizon: tuple = (0, 4)
    generalized_prob: float = 0.0
    stochastic_prob: float = 0.5
    max_joint_states: int = 1000


class HashedPairModel(TabularModel):
    """Tabular model whose pair terms come from a seeded hash.

    The table is conceptually |S|^2 |A|^2 entries per ordered pair; hashing
    keeps it implicit while staying deterministic.
    """

    def pair_reward(self, i, j, si, ai, sj, aj):
        if i == j:
            return self.self_rewards[i].get((si, ai), 0.0)
        key = (i, j, si, ai, sj, aj)
        val = self._pair_cache.get(key)
        if val is None:
            val = 0.0
            if self.generalized or self.dist(si, sj) <= self.R:
                rng = random.Random(hash((self._seed,) + key))
                if rng.random() < 0.6:
                    val = float(rng.randint(-5, 5))
            self._pair_cache[key] = val
        return val


def random_instance(seed: int, config: InstanceConfig = InstanceConfig()):
    """Small random model plus (V_comp, H) for cross-checking solvers."""
    rng = random.Random(seed)
    while True:
        n = rng.randint(*config.agents)
        L = rng.randint(*config.cells)
        n_int = rng.randint(*config.internal)
        if (L * n_int) ** n <= config.max_joint_states:
            break
    if rng.random() < 0.5:
        space = MetricSpace.line(L)
    else:
        space = MetricSpace.ring(L)
    n_act = rng.randint(*config.actions)
    R = rng.choice([0, 1])
    V = R + rng.choice([1, 2])
    xi = rng.choice([0, 0, 1])
    H = rng.randint(*config.horizon)
    generalized = rng.random() < config.generalized_prob
    tables = []
    self_rewards = []
    for i in range(n):
        table = {}
        sr = {}
        for x in range(L):
            nbrs = [x] + space.neighbors(x)
            for y in range(n_int):
                entries = []
                for a in range(n_act):
                    targets = [(rng.choice(nbrs), rng.randrange(n_int))]
                    if rng.random() < config.stochastic_prob:
                        other = (rng.choice(nbrs), rng.randrange(n_int))
                        if other != targets[0]:
                            targets.append(other)
                    if len(targets) == 1:
                        outs = ((targets[0], 1.0),)
                    else:
                        p = rng.choice([0.25, 0.5, 0.75])
                        outs = ((targets[0], p), (targets[1], 1 - p))
                    entries.append((a, outs))
                    if rng.random() < 0.5:
                        sr[((x, y), a)] = float(rng.randint(-5, 5))
                table[(x, y)] = tuple(entries)
        tables.append(table)
        self_rewards.append(sr)
    start = []
    for i in range(n):
        start.append((rng.randrange(L), rng.randrange(n_int)))
    model = HashedPairModel(space=space, tables=tables, start=tuple(start), R=R, V=V,
                            gamma=rng.choice([0.5, 0.8, 0.9]), self_rewards=self_rewards,
                            generalized=generalized,
                            group_rule=blocked_moves_rule if generalized else None,
                            name=f"random-{seed}")
    model._seed = seed
    return model, V + xi, H


def all_joint_states(model: LIMMDP):
    return itertools.product(*[sorted(model.local_states(i)) for i in range(model.n)])


# brute-force Cutoff MDP

class BruteForceCutoff:
    """Backward induction over every Cutoff state (s, P), P finer than Z(s)."""

    def __init__(self, model: LIMMDP, V_comp: float, H: int, gamma=None, states=None):
        self.model = model
        self.V_comp = V_comp
        self.H = H
        self.gamma = model.gamma if gamma is None else gamma
        states = list(all_joint_states(model)) if states is None else list(states)
        self.keys = []
        self.index = {}
        for s in states:
            Z = communication_partition(model, s, V_comp)
            for P in finer_partitions(Z):
                self.index[(s, P)] = len(self.keys)
                self.keys.append((s, P))
        self._solve()

    def _successors(self, s, P, a, cache):
        # per block moves, refined within the block
        dist = {(s, ()): 1.0}
        for block in P:
            sb = tuple(s[i] for i in block)
            ab = tuple(a[i] for i in block)
            ck = (block, sb, ab)
            sub = cache.get(ck)
            if sub is None:
                sub = []
                for s2, q in group_transition(self.model, block, sb, ab).items():
                    sub.append((s2, q, partition_of(self.model, block, s2, self.V_comp)))
                cache[ck] = sub
            nxt = {}
            for (base, blocks), p in dist.items():
                for s2, q, refined in sub:
                    new = list(base)
                    for i, v in zip(block, s2):
                        new[i] = v
                    key = (tuple(new), blocks + refined)
                    nxt[key] = nxt.get(key, 0.0) + p * q
            dist = nxt
        return dist

    def _solve(self):
        model = self.model
        rows, cols, vals, rew, row_state = [], [], [], [], []
        self.row_actions = []
        cache, rcache, refine = {}, {}, {}
        by_state: dict = {}
        for k, (s, P) in enumerate(self.keys):
            by_state.setdefault(s, []).append((k, P))
        for s, entries in by_state.items():
            for a in joint_actions(model, range(model.n), s):
                joint = None if model.generalized else joint_transition(model, s, a)
                for k, P in entries:
                    row = len(rew)
                    r = 0.0
                    for b in P:
                        rk = (b, tuple(s[i] for i in b), tuple(a[i] for i in b))
                        if rk not in rcache:
                            rcache[rk] = group_reward(model, b, rk[1], rk[2])
                        r += rcache[rk]
                    rew.append(r)
                    row_state.append(k)
                    self.row_actions.append(a)
                    if joint is None:
                        succ = ((s2, tuple(sorted(blocks)), p) for (s2, blocks), p
                                in self._successors(s, P, a, cache).items())
                    else:
                        succ = ((s2, self._refine(s2, P, refine), p) for s2, p in joint.items())
                    for s2, P2, p in succ:
                        rows.append(row)
                        cols.append(self.index[(s2, P2)])
                        vals.append(p)
        n, m = len(self.keys), len(rew)
        row_state = np.array(row_state)
        perm = np.argsort(row_state, kind="stable")
        inv = np.empty(m, dtype=np.int64)
        inv[perm] = np.arange(m)
        T = sparse.csr_matrix((vals, (inv[np.array(rows, dtype=np.int64)], cols)), shape=(m, n))
        r = np.array(rew)[perm]
        row_state = row_state[perm]
        self.row_actions = [self.row_actions[k] for k in perm]
        starts = np.flatnonzero(np.r_[True, row_state[1:] != row_state[:-1]])
        self.values = np.zeros((self.H + 2, n))
        for h in range(self.H, -1, -1):
            q = r + self.gamma * (T @ self.values[h + 1])
            self.values[h] = np.maximum.reduceat(q, starts)

    def _refine(self, s2, P, memo):
        key = (s2, P)
        out = memo.get(key)
        if out is None:
            blocks = []
            for b in P:
                blocks += partition_of(self.model, b, [s2[i] for i in b], self.V_comp)
            out = memo[key] = tuple(sorted(blocks))
        return out

    def value(self, s, P, h=0) -> float:
        return float(self.values[h, self.index[(tuple(s), P)]])


# joint optimal

class JointOptimal:
    """Infinite-horizon optimal values on the joint states reachable from s0."""

    def __init__(self, model: LIMMDP, s0=None, tol: float = 1e-9, gamma=None, max_iter=100000,
                 max_states: int | None = None):
        self.model = model
        limit = budget() if max_states is None else max_states
        self.gamma = model.gamma if gamma is None else gamma
        s0 = tuple(model.start if s0 is None else s0)
        self.keys = [s0]
        self.index = {s0: 0}
        rows, cols, vals, rew, row_state = [], [], [], [], []
        self.row_actions = []
        self.spans = []
        k = 0
        while k < len(self.keys):
            s = self.keys[k]
            first = len(rew)
            for a in joint_actions(model, range(model.n), s):
                row = len(rew)
                rew.append(joint_reward(model, s, a))
                row_state.append(k)
                self.row_actions.append(a)
                for s2, p in joint_transition(model, s, a).items():
                    c = self.index.get(s2)
                    if c is None:
                        if len(self.keys) >= limit:
                            raise BudgetError(f"joint state enumeration exceeded budget {limit}")
                        c = self.index[s2] = len(self.keys)
                        self.keys.append(s2)
                    rows.append(row)
                    cols.append(c)
                    vals.append(p)
            self.spans.append((first, len(rew)))
            k += 1
        n, m = len(self.keys), len(rew)
        T = sparse.csr_matrix((vals, (rows, cols)), shape=(m, n))
        r = np.array(rew)
        starts = np.array([a for a, _ in self.spans])
        v = np.zeros(n)
        g = self.gamma
        for _ in range(max_iter):
            q = r + g * (T @ v)
            v2 = np.maximum.reduceat(q, starts)
            diff = np.max(np.abs(v2 - v))
            v = v2
            if diff * g / max(1 - g, 1e-12) < tol:
                break
        q = r + g * (T @ v)
        self.values = v
        self.q = q
        self.T = T
        self.r = r

    def value(self, s=None) -> float:
        s = self.keys[0] if s is None else tuple(s)
        return float(self.values[self.index[s]])

    def action(self, s) -> tuple:
        k = self.index[tuple(s)]
        a, b = self.spans[k]
        q = self.q[a:b]
        best = q.max()
        off = int(np.flatnonzero(q >= best - 1e-9)[0])
        return self.row_actions[a + off]
