"""Locally interdependent multi-agent MDPs.

A local agent state is a pair (position node id, internal state). Joint
states are tuples of local states indexed by agent. Rewards are sums of
pairwise terms rbar[i][j] (with i == j carrying single-agent rewards), and
transitions factor over dependence groups.
"""
from __future__ import annotations

import itertools
import math
from dataclasses import dataclass, field
from typing import Callable, Sequence

from .geometry import MetricSpace, Partition, proximity_partition

PROB_TOL = 1e-9


class ModelError(ValueError):
    pass


class LIMMDP:
    """Base model. Subclasses supply actions, kernels and pairwise rewards."""

    n: int
    space: MetricSpace
    R: float
    V: float
    gamma: float
    generalized: bool = False
    homogeneous: bool = False
    name: str = "model"

    def actions(self, i: int, si) -> tuple:
        raise NotImplementedError

    def kernel(self, i: int, si, ai) -> tuple:
        """Tuple of (next local state, probability)."""
        raise NotImplementedError

    def pair_reward(self, i: int, j: int, si, ai, sj, aj) -> float:
        raise NotImplementedError

    def local_states(self, i: int):
        raise NotImplementedError

    def group_kernel(self, members: Sequence[int], states: Sequence, acts: Sequence) -> dict:
        """Distribution over next group states for one dependence group."""
        dist = {(): 1.0}
        for i, si, ai in zip(members, states, acts):
            nxt = {}
            for partial, p in dist.items():
                for s2, q in self.kernel(i, si, ai):
                    key = partial + (s2,)
                    nxt[key] = nxt.get(key, 0.0) + p * q
            dist = nxt
        return dist

    def dist(self, si, sj) -> float:
        return self.space.distance(si[0], sj[0])


# partitions of states

_PARTITION_CACHE_MAX = 200_000


def partition_of(model: LIMMDP, members: Sequence[int], states: Sequence, K: float) -> Partition:
    # memoised per model; the partition depends only on positions and K
    cache = model.__dict__.setdefault("_partition_cache", {})
    pos = tuple(s[0] for s in states)
    key = (tuple(members), pos, K)
    part = cache.get(key)
    if part is None:
        if len(cache) >= _PARTITION_CACHE_MAX:
            cache.clear()
        part = cache[key] = proximity_partition(key[0], pos, model.space.distance, K)
    return part


def dependence_partition(model: LIMMDP, s, members=None) -> Partition:
    members = tuple(range(len(s))) if members is None else tuple(members)
    return partition_of(model, members, s, model.R)


def communication_partition(model: LIMMDP, s, V=None, members=None) -> Partition:
    members = tuple(range(len(s))) if members is None else tuple(members)
    return partition_of(model, members, s, model.V if V is None else V)


# rewards

def group_reward(model: LIMMDP, members: Sequence[int], states: Sequence, acts: Sequence) -> float:
    """Sum over dependence blocks of the group of all ordered pair terms."""
    members = tuple(members)
    pos = {i: k for k, i in enumerate(members)}
    total = 0.0
    for block in partition_of(model, members, states, model.R):
        for i in block:
            ki = pos[i]
            for j in block:
                kj = pos[j]
                total += model.pair_reward(i, j, states[ki], acts[ki], states[kj], acts[kj])
    return total


def joint_reward(model: LIMMDP, s, a) -> float:
    return group_reward(model, range(len(s)), s, a)


def agent_rewards(model: LIMMDP, s, a) -> list[float]:
    """Per-agent share r_i = sum_j rbar[i][j] inside dependence blocks."""
    out = [0.0] * len(s)
    for block in dependence_partition(model, s):
        for i in block:
            out[i] = sum(model.pair_reward(i, j, s[i], a[i], s[j], a[j]) for j in block)
    return out


# transitions

def group_transition(model: LIMMDP, members: Sequence[int], states: Sequence, acts: Sequence) -> dict:
    """Distribution of the next group state, factored over dependence blocks."""
    members = tuple(members)
    pos = {i: k for k, i in enumerate(members)}
    dist = {tuple(states): 1.0}
    for block in partition_of(model, members, states, model.R):
        idx = [pos[i] for i in block]
        sub = model.group_kernel(block, [states[k] for k in idx], [acts[k] for k in idx])
        nxt = {}
        for base, p in dist.items():
            for s2, q in sub.items():
                new = list(base)
                for k, v in zip(idx, s2):
                    new[k] = v
                key = tuple(new)
                nxt[key] = nxt.get(key, 0.0) + p * q
        dist = nxt
    return dist


def joint_transition(model: LIMMDP, s, a) -> dict:
    return group_transition(model, range(len(s)), s, a)


def sample(dist: dict, rng):
    items = sorted(dist.items())
    u = rng.random()
    acc = 0.0
    for key, p in items:
        acc += p
        if u < acc:
            return key
    return items[-1][0]


def joint_actions(model: LIMMDP, members: Sequence[int], states: Sequence):
    """Joint actions in lexicographic order of the per-agent action orderings."""
    return itertools.product(*[model.actions(i, si) for i, si in zip(members, states)])


# bounds on pairwise rewards

def r_tilde(model: LIMMDP, pairs=None) -> float:
    """Sum over ordered pairs of max |rbar[i][j]|.

    `pairs` restricts the sum to a set of ordered pairs (i, j).
    """
    cache = getattr(model, "_rbar_max", None)
    if cache is None:
        cache = model._rbar_max = {}
    if pairs is None:
        pairs = [(i, j) for i in range(model.n) for j in range(model.n)]
    total = 0.0
    for i, j in pairs:
        if (i, j) not in cache:
            cache[(i, j)] = _rbar_max(model, i, j)
        total += cache[(i, j)]
    return total


def _rbar_max(model: LIMMDP, i: int, j: int) -> float:
    best = 0.0
    if i == j:
        for si in model.local_states(i):
            for ai in model.actions(i, si):
                best = max(best, abs(model.pair_reward(i, i, si, ai, si, ai)))
        return best
    states_j = list(model.local_states(j))
    for si in model.local_states(i):
        for sj in states_j:
            # outside the dependence radius a standard model is zero; in the
            # generalized model chained pairs may still carry reward
            if not model.generalized and model.dist(si, sj) > model.R:
                continue
            for ai in model.actions(i, si):
                for aj in model.actions(j, sj):
                    best = max(best, abs(model.pair_reward(i, j, si, ai, sj, aj)))
    return best


def r_tilde_group(model: LIMMDP, group) -> float:
    return r_tilde(model, [(i, j) for i in group for j in group])


def r_tilde_within(model: LIMMDP, partition: Partition) -> float:
    """Pairs whose members share a block of the partition."""
    return r_tilde(model, [(i, j) for b in partition for i in b for j in b])


def r_tilde_across(model: LIMMDP, partition: Partition) -> float:
    where = {i: k for k, b in enumerate(partition) for i in b}
    return r_tilde(model, [(i, j) for i in where for j in where if where[i] != where[j]])


# validation

def validate_model(model: LIMMDP, max_pairs: int = 200000) -> list[str]:
    """Return a list of violations (empty if the model is well formed)."""
    errors = []
    if not 0 <= model.gamma < 1:
        errors.append(f"gamma {model.gamma} outside [0, 1)")
    if not model.V > model.R:
        errors.append(f"visibility {model.V} must exceed dependence radius {model.R}")
    for i in range(model.n):
        for si in model.local_states(i):
            acts = model.actions(i, si)
            if not acts:
                errors.append(f"agent {i} has no action at {si}")
            for ai in acts:
                outs = model.kernel(i, si, ai)
                total = sum(p for _, p in outs)
                if abs(total - 1.0) > PROB_TOL:
                    errors.append(f"agent {i} kernel at {si},{ai} sums to {total}")
                for s2, p in outs:
                    if p < 0:
                        errors.append(f"negative probability at {si},{ai}")
                    if model.dist(si, s2) > 1:
                        errors.append(f"agent {i} moves {model.dist(si, s2)} from {si} via {ai}")
    if not model.generalized:
        checked = 0
        for i in range(model.n):
            for j in range(model.n):
                if i == j:
                    continue
                for si in model.local_states(i):
                    for sj in model.local_states(j):
                        if model.dist(si, sj) <= model.R:
                            continue
                        for ai in model.actions(i, si):
                            for aj in model.actions(j, sj):
                                checked += 1
                                if model.pair_reward(i, j, si, ai, sj, aj) != 0:
                                    errors.append(f"nonzero reward for pair {i},{j} beyond radius")
                                    return errors
                                if checked > max_pairs:
                                    return errors
    return errors


# tabular models

@dataclass
class PairRule:
    """Pairwise reward term added to rbar[i][j] for i != j."""
    value: float
    max_dist: float
    agents_i: frozenset | None = None
    agents_j: frozenset | None = None
    internal_i: frozenset | None = None
    internal_j: frozenset | None = None
    cells: frozenset | None = None
    same_internal: bool = False

    def __call__(self, i, j, si, sj, d) -> float:
        if d > self.max_dist:
            return 0.0
        if self.agents_i is not None and i not in self.agents_i:
            return 0.0
        if self.agents_j is not None and j not in self.agents_j:
            return 0.0
        if self.internal_i is not None and si[1] not in self.internal_i:
            return 0.0
        if self.internal_j is not None and sj[1] not in self.internal_j:
            return 0.0
        if self.cells is not None and (si[0] not in self.cells or sj[0] not in self.cells):
            return 0.0
        if self.same_internal and si[1] != sj[1]:
            return 0.0
        return self.value


@dataclass
class TabularModel(LIMMDP):
    """Model given by explicit per-agent kernel tables.

    tables[i] maps a local state to a tuple of (action, outcomes) pairs;
    self_rewards[i] maps (local state, action) to the single-agent reward;
    pair_rules are summed for ordered pairs i != j; pair_table optionally
    maps (i, j, si, ai, sj, aj) to extra reward.
    """
    space: MetricSpace
    tables: list
    start: tuple
    R: float
    V: float
    gamma: float
    self_rewards: list = field(default_factory=list)
    pair_rules: list = field(default_factory=list)
    pair_table: dict | None = None
    generalized: bool = False
    homogeneous: bool = False
    name: str = "model"
    group_rule: Callable | None = None

    def __post_init__(self):
        self.n = len(self.tables)
        self._acts = []
        self._kern = []
        for table in self.tables:
            acts, kern = {}, {}
            for si, entries in table.items():
                acts[si] = tuple(a for a, _ in entries)
                for a, outs in entries:
                    kern[(si, a)] = tuple(outs)
            self._acts.append(acts)
            self._kern.append(kern)
        if not self.self_rewards:
            self.self_rewards = [{} for _ in range(self.n)]
        self._pair_cache: dict = {}

    def actions(self, i, si):
        return self._acts[i][si]

    def kernel(self, i, si, ai):
        return self._kern[i][(si, ai)]

    def local_states(self, i):
        return self._acts[i].keys()

    def pair_reward(self, i, j, si, ai, sj, aj):
        if i == j:
            return self.self_rewards[i].get((si, ai), 0.0)
        key = (i, j, si, ai, sj, aj)
        val = self._pair_cache.get(key)
        if val is None:
            d = self.dist(si, sj)
            val = 0.0
            for rule in self.pair_rules:
                val += rule(i, j, si, sj, d)
            if self.pair_table is not None:
                val += self.pair_table.get(key, 0.0)
            self._pair_cache[key] = val
        return val

    def group_kernel(self, members, states, acts):
        if self.group_rule is not None:
            return self.group_rule(self, members, states, acts)
        return LIMMDP.group_kernel(self, members, states, acts)


def blocked_moves_rule(model, members, states, acts):
    """Generalized kernel: a mover whose target is occupied by a groupmate stays."""
    base = LIMMDP.group_kernel(model, members, states, acts)
    occupied = [s[0] for s in states]
    out = {}
    for s2, p in base.items():
        fixed = []
        for k, (old, new) in enumerate(zip(states, s2)):
            if new[0] != old[0] and any(new[0] == occupied[m] for m in range(len(states)) if m != k):
                new = (old[0], new[1])
            fixed.append(new)
        key = tuple(fixed)
        out[key] = out.get(key, 0.0) + p
    return out


def horizon_constant(V: float, R: float) -> int:
    """c = floor((V - R) / 2): steps before out-of-view agents can interact."""
    if V <= R:
        raise ModelError(f"visibility {V} must exceed the dependence radius {R}")
    return int(math.floor((V - R) / 2 + 1e-12))
