"""Execution policies extracted from a solved Cutoff MDP.

At execution time every visibility group z (distance V_exec) builds a belief
(a group state containing z), asks the solved table for the belief group's
joint action at layer 0, and keeps its own agents' part of it. The methods
differ only in how the belief is formed:

  trivial    the belief is the observed group itself
  aggregate  a distribution over beliefs that depends only on the observation
  memory     beliefs assembled from per-agent memory tables
"""
from __future__ import annotations

from dataclasses import dataclass
from typing import Callable

from .geometry import block_of
from .mmdp import LIMMDP, communication_partition, group_transition, partition_of


class InvalidBelief(ValueError):
    pass


def check_belief(model: LIMMDP, z, s_z, members, states, V_exec) -> None:
    """A belief must contain z as a whole visibility block, with z's states intact."""
    pos = {i: k for k, i in enumerate(members)}
    for i, si in zip(z, s_z):
        if i not in pos or states[pos[i]] != si:
            raise InvalidBelief(f"belief does not reproduce observed agent {i}")
    Z = partition_of(model, members, states, V_exec)
    if tuple(z) not in Z:
        raise InvalidBelief(f"observed group {tuple(z)} is not a block of the belief")


class ExecutionPolicy:
    """Base class. Subclasses implement `beliefs` or override `act`."""

    def __init__(self, model: LIMMDP, solution, V_exec: float):
        self.model = model
        self.solution = solution
        self.V_exec = V_exec

    def initial_memory(self):
        return None

    def groups(self, s):
        return communication_partition(self.model, s, self.V_exec)

    def act(self, s, t, memory, rng=None):
        """List of (probability, joint action, next memory)."""
        raise NotImplementedError

    def signature(self, memory):
        return memory


class TrivialPolicy(ExecutionPolicy):
    name = "trivial"

    def act(self, s, t, memory, rng=None):
        a = [None] * len(s)
        for z in self.groups(s):
            for i, ai in zip(z, self.solution.group_action(z, [s[i] for i in z], 0)):
                a[i] = ai
        return [(1.0, tuple(a), None)]


class AggregatePolicy(ExecutionPolicy):
    """Beliefs drawn from `placement(model, z, s_z)` -> [(prob, members, states)]."""
    name = "aggregate"

    def __init__(self, model, solution, V_exec, placement: Callable):
        super().__init__(model, solution, V_exec)
        self.placement = placement

    def act(self, s, t, memory, rng=None):
        dist = {(): 1.0}
        order = []
        for z in self.groups(s):
            s_z = [s[i] for i in z]
            local = {}
            for p, members, states in self.placement(self.model, z, s_z):
                check_belief(self.model, z, s_z, members, states, self.V_exec)
                ga = self.solution.group_action(members, states, 0)
                pos = {i: k for k, i in enumerate(members)}
                az = tuple(ga[pos[i]] for i in z)
                local[az] = local.get(az, 0.0) + p
            order.append(z)
            dist = {prev + (az,): p * q for prev, p in dist.items() for az, q in local.items()}
        out = []
        for parts, p in sorted(dist.items()):
            a = [None] * len(s)
            for z, az in zip(order, parts):
                for i, ai in zip(z, az):
                    a[i] = ai
            out.append((p, tuple(a), None))
        return out


def uniform_phantom(model: LIMMDP, V_exec: float, V_comp: float, phantom: int, internal):
    """Placement: with probability 1/2 the observation alone, otherwise one
    phantom agent placed uniformly on cells just outside visibility."""

    def placement(m, z, s_z):
        if phantom in z:
            return [(1.0, tuple(z), tuple(s_z))]
        cells = []
        for x in range(len(m.space)):
            d = min(m.space.distance(x, si[0]) for si in s_z)
            if V_exec < d <= V_comp:
                cells.append(x)
        if not cells:
            return [(1.0, tuple(z), tuple(s_z))]
        out = [(0.5, tuple(z), tuple(s_z))]
        members = tuple(sorted(tuple(z) + (phantom,)))
        for x in cells:
            states = []
            for i in members:
                states.append((x, internal) if i == phantom else s_z[z.index(i)])
            out.append((0.5 / len(cells), members, tuple(states)))
        return out

    return placement


@dataclass(frozen=True)
class MemoryConfig:
    """Options for memory based extraction.

    clear_at: forget remembered agents when the belief group reaches this size
    heuristic_at: groups of at least this size act through `heuristic`
    drop_far: forget remembered agents farther than V_comp from the observer
    """
    clear_at: int | None = None
    heuristic_at: int | None = None
    drop_far: bool = False


class MemoryPolicy(ExecutionPolicy):
    """Simple memory based extraction.

    Memory is a tuple with one entry per agent; each entry is a sorted tuple of
    (agent j, estimated local state of j, time j was last observed).
    """
    name = "smbe"

    def __init__(self, model, solution, V_exec, config: MemoryConfig = MemoryConfig(),
                 heuristic: Callable | None = None):
        super().__init__(model, solution, V_exec)
        self.config = config
        self.heuristic = heuristic
        self.V_comp = solution.V_comp
        self.heuristic_calls = 0
        self.group_calls = 0

    def initial_memory(self):
        return tuple(() for _ in range(self.model.n))

    def consolidate(self, s, t, z, memory):
        """Merged table for group z: observed agents plus freshest remembered ones."""
        model = self.model
        merged = {i: (s[i], t) for i in z}
        zs = set(z)
        for i in z:
            for j, sj, tj in memory[i]:
                if j in zs:
                    continue
                if self.config.drop_far and model.space.distance(s[i][0], sj[0]) > self.V_comp:
                    continue
                cur = merged.get(j)
                # ties keep the lowest observer index, which was seen first
                if cur is None or tj > cur[1]:
                    merged[j] = (sj, tj)
        # an estimate inside visibility of z contradicts the observation
        for j in list(merged):
            if j in zs:
                continue
            pj = merged[j][0][0]
            if any(model.space.distance(pj, s[k][0]) <= self.V_exec for k in z):
                del merged[j]
        return merged

    def belief(self, s, t, z, memory):
        merged = self.consolidate(s, t, z, memory)
        members = tuple(sorted(merged))
        states = tuple(merged[j][0] for j in members)
        Zc = partition_of(self.model, members, states, self.V_comp)
        zb = block_of(Zc, z[0])
        if self.config.clear_at is not None and len(zb) >= self.config.clear_at:
            merged = {i: merged[i] for i in z}
            zb = tuple(z)
        return merged, zb

    def act(self, s, t, memory, rng=None):
        model = self.model
        a = [None] * len(s)
        new_memory = list(memory)
        for z in self.groups(s):
            self.group_calls += 1
            if self.config.heuristic_at is not None and len(z) >= self.config.heuristic_at:
                self.heuristic_calls += 1
                az = self.heuristic(model, z, [s[i] for i in z], rng)
                for i, ai in zip(z, az):
                    a[i] = ai
                entry = tuple((j, s[j], t) for j in z)
                for i in z:
                    new_memory[i] = entry
                continue
            merged, zb = self.belief(s, t, z, memory)
            states = tuple(merged[j][0] for j in zb)
            ab = self.solution.group_action(zb, states, 0)
            nxt = most_likely(group_transition(model, zb, states, ab))
            entry = tuple((j, nxt[k], merged[j][1]) for k, j in enumerate(zb))
            pos = {j: k for k, j in enumerate(zb)}
            for i in z:
                a[i] = ab[pos[i]]
                new_memory[i] = entry
        return [(1.0, tuple(a), tuple(new_memory))]

    def signature(self, memory):
        """Memory with timestamps replaced by their rank; behaviour only
        depends on the order of timestamps."""
        stamps = sorted({tj for entry in memory for _, _, tj in entry})
        rank = {v: k for k, v in enumerate(stamps)}
        return tuple(tuple((j, sj, rank[tj]) for j, sj, tj in entry) for entry in memory)


def most_likely(dist: dict):
    """Most probable outcome; ties go to the lexicographically smallest."""
    best = max(dist.values())
    return min(k for k, p in dist.items() if p >= best - 1e-12)


class JointPolicy:
    """Acts with the fully observable joint optimum."""
    name = "joint"

    def __init__(self, joint):
        self.joint = joint

    def initial_memory(self):
        return None

    def act(self, s, t, memory, rng=None):
        return [(1.0, self.joint.action(s), None)]

    def signature(self, memory):
        return memory


def execute_policy_action(policy, s, t, memory, rng=None):
    """Single decision: (joint action, updated memory) for deterministic policies,
    sampled with `rng` otherwise."""
    options = policy.act(s, t, memory, rng)
    if len(options) == 1:
        return options[0][1], options[0][2]
    u = rng.random()
    acc = 0.0
    for p, a, m in options:
        acc += p
        if u < acc:
            return a, m
    return options[-1][1], options[-1][2]
