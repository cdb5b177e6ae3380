"""Swarm of agents crossing a torus of rooms.

Every room is a size x size grid with an entrance on the west and north walls
and an exit door on the east and south walls. An agent inside a room has an
objective (0: east exit, 1: south exit). Reaching the matching door completes
the objective; on the next step the agent leaves and joins the queue of the
neighbouring room's entrance (east exit -> west entrance of the room to the
east, south exit -> north entrance of the room below). A queued agent enters
once no agent of that room is within V_exec of the entrance cell, and draws a
fresh objective.

All rooms share one local model. Groups of up to `table_max` agents act from a
solved Cutoff table shared across agents; larger visibility groups act through
a randomised greedy heuristic.
"""
from __future__ import annotations

import itertools
import json
import random
import time
from dataclasses import asdict, dataclass

from ..cutoff_solver import CutoffSolution, HomogeneousSharing, tail_eta
from ..geometry import proximity_partition
from ..mmdp import TabularModel, group_transition, horizon_constant
from ..policy_extraction import MemoryConfig, MemoryPolicy, most_likely
from ..rollout_engine import atomic_write

EAST, SOUTH, DONE = 0, 1, 2
MOVES = (("stay", (0, 0)), ("left", (-1, 0)), ("right", (1, 0)),
         ("down", (0, -1)), ("up", (0, 1)))


@dataclass(frozen=True)
class SwarmConfig:
    rooms_x: int = 6
    rooms_y: int = 5
    agents: int = 100
    size: int = 4
    V_exec: float = 3.0
    V_comp: float = 5.0
    R: float = 1.0
    gamma: float = 0.9
    goal_reward: float = 100.0
    collision_penalty: float = -500.0
    eta: int | None = None
    table_max: int = 3
    greedy_prob: float = 0.8
    resamples: int = 200
    clear_at: int = 4
    heuristic_at: int = 4
    drop_far: bool = True
    steps: int = 1000
    checkpoints: tuple = (50, 150, 500, 1000)
    seed: int = 0


@dataclass
class SwarmStats:
    t: int
    collisions: int
    mean_objectives: float
    min_objectives: int
    max_objectives: int
    total_objectives: int
    max_room_agents: int
    max_group: int
    mean_group: float
    group_sizes: dict        # size -> fraction of group decisions so far
    heuristic_calls: int
    group_calls: int
    heuristic_fraction: float
    queued: int
    runtime: float


class Room:
    """Geometry of one room in local coordinates.

    Interior cells are (1..size, 1..size); the east door is (size+1, ye) and
    the south door (xs, 0). Each door carries an exit tail for leaving agents.
    """

    def __init__(self, size: int, tail: int):
        self.size = size
        self.east_door = (size + 1, size // 2)
        self.south_door = (size // 2, 0)
        self.west_entry = (1, size // 2 + 1)
        self.north_entry = (size // 2 + 1, size)
        self.interior = [(x, y) for y in range(1, size + 1) for x in range(1, size + 1)]
        self.doors = {EAST: self.east_door, SOUTH: self.south_door}
        self.tail = tail

    def metric(self) -> dict:
        full = [(x, y) for y in range(self.size + 2) for x in range(self.size + 2)]
        keep = set(self.interior) | {self.east_door, self.south_door}
        return {"variant": "grid-manhattan", "dims": [self.size + 2, self.size + 2],
                "blocked": [list(c) for c in full if c not in keep],
                "tails": [{"name": "east", "anchor": list(self.east_door), "length": self.tail},
                          {"name": "south", "anchor": list(self.south_door), "length": self.tail}]}

    def walker_entries(self) -> list:
        """Kernel table entries [pos, internal, [[action, [[pos, internal, p]]]]]."""
        cells = set(self.interior)
        entries = []
        for (x, y) in self.interior:
            for k in (EAST, SOUTH):
                acts = []
                for name, (dx, dy) in MOVES:
                    tgt = (x + dx, y + dy)
                    if tgt in cells or tgt == self.doors[k]:
                        acts.append([name, [[list(tgt), k, 1.0]]])
                entries.append([[x, y], k, acts])
        for k, name in ((EAST, "east"), (SOUTH, "south")):
            tail0 = ["tail", name, 1]
            entries.append([list(self.doors[k]), k, [["leave", [[tail0, DONE, 1.0]]]]])
            for step in range(1, self.tail + 1):
                nxt = ["tail", name, min(step + 1, self.tail)]
                entries.append([["tail", name, step], DONE, [["walk", [[nxt, DONE, 1.0]]]]])
        return entries


def room_model(config: SwarmConfig, n_agents: int | None = None) -> TabularModel:
    """Local model of one room with `n_agents` interchangeable walkers."""
    from .envspec import build_model

    room = Room(config.size, tail=int(config.V_comp) + 1)
    n = config.agents if n_agents is None else n_agents
    spec = {
        "name": "swarm-room",
        "metric": room.metric(),
        "constants": {"R": config.R, "V": config.V_exec, "gamma": config.gamma},
        "agents": [{"pos": ["tail", "east", room.tail], "internal0": DONE,
                    "internal_machine": "walker"}] * n,
        "machines": {"walker": {"internal": [EAST, SOUTH, DONE]}},
        "kernels": [{"kind": "table", "entries": room.walker_entries()}],
        "rewards": [
            {"kind": "self", "cells": [list(room.east_door)], "internal": [EAST],
             "value": config.goal_reward},
            {"kind": "self", "cells": [list(room.south_door)], "internal": [SOUTH],
             "value": config.goal_reward},
            {"kind": "pair", "max_dist": config.R, "value": config.collision_penalty,
             "internal_i": [EAST, SOUTH], "internal_j": [EAST, SOUTH]},
        ],
        "homogeneous": True,
    }
    model = build_model(spec)
    model.room = room
    return model


def solve_room_tables(model: TabularModel, config: SwarmConfig) -> CutoffSolution:
    """Cutoff table over every connected group of up to `table_max` live agents."""
    c = horizon_constant(config.V_exec, config.R)
    eta = tail_eta(config.gamma, c) if config.eta is None else config.eta
    sol = CutoffSolution(model, config.V_comp, c + eta, sharing=HomogeneousSharing(),
                         keep_layers=False)
    live = sorted(s for s in model.local_states(0) if s[1] != DONE)
    dist = model.space.distance
    for k in range(1, config.table_max + 1):
        members = tuple(range(k))
        for combo in itertools.combinations_with_replacement(live, k):
            if len(proximity_partition(members, [s[0] for s in combo], dist, config.V_comp)) == 1:
                sol.add_seed(members, combo)
    return sol.solve()


class Swarm:
    """State of the whole swarm: rooms, queues, memories and counters."""

    def __init__(self, config: SwarmConfig, model=None, solution=None):
        self.config = config
        self.rng = random.Random(config.seed)
        self.model = model or room_model(config)
        self.room = self.model.room
        self.solution = solution or solve_room_tables(self.model, config)
        self.policy = MemoryPolicy(self.model, self.solution, config.V_exec,
                                   MemoryConfig(config.clear_at, config.heuristic_at,
                                                config.drop_far))
        sp = self.model.space
        self.node = sp.node
        self.dist = sp.distance
        self.door_node = {k: sp.node(c) for k, c in self.room.doors.items()}
        self.entry_node = {"west": sp.node(self.room.west_entry),
                           "north": sp.node(self.room.north_entry)}
        n_rooms = config.rooms_x * config.rooms_y
        self.members: list[set] = [set() for _ in range(n_rooms)]
        self.state: dict = {}
        self.room_of: dict = {}
        self.memory: dict = {}
        self.queues = {(r, e): [] for r in range(n_rooms) for e in ("west", "north")}
        self.objectives = [0] * config.agents
        self.collisions = 0
        self.heuristic_calls = 0
        self.group_calls = 0
        self.size_counts: dict = {}
        self.max_room_agents = 0
        self.t = 0
        self._place()

    def _place(self):
        cfg = self.config
        cells = [self.node(c) for c in self.room.interior]
        n_rooms = len(self.members)
        for gid in range(cfg.agents):
            r = gid % n_rooms
            free = [x for x in cells
                    if all(self.dist(x, self.state[j][0]) > cfg.R for j in self.members[r])]
            if not free:
                self.queues[(r, "west")].append(gid)
                continue
            self._enter(gid, r, self.rng.choice(free))

    def _enter(self, gid, r, x):
        self.state[gid] = (x, self.rng.choice((EAST, SOUTH)))
        self.room_of[gid] = r
        self.members[r].add(gid)
        self.memory[gid] = ()

    def neighbour(self, r, k):
        cfg = self.config
        rx, ry = r % cfg.rooms_x, r // cfg.rooms_x
        if k == EAST:
            return ((rx + 1) % cfg.rooms_x) + ry * cfg.rooms_x, "west"
        return rx + ((ry + 1) % cfg.rooms_y) * cfg.rooms_x, "north"

    # acting
    def greedy(self, si):
        acts = self.model.actions(0, si)
        if si[1] == DONE:
            return acts[0]
        door = self.door_node[si[1]]
        d = [self.dist(self.model.kernel(0, si, a)[0][0][0], door) for a in acts]
        best = min(d)
        return self.rng.choice([a for a, v in zip(acts, d) if v == best])

    def heuristic(self, z, s_z):
        """Randomised greedy joint action that avoids collisions when it can."""
        cfg = self.config
        az = ()
        for _ in range(cfg.resamples):
            az = tuple(self.greedy(si) if self.rng.random() < cfg.greedy_prob
                       else self.rng.choice(self.model.actions(0, si)) for si in s_z)
            nxt = [self.model.kernel(0, si, ai)[0][0] for si, ai in zip(s_z, az)]
            if not any(self.dist(p[0], q[0]) <= cfg.R
                       for p, q in itertools.combinations(nxt, 2)):
                return az
        return az

    def step(self) -> dict:
        """Advance one timestep; returns a summary record of the step."""
        cfg = self.config
        t = self.t
        collisions0 = self.collisions
        occupancy = [len(m) for m in self.members]
        sizes, heuristic, completed = [], 0, []
        actions = {}
        for r, mem in enumerate(self.members):
            if not mem:
                continue
            ids = tuple(sorted(mem))
            s = {i: self.state[i] for i in ids}
            self.max_room_agents = max(self.max_room_agents, len(ids))
            for z in proximity_partition(ids, [s[i][0] for i in ids], self.dist, cfg.V_exec):
                self.group_calls += 1
                self.size_counts[len(z)] = self.size_counts.get(len(z), 0) + 1
                sizes.append(len(z))
                if len(z) >= cfg.heuristic_at:
                    heuristic += 1
                    self.heuristic_calls += 1
                    az = self.heuristic(z, [s[i] for i in z])
                    entry = tuple((j, s[j], t) for j in z)
                    for i, ai in zip(z, az):
                        actions[i] = ai
                        self.memory[i] = entry
                    continue
                merged, zb = self.policy.belief(s, t, z, self.memory)
                states = tuple(merged[j][0] for j in zb)
                ab = self.solution.group_action(zb, states, 0)
                nxt = most_likely(group_transition(self.model, zb, states, ab))
                # agents predicted to have left the room are forgotten
                entry = tuple((j, nxt[k], merged[j][1]) for k, j in enumerate(zb)
                              if nxt[k][1] != DONE)
                pos = {j: k for k, j in enumerate(zb)}
                for i in z:
                    actions[i] = ab[pos[i]]
                    self.memory[i] = entry
        leaving = []
        for i, ai in actions.items():
            s2 = self.model.kernel(0, self.state[i], ai)[0][0]
            self.state[i] = s2
            if s2[1] == DONE:
                leaving.append(i)
            elif s2[0] == self.door_node[s2[1]]:
                self.objectives[i] += 1
                completed.append(i)
        for i in sorted(leaving):
            r = self.room_of.pop(i)
            k = EAST if self.model.space.labels[self.state[i][0]][1] == "east" else SOUTH
            self.members[r].discard(i)
            del self.state[i]
            self.memory.pop(i, None)
            self.queues[self.neighbour(r, k)].append(i)
        for r, mem in enumerate(self.members):
            ids = sorted(mem)
            for a, b in itertools.combinations(ids, 2):
                if self.dist(self.state[a][0], self.state[b][0]) <= cfg.R:
                    self.collisions += 1
        for (r, e), queue in self.queues.items():
            if not queue:
                continue
            x = self.entry_node[e]
            if all(self.dist(x, self.state[j][0]) > cfg.V_exec for j in self.members[r]):
                self._enter(queue.pop(0), r, x)
        self.t += 1
        return {"t": t, "occupancy": occupancy, "groups": sorted(sizes), "heuristic": heuristic,
                "completed": sorted(completed), "collisions": self.collisions - collisions0,
                "queued": sum(len(q) for q in self.queues.values())}

    def stats(self, runtime: float) -> SwarmStats:
        objs = self.objectives
        calls = max(1, self.group_calls)
        sizes = self.size_counts
        return SwarmStats(
            t=self.t, collisions=self.collisions, mean_objectives=sum(objs) / len(objs),
            min_objectives=min(objs), max_objectives=max(objs), total_objectives=sum(objs),
            max_room_agents=self.max_room_agents, max_group=max(sizes, default=0),
            mean_group=sum(k * v for k, v in sizes.items()) / calls,
            group_sizes={k: sizes[k] / calls for k in sorted(sizes)},
            heuristic_calls=self.heuristic_calls, group_calls=self.group_calls,
            heuristic_fraction=self.heuristic_calls / max(1, self.group_calls),
            queued=sum(len(q) for q in self.queues.values()), runtime=runtime)


def stats_from_trace(records, agents: int, checkpoints) -> list[SwarmStats]:
    """SwarmStats at each checkpoint recomputed from per-step trace records."""
    objs = [0] * agents
    sizes: dict = {}
    collisions = heuristic = calls = max_room = 0
    marks = set(checkpoints)
    out = []
    for rec in records:
        for i in rec["completed"]:
            objs[i] += 1
        for k in rec["groups"]:
            sizes[k] = sizes.get(k, 0) + 1
        calls += len(rec["groups"])
        heuristic += rec["heuristic"]
        collisions += rec["collisions"]
        max_room = max(max_room, max(rec["occupancy"], default=0))
        t = rec["t"] + 1
        if t in marks:
            n = max(1, calls)
            out.append(SwarmStats(
                t=t, collisions=collisions, mean_objectives=sum(objs) / agents,
                min_objectives=min(objs), max_objectives=max(objs), total_objectives=sum(objs),
                max_room_agents=max_room, max_group=max(sizes, default=0),
                mean_group=sum(k * v for k, v in sizes.items()) / n,
                group_sizes={k: sizes[k] / n for k in sorted(sizes)},
                heuristic_calls=heuristic, group_calls=calls, heuristic_fraction=heuristic / n,
                queued=rec["queued"], runtime=0.0))
    return out


def run_swarm(config: SwarmConfig = SwarmConfig(), stats_path: str | None = None,
              log=None, record: bool = False, swarm: Swarm | None = None):
    """Run the swarm for `config.steps` steps.

    Returns (stats at each checkpoint, per-step trace records when `record`).
    """
    start = time.time()
    swarm = swarm or Swarm(config)
    out, trace = [], []
    marks = set(config.checkpoints) | {config.steps}
    for _ in range(config.steps):
        rec = swarm.step()
        if record:
            trace.append(rec)
        if swarm.t in marks:
            st = swarm.stats(time.time() - start)
            out.append(st)
            if log is not None:
                log(st)
    if stats_path is not None:
        atomic_write(stats_path, "".join(json.dumps(asdict(st)) + "\n" for st in out))
    return out, trace
