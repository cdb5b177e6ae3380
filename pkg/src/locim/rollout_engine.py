"""Simulation of execution policies on the true model."""
from __future__ import annotations

import csv
import io
import json
import os
import random
import tempfile
from dataclasses import dataclass, field

from .cutoff_solver import CoverageError
from .mmdp import LIMMDP, communication_partition, joint_reward, joint_transition, r_tilde, sample


@dataclass
class Step:
    t: int
    state: tuple
    groups: tuple
    action: tuple
    reward: float
    ret: float


@dataclass
class RolloutResult:
    ret: float
    tail: float
    steps: list = field(default_factory=list)
    cycle: tuple | None = None  # (entry time, period)


def tail_bound(model: LIMMDP, T: int, rtilde=None) -> float:
    rt = r_tilde(model) if rtilde is None else rtilde
    return model.gamma ** T * rt / (1 - model.gamma)


def horizon_for(model: LIMMDP, tol: float = 0.005, rtilde=None) -> int:
    """Smallest T whose truncated tail is below `tol`."""
    rt = r_tilde(model) if rtilde is None else rtilde
    T = 0
    while model.gamma ** T * rt / (1 - model.gamma) >= tol:
        T += 1
    return T


def _act(policy, s, t, memory, rng=None):
    try:
        return policy.act(s, t, memory, rng) if rng is not None else policy.act(s, t, memory)
    except CoverageError as exc:
        raise CoverageError(f"t={t}: no table entry for {exc.args[0]!r}") from exc


def _choose(options, rng):
    if len(options) == 1:
        return options[0]
    u = rng.random()
    acc = 0.0
    for opt in options:
        acc += opt[0]
        if u < acc:
            return opt
    return options[-1]


def rollout(model: LIMMDP, policy, T: int, s0=None, seed: int = 0, record: bool = False,
            find_cycle: bool = True) -> RolloutResult:
    """Sampled trajectory of length T with discounted return.

    When the policy and dynamics are deterministic the first revisit of an
    execution configuration (state plus memory signature) is reported as a
    cycle; the return is still accumulated over all T steps.
    """
    rng = random.Random(seed)
    s = tuple(model.start if s0 is None else s0)
    memory = policy.initial_memory()
    g = model.gamma
    total, disc = 0.0, 1.0
    seen = {}
    cycle = None
    deterministic = True
    steps = []
    for t in range(T):
        if find_cycle and deterministic and cycle is None:
            key = (s, policy.signature(memory))
            if key in seen:
                cycle = (seen[key], t - seen[key])
            else:
                seen[key] = t
        options = _act(policy, s, t, memory, rng)
        if len(options) > 1:
            deterministic = False
        _, a, memory = _choose(options, rng)
        r = joint_reward(model, s, a)
        total += disc * r
        if record:
            steps.append(Step(t, s, communication_partition(model, s), a, r, total))
        dist = joint_transition(model, s, a)
        if len(dist) > 1:
            deterministic = False
        s = sample(dist, rng) if len(dist) > 1 else next(iter(dist))
        disc *= g
    return RolloutResult(total, tail_bound(model, T), steps, cycle if deterministic else None)


def expected_return(model: LIMMDP, policy, T: int, s0=None) -> RolloutResult:
    """Exact expected discounted return over T steps.

    Branches on stochastic transitions and stochastic policy choices, merging
    branches with identical configuration.
    """
    s = tuple(model.start if s0 is None else s0)
    frontier = {(s, policy.signature(policy.initial_memory())): (1.0, policy.initial_memory())}
    total, disc = 0.0, 1.0
    for t in range(T):
        nxt = {}
        for (s, _), (p, memory) in frontier.items():
            for q, a, mem2 in _act(policy, s, t, memory):
                r = joint_reward(model, s, a)
                total += disc * p * q * r
                for s2, w in joint_transition(model, s, a).items():
                    key = (s2, policy.signature(mem2))
                    prev = nxt.get(key)
                    nxt[key] = (p * q * w + (prev[0] if prev else 0.0), mem2)
        frontier = nxt
        disc *= model.gamma
    return RolloutResult(total, tail_bound(model, T))


def rollout_mean(model: LIMMDP, policy, T: int, reps: int, seed: int = 0, s0=None):
    """(mean return, standard error, tail bound) over `reps` sampled rollouts."""
    rets = [rollout(model, policy, T, s0, seed=seed + k, find_cycle=False).ret for k in range(reps)]
    mean = sum(rets) / reps
    var = sum((r - mean) ** 2 for r in rets) / max(1, reps - 1)
    return mean, (var / reps) ** 0.5, tail_bound(model, T)


def detect_cycle(model: LIMMDP, policy, T: int, s0=None):
    """(entry time, period) of the first repeated configuration, or None."""
    return rollout(model, policy, T, s0, find_cycle=True).cycle


def write_trace(path: str, result: RolloutResult, space=None):
    """One JSON line per step: t, state, partition, action, reward, return."""
    lines = []
    for st in result.steps:
        state = [[_label(space, x), _plain(y)] for x, y in st.state]
        lines.append(json.dumps({"t": st.t, "state": state,
                                 "partition": [list(b) for b in st.groups],
                                 "action": _plain(st.action), "reward": st.reward,
                                 "return": st.ret}) + "\n")
    atomic_write(path, "".join(lines))


SUMMARY_FIELDS = ["env", "policy", "xi", "eta", "return", "tail", "cycle_period"]


def write_summary_csv(path: str, rows: list[dict], fields=SUMMARY_FIELDS):
    buf = io.StringIO()
    w = csv.DictWriter(buf, fieldnames=fields, extrasaction="ignore")
    w.writeheader()
    for row in rows:
        w.writerow(row)
    atomic_write(path, buf.getvalue())


def atomic_write(path: str, text: str):
    """Write to a temporary file next to `path`, then rename it into place."""
    d = os.path.dirname(os.path.abspath(path))
    fd, tmp = tempfile.mkstemp(dir=d, suffix=".tmp")
    try:
        with os.fdopen(fd, "w", newline="") as fh:
            fh.write(text)
        os.replace(tmp, path)
    except BaseException:
        if os.path.exists(tmp):
            os.unlink(tmp)
        raise


def _label(space, x):
    if space is None:
        return x
    return _plain(space.labels[x])


def _plain(x):
    if isinstance(x, (tuple, list)):
        return [_plain(v) for v in x]
    return x
