"""Finite-horizon Cutoff MDP solved through its group decomposition.

A group state is a set of agents together with their local states. Each group
acts jointly; after a transition it splits into the blocks of its own
visibility partition (computed among its members only), and the pieces are
solved independently from then on. The value of a Cutoff state (s, P) is the
sum over blocks p of the value of the group state (p, s_p).

The reachable closure of group states is compiled into a sparse matrix
(row = group state x joint action, column = successor group state) so that
backward induction is a handful of vectorized products per layer.
"""
from __future__ import annotations

import contextlib
import hashlib
import json
import math
import os
import struct
import tempfile
from dataclasses import dataclass, field

import numpy as np
from scipy import sparse

from .geometry import Partition, canonical
from .mmdp import (LIMMDP, group_reward, group_transition, horizon_constant, joint_actions,
                   partition_of, r_tilde)

TIE_TOL = 1e-9
TIE_BREAK_VERSION = 1
DEFAULT_BUDGET = 3_000_000


class CoverageError(KeyError):
    pass


class BudgetError(RuntimeError):
    pass


def budget() -> int:
    return int(os.environ.get("LOCIM_BUDGET", DEFAULT_BUDGET))


def tail_eta(gamma: float, c: int, rtilde: float = 1.0, rel: float = 1e-4) -> int:
    """Smallest eta with gamma^(c+eta) < rel, i.e. a negligible truncated tail."""
    if gamma <= 0:
        return 0
    need = math.log(rel) / math.log(gamma)
    return max(0, int(math.ceil(need)) - c)


@dataclass(frozen=True)
class CutoffConfig:
    V_exec: float
    xi: float = 0.0
    eta: int = 0
    max_group: int | None = None
    share: bool = False

    @property
    def V_comp(self) -> float:
        return self.V_exec + self.xi


def split_group(model: LIMMDP, members, states, V_comp):
    """Blocks of the visibility partition of a group, as group keys."""
    pos = {i: k for k, i in enumerate(members)}
    out = []
    for block in partition_of(model, members, states, V_comp):
        out.append((block, tuple(states[pos[i]] for i in block)))
    return out


def cutoff_successors(model: LIMMDP, s, partition: Partition, a, V_comp) -> dict:
    """Distribution over Cutoff states (s', P') from (s, P) under joint action a.

    Each block moves with its own factored kernel and is refined by the
    visibility partition of its members.
    """
    dist = {(tuple(s), ()): 1.0}
    for block in partition:
        sub = group_transition(model, block, [s[i] for i in block], [a[i] for i in block])
        nxt = {}
        for (base, blocks), p in dist.items():
            for s2, q in sub.items():
                new = list(base)
                for i, v in zip(block, s2):
                    new[i] = v
                refined = partition_of(model, block, s2, V_comp)
                key = (tuple(new), blocks + refined)
                nxt[key] = nxt.get(key, 0.0) + p * q
        dist = nxt
    return {(s2, canonical(blocks)): p for (s2, blocks), p in dist.items()}


def cutoff_reward(model: LIMMDP, s, partition: Partition, a) -> float:
    return sum(group_reward(model, b, [s[i] for i in b], [a[i] for i in b]) for b in partition)


class Identity:
    """Group keys are used as they are."""

    def canon(self, members, states):
        return (tuple(members), tuple(states)), tuple(range(len(members)))


class HomogeneousSharing:
    """Shares tables between groups of interchangeable agents.

    Members are relabelled 0..k-1 after sorting by local state, so groups that
    differ only by agent identity map to one key. With a `shift` function the
    states are also translated to a canonical origin (translation-invariant
    models only).
    """

    def __init__(self, shift=None):
        self.shift = shift

    def canon(self, members, states):
        states = tuple(states)
        if self.shift is not None:
            states = self.shift(states)
        order = sorted(range(len(members)), key=lambda k: states[k])
        rep = tuple(states[k] for k in order)
        return (tuple(range(len(members))), rep), tuple(order)


class CutoffSolution:
    """Values and greedy actions for every reachable group state and layer."""

    def __init__(self, model: LIMMDP, V_comp: float, H: int, gamma=None,
                 max_group=None, sharing=None, keep_layers: bool = True):
        self.model = model
        self.V_comp = float(V_comp)
        self.H = int(H)
        self.gamma = model.gamma if gamma is None else gamma
        self.max_group = max_group
        self.sharing = sharing or Identity()
        if isinstance(self.sharing, HomogeneousSharing) and not getattr(model, "homogeneous", False):
            raise ValueError("homogeneous sharing needs a model declared homogeneous")
        self.keep_layers = keep_layers
        self.keys: list = []
        self.index: dict = {}
        self.delegated: set = set()
        # compiled rows
        self.row_actions: list[tuple] = []
        self.row_reward: list[float] = []
        self.t_rows: list[int] = []
        self.t_cols: list[int] = []
        self.t_vals: list[float] = []
        self._pending: list[int] = []
        self._row_span: dict = {}
        self._solved_n = 0
        self.values = None   # array (H+2, N); row H+1 is zero
        self.policy = None   # array (H+1, N) of row offsets
        self.layers = None   # kept layer indices when not keeping all

    # keys
    def key_of(self, members, states):
        return self.sharing.canon(tuple(members), tuple(states))

    def _intern(self, key) -> int:
        k = self.index.get(key)
        if k is None:
            k = len(self.keys)
            if k >= budget():
                raise BudgetError(f"group-state enumeration exceeded budget {budget()}")
            self.index[key] = k
            self.keys.append(key)
            self._pending.append(k)
        return k

    def add_seed(self, members, states):
        key, _ = self.key_of(members, states)
        if self.max_group is not None and len(key[0]) > self.max_group:
            self.delegated.add(key)
            return None
        return self._intern(key)

    def _expand(self):
        model = self.model
        while self._pending:
            k = self._pending.pop()
            members, states = self.keys[k]
            self._compile_state(k, members, states)

    def _compile_state(self, k, members, states):
        model = self.model
        first = len(self.row_actions)
        for a in joint_actions(model, members, states):
            row = len(self.row_actions)
            self.row_actions.append(a)
            self.row_reward.append(group_reward(model, members, states, a))
            for s2, p in group_transition(model, members, states, a).items():
                if p == 0:
                    continue
                for block, sub in split_group(model, members, s2, self.V_comp):
                    key, _ = self.key_of(block, sub)
                    col = self._intern(key)
                    self.t_rows.append(row)
                    self.t_cols.append(col)
                    self.t_vals.append(p)
        self._row_span[k] = (first, len(self.row_actions))

    # solving
    def solve(self):
        self._expand()
        n = len(self.keys)
        spans = np.array([self._row_span[k] for k in range(n)], dtype=np.int64)
        order = np.argsort(spans[:, 0])
        starts = spans[order, 0]
        # rows are appended state by state, so spans are contiguous
        m = len(self.row_actions)
        T = sparse.csr_matrix((np.array(self.t_vals), (np.array(self.t_rows, dtype=np.int64),
                                                        np.array(self.t_cols, dtype=np.int64))),
                              shape=(m, n))
        r = np.array(self.row_reward)
        row_state = np.empty(m, dtype=np.int64)
        for k in range(n):
            a, b = spans[k]
            row_state[a:b] = k
        H = self.H
        keep_all = self.keep_layers and n * (H + 2) <= 4e7
        values = np.zeros((H + 2, n)) if keep_all else None
        policy = np.zeros((H + 1, n), dtype=np.int32) if keep_all else None
        kept_v, kept_p = {}, {}
        v_next = np.zeros(n)
        idx = np.arange(m)
        for h in range(H, -1, -1):
            q = r + self.gamma * (T @ v_next)
            vmax = np.maximum.reduceat(q, starts)
            vmax_state = np.empty(n)
            vmax_state[order] = vmax
            ok = q >= vmax_state[row_state] - (TIE_TOL + 1e-12 * np.abs(vmax_state[row_state]))
            cand = np.where(ok, idx, m)
            first = np.minimum.reduceat(cand, starts)
            best = np.empty(n, dtype=np.int64)
            best[order] = first
            # value is the q of the chosen (tie-broken) row
            v_cur = q[best]
            pol = (best - spans[:, 0]).astype(np.int32)
            if keep_all:
                values[h] = v_cur
                policy[h] = pol
            elif h <= 1:
                kept_v[h], kept_p[h] = v_cur.copy(), pol
            v_next = v_cur
        if keep_all:
            self.values, self.policy, self.layers = values, policy, None
        else:
            self.values = None
            self.policy = None
            self.layers = (kept_v, kept_p)
        self._solved_n = n
        self._spans = spans
        self._T = T
        return self

    def ensure(self, members, states) -> int:
        key, _ = self.key_of(members, states)
        k = self.index.get(key)
        if k is None or k >= self._solved_n:
            self.add_seed(members, states)
            self.solve()
            k = self.index.get(key)
            if k is None:
                raise CoverageError(key)
        return k

    # queries
    def _layer(self, h):
        if self.values is not None:
            return self.values[h], self.policy[h] if h <= self.H else None
        kept_v, kept_p = self.layers
        if h not in kept_v:
            raise CoverageError(f"layer {h} not kept")
        return kept_v[h], kept_p[h]

    def lookup(self, members, states, strict=False) -> int:
        key, _ = self.key_of(members, states)
        k = self.index.get(key)
        if k is None or k >= self._solved_n:
            if strict:
                raise CoverageError(key)
            k = self.ensure(members, states)
        return k

    def group_value(self, members, states, h: int = 0, strict=False) -> float:
        if h == self.H + 1:
            return 0.0
        k = self.lookup(members, states, strict)
        return float(self._layer(h)[0][k])

    def group_action(self, members, states, h: int = 0, strict=False) -> tuple:
        """Greedy joint action of the group, in the order of `members`."""
        members, states = tuple(members), tuple(states)
        key, order = self.key_of(members, states)
        k = self.lookup(members, states, strict)
        off = int(self._layer(h)[1][k])
        rep_action = self.row_actions[self._spans[k][0] + off]
        out = [None] * len(members)
        for pos, orig in enumerate(order):
            out[orig] = rep_action[pos]
        return tuple(out)

    def q_values(self, members, states, h: int = 0):
        """(joint action, q) pairs in lexicographic order, for diagnostics."""
        k = self.lookup(members, states)
        a, b = self._spans[k]
        v_next = self._layer(h + 1)[0] if h < self.H else np.zeros(len(self.keys))
        q = np.array(self.row_reward[a:b]) + self.gamma * (self._T[a:b] @ v_next)
        return list(zip(self.row_actions[a:b], q.tolist()))

    def value_of(self, s, partition: Partition, h: int = 0) -> float:
        return sum(self.group_value(b, [s[i] for i in b], h) for b in partition)

    def action_of(self, s, partition: Partition, h: int = 0) -> tuple:
        a = [None] * len(s)
        for b in partition:
            for i, ai in zip(b, self.group_action(b, [s[i] for i in b], h)):
                a[i] = ai
        return tuple(a)

    # persistence
    def header(self) -> dict:
        return {"model_hash": model_hash(self.model), "V_comp": self.V_comp, "H": self.H,
                "gamma": self.gamma, "tie_break_version": TIE_BREAK_VERSION}

    def records(self):
        """(key, h, value, action) records sorted by key then layer."""
        order = sorted(range(len(self.keys)), key=lambda k: repr(self.keys[k]))
        for k in order:
            for h in range(self.H + 1):
                v, pol = self._layer(h) if self.values is not None or h <= 1 else (None, None)
                if v is None:
                    continue
                a = self.row_actions[self._spans[k][0] + int(pol[k])]
                yield self.keys[k], h, float(v[k]), a

    def save(self, path: str):
        head = json.dumps(self.header()).encode()
        with _atomic(path, "wb") as fh:
            fh.write(b"LOCIMTBL")
            fh.write(struct.pack("<I", len(head)))
            fh.write(head)
            for key, h, v, a in self.records():
                blob = json.dumps([_plain(key), _plain(a)]).encode()
                fh.write(struct.pack("<IId", len(blob), h, v))
                fh.write(blob)

    def export_jsonl(self, path: str):
        with _atomic(path, "w") as fh:
            fh.write(json.dumps({"header": self.header()}) + "\n")
            for key, h, v, a in self.records():
                fh.write(json.dumps({"members": _plain(key[0]), "states": _plain(key[1]),
                                     "h": h, "value": v, "action": _plain(a)}) + "\n")


@contextlib.contextmanager
def _atomic(path: str, mode: str):
    d = os.path.dirname(os.path.abspath(path))
    fd, tmp = tempfile.mkstemp(dir=d, suffix=".tmp")
    try:
        with os.fdopen(fd, mode) as fh:
            yield fh
        os.replace(tmp, path)
    except BaseException:
        if os.path.exists(tmp):
            os.unlink(tmp)
        raise


def load_table(path: str) -> tuple[dict, list]:
    """Read a binary table file back as (header, records)."""
    out = []
    with open(path, "rb") as fh:
        if fh.read(8) != b"LOCIMTBL":
            raise ValueError("not a table file")
        (n,) = struct.unpack("<I", fh.read(4))
        header = json.loads(fh.read(n))
        while True:
            raw = fh.read(16)
            if not raw:
                break
            size, h, v = struct.unpack("<IId", raw)
            key, a = json.loads(fh.read(size))
            out.append((key, h, v, a))
    return header, out


def _plain(x):
    if isinstance(x, (tuple, list)):
        return [_plain(v) for v in x]
    if isinstance(x, (np.integer,)):
        return int(x)
    return x


def model_hash(model: LIMMDP) -> str:
    h = hashlib.sha256()
    h.update(repr((model.name, model.n, model.R, model.V, model.gamma, model.generalized)).encode())
    for i in range(model.n):
        for si in sorted(model.local_states(i), key=repr):
            h.update(repr((i, si, model.actions(i, si))).encode())
    return h.hexdigest()[:16]


def solve_cutoff(model: LIMMDP, config: CutoffConfig, seeds=None, gamma=None,
                 sharing=None, keep_layers=True) -> CutoffSolution:
    """Solve the Cutoff MDP with horizon c + eta from the given seed groups.

    Seeds default to the visibility blocks of the model's start state.
    """
    c = horizon_constant(config.V_exec, model.R)
    H = c + config.eta
    sol = CutoffSolution(model, config.V_comp, H, gamma, config.max_group,
                         sharing or (HomogeneousSharing() if config.share else None), keep_layers)
    if seeds is None:
        s0 = model.start
        seeds = split_group(model, tuple(range(model.n)), s0, config.V_comp)
    for members, states in seeds:
        sol.add_seed(members, states)
    return sol.solve()


def horizon(model: LIMMDP, config: CutoffConfig) -> int:
    return horizon_constant(config.V_exec, model.R) + config.eta


def infinite_corner_eta(model: LIMMDP, V_exec: float) -> int:
    return tail_eta(model.gamma, horizon_constant(V_exec, model.R))
