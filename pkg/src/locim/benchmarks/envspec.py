"""JSON environment specs and their compilation into tabular models.

Spec layout::

    {"name": str,
     "metric": {"variant", "dims" | "nodes"+"edges", "blocked"?, "tails"?},
     "constants": {"R", "V", "gamma"},
     "agents": [{"pos", "internal0", "internal_machine"}],
     "machines": {name: {"internal": [values]}},
     "kernels": [rule], "forced_moves": [rule], "absorbing": [rule],
     "rewards": [rule],
     "generalized"?: bool, "homogeneous"?: bool}

Positions are node labels (lists for grid coordinates). Kernel rules build a
per-machine table state -> [(action, [(next state, prob)])]; later rules
override earlier ones at the states they touch.

Kernel rule kinds
  moves        grid moves {action: delta | null}; missing targets stay put
  graph_moves  "stay" plus one action per graph neighbour
  table        explicit entries [pos, internal, [[action, [[pos, internal, p]]]]]
Forced-move rule kinds
  restrict     keep only the listed actions (in that order) at matching states
Absorbing rule kinds
  exit_tail    at `cell` the only action walks onto a named tail, switching
               the internal state to `internal_to`; tail nodes keep walking
  stay         matching states only stay put
Reward rule kinds
  self         single-agent reward at matching (cell, internal, action)
  move_away    single-agent reward when the move increases distance to `target`
  pair         ordered-pair reward within `max_dist`, optional internal filters
  pair_values  ordered-pair reward whose value depends on agent i's internal state
"""
from __future__ import annotations

import json
from dataclasses import dataclass

from ..geometry import MetricSpace, _hashable
from ..mmdp import PairRule, TabularModel, blocked_moves_rule


class SpecError(ValueError):
    pass


def _h(x):
    return _hashable(x)


def _match(rule, key, value):
    allowed = rule.get(key)
    if allowed is None:
        return True
    return value in {_h(v) for v in allowed}


def _agents(rule, n):
    sel = rule.get("agents")
    return list(range(n)) if sel is None else list(sel)


def _machines_of(spec, rule):
    if "machine" in rule:
        return [rule["machine"]]
    return list(spec["machines"])


@dataclass
class PairValues:
    """rbar[i][j] = values[internal of i] when within max_dist."""
    values: dict
    max_dist: float
    agents_i: frozenset | None = None
    agents_j: frozenset | None = None
    internal_j: frozenset | None = None

    def __call__(self, i, j, si, sj, d):
        if d > self.max_dist:
            return 0.0
        if self.agents_i is not None and i not in self.agents_i:
            return 0.0
        if self.agents_j is not None and j not in self.agents_j:
            return 0.0
        if self.internal_j is not None and sj[1] not in self.internal_j:
            return 0.0
        return self.values.get(si[1], 0.0)


def _set(values):
    return None if values is None else frozenset(_h(v) for v in values)


def build_model(spec: dict) -> TabularModel:
    space = MetricSpace.from_json(spec["metric"])
    base_nodes = [k for k in range(len(space)) if k not in space.tail_of]
    machines = spec["machines"]
    internals = {name: [_h(v) for v in m["internal"]] for name, m in machines.items()}
    tables = {name: {} for name in machines}

    def cells_of(rule):
        if rule.get("cells") is None:
            return base_nodes
        return [space.node(_h(c)) for c in rule["cells"]]

    for rule in spec.get("kernels", []):
        kind = rule["kind"]
        for name in _machines_of(spec, rule):
            table = tables[name]
            ints = [_h(v) for v in rule["internal"]] if "internal" in rule else internals[name]
            if kind == "moves":
                for x in cells_of(rule):
                    for y in ints:
                        entries = []
                        for act, delta in rule["moves"].items():
                            tgt = x if delta is None else space.step(x, delta)
                            if tgt is None:
                                tgt = x
                            entries.append((act, (((tgt, y), 1.0),)))
                        table[(x, y)] = tuple(entries)
            elif kind == "graph_moves":
                for x in cells_of(rule):
                    for y in ints:
                        entries = [("stay", (((x, y), 1.0),))] if rule.get("stay", True) else []
                        nbrs = sorted(space.neighbors(x), key=lambda v: repr(space.labels[v]))
                        for v in nbrs:
                            entries.append((f"to:{_label(space.labels[v])}", (((v, y), 1.0),)))
                        table[(x, y)] = tuple(entries)
            elif kind == "table":
                for pos, y, acts in rule["entries"]:
                    x = space.node(_h(pos))
                    entries = []
                    for act, outs in acts:
                        entries.append((act, tuple(((space.node(_h(p2)), _h(y2)), float(pr))
                                                   for p2, y2, pr in outs)))
                    table[(x, _h(y))] = tuple(entries)
            else:
                raise SpecError(f"unknown kernel rule {kind!r}")

    for rule in spec.get("forced_moves", []):
        if rule["kind"] != "restrict":
            raise SpecError(f"unknown forced-move rule {rule['kind']!r}")
        keep = list(rule["actions"])
        for name in _machines_of(spec, rule):
            table = tables[name]
            cells = set(cells_of(rule))
            for (x, y), entries in list(table.items()):
                if x in cells and _match(rule, "internal", y):
                    by = dict(entries)
                    chosen = tuple((a, by[a]) for a in keep if a in by)
                    if chosen:
                        table[(x, y)] = chosen

    for rule in spec.get("absorbing", []):
        kind = rule["kind"]
        for name in _machines_of(spec, rule):
            table = tables[name]
            if kind == "exit_tail":
                x = space.node(_h(rule["cell"]))
                y_to = _h(rule["internal_to"])
                tail = space.tails[rule["tail"]]
                for y in internals[name]:
                    if y != y_to and _match(rule, "internal_from", y):
                        table[(x, y)] = (("exit", (((tail[0], y_to), 1.0),)),)
                for k, node in enumerate(tail):
                    nxt = tail[min(k + 1, len(tail) - 1)]
                    table[(node, y_to)] = (("exit", (((nxt, y_to), 1.0),)),)
            elif kind == "stay":
                for x in cells_of(rule):
                    for y in internals[name]:
                        if _match(rule, "internal", y) and (x, y) in table:
                            table[(x, y)] = (("stay", (((x, y), 1.0),)),)
            else:
                raise SpecError(f"unknown absorbing rule {kind!r}")

    n = len(spec["agents"])
    agent_tables = [tables[a["internal_machine"]] for a in spec["agents"]]
    start = tuple((space.node(_h(a["pos"])), _h(a["internal0"])) for a in spec["agents"])
    for i, (si, table) in enumerate(zip(start, agent_tables)):
        if si not in table:
            raise SpecError(f"agent {i} starts in a state without actions: {si}")

    self_rewards = [{} for _ in range(n)]
    pair_rules = []
    for rule in spec.get("rewards", []):
        kind = rule["kind"]
        if kind in ("self", "move_away"):
            for i in _agents(rule, n):
                table = agent_tables[i]
                cells = None if rule.get("cells") is None else set(cells_of(rule))
                target = space.node(_h(rule["target"])) if kind == "move_away" else None
                for (x, y), entries in table.items():
                    if cells is not None and x not in cells:
                        continue
                    if not _match(rule, "internal", y):
                        continue
                    for act, outs in entries:
                        if not _match(rule, "actions", act):
                            continue
                        if kind == "move_away":
                            d0 = space.distance(x, target)
                            if not all(space.distance(s2[0], target) > d0 for s2, _ in outs):
                                continue
                        key = ((x, y), act)
                        self_rewards[i][key] = self_rewards[i].get(key, 0.0) + float(rule["value"])
        elif kind == "pair":
            pair_rules.append(PairRule(
                value=float(rule["value"]), max_dist=float(rule["max_dist"]),
                agents_i=_set(rule.get("agents_i")), agents_j=_set(rule.get("agents_j")),
                internal_i=_set(rule.get("internal_i")), internal_j=_set(rule.get("internal_j")),
                cells=None if rule.get("cells") is None else frozenset(cells_of(rule)),
                same_internal=bool(rule.get("same_internal", False))))
        elif kind == "pair_values":
            pair_rules.append(PairValues(
                values={_h(y): float(v) for y, v in rule["values"]},
                max_dist=float(rule["max_dist"]),
                agents_i=_set(rule.get("agents_i")), agents_j=_set(rule.get("agents_j")),
                internal_j=_set(rule.get("internal_j"))))
        else:
            raise SpecError(f"unknown reward rule {kind!r}")

    const = spec["constants"]
    generalized = bool(spec.get("generalized", False))
    model = TabularModel(space=space, tables=agent_tables, start=start, R=float(const["R"]),
                         V=float(const["V"]), gamma=float(const["gamma"]),
                         self_rewards=self_rewards, pair_rules=pair_rules,
                         generalized=generalized, homogeneous=bool(spec.get("homogeneous", False)),
                         name=spec["name"],
                         group_rule=blocked_moves_rule if spec.get("group_kernel") == "blocked" else None)
    model.spec = spec
    return model


def _label(lab):
    if isinstance(lab, tuple):
        return ",".join(str(v) for v in lab)
    return str(lab)


def load_spec(path: str) -> dict:
    with open(path) as fh:
        return json.load(fh)


def dump_spec(spec: dict, path: str):
    with open(path, "w") as fh:
        json.dump(spec, fh, indent=1)
