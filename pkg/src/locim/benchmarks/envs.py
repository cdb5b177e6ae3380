"""Benchmark environments as JSON specs.

Each builder returns a spec dict; `make(name)` compiles it. Layouts whose
exact geometry is only shown pictorially are parametrised, and the defaults
are the parameters found by the reconstruction search (see reconstruct.py).
"""
from __future__ import annotations

LINE_MOVES = {"stay": None, "left": [-1], "right": [1]}


def _line_metric(n, tails=()):
    return {"variant": "grid-manhattan", "dims": [n], "tails": list(tails)}


def penalty_jittering(gamma=0.9, cells=5):
    """Line of `cells` squares: +200 on the leftmost, +50 on the rightmost."""
    return {
        "name": "penalty_jittering",
        "metric": _line_metric(cells),
        "constants": {"R": 0, "V": 1, "gamma": gamma},
        "machines": {"walker": {"internal": [0]}},
        "agents": [{"pos": [0], "internal0": 0, "internal_machine": "walker"},
                   {"pos": [2], "internal0": 0, "internal_machine": "walker"}],
        "kernels": [{"kind": "moves", "moves": LINE_MOVES}],
        "rewards": [{"kind": "self", "cells": [[0]], "value": 200},
                    {"kind": "self", "cells": [[cells - 1]], "value": 50},
                    {"kind": "pair", "max_dist": 0, "value": -500}],
        "homogeneous": True,
    }


def long_journey(gamma=0.9, squares=10):
    """Left agent fixed at 0, traveller at 1; square x sits at position x + 1.

    Traveller internal state is [x, phase]: [0, 0] before choosing, phase 1
    heading out, 2 returning, 3 finished.
    """
    last = squares + 1
    entries = []
    entries.append([[1], [0, 0], [[f"pick{x}", [[[2], [x, 1], 1.0]]] for x in range(1, squares + 1)]])
    for x in range(1, squares + 1):
        goal = x + 1
        for p in range(2, goal):
            entries.append([[p], [x, 1], [["right", [[[p + 1], [x, 1], 1.0]]]]])
        entries.append([[goal], [x, 1], [["settle", [[[goal], [x, 3], 1.0]]],
                                         ["return", [[[goal - 1], [x, 2], 1.0]]]]])
        for p in range(2, goal):
            entries.append([[p], [x, 2], [["left", [[[p - 1], [x, 2], 1.0]]]]])
        entries.append([[1], [x, 2], [["claim", [[[1], [x, 3], 1.0]]]]])
        for p in range(1, last + 1):
            entries.append([[p], [x, 3], [["stay", [[[p], [x, 3], 1.0]]]]])
    internal = [[0, 0]] + [[x, ph] for x in range(1, squares + 1) for ph in (1, 2, 3)]
    rewards = []
    for x in range(1, squares + 1):
        rewards.append({"kind": "self", "agents": [1], "internal": [[x, 1]], "actions": ["settle"],
                        "value": (squares - x + 1) * 10 / gamma ** x})
    rewards.append({"kind": "pair_values", "agents_i": [1], "agents_j": [0], "max_dist": 1,
                    "values": [[[x, 2], (100 + 10 * x) / gamma ** (2 * x)]
                               for x in range(1, squares + 1)]})
    return {
        "name": "long_journey",
        "metric": _line_metric(last + 1),
        "constants": {"R": 1, "V": 5, "gamma": gamma},
        "machines": {"anchor": {"internal": [0]}, "traveller": {"internal": internal}},
        "agents": [{"pos": [0], "internal0": 0, "internal_machine": "anchor"},
                   {"pos": [1], "internal0": [0, 0], "internal_machine": "traveller"}],
        "kernels": [{"kind": "table", "machine": "anchor", "entries": [[[0], 0, [["stay", [[[0], 0, 1.0]]]]]]},
                    {"kind": "table", "machine": "traveller", "entries": entries}],
        "rewards": rewards,
    }


def aisle_walk(gamma=0.9, columns=4, rows=6, crossing=(0, 2), links=((1, 0), (2, 3)),
               green=((0, 1), (3, 1)), starts=((1, 0), (2, 0))):
    """Two walkers forced up a grid of columns.

    At crossing rows a walker may also step sideways along the listed column
    links (both directions); the top row is absorbing.
    """
    top = rows - 1
    entries = []
    link_set = {tuple(l) for l in links} | {(b, a) for a, b in links}
    for y in range(rows):
        for x in range(columns):
            if y == top:
                entries.append([[x, y], 0, [["stay", [[[x, y], 0, 1.0]]]]])
                continue
            acts = [["up", [[[x, y + 1], 0, 1.0]]]]
            if y in crossing:
                if (x, x - 1) in link_set:
                    acts.append(["left", [[[x - 1, y], 0, 1.0]]])
                if (x, x + 1) in link_set:
                    acts.append(["right", [[[x + 1, y], 0, 1.0]]])
            entries.append([[x, y], 0, acts])
    return {
        "name": "aisle_walk",
        "metric": {"variant": "grid-manhattan", "dims": [columns, rows]},
        "constants": {"R": 1, "V": 2, "gamma": gamma},
        "machines": {"walker": {"internal": [0]}},
        "agents": [{"pos": list(p), "internal0": 0, "internal_machine": "walker"} for p in starts],
        "kernels": [{"kind": "table", "entries": entries}],
        "rewards": [{"kind": "self", "cells": [list(g) for g in green], "value": 100},
                    {"kind": "pair", "max_dist": 1, "value": 20}],
        "homogeneous": True,
    }


def bullseye(gamma=0.9, V=25, left=24, right=25, margin=5, tail=None):
    """Line with the bullseye at its centre; reaching it sends an agent down an exit tail."""
    lo = -(max(left, right) + margin)
    n = 2 * (max(left, right) + margin) + 1
    centre = [-lo]
    tail = tail if tail is not None else 40
    return {
        "name": "bullseye",
        "metric": _line_metric(n, [{"name": "exit", "anchor": centre, "length": tail}]),
        "constants": {"R": 20, "V": V, "gamma": gamma},
        "machines": {"walker": {"internal": [0, 1]}},
        "agents": [{"pos": [-lo - left], "internal0": 0, "internal_machine": "walker"},
                   {"pos": [-lo + right], "internal0": 0, "internal_machine": "walker"}],
        "kernels": [{"kind": "moves", "moves": LINE_MOVES, "internal": [0]}],
        "absorbing": [{"kind": "exit_tail", "cell": centre, "tail": "exit",
                       "internal_from": [0], "internal_to": 1}],
        "rewards": [{"kind": "self", "cells": [centre], "internal": [0], "value": 100},
                    {"kind": "move_away", "target": centre, "internal": [0], "actions": ["left", "right"],
                     "value": -2},
                    {"kind": "pair", "max_dist": 20, "value": -500,
                     "internal_i": [0], "internal_j": [0]}],
        "homogeneous": True,
    }


def modified_bullseye(gamma=0.9, **kw):
    spec = bullseye(gamma, V=20.5, **kw)
    spec["name"] = "modified_bullseye"
    return spec


def highway(gamma=0.98, width=5, rows=14, blocker=None, notch=(1, 3)):
    """Graph-metric grid with a teleport from red (bottom left) to green (top left).

    Column 0 is walled off except red, green and a short notch next to the
    blocker's row; the long route runs up column 1. The blocker sits on the
    right edge at graph distance 6 from red.
    """
    top = rows - 1
    if blocker is None:
        blocker = (width - 1, 7 - width)
    red, green = (0, 0), (0, top)
    nodes = [red, green] + [(0, y) for y in range(notch[0], notch[1] + 1)]
    nodes += [(x, y) for y in range(rows) for x in range(1, width)]
    node_set = set(nodes)
    edges = []
    for (x, y) in nodes:
        for dx, dy in ((1, 0), (0, 1)):
            nb = (x + dx, y + dy)
            if nb in node_set:
                edges.append(((x, y), nb))
    # red only opens to the right; the teleport links red and green
    edges = [e for e in edges if not (red in e and (0, 1) in e)]
    edges.append((red, green))
    walker = []
    for (x, y) in nodes:
        if (x, y) == green:
            for k in (0, 1):
                walker.append([list(green), k, [["collect", [[list(green), 2, 1.0]]]]])
            walker.append([list(green), 2, [["stay", [[list(green), 2, 1.0]]]]])
            continue
        nbrs = sorted({b if a == (x, y) else a for a, b in edges if (x, y) in (a, b)})
        acts = [["stay", [[[x, y], 0, 1.0]]]]
        for nb in nbrs:
            k = 1 if (x, y) == red and nb == green else 0
            acts.append([f"to:{nb[0]},{nb[1]}", [[list(nb), k, 1.0]]])
        walker.append([[x, y], 0, acts])
    return {
        "name": "highway" if width >= 5 else "modified_highway",
        "metric": {"variant": "graph", "nodes": [list(v) for v in nodes],
                   "edges": [[list(a), list(b)] for a, b in edges]},
        "constants": {"R": 3, "V": 5, "gamma": gamma},
        "machines": {"walker": {"internal": [0, 1, 2]}, "blocker": {"internal": [0]}},
        "agents": [{"pos": list(red), "internal0": 0, "internal_machine": "walker"},
                   {"pos": list(blocker), "internal0": 0, "internal_machine": "blocker"}],
        "kernels": [{"kind": "table", "machine": "walker", "entries": walker},
                    {"kind": "table", "machine": "blocker",
                     "entries": [[list(blocker), 0, [["stay", [[list(blocker), 0, 1.0]]]]]]}],
        "rewards": [{"kind": "self", "agents": [0], "cells": [list(green)], "internal": [0],
                     "value": 100},
                    {"kind": "self", "agents": [0], "cells": [list(green)], "internal": [1],
                     "value": 75},
                    {"kind": "pair", "max_dist": 3, "value": -500}],
    }


def modified_highway(gamma=0.98, **kw):
    return highway(gamma, width=4, **kw)


def stochastic_transitions(gamma=0.9, p_two=0.51):
    """Five-cell line, centre 2. Both agents step outward, then back to the centre.

    The left agent's outward step draws its internal state (2 with p_two,
    else 3); the right agent picks 2 or 3 at the rightmost cell.
    """
    left = [[[1], 1, [["out", [[[0], 2, p_two], [[0], 3, 1 - p_two]]]]]]
    right = [[[3], 1, [["out", [[[4], 1, 1.0]]]]],
             [[4], 1, [["pick2", [[[3], 2, 1.0]]], ["pick3", [[[3], 3, 1.0]]]]]]
    for y in (2, 3):
        left += [[[0], y, [["in", [[[1], y, 1.0]]]]], [[1], y, [["in", [[[2], y, 1.0]]]]]]
        right += [[[3], y, [["in", [[[2], y, 1.0]]]]]]
        for table in (left, right):
            table.append([[2], y, [["stay", [[[2], y, 1.0]]]]])
    return {
        "name": "stochastic_transitions",
        "metric": _line_metric(5),
        "constants": {"R": 0, "V": 3, "gamma": gamma},
        "machines": {"left": {"internal": [1, 2, 3]}, "right": {"internal": [1, 2, 3]}},
        "agents": [{"pos": [1], "internal0": 1, "internal_machine": "left"},
                   {"pos": [3], "internal0": 1, "internal_machine": "right"}],
        "kernels": [{"kind": "table", "machine": "left", "entries": left},
                    {"kind": "table", "machine": "right", "entries": right}],
        "rewards": [{"kind": "self", "cells": [[2]], "internal": [3], "value": 2},
                    {"kind": "pair", "max_dist": 0, "cells": [[2]], "same_internal": True,
                     "value": 10}],
    }


def unanticipated_oov(gamma=0.9, gap=4, left_offset=-2, wait=1):
    """Line with a +400 square and, `gap` cells to its right, a +500 square.

    Two walkers start astride the +500 square and are pushed one step apart;
    each then picks a square once and walks to it. A third agent
    `left_offset` cells from the +400 square waits `wait` steps and then
    walks onto it.
    """
    g1 = max(1, -left_offset) + 1
    g2 = g1 + gap
    n = g2 + 4
    l0 = g1 + left_offset
    step = -1 if left_offset > 0 else 1
    lefty = [[[l0], k, [["wait", [[[l0], k + 1, 1.0]]]]] for k in range(wait)]
    for p in range(min(l0, g1), max(l0, g1) + 1):
        nxt = p if p == g1 else p + step
        lefty.append([[p], wait, [["walk", [[[nxt], wait, 1.0]]]]])
    # walker internal: 1 pushed apart, 2 choosing, 3 bound for +400, 4 bound for +500
    walker = [[[g2 - 1], 1, [["out", [[[g2 - 2], 2, 1.0]]]]],
              [[g2 + 1], 1, [["out", [[[g2 + 2], 2, 1.0]]]]]]
    for x in range(n):
        toward = {y: x + (t > x) - (t < x) for t, y in ((g1, 3), (g2, 4))}
        walker.append([[x], 2, [["go400", [[[toward[3]], 3, 1.0]]],
                                ["go500", [[[toward[4]], 4, 1.0]]]]])
        for y in (3, 4):
            walker.append([[x], y, [["walk", [[[toward[y]], y, 1.0]]]]])
    return {
        "name": "unanticipated_oov",
        "metric": _line_metric(n),
        "constants": {"R": 0, "V": 3, "gamma": gamma},
        "machines": {"lefty": {"internal": list(range(wait + 1))},
                     "walker": {"internal": [1, 2, 3, 4]}},
        "agents": [{"pos": [l0], "internal0": 0, "internal_machine": "lefty"},
                   {"pos": [g2 - 1], "internal0": 1, "internal_machine": "walker"},
                   {"pos": [g2 + 1], "internal0": 1, "internal_machine": "walker"}],
        "kernels": [{"kind": "table", "machine": "lefty", "entries": lefty},
                    {"kind": "table", "machine": "walker", "entries": walker}],
        "rewards": [{"kind": "self", "cells": [[g1]], "value": 400},
                    {"kind": "self", "cells": [[g2]], "value": 500},
                    {"kind": "pair", "max_dist": 0, "value": -100}],
    }


def oov_coordination(gamma=0.9, climb=4, bonus_run=14):
    """Two walkers split, pick an internal state, climb and meet at the top centre.

    Walker internal state is [k, phase]: k is 0 before picking and then 1 or
    2; phase 0 climbing, 1 bound for the centre, 2 bound for a +1 square.
    A stationary third agent (internal 3) sits on the right walker's column.
    """
    cx = bonus_run + 2
    top = climb
    width = 2 * cx + 1
    centre, third = (cx, top), (cx + 2, climb - 1)
    walker = []
    for side in (-1, 1):
        walker.append([[cx + side, 0], [0, 0], [["out", [[[cx + 2 * side, 0], [0, 0], 1.0]]]]])
        x = cx + 2 * side
        walker.append([[x, 0], [0, 0], [[f"pick{k}", [[[x, 1], [k, 0], 1.0]]] for k in (1, 2)]])
        for k in (1, 2):
            for y in range(1, top):
                walker.append([[x, y], [k, 0], [["up", [[[x, y + 1], [k, 0], 1.0]]]]])
            walker.append([[x, top], [k, 0], [["centre", [[[x - side, top], [k, 1], 1.0]]],
                                             ["bonus", [[[x + side, top], [k, 2], 1.0]]]]])
            for d in range(1, 2):
                walker.append([[cx + side * d, top], [k, 1], [["walk", [[[cx, top], [k, 1], 1.0]]]]])
            walker.append([list(centre), [k, 1], [["stay", [[list(centre), [k, 1], 1.0]]]]])
            end = cx + side * (2 + bonus_run)
            for xx in range(3, 2 + bonus_run):
                p = cx + side * xx
                walker.append([[p, top], [k, 2], [["walk", [[[p + side, top], [k, 2], 1.0]]]]])
            walker.append([[end, top], [k, 2], [["stay", [[[end, top], [k, 2], 1.0]]]]])
    bonus = [[cx - 2 - bonus_run, top], [cx + 2 + bonus_run, top]]
    climbing1 = [[1, 0]]
    return {
        "name": "oov_coordination",
        "metric": {"variant": "grid-manhattan", "dims": [width, top + 1]},
        "constants": {"R": 0, "V": 3, "gamma": gamma},
        "machines": {"walker": {"internal": [[0, 0]] + [[k, p] for k in (1, 2) for p in (0, 1, 2)]},
                     "stationary": {"internal": [3]}},
        "agents": [{"pos": [cx - 1, 0], "internal0": [0, 0], "internal_machine": "walker"},
                   {"pos": [cx + 1, 0], "internal0": [0, 0], "internal_machine": "walker"},
                   {"pos": list(third), "internal0": 3, "internal_machine": "stationary"}],
        "kernels": [{"kind": "table", "machine": "walker", "entries": walker},
                    {"kind": "table", "machine": "stationary",
                     "entries": [[list(third), 3, [["stay", [[list(third), 3, 1.0]]]]]]}],
        "rewards": [{"kind": "self", "agents": [0, 1], "cells": bonus, "value": 1},
                    {"kind": "pair", "max_dist": 0, "cells": [list(centre)], "value": 50,
                     "internal_i": [[1, 1]], "internal_j": [[1, 1]]},
                    {"kind": "pair", "max_dist": 0, "cells": [list(centre)], "value": 10,
                     "internal_i": [[2, 1]], "internal_j": [[2, 1]]},
                    {"kind": "pair", "max_dist": 0, "value": -500,
                     "internal_i": climbing1, "internal_j": [3]},
                    {"kind": "pair", "max_dist": 0, "value": -500,
                     "internal_i": [3], "internal_j": climbing1}],
    }
