"""Metric spaces over agent positions and proximity partitions.

Positions are integer node ids. A space keeps a human label per node
(grid coordinates, graph node names, or exit-tail markers) for IO.
"""
from __future__ import annotations

from collections import deque
from typing import Callable, Hashable, Iterable, Sequence

import numpy as np

Partition = tuple  # tuple of sorted tuples of agent indices, ordered by first member

VARIANTS = ("grid-manhattan", "grid-chebyshev", "graph")
_MATRIX_LIMIT = 3000


class MetricSpace:
    """Finite metric space with optional exit tails.

    A tail is a path of nodes glued to an anchor node. The distance from any
    node x to the k-th tail node is d(x, anchor) + k, which keeps the triangle
    inequality and lets an agent walk away from everything at unit speed.
    """

    def __init__(self, variant: str, labels: Sequence[Hashable], coords=None,
                 adjacency=None):
        if variant not in VARIANTS:
            raise ValueError(f"unknown metric variant {variant!r}")
        self.variant = variant
        self.labels = list(labels)
        self.index = {lab: k for k, lab in enumerate(self.labels)}
        if len(self.index) != len(self.labels):
            raise ValueError("duplicate node labels")
        self.coords = None if coords is None else np.asarray(coords, dtype=np.int64)
        self.adjacency = adjacency
        # tail bookkeeping: node id -> (anchor id, step)
        self.tail_of: dict[int, tuple[int, int]] = {}
        self.tails: dict[str, list[int]] = {}
        self._base_n = len(self.labels)
        self._matrix = None
        self._bfs_rows: dict[int, np.ndarray] = {}

    # construction helpers
    @classmethod
    def grid(cls, dims: Sequence[int], metric: str = "manhattan", blocked: Iterable = ()):
        blocked = {tuple(b) for b in blocked}
        if len(dims) == 1:
            cells = [(x,) for x in range(dims[0]) if (x,) not in blocked]
        else:
            cells = [(x, y) for y in range(dims[1]) for x in range(dims[0])
                     if (x, y) not in blocked]
        space = cls(f"grid-{metric}", cells, coords=cells)
        space.dims = tuple(dims)
        return space

    @classmethod
    def line(cls, n: int):
        return cls.grid((n,))

    @classmethod
    def graph(cls, nodes: Sequence[Hashable], edges: Iterable[tuple]):
        space = cls("graph", nodes)
        adj = [[] for _ in nodes]
        for a, b in edges:
            ia, ib = space.index[a], space.index[b]
            if ib not in adj[ia]:
                adj[ia].append(ib)
                adj[ib].append(ia)
        space.adjacency = adj
        return space

    @classmethod
    def ring(cls, n: int):
        return cls.graph(list(range(n)), [(k, (k + 1) % n) for k in range(n)])

    def add_tail(self, name: str, anchor: Hashable, length: int) -> list[int]:
        a = self.index[anchor]
        ids = []
        for k in range(1, length + 1):
            lab = ("tail", name, k)
            self.index[lab] = len(self.labels)
            self.tail_of[len(self.labels)] = (a, k)
            ids.append(len(self.labels))
            self.labels.append(lab)
        self.tails[name] = ids
        self._matrix = None
        return ids

    # queries
    def __len__(self):
        return len(self.labels)

    def node(self, label) -> int:
        return self.index[label]

    def step(self, node: int, delta: Sequence[int]):
        """Grid neighbour of `node` shifted by `delta`, or None if absent."""
        if node >= self._base_n or self.coords is None:
            return None
        c = tuple(int(v) for v in self.coords[node])
        target = tuple(a + b for a, b in zip(c, delta))
        return self.index.get(target)

    def neighbors(self, node: int) -> list[int]:
        if self.variant == "graph":
            return list(self.adjacency[node]) if node < self._base_n else []
        deltas = [(1,), (-1,)] if self.coords.shape[1] == 1 else \
            [(1, 0), (-1, 0), (0, 1), (0, -1)]
        out = [self.step(node, d) for d in deltas]
        return [o for o in out if o is not None]

    def _base_distance(self, a: int, b: int) -> float:
        if self.variant == "graph":
            row = self._bfs_rows.get(a)
            if row is None:
                row = self._bfs(a)
                self._bfs_rows[a] = row
            return float(row[b])
        d = np.abs(self.coords[a] - self.coords[b])
        if self.variant == "grid-manhattan":
            return float(d.sum())
        return float(d.max())

    def _bfs(self, src: int) -> np.ndarray:
        dist = np.full(self._base_n, np.inf)
        dist[src] = 0
        queue = deque([src])
        while queue:
            u = queue.popleft()
            for v in self.adjacency[u]:
                if dist[v] == np.inf:
                    dist[v] = dist[u] + 1
                    queue.append(v)
        return dist

    def _raw_distance(self, a: int, b: int) -> float:
        if a == b:
            return 0.0
        ta, tb = self.tail_of.get(a), self.tail_of.get(b)
        if ta is None and tb is None:
            return self._base_distance(a, b)
        if ta is not None and tb is not None:
            # same tail: walk along it
            if ta[0] == tb[0] and self.labels[a][1] == self.labels[b][1]:
                return float(abs(ta[1] - tb[1]))
            return self._base_distance(ta[0], tb[0]) + ta[1] + tb[1]
        if ta is not None:
            return self._base_distance(ta[0], b) + ta[1]
        return self._base_distance(a, tb[0]) + tb[1]

    def matrix(self) -> np.ndarray:
        if self._matrix is None:
            n = len(self.labels)
            m = np.zeros((n, n))
            for a in range(n):
                for b in range(a + 1, n):
                    m[a, b] = m[b, a] = self._raw_distance(a, b)
            self._matrix = m
        return self._matrix

    def distance(self, a: int, b: int) -> float:
        if len(self.labels) <= _MATRIX_LIMIT:
            return self.matrix()[a, b]
        return self._raw_distance(a, b)

    def diameter(self) -> float:
        if len(self.labels) <= _MATRIX_LIMIT:
            m = self.matrix()
            return float(m[np.isfinite(m)].max())
        raise ValueError("diameter only available for small spaces")

    def to_json(self) -> dict:
        out = {"variant": self.variant}
        if self.variant == "graph":
            out["nodes"] = [_jsonable(lab) for lab in self.labels[:self._base_n]]
            edges = []
            for u, nbrs in enumerate(self.adjacency):
                edges += [[_jsonable(self.labels[u]), _jsonable(self.labels[v])]
                          for v in nbrs if v > u]
            out["edges"] = edges
        else:
            out["dims"] = list(self.dims)
            present = {tuple(c) for c in self.coords.tolist()}
            full = MetricSpace.grid(self.dims)
            out["blocked"] = [list(c) for c in full.labels if tuple(c) not in present]
        tails = []
        for name, ids in self.tails.items():
            anchor = self.tail_of[ids[0]][0]
            tails.append({"name": name, "anchor": _jsonable(self.labels[anchor]),
                          "length": len(ids)})
        if tails:
            out["tails"] = tails
        return out

    @classmethod
    def from_json(cls, spec: dict) -> "MetricSpace":
        variant = spec["variant"]
        if variant == "graph":
            nodes = [_hashable(n) for n in spec["nodes"]]
            space = cls.graph(nodes, [(_hashable(a), _hashable(b)) for a, b in spec["edges"]])
        else:
            space = cls.grid(spec["dims"], variant.split("-")[1], spec.get("blocked", ()))
        for tail in spec.get("tails", ()):
            space.add_tail(tail["name"], _hashable(tail["anchor"]), tail["length"])
        return space


def _jsonable(x):
    if isinstance(x, tuple):
        return [_jsonable(v) for v in x]
    return x


def _hashable(x):
    if isinstance(x, list):
        return tuple(_hashable(v) for v in x)
    return x


# partitions

def canonical(blocks: Iterable[Iterable[int]]) -> Partition:
    out = [tuple(sorted(b)) for b in blocks]
    out = [b for b in out if b]
    out.sort()
    return tuple(out)


def proximity_partition(members: Sequence[int], positions: Sequence[int],
                        dist: Callable[[int, int], float], K: float) -> Partition:
    """Blocks of the transitive closure of the relation d <= K (union-find)."""
    n = len(members)
    if n == 1:
        return ((members[0],),)
    if n == 2:
        a, b = members
        if dist(positions[0], positions[1]) <= K:
            return ((a, b),) if a < b else ((b, a),)
        return ((a,), (b,)) if a < b else ((b,), (a,))
    parent = list(range(n))

    def find(x):
        while parent[x] != x:
            parent[x] = parent[parent[x]]
            x = parent[x]
        return x

    for a in range(n):
        for b in range(a + 1, n):
            if dist(positions[a], positions[b]) <= K:
                ra, rb = find(a), find(b)
                if ra != rb:
                    parent[max(ra, rb)] = min(ra, rb)
    groups: dict[int, list[int]] = {}
    for k in range(n):
        groups.setdefault(find(k), []).append(members[k])
    return canonical(groups.values())


def partition_intersection(p1: Partition, p2: Partition) -> Partition:
    """Common refinement {a & b : a in p1, b in p2} without empty blocks."""
    where = {}
    for k, block in enumerate(p2):
        for i in block:
            where[i] = k
    blocks: dict[tuple, list[int]] = {}
    for k, block in enumerate(p1):
        for i in block:
            blocks.setdefault((k, where[i]), []).append(i)
    return canonical(blocks.values())


def is_finer(p1: Partition, p2: Partition) -> bool:
    """True if every block of p1 lies inside a block of p2."""
    where = {}
    for k, block in enumerate(p2):
        for i in block:
            where[i] = k
    for block in p1:
        if len({where[i] for i in block}) != 1:
            return False
    return True


def block_of(partition: Partition, i: int) -> tuple:
    for block in partition:
        if i in block:
            return block
    raise KeyError(i)


def refinements(block: Sequence[int]):
    """All set partitions of `block`, as lists of tuples."""
    block = list(block)
    if not block:
        yield []
        return
    first, rest = block[0], block[1:]
    for sub in refinements(rest):
        yield [(first,)] + sub
        for k in range(len(sub)):
            yield sub[:k] + [(first,) + sub[k]] + sub[k + 1:]


def finer_partitions(partition: Partition):
    """Every partition finer than `partition` (including itself)."""
    parts = [list(refinements(b)) for b in partition]

    def rec(k, acc):
        if k == len(parts):
            yield canonical(acc)
            return
        for option in parts[k]:
            yield from rec(k + 1, acc + option)

    yield from rec(0, [])
