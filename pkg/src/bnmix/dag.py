"""Directed acyclic graphs and the structural queries the identification pipeline needs.

Vertices are integers in ``[0, n)``.  A :class:`Dag` is immutable after
construction and caches everything downstream code queries repeatedly:
parents, children, Markov boundaries, depths and a topological order.
"""

from __future__ import annotations

import json
from collections import deque
from dataclasses import dataclass, field
from typing import Iterable, Sequence


class DagError(ValueError):
    pass


class BadVertexIndex(DagError):
    pass


class CycleDetected(DagError):
    def __init__(self, cycle: Sequence[int]):
        self.cycle = list(cycle)
        super().__init__("directed cycle: " + " -> ".join(map(str, self.cycle)))


class NotEnoughCenters(DagError):
    def __init__(self, requested: int, found: Sequence[int]):
        self.requested = requested
        self.found = list(found)
        super().__init__(
            f"found {len(self.found)} centers with disjoint boundaries, needed {requested}"
        )


@dataclass(frozen=True)
class Dag:
    """A DAG over ``n`` integer vertices with cached structure.

    Use :func:`validate_acyclic` (or :meth:`Dag.build`) rather than the raw
    constructor; construction validates indices, rejects self loops and
    duplicate edges, and fails with the offending cycle if one exists.
    """

    n: int
    edges: tuple[tuple[int, int], ...]
    _parents: tuple[tuple[int, ...], ...] = field(repr=False)
    _children: tuple[tuple[int, ...], ...] = field(repr=False)
    _topo: tuple[int, ...] = field(repr=False)
    _mb: tuple[tuple[int, ...], ...] = field(repr=False)
    _depth: tuple[int, ...] = field(repr=False)

    @staticmethod
    def build(n: int, edges: Iterable[tuple[int, int]]) -> "Dag":
        return validate_acyclic(edges, n)

    # -- basic structure -------------------------------------------------

    def check_vertex(self, v: int) -> None:
        if not (isinstance(v, (int,)) and 0 <= v < self.n):
            raise BadVertexIndex(f"vertex {v!r} not in [0, {self.n})")

    def parents(self, v: int) -> tuple[int, ...]:
        self.check_vertex(v)
        return self._parents[v]

    def children(self, v: int) -> tuple[int, ...]:
        self.check_vertex(v)
        return self._children[v]

    def ancestors(self, s: Iterable[int]) -> tuple[int, ...]:
        """All vertices with a directed path into ``s``, excluding ``s`` itself."""
        s = set(s)
        for v in s:
            self.check_vertex(v)
        seen: set[int] = set()
        stack = [p for v in s for p in self._parents[v]]
        while stack:
            v = stack.pop()
            if v in seen:
                continue
            seen.add(v)
            stack.extend(self._parents[v])
        return tuple(sorted(seen - s))

    def descendants(self, s: Iterable[int]) -> tuple[int, ...]:
        """All vertices reachable from ``s`` by directed paths, excluding ``s``."""
        s = set(s)
        for v in s:
            self.check_vertex(v)
        seen: set[int] = set()
        stack = [c for v in s for c in self._children[v]]
        while stack:
            v = stack.pop()
            if v in seen:
                continue
            seen.add(v)
            stack.extend(self._children[v])
        return tuple(sorted(seen - s))

    def markov_boundary(self, v: int) -> tuple[int, ...]:
        self.check_vertex(v)
        return self._mb[v]

    def top_set(self, v: int) -> tuple[int, ...]:
        """Markov boundary minus children: parents and co-parents of ``v``."""
        self.check_vertex(v)
        ch = set(self._children[v])
        return tuple(x for x in self._mb[v] if x not in ch)

    def depth(self, v: int) -> int:
        """Length of the shortest directed path from any root (in-degree 0) to ``v``."""
        self.check_vertex(v)
        return self._depth[v]

    def gamma(self) -> int:
        """Largest Markov boundary size over all vertices."""
        return max((len(b) for b in self._mb), default=0)

    def max_in_degree(self) -> int:
        return max((len(p) for p in self._parents), default=0)

    def max_out_degree(self) -> int:
        return max((len(c) for c in self._children), default=0)

    def max_skeleton_degree(self) -> int:
        return max(
            (len(self._parents[v]) + len(self._children[v]) for v in range(self.n)),
            default=0,
        )

    def topological_order(self) -> tuple[int, ...]:
        return self._topo

    def bottom_vertices(self, s: Iterable[int]) -> tuple[int, ...]:
        """Members of ``s`` at maximal depth (ties kept)."""
        s = sorted(set(s))
        for v in s:
            self.check_vertex(v)
        if not s:
            return ()
        dmax = max(self._depth[v] for v in s)
        return tuple(v for v in s if self._depth[v] == dmax)

    # -- serialization ---------------------------------------------------

    def to_json(self) -> str:
        return json.dumps(
            {"n": self.n, "edges": [list(e) for e in self.edges]}, sort_keys=True
        )

    @staticmethod
    def from_json(text: str) -> "Dag":
        obj = json.loads(text)
        try:
            n = int(obj["n"])
            edges = [(int(a), int(b)) for a, b in obj["edges"]]
        except (KeyError, TypeError, ValueError) as exc:
            raise DagError(f"malformed graph document: {exc}") from exc
        return validate_acyclic(edges, n)


def validate_acyclic(edges: Iterable[tuple[int, int]], n: int) -> Dag:
    """Build a :class:`Dag`, rejecting bad indices, self loops, duplicates and cycles."""
    if n < 0:
        raise BadVertexIndex(f"negative vertex count {n}")
    edge_list: list[tuple[int, int]] = []
    seen_edges: set[tuple[int, int]] = set()
    parents: list[list[int]] = [[] for _ in range(n)]
    children: list[list[int]] = [[] for _ in range(n)]
    for a, b in edges:
        if not (0 <= a < n and 0 <= b < n):
            raise BadVertexIndex(f"edge ({a}, {b}) leaves [0, {n})")
        if a == b:
            raise CycleDetected([a, a])
        if (a, b) in seen_edges:
            continue
        seen_edges.add((a, b))
        edge_list.append((a, b))
        parents[b].append(a)
        children[a].append(b)

    topo = _topological_order(n, parents, children)

    mb: list[tuple[int, ...]] = []
    for v in range(n):
        boundary = set(parents[v]) | set(children[v])
        for c in children[v]:
            boundary.update(parents[c])
        boundary.discard(v)
        mb.append(tuple(sorted(boundary)))

    depth = [-1] * n
    queue = deque(v for v in range(n) if not parents[v])
    for v in queue:
        depth[v] = 0
    while queue:
        v = queue.popleft()
        for c in children[v]:
            if depth[c] == -1:
                depth[c] = depth[v] + 1
                queue.append(c)

    return Dag(
        n=n,
        edges=tuple(sorted(edge_list)),
        _parents=tuple(tuple(sorted(p)) for p in parents),
        _children=tuple(tuple(sorted(c)) for c in children),
        _topo=tuple(topo),
        _mb=tuple(mb),
        _depth=tuple(depth),
    )


def _topological_order(n, parents, children) -> list[int]:
    indeg = [len(p) for p in parents]
    ready = sorted(v for v in range(n) if indeg[v] == 0)
    order: list[int] = []
    ready = deque(ready)
    while ready:
        v = ready.popleft()
        order.append(v)
        for c in sorted(children[v]):
            indeg[c] -= 1
            if indeg[c] == 0:
                ready.append(c)
    if len(order) < n:
        # Some vertex sits on a cycle; walk parent pointers inside the
        # remainder until a vertex repeats to report one concrete cycle.
        remaining = {v for v in range(n) if indeg[v] > 0}
        v = min(remaining)
        trail = [v]
        seen = {v}
        while True:
            v = next(p for p in parents[v] if p in remaining)
            if v in seen:
                start = trail.index(v)
                cycle = trail[start:] + [v]
                raise CycleDetected(cycle[::-1])
            trail.append(v)
            seen.add(v)
    return order


def find_centers(g: Dag, count: int, max_depth: int) -> tuple[int, ...]:
    """Pick ``count`` vertices with pairwise disjoint Markov boundaries, greedily.

    Candidates are vertices of depth at most ``max_depth``; the greedy order is
    increasing (depth, index).  After picking Y, everything in
    ``{Y} | Mb(Y) | Mb(Mb(Y))`` is discarded, which by boundary symmetry keeps
    the boundaries of later picks disjoint from Mb(Y).

    Raises:
        NotEnoughCenters: with the partial result when the pool runs dry.
    """
    if count < 1:
        raise DagError(f"center count must be >= 1, got {count}")
    pool = {v for v in range(g.n) if g.depth(v) <= max_depth}
    chosen: list[int] = []
    while len(chosen) < count:
        candidates = sorted(pool, key=lambda v: (g.depth(v), v))
        if not candidates:
            raise NotEnoughCenters(count, chosen)
        y = candidates[0]
        chosen.append(y)
        removed = {y}
        removed.update(g.markov_boundary(y))
        for w in g.markov_boundary(y):
            removed.update(g.markov_boundary(w))
        pool -= removed
    return tuple(chosen)
