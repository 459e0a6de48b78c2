"""Runs: conditioning plans that turn the network mixture into product-mixture instances.

A run pairs an independent set with a full assignment to its conditioning
set.  Conditioning uses the bottom-vertex refinement: members at maximal
depth contribute only their parents, everyone else contributes a full
Markov boundary, so the deepest members' descendants stay untouched and the
oracle reports their parent-conditioned tables directly.
"""

from __future__ import annotations

from dataclasses import dataclass, field
from typing import Iterable, Mapping, Sequence

from .dag import Dag


class RunError(ValueError):
    pass


class NotAlignable(RunError):
    def __init__(self, unreached: Sequence[int]):
        self.unreached = sorted(unreached)
        super().__init__(
            f"runs {self.unreached} cannot be aligned to the root component"
        )


def conditioning_set(g: Dag, members: Iterable[int]) -> tuple[int, ...]:
    """Union of boundaries of non-bottom members and parents of bottom members."""
    members = sorted(set(members))
    if not members:
        raise RunError("independent set must be nonempty")
    bottom = set(g.bottom_vertices(members))
    cond: set[int] = set()
    for v in members:
        if v in bottom:
            cond.update(g.parents(v))
        else:
            cond.update(g.markov_boundary(v))
    return tuple(sorted(cond))


@dataclass(frozen=True)
class Run:
    independent: tuple[int, ...]
    assignment: Mapping[int, int]  # exactly the conditioning set
    bottom: tuple[int, ...]
    label: str = ""

    def conditioned(self) -> tuple[int, ...]:
        return tuple(sorted(self.assignment))

    def is_bottom(self, v: int) -> bool:
        return v in self.bottom

    def row_index(self, v: int) -> int:
        return self.independent.index(v)

    def encoding(self, n: int) -> str:
        chars = ["-"] * n
        for v in self.independent:
            chars[v] = "*"
        for v, bit in self.assignment.items():
            chars[v] = str(int(bit))
        return "".join(chars)

    def restricted(self, vertices: Iterable[int]) -> tuple[tuple[int, int], ...]:
        """The run's conditioning restricted to ``vertices`` (only conditioned ones)."""
        return tuple(
            (v, int(self.assignment[v])) for v in sorted(vertices) if v in self.assignment
        )


def make_run(
    g: Dag,
    independent: Iterable[int],
    overrides: Mapping[int, int] | None = None,
    label: str = "",
) -> Run:
    """Build a run with all-zero defaults on its conditioning set, plus ``overrides``.

    Override keys outside the conditioning set are ignored; this lets callers
    hand in e.g. a full boundary sweep without first intersecting it.
    """
    members = tuple(sorted(set(independent)))
    cond = conditioning_set(g, members)
    overrides = overrides or {}
    assignment = {v: int(overrides.get(v, 0)) & 1 for v in cond}
    return Run(
        independent=members,
        assignment=assignment,
        bottom=g.bottom_vertices(members),
        label=label,
    )


def is_well_formed(g: Dag, run: Run) -> bool:
    cond = conditioning_set(g, run.independent)
    if set(run.assignment) != set(cond):
        return False
    return not (set(run.independent) & set(cond))


def is_n_independent(run: Run, n_mp: int) -> bool:
    return len(run.independent) >= n_mp


def has_clear_bottoms(g: Dag, run: Run) -> bool:
    """True when no bottom member's descendant appears elsewhere in the run.

    Bottom members are conditioned on parents alone, which d-separates them
    from the rest only while their descendants stay out of both the
    conditioning and the independent set; a conditioned descendant opens a
    collider path.  Well-formed runs violating this exist (maximal depth does
    not order ancestry), so builders must check it explicitly.
    """
    others = set(run.independent) | set(run.assignment)
    for b in run.bottom:
        if set(g.descendants([b])) & (others - {b}):
            return False
    return True


def parent_assignment_of(g: Dag, run: Run, v: int) -> tuple[tuple[int, int], ...]:
    """(parent, bit) pairs for ``v`` under the run's conditioning.

    Every parent of an independent vertex is conditioned, for bottom and
    non-bottom members alike.
    """
    return tuple((p, int(run.assignment[p])) for p in g.parents(v))


def alignment_variables(g: Dag, a: Run, b: Run) -> tuple[int, ...]:
    """Structural alignment candidates between two runs.

    X qualifies when it sits in both independent sets with the same bottom
    status and both runs condition the same slice of Mb(X) to the same values.
    Non-bottom occurrences condition the full boundary, so this reduces to the
    usual equal-boundary-assignment condition; bottom occurrences compare the
    conditioned part, which always covers Pa(X).  Separatedness is a numeric
    matter checked at alignment time, not here.
    """
    out = []
    for x in set(a.independent) & set(b.independent):
        if a.is_bottom(x) != b.is_bottom(x):
            continue
        mb = g.markov_boundary(x)
        if a.restricted(mb) != b.restricted(mb):
            continue
        out.append(x)
    return tuple(sorted(out))


@dataclass(frozen=True)
class RunCollection:
    """Runs plus the alignment spanning tree (edges hold one chosen variable)."""

    runs: tuple[Run, ...]
    tree: tuple[tuple[int, int, int], ...]  # (parent index, child index, variable)
    root: int = 0

    def __len__(self) -> int:
        return len(self.runs)

    def encodings(self, n: int) -> list[str]:
        return [r.encoding(n) for r in self.runs]


def build_spanning_tree(g: Dag, runs: Sequence[Run], root: int = 0) -> RunCollection:
    """BFS over the alignability graph; each edge records its smallest candidate."""
    runs = tuple(runs)
    if not runs:
        raise RunError("no runs to span")
    if not (0 <= root < len(runs)):
        raise RunError(f"root {root} out of range")
    candidates: dict[tuple[int, int], tuple[int, ...]] = {}

    def av(i, j):
        key = (min(i, j), max(i, j))
        if key not in candidates:
            candidates[key] = alignment_variables(g, runs[key[0]], runs[key[1]])
        return candidates[key]

    visited = {root}
    frontier = [root]
    edges: list[tuple[int, int, int]] = []
    while frontier:
        nxt: list[int] = []
        for i in frontier:
            for j in range(len(runs)):
                if j in visited:
                    continue
                vars_ij = av(i, j)
                if vars_ij:
                    visited.add(j)
                    edges.append((i, j, vars_ij[0]))
                    nxt.append(j)
        frontier = sorted(nxt)
    if len(visited) < len(runs):
        raise NotAlignable(set(range(len(runs))) - visited)
    return RunCollection(runs=runs, tree=tuple(edges), root=root)


def covers(g: Dag, coll: RunCollection, v: int) -> bool:
    """Every parent assignment of ``v`` appears in some run containing ``v``."""
    g.check_vertex(v)
    parents = g.parents(v)
    needed = set(range(2 ** len(parents)))
    for run in coll.runs:
        if v not in run.independent:
            continue
        mask = 0
        for j, p in enumerate(parents):
            mask |= (int(run.assignment[p]) & 1) << j
        needed.discard(mask)
        if not needed:
            return True
    return not needed


@dataclass
class GoodCollectionReport:
    alignable: bool
    independent: bool
    covered: bool
    bottom_consistent: bool
    depth_bounded: bool
    unreached_runs: list[int] = field(default_factory=list)
    small_runs: list[int] = field(default_factory=list)
    uncovered: list[int] = field(default_factory=list)
    conflicted: list[int] = field(default_factory=list)
    too_deep: list[int] = field(default_factory=list)
    ill_formed: list[int] = field(default_factory=list)

    @property
    def ok(self) -> bool:
        return (
            self.alignable
            and self.independent
            and self.covered
            and self.bottom_consistent
            and self.depth_bounded
            and not self.ill_formed
        )

    def summary(self) -> str:
        parts = [
            f"alignable={self.alignable}",
            f"n_independent={self.independent}",
            f"coverage={self.covered}",
            f"bottom_status={self.bottom_consistent}",
            f"depth_cap={self.depth_bounded}",
        ]
        if self.ill_formed:
            parts.append(f"ill_formed={self.ill_formed}")
        for name, items in [
            ("unreached", self.unreached_runs),
            ("small", self.small_runs),
            ("uncovered", self.uncovered),
            ("conflicted", self.conflicted),
            ("too_deep", self.too_deep),
        ]:
            if items:
                parts.append(f"{name}={items}")
        return ", ".join(parts)


def is_good_collection(
    g: Dag, coll: RunCollection, n_mp: int, depth_cap: int | None = None
) -> GoodCollectionReport:
    """Check the five admissibility criteria and report witnesses for failures.

    (i) spanning tree reaches every run, (ii) every run has at least ``n_mp``
    independent vertices, (iii) every vertex is covered for every parent
    assignment, (iv) no vertex is bottom in one run and non-bottom in another,
    (v) every non-bottom occurrence has depth at most ``depth_cap``
    (default 3 * n_mp).
    """
    if depth_cap is None:
        depth_cap = 3 * n_mp
    ill_formed = [i for i, r in enumerate(coll.runs) if not is_well_formed(g, r)]

    reached = {coll.root}
    for parent, child, _ in coll.tree:
        if parent in reached:
            reached.add(child)
    # Tree edges may arrive in any order; iterate until stable.
    changed = True
    while changed:
        changed = False
        for parent, child, _ in coll.tree:
            if parent in reached and child not in reached:
                reached.add(child)
                changed = True
    unreached = sorted(set(range(len(coll.runs))) - reached)

    small = [i for i, r in enumerate(coll.runs) if not is_n_independent(r, n_mp)]
    uncovered = [v for v in range(g.n) if not covers(g, coll, v)]

    status: dict[int, set[bool]] = {}
    for r in coll.runs:
        for v in r.independent:
            status.setdefault(v, set()).add(r.is_bottom(v))
    conflicted = sorted(v for v, s in status.items() if len(s) > 1)

    too_deep = sorted(
        {
            v
            for r in coll.runs
            for v in r.independent
            if not r.is_bottom(v) and g.depth(v) > depth_cap
        }
    )

    return GoodCollectionReport(
        alignable=not unreached,
        independent=not small,
        covered=not uncovered,
        bottom_consistent=not conflicted,
        depth_bounded=not too_deep,
        unreached_runs=unreached,
        small_runs=small,
        uncovered=uncovered,
        conflicted=conflicted,
        too_deep=too_deep,
        ill_formed=ill_formed,
    )
