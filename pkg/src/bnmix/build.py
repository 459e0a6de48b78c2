"""Constructions of admissible run collections.

Two constructions are provided: a generic one anchored on centers with
disjoint Markov boundaries, and a specialized one for directed paths.  Both
return collections that pass every :func:`bnmix.runs.is_good_collection`
criterion, or fail loudly.

The generic construction keeps bottom status consistent across the whole
collection by construction: when vertices deeper than every center exist, one
of them rides along as a designated bottom "anchor" in every run that would
otherwise have a center as its deepest member; when no such vertex exists the
deepest centers themselves form the bottom tier.  Either way a vertex is
bottom in every run it joins or in none.
"""

from __future__ import annotations

from .dag import Dag, NotEnoughCenters, find_centers
from .runs import (
    Run,
    RunCollection,
    build_spanning_tree,
    conditioning_set,
    has_clear_bottoms,
    is_good_collection,
    is_well_formed,
    make_run,
)


class BuildError(RuntimeError):
    pass


class ConstructionFailed(BuildError):
    pass


class IllFormedRun(BuildError):
    pass


class NotAPath(BuildError):
    pass


class PathTooShort(BuildError):
    pass


def build_generic(g: Dag, n_mp: int, depth_cap: int | None = None) -> RunCollection:
    """Generic construction from greedy centers.

    Emits a default central run with all boundaries at zero, one run per
    non-default assignment to each center's conditioned boundary slice, and
    per-vertex coverage runs sweeping every parent assignment.  Retries with
    one or two extra centers when a coverage run would fall below ``n_mp``
    members, then verifies all five admissibility criteria.

    Raises:
        NotEnoughCenters: no ``n_mp`` disjoint-boundary centers exist.
        ConstructionFailed: a collection was built but fails verification.
    """
    if depth_cap is None:
        depth_cap = 3 * n_mp
    failure: Exception | None = None
    # Shallow-first centers are the default; deepest-first is a fallback for
    # graphs (for example one-hot clique reductions) where only maximal-depth
    # vertices stay numerically separated under conditioning.
    for deepest_first in (False, True):
        for count in (n_mp, n_mp + 1, n_mp + 2):
            try:
                centers = (
                    _find_centers_deepest(g, count, depth_cap)
                    if deepest_first
                    else find_centers(g, count, depth_cap)
                )
            except NotEnoughCenters:
                if failure is None and not deepest_first:
                    raise
                break
            try:
                coll = _assemble_generic(g, centers, n_mp)
            except (ConstructionFailed, IllFormedRun) as exc:
                failure = exc
                continue
            report = is_good_collection(g, coll, n_mp, depth_cap)
            if report.ok:
                return coll
            failure = ConstructionFailed(
                f"collection from {len(centers)} centers fails checks: {report.summary()}"
            )
    assert failure is not None
    raise failure


def _find_centers_deepest(g: Dag, count: int, max_depth: int) -> tuple[int, ...]:
    """Greedy centers preferring maximal depth, same removal rule as find_centers."""
    pool = {v for v in range(g.n) if g.depth(v) <= max_depth}
    chosen: list[int] = []
    while len(chosen) < count:
        candidates = sorted(pool, key=lambda v: (-g.depth(v), v))
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


def _members_admissible(g: Dag, members) -> bool:
    """Disjoint from their own conditioning, with no bottom descendant touched."""
    members = sorted(set(members))
    cond = set(conditioning_set(g, members))
    if cond & set(members):
        return False
    touched = cond | set(members)
    for b in g.bottom_vertices(members):
        if set(g.descendants([b])) & (touched - {b}):
            return False
    return True


def _assemble_generic(g: Dag, centers: tuple[int, ...], n_mp: int) -> RunCollection:
    center_set = set(centers)
    d_tier = max(g.depth(x) for x in centers)
    mb_union: set[int] = set()
    for x in centers:
        mb_union.update(g.markov_boundary(x))

    deep = [v for v in range(g.n) if v not in center_set and g.depth(v) > d_tier]
    anchor_pool = sorted(
        (v for v in deep if v not in mb_union), key=lambda v: (-g.depth(v), v)
    )
    anchor_pool = [
        a for a in anchor_pool if _members_admissible(g, list(centers) + [a])
    ]
    anchored = bool(anchor_pool)

    runs: list[Run] = []

    base = list(centers) + ([anchor_pool[0]] if anchored else [])
    if not _members_admissible(g, base):
        raise ConstructionFailed("central run is not admissible")
    a0 = make_run(g, base, {}, label="central")
    runs.append(a0)
    conditioned0 = set(a0.assignment)
    for x in centers:
        sweep = [w for w in g.markov_boundary(x) if w in conditioned0]
        for mask in range(1, 2 ** len(sweep)):
            overrides = {w: (mask >> j) & 1 for j, w in enumerate(sweep)}
            runs.append(make_run(g, base, overrides, label=f"central-sweep({x})"))

    for y in sorted(v for v in range(g.n) if v not in center_set):
        kept = [x for x in centers if y not in g.markov_boundary(x)]
        members = _cover_members(g, kept, y, d_tier, anchored, anchor_pool)
        if len(members) < n_mp:
            raise ConstructionFailed(
                f"coverage run for vertex {y} has only {len(members)} members"
            )
        parents = g.parents(y)
        for mask in range(2 ** len(parents)):
            overrides = {p: (mask >> j) & 1 for j, p in enumerate(parents)}
            runs.append(make_run(g, members, overrides, label=f"cover({y})"))

    runs = _dedupe(runs)
    for r in runs:
        if not is_well_formed(g, r):
            raise IllFormedRun(f"internal error: ill-formed run {r.encoding(g.n)}")
        if not has_clear_bottoms(g, r):
            raise ConstructionFailed(
                f"bottom descendant conditioned in run {r.encoding(g.n)}"
            )
    try:
        return build_spanning_tree(g, runs, root=0)
    except Exception as exc:
        raise ConstructionFailed(f"spanning tree failed: {exc}") from exc


def _cover_members(g, kept, y, d_tier, anchored, anchor_pool):
    """Independent set for the runs covering ``y``, with consistent bottom status."""
    if anchored:
        if g.depth(y) > d_tier:
            members = kept + [y]
            if not _members_admissible(g, members):
                # a kept boundary touches a descendant of y; shed those centers
                desc_y = set(g.descendants([y]))
                members = [
                    x for x in kept if not desc_y & set(g.markov_boundary(x))
                ] + [y]
            if _members_admissible(g, members):
                return members
            raise ConstructionFailed(f"no admissible bottom run for vertex {y}")
        for a in anchor_pool:
            if a == y:
                continue
            members = kept + [y, a]
            if _members_admissible(g, members):
                return members
        raise ConstructionFailed(f"no usable deep anchor for vertex {y}")
    if g.depth(y) > d_tier:
        members = [x for x in kept if g.depth(x) < d_tier] + [y]
        if _members_admissible(g, members):
            return members
        raise ConstructionFailed(f"no admissible bottom run for vertex {y}")
    members = kept + [y]
    run_max = max(g.depth(v) for v in members)
    needs_cobottom = any(
        g.depth(x) == run_max for x in kept if g.depth(x) < d_tier
    ) and run_max < d_tier
    if not needs_cobottom:
        if _members_admissible(g, members):
            return members
        raise ConstructionFailed(f"no admissible coverage run for vertex {y}")
    for z in range(g.n):
        if (
            g.depth(z) == d_tier
            and z != y
            and z not in set(members)
            and _members_admissible(g, members + [z])
        ):
            return members + [z]
    raise ConstructionFailed(f"no co-bottom companion for vertex {y}")


def build_path(g: Dag, n_mp: int) -> RunCollection:
    """Specialized construction for a directed path.

    Uses the alternating-parity default runs plus a linking run, parity-sweep
    runs covering the first ``2 * n_mp`` positions, and per-value tail runs for
    everything beyond.
    """
    if n_mp < 2:
        raise BuildError("path construction needs n_mp >= 2")
    order = _path_order(g)
    n = g.n
    if n < 2 * n_mp:
        raise PathTooShort(f"path of length {n} is shorter than {2 * n_mp}")

    def pos(i: int) -> int:  # 1-indexed position -> vertex id
        return order[i - 1]

    big_n = n_mp
    even_members = [pos(i) for i in range(2, 2 * big_n + 1, 2)]
    odd_members = [pos(i) for i in range(1, 2 * big_n, 2)]
    link_members = [pos(1)] + [pos(i) for i in range(4, 2 * big_n + 1, 2)]
    runs = [
        make_run(g, even_members, {}, "even"),
        make_run(g, odd_members, {}, "odd"),
        make_run(g, link_members, {}, "link"),
    ]
    for i in range(1, 2 * big_n, 2):
        runs.append(make_run(g, even_members, {pos(i): 1}, f"even[{i}]"))
    for i in range(2, 2 * big_n - 1, 2):
        runs.append(make_run(g, odd_members, {pos(i): 1}, f"odd[{i}]"))
    tail_base = [pos(i) for i in range(1, 2 * big_n - 2, 2)]
    for i in range(2 * big_n + 1, n + 1):
        for b in (0, 1):
            runs.append(
                make_run(g, tail_base + [pos(i)], {pos(i - 1): b}, f"tail{b}[{i}]")
            )
    runs = _dedupe(runs)
    for r in runs:
        if not is_well_formed(g, r):
            raise IllFormedRun(f"internal error: ill-formed run {r.encoding(g.n)}")
    return build_spanning_tree(g, runs, root=0)


def _path_order(g: Dag) -> list[int]:
    if g.n == 0:
        raise NotAPath("empty graph")
    roots = [v for v in range(g.n) if not g.parents(v)]
    if len(roots) != 1:
        raise NotAPath(f"expected one root, found {len(roots)}")
    order = [roots[0]]
    while True:
        children = g.children(order[-1])
        if not children:
            break
        if len(children) > 1 or len(g.parents(children[0])) != 1:
            raise NotAPath("vertex with branching")
        order.append(children[0])
    if len(order) != g.n:
        raise NotAPath("graph is not a single path")
    return order


def _dedupe(runs: list[Run]) -> list[Run]:
    seen = set()
    out = []
    for r in runs:
        key = (r.independent, tuple(sorted(r.assignment.items())))
        if key in seen:
            continue
        seen.add(key)
        out.append(r)
    return out
