"""Shared fixtures and independent brute-force oracles for the test suite.

The brute-force helpers deliberately avoid the library's vectorized
enumeration: plain Python loops over full assignments, so they can serve as
an independent reference for probability queries.
"""

from itertools import product

import numpy as np
import pytest

from bnmix import Dag


@pytest.fixture
def fig13():
    """13-vertex benchmark DAG (two roots, a long spine, one deep tail)."""
    edges = [
        (0, 2), (1, 2), (1, 3), (2, 4), (3, 5), (4, 6), (5, 7),
        (6, 8), (8, 9), (8, 10), (10, 11), (11, 12),
    ]
    return Dag.build(13, edges)


@pytest.fixture
def fan6():
    """Six-vertex graph where vertex 3 has parents {0, 1}, children {4, 5}, co-parent 2."""
    return Dag.build(6, [(0, 3), (1, 3), (3, 4), (3, 5), (2, 4), (4, 5)])


def chain(n: int) -> Dag:
    return Dag.build(n, [(i, i + 1) for i in range(n - 1)])


def brute_joint(model, u, assignment):
    """P_u of a full assignment by direct CPT multiplication, no numpy."""
    p = 1.0
    for v in range(model.dag.n):
        parents = model.dag.parents(v)
        mask = 0
        for j, q in enumerate(parents):
            mask |= (assignment[q] & 1) << j
        p1 = float(model.cpts[u][v].table[mask])
        p *= p1 if assignment[v] == 1 else 1.0 - p1
    return p


def brute_event(model, u, fixed):
    """P_u(fixed) by full 2^n enumeration."""
    n = model.dag.n
    free = [v for v in range(n) if v not in fixed]
    total = 0.0
    for bits in product((0, 1), repeat=len(free)):
        assignment = dict(fixed)
        assignment.update(zip(free, bits))
        total += brute_joint(model, u, assignment)
    return total


def brute_conditional(model, u, targets, given):
    return brute_event(model, u, {**targets, **given}) / brute_event(model, u, given)


def brute_mixture_event(model, fixed):
    return sum(
        float(model.weights[u]) * brute_event(model, u, fixed)
        for u in range(model.k)
    )


def random_layered_dag(n, width, rng, max_skel=3):
    """Random layered DAG with a skeleton-degree cap; every layer feeds the next."""
    edges = []
    deg = [0] * n
    layers = [list(range(i, min(i + width, n))) for i in range(0, n, width)]
    for li in range(1, len(layers)):
        prev = layers[li - 1]
        for v in layers[li]:
            picks = rng.permutation(prev)
            want = 1 if rng.random() < 0.8 else 2
            got = 0
            for u in picks:
                if got >= want:
                    break
                if deg[u] < max_skel and deg[v] < max_skel - 1:
                    edges.append((int(u), int(v)))
                    deg[u] += 1
                    deg[v] += 1
                    got += 1
    return Dag.build(n, edges)


def random_sparse_dag(n, rng, max_skel=2, attach_prob=0.9):
    """Tree-ish random DAG over index order with bounded skeleton degree."""
    deg = [0] * n
    edges = []
    for v in range(1, n):
        if rng.random() < attach_prob:
            cands = [u for u in range(v) if deg[u] < max_skel and deg[v] < max_skel]
            if cands:
                u = int(rng.choice(cands))
                edges.append((u, v))
                deg[u] += 1
                deg[v] += 1
    return Dag.build(n, edges), deg
