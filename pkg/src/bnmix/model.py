"""Mixture-of-Bayesian-network models: exact queries, sampling, generation, file I/O.

A :class:`MixtureModel` holds one conditional probability table per
(source, vertex) plus mixture weights.  All probability queries are exact,
by enumeration over the free vertices, which keeps this module a trustworthy
oracle at desk scale.
"""

from __future__ import annotations

import io
import json
from dataclasses import dataclass, field
from typing import Mapping, Sequence

import numpy as np

from .dag import Dag

PROB_FLOOR = 1e-9  # CPT entries and weights are kept inside [PROB_FLOOR, 1 - PROB_FLOOR]
FREE_VERTEX_LIMIT = 25
_CHUNK_BITS = 20


class ModelError(ValueError):
    pass


class PartialAssignment(ModelError):
    pass


class ZeroConditioningProbability(ModelError):
    pass


class TooManyFreeVertices(ModelError):
    pass


class GenerationTimeout(ModelError):
    pass


Assignment = Mapping[int, int]  # vertex -> bit


def parent_mask(parents: Sequence[int], assignment: Assignment) -> int:
    """Little-endian index of a parent assignment: bit j is the j-th smallest parent."""
    mask = 0
    for j, p in enumerate(parents):
        mask |= (assignment[p] & 1) << j
    return mask


@dataclass(frozen=True)
class Cpt:
    """P(vertex = 1 | parent assignment), one entry per little-endian parent mask."""

    vertex: int
    parents: tuple[int, ...]
    table: np.ndarray  # shape (2 ** len(parents),)

    def __post_init__(self):
        table = np.asarray(self.table, dtype=float)
        if table.shape != (2 ** len(self.parents),):
            raise ModelError(
                f"cpt for vertex {self.vertex} has {table.shape} entries, "
                f"expected {2 ** len(self.parents)}"
            )
        object.__setattr__(self, "table", np.clip(table, PROB_FLOOR, 1.0 - PROB_FLOOR))

    def prob(self, value: int, assignment: Assignment) -> float:
        p1 = float(self.table[parent_mask(self.parents, assignment)])
        return p1 if value == 1 else 1.0 - p1


@dataclass(frozen=True)
class MixtureModel:
    """k sources, each a full CPT set over the same DAG, plus mixture weights."""

    dag: Dag
    k: int
    weights: np.ndarray  # shape (k,)
    cpts: tuple[tuple[Cpt, ...], ...]  # [source][vertex]

    def __post_init__(self):
        w = np.asarray(self.weights, dtype=float)
        if w.shape != (self.k,):
            raise ModelError(f"expected {self.k} weights, got shape {w.shape}")
        if np.any(w <= 0):
            raise ModelError("mixture weights must be strictly positive")
        if abs(float(w.sum()) - 1.0) > 1e-12:
            raise ModelError(f"weights sum to {w.sum()!r}, not 1")
        object.__setattr__(self, "weights", w)
        if len(self.cpts) != self.k:
            raise ModelError("one CPT set per source required")
        for per_source in self.cpts:
            if len(per_source) != self.dag.n:
                raise ModelError("each source needs one CPT per vertex")
            for v, cpt in enumerate(per_source):
                if cpt.vertex != v or cpt.parents != self.dag.parents(v):
                    raise ModelError(f"cpt mismatch at vertex {v}")

    # -- exact queries ----------------------------------------------------

    def within_source_joint(self, u: int, assignment: Assignment) -> float:
        if len(assignment) != self.dag.n or set(assignment) != set(range(self.dag.n)):
            raise PartialAssignment("joint query needs a total assignment")
        p = 1.0
        for cpt in self.cpts[u]:
            p *= cpt.prob(assignment[cpt.vertex], assignment)
        return p

    def event_probability(self, u: int, fixed: Assignment) -> float:
        """P_u(fixed), marginalizing all unfixed vertices by enumeration."""
        return self._event_profile(u, dict(fixed), ())[0]

    def conditional(self, u: int, targets: Assignment, given: Assignment) -> float:
        overlap = set(targets) & set(given)
        if overlap:
            raise ModelError(f"targets and given overlap on {sorted(overlap)}")
        denom = self.event_probability(u, given)
        if denom <= 0.0:
            raise ZeroConditioningProbability(f"P_u(given) = 0 for source {u}")
        num = self.event_probability(u, {**targets, **given})
        return num / denom

    def mixture_conditional(self, targets: Assignment, given: Assignment) -> float:
        num = 0.0
        denom = 0.0
        for u in range(self.k):
            w = float(self.weights[u])
            denom += w * self.event_probability(u, given)
            num += w * self.event_probability(u, {**targets, **given})
        if denom <= 0.0:
            raise ZeroConditioningProbability("mixture probability of the condition is 0")
        return num / denom

    def observe(self, fixed: Assignment) -> float:
        """Mixture probability of an event, P(fixed)."""
        return float(
            sum(
                self.weights[u] * self.event_probability(u, fixed)
                for u in range(self.k)
            )
        )

    def source_posterior(self, fixed: Assignment) -> np.ndarray:
        """P(U = u | fixed) for every source."""
        lik = np.array(
            [self.event_probability(u, fixed) for u in range(self.k)], dtype=float
        )
        joint = self.weights * lik
        total = joint.sum()
        if total <= 0.0:
            raise ZeroConditioningProbability("conditioning event has probability 0")
        return joint / total

    def conditional_profile(
        self, u: int, given: Assignment, targets: Sequence[int]
    ) -> np.ndarray:
        """P_u(t = 1 | given) for each target vertex, from one enumeration sweep."""
        total, ones = self._event_profile(u, dict(given), tuple(targets))
        if total <= 0.0:
            raise ZeroConditioningProbability(f"P_u(given) = 0 for source {u}")
        return ones / total

    def _event_profile(self, u, fixed, targets):
        """Sum P_u over all extensions of ``fixed``.

        Returns (total, per-target mass with target = 1).  Enumeration runs
        over the free vertices, chunked so memory stays bounded.
        """
        n = self.dag.n
        free = [v for v in range(n) if v not in fixed]
        f = len(free)
        if f > FREE_VERTEX_LIMIT:
            raise TooManyFreeVertices(f"{f} free vertices exceeds {FREE_VERTEX_LIMIT}")
        total = 0.0
        ones = np.zeros(len(targets), dtype=float)
        chunk = 1 << min(f, _CHUNK_BITS)
        for start in range(0, 1 << f, chunk):
            cols = _bit_columns(start, min(chunk, (1 << f) - start), f)
            values: dict[int, np.ndarray | int] = dict(fixed)
            for j, v in enumerate(free):
                values[v] = cols[:, j]
            p = np.ones(cols.shape[0], dtype=float)
            for cpt in self.cpts[u]:
                mask = np.zeros(cols.shape[0], dtype=np.int64)
                for j, parent in enumerate(cpt.parents):
                    mask |= np.asarray(values[parent], dtype=np.int64) << j
                p1 = cpt.table[mask]
                val = np.asarray(values[cpt.vertex])
                p *= np.where(val == 1, p1, 1.0 - p1)
            total += float(p.sum())
            for t_idx, t in enumerate(targets):
                val = np.asarray(values[t])
                if val.ndim == 0:
                    if int(val) == 1:
                        ones[t_idx] += float(p.sum())
                else:
                    ones[t_idx] += float(p[val == 1].sum())
        return total, ones

    def joint_vector(self, u: int) -> np.ndarray:
        """P_u over all 2^n assignments; row index bit i is vertex i's value."""
        n = self.dag.n
        if n > 20:
            raise TooManyFreeVertices(f"full joint over {n} vertices is too large")
        cols = _bit_columns(0, 1 << n, n)
        p = np.ones(1 << n, dtype=float)
        for cpt in self.cpts[u]:
            mask = np.zeros(1 << n, dtype=np.int64)
            for j, parent in enumerate(cpt.parents):
                mask |= cols[:, parent].astype(np.int64) << j
            p1 = cpt.table[mask]
            p *= np.where(cols[:, cpt.vertex] == 1, p1, 1.0 - p1)
        return p

    def mixture_joint_vector(self) -> np.ndarray:
        return sum(
            float(self.weights[u]) * self.joint_vector(u) for u in range(self.k)
        )

    # -- sampling ----------------------------------------------------------

    def sample(self, count: int, seed: int) -> "SampleSet":
        rng = np.random.default_rng(seed)
        labels = rng.choice(self.k, size=count, p=self.weights)
        rows = np.zeros((count, self.dag.n), dtype=np.uint8)
        for v in self.dag.topological_order():
            parents = self.dag.parents(v)
            mask = np.zeros(count, dtype=np.int64)
            for j, p in enumerate(parents):
                mask |= rows[:, p].astype(np.int64) << j
            p1 = np.stack([self.cpts[u][v].table for u in range(self.k)])[labels, mask]
            rows[:, v] = (rng.random(count) < p1).astype(np.uint8)
        return SampleSet(rows=rows, sources=labels.astype(np.int64))

    # -- serialization -----------------------------------------------------

    def to_json(self) -> str:
        doc = {
            "n": self.dag.n,
            "edges": [list(e) for e in self.dag.edges],
            "k": self.k,
            "weights": [float(w) for w in self.weights],
            "cpts": [
                [
                    {
                        "vertex": cpt.vertex,
                        "parents": list(cpt.parents),
                        "table": [float(x) for x in cpt.table],
                    }
                    for cpt in per_source
                ]
                for per_source in self.cpts
            ],
        }
        return json.dumps(doc, sort_keys=True, indent=1)

    @staticmethod
    def from_json(text: str) -> "MixtureModel":
        obj = json.loads(text)
        dag = Dag.build(int(obj["n"]), [(int(a), int(b)) for a, b in obj["edges"]])
        k = int(obj["k"])
        cpts = tuple(
            tuple(
                Cpt(
                    vertex=int(c["vertex"]),
                    parents=tuple(int(p) for p in c["parents"]),
                    table=np.array(c["table"], dtype=float),
                )
                for c in per_source
            )
            for per_source in obj["cpts"]
        )
        return MixtureModel(dag=dag, k=k, weights=np.array(obj["weights"]), cpts=cpts)


@dataclass
class SampleSet:
    """Rows of full binary assignments; synthetic provenance labels are optional."""

    rows: np.ndarray  # shape (m, n), uint8
    sources: np.ndarray | None = None

    def __post_init__(self):
        self.rows = np.asarray(self.rows, dtype=np.uint8)
        if self.rows.ndim != 2:
            raise ModelError("sample rows must be a 2-D array")

    def __len__(self) -> int:
        return self.rows.shape[0]

    def to_csv(self) -> str:
        n = self.rows.shape[1]
        buf = io.StringIO()
        header = [f"v{i}" for i in range(n)]
        if self.sources is not None:
            header.append("u")
        buf.write(",".join(header) + "\n")
        for i in range(len(self)):
            cells = [str(int(b)) for b in self.rows[i]]
            if self.sources is not None:
                cells.append(str(int(self.sources[i])))
            buf.write(",".join(cells) + "\n")
        return buf.getvalue()

    @staticmethod
    def from_csv(text: str) -> "SampleSet":
        lines = [ln for ln in text.strip().splitlines() if ln]
        header = lines[0].split(",")
        has_u = header and header[-1] == "u"
        ncols = len(header) - (1 if has_u else 0)
        if [h for h in header[:ncols]] != [f"v{i}" for i in range(ncols)]:
            raise ModelError(f"unexpected sample header {header!r}")
        rows = []
        sources = []
        for ln in lines[1:]:
            cells = ln.split(",")
            rows.append([int(c) for c in cells[:ncols]])
            if has_u:
                sources.append(int(cells[-1]))
        return SampleSet(
            rows=np.array(rows, dtype=np.uint8).reshape(len(rows), ncols),
            sources=np.array(sources, dtype=np.int64) if has_u else None,
        )


def _bit_columns(start: int, count: int, width: int) -> np.ndarray:
    idx = np.arange(start, start + count, dtype=np.int64)
    if width == 0:
        return np.zeros((count, 0), dtype=np.uint8)
    return ((idx[:, None] >> np.arange(width)[None, :]) & 1).astype(np.uint8)


def random_separated_model(
    g: Dag,
    k: int,
    zeta: float,
    seed: int,
    margin: float = 0.05,
    max_tries: int = 10_000,
) -> MixtureModel:
    """Draw a mixture whose sources differ by at least ``zeta`` on every CPT entry.

    Entries are uniform on [margin, 1 - margin]; each (vertex, parent
    assignment) slot is redrawn until all pairwise source gaps reach ``zeta``.
    Weights are uniform-ish with a floor of 1/(2k).
    """
    if k < 1:
        raise ModelError("k must be >= 1")
    if zeta < 0 or (k > 1 and zeta * (k - 1) > (1 - 2 * margin)):
        raise ModelError(f"cannot fit {k} sources with gap {zeta} inside the margin")
    rng = np.random.default_rng(seed)
    tables = [
        np.empty((2 ** len(g.parents(v)), k), dtype=float) for v in range(g.n)
    ]
    for v in range(g.n):
        for mask in range(tables[v].shape[0]):
            for attempt in range(max_tries + 1):
                if attempt == max_tries:
                    raise GenerationTimeout(
                        f"separation {zeta} unreachable at vertex {v}, mask {mask}"
                    )
                draw = rng.uniform(margin, 1.0 - margin, size=k)
                gaps = np.abs(draw[:, None] - draw[None, :])
                if k == 1 or gaps[np.triu_indices(k, 1)].min() >= zeta:
                    tables[v][mask] = draw
                    break
    raw = rng.uniform(1.0, 2.0, size=k)
    weights = raw / raw.sum()
    cpts = tuple(
        tuple(Cpt(vertex=v, parents=g.parents(v), table=tables[v][:, u]) for v in range(g.n))
        for u in range(k)
    )
    return MixtureModel(dag=g, k=k, weights=weights, cpts=cpts)


def separation_certificate(m: MixtureModel) -> float:
    """Smallest pairwise source gap over all CPT entries (inf for k = 1)."""
    if m.k == 1:
        return float("inf")
    worst = float("inf")
    for v in range(m.dag.n):
        stacked = np.stack([m.cpts[u][v].table for u in range(m.k)])
        gaps = np.abs(stacked[:, None, :] - stacked[None, :, :])
        iu = np.triu_indices(m.k, 1)
        worst = min(worst, float(gaps[iu].min()))
    return worst
