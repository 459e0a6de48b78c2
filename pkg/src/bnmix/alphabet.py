"""Reduction of d-valued networks to the binary pipeline via one-hot cliques.

Each d-valued vertex becomes a directed clique of d indicator bits; every
original edge becomes a complete bipartite block of edges.  Data is one-hot
encoded, the binary machinery runs unchanged, and the d-valued tables are
read back off the recovered binary model.

The ground-truth binary model induced by one-hot encoding is deterministic on
the clique bits, which violates the strict positivity the unzipping inversion
needs, so induced tables are smoothed into [eta, 1 - eta].
"""

from __future__ import annotations

import json
from dataclasses import dataclass
from typing import Sequence

import numpy as np

from .dag import Dag, validate_acyclic
from .model import Cpt, MixtureModel, ModelError

DEFAULT_ETA = 1e-7


class AlphabetError(ValueError):
    pass


class NonOneHotSupport(AlphabetError):
    pass


@dataclass(frozen=True)
class AlphabetSpec:
    """Uniform alphabet size d; original vertex i owns binary block [i*d, (i+1)*d)."""

    d: int
    n_original: int

    def __post_init__(self):
        if self.d < 2:
            raise AlphabetError("alphabet size must be at least 2")

    @property
    def n_binary(self) -> int:
        return self.d * self.n_original

    def bit(self, vertex: int, value: int) -> int:
        if not (0 <= value < self.d):
            raise AlphabetError(f"value {value} outside [0, {self.d})")
        return vertex * self.d + value

    def block(self, vertex: int) -> range:
        return range(vertex * self.d, (vertex + 1) * self.d)

    def owner(self, bit_index: int) -> tuple[int, int]:
        return divmod(bit_index, self.d)

    def to_json(self) -> str:
        return json.dumps({"d": self.d, "n_original": self.n_original}, sort_keys=True)

    @staticmethod
    def from_json(text: str) -> "AlphabetSpec":
        obj = json.loads(text)
        return AlphabetSpec(d=int(obj["d"]), n_original=int(obj["n_original"]))


def clique_reduction(g: Dag, d: int) -> tuple[Dag, AlphabetSpec]:
    """Binary DAG with intra-block cliques (by value order) plus bipartite blocks."""
    spec = AlphabetSpec(d=d, n_original=g.n)
    edges: list[tuple[int, int]] = []
    for i in range(g.n):
        for a in range(d):
            for b in range(a + 1, d):
                edges.append((spec.bit(i, a), spec.bit(i, b)))
    for parent, child in g.edges:
        for a in range(d):
            for b in range(d):
                edges.append((spec.bit(parent, a), spec.bit(child, b)))
    return validate_acyclic(edges, spec.n_binary), spec


def one_hot_encode_row(row: Sequence[int], spec: AlphabetSpec) -> np.ndarray:
    out = np.zeros(spec.n_binary, dtype=np.uint8)
    for i, value in enumerate(row):
        out[spec.bit(i, int(value))] = 1
    return out


def one_hot_decode_row(bits: Sequence[int], spec: AlphabetSpec) -> np.ndarray:
    bits = np.asarray(bits)
    out = np.zeros(spec.n_original, dtype=np.int64)
    for i in range(spec.n_original):
        block = bits[list(spec.block(i))]
        ones = np.flatnonzero(block)
        if len(ones) != 1:
            raise AlphabetError(f"block {i} is not one-hot: {block.tolist()}")
        out[i] = int(ones[0])
    return out


def one_hot_encode_rows(rows: np.ndarray, spec: AlphabetSpec) -> np.ndarray:
    rows = np.asarray(rows)
    out = np.zeros((rows.shape[0], spec.n_binary), dtype=np.uint8)
    for i in range(spec.n_original):
        for value in range(spec.d):
            out[:, spec.bit(i, value)] = rows[:, i] == value
    return out


# -- d-valued mixture models -------------------------------------------------


def dary_parent_mask(values: Sequence[int], d: int) -> int:
    mask = 0
    for j, v in enumerate(values):
        mask += int(v) * d**j
    return mask


@dataclass(frozen=True)
class DaryMixtureModel:
    """Mixture of d-valued networks; tables[u][v] has shape (d^|Pa(v)|, d)."""

    dag: Dag
    d: int
    k: int
    weights: np.ndarray
    tables: tuple[tuple[np.ndarray, ...], ...]

    def __post_init__(self):
        w = np.asarray(self.weights, dtype=float)
        if w.shape != (self.k,) or abs(float(w.sum()) - 1.0) > 1e-9:
            raise ModelError("weights must be a length-k vector summing to 1")
        object.__setattr__(self, "weights", w)
        for per_source in self.tables:
            for v, table in enumerate(per_source):
                want = (self.d ** len(self.dag.parents(v)), self.d)
                if table.shape != want:
                    raise ModelError(f"table at vertex {v} has shape {table.shape}, want {want}")

    def cpt_prob(self, u: int, v: int, value: int, parent_values: Sequence[int]) -> float:
        return float(self.tables[u][v][dary_parent_mask(parent_values, self.d), value])

    def event_probability(self, u: int, fixed: dict[int, int]) -> float:
        free = [v for v in range(self.dag.n) if v not in fixed]
        if self.d ** len(free) > 1 << 22:
            raise ModelError("enumeration too large")
        total = 0.0
        for idx in range(self.d ** len(free)):
            values = dict(fixed)
            rem = idx
            for v in free:
                values[v] = rem % self.d
                rem //= self.d
            p = 1.0
            for v in range(self.dag.n):
                pv = [values[q] for q in self.dag.parents(v)]
                p *= self.cpt_prob(u, v, values[v], pv)
            total += p
        return total

    def sample(self, count: int, seed: int) -> np.ndarray:
        rng = np.random.default_rng(seed)
        labels = rng.choice(self.k, size=count, p=self.weights)
        rows = np.zeros((count, self.dag.n), dtype=np.int64)
        for v in self.dag.topological_order():
            parents = self.dag.parents(v)
            mask = np.zeros(count, dtype=np.int64)
            scale = 1
            for q in parents:
                mask += rows[:, q] * scale
                scale *= self.d
            probs = np.stack([self.tables[u][v] for u in range(self.k)])[labels, mask]
            cdf = np.cumsum(probs, axis=1)
            draws = rng.random(count)[:, None]
            rows[:, v] = (draws >= cdf).sum(axis=1)
        return rows

    def to_json(self) -> str:
        doc = {
            "n": self.dag.n,
            "edges": [list(e) for e in self.dag.edges],
            "d": self.d,
            "k": self.k,
            "weights": [float(w) for w in self.weights],
            "tables": [
                [t.tolist() for t in per_source] for per_source in self.tables
            ],
        }
        return json.dumps(doc, sort_keys=True, indent=1)

    @staticmethod
    def from_json(text: str) -> "DaryMixtureModel":
        obj = json.loads(text)
        dag = Dag.build(int(obj["n"]), [(int(a), int(b)) for a, b in obj["edges"]])
        return DaryMixtureModel(
            dag=dag,
            d=int(obj["d"]),
            k=int(obj["k"]),
            weights=np.array(obj["weights"], dtype=float),
            tables=tuple(
                tuple(np.array(t, dtype=float) for t in per_source)
                for per_source in obj["tables"]
            ),
        )


def random_separated_dary(
    g: Dag,
    d: int,
    k: int,
    zeta: float,
    seed: int,
    margin: float = 0.05,
    max_tries: int = 10_000,
) -> DaryMixtureModel:
    """Random d-valued mixture with per-(vertex, parents, value) source gaps >= zeta."""
    rng = np.random.default_rng(seed)
    tables = []
    for v in range(g.n):
        rows = d ** len(g.parents(v))
        per_source = np.empty((k, rows, d))
        for mask in range(rows):
            for attempt in range(max_tries + 1):
                if attempt == max_tries:
                    raise ModelError(f"separation {zeta} unreachable at vertex {v}")
                draw = rng.dirichlet(np.ones(d), size=k)
                draw = np.clip(draw, margin, 1.0 - margin)
                draw /= draw.sum(axis=1, keepdims=True)
                if k == 1:
                    per_source[:, mask] = draw
                    break
                gaps = np.abs(draw[:, None, :] - draw[None, :, :])
                iu = np.triu_indices(k, 1)
                if gaps[iu].min() >= zeta:
                    per_source[:, mask] = draw
                    break
        tables.append(per_source)
    raw = rng.uniform(1.0, 2.0, size=k)
    return DaryMixtureModel(
        dag=g,
        d=d,
        k=k,
        weights=raw / raw.sum(),
        tables=tuple(
            tuple(tables[v][u] for v in range(g.n)) for u in range(k)
        ),
    )


def _decode_block(bits: Sequence[int]) -> int:
    """Value of a block pattern, repairing invalid patterns to the first set bit."""
    for c, b in enumerate(bits):
        if b == 1:
            return c
    return 0


def induced_binary_model(
    dm: DaryMixtureModel, eta: float = DEFAULT_ETA
) -> tuple[MixtureModel, Dag, AlphabetSpec]:
    """Binary ground truth equivalent to the d-valued model on one-hot support.

    The indicator for value b, given that no smaller value fired, is the
    stick-breaking ratio P(V = b | pa) / P(V >= b | pa).  Entries are smoothed
    into [eta, 1 - eta] and contexts with invalid (non-one-hot) parent blocks
    fall back to the repaired decoding, keeping every entry source-dependent.
    """
    wg, spec = clique_reduction(dm.dag, dm.d)
    d = dm.d
    cpts = []
    for u in range(dm.k):
        per_source = []
        for w in range(wg.n):
            i, b = spec.owner(w)
            parents = wg.parents(w)
            intra = [q for q in parents if spec.owner(q)[0] == i]
            orig_parents = dm.dag.parents(i)
            table = np.empty(2 ** len(parents))
            for mask in range(2 ** len(parents)):
                bits = {q: (mask >> j) & 1 for j, q in enumerate(parents)}
                if any(bits[q] for q in intra):
                    table[mask] = eta
                    continue
                parent_values = [
                    _decode_block([bits[spec.bit(j, c)] for c in range(d)])
                    for j in orig_parents
                ]
                pmask = dary_parent_mask(parent_values, d)
                row = dm.tables[u][i][pmask]
                tail = float(row[b:].sum())
                p = float(row[b]) / tail if tail > 0 else 1.0
                table[mask] = min(max(p, eta), 1.0 - eta)
            per_source.append(Cpt(vertex=w, parents=parents, table=table))
        cpts.append(tuple(per_source))
    binary = MixtureModel(dag=wg, k=dm.k, weights=dm.weights.copy(), cpts=tuple(cpts))
    return binary, wg, spec


def lift_parameters(
    binary_model: MixtureModel,
    spec: AlphabetSpec,
    g: Dag,
    lift_tol: float = 1e-6,
) -> DaryMixtureModel:
    """Read d-valued tables off a recovered binary model.

    For each source, vertex, one-hot parent context and value b, the lifted
    entry is the conditional probability of the block showing the one-hot
    pattern for b given the encoded parents; each d-entry column is then
    renormalized, absorbing the smoothing mass.  (Conditioning the indicator
    on its siblings being zero would be degenerate: the one-hot constraint
    forces the remaining indicator to fire, for every value.)  If the binary
    model leaves more than ``lift_tol`` of conditional block mass outside the
    one-hot patterns, it does not represent an encoded d-valued distribution
    and lifting refuses.
    """
    d = spec.d
    tables = []
    for u in range(binary_model.k):
        per_source = []
        for i in range(g.n):
            orig_parents = g.parents(i)
            rows = d ** len(orig_parents)
            table = np.empty((rows, d))
            for pmask in range(rows):
                rem = pmask
                context: dict[int, int] = {}
                for j in orig_parents:
                    value = rem % d
                    rem //= d
                    for c in range(d):
                        context[spec.bit(j, c)] = 1 if c == value else 0
                col = np.empty(d)
                for b in range(d):
                    block_pattern = {
                        spec.bit(i, c): 1 if c == b else 0 for c in range(d)
                    }
                    col[b] = binary_model.conditional(u, block_pattern, context)
                if 1.0 - col.sum() > lift_tol:
                    raise NonOneHotSupport(
                        f"source {u}, vertex {i}, parent mask {pmask}: "
                        f"{1.0 - col.sum():.3g} mass off the one-hot patterns"
                    )
                table[pmask] = col / col.sum()
            per_source.append(table)
        tables.append(tuple(per_source))
    return DaryMixtureModel(
        dag=g,
        d=d,
        k=binary_model.k,
        weights=binary_model.weights.copy(),
        tables=tuple(tables),
    )


def match_dary_sources(
    truth: DaryMixtureModel, rec: DaryMixtureModel
) -> tuple[tuple[int, ...], float]:
    """Best global permutation and its max-abs parameter error."""
    import itertools

    if truth.k != rec.k or truth.d != rec.d:
        raise ModelError("models have different shapes")
    flat_t = [
        np.concatenate([truth.tables[u][v].ravel() for v in range(truth.dag.n)])
        for u in range(truth.k)
    ]
    flat_r = [
        np.concatenate([rec.tables[u][v].ravel() for v in range(rec.dag.n)])
        for u in range(rec.k)
    ]
    best, best_err = None, float("inf")
    for perm in itertools.permutations(range(truth.k)):
        err = max(
            float(np.max(np.abs(flat_t[u] - flat_r[perm[u]]))) for u in range(truth.k)
        )
        err = max(err, float(np.max(np.abs(truth.weights - rec.weights[list(perm)]))))
        if err < best_err:
            best, best_err = perm, err
    assert best is not None
    return best, best_err
