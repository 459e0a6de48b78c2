"""Label alignment, Bayesian unzipping, weight recovery and end-to-end solving.

The pipeline for identifying the mixture from oracle outputs:

1. solve every run with a product-mixture backend,
2. undo the per-run label scrambles by walking the alignment spanning tree,
3. invert boundary-conditioned probabilities into parent-conditioned tables
   vertex by vertex in reverse topological order,
4. recover the unconditioned source weights through Bayes' rule on one run.

A stability ledger maps each recovered parameter to its provenance run and a
worst-case relative-error bound under oracle noise.
"""

from __future__ import annotations

import itertools
from concurrent.futures import ThreadPoolExecutor
from dataclasses import dataclass, field
from typing import Callable, Mapping, Sequence

import numpy as np

from .dag import Dag
from .model import Cpt, MixtureModel
from .oracle import OracleOutput, OracleRequest, oracle_solve
from .runs import RunCollection, alignment_variables, is_good_collection

DENOM_FLOOR = 1e-300


class RecoveryError(RuntimeError):
    pass


class NotSeparated(RecoveryError):
    def __init__(self, edge, vertex, gap):
        self.edge, self.vertex, self.gap = edge, vertex, gap
        super().__init__(
            f"alignment variable {vertex} on tree edge {edge} has source gap {gap:.3g}"
        )


class AmbiguousPermutation(RecoveryError):
    pass


class MissingCoverage(RecoveryError):
    def __init__(self, vertex, mask):
        self.vertex, self.mask = vertex, mask
        super().__init__(f"no run covers vertex {vertex} at parent mask {mask}")


class ZeroDenominator(RecoveryError):
    pass


class NotAGoodCollection(RecoveryError):
    pass


@dataclass
class AlignedOutputs:
    """Oracle outputs with columns permuted into one global source labeling."""

    outputs: list[OracleOutput]
    permutations: list[tuple[int, ...]]  # global label t maps to raw column perm[t]


def _permutation_candidates(k: int):
    return list(itertools.permutations(range(k)))


def _best_permutation(parent_rows: np.ndarray, child_rows: np.ndarray, k: int):
    """Permutation minimizing the max mismatch over the given row pairs.

    Rows are stacked (one per alignment variable); returns (perm, best,
    runner_up).  Exhaustive for k <= 8, minimum-cost assignment beyond.
    """
    parent_rows = np.atleast_2d(parent_rows)
    child_rows = np.atleast_2d(child_rows)
    if k <= 8:
        scored = []
        for perm in _permutation_candidates(k):
            mismatch = float(np.max(np.abs(parent_rows - child_rows[:, list(perm)])))
            scored.append((mismatch, perm))
        scored.sort(key=lambda t: (t[0], t[1]))
        best_m, best_p = scored[0]
        runner = scored[1][0] if len(scored) > 1 else float("inf")
        return best_p, best_m, runner
    from scipy.optimize import linear_sum_assignment

    cost = np.abs(parent_rows[:, :, None] - child_rows[:, None, :]).sum(axis=0)
    rows, cols = linear_sum_assignment(cost)
    perm = tuple(int(cols[list(rows).index(t)]) for t in range(k))
    best = float(np.max(np.abs(parent_rows - child_rows[:, list(perm)])))
    return perm, best, float("inf")


def align(
    g: Dag,
    coll: RunCollection,
    outputs: Sequence[OracleOutput],
    sep_tol: float = 1e-6,
) -> AlignedOutputs:
    """Undo per-run label scrambles along the spanning tree.

    For each tree edge the candidate alignment variables are tried in
    ascending order: the parent's aligned row must be pairwise separated by at
    least ``sep_tol``, and the winning permutation must beat the runner-up by
    at least ``sep_tol / 2``; otherwise the next candidate is tried.  When a
    tree edge is numerically dead (every shared variable unseparated under
    that conditioning), any other already-aligned run sharing a usable
    variable may vouch for the child instead; an error is raised only when no
    aligned partner can.
    """
    if len(outputs) != len(coll.runs):
        raise RecoveryError("one oracle output per run required")
    k = outputs[coll.root].pi.shape[0]
    aligned: list[OracleOutput | None] = [None] * len(outputs)
    perms: list[tuple[int, ...] | None] = [None] * len(outputs)
    aligned[coll.root] = outputs[coll.root]
    perms[coll.root] = tuple(range(k))

    tree_parent = {child: parent for parent, child, _ in coll.tree}
    last_error: RecoveryError | None = None
    while any(a is None for a in aligned):
        progressed = False
        for child in range(len(outputs)):
            if aligned[child] is not None:
                continue
            # The structural tree edge is tried first; when it is numerically
            # unusable (unseparated or ambiguous rows) any other already
            # aligned partner may vouch for this run instead.
            partners = []
            if tree_parent.get(child) is not None and aligned[tree_parent[child]] is not None:
                partners.append(tree_parent[child])
            partners.extend(
                i for i in range(len(outputs))
                if aligned[i] is not None and i not in partners
            )
            perm = None
            for parent in partners:
                try:
                    perm = _align_edge(
                        g, coll, aligned[parent], outputs[child],
                        (parent, child, -1), sep_tol, k,
                    )
                    break
                except RecoveryError as exc:
                    last_error = exc
            if perm is None:
                continue
            perms[child] = perm
            aligned[child] = OracleOutput(
                m=outputs[child].m[:, list(perm)],
                pi=outputs[child].pi[list(perm)],
                converged=outputs[child].converged,
                applied_permutation=outputs[child].applied_permutation,
            )
            progressed = True
        if not progressed:
            raise last_error or RecoveryError("no run could be aligned to the root")
    return AlignedOutputs(outputs=aligned, permutations=perms)  # type: ignore[arg-type]


def _align_edge(g, coll, parent_out, child_raw, edge, sep_tol, k):
    """Permutation for one edge, pooled over every separated shared variable.

    Each candidate variable must pass the separation gate on the parent's
    aligned row; the permutation then minimizes the max mismatch jointly over
    all gate-passing rows.  Pooling leaves exact oracles untouched (all rows
    agree on the permutation) and makes noisy backends far harder to flip
    with a single badly estimated row.
    """
    parent_idx, child_idx, _ = edge
    run_p = coll.runs[parent_idx]
    run_c = coll.runs[child_idx]
    candidates = alignment_variables(g, run_p, run_c)
    first_error: RecoveryError | None = None
    p_rows, c_rows = [], []
    for x in candidates:
        p_row = parent_out.m[run_p.row_index(x)]
        gap = _min_gap(p_row)
        if gap < sep_tol:
            if first_error is None:
                first_error = NotSeparated((parent_idx, child_idx), x, gap)
            continue
        p_rows.append(p_row)
        c_rows.append(child_raw.m[run_c.row_index(x)])
    if p_rows:
        perm, best, runner = _best_permutation(np.array(p_rows), np.array(c_rows), k)
        if runner - best >= sep_tol / 2:
            return perm
        if first_error is None:
            first_error = AmbiguousPermutation(
                f"edge ({parent_idx}, {child_idx}): "
                f"mismatch {best:.3g} vs runner-up {runner:.3g}"
            )
    if first_error is None:
        first_error = RecoveryError(
            f"no structural alignment variable on edge ({parent_idx}, {child_idx})"
        )
    raise first_error


def _min_gap(row: np.ndarray) -> float:
    if row.shape[0] < 2:
        return float("inf")
    srt = np.sort(row)
    return float(np.min(np.diff(srt)))


@dataclass
class ParameterProvenance:
    run_index: int
    bottom: bool
    crosscheck: float = 0.0  # max discrepancy against other covering runs


def unzip(
    g: Dag,
    coll: RunCollection,
    aligned: AlignedOutputs,
) -> tuple[list[list[np.ndarray]], dict[tuple[int, int], ParameterProvenance]]:
    """Recover per-source conditional tables in reverse topological order.

    Bottom occurrences supply the parent-conditioned probability directly.
    A non-bottom occurrence in run ``a`` is inverted through

        P(y=1 | pa) = M * c0 / (M * c0 + (1 - M) * c1)

    where M is the aligned oracle row for y and ``cb`` multiplies, over the
    children of y, the already-recovered probability of the child taking its
    conditioned value when y is set to b and the child's other parents take
    their conditioned values.  The first covering run in collection order
    supplies the value; other covering runs feed a cross-check diagnostic.
    """
    k = aligned.outputs[coll.root].pi.shape[0]
    n = g.n
    tables: list[list[np.ndarray]] = [
        [np.full(2 ** len(g.parents(v)), np.nan) for v in range(n)] for _ in range(k)
    ]
    provenance: dict[tuple[int, int], ParameterProvenance] = {}

    covering: dict[int, list[tuple[int, int]]] = {v: [] for v in range(n)}
    for idx, run in enumerate(coll.runs):
        for v in run.independent:
            mask = 0
            for j, p in enumerate(g.parents(v)):
                mask |= (int(run.assignment[p]) & 1) << j
            covering[v].append((idx, mask))

    for v in reversed(g.topological_order()):
        for mask in range(2 ** len(g.parents(v))):
            suppliers = [idx for idx, m in covering[v] if m == mask]
            if not suppliers:
                raise MissingCoverage(v, mask)
            lead = suppliers[0]
            worst = 0.0
            for u in range(k):
                value = _recover_entry(g, coll, aligned, tables, u, v, lead)
                tables[u][v][mask] = value
                for other in suppliers[1:]:
                    alt = _recover_entry(g, coll, aligned, tables, u, v, other)
                    worst = max(worst, abs(alt - value))
            provenance[(v, mask)] = ParameterProvenance(
                run_index=lead,
                bottom=coll.runs[lead].is_bottom(v),
                crosscheck=worst,
            )
    return tables, provenance


def _recover_entry(g, coll, aligned, tables, u, v, run_idx):
    run = coll.runs[run_idx]
    m_row = float(aligned.outputs[run_idx].m[run.row_index(v), u])
    if run.is_bottom(v):
        return m_row
    c1 = _children_factor(g, run, tables, u, v, 1)
    c0 = _children_factor(g, run, tables, u, v, 0)
    num = m_row * c0
    den = num + (1.0 - m_row) * c1
    if den < DENOM_FLOOR:
        raise ZeroDenominator(
            f"vertex {v}, source {u}, run {run.label or run_idx}: denominator underflow"
        )
    return num / den


def _children_factor(g, run, tables, u, v, y_bit):
    factor = 1.0
    for child in g.children(v):
        child_value = int(run.assignment[child])
        mask = 0
        for j, q in enumerate(g.parents(child)):
            bit = y_bit if q == v else int(run.assignment[q])
            mask |= (bit & 1) << j
        p1 = tables[u][child][mask]
        if np.isnan(p1):
            raise RecoveryError(
                f"parameter of child {child} needed before it was recovered"
            )
        factor *= p1 if child_value == 1 else 1.0 - p1
    return factor


def recovered_event_probability(
    g: Dag, tables_u: Sequence[np.ndarray], fixed: Mapping[int, int]
) -> float:
    """P(fixed) under one source's recovered tables, marginalizing ancestors.

    Only ancestors of the fixed set can influence it, so enumeration runs over
    ``An(fixed)`` alone.
    """
    anc = g.ancestors(fixed.keys())
    vertices = sorted(set(anc) | set(fixed.keys()))
    free = [v for v in vertices if v not in fixed]
    total = 0.0
    for idx in range(2 ** len(free)):
        values = dict(fixed)
        for j, v in enumerate(free):
            values[v] = (idx >> j) & 1
        p = 1.0
        for v in vertices:
            mask = 0
            for j, q in enumerate(g.parents(v)):
                mask |= (values[q] & 1) << j
            p1 = float(tables_u[v][mask])
            p *= p1 if values[v] == 1 else 1.0 - p1
        total += p
    return total


def recover_weights(
    g: Dag,
    coll: RunCollection,
    aligned: AlignedOutputs,
    tables: Sequence[Sequence[np.ndarray]],
    observe: Callable[[Mapping[int, int]], float],
) -> np.ndarray:
    """Source weights via Bayes' rule on the root run.

    P(u) is proportional to P(u | cond) * P(cond) / P(cond | u); the first
    factor is the aligned oracle weight vector, the second comes from the
    observation provider, the third from the recovered tables.  The result is
    renormalized.
    """
    root_run = coll.runs[coll.root]
    cond = dict(root_run.assignment)
    pi = aligned.outputs[coll.root].pi
    k = pi.shape[0]
    p_cond = float(observe(cond))
    weights = np.empty(k)
    for u in range(k):
        p_cond_u = recovered_event_probability(g, tables[u], cond)
        if p_cond_u < DENOM_FLOOR:
            raise ZeroDenominator(f"P(cond | source {u}) underflows")
        weights[u] = pi[u] * p_cond / p_cond_u
    total = weights.sum()
    if total <= 0:
        raise ZeroDenominator("all posterior weights vanished")
    return weights / total


@dataclass
class BoundLedger:
    """Worst-case relative error bounds for a given oracle noise level."""

    eps: float
    delta: int  # max skeleton degree
    ell: dict[int, int]  # unzipping recursion depth per vertex
    parameter_bound: dict[int, float]  # per vertex
    weight_bound: float
    weight_hypothesis_met: bool  # conditioning size below 2 * delta^2
    mixed_status: list[int] = field(default_factory=list)

    def bound_for(self, vertex: int) -> float:
        return self.parameter_bound[vertex]


def error_bound(g: Dag, coll: RunCollection, eps: float) -> BoundLedger:
    """Propagation bounds: (6 * (delta + 1))^ell * eps per parameter, 5 * delta^2 * eps for weights.

    ``ell`` is 0 for vertices recovered directly from bottom occurrences (and
    for childless vertices, whose inversion is the identity); otherwise one
    more than the largest ``ell`` among children.
    """
    delta = g.max_skeleton_degree()
    status: dict[int, set[bool]] = {}
    for run in coll.runs:
        for v in run.independent:
            status.setdefault(v, set()).add(run.is_bottom(v))
    mixed = sorted(v for v, s in status.items() if len(s) > 1)
    bottom_covered = {v for v, s in status.items() if s == {True}}

    ell: dict[int, int] = {}
    for v in reversed(g.topological_order()):
        if v in bottom_covered or not g.children(v):
            ell[v] = 0
        else:
            ell[v] = 1 + max(ell[c] for c in g.children(v))
    base = 6 * (delta + 1)
    param_bound = {v: (base ** ell[v]) * eps for v in range(g.n)}
    root_cond = len(coll.runs[coll.root].assignment)
    return BoundLedger(
        eps=eps,
        delta=delta,
        ell=ell,
        parameter_bound=param_bound,
        weight_bound=5.0 * delta**2 * eps,
        weight_hypothesis_met=root_cond < 2 * delta**2,
        mixed_status=mixed,
    )


@dataclass
class RecoveredModel:
    model: MixtureModel
    permutations: list[tuple[int, ...]]
    provenance: dict[tuple[int, int], ParameterProvenance]
    ledger: BoundLedger | None = None
    warnings: list[str] = field(default_factory=list)

    def max_crosscheck(self) -> float:
        return max((p.crosscheck for p in self.provenance.values()), default=0.0)


@dataclass
class SolveOptions:
    sep_tol: float = 1e-6
    jobs: int = 1
    require_good: bool = True
    n_mp: int | None = None
    depth_cap: int | None = None
    bound_eps: float | None = None


def solve_mixbnd(
    g: Dag,
    coll: RunCollection,
    backend,
    k: int,
    options: SolveOptions | None = None,
) -> RecoveredModel:
    """Run the full pipeline: oracle per run, align, unzip, weights, diagnostics."""
    options = options or SolveOptions()
    if options.require_good:
        n_mp = options.n_mp if options.n_mp is not None else min(
            len(r.independent) for r in coll.runs
        )
        report = is_good_collection(g, coll, n_mp, options.depth_cap)
        if not report.ok:
            raise NotAGoodCollection(report.summary())

    requests = [OracleRequest.for_run(r) for r in coll.runs]

    def solve_one(idx: int) -> OracleOutput:
        try:
            return oracle_solve(requests[idx], backend, g)
        except Exception as exc:
            raise RecoveryError(
                f"oracle failed on run {coll.runs[idx].label or idx} "
                f"[{coll.runs[idx].encoding(g.n)}]: {exc}"
            ) from exc

    if options.jobs > 1:
        with ThreadPoolExecutor(max_workers=options.jobs) as pool:
            outputs = list(pool.map(solve_one, range(len(coll.runs))))
    else:
        outputs = [solve_one(i) for i in range(len(coll.runs))]

    warnings = [
        f"run {coll.runs[i].label or i}: oracle did not converge"
        for i, out in enumerate(outputs)
        if not out.converged
    ]
    aligned = align(g, coll, outputs, sep_tol=options.sep_tol)
    tables, provenance = unzip(g, coll, aligned)
    weights = recover_weights(g, coll, aligned, tables, backend.observe)
    cpts = tuple(
        tuple(Cpt(vertex=v, parents=g.parents(v), table=tables[u][v]) for v in range(g.n))
        for u in range(len(weights))
    )
    model = MixtureModel(dag=g, k=len(weights), weights=weights, cpts=cpts)
    ledger = (
        error_bound(g, coll, options.bound_eps)
        if options.bound_eps is not None
        else None
    )
    return RecoveredModel(
        model=model,
        permutations=aligned.permutations,
        provenance=provenance,
        ledger=ledger,
        warnings=warnings,
    )


# -- evaluation ------------------------------------------------------------


@dataclass
class EvalReport:
    permutation: tuple[int, ...]
    max_abs_cpt: float
    mean_abs_cpt: float
    max_rel_cpt: float
    max_abs_weight: float
    max_rel_weight: float
    within_bounds: bool | None = None
    bound_violations: list[str] = field(default_factory=list)

    def to_dict(self) -> dict:
        return {
            "permutation": list(self.permutation),
            "max_abs_cpt": self.max_abs_cpt,
            "mean_abs_cpt": self.mean_abs_cpt,
            "max_rel_cpt": self.max_rel_cpt,
            "max_abs_weight": self.max_abs_weight,
            "max_rel_weight": self.max_rel_weight,
            "within_bounds": self.within_bounds,
            "bound_violations": self.bound_violations,
        }


def _flatten(model: MixtureModel, u: int) -> np.ndarray:
    return np.concatenate([model.cpts[u][v].table for v in range(model.dag.n)])


def match_sources(true_model: MixtureModel, rec: MixtureModel) -> tuple[int, ...]:
    """Global source permutation minimizing the max-abs parameter error."""
    if true_model.k != rec.k or true_model.dag.edges != rec.dag.edges:
        raise RecoveryError("models have different shapes")
    k = true_model.k
    true_flat = [_flatten(true_model, u) for u in range(k)]
    rec_flat = [_flatten(rec, u) for u in range(k)]
    best_perm, best_err = None, float("inf")
    for perm in itertools.permutations(range(k)):
        err = max(
            float(np.max(np.abs(true_flat[u] - rec_flat[perm[u]]))) for u in range(k)
        )
        err = max(
            err,
            float(np.max(np.abs(true_model.weights - rec.weights[list(perm)]))),
        )
        if err < best_err:
            best_perm, best_err = perm, err
    assert best_perm is not None
    return best_perm


def evaluate(
    true_model: MixtureModel,
    rec: MixtureModel,
    ledger: BoundLedger | None = None,
) -> EvalReport:
    perm = match_sources(true_model, rec)
    k = true_model.k
    abs_errs, rel_errs = [], []
    violations: list[str] = []
    for u in range(k):
        for v in range(true_model.dag.n):
            t = true_model.cpts[u][v].table
            r = rec.cpts[perm[u]][v].table
            for mask in range(t.shape[0]):
                for t_val, r_val in ((t[mask], r[mask]), (1 - t[mask], 1 - r[mask])):
                    a = abs(float(t_val) - float(r_val))
                    abs_errs.append(a)
                    rel = a / float(t_val)
                    rel_errs.append(rel)
                    if ledger is not None and rel > ledger.bound_for(v):
                        violations.append(
                            f"vertex {v} source {u} mask {mask}: "
                            f"rel {rel:.3g} > bound {ledger.bound_for(v):.3g}"
                        )
    w_abs = np.abs(true_model.weights - rec.weights[list(perm)])
    w_rel = w_abs / true_model.weights
    if ledger is not None:
        for u in range(k):
            if w_rel[u] > ledger.weight_bound:
                violations.append(
                    f"weight {u}: rel {w_rel[u]:.3g} > bound {ledger.weight_bound:.3g}"
                )
    return EvalReport(
        permutation=perm,
        max_abs_cpt=float(np.max(abs_errs)),
        mean_abs_cpt=float(np.mean(abs_errs)),
        max_rel_cpt=float(np.max(rel_errs)),
        max_abs_weight=float(np.max(w_abs)),
        max_rel_weight=float(np.max(w_rel)),
        within_bounds=(not violations) if ledger is not None else None,
        bound_violations=violations,
    )
