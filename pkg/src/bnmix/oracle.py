"""Product-mixture oracle backends.

Each run hands the oracle a conditioned product-mixture instance; the oracle
returns per-source success probabilities for the independent variables plus
conditioned source weights, with source labels scrambled by an unknown
per-run permutation.  Three interchangeable backends realize the contract:

* ``ExactBackend``: enumerates the ground-truth model, then scrambles labels.
* ``NoisyBackend``: exact values under a bounded two-sided relative error.
* ``EmBackend``: post-selects samples on the conditioning event and fits a
  mixture of product Bernoullis by expectation-maximization.
"""

from __future__ import annotations

import hashlib
from dataclasses import dataclass, field
from typing import Mapping, Sequence

import numpy as np

from .model import MixtureModel, SampleSet
from .runs import Run, is_well_formed


class OracleFailure(RuntimeError):
    pass


class InsufficientSamples(OracleFailure):
    pass


@dataclass(frozen=True)
class OracleRequest:
    run: Run
    row_order: tuple[int, ...]

    @staticmethod
    def for_run(run: Run) -> "OracleRequest":
        return OracleRequest(run=run, row_order=run.independent)


@dataclass
class OracleOutput:
    m: np.ndarray  # shape (|I|, k): P(X_i = 1 | source, conditioning)
    pi: np.ndarray  # shape (k,): P(source | conditioning)
    converged: bool = True
    applied_permutation: tuple[int, ...] | None = field(default=None, repr=False)

    def __post_init__(self):
        self.m = np.asarray(self.m, dtype=float)
        self.pi = np.asarray(self.pi, dtype=float)
        if self.m.ndim != 2 or self.m.shape[1] != self.pi.shape[0]:
            raise OracleFailure(f"inconsistent oracle output shapes {self.m.shape}, {self.pi.shape}")
        if np.any(self.m < 0) or np.any(self.m > 1):
            raise OracleFailure("oracle matrix entries must lie in [0, 1]")
        if abs(float(self.pi.sum()) - 1.0) > 1e-9:
            raise OracleFailure(f"oracle weights sum to {self.pi.sum()!r}")


def oracle_solve(request: OracleRequest, backend, g=None) -> OracleOutput:
    if g is not None and not is_well_formed(g, request.run):
        raise OracleFailure(f"run {request.run.label or request.run.independent} is not well-formed")
    if request.row_order != request.run.independent:
        raise OracleFailure("row order must be the run's independent set, ascending")
    return backend.solve(request)


def _run_key(run: Run) -> int:
    digest = hashlib.sha256(
        (",".join(map(str, run.independent)) + "|" +
         ",".join(f"{v}={b}" for v, b in sorted(run.assignment.items()))).encode()
    ).digest()
    return int.from_bytes(digest[:8], "big")


def _event_key(assignment: Mapping[int, int]) -> int:
    digest = hashlib.sha256(
        ",".join(f"{v}={int(b)}" for v, b in sorted(assignment.items())).encode()
    ).digest()
    return int.from_bytes(digest[:8], "big")


class ExactBackend:
    """Enumerates the ground truth, then hides source identity per run.

    ``scramble=False`` keeps the true column order; useful when a test wants
    to exercise later pipeline stages in isolation.
    """

    def __init__(self, model: MixtureModel, scramble_seed: int, scramble: bool = True):
        self.model = model
        self.scramble_seed = scramble_seed
        self.scramble = scramble

    def solve(self, request: OracleRequest) -> OracleOutput:
        run = request.run
        given = dict(run.assignment)
        k = self.model.k
        m = np.column_stack(
            [
                self.model.conditional_profile(u, given, request.row_order)
                for u in range(k)
            ]
        )
        pi = self.model.source_posterior(given)
        if self.scramble:
            rng = np.random.default_rng([self.scramble_seed, _run_key(run)])
            perm = tuple(int(x) for x in rng.permutation(k))
        else:
            perm = tuple(range(k))
        return OracleOutput(
            m=m[:, list(perm)], pi=pi[list(perm)], applied_permutation=perm
        )

    def observe(self, assignment: Mapping[int, int]) -> float:
        return self.model.observe(assignment)


class NoisyBackend:
    """Exact values under independent relative perturbations of size ``eps``.

    Each matrix entry p moves by at most ``eps * min(p, 1 - p)`` so that both
    p and its complement keep relative error at most ``eps``; weights get a
    multiplicative (1 +- eps) factor and are renormalized, and observed event
    probabilities get the same multiplicative treatment.
    """

    def __init__(
        self,
        model: MixtureModel,
        eps: float,
        scramble_seed: int,
        noise_seed: int | None = None,
        scramble: bool = True,
    ):
        if eps < 0:
            raise OracleFailure("noise level must be nonnegative")
        self.exact = ExactBackend(model, scramble_seed, scramble=scramble)
        self.eps = eps
        self.noise_seed = noise_seed if noise_seed is not None else scramble_seed + 1

    def solve(self, request: OracleRequest) -> OracleOutput:
        out = self.exact.solve(request)
        if self.eps == 0:
            return out
        rng = np.random.default_rng([self.noise_seed, _run_key(request.run)])
        m = out.m + rng.uniform(-1.0, 1.0, out.m.shape) * self.eps * np.minimum(
            out.m, 1.0 - out.m
        )
        pi = out.pi * (1.0 + rng.uniform(-1.0, 1.0, out.pi.shape) * self.eps)
        return OracleOutput(
            m=np.clip(m, 0.0, 1.0),
            pi=pi / pi.sum(),
            applied_permutation=out.applied_permutation,
        )

    def observe(self, assignment: Mapping[int, int]) -> float:
        p = self.exact.observe(assignment)
        if self.eps == 0:
            return p
        rng = np.random.default_rng([self.noise_seed, 0x0B5E&0xFFFF, _event_key(assignment)])
        return float(p * (1.0 + rng.uniform(-1.0, 1.0) * self.eps))


class EmBackend:
    """Fits each conditioned instance from data by rejection plus EM.

    Rows matching the conditioning assignment are kept; the independent
    columns are then fit with a k-component mixture of product Bernoullis,
    best of ``restarts`` seeded initializations by log-likelihood.
    """

    def __init__(
        self,
        samples: SampleSet,
        k: int,
        restarts: int = 16,
        max_iters: int = 20_000,
        tol: float = 1e-12,
        min_postselect: int | None = None,
        seed: int = 0,
    ):
        self.samples = samples
        self.k = k
        self.restarts = restarts
        self.max_iters = max_iters
        self.tol = tol
        self.min_postselect = min_postselect
        self.seed = seed

    def _selection_mask(self, assignment: Mapping[int, int]) -> np.ndarray:
        rows = self.samples.rows
        mask = np.ones(rows.shape[0], dtype=bool)
        for v, b in assignment.items():
            mask &= rows[:, v] == b
        return mask

    def solve(self, request: OracleRequest) -> OracleOutput:
        run = request.run
        selected = self.samples.rows[self._selection_mask(run.assignment)]
        floor = self.min_postselect
        if floor is None:
            floor = 200 * self.k * len(request.row_order)
        if selected.shape[0] < max(floor, 1):
            raise InsufficientSamples(
                f"{selected.shape[0]} rows match the conditioning, need {floor}"
            )
        data = selected[:, list(request.row_order)].astype(np.uint8)
        patterns, counts = np.unique(data, axis=0, return_counts=True)
        rng = np.random.default_rng([self.seed, _run_key(run)])
        weights, theta, _, converged = em_product_bernoulli(
            patterns.astype(float),
            counts.astype(float),
            self.k,
            restarts=self.restarts,
            max_iters=self.max_iters,
            tol=self.tol,
            rng=rng,
        )
        return OracleOutput(m=theta.T.copy(), pi=weights, converged=converged)

    def observe(self, assignment: Mapping[int, int]) -> float:
        return float(self._selection_mask(assignment).mean())


def em_product_bernoulli(
    patterns: np.ndarray,
    counts: np.ndarray,
    k: int,
    restarts: int = 16,
    max_iters: int = 20_000,
    tol: float = 1e-12,
    rng: np.random.Generator | None = None,
):
    """EM on pattern counts for a k-mixture of product Bernoullis.

    ``tol`` applies to the per-sample (mean) log-likelihood improvement; the
    likelihood ridge of small product mixtures is flat enough that thousands
    of iterations are routinely needed, hence the generous default budget.
    Returns (weights, theta, mean log-likelihood history of the winning
    restart, converged flag).  The history is nondecreasing up to float slack.
    """
    if rng is None:
        rng = np.random.default_rng(0)
    patterns = np.asarray(patterns, dtype=float)
    counts = np.asarray(counts, dtype=float)
    total = counts.sum()
    if total <= 0:
        raise InsufficientSamples("empty pattern table")
    m = patterns.shape[1]
    best = None
    for _ in range(max(restarts, 1)):
        pick = rng.choice(len(counts), size=k, p=counts / total)
        theta = np.clip(
            patterns[pick] * 0.7 + 0.15 + rng.uniform(-0.1, 0.1, size=(k, m)),
            0.02,
            0.98,
        )
        weights = np.full(k, 1.0 / k)
        history = []
        converged = False
        for _ in range(max_iters):
            log_comp = np.log(weights)[None, :] + (
                patterns @ np.log(theta.T) + (1.0 - patterns) @ np.log(1.0 - theta.T)
            )
            row_max = log_comp.max(axis=1, keepdims=True)
            lse = row_max[:, 0] + np.log(np.exp(log_comp - row_max).sum(axis=1))
            ll = float(counts @ lse) / total
            history.append(ll)
            if len(history) > 1 and ll - history[-2] < tol:
                converged = True
                break
            resp = np.exp(log_comp - lse[:, None])
            nu = counts @ resp
            weights = np.clip(nu / total, 1e-12, None)
            weights = weights / weights.sum()
            theta = np.clip(
                (resp * counts[:, None]).T @ patterns / np.clip(nu, 1e-300, None)[:, None],
                1e-6,
                1.0 - 1e-6,
            )
        if best is None or history[-1] > best[2][-1]:
            best = (weights, theta, history, converged)
    return best
