"""Identification of finite mixtures of Bayesian network distributions.

Given a known DAG over binary observables and access to a mixture-of-product
oracle, the pipeline conditions on Markov boundaries to manufacture product
instances, aligns the oracle's per-run source labels, and inverts the
boundary-conditioned probabilities into per-source conditional tables.
"""

from .dag import BadVertexIndex, CycleDetected, Dag, DagError, NotEnoughCenters, find_centers, validate_acyclic
from .model import (
    Cpt,
    MixtureModel,
    SampleSet,
    random_separated_model,
    separation_certificate,
)
from .runs import (
    Run,
    RunCollection,
    alignment_variables,
    build_spanning_tree,
    conditioning_set,
    covers,
    is_good_collection,
    is_n_independent,
    is_well_formed,
    make_run,
)
from .build import build_generic, build_path
from .oracle import EmBackend, ExactBackend, NoisyBackend, OracleOutput, OracleRequest, oracle_solve
from .recover import (
    AlignedOutputs,
    RecoveredModel,
    SolveOptions,
    align,
    error_bound,
    evaluate,
    match_sources,
    recover_weights,
    solve_mixbnd,
    unzip,
)
from . import alphabet

__all__ = [
    "Dag", "DagError", "BadVertexIndex", "CycleDetected", "NotEnoughCenters",
    "validate_acyclic", "find_centers",
    "Cpt", "MixtureModel", "SampleSet", "random_separated_model", "separation_certificate",
    "Run", "RunCollection", "conditioning_set", "make_run", "is_well_formed",
    "is_n_independent", "covers", "alignment_variables", "build_spanning_tree",
    "is_good_collection",
    "build_generic", "build_path",
    "ExactBackend", "NoisyBackend", "EmBackend", "OracleOutput", "OracleRequest", "oracle_solve",
    "align", "unzip", "recover_weights", "solve_mixbnd", "error_bound",
    "evaluate", "match_sources", "AlignedOutputs", "RecoveredModel", "SolveOptions",
    "alphabet",
]
