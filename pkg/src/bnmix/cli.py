"""Batch command line: generate synthetic instances, solve them, evaluate recovery.

Exit codes: 0 on success, 2 for input problems (files, formats, graph
validation), 3 for pipeline failures (construction, oracle, alignment,
unzipping).  Failures print a one-line JSON error object to stderr.
"""

from __future__ import annotations

import argparse
import hashlib
import json
import sys
from pathlib import Path

import numpy as np

from . import alphabet as alpha
from .build import BuildError, ConstructionFailed, NotAPath, PathTooShort, build_generic, build_path
from .dag import Dag, DagError
from .model import MixtureModel, ModelError, SampleSet, random_separated_model
from .oracle import EmBackend, ExactBackend, NoisyBackend, OracleFailure
from .recover import RecoveredModel, RecoveryError, SolveOptions, evaluate, solve_mixbnd
from .runs import RunCollection, RunError


class InputError(Exception):
    pass


class PipelineError(Exception):
    pass


def derive_seed(seed: int, tag: str) -> int:
    digest = hashlib.sha256(f"{seed}:{tag}".encode()).digest()
    return int.from_bytes(digest[:8], "big") >> 1


def _read(path: str) -> str:
    try:
        return Path(path).read_text()
    except OSError as exc:
        raise InputError(f"cannot read {path}: {exc}") from exc


def _write(path: str, text: str) -> None:
    try:
        Path(path).write_text(text)
    except OSError as exc:
        raise InputError(f"cannot write {path}: {exc}") from exc


def _load_graph(path: str) -> Dag:
    try:
        return Dag.from_json(_read(path))
    except (DagError, json.JSONDecodeError, ValueError) as exc:
        raise InputError(f"bad graph file {path}: {exc}") from exc


def cmd_generate(args) -> int:
    g = _load_graph(args.graph)
    model_seed = derive_seed(args.seed, "model")
    sample_seed = derive_seed(args.seed, "samples")
    try:
        if args.alphabet_d:
            dary = alpha.random_separated_dary(g, args.alphabet_d, args.k, args.zeta, model_seed)
            _write(args.out, dary.to_json())
            if args.samples:
                rows = dary.sample(args.count, sample_seed)
                header = ",".join(f"v{i}" for i in range(g.n))
                body = "\n".join(",".join(str(int(x)) for x in row) for row in rows)
                _write(args.samples, header + "\n" + body + ("\n" if len(rows) else ""))
        else:
            model = random_separated_model(g, args.k, args.zeta, model_seed)
            _write(args.out, model.to_json())
            if args.samples:
                _write(args.samples, model.sample(args.count, sample_seed).to_csv())
    except ModelError as exc:
        raise PipelineError(str(exc)) from exc
    return 0


def _build_collection(g: Dag, mode: str, n_mp: int) -> RunCollection:
    if mode == "path":
        return build_path(g, n_mp)
    if mode == "generic":
        return build_generic(g, n_mp)
    try:
        return build_path(g, n_mp)
    except (NotAPath, PathTooShort):
        return build_generic(g, n_mp)


def _dump_runs(g: Dag, coll: RunCollection) -> str:
    lines = [f"runs {len(coll.runs)} root {coll.root}"]
    for i, run in enumerate(coll.runs):
        lines.append(f"{i:3d} {run.encoding(g.n)}  {run.label}")
    for parent, child, var in coll.tree:
        lines.append(f"edge {parent} -> {child} aligned at {var}")
    return "\n".join(lines)


def _diagnostics(g: Dag, coll: RunCollection, rec: RecoveredModel) -> dict:
    diag: dict = {
        "runs": coll.encodings(g.n),
        "alignment_permutations": [list(p) for p in rec.permutations],
        "warnings": rec.warnings,
        "max_crosscheck": rec.max_crosscheck(),
        "parameters": {},
    }
    for (v, mask), prov in sorted(rec.provenance.items()):
        entry = {
            "run": coll.runs[prov.run_index].encoding(g.n),
            "bottom": prov.bottom,
            "crosscheck": prov.crosscheck,
        }
        if rec.ledger is not None:
            entry["ell"] = rec.ledger.ell[v]
            entry["relative_bound"] = rec.ledger.bound_for(v)
        diag["parameters"][f"v{v}|mask{mask}"] = entry
    if rec.ledger is not None:
        diag["weight_bound"] = rec.ledger.weight_bound
        diag["weight_bound_hypothesis_met"] = rec.ledger.weight_hypothesis_met
        if rec.ledger.mixed_status:
            diag["mixed_status_vertices"] = rec.ledger.mixed_status
    return diag


def cmd_solve(args) -> int:
    g = _load_graph(args.graph)
    n_mp = args.n_mp if args.n_mp else max(3 * args.k - 3, 1)
    sep_tol = args.sep_tol if args.sep_tol is not None else (
        1e-2 if args.oracle == "em" else 1e-6
    )
    if args.alphabet_d:
        return _solve_dary(args, g, n_mp, sep_tol)

    if args.oracle in ("exact", "noisy"):
        if not args.model:
            raise InputError("--model is required for the exact and noisy oracles")
        try:
            model = MixtureModel.from_json(_read(args.model))
        except (ModelError, DagError, json.JSONDecodeError, KeyError) as exc:
            raise InputError(f"bad model file {args.model}: {exc}") from exc
        scramble = derive_seed(args.seed, "scramble")
        if args.oracle == "exact":
            backend = ExactBackend(model, scramble)
        else:
            backend = NoisyBackend(model, args.noise_eps, scramble, derive_seed(args.seed, "noise"))
    else:
        if not args.samples:
            raise InputError("--samples is required for the em oracle")
        try:
            samples = SampleSet.from_csv(_read(args.samples))
        except (ModelError, ValueError) as exc:
            raise InputError(f"bad samples file {args.samples}: {exc}") from exc
        backend = EmBackend(
            samples,
            args.k,
            restarts=args.em_restarts,
            min_postselect=args.min_postselect,
            seed=derive_seed(args.seed, "em"),
        )

    try:
        coll = _build_collection(g, args.runs, n_mp)
        if args.dump_runs:
            print(_dump_runs(g, coll))
        options = SolveOptions(
            sep_tol=sep_tol,
            jobs=args.jobs,
            n_mp=n_mp,
            bound_eps=args.noise_eps if args.oracle == "noisy" else None,
        )
        rec = solve_mixbnd(g, coll, backend, args.k, options)
    except (BuildError, DagError, RunError, RecoveryError, OracleFailure, ModelError) as exc:
        raise PipelineError(str(exc)) from exc

    doc = json.loads(rec.model.to_json())
    doc["diagnostics"] = _diagnostics(g, coll, rec)
    _write(args.out, json.dumps(doc, sort_keys=True, indent=1))
    return 0


def _solve_dary(args, g: Dag, n_mp: int, sep_tol: float) -> int:
    if args.oracle == "em":
        raise InputError("the em oracle does not support --alphabet-d yet")
    if not args.model:
        raise InputError("--model is required for the exact and noisy oracles")
    try:
        dary = alpha.DaryMixtureModel.from_json(_read(args.model))
    except (ModelError, DagError, json.JSONDecodeError, KeyError) as exc:
        raise InputError(f"bad model file {args.model}: {exc}") from exc
    if dary.d != args.alphabet_d:
        raise InputError(f"model alphabet {dary.d} does not match --alphabet-d {args.alphabet_d}")
    try:
        binary, wg, spec = alpha.induced_binary_model(dary)
        scramble = derive_seed(args.seed, "scramble")
        if args.oracle == "exact":
            backend = ExactBackend(binary, scramble)
        else:
            backend = NoisyBackend(binary, args.noise_eps, scramble, derive_seed(args.seed, "noise"))
        coll = build_generic(wg, n_mp)
        if args.dump_runs:
            print(_dump_runs(wg, coll))
        rec = solve_mixbnd(
            wg, coll, backend, args.k,
            SolveOptions(sep_tol=sep_tol, jobs=args.jobs, n_mp=n_mp),
        )
        lifted = alpha.lift_parameters(rec.model, spec, g, lift_tol=args.lift_tol)
    except (BuildError, DagError, RunError, RecoveryError, OracleFailure,
            ModelError, alpha.AlphabetError) as exc:
        raise PipelineError(str(exc)) from exc
    doc = json.loads(lifted.to_json())
    doc["diagnostics"] = _diagnostics(wg, coll, rec)
    _write(args.out, json.dumps(doc, sort_keys=True, indent=1))
    return 0


def cmd_eval(args) -> int:
    try:
        true_model = MixtureModel.from_json(_read(args.true))
        rec_model = MixtureModel.from_json(_read(args.recovered))
        report = evaluate(true_model, rec_model)
    except (ModelError, DagError, RecoveryError, json.JSONDecodeError, KeyError) as exc:
        raise InputError(str(exc)) from exc
    text = json.dumps(report.to_dict(), sort_keys=True, indent=1)
    if args.out:
        _write(args.out, text)
    print(text)
    return 0


def build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(
        prog="bnmix",
        description="Identify mixtures of Bayesian network distributions over a known DAG.",
    )
    sub = parser.add_subparsers(dest="command", required=True)

    gen = sub.add_parser("generate", help="write a random separated model (and samples)")
    gen.add_argument("--graph", required=True)
    gen.add_argument("--k", type=int, required=True)
    gen.add_argument("--zeta", type=float, default=0.1)
    gen.add_argument("--seed", type=int, default=0)
    gen.add_argument("--out", required=True)
    gen.add_argument("--samples", default=None)
    gen.add_argument("--count", type=int, default=0)
    gen.add_argument("--alphabet-d", type=int, default=0)
    gen.set_defaults(func=cmd_generate)

    solve = sub.add_parser("solve", help="run the identification pipeline")
    solve.add_argument("--graph", required=True)
    solve.add_argument("--k", type=int, required=True)
    solve.add_argument("--oracle", choices=["exact", "noisy", "em"], default="exact")
    solve.add_argument("--noise-eps", type=float, default=0.0)
    solve.add_argument("--runs", choices=["generic", "path", "auto"], default="auto")
    solve.add_argument("--model", default=None)
    solve.add_argument("--samples", default=None)
    solve.add_argument("--seed", type=int, default=0)
    solve.add_argument("--jobs", type=int, default=1)
    solve.add_argument("--dump-runs", action="store_true")
    solve.add_argument("--alphabet-d", type=int, default=0)
    solve.add_argument("--out", required=True)
    solve.add_argument("--sep-tol", type=float, default=None)
    solve.add_argument("--n-mp", type=int, default=0)
    solve.add_argument("--em-restarts", type=int, default=16)
    solve.add_argument("--min-postselect", type=int, default=None)
    solve.add_argument("--lift-tol", type=float, default=1e-6)
    solve.set_defaults(func=cmd_solve)

    ev = sub.add_parser("eval", help="compare a recovered model against the truth")
    ev.add_argument("--true", required=True)
    ev.add_argument("--recovered", required=True)
    ev.add_argument("--out", default=None)
    ev.set_defaults(func=cmd_eval)
    return parser


def main(argv=None) -> int:
    parser = build_parser()
    args = parser.parse_args(argv)
    try:
        return args.func(args)
    except InputError as exc:
        print(json.dumps({"error": "input", "message": str(exc)}), file=sys.stderr)
        return 2
    except PipelineError as exc:
        print(json.dumps({"error": "pipeline", "message": str(exc)}), file=sys.stderr)
        return 3


if __name__ == "__main__":
    sys.exit(main())
