"""Command-line front end.

Subcommands cover the full pipeline: synthesize clients, ingest raw CSVs,
estimate the mixture, select the component count, partition a central pool
into simulated clients, export histograms, and score fitted parameters
against ground truth.

Every command that uses randomness requires an explicit --seed; nothing
falls back to wall-clock entropy. Each run writes a manifest JSON next to
its primary output recording the command line, seeds, inputs, outputs, and
library versions. Identical command lines over identical input files
produce byte-identical outputs.

Exit codes: 0 success, 1 usage errors, 2 data or contract errors, 3 numeric
failures.
"""

from __future__ import annotations

import argparse
import json
import platform
import sys

import numpy as np

from . import __version__
from .errors import MdmError, NumericError
from .federation import ClientPopulation
from .inference import InferenceConfig, fit
from .ingestion import BinningSpec, RecordTable, build_central_pool, build_clients
from .metrics import align_and_score
from .model import params_from_json, params_to_json
from .partition import (
    PartitionPlan,
    export_histograms,
    partition_conditionally_iid,
    partition_fully_iid,
    partition_mdm,
)
from .presets import get_preset, preset_names
from .rng import RngHandle
from .sampling import gen_synthetic_federation
from .selection import select_k

__all__ = ["run", "main"]


class UsageError(Exception):
    """Bad command line; maps to exit code 1."""


class _Parser(argparse.ArgumentParser):
    def error(self, message):
        raise UsageError(message)


def _read_params(path):
    with open(path, "r", encoding="utf-8") as fh:
        return params_from_json(fh.read())


def _write_params(path, params) -> None:
    with open(path, "w", encoding="utf-8") as fh:
        fh.write(params_to_json(params))


def _float_cell(x: float) -> str:
    return repr(float(x))


def _write_manifest(args, argv, inputs: dict, outputs: dict) -> None:
    """Write <primary-output>.manifest.json; the first output is primary."""
    skip = {"func", "command"}
    config = {
        k: (str(v) if k in inputs or k in outputs else v)
        for k, v in sorted(vars(args).items())
        if k not in skip
    }
    doc = {
        "command": args.command,
        "argv": list(argv),
        "seed": getattr(args, "seed", None),
        "stream": getattr(args, "stream", None),
        "inputs": {k: str(v) for k, v in inputs.items()},
        "outputs": {k: str(v) for k, v in outputs.items()},
        "config": config,
        "versions": {
            "package": __version__,
            "numpy": np.__version__,
            "python": platform.python_version(),
        },
    }
    primary = next(iter(outputs.values()))
    with open(str(primary) + ".manifest.json", "w", encoding="utf-8") as fh:
        json.dump(doc, fh, indent=2, default=str)
        fh.write("\n")


def _check_distinct_paths(inputs: dict, outputs: dict) -> None:
    read = {str(v) for v in inputs.values() if v}
    for name, path in outputs.items():
        if path and str(path) in read:
            raise UsageError(f"--{name.replace('_', '-')} would overwrite an input file")


def _finish(args, argv, inputs: dict, outputs: dict) -> None:
    outputs = {k: v for k, v in outputs.items() if v}
    _write_manifest(args, argv, {k: v for k, v in inputs.items() if v}, outputs)


# --- subcommand handlers ----------------------------------------------------


def _cmd_gen_synthetic(args, argv) -> None:
    if (args.preset is None) == (args.params is None):
        raise UsageError("pass exactly one of --preset and --params")
    inputs = {"params": args.params}
    outputs = {
        "out": args.out,
        "labels_out": args.labels_out,
        "params_out": args.params_out,
    }
    _check_distinct_paths(inputs, outputs)
    if args.preset is not None:
        params = get_preset(args.preset, n_per_component=args.n_per_component)
    else:
        params = _read_params(args.params)
    rng = RngHandle(seed=args.seed, stream=args.stream)
    records, labels = gen_synthetic_federation(params, args.clients, rng)
    ClientPopulation(records).to_jsonl(args.out)
    if args.labels_out:
        with open(args.labels_out, "w", encoding="utf-8") as fh:
            fh.write("client_index,component\n")
            for i, k in enumerate(labels):
                fh.write(f"{i},{int(k)}\n")
    if args.params_out:
        _write_params(args.params_out, params)
    _finish(args, argv, inputs, outputs)


def _cmd_ingest(args, argv) -> None:
    inputs = {"csv": args.csv, "binning": args.binning}
    outputs = {"out": args.out}
    _check_distinct_paths(inputs, outputs)
    table = RecordTable.from_csv(args.csv)
    spec = BinningSpec.from_json_file(args.binning)
    build_clients(table, spec).to_jsonl(args.out)
    _finish(args, argv, inputs, outputs)


def _inference_config(args, n_components: int) -> InferenceConfig:
    return InferenceConfig(
        n_components=n_components,
        n_rounds=args.rounds,
        init_cohort_size=args.init_cohort_size,
        em_cohort_size=args.cohort_size,
        alpha_floor=args.alpha_floor,
        degenerate_policy=args.degenerate_policy,
        init_scale_mode=args.init_scale_mode,
        aggregation="per_client" if args.deterministic else "fused",
        track_loglik=getattr(args, "track_loglik", False) or bool(getattr(args, "trace", None)),
        early_stop_tol=args.early_stop_tol,
        early_stop_patience=args.early_stop_patience,
    )


def _cmd_infer(args, argv) -> None:
    inputs = {"population": args.population, "truth": args.truth}
    outputs = {"out": args.out, "trace": args.trace}
    _check_distinct_paths(inputs, outputs)
    pop = ClientPopulation.from_jsonl(args.population)
    cfg = _inference_config(args, args.k)
    params, trace = fit(pop, cfg, RngHandle(seed=args.seed, stream=args.stream))
    _write_params(args.out, params)
    if args.trace:
        truth = _read_params(args.truth) if args.truth else None
        header = ["round", "loglik"]
        if truth is not None:
            header += ["nmse_tau", "nmse_alpha", "nmse_pi"]
        with open(args.trace, "w", encoding="utf-8") as fh:
            fh.write(",".join(header) + "\n")
            for t, snapshot in enumerate(trace.params_history):
                cells = [str(t), _float_cell(trace.loglik_history[t])]
                if truth is not None:
                    rep = align_and_score(snapshot, truth)
                    cells += [
                        _float_cell(rep.nmse_tau),
                        _float_cell(rep.nmse_alpha),
                        _float_cell(rep.nmse_pi),
                    ]
                fh.write(",".join(cells) + "\n")
    _finish(args, argv, inputs, outputs)


def _parse_candidates(text: str) -> list[int]:
    try:
        ks = [int(part) for part in text.split(",") if part.strip() != ""]
    except ValueError:
        raise UsageError(f"--candidates must be comma-separated integers, got {text!r}") from None
    if not ks:
        raise UsageError("--candidates must name at least one component count")
    return ks


def _cmd_select_k(args, argv) -> None:
    inputs = {"population": args.population, "val_population": args.val_population}
    outputs = {"out": args.out, "csv": args.csv, "params_out": args.params_out}
    _check_distinct_paths(inputs, outputs)
    if (args.val_cohort_size is None) == (args.val_population is None):
        raise UsageError("pass exactly one of --val-cohort-size and --val-population")
    pop = ClientPopulation.from_jsonl(args.population)
    val_pop = (
        ClientPopulation.from_jsonl(args.val_population) if args.val_population else None
    )
    candidates = _parse_candidates(args.candidates)
    report = select_k(
        pop,
        candidates,
        _inference_config(args, 1),
        RngHandle(seed=args.seed, stream=args.stream),
        val_cohort_size=args.val_cohort_size,
        val_pop=val_pop,
        tie_tolerance=args.tie_tolerance,
        n_threads=args.threads,
    )
    doc = {
        "chosen_k": report.chosen,
        "tie_tolerance": report.tie_tolerance,
        "candidates": [
            {"k": cand.n_components, "mean_val_loglik": cand.mean_val_loglik}
            for cand in report.candidates
        ],
    }
    with open(args.out, "w", encoding="utf-8") as fh:
        json.dump(doc, fh, indent=2)
        fh.write("\n")
    if args.csv:
        with open(args.csv, "w", encoding="utf-8") as fh:
            fh.write("k,mean_val_loglik\n")
            for cand in report.candidates:
                fh.write(f"{cand.n_components},{_float_cell(cand.mean_val_loglik)}\n")
    if args.params_out:
        _write_params(args.params_out, report.chosen_params)
    _finish(args, argv, inputs, outputs)


def _cmd_partition(args, argv) -> None:
    inputs = {
        "csv": args.csv,
        "binning": args.binning,
        "params": args.params,
        "population": args.population,
    }
    outputs = {"out": args.out}
    _check_distinct_paths(inputs, outputs)
    table = RecordTable.from_csv(args.csv)
    spec = BinningSpec.from_json_file(args.binning)
    pool = build_central_pool(table, spec)
    rng = RngHandle(seed=args.seed, stream=args.stream)
    generator = args.generator.replace("-", "_")
    if generator == "mdm":
        if args.params is None:
            raise UsageError("--generator mdm requires --params")
        if args.clients is None:
            raise UsageError("--generator mdm requires --clients")
        plan = partition_mdm(pool, _read_params(args.params), args.clients, rng)
    elif generator == "fully_iid":
        if args.population is None:
            raise UsageError("--generator fully-iid requires --population (for its count distribution)")
        if args.clients is None:
            raise UsageError("--generator fully-iid requires --clients")
        pop = ClientPopulation.from_jsonl(args.population)
        ns, freq = np.unique(pop.ns, return_counts=True)
        n_dist = {int(n): float(f) / pop.num_clients for n, f in zip(ns, freq)}
        plan = partition_fully_iid(pool, n_dist, args.clients, rng)
    else:
        if args.population is None:
            raise UsageError("--generator conditionally-iid requires --population")
        pop = ClientPopulation.from_jsonl(args.population)
        plan = partition_conditionally_iid(pool, pop, rng)
    plan.to_jsonl(args.out)
    _finish(args, argv, inputs, outputs)


def _cmd_export_histograms(args, argv) -> None:
    if (args.population is None) == (args.plan is None):
        raise UsageError("pass exactly one of --population and --plan")
    inputs = {"population": args.population, "plan": args.plan}
    outputs = {"out": args.out}
    _check_distinct_paths(inputs, outputs)
    if args.population:
        source = ClientPopulation.from_jsonl(args.population)
    else:
        source = PartitionPlan.from_jsonl(args.plan)
    matrix = export_histograms(source)
    with open(args.out, "w", encoding="utf-8") as fh:
        fh.write(",".join(f"cat_{l}" for l in range(matrix.shape[1])) + "\n")
        for row in matrix:
            fh.write(",".join(_float_cell(v) for v in row) + "\n")
    _finish(args, argv, inputs, outputs)


def _cmd_eval(args, argv) -> None:
    inputs = {"fitted": args.fitted, "truth": args.truth}
    outputs = {"out": args.out}
    _check_distinct_paths(inputs, outputs)
    report = align_and_score(_read_params(args.fitted), _read_params(args.truth))
    perm = ";".join(str(p) for p in report.permutation)
    print(f"nmse_tau={_float_cell(report.nmse_tau)}")
    print(f"nmse_alpha={_float_cell(report.nmse_alpha)}")
    print(f"nmse_pi={_float_cell(report.nmse_pi)}")
    print(f"permutation={perm}")
    if args.out:
        with open(args.out, "w", encoding="utf-8") as fh:
            fh.write("nmse_tau,nmse_alpha,nmse_pi,permutation\n")
            fh.write(
                f"{_float_cell(report.nmse_tau)},{_float_cell(report.nmse_alpha)},"
                f"{_float_cell(report.nmse_pi)},{perm}\n"
            )
        _finish(args, argv, inputs, outputs)


# --- parser -----------------------------------------------------------------


def _add_seed(p) -> None:
    p.add_argument("--seed", type=int, required=True, help="RNG seed (mandatory; no entropy default)")
    p.add_argument("--stream", type=int, default=0, help="RNG stream within the seed (default 0)")


def _add_inference_flags(p) -> None:
    p.add_argument("--rounds", type=int, default=100, help="number of estimation rounds (default 100)")
    p.add_argument("--init-cohort-size", type=int, default=None,
                   help="initialization cohort size (default: full population)")
    p.add_argument("--cohort-size", type=int, default=None, dest="cohort_size",
                   help="per-round cohort size (default: full population)")
    p.add_argument("--alpha-floor", type=float, default=1e-8,
                   help="lower bound applied to every concentration entry (default 1e-8)")
    p.add_argument("--degenerate-policy", choices=("skip", "error"), default="skip",
                   help="what to do with clients no component supports (default skip)")
    p.add_argument("--init-scale-mode", choices=("averaged", "first_category"), default="averaged",
                   help="moment-matching scale estimate (default averaged)")
    p.add_argument("--deterministic", action="store_true",
                   help="sum per-client packets in cohort order (bit-reproducible, slower)")
    p.add_argument("--early-stop-tol", type=float, default=None,
                   help="stop when relative log-likelihood change stays below this")
    p.add_argument("--early-stop-patience", type=int, default=5,
                   help="quiet rounds required before early stop (default 5)")


def _build_parser() -> _Parser:
    parser = _Parser(prog="mdmsim", description=__doc__.split("\n\n")[0])
    sub = parser.add_subparsers(dest="command", required=True, parser_class=_Parser)

    p = sub.add_parser("gen-synthetic", help="sample a synthetic client population")
    p.add_argument("--preset", help=f"ground-truth preset: {', '.join(preset_names())}")
    p.add_argument("--params", help="ground-truth parameter JSON (alternative to --preset)")
    p.add_argument("--clients", type=int, required=True, help="number of clients to generate")
    p.add_argument("--n-per-component", type=int, default=100,
                   help="per-client sample count used by presets (default 100)")
    p.add_argument("--out", required=True, help="output population JSONL")
    p.add_argument("--labels-out", help="optional CSV of true component labels")
    p.add_argument("--params-out", help="optional copy of the ground-truth parameter JSON")
    _add_seed(p)
    p.set_defaults(func=_cmd_gen_synthetic)

    p = sub.add_parser("ingest", help="build client histograms from a raw CSV")
    p.add_argument("--csv", required=True, help="input CSV with feature and client_id columns")
    p.add_argument("--binning", required=True, help="binning spec JSON sidecar")
    p.add_argument("--out", required=True, help="output population JSONL")
    p.set_defaults(func=_cmd_ingest)

    p = sub.add_parser("infer", help="estimate mixture parameters from a population")
    p.add_argument("--population", required=True, help="input population JSONL")
    p.add_argument("--k", type=int, required=True, help="number of mixture components")
    p.add_argument("--out", required=True, help="output parameter JSON")
    p.add_argument("--trace", help="optional per-round CSV (round, loglik, and errors vs --truth)")
    p.add_argument("--truth", help="ground-truth parameter JSON for trace error columns")
    p.add_argument("--track-loglik", action="store_true",
                   help="record full-population log likelihood every round")
    _add_inference_flags(p)
    _add_seed(p)
    p.set_defaults(func=_cmd_infer)

    p = sub.add_parser("select-k", help="pick the component count by validation likelihood")
    p.add_argument("--population", required=True, help="input population JSONL")
    p.add_argument("--candidates", required=True, help="comma-separated component counts, e.g. 1,2,3")
    p.add_argument("--out", required=True, help="output report JSON")
    p.add_argument("--csv", help="optional CSV of (k, mean_val_loglik)")
    p.add_argument("--params-out", help="optional parameter JSON of the chosen model")
    p.add_argument("--val-cohort-size", type=int, default=None,
                   help="hold out this many clients from the population for validation")
    p.add_argument("--val-population", default=None,
                   help="separate validation population JSONL (alternative to --val-cohort-size)")
    p.add_argument("--tie-tolerance", type=float, default=1e-2,
                   help="prefer smaller counts within this mean log-likelihood margin (default 1e-2)")
    p.add_argument("--threads", type=int, default=1,
                   help="worker threads for per-candidate fits (default 1)")
    _add_inference_flags(p)
    _add_seed(p)
    p.set_defaults(func=_cmd_select_k)

    p = sub.add_parser("partition", help="partition central data into simulated clients")
    p.add_argument("--csv", required=True, help="central pool CSV")
    p.add_argument("--binning", required=True, help="binning spec JSON sidecar")
    p.add_argument("--generator", choices=("mdm", "fully-iid", "conditionally-iid"),
                   default="mdm", help="partitioning scheme (default mdm)")
    p.add_argument("--params", help="fitted parameter JSON (for --generator mdm)")
    p.add_argument("--population", help="population JSONL (count distribution for fully-iid; "
                   "true clients for the conditionally-iid comparison oracle, which reads "
                   "their histograms and is not a private procedure)")
    p.add_argument("--clients", type=int, help="number of simulated clients (mdm, fully-iid)")
    p.add_argument("--out", required=True, help="output plan JSONL")
    _add_seed(p)
    p.set_defaults(func=_cmd_partition)

    p = sub.add_parser("export-histograms", help="write normalized per-client histograms as CSV")
    p.add_argument("--population", help="population JSONL")
    p.add_argument("--plan", help="partition plan JSONL")
    p.add_argument("--out", required=True, help="output CSV")
    p.set_defaults(func=_cmd_export_histograms)

    p = sub.add_parser("eval", help="score fitted parameters against ground truth")
    p.add_argument("--fitted", required=True, help="fitted parameter JSON")
    p.add_argument("--truth", required=True, help="ground-truth parameter JSON")
    p.add_argument("--out", help="optional output CSV")
    p.set_defaults(func=_cmd_eval)

    return parser


def run(argv) -> int:
    """Execute one command line; returns the process exit code."""
    argv = list(argv)
    parser = _build_parser()
    try:
        args = parser.parse_args(argv)
        args.func(args, argv)
        return 0
    except UsageError as exc:
        print(f"mdmsim: usage error: {exc}", file=sys.stderr)
        return 1
    except NumericError as exc:
        print(f"mdmsim: numeric error: {exc}", file=sys.stderr)
        return 3
    except (MdmError, OSError, ValueError) as exc:
        print(f"mdmsim: data error: {exc}", file=sys.stderr)
        return 2


def main() -> None:
    sys.exit(run(sys.argv[1:]))
