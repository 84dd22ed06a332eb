"""``mlr`` command line: gen | fit | eval | bench.

Exit codes: 0 success, 2 usage or parse errors, 3 insufficient data,
4 internal invariant violations.
"""

from __future__ import annotations

import argparse
import json
import sys
from pathlib import Path
from typing import Any

import numpy as np
from dagster import get_dagster_logger

from src.bench import generate_instance, learner_for, run_bench
from src.config import ExperimentConfig, load_experiment_config, load_runtime_config
from src.duckdb_utils import export_bench_csv, read_dataset_csv
from src.errors import MixtureError, ParameterError, ResourceError, StructuralError
from src.learner import FitReport, greedy_match, learn_all, recovery_error
from src.model import MixtureModel, load_model
from src.utils import (
    config_hash,
    describe_version,
    make_rng,
    parse_seed_list,
    spawn_rngs,
    write_json,
)

log = get_dagster_logger(__name__)

EXIT_OK = 0
EXIT_USAGE = 2


def _provenance(command: str, exp: ExperimentConfig, seed: int | None) -> dict[str, Any]:
    return {
        "command": command,
        "seed": seed,
        "config_hash": config_hash(exp.to_dict()),
        "version": describe_version(),
    }


def _experiment(args: argparse.Namespace) -> ExperimentConfig:
    """Experiment file (``--config`` or MLR_EXPERIMENT_CONFIG) overlaid with explicit flags."""
    runtime = load_runtime_config()
    path = args.config or runtime["experiment_config"]
    exp = load_experiment_config(Path(path)) if path else ExperimentConfig()
    if getattr(args, "model", None):
        exp.model, exp.model_path = None, Path(args.model)
    if getattr(args, "n", None) is not None:
        exp.n = args.n
    if getattr(args, "eps", None) is not None:
        exp.eps = args.eps
    if getattr(args, "seed", None) is not None:
        exp.seeds = [args.seed]
    if hasattr(args, "d") and (args.k is not None or args.d is not None):
        if exp.model is None and exp.model_path is None:
            random = dict(exp.random_model or {})
            if args.k is not None:
                random["k"] = args.k
            if args.d is not None:
                random["d"] = args.d
            exp.random_model = random
    if getattr(args, "out", None):
        exp.out = Path(args.out)
    if getattr(args, "format", None):
        exp.fmt = args.format
    if getattr(args, "verbose_trace", False):
        exp.verbose_trace = True
    if getattr(args, "eval_with_truth", False):
        exp.eval_with_truth = True
    if exp.n < 1:
        msg = f"n must be >= 1, got {exp.n}"
        raise ParameterError(msg)
    return exp


def _emit(payload: dict[str, Any], out: Path | None) -> None:
    if out is None:
        sys.stdout.write(json.dumps(payload, indent=2, default=str) + "\n")
        return
    write_json(out, payload)
    log.info("Wrote %s", out)


# -------------------------
# Subcommands
# -------------------------


def cmd_gen(args: argparse.Namespace) -> int:
    exp = _experiment(args)
    seed = exp.seeds[0]
    out_dir = exp.out or load_runtime_config()["data_dir"] / f"seed-{seed}"
    manifest = generate_instance(exp, seed, out_dir)
    print(f"rows={manifest['row_count']} seed={seed} dataset={manifest['dataset_path']}")
    return EXIT_OK


def cmd_fit(args: argparse.Namespace) -> int:
    exp = _experiment(args)
    seed = exp.seeds[0]
    data = read_dataset_csv(Path(args.data), keep_truth=exp.eval_with_truth)
    truth: MixtureModel | None = None
    if exp.eval_with_truth and exp.model_path is not None:
        truth = load_model(exp.model_path)
        if truth.d != data.d:
            msg = f"truth model has d={truth.d} but the dataset has d={data.d}"
            raise StructuralError(msg)

    k = args.k if args.k is not None else (truth.k if truth is not None else None)
    if k is None:
        k = int((exp.random_model or {}).get("k", 0)) or None
    if k is None:
        msg = "fit needs --k (or a truth model under --eval-with-truth)"
        raise ParameterError(msg)
    # without truth only the declared bounds matter
    bounds = exp.random_model or {}
    template = truth or MixtureModel(
        np.full(k, 1.0 / k),
        np.zeros((k, data.d)),
        np.broadcast_to(np.eye(data.d), (k, data.d, data.d)),
        sigma=float(bounds.get("sigma", 1.0)),
        delta=float(bounds.get("delta", 1.0)),
        pmin=float(bounds.get("pmin", 1.0 / k)),
    )
    cfg = learner_for(exp, template)

    head = {**_provenance("fit", exp, seed), "learner": cfg.to_dict()}
    fit_rng = spawn_rngs(make_rng(seed), 2)[1]
    try:
        report = learn_all(data, cfg, fit_rng, evaluation=exp.eval_with_truth, truth=truth)
    except ResourceError as e:
        partial = e.partial
        if not isinstance(partial, FitReport):
            partial = FitReport(status="insufficient_data")
        _emit({**head, "error": str(e), "report": partial.to_dict(exp.verbose_trace)}, exp.out)
        raise
    _emit({**head, "report": report.to_dict(exp.verbose_trace)}, exp.out)
    return EXIT_OK


def _load_vectors(path: Path) -> np.ndarray:
    """Weight vectors from a model file, a fit report, or a bare JSON list."""
    try:
        with path.open(encoding="utf-8") as f:
            payload = json.load(f)
    except FileNotFoundError as e:
        msg = f"File not found: {path}"
        raise StructuralError(msg) from e
    except json.JSONDecodeError as e:
        msg = f"{path} is not valid JSON: line {e.lineno} column {e.colno}: {e.msg}"
        raise StructuralError(msg) from e
    if isinstance(payload, dict):
        if "report" in payload:
            payload = payload["report"]
        raw = payload.get("weights", payload.get("recovered"))
    else:
        raw = payload
    if raw is None:
        msg = f"{path} holds neither 'weights' nor 'recovered'"
        raise StructuralError(msg)
    vectors = np.asarray(raw, dtype=float)
    if vectors.ndim != 2:
        msg = f"{path}: expected a list of weight vectors, got shape {vectors.shape}"
        raise StructuralError(msg)
    return vectors


def cmd_eval(args: argparse.Namespace) -> int:
    exp = _experiment(args)
    estimates = _load_vectors(Path(args.estimates))
    truth = _load_vectors(Path(args.truth))
    if estimates.shape != truth.shape:
        msg = f"estimates {estimates.shape} and truth {truth.shape} differ in k or d"
        raise StructuralError(msg)
    match = greedy_match(estimates, truth) if args.greedy else recovery_error(estimates, truth)
    payload = {
        **_provenance("eval", exp, exp.seeds[0]),
        "matching": "greedy" if args.greedy else "exact",
        **match.to_dict(),
    }
    _emit(payload, Path(args.out) if args.out else None)
    return EXIT_OK


def cmd_bench(args: argparse.Namespace) -> int:
    exp = _experiment(args)
    runtime = load_runtime_config()
    if args.seeds is not None:
        seeds = parse_seed_list(args.seeds)
    elif args.config or runtime["experiment_config"]:
        seeds = exp.seeds
    else:
        seeds = runtime["bench_seeds"]
    # MLR_THREADS caps any --threads request
    threads = min(args.threads or runtime["threads"], runtime["threads"])
    rows, summary = run_bench(exp, seeds, threads)

    head = _provenance("bench", exp, None)
    if exp.fmt == "csv":
        out = exp.out or runtime["data_dir"] / "bench.csv"
        export_bench_csv(rows, out)
        write_json(out.with_suffix(".summary.json"), {**head, "seeds": seeds, "summary": summary})
        print(f"seeds={len(seeds)} success_rate={summary['success_rate']:.2f} csv={out}")
        return EXIT_OK
    _emit({**head, "seeds": seeds, "summary": summary, "rows": rows}, exp.out)
    return EXIT_OK


# -------------------------
# Argument parsing
# -------------------------


def build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(prog="mlr", description="Mixture of linear regressions learner")
    sub = parser.add_subparsers(dest="command", required=True)

    def common(p: argparse.ArgumentParser) -> None:
        p.add_argument("--config", help="Experiment JSON file")
        p.add_argument("--seed", type=int, help="Seed (overrides the experiment's first seed)")
        p.add_argument("--out", help="Output path")

    gen = sub.add_parser("gen", help="Generate a dataset and its model")
    common(gen)
    gen.add_argument("--model", help="Model JSON to sample from")
    gen.add_argument("--k", type=int, help="Components of a random model")
    gen.add_argument("--d", type=int, help="Dimension of a random model")
    gen.add_argument("--n", type=int, help="Rows to draw")
    gen.set_defaults(handler=cmd_gen)

    fit = sub.add_parser("fit", help="Learn all weight vectors from a dataset")
    common(fit)
    fit.add_argument("--data", required=True, help="Dataset CSV (x1..xd,alpha[,z])")
    fit.add_argument("--k", type=int, help="Number of components")
    fit.add_argument("--eps", type=float, help="Target recovery error")
    fit.add_argument("--model", help="Truth model, read only with --eval-with-truth")
    fit.add_argument("--eval-with-truth", action="store_true", help="Keep the z column and score")
    fit.add_argument("--verbose-trace", action="store_true", help="Include per-iteration traces")
    fit.set_defaults(handler=cmd_fit)

    ev = sub.add_parser("eval", help="Permutation-matched error of estimates against truth")
    common(ev)
    ev.add_argument("--estimates", required=True, help="Fit report or weights JSON")
    ev.add_argument("--truth", required=True, help="Model or weights JSON")
    ev.add_argument("--greedy", action="store_true", help="Greedy matching (any k)")
    ev.set_defaults(handler=cmd_eval)

    bench = sub.add_parser("bench", help="Seeded gen+fit+eval sweep")
    common(bench)
    bench.add_argument("--seeds", help="Seed list, '0..9' or '1,4,7'")
    bench.add_argument("--k", type=int)
    bench.add_argument("--d", type=int)
    bench.add_argument("--n", type=int)
    bench.add_argument("--eps", type=float)
    bench.add_argument("--threads", type=int, help="Worker processes (default MLR_THREADS)")
    bench.add_argument("--format", choices=["json", "csv"])
    bench.set_defaults(handler=cmd_bench)
    return parser


def main(argv: list[str] | None = None) -> int:
    parser = build_parser()
    try:
        args = parser.parse_args(argv)
    except SystemExit as e:
        return int(e.code) if isinstance(e.code, int) else EXIT_USAGE
    try:
        return int(args.handler(args))
    except MixtureError as e:
        log.error("%s failed: %s", args.command, e)
        sys.stderr.write(f"error: {e}\n")
        return e.exit_code
    except OSError as e:
        log.error("%s failed: %s", args.command, e)
        sys.stderr.write(f"error: {e}\n")
        return EXIT_USAGE


if __name__ == "__main__":
    sys.exit(main())
