#!/usr/bin/env python3
"""
Replay the benchmark sweep for a range of seeds.
Runs either through Dagster (one partition per seed) or the local process pool.
"""

import argparse
import os
import subprocess
import sys
from pathlib import Path

from src.bench import run_bench
from src.config import load_experiment_config, load_runtime_config
from src.errors import MixtureError
from src.utils import parse_seed_list

ASSETS = ["mlr_instance", "mlr_fit"]


def dagster_command(asset_name: str, seed: int) -> list[str]:
    return [
        "dagster",
        "asset",
        "materialize",
        "-m",
        "orchestration.repo",
        "--select",
        asset_name,
        "--partition",
        str(seed),
    ]


def replay_dagster(seeds: list[int], assets: list[str], config: Path | None = None) -> int:
    """Materialize each asset for each seed; keeps going after a failed seed."""
    env = os.environ.copy()
    if config is not None:
        env["MLR_EXPERIMENT_CONFIG"] = str(config.resolve())
    failures = 0
    for seed in seeds:
        print(f"\nProcessing seed: {seed}")
        for asset_name in assets:
            cmd = dagster_command(asset_name, seed)
            print(f"Command: {' '.join(cmd)}")
            result = subprocess.run(cmd, check=False, env=env)
            if result.returncode != 0:
                print(f"Error running {asset_name} for seed {seed}: exit {result.returncode}")
                failures += 1
                break
    cmd = [
        "dagster",
        "asset",
        "materialize",
        "-m",
        "orchestration.repo",
        "--select",
        "mlr_bench_summary",
    ]
    print(f"Command: {' '.join(cmd)}")
    subprocess.run(cmd, check=False, env=env)
    return failures


def main(argv: list[str] | None = None) -> int:
    parser = argparse.ArgumentParser(description="Replay the benchmark sweep for a seed range")
    parser.add_argument("seeds", help="Seed range '0..9' or list '1,4,7'")
    parser.add_argument(
        "--config", type=Path, help="Experiment JSON (default MLR_EXPERIMENT_CONFIG)"
    )
    parser.add_argument("--assets", nargs="+", help="Specific assets to run (dagster mode)")
    parser.add_argument("--local", action="store_true", help="Use the local process pool")
    parser.add_argument(
        "--dry-run",
        action="store_true",
        help="Show what would be run without executing",
    )

    args = parser.parse_args(argv)
    try:
        seeds = parse_seed_list(args.seeds)
    except MixtureError as e:
        print(f"Bad seed list: {e}")
        return e.exit_code
    assets = args.assets or ASSETS

    if args.dry_run:
        print("DRY RUN MODE - No actual execution")
        print(f"Would replay seeds {seeds}")
        if args.config is not None:
            print(f"Experiment: {args.config}")
        if not args.local:
            for seed in seeds:
                for asset_name in assets:
                    print(" ".join(dagster_command(asset_name, seed)))
        return 0

    if not args.local:
        return 1 if replay_dagster(seeds, assets, args.config) == len(seeds) else 0

    runtime = load_runtime_config()
    path = args.config or runtime["experiment_config"]
    if not path:
        print("Local mode needs --config or MLR_EXPERIMENT_CONFIG")
        return 2
    try:
        rows, summary = run_bench(load_experiment_config(path), seeds, runtime["threads"])
    except MixtureError as e:
        print(f"Bench failed: {e}")
        return e.exit_code
    except OSError as e:
        print(f"Bench failed: {e}")
        return 2
    for row in rows:
        print(f"seed={row['seed']} status={row['status']} max_error={row['max_error']}")
    print(f"\nsuccess_rate={summary['success_rate']:.2f} over {summary['seeds']} seeds")
    return 0


if __name__ == "__main__":
    sys.exit(main())
