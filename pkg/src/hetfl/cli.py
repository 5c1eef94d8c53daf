"""Command line entry point: ``hetfl run | compare | synth``."""
from __future__ import annotations

import argparse
import json
import sys
from dataclasses import replace
from pathlib import Path

from hetfl.datasets import generate_synthetic, write_table_csv
from hetfl.errors import HetFLError
from hetfl.harness import compare_strategies, format_table, load_config, run_experiment


def _seeds(text: str) -> tuple[int, ...]:
    return tuple(int(s) for s in text.split(",") if s.strip())


def _configure(args):
    config = load_config(args.config)
    if args.seeds:
        config = replace(config, seeds=_seeds(args.seeds))
    if args.out:
        config = replace(config, out_dir=str(Path(args.out).resolve()))
    elif config.out_dir is None:
        config = replace(config, out_dir=str(Path("out").resolve()))
    return config


def _finish(reports, config) -> int:
    sys.stdout.write(format_table(reports, config.name, config.partition.iid))
    failed = [(s.value, seed, err) for s, r in reports.items() for seed, err in r.errors.items()]
    for strategy, seed, err in failed:
        print(f"error: {strategy} seed {seed}: {err}", file=sys.stderr)
    return 1 if failed else 0


def main(argv=None) -> int:
    parser = argparse.ArgumentParser(prog="hetfl", description=__doc__)
    sub = parser.add_subparsers(dest="command", required=True)

    p_run = sub.add_parser("run", help="sweep seeds for one strategy")
    p_run.add_argument("--config", required=True)
    p_run.add_argument("--strategy")
    p_run.add_argument("--seeds", help="comma separated, e.g. 0,1,2")
    p_run.add_argument("--out")

    p_cmp = sub.add_parser("compare", help="run strategies side by side on identical shards")
    p_cmp.add_argument("--config", required=True)
    p_cmp.add_argument("--strategies", default="solo,avg,avgkd,ours")
    p_cmp.add_argument("--seeds")
    p_cmp.add_argument("--out")

    p_syn = sub.add_parser("synth", help="write a Gaussian-blob table as CSV")
    p_syn.add_argument("--spec", required=True, help="JSON file with generator fields")
    p_syn.add_argument("--out", required=True)

    args = parser.parse_args(argv)
    try:
        if args.command == "synth":
            table = generate_synthetic(json.loads(Path(args.spec).read_text()))
            write_table_csv(table, args.out)
            print(f"wrote {table.n_rows} rows x {table.n_features} features to {args.out}")
            return 0
        config = _configure(args)
        if args.command == "run":
            report = run_experiment(config, args.strategy)
            return _finish({report.strategy: report}, config)
        reports = compare_strategies(config, args.strategies.split(","))
        return _finish(reports, config)
    except (HetFLError, OSError, json.JSONDecodeError, TypeError) as e:
        print(f"error: {e}", file=sys.stderr)
        return 2


if __name__ == "__main__":
    sys.exit(main())
