"""Command-line entry point.

Verbs: train, eval, train-gae, oracle-check, dump-world, report. Every
parameter comes from one flat-key config file plus repeatable --set overrides;
`report` re-renders figures from the CSVs already in the output directory.

Exit codes: 0 ok, 1 configuration problem, 2 invariant violation (a bug or a
corrupted run, never a normal outcome).
"""
from __future__ import annotations

import argparse
import sys
from pathlib import Path

from . import experiments, figures
from .config import config_keys_doc, parse_config
from .errors import ConfigError, InfeasibleActionError, InvariantViolation, OrderStateError, TripRejected
from .metrics import read_csv


def build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(
        prog="lastmile",
        description="warehouse-assignment + routing simulator and trainer",
        epilog="config keys:\n" + config_keys_doc(),
        formatter_class=argparse.RawDescriptionHelpFormatter,
    )
    parser.add_argument("--config", default=None, help="flat key=value config file")
    parser.add_argument("--set", action="append", metavar="KEY=VALUE", default=[],
                        help="override a config key (repeatable)")
    sub = parser.add_subparsers(dest="verb", required=True)

    sub.add_parser("train", help="train the configured combo across its seeds")

    p_eval = sub.add_parser("eval", help="greedy evaluation of the configured combo")
    p_eval.add_argument("--checkpoint-seed", type=int, default=None,
                        help="train seed whose checkpoint to evaluate (default: first)")

    sub.add_parser("train-gae", help="train the graph encoder on heuristic rollouts")

    p_oracle = sub.add_parser("oracle-check", help="verify the routing heuristic against exact enumeration")
    p_oracle.add_argument("--instances", type=int, default=200)
    p_oracle.add_argument("--max-orders", type=int, default=7)
    p_oracle.add_argument("--seed", type=int, default=0)

    p_dump = sub.add_parser("dump-world", help="dump one episode's final order table")
    p_dump.add_argument("--episode", type=int, default=0)

    sub.add_parser("report", help="re-render figures from the CSVs in the output directory")
    return parser


def _overrides(pairs: list[str]) -> dict[str, str]:
    overrides = {}
    for pair in pairs:
        if "=" not in pair:
            raise ConfigError([f"--set expects KEY=VALUE, got {pair!r}"])
        key, value = pair.split("=", 1)
        overrides[key.strip()] = value.strip()
    return overrides


def _run_train(cfg) -> None:
    result = experiments.train(cfg)
    for trained in result.seeds:
        parts = [f"seed {trained.seed}: {trained.curves_path}"]
        if trained.c2s_path:
            parts.append(str(trained.c2s_path))
        if trained.vrp_path:
            parts.append(str(trained.vrp_path))
        print("  ".join(parts))
    if result.phase_one:
        print(f"phase 1 (lh) artifacts: {len(result.phase_one.seeds)} seeds trained")


def _run_eval(cfg, checkpoint_seed) -> None:
    result = experiments.evaluate(cfg, checkpoint_seed)
    print(f"wrote {result.path}")
    for key in ("sum_reward", "trips", "served", "dropped", "mean_utilization"):
        print(f"  mean {key}: {result.means[key]:.4f}")


def _run_report(cfg) -> int:
    out = Path(cfg.output_dir)
    eval_rows = {}
    for path in sorted(out.glob("eval_*.csv")):
        combo = path.stem[len("eval_"):]
        eval_rows[combo] = read_csv(str(path))
    curve_files: dict[str, list[Path]] = {}
    for path in sorted(out.glob("curves_*_*.csv")):
        combo = path.stem.split("_")[1]
        curve_files.setdefault(combo, []).append(path)

    if not eval_rows and not curve_files:
        print(f"no curves_*.csv or eval_*.csv under {out}", file=sys.stderr)
        return 1
    for combo, paths in sorted(curve_files.items()):
        rows = [row for p in paths for row in read_csv(str(p))]
        print(figures.learning_curves(rows, combo, str(out / f"curves_{combo}.png")))
    for combo, rows in sorted(eval_rows.items()):
        print(figures.eval_summary(rows, combo, str(out / f"eval_{combo}.png")))
    if eval_rows:
        print(figures.combo_comparison(eval_rows, str(out / "report_combos.png")))
    return 0


def main(argv: list[str] | None = None) -> int:
    parser = build_parser()
    args = parser.parse_args(argv)
    try:
        cfg = parse_config(args.config, _overrides(args.set))
        if args.verb == "train":
            _run_train(cfg)
        elif args.verb == "eval":
            _run_eval(cfg, args.checkpoint_seed)
        elif args.verb == "train-gae":
            result = experiments.train_gae(cfg)
            print(f"wrote {result.path}")
            print(f"  final loss: {result.history[-1]:.6f}  held-out AUC: {result.holdout_auc:.4f}")
        elif args.verb == "oracle-check":
            summary = experiments.oracle_check(cfg, args.instances, args.max_orders, args.seed)
            print(f"wrote {summary['path']}")
            print(f"  instances: {summary['instances']}  optimal fraction: {summary['optimal_fraction']:.3f}")
            print(f"  mean gap: {summary['mean_gap']:.6f}  max gap: {summary['max_gap']:.6f}")
        elif args.verb == "dump-world":
            print(f"wrote {experiments.dump_world(cfg, args.episode)}")
        elif args.verb == "report":
            return _run_report(cfg)
    except ConfigError as exc:
        for problem in exc.violations:
            print(f"config error: {problem}", file=sys.stderr)
        return 1
    except (InvariantViolation, TripRejected, OrderStateError, InfeasibleActionError) as exc:
        print(f"invariant violation: {exc}", file=sys.stderr)
        return 2
    return 0


if __name__ == "__main__":
    sys.exit(main())
