"""Command-line front end.

Subcommands cover the full pipeline: generate assets and scenarios,
annotate expert trajectories, train the matcher, benchmark schedulers,
and replay logged runs.  Exit codes: 0 success, 1 partial failure (some
scenarios errored or a rollout was rejected), 2 usage error, 3 unreadable
or inconsistent data.
"""

from __future__ import annotations

import argparse
import sys
from pathlib import Path

import numpy as np

from . import fileio
from .annotate import annotate_scenario
from .assets import child_seed, generate_asset_pool, generate_scenario
from .fileio import FileFormatError
from .harness import SCHEDULER_NAMES, SchedulerSpec, evaluate_parallel
from .metrics import compute_metrics
from .simulator import replay

EXIT_OK = 0
EXIT_PARTIAL = 1
EXIT_USAGE = 2
EXIT_DATA = 3


def _fmt(report) -> str:
    return (f"CS={report.cs:.4f} CR={report.cr:.4f} PCR={report.pcr:.4f} "
            f"WCR={report.wcr:.4f} TAT_h={report.tat_h:.4f} "
            f"PC_Wh={report.pc_wh:.4f}")


# -- subcommand handlers -------------------------------------------------------


def cmd_gen_assets(args) -> int:
    pool = generate_asset_pool(seed=args.seed, count=args.count,
                               prefix=args.prefix)
    fileio.save_asset_pool(args.out, pool)
    print(f"wrote {len(pool)} assets to {args.out} "
          f"(rejection rate {pool.rejection_rate:.3f})")
    return EXIT_OK


def cmd_gen_scenarios(args) -> int:
    pool = fileio.load_asset_pool(args.pool)
    if args.n_sats > len(pool):
        raise FileFormatError(
            f"pool has {len(pool)} assets, cannot staff {args.n_sats} "
            "satellites"
        )
    out = Path(args.out)
    out.mkdir(parents=True, exist_ok=True)
    for i in range(args.count):
        scenario_id = f"{args.prefix}-{i:03d}"
        scenario = generate_scenario(
            seed=child_seed(args.seed, scenario_id), pool=pool,
            n_sats=args.n_sats, n_tasks=args.n_tasks, horizon=args.horizon,
            dt=args.dt, scenario_id=scenario_id,
        )
        fileio.save_scenario(out / f"{scenario_id}.json", scenario)
    print(f"wrote {args.count} scenarios to {out}")
    return EXIT_OK


def cmd_annotate(args) -> int:
    scenario = fileio.load_scenario(args.scenario)
    result = annotate_scenario(
        scenario, seed=args.seed, grace=args.grace,
        max_rounds=args.max_rounds, accept_threshold=args.accept_threshold,
    )
    if not result.accepted:
        print(f"{scenario.scenario_id}: rejected after {result.rounds} "
              f"round(s); best CS {min(result.history):.4f} above "
              f"{args.accept_threshold}", file=sys.stderr)
        return EXIT_PARTIAL
    fileio.save_trajectory(args.out, result.trajectory)
    print(f"{scenario.scenario_id}: accepted in {result.rounds} round(s); "
          f"{_fmt(result.metrics)}")
    return EXIT_OK


def _load_scenario_dir(path) -> list:
    files = sorted(Path(path).glob("*.json"))
    if not files:
        raise FileFormatError(f"no scenario files (*.json) under {path}")
    return [fileio.load_scenario(f) for f in files]


def cmd_train(args) -> int:
    # heavy imports stay out of the fast subcommands
    import torch

    from .model import Matcher, MatcherConfig, toy_config
    from .training import (
        TrainConfig,
        TrajectoryDataset,
        fit_norm_stats,
        save_checkpoint,
        train_supervised,
    )

    scenarios = {s.scenario_id: s for s in _load_scenario_dir(args.scenarios)}
    dataset = TrajectoryDataset()
    for traj_path in sorted(Path(args.trajectories).glob("*.jsonl")):
        log = fileio.load_trajectory(traj_path)
        if log.scenario_id not in scenarios:
            raise FileFormatError(
                f"{traj_path}: no scenario named {log.scenario_id!r} under "
                f"{args.scenarios}"
            )
        scenario = scenarios[log.scenario_id]
        # logged files carry assignments only; replay rebuilds the per-step
        # observations the trainer needs
        dataset.add(scenario, replay(log, scenario, record_observations=True))
    if len(dataset) == 0:
        raise FileFormatError(
            f"no trajectory files (*.jsonl) under {args.trajectories}"
        )

    config = TrainConfig(steps=args.steps, seed=args.seed, lr=args.lr,
                         batch_timesteps=args.batch_timesteps,
                         warmup_steps=args.warmup_steps)
    torch.manual_seed(config.seed)
    if args.width is None:
        model = Matcher(toy_config())
    else:
        time_dim = max(2, (args.width // 4) & ~1)  # even, scales with width
        model = Matcher(MatcherConfig(width=args.width, depth=args.depth,
                                      heads=args.heads, time_dim=time_dim,
                                      constraint_hidden=args.width))
    norm = fit_norm_stats(dataset)
    history = train_supervised(model, dataset, config, norm,
                               log_every=args.log_every)
    save_checkpoint(args.out, model, norm, config)
    print(f"trained {config.steps} steps on {len(dataset)} trajectories; "
          f"final loss {history[-1]['total']:.4f}; checkpoint {args.out}")
    return EXIT_OK


def cmd_evaluate(args) -> int:
    scenarios = _load_scenario_dir(args.scenarios)
    options = {}
    if args.scheduler == "hillclimb":
        options = {"budget": args.budget, "epoch_length": args.epoch_length}
    elif args.scheduler == "matcher":
        if args.checkpoint is None:
            raise FileFormatError("--scheduler matcher requires --checkpoint")
        options = {"checkpoint": args.checkpoint}
    spec = SchedulerSpec(args.scheduler, options)
    outcome = evaluate_parallel(
        scenarios, spec, base_seed=args.seed, workers=args.workers,
        split=args.split, out_dir=args.save_trajectories,
    )
    fileio.write_report_csv(args.out, outcome.rows)
    scored = [r["CS"] for r in outcome.rows if r["CS"] is not None]
    if scored:
        print(f"{args.scheduler}: {len(scored)}/{len(outcome.rows)} scenarios "
              f"scored, mean CS {np.mean(scored):.4f}; report {args.out}")
    for scenario_id, message in outcome.errors.items():
        print(f"error: {scenario_id}: {message}", file=sys.stderr)
    return outcome.exit_code


def cmd_replay(args) -> int:
    scenario = fileio.load_scenario(args.scenario)
    log = fileio.load_trajectory(args.trajectory)
    if log.scenario_id != scenario.scenario_id:
        raise FileFormatError(
            f"trajectory was recorded on {log.scenario_id!r}, "
            f"not {scenario.scenario_id!r}"
        )
    fresh = replay(log, scenario)
    report = compute_metrics(fresh, scenario)
    print(f"{scenario.scenario_id} [{log.scheduler}] {_fmt(report)}")
    if args.check:
        stored = compute_metrics(log, scenario)
        same = (
            stored == report
            and np.array_equal(fresh.valid, log.valid)
            and np.array_equal(fresh.flags, log.flags)
            and np.array_equal(fresh.battery, log.battery)
        )
        if not same:
            print("replay drifted from the stored log", file=sys.stderr)
            return EXIT_DATA
        print("replay matches the stored log")
    return EXIT_OK


# -- parser ---------------------------------------------------------------------


def build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(
        prog="satsched",
        description="Constellation scheduling sandbox: generate, annotate, "
                    "train, benchmark, replay.",
    )
    sub = parser.add_subparsers(dest="command", required=True)

    p = sub.add_parser("gen-assets", help="sample a validated satellite pool")
    p.add_argument("--seed", type=int, default=0)
    p.add_argument("--count", type=int, default=50)
    p.add_argument("--prefix", default="asset")
    p.add_argument("--out", required=True, help="pool JSON path")
    p.set_defaults(handler=cmd_gen_assets)

    p = sub.add_parser("gen-scenarios",
                       help="build scenario files from a pool")
    p.add_argument("--seed", type=int, default=0)
    p.add_argument("--pool", required=True, help="pool JSON from gen-assets")
    p.add_argument("--count", type=int, default=8)
    p.add_argument("--n-sats", type=int, default=3)
    p.add_argument("--n-tasks", type=int, default=15)
    p.add_argument("--horizon", type=int, default=3600)
    p.add_argument("--dt", type=float, default=1.0)
    p.add_argument("--prefix", default="scenario")
    p.add_argument("--out", required=True, help="output directory")
    p.set_defaults(handler=cmd_gen_scenarios)

    p = sub.add_parser("annotate",
                       help="expert rollout with dead-pair rerolling")
    p.add_argument("--scenario", required=True)
    p.add_argument("--out", required=True, help="trajectory JSONL path")
    p.add_argument("--seed", type=int, default=0)
    p.add_argument("--grace", type=int, default=30)
    p.add_argument("--max-rounds", type=int, default=5)
    p.add_argument("--accept-threshold", type=float, default=8.0)
    p.set_defaults(handler=cmd_annotate)

    p = sub.add_parser("train", help="fit the matcher on trajectories")
    p.add_argument("--scenarios", required=True, help="scenario directory")
    p.add_argument("--trajectories", required=True,
                   help="trajectory directory")
    p.add_argument("--out", required=True, help="checkpoint path")
    p.add_argument("--steps", type=int, default=300)
    p.add_argument("--seed", type=int, default=0)
    p.add_argument("--lr", type=float, default=1e-4)
    p.add_argument("--batch-timesteps", type=int, default=48)
    p.add_argument("--warmup-steps", type=int, default=100)
    p.add_argument("--width", type=int, default=None,
                   help="override the default toy architecture")
    p.add_argument("--depth", type=int, default=2)
    p.add_argument("--heads", type=int, default=4)
    p.add_argument("--log-every", type=int, default=0)
    p.set_defaults(handler=cmd_train)

    p = sub.add_parser("evaluate", help="score a scheduler over scenarios")
    p.add_argument("--scenarios", required=True, help="scenario directory")
    p.add_argument("--scheduler", required=True, choices=SCHEDULER_NAMES)
    p.add_argument("--out", required=True, help="report CSV path")
    p.add_argument("--seed", type=int, default=0,
                   help="base seed; per-scenario seeds derive from it")
    p.add_argument("--workers", type=int, default=1)
    p.add_argument("--split", default="")
    p.add_argument("--budget", type=int, default=60,
                   help="hillclimb rollout budget")
    p.add_argument("--epoch-length", type=int, default=60)
    p.add_argument("--checkpoint", default=None, help="matcher checkpoint")
    p.add_argument("--save-trajectories", default=None,
                   help="directory for per-scenario JSONL logs")
    p.set_defaults(handler=cmd_evaluate)

    p = sub.add_parser("replay", help="re-simulate a logged trajectory")
    p.add_argument("--scenario", required=True)
    p.add_argument("--trajectory", required=True)
    p.add_argument("--check", action="store_true",
                   help="verify the replay matches the stored log")
    p.set_defaults(handler=cmd_replay)

    return parser


def main(argv=None) -> int:
    parser = build_parser()
    args = parser.parse_args(argv)
    try:
        return args.handler(args)
    except (FileFormatError, FileNotFoundError) as exc:
        print(f"error: {exc}", file=sys.stderr)
        return EXIT_DATA
    except ValueError as exc:
        print(f"error: {exc}", file=sys.stderr)
        return EXIT_DATA


if __name__ == "__main__":
    sys.exit(main())
