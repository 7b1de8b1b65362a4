"""Batch evaluation: many scenarios, one scheduler, any worker count.

Results are bit-reproducible regardless of parallelism: each scenario's
seed is derived from (base seed, scenario id) alone, rows are merged in
scenario-id order, and the only nondeterministic column is wall_time_s.
A scenario that raises inside a worker becomes a row with empty metric
cells plus an entry in ``errors`` — one bad scenario never sinks a batch.
"""

from __future__ import annotations

import time
from concurrent.futures import ProcessPoolExecutor
from dataclasses import dataclass, field
from multiprocessing import get_context
from pathlib import Path

from .assets import child_seed
from .metrics import compute_metrics
from .schedulers import (
    GreedyDistanceScheduler,
    HillClimbScheduler,
    NullScheduler,
    RandomScheduler,
)
from .simulator import DEFAULT_CONFIG, SimConfig, rollout

SCHEDULER_NAMES = ("random", "greedy", "hillclimb", "matcher", "null")

METRIC_KEYS = ("CS", "CR", "PCR", "WCR", "TAT_h", "PC_Wh")


@dataclass
class SchedulerSpec:
    """Picklable recipe for building a scheduler inside a worker process."""

    name: str
    options: dict = field(default_factory=dict)

    def __post_init__(self):
        if self.name not in SCHEDULER_NAMES:
            raise ValueError(
                f"unknown scheduler {self.name!r}; pick one of "
                f"{', '.join(SCHEDULER_NAMES)}"
            )
        if self.name == "matcher" and "checkpoint" not in self.options:
            raise ValueError("matcher scheduler needs a checkpoint path")


def build_scheduler(spec: SchedulerSpec):
    opts = spec.options
    if spec.name == "null":
        return NullScheduler()
    if spec.name == "random":
        return RandomScheduler()
    if spec.name == "greedy":
        return GreedyDistanceScheduler()
    if spec.name == "hillclimb":
        return HillClimbScheduler(
            budget=int(opts.get("budget", 60)),
            epoch_length=int(opts.get("epoch_length", 60)),
        )
    # matcher: import torch lazily so baseline workers stay lightweight
    import torch

    from .training import MatcherScheduler

    torch.set_num_threads(int(opts.get("torch_threads", 1)))
    return MatcherScheduler.from_checkpoint(
        opts["checkpoint"], tau_s=opts.get("tau_s")
    )


@dataclass
class EvalOutcome:
    """Merged rows (scenario-id order) plus any per-scenario failures."""

    rows: list[dict]
    errors: dict[str, str]

    @property
    def ok(self) -> bool:
        return not self.errors

    @property
    def exit_code(self) -> int:
        return 0 if self.ok else 1


def _evaluate_one(job):
    scenario, spec, seed, sim_config, split, out_dir = job
    row = {
        "split": split,
        "scenario_id": scenario.scenario_id,
        "scheduler": spec.name,
        **{key: None for key in METRIC_KEYS},
        "wall_time_s": None,
        "seed": seed,
    }
    start = time.perf_counter()
    try:
        scheduler = build_scheduler(spec)
        log = rollout(scenario, scheduler, seed=seed, config=sim_config)
        report = compute_metrics(log, scenario)
        row.update(
            CS=report.cs,
            CR=report.cr,
            PCR=report.pcr,
            WCR=report.wcr,
            TAT_h=report.tat_h,
            PC_Wh=report.pc_wh,
        )
        if out_dir is not None:
            from .fileio import save_trajectory

            name = f"{scenario.scenario_id}_{spec.name}_{seed}.jsonl"
            save_trajectory(Path(out_dir) / name, log)
        error = None
    except Exception as exc:  # noqa: BLE001 - isolate scenario failures
        error = f"{type(exc).__name__}: {exc}"
    row["wall_time_s"] = time.perf_counter() - start
    return row, error


def evaluate_parallel(
    scenarios,
    spec: SchedulerSpec,
    base_seed: int = 0,
    workers: int = 1,
    sim_config: SimConfig = DEFAULT_CONFIG,
    split: str = "",
    out_dir=None,
) -> EvalOutcome:
    """Score every scenario with one scheduler across worker processes.

    Rows come back sorted by scenario id and are identical for any
    ``workers`` value (wall_time_s aside).  Worker processes are spawned,
    not forked, so threaded libraries in the parent stay safe.
    """
    if out_dir is not None:
        Path(out_dir).mkdir(parents=True, exist_ok=True)
    jobs = [
        (
            scenario,
            spec,
            child_seed(base_seed, scenario.scenario_id),
            sim_config,
            split,
            str(out_dir) if out_dir is not None else None,
        )
        for scenario in scenarios
    ]
    if workers <= 1:
        results = [_evaluate_one(job) for job in jobs]
    else:
        ctx = get_context("spawn")
        with ProcessPoolExecutor(max_workers=workers, mp_context=ctx) as pool:
            results = list(pool.map(_evaluate_one, jobs))

    order = sorted(range(len(results)),
                   key=lambda i: results[i][0]["scenario_id"])
    rows, errors = [], {}
    for i in order:
        row, error = results[i]
        rows.append(row)
        if error is not None:
            errors[row["scenario_id"]] = error
    return EvalOutcome(rows=rows, errors=errors)


def strip_timing(rows: list[dict]) -> list[dict]:
    """Rows without the one column allowed to vary between runs."""
    return [{k: v for k, v in row.items() if k != "wall_time_s"}
            for row in rows]
