"""Benchmark the non-learned schedulers over a batch of scenarios.

Runs random, greedy, and hill-climbing policies through the parallel
evaluation harness and writes a report CSV.  The harness spawns worker
processes, so this script must be import-safe (hence the main() guard —
keep one in any script that calls evaluate_parallel).
"""

import tempfile
from pathlib import Path

import numpy as np

from satsched.assets import child_seed, generate_asset_pool, generate_scenario
from satsched.fileio import read_report_csv, write_report_csv
from satsched.harness import SchedulerSpec, evaluate_parallel

SEED = 99


def main():
    pool = generate_asset_pool(seed=SEED, count=8)
    scenarios = [
        generate_scenario(
            seed=child_seed(SEED, i), pool=pool, n_sats=3, n_tasks=15,
            horizon=2400, scenario_id=f"bench-{i:02d}",
        )
        for i in range(6)
    ]
    print(f"{len(scenarios)} scenarios, 3 sats x 15 tasks, 40 min horizon\n")

    all_rows = []
    for spec in (
        SchedulerSpec("random"),
        SchedulerSpec("greedy"),
        SchedulerSpec("hillclimb", {"budget": 8, "epoch_length": 60}),
    ):
        outcome = evaluate_parallel(
            scenarios, spec, base_seed=SEED, workers=4, split="demo",
        )
        assert outcome.ok, outcome.errors
        all_rows.extend(outcome.rows)
        cs = [r["CS"] for r in outcome.rows]
        cr = [r["CR"] for r in outcome.rows]
        wall = sum(r["wall_time_s"] for r in outcome.rows)
        print(f"{spec.name:10s} mean CR {np.mean(cr):.3f}  "
              f"mean CS {np.mean(cs):8.3f}  "
              f"(sim time {wall:5.1f}s over 4 workers)")

    with tempfile.TemporaryDirectory() as tmp:
        path = Path(tmp) / "report.csv"
        write_report_csv(path, all_rows)
        back = read_report_csv(path)
        print(f"\nreport: {len(back)} rows -> {path.name} "
              f"({path.stat().st_size} bytes)")
        best = min(back, key=lambda r: r["CS"])
        print(f"best single run: {best['scheduler']} on "
              f"{best['scenario_id']} (CS {best['CS']:.3f})")


if __name__ == "__main__":
    main()
