"""Train a toy matcher on annotated rollouts and pit it against greedy.

End-to-end imitation pipeline in miniature: annotate scenarios with the
screened greedy expert, fit the attention matcher on the resulting
(state, assignment) stream, then score the learned policy on the same
scenario family.  Small model, few steps — minutes, not hours.
"""

import tempfile
from pathlib import Path

import numpy as np
import torch

from satsched.annotate import annotate_scenario
from satsched.assets import child_seed, generate_asset_pool, generate_scenario
from satsched.metrics import compute_metrics
from satsched.model import Matcher, MatcherConfig
from satsched.schedulers import GreedyDistanceScheduler
from satsched.simulator import replay, rollout
from satsched.training import (
    MatcherScheduler,
    TrainConfig,
    TrajectoryDataset,
    fit_norm_stats,
    load_checkpoint,
    save_checkpoint,
    train_supervised,
)

SEED = 31


def main():
    pool = generate_asset_pool(seed=SEED, count=8)
    scenarios = [
        generate_scenario(
            seed=child_seed(SEED, i), pool=pool, n_sats=2, n_tasks=10,
            horizon=2400, scenario_id=f"train-{i:02d}",
        )
        for i in range(4)
    ]

    print("annotating with the screened greedy expert:")
    dataset = TrajectoryDataset()
    for s in scenarios:
        res = annotate_scenario(s, seed=child_seed(SEED, "x", s.scenario_id),
                                accept_threshold=float("inf"))
        traj = replay(res.trajectory, s, record_observations=True)
        dataset.add(s, traj)
        print(f"  {s.scenario_id}: expert CS {res.metrics.cs:8.3f}")

    norm = fit_norm_stats(dataset)
    torch.manual_seed(SEED)
    model = Matcher(MatcherConfig(width=64, depth=2, heads=4, time_dim=16))
    config = TrainConfig(steps=600, lr=1e-3, warmup_steps=60,
                         batch_timesteps=48, w_s=2.0, w_t=1e-6, tau_s=0.35,
                         seed=SEED)
    history = train_supervised(model, dataset, config, norm)
    print("\ntraining:")
    for h in history[::100] + [history[-1]]:
        print(f"  step {h['step']:4d}  assignment loss {h['l_a']:.4f}  "
              f"feasibility loss {h['l_s']:.4f}")

    with tempfile.TemporaryDirectory() as tmp:
        path = Path(tmp) / "matcher.pt"
        save_checkpoint(path, model, norm, config)
        model2, norm2, _ = load_checkpoint(path)
        print(f"\ncheckpoint: {path.stat().st_size} bytes, reload OK")

        print("\nhead-to-head on the training family:")
        rows = []
        for s in scenarios:
            seed = child_seed(SEED, "eval", s.scenario_id)
            g = compute_metrics(
                rollout(s, GreedyDistanceScheduler(), seed=seed), s)
            m = compute_metrics(
                rollout(s, MatcherScheduler(model2, norm2,
                                            tau_s=config.tau_s), seed=seed), s)
            rows.append((g.cs, m.cs))
            print(f"  {s.scenario_id}: greedy CS {g.cs:8.3f}   "
                  f"matcher CS {m.cs:8.3f}")
        g_mean = np.mean([r[0] for r in rows])
        m_mean = np.mean([r[1] for r in rows])
        print(f"\nmean CS: greedy {g_mean:.3f}  matcher {m_mean:.3f}")


if __name__ == "__main__":
    main()
