"""Label-generation pipeline: greedy rollouts repaired by pair blacklisting.

Produces one accepted trajectory per scenario for supervised training.  A
greedy rollout is inspected for (satellite, task) pairings that yielded zero
valid imaging progress within a grace window after being assigned; those
pairs are blacklisted and the rollout re-rolled, up to a bounded number of
rounds.  The best rollout is accepted only if its composite score clears a
quality threshold.
"""

from __future__ import annotations

from dataclasses import dataclass, field

import numpy as np

from .metrics import DEFAULT_WEIGHTS, CSWeights, MetricsReport, compute_metrics
from .schedulers import GreedyDistanceScheduler
from .simulator import DEFAULT_CONFIG, SimConfig, TrajectoryLog, rollout

__all__ = ["AnnotationResult", "find_dead_pairs", "annotate_scenario"]


@dataclass
class AnnotationResult:
    accepted: bool
    trajectory: TrajectoryLog | None
    metrics: MetricsReport | None
    rounds: int  # rollouts performed
    blacklist: np.ndarray  # (N_S, N_T) bool, final state
    history: list[float] = field(default_factory=list)  # CS per round


def find_dead_pairs(
    trajectory: TrajectoryLog, grace: int, n_tasks: int
) -> np.ndarray:
    """Pairs whose assignment runs stalled: no valid step in the grace window.

    A run of consecutive steps where satellite ``i`` holds task ``j`` is
    judged on its first ``grace`` steps; runs shorter than the grace window
    are left alone (the scheduler moved on before the pairing could prove
    itself).  Returns an (N_S, N_T) boolean mask.
    """
    n = trajectory.assignments.shape[1]
    dead = np.zeros((n, n_tasks), dtype=bool)
    for i in range(n):
        a = trajectory.assignments[:, i]
        v = trajectory.valid[:, i]
        t = 0
        h = a.shape[0]
        while t < h:
            j = a[t]
            end = t
            while end < h and a[end] == j:
                end += 1
            if j > 0 and end - t >= grace and not v[t : t + grace].any():
                dead[i, j - 1] = True
            t = end
    return dead


def annotate_scenario(
    scenario,
    seed: int = 0,
    grace: int = 30,
    max_rounds: int = 5,
    accept_threshold: float = 8.0,
    sim_config: SimConfig = DEFAULT_CONFIG,
    weights: CSWeights = DEFAULT_WEIGHTS,
) -> AnnotationResult:
    """Greedy rollout -> blacklist stalled pairs -> re-roll, keep the best.

    Stops early when a round introduces no new blacklisted pair.  The best
    trajectory across rounds is accepted iff its composite score is at most
    ``accept_threshold`` (lower is better).
    """
    n, m = scenario.n_sats, scenario.n_tasks
    blacklist = np.zeros((n, m), dtype=bool)
    best: TrajectoryLog | None = None
    best_metrics: MetricsReport | None = None
    history: list[float] = []
    rounds = 0

    for _ in range(max_rounds):
        scheduler = GreedyDistanceScheduler(blacklist=blacklist.copy())
        traj = rollout(scenario, scheduler, seed=seed, config=sim_config)
        report = compute_metrics(traj, scenario, weights)
        rounds += 1
        history.append(report.cs)
        if best_metrics is None or report.cs < best_metrics.cs:
            best, best_metrics = traj, report
        new_dead = find_dead_pairs(traj, grace, m) & ~blacklist
        if not new_dead.any():
            break
        blacklist |= new_dead

    accepted = best_metrics is not None and best_metrics.cs <= accept_threshold
    return AnnotationResult(
        accepted=accepted,
        trajectory=best if accepted else None,
        metrics=best_metrics if accepted else None,
        rounds=rounds,
        blacklist=blacklist,
        history=history,
    )
