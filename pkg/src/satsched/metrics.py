"""Scheduling quality metrics and the lower-is-better composite score.

Six numbers grade one trajectory:

- CR   completion rate: completed tasks / all tasks
- PCR  partial completion rate: mean over tasks of
       min(1, best consecutive observation / required duration)
- WCR  workload completion rate: completed observation seconds /
       requested observation seconds
- TAT  turnaround time: mean (completion - release) over completed tasks,
       reported in hours (0 when nothing completed)
- PC   power consumption: total sensor energy drawn, Wh
- CS   composite score,

           CS = 1 / max(w_cr*CR + w_pcr*PCR + w_wcr*WCR, eps)
                + TAT / tat_scale + PC / pc_scale

  (lower is better; eps floors the denominator so an all-zero run scores
  finitely).

Aggregation over a split is the arithmetic mean of each metric; CS is
averaged, not recomputed from averaged components.
"""

from __future__ import annotations

from dataclasses import dataclass, replace
from typing import Iterable, Sequence

import numpy as np


@dataclass(frozen=True)
class CSWeights:
    w_cr: float = 0.6
    w_pcr: float = 0.2
    w_wcr: float = 0.2
    tat_scale: float = 7.0  # hours
    pc_scale: float = 100.0  # Wh
    denom_floor: float = 1e-4


DEFAULT_WEIGHTS = CSWeights()


@dataclass(frozen=True)
class MetricsReport:
    cr: float
    pcr: float
    wcr: float
    tat_h: float
    pc_wh: float
    cs: float | None = None


def compute_cs(report: MetricsReport, weights: CSWeights = DEFAULT_WEIGHTS) -> float:
    denom = (
        weights.w_cr * report.cr
        + weights.w_pcr * report.pcr
        + weights.w_wcr * report.wcr
    )
    return (
        1.0 / max(denom, weights.denom_floor)
        + report.tat_h / weights.tat_scale
        + report.pc_wh / weights.pc_scale
    )


def compute_metrics(trajectory, scenario, weights: CSWeights = DEFAULT_WEIGHTS) -> MetricsReport:
    """Score one finished trajectory (CS included).

    Reads the trajectory's task outcome arrays (completion times, best
    consecutive stretches, sensor-on seconds) against the scenario's task
    list.  Works with any object exposing those attributes.
    """
    required = np.array([t.required_duration for t in scenario.tasks])
    release = np.array([t.release for t in scenario.tasks])
    completion_time = np.asarray(trajectory.completion_time, dtype=float)
    completed = np.isfinite(completion_time)
    max_consec = np.asarray(trajectory.max_consecutive, dtype=float)

    cr = float(np.mean(completed)) if required.size else 0.0
    pcr = float(np.mean(np.minimum(1.0, max_consec / required))) if required.size else 0.0
    total_work = float(np.sum(required))
    wcr = float(np.sum(required[completed]) / total_work) if total_work > 0.0 else 0.0
    if completed.any():
        tat_h = float(np.mean(completion_time[completed] - release[completed]) / 3600.0)
    else:
        tat_h = 0.0
    sensor_power = np.array([s.sensor_power for s in scenario.satellites])
    pc_wh = float(np.sum(sensor_power * np.asarray(trajectory.sensor_on_seconds)) / 3600.0)

    report = MetricsReport(cr=cr, pcr=pcr, wcr=wcr, tat_h=tat_h, pc_wh=pc_wh)
    return replace(report, cs=compute_cs(report, weights))


def aggregate(reports: Sequence[MetricsReport] | Iterable[MetricsReport]) -> MetricsReport:
    """Mean of each metric across reports (CS averaged, not recomputed)."""
    reports = list(reports)
    if not reports:
        raise ValueError("cannot aggregate zero reports")
    if any(r.cs is None for r in reports):
        raise ValueError("aggregate requires CS to be set on every report")
    return MetricsReport(
        cr=float(np.mean([r.cr for r in reports])),
        pcr=float(np.mean([r.pcr for r in reports])),
        wcr=float(np.mean([r.wcr for r in reports])),
        tat_h=float(np.mean([r.tat_h for r in reports])),
        pc_wh=float(np.mean([r.pc_wh for r in reports])),
        cs=float(np.mean([r.cs for r in reports])),
    )
