"""Feature construction for the learned matcher.

Satellite and task tokens are built by concatenating a static block (fixed
per scenario) with a dynamic block (queried from the live simulator each
timestep), then z-normalizing with dataset statistics.  Categorical fields
(sensor status, task status) additionally travel as integer codes so the
model can look them up in embedding tables; their float encodings stay in
the matrices so the documented column layout is self-contained.

Column layouts are spelled out in SAT_STATIC_FIELDS / SAT_DYNAMIC_FIELDS /
TASK_STATIC_FIELDS / TASK_DYNAMIC_FIELDS; ``layout_hash()`` fingerprints
them so checkpoints can refuse mismatched feature versions.

Scale conventions for dynamic satellite state: position is divided by
7000 km and velocity by 7.5 km/s (typical low-orbit magnitudes), battery
and wheel speeds are fractions of capacity, attitude stays in raw MRP /
rad/s units (all further squashed by z-normalization anyway).
"""

from __future__ import annotations

import hashlib
import math
from dataclasses import dataclass

import numpy as np

from .astro import target_ecef_unit

POSITION_SCALE_KM = 7000.0
VELOCITY_SCALE_KMS = 7.5

SAT_STATIC_FIELDS = (
    "inertia_scale", "mass",
    "panel_dir_z", "panel_dir_y", "panel_dir_x",
    "panel_area", "half_fov", "sensor_power", "battery_capacity",
    "rw_max_momentum", "rw_dir_z", "rw_dir_y", "rw_dir_x",
    "rw_power_rating", "rw_efficiency",
    "gain_k", "gain_ki", "gain_p", "integral_limit",
    "semi_major_axis", "eccentricity", "inclination",
    "raan", "arg_perigee", "true_anomaly",
)

SAT_DYNAMIC_FIELDS = (
    "battery_fraction", "sensor_on",
    "sigma_x", "sigma_y", "sigma_z",
    "omega_x", "omega_y", "omega_z",
    "wheel_frac_1", "wheel_frac_2", "wheel_frac_3",
    "pos_x", "pos_y", "pos_z",
    "vel_x", "vel_y", "vel_z",
)

TASK_STATIC_FIELDS = ("required_duration", "target_x", "target_y", "target_z")

TASK_DYNAMIC_FIELDS = (
    "release_offset", "due_offset", "progress",
    "status_pending", "status_released", "status_completed", "status_expired",
)

D_SAT = len(SAT_STATIC_FIELDS) + len(SAT_DYNAMIC_FIELDS)  # 25 + 17 = 42
D_TASK = len(TASK_STATIC_FIELDS) + len(TASK_DYNAMIC_FIELDS)  # 4 + 7 = 11

N_SENSOR_CODES = 2  # off / on
N_STATUS_CODES = 4  # pending / released / completed / expired


def layout_hash() -> str:
    text = "|".join(
        SAT_STATIC_FIELDS + SAT_DYNAMIC_FIELDS
        + TASK_STATIC_FIELDS + TASK_DYNAMIC_FIELDS
    )
    return hashlib.sha256(text.encode()).hexdigest()[:16]


@dataclass
class FeatureSet:
    """One timestep's model inputs."""

    sat: np.ndarray  # (N_S, D_SAT) float32
    task: np.ndarray  # (N_T, D_TASK) float32
    sensor_code: np.ndarray  # (N_S,) int8
    status_code: np.ndarray  # (N_T,) int8
    t: int


def static_blocks(scenario) -> tuple[np.ndarray, np.ndarray]:
    """Per-asset and per-task static feature rows, (N_S, 25) and (N_T, 4)."""
    rows = []
    for s in scenario.satellites:
        e = s.elements
        rows.append([
            s.inertia_scale, s.mass,
            *s.panel_direction, s.panel_area, s.half_fov, s.sensor_power,
            s.battery_capacity, s.rw_max_momentum, *s.rw_direction,
            s.rw_power_rating, s.rw_efficiency,
            s.gains.k, s.gains.ki, s.gains.p, s.gains.integral_limit,
            e.semi_major_axis, e.eccentricity, e.inclination,
            e.raan, e.arg_perigee, e.true_anomaly,
        ])
    sat = np.asarray(rows, dtype=np.float32)

    trows = []
    for task in scenario.tasks:
        ux, uy, uz = target_ecef_unit(task.target)
        trows.append([task.required_duration, ux, uy, uz])
    return sat, np.asarray(trows, dtype=np.float32)


def dynamic_state_blocks(state) -> tuple[np.ndarray, np.ndarray, np.ndarray]:
    """Raw dynamic state at the current (pre-step) simulator epoch.

    Returns ``(sat_dyn (N_S, 17) f32, task_dyn (N_T, 3) f32, status (N_T,)
    i8)``; the task status one-hot is expanded later so rollout caches stay
    compact.
    """
    sat = np.empty((state.n_sats, len(SAT_DYNAMIC_FIELDS)), dtype=np.float32)
    sat[:, 0] = state.battery / state.capacity_wh
    sat[:, 1] = state.sensor_on
    sat[:, 2:5] = state.sigma
    sat[:, 5:8] = state.omega
    sat[:, 8:11] = state.speeds / state.max_speed[:, None]
    sat[:, 11:14] = state.positions / POSITION_SCALE_KM
    sat[:, 14:17] = state.velocities / VELOCITY_SCALE_KMS

    t_s = state.time_s
    task = np.empty((state.n_tasks, 3), dtype=np.float32)
    task[:, 0] = state.release - t_s
    task[:, 1] = state.due - t_s
    task[:, 2] = np.minimum(1.0, state.consecutive / state.required)
    return sat, task, state.status.astype(np.int8)


def assemble_features(
    sat_static: np.ndarray,
    task_static: np.ndarray,
    sat_dyn: np.ndarray,
    task_dyn: np.ndarray,
    status: np.ndarray,
    t: int,
) -> FeatureSet:
    """Concatenate static and dynamic blocks into full (unnormalized) rows."""
    sat = np.concatenate([sat_static, sat_dyn], axis=1, dtype=np.float32)
    one_hot = np.zeros((status.shape[0], N_STATUS_CODES), dtype=np.float32)
    one_hot[np.arange(status.shape[0]), status.astype(int)] = 1.0
    task = np.concatenate([task_static, task_dyn, one_hot], axis=1, dtype=np.float32)
    if sat.shape[1] != D_SAT or task.shape[1] != D_TASK:
        raise ValueError(
            f"feature dims {sat.shape[1]}x{task.shape[1]} do not match layout "
            f"{D_SAT}x{D_TASK}"
        )
    sensor_code = (sat_dyn[:, 1] > 0.5).astype(np.int8)
    return FeatureSet(sat=sat, task=task, sensor_code=sensor_code,
                      status_code=status.astype(np.int8), t=int(t))


@dataclass
class NormStats:
    """Per-column mean/std over a training dataset; zero-std columns map
    to exactly 0 after normalization."""

    sat_mean: np.ndarray
    sat_std: np.ndarray
    task_mean: np.ndarray
    task_std: np.ndarray

    def normalize(self, fs: FeatureSet) -> FeatureSet:
        sat_std = np.where(self.sat_std > 0.0, self.sat_std, 1.0)
        task_std = np.where(self.task_std > 0.0, self.task_std, 1.0)
        sat = np.where(
            self.sat_std > 0.0, (fs.sat - self.sat_mean) / sat_std, 0.0
        ).astype(np.float32)
        task = np.where(
            self.task_std > 0.0, (fs.task - self.task_mean) / task_std, 0.0
        ).astype(np.float32)
        return FeatureSet(sat=sat, task=task, sensor_code=fs.sensor_code,
                          status_code=fs.status_code, t=fs.t)

    @staticmethod
    def identity() -> "NormStats":
        return NormStats(
            sat_mean=np.zeros(D_SAT, dtype=np.float32),
            sat_std=np.ones(D_SAT, dtype=np.float32),
            task_mean=np.zeros(D_TASK, dtype=np.float32),
            task_std=np.ones(D_TASK, dtype=np.float32),
        )

    def arrays(self) -> dict[str, np.ndarray]:
        return {
            "sat_mean": self.sat_mean, "sat_std": self.sat_std,
            "task_mean": self.task_mean, "task_std": self.task_std,
        }


def compute_norm_stats(feature_sets) -> NormStats:
    """Column statistics over every satellite/task row in the iterable."""
    sats = np.concatenate([fs.sat for fs in feature_sets], axis=0)
    tasks = np.concatenate([fs.task for fs in feature_sets], axis=0)
    if sats.shape[0] == 0 or tasks.shape[0] == 0:
        raise ValueError("cannot compute statistics over an empty dataset")
    return NormStats(
        sat_mean=sats.mean(axis=0).astype(np.float32),
        sat_std=sats.std(axis=0).astype(np.float32),
        task_mean=tasks.mean(axis=0).astype(np.float32),
        task_std=tasks.std(axis=0).astype(np.float32),
    )


def build_features(state, norm: NormStats | None = None) -> FeatureSet:
    """Model inputs for the live simulator state (one timestep)."""
    sat_static, task_static = static_blocks(state.scenario)
    sat_dyn, task_dyn, status = dynamic_state_blocks(state)
    fs = assemble_features(sat_static, task_static, sat_dyn, task_dyn,
                           status, state.t)
    return norm.normalize(fs) if norm is not None else fs


def time_embedding(t: float, dim: int) -> np.ndarray:
    """Interleaved sin/cos embedding over a geometric frequency ladder.

    ``out[2i] = sin(t / 10000^(2i/dim))``, ``out[2i+1]`` the matching cos,
    so t = 0 maps to (0, 1, 0, 1, ...).
    """
    if dim % 2 != 0:
        raise ValueError(f"time embedding dim must be even, got {dim}")
    i = np.arange(dim // 2, dtype=np.float64)
    freq = 1.0 / np.power(10000.0, 2.0 * i / dim)
    out = np.empty(dim, dtype=np.float64)
    out[0::2] = np.sin(t * freq)
    out[1::2] = np.cos(t * freq)
    return out


@dataclass
class ApproxLabels:
    """Weak supervision extracted from a finished trajectory at timestep t."""

    s: np.ndarray  # (N_S, N_T) int8, 1 = pair credited with a completion
    t_offset: np.ndarray  # (N_S, N_T) float32, defined where s = 1, else 0
    n: int


def derive_approx_labels(trajectory, t: int, n: int,
                         max_offset: float | None = None) -> ApproxLabels:
    """Which (satellite, task) pairs pay off within the rest of the run.

    A pair is positive when the task eventually completed and the satellite
    holds a contribution run with at least ``n`` consecutive timesteps at or
    after ``t`` (a run already in progress counts from ``t`` on).  The time
    target is the wait until that contribution begins, in seconds.

    ``max_offset`` (seconds) optionally drops pairs whose contribution lies
    further in the future: with a horizon-free positive set, a gated decode
    will pre-point at far-away passes whose relative ranking the assignment
    head never learned, so training recipes usually cap the lookahead to a
    slew time or two.  ``None`` keeps every future run.
    """
    n_sats, n_tasks = trajectory.n_sats, trajectory.n_tasks
    s = np.zeros((n_sats, n_tasks), dtype=np.int8)
    t_off = np.zeros((n_sats, n_tasks), dtype=np.float32)
    completed = np.isfinite(np.asarray(trajectory.completion_time, dtype=float))
    for sat, task, start, length in trajectory.runs:
        if not completed[task]:
            continue
        begin = max(int(start), t)
        if int(start) + int(length) - begin < n:
            continue
        offset = (begin - t) * trajectory.dt
        if max_offset is not None and offset > max_offset:
            continue
        if s[sat, task] and t_off[sat, task] <= offset:
            continue
        s[sat, task] = 1
        t_off[sat, task] = offset
    return ApproxLabels(s=s, t_offset=t_off, n=n)
