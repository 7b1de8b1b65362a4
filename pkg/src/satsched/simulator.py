"""Scenario state machine: assignments in, constraint-checked progress out.

One call to :func:`step` advances a scenario by one control timestep with a
fixed sub-update order:

1. propagate orbits to the end-of-step epoch
2. translate the assignment vector into sensor + guidance commands
3. integrate attitude dynamics under the feedback controller
4. update battery energy (solar charge vs. wheel + sensor load)
5. evaluate the five per-assignment constraint flags
   (dynamics, energy, FOV, time window, line of sight)
6. update task lifecycles (release/progress/complete/expire) and record
   per-satellite contribution runs
7. append the timestep record to the log

Conventions: step k moves the clock from k*dt to (k+1)*dt; constraint
geometry uses end-of-step state, while the energy check uses the pre-step
battery level (a sensor can only draw energy that was on board).  Task
release is time-driven — the window flag treats a task as released once
(k+1)*dt >= release even though the status array flips at the end of that
step — so an assignment on the releasing step already counts.

Initial runtime state: battery full, sensors off, wheels and body at rest,
attitude aligned with inertial axes.  Invalid assignments (constraint
violations) cause no task progress but never crash the run; the sensor draws
power whenever commanded on, valid or not.
"""

from __future__ import annotations

import hashlib
import json
from dataclasses import dataclass, field

import numpy as np

from . import attitude as att
from .astro import OrbitEnsemble, eclipse_check, rotate_ecef_to_eci, target_ecef_unit, visibility_check
from .assets import Scenario

TASK_PENDING = 0
TASK_RELEASED = 1
TASK_COMPLETED = 2
TASK_EXPIRED = 3
TASK_STATUS_NAMES = ("pending", "released", "completed", "expired")

# Constraint flag bits (1 = satisfied) in TrajectoryLog.flags.
FLAG_DYNAMICS = 1
FLAG_ENERGY = 2
FLAG_FOV = 4
FLAG_WINDOW = 8
FLAG_LOS = 16
FLAG_ALL = 31


class AssignmentError(ValueError):
    """Assignment vector malformed (wrong length or out-of-range entry)."""


class SchedulerError(RuntimeError):
    """A scheduler raised during observe(); wraps the original error."""


@dataclass(frozen=True)
class SimConfig:
    substeps: int = 10  # RK4 substeps per control step
    decision_interval: int = 1  # timesteps between scheduler invocations
    panel_efficiency: float = 0.2
    boresight_body: tuple[float, float, float] = (0.0, 0.0, 1.0)
    initial_battery_fraction: float = 1.0
    min_elevation: float = 0.0  # rad, visibility mask
    use_fast_kernel: bool = True


DEFAULT_CONFIG = SimConfig()


def config_hash(scenario: Scenario, config: SimConfig) -> str:
    """Short stable hash of everything that shapes the physics."""
    payload = {
        "earth": {
            "mu": scenario.earth.mu,
            "radius": scenario.earth.radius,
            "rotation_rate": scenario.earth.rotation_rate,
            "gmst_at_epoch": scenario.earth.gmst_at_epoch,
            "solar_flux": scenario.earth.solar_flux,
            "sun_direction": list(scenario.earth.sun_direction),
        },
        "dt": scenario.dt,
        "substeps": config.substeps,
        "panel_efficiency": config.panel_efficiency,
        "boresight_body": list(config.boresight_body),
        "initial_battery_fraction": config.initial_battery_fraction,
        "min_elevation": config.min_elevation,
    }
    text = json.dumps(payload, sort_keys=True, separators=(",", ":"))
    return hashlib.sha256(text.encode()).hexdigest()[:16]


class SimState:
    """Mutable runtime state of one scenario (struct-of-arrays layout).

    Schedulers receive this object read-only in ``observe``; the documented
    observation surface is the attribute set used below plus the helpers
    ``target_positions_now`` and ``selectable_tasks``.
    """

    def __init__(self, scenario: Scenario, config: SimConfig = DEFAULT_CONFIG):
        self.scenario = scenario
        self.config = config
        n, m = scenario.n_sats, scenario.n_tasks
        self.n_sats, self.n_tasks = n, m
        self.dt = scenario.dt
        self.horizon = scenario.horizon
        self.t = 0  # completed steps; sim time = t * dt

        # Full-horizon ephemerides, (horizon+1, N, 3).
        times = np.arange(scenario.horizon + 1, dtype=float) * scenario.dt
        ens = OrbitEnsemble([s.elements for s in scenario.satellites], scenario.earth)
        self.positions_all, self.velocities_all = ens.states_at(times)

        sats = scenario.satellites
        self.inertia = np.array([s.inertia_scale for s in sats])
        self.gain_k = np.array([s.gains.k for s in sats])
        self.gain_ki = np.array([s.gains.ki for s in sats])
        self.gain_p = np.array([s.gains.p for s in sats])
        self.integral_limit = np.array([s.gains.integral_limit for s in sats])
        self.wheel_axes = np.stack([s.wheel_axes for s in sats])
        wheels = [s.wheels() for s in sats]
        self.wheel_inertia = np.array([w.wheel_inertia for w in wheels])
        self.max_speed = np.array([w.max_speed for w in wheels])
        self.wheel_efficiency = np.array([s.rw_efficiency for s in sats])
        self.sensor_power = np.array([s.sensor_power for s in sats])
        self.cos_half_fov = np.cos(np.array([s.half_fov for s in sats]))
        self.panel_area = np.array([s.panel_area for s in sats])
        self.panel_normal_body = np.stack([s.panel_normal_body for s in sats])
        self.capacity_wh = np.array([s.battery_capacity_wh for s in sats])
        self.boresight = np.asarray(config.boresight_body, dtype=float)
        self.sun = scenario.earth.sun_unit()

        self.required = np.array([t.required_duration for t in scenario.tasks])
        self.release = np.array([t.release for t in scenario.tasks])
        self.due = np.array([t.due for t in scenario.tasks])
        self.target_units = np.stack([target_ecef_unit(t.target) for t in scenario.tasks])

        # Mutable satellite state.
        self.sigma = np.zeros((n, 3))
        self.omega = np.zeros((n, 3))
        self.speeds = np.zeros((n, 3))
        self.integral = np.zeros((n, 3))
        self.battery = self.capacity_wh * config.initial_battery_fraction
        self.sensor_on = np.zeros(n, dtype=bool)
        self.prev_assignment = np.zeros(n, dtype=np.int64)
        self.sensor_on_seconds = np.zeros(n)

        # Mutable task state.
        self.status = np.full(m, TASK_PENDING, dtype=np.int8)
        self.consecutive = np.zeros(m)
        self.max_consecutive = np.zeros(m)
        self.completion_time = np.full(m, np.nan)

        # Per-satellite open contribution runs + closed-run list.
        self.open_task = np.full(n, -1, dtype=np.int64)
        self.open_start = np.full(n, -1, dtype=np.int64)
        self.runs: list[tuple[int, int, int, int]] = []

        self._tp_step = -1
        self._tp_cache: np.ndarray | None = None

    # -- observation helpers -------------------------------------------------

    @property
    def time_s(self) -> float:
        return self.t * self.dt

    @property
    def positions(self) -> np.ndarray:
        return self.positions_all[self.t]

    @property
    def velocities(self) -> np.ndarray:
        return self.velocities_all[self.t]

    def target_positions_at(self, step_index: int) -> np.ndarray:
        """ECI positions of all ground targets at a step boundary, (N_T, 3)."""
        if step_index != self._tp_step:
            self._tp_cache = self.scenario.earth.radius * rotate_ecef_to_eci(
                self.target_units, step_index * self.dt, self.scenario.earth
            )
            self._tp_step = step_index
        return self._tp_cache

    def target_positions_now(self) -> np.ndarray:
        return self.target_positions_at(self.t)

    def selectable_tasks(self) -> np.ndarray:
        """Mask of tasks currently inside their window and not finished.

        Release is evaluated by time (a pending task whose release time has
        arrived counts), matching the window constraint flag.
        """
        open_status = (self.status != TASK_COMPLETED) & (self.status != TASK_EXPIRED)
        return open_status & (self.release <= self.time_s) & (self.time_s <= self.due)


def step(state: SimState, assignment: np.ndarray) -> list[tuple[str, int]]:
    """Advance one timestep under ``assignment``; returns lifecycle events."""
    n, m = state.n_sats, state.n_tasks
    a = np.asarray(assignment)
    if a.shape != (n,):
        raise AssignmentError(f"assignment shape {a.shape}, expected ({n},)")
    if not np.issubdtype(a.dtype, np.integer):
        raise AssignmentError(f"assignment dtype {a.dtype} is not integral")
    a = a.astype(np.int64)
    if ((a < 0) | (a > m)).any():
        bad = a[(a < 0) | (a > m)][0]
        raise AssignmentError(f"assignment entry {bad} outside [0, {m}]")
    if state.t >= state.horizon:
        raise RuntimeError("scenario horizon already reached")

    k = state.t
    t_new = k + 1
    time_s = t_new * state.dt
    cfg = state.config

    # (2) translate assignment into commands.
    assigned = a > 0
    tgt = np.where(assigned, a - 1, 0)
    changed = a != state.prev_assignment
    state.integral[changed] = 0.0  # integrator handoff reset on retarget

    # (1)+(2) end-of-step geometry for guidance.
    pos_new = state.positions_all[t_new]
    tpos = state.target_positions_at(t_new)
    sigma_ref = np.zeros((n, 3))
    if assigned.any():
        sigma_ref[assigned] = att.pointing_reference_batch(
            pos_new[assigned], tpos[tgt[assigned]], state.boresight
        )

    # (3) attitude dynamics under held control torque.
    out = att.control_and_integrate(
        state.sigma, state.omega, state.speeds, state.integral, sigma_ref,
        ~assigned, state.gain_k, state.gain_ki, state.gain_p,
        state.integral_limit, state.inertia, state.wheel_axes,
        state.wheel_inertia, state.max_speed, state.wheel_efficiency,
        state.dt, cfg.substeps, use_fast_kernel=cfg.use_fast_kernel,
    )
    state.sigma = out["sigma"]
    state.omega = out["omega"]
    state.speeds = out["speeds"]
    state.integral = out["integral"]
    wheel_power = out["wheel_power"]

    # (4) power: solar charge vs. wheel + sensor load, clamped to [0, cap].
    battery_pre = state.battery
    dcm = att.mrp_to_dcm_batch(state.sigma)
    panel_normal_eci = np.einsum("nji,nj->ni", dcm, state.panel_normal_body)
    in_sun = ~eclipse_check(pos_new, state.scenario.earth)
    cos_inc = np.maximum(0.0, panel_normal_eci @ state.sun)
    charge = state.scenario.earth.solar_flux * state.panel_area * cfg.panel_efficiency * cos_inc * in_sun
    load = wheel_power + state.sensor_power * assigned
    state.battery = np.clip(
        battery_pre + (charge - load) * state.dt / 3600.0, 0.0, state.capacity_wh
    )

    # (5) constraint flags for the assigned pairs.
    dynamics_ok = ~out["saturated"]
    energy_ok = battery_pre >= state.sensor_power * state.dt / 3600.0
    boresight_eci = np.einsum("nji,j->ni", dcm, state.boresight)
    los = tpos[tgt] - pos_new
    los /= np.linalg.norm(los, axis=1, keepdims=True)
    fov_ok = np.sum(boresight_eci * los, axis=1) >= state.cos_half_fov
    los_ok = np.asarray(
        visibility_check(pos_new, tpos[tgt], state.scenario.earth, cfg.min_elevation)
    )
    tstat = state.status[tgt]
    window_ok = (
        (state.release[tgt] <= time_s)
        & (time_s <= state.due[tgt])
        & (tstat != TASK_COMPLETED)
        & (tstat != TASK_EXPIRED)
    )
    valid = assigned & dynamics_ok & energy_ok & fov_ok & los_ok & window_ok
    flags = np.where(
        assigned,
        dynamics_ok * FLAG_DYNAMICS
        + energy_ok * FLAG_ENERGY
        + fov_ok * FLAG_FOV
        + window_ok * FLAG_WINDOW
        + los_ok * FLAG_LOS,
        FLAG_ALL,
    ).astype(np.uint8)

    # (6) task lifecycle.
    events: list[tuple[str, int]] = []
    newly_released = (state.status == TASK_PENDING) & (time_s >= state.release)
    if newly_released.any():
        state.status[newly_released] = TASK_RELEASED
        events.extend(("release", int(j)) for j in np.flatnonzero(newly_released))

    observed = np.zeros(m, dtype=bool)
    observed[tgt[valid]] = True
    active = state.status == TASK_RELEASED
    state.consecutive[observed & active] += state.dt
    state.max_consecutive = np.maximum(state.max_consecutive, state.consecutive)

    done = active & observed & (state.consecutive >= state.required) & (time_s <= state.due)
    if done.any():
        state.status[done] = TASK_COMPLETED
        state.completion_time[done] = time_s
        state.consecutive[done] = state.required[done]  # freeze at the requirement
        events.extend(("complete", int(j)) for j in np.flatnonzero(done))

    gap = active & ~observed & ~done
    state.consecutive[gap] = 0.0

    expired = (
        ((state.status == TASK_RELEASED) | (state.status == TASK_PENDING))
        & (time_s > state.due)
    )
    if expired.any():
        state.status[expired] = TASK_EXPIRED
        events.extend(("expire", int(j)) for j in np.flatnonzero(expired))

    # Per-satellite contribution runs (step index k belongs to this step).
    for i in range(n):
        j = int(tgt[i]) if valid[i] else -1
        if state.open_task[i] == j:
            continue
        if state.open_task[i] >= 0:
            state.runs.append(
                (i, int(state.open_task[i]), int(state.open_start[i]),
                 k - int(state.open_start[i]))
            )
        state.open_task[i] = j
        state.open_start[i] = k if j >= 0 else -1

    # (7) bookkeeping.
    state.sensor_on = assigned
    state.sensor_on_seconds = state.sensor_on_seconds + assigned * state.dt
    state.prev_assignment = a
    state.t = t_new

    state._last_valid = valid
    state._last_flags = flags
    return events


def close_open_runs(state: SimState) -> None:
    """Flush still-open contribution runs at the end of a rollout."""
    for i in range(state.n_sats):
        if state.open_task[i] >= 0:
            state.runs.append(
                (i, int(state.open_task[i]), int(state.open_start[i]),
                 state.t - int(state.open_start[i]))
            )
            state.open_task[i] = -1
            state.open_start[i] = -1


@dataclass
class TrajectoryLog:
    """Complete record of one rollout; serializable and replayable."""

    scenario_id: str
    seed: int
    scheduler: str
    config_hash: str
    horizon: int
    dt: float
    n_sats: int
    n_tasks: int
    assignments: np.ndarray  # (H, N) int16
    valid: np.ndarray  # (H, N) bool
    flags: np.ndarray  # (H, N) uint8
    battery: np.ndarray  # (H, N) float
    events: list[list[tuple[str, int]]]  # per step
    completion_time: np.ndarray  # (T,) float, nan = never
    max_consecutive: np.ndarray  # (T,) s
    final_status: np.ndarray  # (T,) int8
    sensor_on_seconds: np.ndarray  # (N,) s
    runs: np.ndarray  # (R, 4) int: sat, task, start step, length
    tag: str = ""
    observations: object | None = field(default=None, compare=False, repr=False)


@dataclass
class ObservationCache:
    """Raw pre-step dynamic state, one row per timestep (training cache)."""

    sat_dyn: np.ndarray  # (H, N, d) float32, layout per features module
    task_dyn: np.ndarray  # (H, T, d) float32
    task_status: np.ndarray  # (H, T) int8


class ReplayScheduler:
    """Feeds back the assignments stored in a trajectory log.

    Keeps the original scheduler name so a replayed log is field-for-field
    identical to the source log.
    """

    def __init__(self, trajectory: TrajectoryLog):
        self._assignments = np.asarray(trajectory.assignments, dtype=np.int64)
        self.name = trajectory.scheduler

    def reset(self, scenario: Scenario, seed: int) -> None:
        if self._assignments.shape[1] != scenario.n_sats:
            raise ValueError("trajectory does not match scenario dimensions")

    def observe(self, state: SimState) -> np.ndarray:
        return self._assignments[state.t]


def rollout(
    scenario: Scenario,
    scheduler,
    seed: int = 0,
    config: SimConfig = DEFAULT_CONFIG,
    record_observations: bool = False,
    tag: str = "",
) -> TrajectoryLog:
    """Run a scheduler over the full horizon and log every timestep.

    The scheduler is re-invoked every ``config.decision_interval`` steps and
    its assignment held in between.  Identical (scenario, scheduler, seed,
    config) produce identical logs.
    """
    state = SimState(scenario, config)
    try:
        scheduler.reset(scenario, seed)
    except Exception as exc:  # noqa: BLE001 - diagnostic wrapper
        raise SchedulerError(f"reset failed on {scenario.scenario_id}: {exc!r}") from exc

    h, n, m = scenario.horizon, scenario.n_sats, scenario.n_tasks
    assignments = np.zeros((h, n), dtype=np.int16)
    valid = np.zeros((h, n), dtype=bool)
    flags = np.zeros((h, n), dtype=np.uint8)
    battery = np.zeros((h, n))
    events: list[list[tuple[str, int]]] = []

    recorder = None
    if record_observations:
        from .features import dynamic_state_blocks

        first = dynamic_state_blocks(state)
        sat_rows = np.zeros((h,) + first[0].shape, dtype=np.float32)
        task_rows = np.zeros((h,) + first[1].shape, dtype=np.float32)
        status_rows = np.zeros((h, m), dtype=np.int8)
        recorder = dynamic_state_blocks

    current = np.zeros(n, dtype=np.int64)
    for k in range(h):
        if recorder is not None:
            sat_dyn, task_dyn, task_status = recorder(state)
            sat_rows[k] = sat_dyn
            task_rows[k] = task_dyn
            status_rows[k] = task_status
        if k % config.decision_interval == 0:
            try:
                current = np.asarray(scheduler.observe(state))
            except Exception as exc:  # noqa: BLE001
                raise SchedulerError(
                    f"observe failed on {scenario.scenario_id} at step {k}: {exc!r}"
                ) from exc
        step_events = step(state, current)
        assignments[k] = current
        valid[k] = state._last_valid
        flags[k] = state._last_flags
        battery[k] = state.battery
        events.append(step_events)

    close_open_runs(state)
    runs = np.array(sorted(state.runs), dtype=np.int64).reshape(-1, 4)

    log = TrajectoryLog(
        scenario_id=scenario.scenario_id,
        seed=seed,
        scheduler=getattr(scheduler, "name", type(scheduler).__name__),
        config_hash=config_hash(scenario, config),
        horizon=h,
        dt=scenario.dt,
        n_sats=n,
        n_tasks=m,
        assignments=assignments,
        valid=valid,
        flags=flags,
        battery=battery,
        events=events,
        completion_time=state.completion_time.copy(),
        max_consecutive=state.max_consecutive.copy(),
        final_status=state.status.copy(),
        sensor_on_seconds=state.sensor_on_seconds.copy(),
        runs=runs,
        tag=tag,
    )
    if record_observations:
        log.observations = ObservationCache(
            sat_dyn=sat_rows, task_dyn=task_rows, task_status=status_rows
        )
    return log


def replay(
    trajectory: TrajectoryLog,
    scenario: Scenario,
    config: SimConfig = DEFAULT_CONFIG,
    record_observations: bool = False,
) -> TrajectoryLog:
    """Re-simulate a logged assignment sequence (replay contract)."""
    return rollout(
        scenario,
        ReplayScheduler(trajectory),
        seed=trajectory.seed,
        config=config,
        record_observations=record_observations,
        tag=trajectory.tag,
    )
