"""Supervised training and iterative dataset growth for the matcher.

The pipeline mirrors standard imitation bootstrapping: annotated rollouts
supply (state, assignment) pairs plus delayed-payoff labels, a matcher is
fit by gradient descent, then the trained matcher generates fresh rollouts
whose best trajectories (composite score under a threshold) are folded
back into the dataset for the next stage.

Time is fed to the model as the integer decision step of the source
trajectory (the same coordinate ``features.build_features`` uses live).
Normalization statistics are computed once from the initial dataset and
frozen; later stages reuse them so checkpoints stay comparable.
"""

from __future__ import annotations

from dataclasses import asdict, dataclass, field

import numpy as np
import torch

from . import features
from .assets import child_seed
from .features import NormStats, assemble_features, compute_norm_stats, static_blocks
from .metrics import CSWeights, compute_metrics
from .model import (
    Matcher,
    MatcherConfig,
    infer_assignment,
    loss_assignment,
    loss_feasibility,
    loss_time,
    total_loss,
)
from .simulator import SimConfig, rollout

CHECKPOINT_VERSION = 1


@dataclass
class TrainConfig:
    """Hyperparameters for supervised fitting and iterative growth."""

    lr: float = 1e-4
    betas: tuple = (0.9, 0.98)
    weight_decay: float = 1e-4
    warmup_steps: int = 100
    warmup_floor: float = 1e-8
    steps: int = 300
    batch_timesteps: int = 48
    label_window: int = 5  # consecutive steps a pair must still deliver
    label_horizon: float | None = None  # cap on label lookahead, seconds
    w_s: float = 1.0
    w_t: float = 1.0
    w_a: float = 1.0
    tau_s: float = 0.5  # feasibility gate at inference
    tau_e: float = 6.0  # keep rollouts scoring at or under this
    stages: int = 3
    seed: int = 0

    def lr_at(self, step: int) -> float:
        return self.lr * self._warmup_factor(step)

    def _warmup_factor(self, step: int) -> float:
        if step >= self.warmup_steps:
            return 1.0
        floor = self.warmup_floor / self.lr
        return floor + (1.0 - floor) * step / self.warmup_steps


@dataclass
class TrainingExample:
    """One expert rollout with its cached per-step observations."""

    scenario: object
    trajectory: object
    sat_static: np.ndarray
    task_static: np.ndarray


class TrajectoryDataset:
    """Pool of (scenario, trajectory) pairs the matcher learns from.

    Every trajectory must carry an observation cache (``record_observations``
    at rollout time); the dataset only ever grows, never shrinks.
    """

    def __init__(self):
        self.examples: list[TrainingExample] = []

    def __len__(self) -> int:
        return len(self.examples)

    def add(self, scenario, trajectory) -> None:
        if trajectory.observations is None:
            raise ValueError(
                f"trajectory {trajectory.scenario_id!r} has no observation "
                "cache; rerun the rollout with record_observations=True"
            )
        sat_static, task_static = static_blocks(scenario)
        self.examples.append(
            TrainingExample(scenario, trajectory, sat_static, task_static)
        )

    def features_at(self, index: int, t: int) -> features.FeatureSet:
        ex = self.examples[index]
        obs = ex.trajectory.observations
        return assemble_features(
            ex.sat_static, ex.task_static,
            obs.sat_dyn[t], obs.task_dyn[t], obs.task_status[t], t,
        )

    def iter_feature_sets(self, stride: int = 1):
        for i, ex in enumerate(self.examples):
            for t in range(0, ex.trajectory.horizon, stride):
                yield self.features_at(i, t)

    def sample_batch(self, rng: np.random.Generator, batch_timesteps: int,
                     norm: NormStats, label_window: int,
                     label_horizon: float | None = None) -> dict:
        """Random timesteps from one trajectory, stacked along the batch axis.

        Drawing from a single trajectory keeps the satellite/task counts
        uniform inside the batch, so no padding is needed.
        """
        if not self.examples:
            raise ValueError("dataset is empty")
        index = int(rng.integers(len(self.examples)))
        ex = self.examples[index]
        steps = rng.integers(0, ex.trajectory.horizon, size=batch_timesteps)
        sat, task, sensor, status, times = [], [], [], [], []
        lab_s, lab_t, lab_a = [], [], []
        for t in steps:
            t = int(t)
            fs = norm.normalize(self.features_at(index, t))
            sat.append(fs.sat)
            task.append(fs.task)
            sensor.append(fs.sensor_code)
            status.append(fs.status_code)
            times.append(float(t))
            labels = features.derive_approx_labels(
                ex.trajectory, t, label_window, max_offset=label_horizon
            )
            lab_s.append(labels.s)
            lab_t.append(labels.t_offset)
            lab_a.append(ex.trajectory.assignments[t])
        return {
            "sat": torch.from_numpy(np.stack(sat)),
            "task": torch.from_numpy(np.stack(task)),
            "sensor_code": torch.from_numpy(np.stack(sensor)).long(),
            "status_code": torch.from_numpy(np.stack(status)).long(),
            "t": torch.tensor(times, dtype=torch.float32),
            "s_tilde": torch.from_numpy(np.stack(lab_s).astype(np.float32)),
            "t_tilde": torch.from_numpy(np.stack(lab_t)),
            "a_tilde": torch.from_numpy(
                np.stack(lab_a).astype(np.int64)
            ),
        }


def fit_norm_stats(dataset: TrajectoryDataset, max_rows_per_trajectory: int = 256
                   ) -> NormStats:
    """Column statistics over the dataset, subsampled for long horizons."""
    if len(dataset) == 0:
        raise ValueError("cannot fit statistics on an empty dataset")
    sets = []
    for i, ex in enumerate(dataset.examples):
        stride = max(1, ex.trajectory.horizon // max_rows_per_trajectory)
        for t in range(0, ex.trajectory.horizon, stride):
            sets.append(dataset.features_at(i, t))
    return compute_norm_stats(sets)


def batch_losses(model: Matcher, batch: dict, config: TrainConfig) -> dict:
    out = model(batch["sat"], batch["task"], batch["sensor_code"],
                batch["status_code"], batch["t"])
    l_s = loss_feasibility(out["s_hat"], batch["s_tilde"])
    l_t = loss_time(out["t_hat"], batch["t_tilde"], batch["s_tilde"])
    l_a = loss_assignment(out["A"], batch["a_tilde"])
    total = total_loss(l_s, l_t, l_a, config.w_s, config.w_t, config.w_a)
    return {"total": total, "l_s": l_s, "l_t": l_t, "l_a": l_a}


def _make_optimizer(model: Matcher, config: TrainConfig):
    opt = torch.optim.AdamW(
        model.parameters(), lr=config.lr, betas=tuple(config.betas),
        weight_decay=config.weight_decay,
    )
    sched = torch.optim.lr_scheduler.LambdaLR(opt, config._warmup_factor)
    return opt, sched


def _step(model, opt, sched, batch, config) -> dict:
    losses = batch_losses(model, batch, config)
    total = losses["total"]
    if not torch.isfinite(total):
        raise FloatingPointError(
            f"non-finite training loss {total.item()!r}; aborting"
        )
    opt.zero_grad()
    total.backward()
    opt.step()
    sched.step()
    return {k: float(v.item()) for k, v in losses.items()}


def train_supervised(model: Matcher, dataset: TrajectoryDataset,
                     config: TrainConfig, norm: NormStats,
                     steps: int | None = None, log_every: int = 0) -> list[dict]:
    """Fit the matcher on random timestep batches; returns per-step history."""
    steps = config.steps if steps is None else steps
    torch.manual_seed(config.seed)
    rng = np.random.default_rng(config.seed)
    opt, sched = _make_optimizer(model, config)
    model.train()
    history = []
    for step in range(steps):
        lr = opt.param_groups[0]["lr"]
        batch = dataset.sample_batch(rng, config.batch_timesteps, norm,
                                     config.label_window,
                                     config.label_horizon)
        record = _step(model, opt, sched, batch, config)
        record.update(step=step, lr=lr)
        history.append(record)
        if log_every and step % log_every == 0:
            print(f"step {step:5d}  lr {lr:.3g}  total {record['total']:.4f}  "
                  f"s {record['l_s']:.4f}  t {record['l_t']:.4f}  "
                  f"a {record['l_a']:.4f}")
    model.eval()
    return history


def train_on_batch(model: Matcher, batch: dict, config: TrainConfig,
                   steps: int) -> list[float]:
    """Repeated gradient steps on one fixed batch (overfitting probe).

    Returns the total loss measured *before* each update, so entry 0 is the
    untouched model and entry ``steps`` (one extra evaluation) reflects all
    updates.
    """
    torch.manual_seed(config.seed)
    opt, sched = _make_optimizer(model, config)
    model.train()
    losses = []
    for _ in range(steps):
        losses.append(_step(model, opt, sched, batch, config)["total"])
    with torch.no_grad():
        losses.append(float(batch_losses(model, batch, config)["total"].item()))
    model.eval()
    return losses


# -- acting in the simulator ----------------------------------------------------


class MatcherScheduler:
    """Greedy decoding of the trained matcher inside the simulator loop."""

    name = "matcher"

    def __init__(self, model: Matcher, norm: NormStats | None = None,
                 tau_s: float = 0.5):
        self.model = model
        self.norm = norm if norm is not None else NormStats.identity()
        self.tau_s = tau_s
        self._static = None

    @classmethod
    def from_checkpoint(cls, path, tau_s: float | None = None):
        model, norm, payload = load_checkpoint(path)
        if tau_s is None:
            tau_s = payload.get("train_config", {}).get("tau_s", 0.5)
        return cls(model, norm, tau_s)

    def reset(self, scenario, seed: int) -> None:
        self._static = static_blocks(scenario)
        self.model.eval()

    def observe(self, state) -> np.ndarray:
        sat_dyn, task_dyn, status = features.dynamic_state_blocks(state)
        fs = assemble_features(self._static[0], self._static[1],
                               sat_dyn, task_dyn, status, state.t)
        fs = self.norm.normalize(fs)
        with torch.no_grad():
            out = self.model(
                torch.from_numpy(fs.sat).unsqueeze(0),
                torch.from_numpy(fs.task).unsqueeze(0),
                torch.from_numpy(fs.sensor_code).long().unsqueeze(0),
                torch.from_numpy(fs.status_code).long().unsqueeze(0),
                torch.tensor([float(fs.t)], dtype=torch.float32),
            )
        return infer_assignment(out["A"][0], out["s_hat"][0], self.tau_s)


# -- iterative growth -------------------------------------------------------------


@dataclass
class StageReport:
    """Outcome of one train-rollout-filter round."""

    stage: int
    dataset_size: int
    rollouts: int
    accepted: int
    mean_cs: float
    final_loss: float
    scores: list = field(default_factory=list)


def iterative_learning(model: Matcher, dataset: TrajectoryDataset,
                       scenario_provider, config: TrainConfig,
                       norm: NormStats, sim_config: SimConfig | None = None,
                       weights: CSWeights | None = None,
                       steps_per_stage: int | None = None) -> list[StageReport]:
    """Alternate supervised fitting with matcher-generated data collection.

    ``scenario_provider(stage)`` returns the scenarios to roll out after
    that stage's fit.  Rollouts scoring at or under ``config.tau_e`` join the
    dataset; nothing is ever removed, so the dataset size is nondecreasing.
    """
    if sim_config is None:
        sim_config = SimConfig()
    reports = []
    for stage in range(config.stages):
        history = train_supervised(model, dataset, config, norm,
                                   steps=steps_per_stage)
        scheduler = MatcherScheduler(model, norm, config.tau_s)
        scores = []
        accepted = 0
        scenarios = list(scenario_provider(stage))
        for scenario in scenarios:
            seed = child_seed(config.seed, "stage", stage, scenario.scenario_id)
            trajectory = rollout(scenario, scheduler, seed=seed,
                                 config=sim_config, record_observations=True,
                                 tag=f"stage-{stage}")
            if weights is None:
                report = compute_metrics(trajectory, scenario)
            else:
                report = compute_metrics(trajectory, scenario, weights)
            scores.append(report.cs)
            if report.cs <= config.tau_e:
                dataset.add(scenario, trajectory)
                accepted += 1
        reports.append(StageReport(
            stage=stage,
            dataset_size=len(dataset),
            rollouts=len(scenarios),
            accepted=accepted,
            mean_cs=float(np.mean(scores)) if scores else float("nan"),
            final_loss=history[-1]["total"] if history else float("nan"),
            scores=scores,
        ))
    return reports


# -- persistence ---------------------------------------------------------------


def save_checkpoint(path, model: Matcher, norm: NormStats,
                    train_config: TrainConfig | None = None,
                    extra: dict | None = None) -> None:
    payload = {
        "version": CHECKPOINT_VERSION,
        "layout_hash": features.layout_hash(),
        "model_config": asdict(model.config),
        "state_dict": model.state_dict(),
        "norm": norm.arrays(),
        "train_config": asdict(train_config) if train_config else None,
    }
    if extra:
        payload["extra"] = extra
    torch.save(payload, path)


def load_checkpoint(path) -> tuple[Matcher, NormStats, dict]:
    payload = torch.load(path, map_location="cpu", weights_only=False)
    version = payload.get("version")
    if version != CHECKPOINT_VERSION:
        raise ValueError(
            f"unsupported checkpoint version {version!r} "
            f"(expected {CHECKPOINT_VERSION})"
        )
    saved_hash = payload.get("layout_hash")
    if saved_hash != features.layout_hash():
        raise ValueError(
            f"checkpoint feature layout {saved_hash!r} does not match this "
            f"build ({features.layout_hash()!r}); refusing to load"
        )
    model = Matcher(MatcherConfig(**payload["model_config"]))
    model.load_state_dict(payload["state_dict"])
    model.eval()
    norm = NormStats(**{k: np.asarray(v) for k, v in payload["norm"].items()})
    return model, norm, payload
