"""Satellite asset, task, and scenario sampling; dataset split construction.

All sampling ranges live in :data:`ASSET_RANGES` / :data:`TASK_RANGES`.
Assets are drawn uniformly, given controller gains by an empirical rule, and
admitted to a pool only after passing the rest-to-rest slew gate
(:func:`satsched.attitude.run_slew_test`), so every shipped asset has a
stable, non-saturating control loop.

Determinism: every generator takes (or derives) an integer seed.  Child
streams are split with :func:`child_seed`, a keyed blake2b hash, so results
are independent of platform hash randomization and of how work is divided
across processes.
"""

from __future__ import annotations

import hashlib
import math
from dataclasses import dataclass, field

import numpy as np

from .astro import EarthModel, GeodeticTarget, OrbitalElements
from .attitude import (
    ControlGains,
    ReactionWheelSet,
    SlewTest,
    euler_zyx_matrix,
    run_slew_test,
)

BUS_VOLTAGE = 28.0  # V, used to convert battery mAh to Wh

# (low, high) bounds for each sampled asset field.
ASSET_RANGES: dict[str, tuple[float, float]] = {
    "inertia_scale": (50.0, 200.0),  # kg m^2, scaled identity
    "mass": (50.0, 200.0),  # kg
    "panel_angle_z": (-180.0, 180.0),  # deg, z-y-x intrinsic angles
    "panel_angle_y": (-90.0, 90.0),
    "panel_angle_x": (-180.0, 180.0),
    "panel_area": (5.0, 10.0),  # m^2
    "half_fov": (0.5, 1.5),  # rad
    "sensor_power": (2.0, 8.0),  # W
    "battery_capacity": (8000.0, 30000.0),  # mAh
    "rw_max_momentum": (10.0, 100.0),  # kg m^2/s
    "rw_angle_z": (-180.0, 180.0),
    "rw_angle_y": (-90.0, 90.0),
    "rw_angle_x": (-180.0, 180.0),
    "rw_power_rating": (0.0, 22.0),  # W
    "rw_efficiency": (0.1, 0.5),
    "gain_k": (2.0, 5.0),
    "gain_ki": (0.0, 0.1),
    "gain_p": (6.0, 12.0),  # clamp bounds for the derived rate gain
    "integral_limit": (0.0, 0.5),
    "true_anomaly": (0.0, 360.0),  # deg
    "eccentricity": (0.0, 0.005),
    "semi_major_axis": (6800.0, 8000.0),  # km
    "inclination": (0.0, 180.0),  # deg
    "raan": (0.0, 360.0),  # deg
    "arg_perigee": (0.0, 360.0),  # deg
}

TASK_RANGES: dict[str, tuple[float, float]] = {
    "required_duration": (15.0, 60.0),  # s
    "release": (0.0, 3600.0),  # s
    "due": (0.0, 3600.0),  # s
    "latitude": (-90.0, 90.0),  # deg
    "longitude": (-180.0, 180.0),  # deg
}


def child_seed(parent: int, *keys: object) -> int:
    """Derive a child RNG seed from a parent seed and a key path.

    Stable across platforms and processes (keyed blake2b, not ``hash()``),
    so parallel generation partitioned any which way produces identical
    streams.
    """
    text = ":".join([str(int(parent))] + [str(k) for k in keys])
    digest = hashlib.blake2b(text.encode("utf-8"), digest_size=8).digest()
    return int.from_bytes(digest, "little") & (2**63 - 1)


@dataclass(frozen=True)
class SatelliteAsset:
    """Static description of one spacecraft (sampled, then validated)."""

    asset_id: str
    inertia_scale: float  # kg m^2 (inertia = inertia_scale * I3)
    mass: float  # kg
    panel_direction: tuple[float, float, float]  # z-y-x angles, deg
    panel_area: float  # m^2
    half_fov: float  # rad
    sensor_power: float  # W
    battery_capacity: float  # mAh
    rw_max_momentum: float  # kg m^2/s per wheel
    rw_direction: tuple[float, float, float]  # z-y-x angles, deg
    rw_power_rating: float  # W
    rw_efficiency: float
    gains: ControlGains
    elements: OrbitalElements

    @property
    def battery_capacity_wh(self) -> float:
        return self.battery_capacity * BUS_VOLTAGE / 1000.0

    @property
    def panel_normal_body(self) -> np.ndarray:
        """Solar-panel outward normal in body axes (rotated +z)."""
        return euler_zyx_matrix(self.panel_direction)[:, 2]

    @property
    def wheel_axes(self) -> np.ndarray:
        """Orthonormal wheel spin axes as matrix columns (body frame)."""
        return euler_zyx_matrix(self.rw_direction)

    def wheels(self) -> ReactionWheelSet:
        return ReactionWheelSet(
            axes=self.wheel_axes,
            max_momentum=self.rw_max_momentum,
            power_rating=self.rw_power_rating,
            efficiency=self.rw_efficiency,
        )


@dataclass(frozen=True)
class TaskSpec:
    """One imaging request: a ground point, a window, and a dwell time."""

    task_id: int
    required_duration: float  # s of consecutive observation
    release: float  # s
    due: float  # s
    target: GeodeticTarget

    def __post_init__(self) -> None:
        if self.release + self.required_duration > self.due:
            raise ValueError(
                f"task {self.task_id}: window [{self.release}, {self.due}] too "
                f"short for duration {self.required_duration}"
            )


@dataclass(frozen=True)
class Scenario:
    scenario_id: str
    seed: int
    horizon: int  # timesteps
    dt: float  # s
    satellites: tuple[SatelliteAsset, ...]
    tasks: tuple[TaskSpec, ...]
    earth: EarthModel = field(default_factory=EarthModel)

    @property
    def n_sats(self) -> int:
        return len(self.satellites)

    @property
    def n_tasks(self) -> int:
        return len(self.tasks)


def derive_rate_gain(k: float, inertia_scale: float) -> float:
    """Empirical rate gain: 2*sqrt(k*I) clipped into the sampled p range.

    Targets near-critical damping of the linearized closed loop; the clamp
    keeps p inside its table range, and the slew gate rejects combinations
    the rule cannot stabilize in time.
    """
    lo, hi = ASSET_RANGES["gain_p"]
    return float(np.clip(2.0 * math.sqrt(k * inertia_scale), lo, hi))


def sample_gains(rng: np.random.Generator, inertia_scale: float) -> ControlGains:
    k = rng.uniform(*ASSET_RANGES["gain_k"])
    ki = rng.uniform(*ASSET_RANGES["gain_ki"])
    lim = rng.uniform(*ASSET_RANGES["integral_limit"])
    return ControlGains(k=k, ki=ki, p=derive_rate_gain(k, inertia_scale), integral_limit=lim)


def sample_asset(rng: np.random.Generator, asset_id: str = "candidate") -> SatelliteAsset:
    """Draw one candidate asset uniformly from the table ranges (unvalidated)."""
    u = {name: rng.uniform(lo, hi) for name, (lo, hi) in ASSET_RANGES.items()}
    gains = ControlGains(
        k=u["gain_k"],
        ki=u["gain_ki"],
        p=derive_rate_gain(u["gain_k"], u["inertia_scale"]),
        integral_limit=u["integral_limit"],
    )
    elements = OrbitalElements(
        semi_major_axis=u["semi_major_axis"],
        eccentricity=u["eccentricity"],
        inclination=u["inclination"],
        raan=u["raan"],
        arg_perigee=u["arg_perigee"],
        true_anomaly=u["true_anomaly"],
    )
    return SatelliteAsset(
        asset_id=asset_id,
        inertia_scale=u["inertia_scale"],
        mass=u["mass"],
        panel_direction=(u["panel_angle_z"], u["panel_angle_y"], u["panel_angle_x"]),
        panel_area=u["panel_area"],
        half_fov=u["half_fov"],
        sensor_power=u["sensor_power"],
        battery_capacity=u["battery_capacity"],
        rw_max_momentum=u["rw_max_momentum"],
        rw_direction=(u["rw_angle_z"], u["rw_angle_y"], u["rw_angle_x"]),
        rw_power_rating=u["rw_power_rating"],
        rw_efficiency=u["rw_efficiency"],
        gains=gains,
        elements=elements,
    )


def validate_asset(asset: SatelliteAsset, test: SlewTest = SlewTest()):
    """Grade an asset's control loop with the rest-to-rest slew gate."""
    return run_slew_test(asset.inertia_scale, asset.gains, asset.wheels(), test)


@dataclass
class AssetPool:
    assets: list[SatelliteAsset]
    attempts: int
    rejected: int

    @property
    def rejection_rate(self) -> float:
        return self.rejected / self.attempts if self.attempts else 0.0

    def __len__(self) -> int:
        return len(self.assets)

    def __getitem__(self, i: int) -> SatelliteAsset:
        return self.assets[i]


def generate_asset_pool(
    seed: int,
    count: int,
    prefix: str = "sat",
    test: SlewTest = SlewTest(),
    max_attempts_factor: int = 50,
) -> AssetPool:
    """Sample-and-validate until ``count`` assets pass the slew gate.

    Raises ``RuntimeError`` if the accept rate is so low the attempt cap
    (count * max_attempts_factor) is hit — that indicates a broken gain rule
    rather than bad luck.
    """
    rng = np.random.default_rng(child_seed(seed, "assets", prefix))
    accepted: list[SatelliteAsset] = []
    attempts = 0
    cap = max(count, 1) * max_attempts_factor
    while len(accepted) < count:
        if attempts >= cap:
            raise RuntimeError(
                f"asset generation stalled: {len(accepted)}/{count} accepted "
                f"after {attempts} attempts"
            )
        candidate = sample_asset(rng, asset_id=f"{prefix}-{len(accepted):04d}")
        attempts += 1
        if validate_asset(candidate, test).passed:
            accepted.append(candidate)
    return AssetPool(assets=accepted, attempts=attempts, rejected=attempts - count)


def sample_task(rng: np.random.Generator, task_id: int, max_window_retries: int = 100) -> TaskSpec:
    """Sample one task; resample ``due`` until the window fits the dwell.

    When release + duration exceeds the latest possible due time no valid
    ``due`` exists, so after ``max_window_retries`` failures the whole triple
    is redrawn.
    """
    while True:
        duration = rng.uniform(*TASK_RANGES["required_duration"])
        release = rng.uniform(*TASK_RANGES["release"])
        ok = False
        for _ in range(max_window_retries):
            due = rng.uniform(*TASK_RANGES["due"])
            if release + duration <= due:
                ok = True
                break
        if ok:
            break
    target = GeodeticTarget(
        latitude=rng.uniform(*TASK_RANGES["latitude"]),
        longitude=rng.uniform(*TASK_RANGES["longitude"]),
    )
    return TaskSpec(
        task_id=task_id, required_duration=duration, release=release, due=due,
        target=target,
    )


def generate_scenario(
    seed: int,
    pool: "AssetPool | list[SatelliteAsset]",
    n_sats: int,
    n_tasks: int,
    horizon: int = 3600,
    dt: float = 1.0,
    scenario_id: str | None = None,
    earth: EarthModel | None = None,
) -> Scenario:
    """Assemble one scenario: assets without replacement, tasks per table."""
    if n_sats > len(pool):
        raise ValueError(f"pool has {len(pool)} assets, need {n_sats}")
    rng = np.random.default_rng(seed)
    idx = rng.choice(len(pool), size=n_sats, replace=False)
    sats = tuple(pool[int(i)] for i in idx)
    tasks = tuple(sample_task(rng, task_id=j) for j in range(n_tasks))
    return Scenario(
        scenario_id=scenario_id or f"scn-{seed:016x}",
        seed=seed,
        horizon=horizon,
        dt=dt,
        satellites=sats,
        tasks=tasks,
        earth=earth or EarthModel(),
    )


@dataclass(frozen=True)
class SplitSpec:
    """Counts and size ranges for a full dataset build."""

    train_assets: int
    unseen_assets: int
    test_assets: int
    scenarios: dict[str, int]  # per split name
    n_sats_range: tuple[int, int]
    n_tasks_range: tuple[int, int]
    horizon: int = 3600


DESK_SPLITS = SplitSpec(
    train_assets=200,
    unseen_assets=50,
    test_assets=50,
    scenarios={"train": 64, "val-seen": 8, "val-unseen": 8, "test": 8},
    n_sats_range=(1, 5),
    n_tasks_range=(10, 30),
)

# Full-size counts kept as a named preset; generating this takes
# datacenter-scale compute and is not exercised by the test suite.
PAPER_SPLITS = SplitSpec(
    train_assets=2907,
    unseen_assets=500,
    test_assets=500,
    scenarios={"train": 16218, "val-seen": 64, "val-unseen": 64, "test": 64},
    n_sats_range=(1, 50),
    n_tasks_range=(50, 300),
)

SPLIT_NAMES = ("train", "val-seen", "val-unseen", "test")


@dataclass
class SplitManifest:
    split: str
    asset_ids: list[str]
    scenario_ids: list[str]
    scenario_seeds: list[int]


def build_splits(
    seed: int, spec: SplitSpec = DESK_SPLITS
) -> tuple[dict[str, SplitManifest], dict[str, AssetPool]]:
    """Generate asset pools and split manifests.

    train and val-seen share the train pool; val-unseen and test get pools
    of assets never seen in training.  Scenario seeds are pre-derived here so
    scenario realization can be distributed freely.
    """
    pools = {
        "train": generate_asset_pool(seed, spec.train_assets, prefix="train"),
        "unseen": generate_asset_pool(seed, spec.unseen_assets, prefix="unseen"),
        "test": generate_asset_pool(seed, spec.test_assets, prefix="test"),
    }
    pool_for_split = {
        "train": "train", "val-seen": "train", "val-unseen": "unseen", "test": "test",
    }
    manifests = {}
    for split in SPLIT_NAMES:
        n = spec.scenarios[split]
        ids = [f"{split}-{i:05d}" for i in range(n)]
        seeds = [child_seed(seed, "scenario", split, i) for i in range(n)]
        manifests[split] = SplitManifest(
            split=split,
            asset_ids=[a.asset_id for a in pools[pool_for_split[split]].assets],
            scenario_ids=ids,
            scenario_seeds=seeds,
        )
    return manifests, pools


def realize_scenario(
    manifest: SplitManifest,
    index: int,
    pool: list[SatelliteAsset],
    spec: SplitSpec,
    earth: EarthModel | None = None,
) -> Scenario:
    """Materialize scenario ``index`` of a manifest (sizes drawn from spec)."""
    seed = manifest.scenario_seeds[index]
    rng = np.random.default_rng(child_seed(seed, "shape"))
    n_sats = int(rng.integers(spec.n_sats_range[0], spec.n_sats_range[1] + 1))
    n_tasks = int(rng.integers(spec.n_tasks_range[0], spec.n_tasks_range[1] + 1))
    n_sats = min(n_sats, len(pool))
    return generate_scenario(
        seed, pool, n_sats, n_tasks, horizon=spec.horizon,
        scenario_id=manifest.scenario_ids[index], earth=earth,
    )
