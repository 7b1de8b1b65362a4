"""On-disk formats: scenario JSON, trajectory JSONL, report CSV.

All three formats carry explicit version tags and fail loudly (with file
and line context where applicable) instead of guessing.  Floats are written
with Python's shortest round-trip repr, so save -> load -> save is value-
and byte-stable; non-finite outcome values (a task that never completed)
are stored as ``null``.

A trajectory file has exactly ``horizon + 2`` lines: one header object,
one object per timestep, one footer object holding the raw task/energy
outcomes that the metrics layer consumes.
"""

from __future__ import annotations

import csv
import json
import math
from dataclasses import asdict

import numpy as np

from .assets import AssetPool, Scenario, SatelliteAsset, TaskSpec
from .astro import EarthModel, GeodeticTarget, OrbitalElements
from .attitude import ControlGains
from .simulator import TrajectoryLog

SCENARIO_VERSION = 1
TRAJECTORY_VERSION = 1
POOL_VERSION = 1

REPORT_COLUMNS = (
    "split", "scenario_id", "scheduler", "CS", "CR", "PCR", "WCR",
    "TAT_h", "PC_Wh", "wall_time_s", "seed",
)


class FileFormatError(ValueError):
    """Raised for unreadable, mis-versioned, or structurally wrong files."""


def _require(condition: bool, message: str) -> None:
    if not condition:
        raise FileFormatError(message)


# -- asset pools --------------------------------------------------------------------


def _asset_from_dict(raw: dict) -> SatelliteAsset:
    raw = dict(raw)
    raw["panel_direction"] = tuple(raw["panel_direction"])
    raw["rw_direction"] = tuple(raw["rw_direction"])
    raw["gains"] = ControlGains(**raw["gains"])
    raw["elements"] = OrbitalElements(**raw["elements"])
    return SatelliteAsset(**raw)


def save_asset_pool(path, pool: AssetPool) -> None:
    data = {
        "kind": "asset-pool",
        "version": POOL_VERSION,
        "attempts": pool.attempts,
        "rejected": pool.rejected,
        "assets": [asdict(a) for a in pool.assets],
    }
    with open(path, "w", encoding="utf-8") as fh:
        json.dump(data, fh, indent=2, allow_nan=False)
        fh.write("\n")


def load_asset_pool(path) -> AssetPool:
    with open(path, encoding="utf-8") as fh:
        try:
            data = json.load(fh)
        except json.JSONDecodeError as exc:
            raise FileFormatError(
                f"{path}: line {exc.lineno}: {exc.msg}"
            ) from exc
    _require(data.get("kind") == "asset-pool",
             f"{path}: not an asset pool (kind={data.get('kind')!r})")
    version = data.get("version")
    _require(version == POOL_VERSION,
             f"{path}: unsupported asset pool version {version!r}")
    try:
        assets = [_asset_from_dict(raw) for raw in data["assets"]]
    except (KeyError, TypeError) as exc:
        raise FileFormatError(f"{path}: malformed asset pool: {exc}") from exc
    return AssetPool(assets=assets, attempts=data.get("attempts", 0),
                     rejected=data.get("rejected", 0))


# -- scenarios --------------------------------------------------------------------


def scenario_to_dict(scenario: Scenario) -> dict:
    return {
        "kind": "scenario",
        "version": SCENARIO_VERSION,
        "scenario_id": scenario.scenario_id,
        "seed": scenario.seed,
        "horizon": scenario.horizon,
        "dt": scenario.dt,
        "earth": asdict(scenario.earth),
        "satellites": [asdict(s) for s in scenario.satellites],
        "tasks": [asdict(t) for t in scenario.tasks],
    }


def scenario_from_dict(data: dict) -> Scenario:
    _require(data.get("kind") == "scenario",
             f"not a scenario object (kind={data.get('kind')!r})")
    version = data.get("version")
    _require(version == SCENARIO_VERSION,
             f"unsupported scenario version {version!r}")
    earth = dict(data["earth"])
    earth["sun_direction"] = tuple(earth["sun_direction"])
    sats = [_asset_from_dict(raw) for raw in data["satellites"]]
    tasks = []
    for raw in data["tasks"]:
        raw = dict(raw)
        raw["target"] = GeodeticTarget(**raw["target"])
        tasks.append(TaskSpec(**raw))
    return Scenario(
        scenario_id=data["scenario_id"], seed=data["seed"],
        horizon=data["horizon"], dt=data["dt"],
        satellites=tuple(sats), tasks=tuple(tasks),
        earth=EarthModel(**earth),
    )


def save_scenario(path, scenario: Scenario) -> None:
    with open(path, "w", encoding="utf-8") as fh:
        json.dump(scenario_to_dict(scenario), fh, indent=2, allow_nan=False)
        fh.write("\n")


def load_scenario(path) -> Scenario:
    with open(path, encoding="utf-8") as fh:
        try:
            data = json.load(fh)
        except json.JSONDecodeError as exc:
            raise FileFormatError(
                f"{path}: line {exc.lineno}: {exc.msg}"
            ) from exc
    try:
        return scenario_from_dict(data)
    except (KeyError, TypeError) as exc:
        raise FileFormatError(f"{path}: malformed scenario: {exc}") from exc


# -- trajectories -----------------------------------------------------------------


def _dump(obj: dict) -> str:
    return json.dumps(obj, separators=(",", ":"), allow_nan=False)


def _nan_to_null(values) -> list:
    return [v if math.isfinite(v) else None for v in np.asarray(values, float)]


def _null_to_nan(values) -> np.ndarray:
    return np.array([math.nan if v is None else v for v in values], dtype=float)


def save_trajectory(path, log: TrajectoryLog) -> None:
    """One JSONL line per timestep, bracketed by a header and a footer."""
    header = {
        "kind": "trajectory",
        "version": TRAJECTORY_VERSION,
        "scenario_id": log.scenario_id,
        "seed": log.seed,
        "scheduler": log.scheduler,
        "config_hash": log.config_hash,
        "horizon": log.horizon,
        "dt": log.dt,
        "n_sats": log.n_sats,
        "n_tasks": log.n_tasks,
        "tag": log.tag,
    }
    with open(path, "w", encoding="utf-8") as fh:
        fh.write(_dump(header) + "\n")
        for k in range(log.horizon):
            fh.write(_dump({
                "t": k,
                "a": log.assignments[k].tolist(),
                "v": np.asarray(log.valid[k], int).tolist(),
                "f": log.flags[k].tolist(),
                "b": log.battery[k].tolist(),
                "e": [[kind, int(idx)] for kind, idx in log.events[k]],
            }) + "\n")
        footer = {
            "completion_time": _nan_to_null(log.completion_time),
            "max_consecutive": np.asarray(log.max_consecutive, float).tolist(),
            "final_status": np.asarray(log.final_status, int).tolist(),
            "sensor_on_seconds": np.asarray(log.sensor_on_seconds,
                                            float).tolist(),
            "runs": np.asarray(log.runs, int).tolist(),
        }
        fh.write(_dump(footer) + "\n")


def load_trajectory(path) -> TrajectoryLog:
    with open(path, encoding="utf-8") as fh:
        lines = fh.read().splitlines()
    _require(len(lines) >= 2, f"{path}: too short to be a trajectory file")

    def parse(i: int) -> dict:
        try:
            return json.loads(lines[i])
        except json.JSONDecodeError as exc:
            raise FileFormatError(f"{path}: line {i + 1}: {exc.msg}") from exc

    header = parse(0)
    _require(header.get("kind") == "trajectory",
             f"{path}: not a trajectory file")
    version = header.get("version")
    _require(version == TRAJECTORY_VERSION,
             f"{path}: unsupported trajectory version {version!r}")
    horizon = header["horizon"]
    _require(
        len(lines) == horizon + 2,
        f"{path}: expected {horizon + 2} lines for horizon {horizon}, "
        f"found {len(lines)}",
    )
    n, m = header["n_sats"], header["n_tasks"]
    assignments = np.zeros((horizon, n), dtype=np.int16)
    valid = np.zeros((horizon, n), dtype=bool)
    flags = np.zeros((horizon, n), dtype=np.uint8)
    battery = np.zeros((horizon, n), dtype=float)
    events: list[list[tuple[str, int]]] = []
    for k in range(horizon):
        row = parse(k + 1)
        _require(row.get("t") == k,
                 f"{path}: line {k + 2}: expected timestep {k}, "
                 f"got {row.get('t')!r}")
        assignments[k] = row["a"]
        valid[k] = np.asarray(row["v"], dtype=bool)
        flags[k] = row["f"]
        battery[k] = row["b"]
        events.append([(kind, int(idx)) for kind, idx in row["e"]])
    footer = parse(horizon + 1)
    try:
        return TrajectoryLog(
            scenario_id=header["scenario_id"],
            seed=header["seed"],
            scheduler=header["scheduler"],
            config_hash=header["config_hash"],
            horizon=horizon,
            dt=header["dt"],
            n_sats=n,
            n_tasks=m,
            assignments=assignments,
            valid=valid,
            flags=flags,
            battery=battery,
            events=events,
            completion_time=_null_to_nan(footer["completion_time"]),
            max_consecutive=np.asarray(footer["max_consecutive"], float),
            final_status=np.asarray(footer["final_status"], np.int8),
            sensor_on_seconds=np.asarray(footer["sensor_on_seconds"], float),
            runs=np.asarray(footer["runs"], int).reshape(-1, 4),
            tag=header.get("tag", ""),
        )
    except KeyError as exc:
        raise FileFormatError(f"{path}: footer missing {exc}") from exc


# -- reports --------------------------------------------------------------------


def write_report_csv(path, rows) -> None:
    """Fixed-column benchmark table; one row per (scenario, scheduler) run."""
    with open(path, "w", encoding="utf-8", newline="") as fh:
        writer = csv.DictWriter(fh, fieldnames=REPORT_COLUMNS,
                                extrasaction="raise")
        writer.writeheader()
        for row in rows:
            writer.writerow(row)


def read_report_csv(path) -> list[dict]:
    with open(path, encoding="utf-8", newline="") as fh:
        reader = csv.DictReader(fh)
        _require(
            tuple(reader.fieldnames or ()) == REPORT_COLUMNS,
            f"{path}: unexpected report columns {reader.fieldnames}",
        )
        out = []
        for row in reader:
            parsed = dict(row)
            for key in ("CS", "CR", "PCR", "WCR", "TAT_h", "PC_Wh",
                        "wall_time_s"):
                parsed[key] = float(parsed[key]) if parsed[key] != "" else None
            parsed["seed"] = int(parsed["seed"])
            out.append(parsed)
        return out
