"""Run configuration, initial-data generators and the run-directory layout.

A run directory holds::

    config.json        normalized config echo
    trajectory.csv     one row per sample
    snapshots/         index.csv plus u_XXXXX.csv / v_XXXXX.csv field files
    manifest.json      written last; its presence marks a complete run
"""
from __future__ import annotations

import csv
import hashlib
import json
import math
from dataclasses import asdict, dataclass, field
from pathlib import Path
from typing import Any, Mapping

import numpy as np

from .grid import Grid, build_grid, read_snapshot, write_snapshot
from .model import InitialData, ModelParams, classify, params_from_dict
from .solver import Schedule, StopRule, Trajectory

TRAJ_COLUMNS = ("t", "sup_v", "mass_u", "mass_v", "consumed", "harnack_ratio", "sup_u", "lp_p64",
                "grad6", "min_v")


class ConfigError(ValueError):
    """Invalid config; the message starts with the failing key path."""


# config ----------------------------------------------------------------------

@dataclass(frozen=True)
class FieldSpec:
    kind: str
    args: dict = field(default_factory=dict)


FIELD_KINDS = {
    "constant": {"c"},
    "gaussian": {"center", "width", "amplitude", "floor"},
    "checkerboard": {"lo", "hi", "cells"},
    "random": {"lo", "hi"},
    "file": {"path"},
}


@dataclass(frozen=True)
class RunConfig:
    params: ModelParams
    grid: Grid
    u0: FieldSpec
    v0: FieldSpec
    schedule: Schedule = Schedule()
    stop: StopRule = StopRule()
    out: str | None = None
    seed: int = 0
    base_dir: str = "."  # resolves relative file paths

    def to_dict(self) -> dict[str, Any]:
        sched = asdict(self.schedule)
        return {
            "model": self.params.to_dict(),
            "grid": {"nx": self.grid.nx, "ny": self.grid.ny, "Lx": self.grid.Lx, "Ly": self.grid.Ly},
            "initial": {"u0": {"kind": self.u0.kind, **self.u0.args},
                        "v0": {"kind": self.v0.kind, **self.v0.args}},
            "schedule": {k: (v if not (isinstance(v, float) and math.isinf(v)) else None)
                         for k, v in sched.items()},
            "stop": asdict(self.stop),
            "seed": self.seed,
        }


def _section(d: Mapping, key: str, allowed: set, where: str) -> dict:
    sub = d.get(key, {})
    if not isinstance(sub, Mapping):
        raise ConfigError(f"{where}{key}: expected an object")
    unknown = sorted(set(sub) - allowed)
    if unknown:
        raise ConfigError(f"{where}{key}.{unknown[0]}: unknown key")
    return dict(sub)


def _field_spec(d: Any, where: str, positive: bool) -> FieldSpec:
    if not isinstance(d, Mapping) or "kind" not in d:
        raise ConfigError(f"{where}.kind: missing")
    kind = d["kind"]
    if kind not in FIELD_KINDS:
        raise ConfigError(f"{where}.kind: expected one of {sorted(FIELD_KINDS)}, got {kind!r}")
    args = {k: v for k, v in d.items() if k != "kind"}
    unknown = sorted(set(args) - FIELD_KINDS[kind])
    if unknown:
        raise ConfigError(f"{where}.{unknown[0]}: unknown key")
    lower = {"constant": "c", "gaussian": "floor", "checkerboard": "lo", "random": "lo"}.get(kind)
    if lower is not None:
        val = args.get(lower, 1.0 if kind == "constant" else 0.0)
        if positive and not val > 0:
            raise ConfigError(f"{where}.{lower}: v0 must be positive everywhere, got {val}")
        if val < 0:
            raise ConfigError(f"{where}.{lower}: must be >= 0, got {val}")
    return FieldSpec(kind, args)


def parse_config(d: Mapping[str, Any], base_dir: str | Path = ".") -> RunConfig:
    """Validate a config object; errors name the key path, and parameter
    admissibility is checked here, before any stepping."""
    top = {"model", "grid", "initial", "schedule", "stop", "out", "seed"}
    unknown = sorted(set(d) - top)
    if unknown:
        raise ConfigError(f"{unknown[0]}: unknown key")
    try:
        params = params_from_dict(_section(d, "model", set(ModelParams.__dataclass_fields__), ""))
    except KeyError as e:
        raise ConfigError(e.args[0]) from None
    except ConfigError:
        raise
    except (TypeError, ValueError) as e:
        raise ConfigError(f"model: {e}") from None
    try:
        classify(params)
    except ValueError as e:
        raise ConfigError(f"model: {e}") from None
    gd = _section(d, "grid", {"nx", "ny", "Lx", "Ly"}, "")
    try:
        grid = build_grid(gd.get("nx", 64), gd.get("ny", gd.get("nx", 64)), gd.get("Lx", 1.0), gd.get("Ly", 1.0))
    except ValueError as e:
        raise ConfigError(f"grid: {e}") from None
    ini = _section(d, "initial", {"u0", "v0"}, "")
    u0 = _field_spec(ini.get("u0", {"kind": "constant", "c": 1.0}), "initial.u0", positive=False)
    v0 = _field_spec(ini.get("v0", {"kind": "constant", "c": 1.0}), "initial.v0", positive=True)
    sd = _section(d, "schedule", set(Schedule.__dataclass_fields__), "")
    if sd.get("dt_max", 0) is None:
        sd["dt_max"] = math.inf
    try:
        schedule = Schedule(**sd)
    except (TypeError, ValueError) as e:
        raise ConfigError(f"schedule: {e}") from None
    stop = StopRule(**_section(d, "stop", {"v_tol", "T_max"}, ""))
    seed = d.get("seed", 0)
    if not isinstance(seed, int) or seed < 0:
        raise ConfigError(f"seed: expected a nonnegative integer, got {seed!r}")
    return RunConfig(params, grid, u0, v0, schedule, stop, d.get("out"), seed, str(base_dir))


def load_config(path: str | Path) -> RunConfig:
    path = Path(path)
    try:
        d = json.loads(path.read_text())
    except json.JSONDecodeError as e:
        raise ConfigError(f"{path}: invalid JSON ({e})") from None
    return parse_config(d, path.parent)


# initial data ----------------------------------------------------------------

def make_field(spec: FieldSpec, grid: Grid, rng: np.random.Generator, base_dir: str | Path = ".") -> np.ndarray:
    a = spec.args
    if spec.kind == "constant":
        return np.full(grid.shape, float(a.get("c", 1.0)))
    if spec.kind == "gaussian":
        cx, cy = a.get("center", (0.5 * grid.Lx, 0.5 * grid.Ly))
        w = float(a.get("width", 0.1))
        X, Y = grid.centers()
        return float(a.get("floor", 0.0)) + float(a.get("amplitude", 1.0)) * np.exp(
            -((X - cx) ** 2 + (Y - cy) ** 2) / (2 * w * w))
    if spec.kind == "checkerboard":
        n = int(a.get("cells", 1))
        j, i = np.indices(grid.shape)
        return np.where(((i // n) + (j // n)) % 2 == 0, float(a.get("hi", 1.0)), float(a.get("lo", 0.0)))
    if spec.kind == "random":
        return rng.uniform(float(a.get("lo", 0.0)), float(a.get("hi", 1.0)), grid.shape)
    if spec.kind == "file":
        values, g, _ = read_snapshot(Path(base_dir) / a["path"])
        if g.shape != grid.shape:
            raise ConfigError(f"initial: file {a['path']} has grid {g.shape}, config has {grid.shape}")
        return values
    raise ConfigError(f"initial.kind: unsupported {spec.kind!r}")


def initial_data(cfg: RunConfig) -> InitialData:
    rng = np.random.default_rng(cfg.seed)
    u0 = make_field(cfg.u0, cfg.grid, rng, cfg.base_dir)
    v0 = make_field(cfg.v0, cfg.grid, rng, cfg.base_dir)
    try:
        InitialData(u0, v0).validate(cfg.grid, classify(cfg.params))
    except ValueError as e:
        raise ConfigError(f"initial: {e}") from None
    return InitialData(u0, v0)


# persistence -----------------------------------------------------------------

def blob_hash(data: bytes) -> str:
    """Git-style content hash of a byte string."""
    return hashlib.sha1(b"blob %d\0" % len(data) + data).hexdigest()


def file_hash(path: Path) -> str:
    return hashlib.sha256(path.read_bytes()).hexdigest()


def _fmt(x: float) -> str:
    return format(float(x), ".17g")


def write_trajectory_csv(path: Path, traj: Trajectory) -> None:
    cols = [traj.series(k) for k in TRAJ_COLUMNS]
    with open(path, "w", newline="") as fh:
        w = csv.writer(fh, lineterminator="\n")
        w.writerow(TRAJ_COLUMNS)
        for row in zip(*cols):
            w.writerow([_fmt(x) for x in row])


def read_trajectory_csv(path: Path) -> dict[str, np.ndarray]:
    with open(path, newline="") as fh:
        rows = list(csv.reader(fh))
    if not rows:
        raise ValueError(f"{path}: empty trajectory")
    head, body = rows[0], rows[1:]
    data = np.array(body, dtype=float).reshape(len(body), len(head))
    return {k: data[:, i] for i, k in enumerate(head)}


def write_run(run_dir: str | Path, cfg: RunConfig, traj: Trajectory) -> Path:
    run_dir = Path(run_dir)
    snap_dir = run_dir / "snapshots"
    snap_dir.mkdir(parents=True, exist_ok=True)
    manifest = run_dir / "manifest.json"
    if manifest.exists():
        manifest.unlink()
    cfg_bytes = (json.dumps(cfg.to_dict(), indent=2, sort_keys=True) + "\n").encode()
    (run_dir / "config.json").write_bytes(cfg_bytes)
    write_trajectory_csv(run_dir / "trajectory.csv", traj)
    index = ["k,t,u_file,v_file"]
    for k, (t, u, v) in enumerate(zip(traj.snap_times, traj.snap_u, traj.snap_v)):
        uf, vf = f"u_{k:05d}.csv", f"v_{k:05d}.csv"
        write_snapshot(snap_dir / uf, u, traj.grid, t)
        write_snapshot(snap_dir / vf, v, traj.grid, t)
        index.append(f"{k},{_fmt(t)},{uf},{vf}")
    (snap_dir / "index.csv").write_text("\n".join(index) + "\n")
    files = sorted(p for p in run_dir.rglob("*") if p.is_file() and p.parent.name != "reports")
    man = {
        "config": cfg.to_dict(),
        "config_hash": blob_hash(cfg_bytes),
        "case": classify(cfg.params).value,
        "steps": traj.steps,
        "wall_time": traj.wall_time,
        "stopped_by": traj.stopped_by,
        "t_end": traj.times[-1],
        "events": traj.events,
        "files": {str(p.relative_to(run_dir)): file_hash(p) for p in files},
    }
    manifest.write_text(json.dumps(man, indent=2, sort_keys=True) + "\n")
    return manifest


class IncompleteRun(FileNotFoundError):
    pass


def load_run(run_dir: str | Path) -> tuple[RunConfig, Trajectory, dict]:
    """Rebuild a Trajectory from disk. Runs without a manifest are incomplete."""
    run_dir = Path(run_dir)
    mpath = run_dir / "manifest.json"
    if not mpath.exists():
        raise IncompleteRun(f"{run_dir}: no manifest.json (incomplete or not a run directory)")
    man = json.loads(mpath.read_text())
    cfg = parse_config(json.loads((run_dir / "config.json").read_text()), run_dir)
    data = read_trajectory_csv(run_dir / "trajectory.csv")
    idx_path = run_dir / "snapshots" / "index.csv"
    if not idx_path.exists():
        raise IncompleteRun(f"{run_dir}: missing snapshots/index.csv")
    with open(idx_path, newline="") as fh:
        index = list(csv.DictReader(fh))
    if not index:
        raise IncompleteRun(f"{run_dir}: no stored snapshots")
    snap_t, snap_u, snap_v = [], [], []
    for row in index:
        try:
            u, _, t = read_snapshot(run_dir / "snapshots" / row["u_file"])
            v, _, _ = read_snapshot(run_dir / "snapshots" / row["v_file"])
        except FileNotFoundError as e:
            raise IncompleteRun(f"{run_dir}: missing snapshot {e.filename}") from None
        snap_t.append(t)
        snap_u.append(u)
        snap_v.append(v)
    traj = Trajectory(cfg.grid, cfg.params, snap_u[0], snap_v[0], v_tol=cfg.stop.v_tol)
    traj.times = list(data["t"])
    for k in traj.diag:
        traj.diag[k] = list(data[k])
    traj.snap_times, traj.snap_u, traj.snap_v = snap_t, snap_u, snap_v
    traj.steps = man["steps"]
    traj.wall_time = man["wall_time"]
    traj.stopped_by = man["stopped_by"]
    traj.events = man["events"]
    return cfg, traj, man
