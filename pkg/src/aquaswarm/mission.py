"""Sequential multi-behavior missions with temperature mapping.

A mission chains previously evolved controllers: each stage binds one
genome to one task wiring (active waypoint, fence, or nothing) for a fixed
duration, and stages trigger in order on a shared clock with half-open
time windows.  Controller activations are reset at every stage switch.

While sampling is active (from a configurable mission time onward), every
robot logs one temperature reading per second from a synthetic smooth
ground-truth field.  At configurable checkpoints the samples collected so
far are interpolated with ordinary kriging into a prediction map and an
error-std map over the monitoring area.

The default plan mirrors a five-stage temperature survey: navigate to the
area center, disperse, monitor, aggregate, and return home, with sampling
starting at t = 100 s.
"""

from __future__ import annotations

import json
import logging
import math
from dataclasses import dataclass, field as dc_field
from pathlib import Path
from typing import NamedTuple

import numpy as np

from . import neat
from .evolution import STREAM_MISSION, commands_from_outputs, derived_rng
from .geometry import GeoFence, Vec2
from .kriging import GridSpec, KrigingModel, fit_variogram, krige
from .neat import Genome, NetworkPhenotype
from .sensors import SensorConfig
from .simulation import DT, MotionLimits, NoiseConfig, WorldState
from .tasks import PlacementSpec, _sample_square

log = logging.getLogger(__name__)


class MissionError(RuntimeError):
    pass


class TemperatureSample(NamedTuple):
    position: Vec2
    value: float
    timestamp: float


@dataclass(frozen=True)
class GaussianBump:
    center: tuple[float, float]
    amplitude: float
    sigma: float


@dataclass(frozen=True)
class TemperatureField:
    """Smooth synthetic ground truth: base level plus Gaussian bumps."""

    base: float = 18.0
    bumps: tuple[GaussianBump, ...] = (
        GaussianBump((140.0, 25.0), 2.0, 30.0),
        GaussianBump((95.0, -30.0), -1.5, 25.0),
        GaussianBump((160.0, -10.0), 1.0, 20.0),
    )

    def value(self, position) -> float:
        x, y = float(position[0]), float(position[1])
        v = self.base
        for b in self.bumps:
            d2 = (x - b.center[0]) ** 2 + (y - b.center[1]) ** 2
            v += b.amplitude * math.exp(-d2 / (2.0 * b.sigma ** 2))
        return v

    def values(self, positions: np.ndarray) -> np.ndarray:
        pts = np.atleast_2d(np.asarray(positions, dtype=float))
        v = np.full(len(pts), self.base)
        for b in self.bumps:
            d2 = (pts[:, 0] - b.center[0]) ** 2 + (pts[:, 1] - b.center[1]) ** 2
            v += b.amplitude * np.exp(-d2 / (2.0 * b.sigma ** 2))
        return v


@dataclass
class MissionStage:
    """One behavior slot: a controller plus its task wiring."""

    task: str  # homing | dispersion | clustering | monitoring
    genome_path: str
    duration_s: float
    waypoint: tuple[float, float] | None = None
    fence_vertices: list | None = None

    def __post_init__(self):
        if self.duration_s <= 0.0:
            raise MissionError("stage durations must be positive")

    def fence(self) -> GeoFence | None:
        return GeoFence(self.fence_vertices) if self.fence_vertices else None


@dataclass
class MissionPlan:
    stages: list[MissionStage]
    sampling_start_s: float = 100.0
    checkpoints_s: tuple[float, ...] = (160.0, 260.0, 360.0)
    robots: int = 8
    start_center: tuple[float, float] = (0.0, 0.0)
    start_side: float = 15.0
    start_min_separation: float = 3.0
    map_cell_size: float = 4.0
    field: TemperatureField = dc_field(default_factory=TemperatureField)
    noise: NoiseConfig = dc_field(default_factory=NoiseConfig)

    @property
    def total_duration_s(self) -> float:
        return sum(s.duration_s for s in self.stages)

    def stage_windows(self) -> list[tuple[float, float]]:
        out = []
        t = 0.0
        for s in self.stages:
            out.append((t, t + s.duration_s))
            t += s.duration_s
        return out

    def monitoring_fence(self) -> GeoFence | None:
        for s in self.stages:
            if s.fence_vertices:
                return s.fence()
        return None


def active_stage(plan: MissionPlan, t: float) -> int | None:
    """Index of the stage whose half-open window [start, end) contains t.

    Returns None once t reaches the end of the plan (mission complete).
    """
    if t < 0.0:
        raise MissionError("mission time cannot be negative")
    for k, (start, end) in enumerate(plan.stage_windows()):
        if start <= t < end:
            return k
    return None


def default_mission_plan(genome_paths: dict[str, str], robots: int = 8) -> MissionPlan:
    """The five-stage survey: home to the area, disperse, monitor, cluster,
    home back.  ``genome_paths`` maps task names to genome files."""
    area_center = (120.0, 0.0)
    half = 50.0
    fence = [[area_center[0] - half, -half], [area_center[0] + half, -half],
             [area_center[0] + half, half], [area_center[0] - half, half]]
    for task in ("homing", "dispersion", "monitoring", "clustering"):
        if task not in genome_paths:
            raise MissionError(f"mission needs a genome for {task!r}")
    g = genome_paths
    return MissionPlan(
        robots=robots,
        stages=[
            MissionStage("homing", g["homing"], 100.0, waypoint=area_center),
            MissionStage("dispersion", g["dispersion"], 60.0),
            MissionStage("monitoring", g["monitoring"], 200.0, fence_vertices=fence),
            MissionStage("clustering", g["clustering"], 120.0),
            MissionStage("homing", g["homing"], 120.0, waypoint=(0.0, 0.0)),
        ],
    )


# -- plan files -------------------------------------------------------------------


def save_mission_plan(plan: MissionPlan, path) -> None:
    d = {
        "robots": plan.robots,
        "start": {"center": list(plan.start_center), "side": plan.start_side,
                  "min_separation": plan.start_min_separation},
        "sampling_start_s": plan.sampling_start_s,
        "checkpoints_s": list(plan.checkpoints_s),
        "map_cell_size": plan.map_cell_size,
        "field": {
            "base": plan.field.base,
            "bumps": [{"center": list(b.center), "amplitude": b.amplitude,
                       "sigma": b.sigma} for b in plan.field.bumps],
        },
        "stages": [
            {k: v for k, v in (("task", s.task), ("genome", s.genome_path),
                               ("duration_s", s.duration_s),
                               ("waypoint", list(s.waypoint) if s.waypoint else None),
                               ("fence", s.fence_vertices))
             if v is not None}
            for s in plan.stages
        ],
    }
    Path(path).write_text(json.dumps(d, indent=2) + "\n")


def load_mission_plan(path) -> MissionPlan:
    path = Path(path)
    d = json.loads(path.read_text())
    stages = [
        MissionStage(
            task=s["task"],
            genome_path=str((path.parent / s["genome"]).resolve())
            if not Path(s["genome"]).is_absolute() else s["genome"],
            duration_s=float(s["duration_s"]),
            waypoint=tuple(s["waypoint"]) if s.get("waypoint") else None,
            fence_vertices=s.get("fence"),
        )
        for s in d["stages"]
    ]
    fld = d.get("field", {})
    bumps = tuple(GaussianBump(tuple(b["center"]), float(b["amplitude"]), float(b["sigma"]))
                  for b in fld.get("bumps", []))
    start = d.get("start", {})
    return MissionPlan(
        stages=stages,
        sampling_start_s=float(d.get("sampling_start_s", 100.0)),
        checkpoints_s=tuple(d.get("checkpoints_s", (160.0, 260.0, 360.0))),
        robots=int(d.get("robots", 8)),
        start_center=tuple(start.get("center", (0.0, 0.0))),
        start_side=float(start.get("side", 15.0)),
        start_min_separation=float(start.get("min_separation", 3.0)),
        map_cell_size=float(d.get("map_cell_size", 4.0)),
        field=TemperatureField(float(fld.get("base", 18.0)), bumps) if fld else TemperatureField(),
    )


# -- execution ----------------------------------------------------------------------


@dataclass
class StageLog:
    task: str
    start_s: float
    end_s: float
    times: np.ndarray  # (T,)
    positions: np.ndarray  # (T, R, 2)
    headings: np.ndarray  # (T, R)
    speeds: np.ndarray  # (T, R)


@dataclass
class CheckpointMap:
    time_s: float
    grid: GridSpec
    prediction: np.ndarray
    error_std: np.ndarray
    model: KrigingModel


@dataclass
class MissionLog:
    plan: MissionPlan
    seed: int
    stage_logs: list[StageLog]
    samples: list[TemperatureSample]
    maps: list[CheckpointMap]

    def samples_array(self) -> tuple[np.ndarray, np.ndarray, np.ndarray]:
        pos = np.array([[s.position.x, s.position.y] for s in self.samples])
        val = np.array([s.value for s in self.samples])
        t = np.array([s.timestamp for s in self.samples])
        return pos, val, t


def _load_stage_genomes(plan: MissionPlan) -> list[Genome]:
    genomes = []
    for s in plan.stages:
        p = Path(s.genome_path)
        if not p.exists():
            raise MissionError(f"genome file not found: {p}")
        genomes.append(neat.load_genome(p))
    return genomes


def run_mission(plan: MissionPlan, seed: int = 0,
                limits: MotionLimits = MotionLimits(),
                sensors: SensorConfig = SensorConfig()) -> MissionLog:
    """Execute the plan and return trajectories, samples and kriged maps."""
    genomes = _load_stage_genomes(plan)
    rng = derived_rng(seed, STREAM_MISSION)
    placement = PlacementSpec("square", side=plan.start_side,
                              min_separation=plan.start_min_separation,
                              center=plan.start_center)
    positions = _sample_square(rng, plan.robots, placement)
    headings = rng.uniform(0.0, 360.0, size=plan.robots)
    world = WorldState(positions, headings, noise=plan.noise, limits=limits,
                       sensor_config=sensors, rng=rng)

    total_steps = round(plan.total_duration_s / DT)
    checkpoints = sorted(set(plan.checkpoints_s))
    fence = plan.monitoring_fence()
    if fence is None:
        grid = GridSpec.covering((plan.start_center[0], plan.start_center[1],
                                  plan.start_center[0] + 1, plan.start_center[1] + 1),
                                 plan.map_cell_size)
    else:
        grid = GridSpec.covering(fence.bounding_box(), plan.map_cell_size)

    samples: list[TemperatureSample] = []
    maps: list[CheckpointMap] = []
    stage_logs: list[StageLog] = []
    windows = plan.stage_windows()

    current_stage = -1
    net: NetworkPhenotype | None = None
    buf: dict[str, list] = {}

    def flush_stage(end_s: float) -> None:
        if current_stage < 0 or not buf["times"]:
            return
        stage_logs.append(StageLog(
            task=plan.stages[current_stage].task,
            start_s=windows[current_stage][0],
            end_s=end_s,
            times=np.array(buf["times"]),
            positions=np.array(buf["pos"]),
            headings=np.array(buf["head"]),
            speeds=np.array(buf["speed"]),
        ))

    for step in range(total_steps):
        t = world.clock  # time before this step; stage windows are half-open
        stage_idx = active_stage(plan, t)
        if stage_idx is None:
            break
        if stage_idx != current_stage:
            flush_stage(t)
            current_stage = stage_idx
            stage = plan.stages[stage_idx]
            net = NetworkPhenotype(genomes[stage_idx])
            net.reset(world.n_robots)  # stale recurrent state never crosses stages
            world.set_waypoints(
                None if stage.waypoint is None else [list(stage.waypoint)],
                0)
            world.set_fence(stage.fence())
            buf = {"times": [], "pos": [], "head": [], "speed": []}
            log.info("mission t=%.0fs: stage %d (%s)", t, stage_idx, stage.task)

        outputs = net.activate_batch(world.sensor_frames())
        world.batch.step(commands_from_outputs(outputs, limits))

        buf["times"].append(world.clock)
        buf["pos"].append(world.positions.copy())
        buf["head"].append(world.headings.copy())
        buf["speed"].append(world.speeds.copy())

        if world.batch.step_index % 10 == 0 and world.clock >= plan.sampling_start_s:
            for i in range(world.n_robots):
                p = world.positions[i]
                samples.append(TemperatureSample(
                    Vec2(float(p[0]), float(p[1])),
                    plan.field.value(p), world.clock))

        for cp in checkpoints:
            if abs(world.clock - cp) < DT / 2.0 and len(samples) >= 5:
                pos = np.array([[s.position.x, s.position.y] for s in samples])
                val = np.array([s.value for s in samples])
                model = fit_variogram(pos, val)
                pred, std = krige(model, grid)
                maps.append(CheckpointMap(cp, grid, pred, std, model))
                log.info("mission t=%.0fs: kriged %d samples, mean std %.3f",
                         cp, len(samples), float(std.mean()))

    flush_stage(world.clock)
    return MissionLog(plan=plan, seed=seed, stage_logs=stage_logs,
                      samples=samples, maps=maps)


# -- log persistence -----------------------------------------------------------------


def save_mission_log(mission: MissionLog, out_dir) -> Path:
    """Write per-stage trajectory CSVs, the sample log and checkpoint maps."""
    out = Path(out_dir)
    out.mkdir(parents=True, exist_ok=True)
    for k, sl in enumerate(mission.stage_logs):
        rows = ["t,id,x,y,heading,speed"]
        for ti, tval in enumerate(sl.times):
            for r in range(sl.positions.shape[1]):
                rows.append(f"{float(tval)!r},{r},{float(sl.positions[ti, r, 0])!r},"
                            f"{float(sl.positions[ti, r, 1])!r},{float(sl.headings[ti, r])!r},"
                            f"{float(sl.speeds[ti, r])!r}")
        (out / f"stage_{k}_{sl.task}.csv").write_text("\n".join(rows) + "\n")
    rows = ["t,x,y,value"]
    for s in mission.samples:
        rows.append(f"{s.timestamp!r},{s.position.x!r},{s.position.y!r},{s.value!r}")
    (out / "samples.csv").write_text("\n".join(rows) + "\n")
    for m in mission.maps:
        _save_map(m.prediction, m.grid, out / f"map_pred_t{int(m.time_s)}.txt")
        _save_map(m.error_std, m.grid, out / f"map_std_t{int(m.time_s)}.txt")
    return out


def _save_map(values: np.ndarray, grid: GridSpec, path) -> None:
    lines = ["aquaswarm-coverage-grid v1",
             f"origin {grid.origin[0]!r} {grid.origin[1]!r}",
             f"cell_size {grid.cell_size!r}",
             f"shape {grid.nx} {grid.ny}"]
    for j in range(grid.ny):
        lines.append(" ".join(repr(float(v)) for v in values[:, j]))
    Path(path).write_text("\n".join(lines) + "\n")
