"""Replay scenarios: the built-in evaluation suite plus robustness timelines.

A scenario fixes the robot count, placement, duration, task entities and a
list of timed events (waypoint switches, robots added or removed mid-run),
and records per-second metric series plus a full trajectory log.  Initial
conditions derive solely from (scenario, seed), never from the controller,
so different controllers replay against identical starts.

Built-in library (names accepted by ``builtin_scenario``):

* ``homing-tour``      four 60 s waypoint legs, consecutive waypoints 40 m
                       apart, visiting A, B, C, then B again (240 s)
* ``dispersion``       8 robots from a 28 m square, 90 s
* ``clustering``       8 robots scattered over a 100 m square, 180 s
* ``monitoring-square | -lshape | -rect``  10,000 m^2 areas, 300 s
* ``dispersion-robustness``   4 robots disperse; at 60 s four more drive to
                       the swarm center and at 180 s join the dispersion
* ``monitoring-robustness``   15 min; 4 of 8 robots removed at 300 s, two
                       fresh ones added at 600 s

Robot "removal" freezes the robot and expires its ledger entry (the
simulation analogue of lifting it out of the water); additions enter at a
scenario-defined spot.
"""

from __future__ import annotations

import logging
import math
import zlib
from dataclasses import dataclass
from pathlib import Path

import numpy as np

from .evolution import STREAM_SCENARIO, commands_from_outputs, derived_rng
from .fitness import CoverageGrid, cluster_partition
from .geometry import GeoFence, Pose, Vec2, relative_bearing
from .neat import Genome, NetworkPhenotype
from .sensors import SensorConfig
from .simulation import DT, MotionLimits, NoiseConfig, WorldState
from .tasks import PlacementSpec, _sample_scatter, _sample_square

log = logging.getLogger(__name__)

CONTROLLER_GENOME = 0
CONTROLLER_GOTO_CENTROID = 1


class ScenarioError(RuntimeError):
    pass


@dataclass(frozen=True)
class SwitchWaypoint:
    time_s: float
    index: int


@dataclass(frozen=True)
class AddRobots:
    time_s: float
    count: int
    placement: str  # "ring40" (around swarm centroid) | "entry-west" (fence edge)
    controller: str = "genome"  # "genome" | "goto_centroid"


@dataclass(frozen=True)
class RemoveRobots:
    time_s: float
    count: int  # lowest-id active robots are lifted out


@dataclass(frozen=True)
class AssignGenome:
    """Hand every robot over to the evolved controller (state reset)."""

    time_s: float


Event = SwitchWaypoint | AddRobots | RemoveRobots | AssignGenome


@dataclass(frozen=True)
class Scenario:
    name: str
    metric: str  # homing | dispersion | clustering | monitoring
    robots: int
    duration_s: float
    placement: PlacementSpec
    waypoints: tuple[tuple[float, float], ...] | None = None
    fence_vertices: tuple | None = None
    events: tuple[Event, ...] = ()
    target_distance: float = 20.0
    cluster_threshold: float = 7.0

    def __post_init__(self):
        times = [e.time_s for e in self.events]
        if any(t2 < t1 for t1, t2 in zip(times, times[1:])) or \
                any(not (0.0 <= t <= self.duration_s) for t in times):
            raise ScenarioError("events must be time-ordered within the run")

    def fence(self) -> GeoFence | None:
        return GeoFence(self.fence_vertices) if self.fence_vertices else None


def _lshape_vertices(area: float = 10_000.0) -> tuple:
    # full square of side a minus its top-right corner square; proportions
    # follow a 100 m square with a 50 m cut, scaled to the requested area
    a = 100.0
    c = 50.0
    scale = math.sqrt(area / (a * a - (a - c) * (a - c)))
    a *= scale
    c *= scale
    half = a / 2.0
    verts = [(0, 0), (a, 0), (a, c), (c, c), (c, a), (0, a)]
    return tuple((x - half, y - half) for x, y in verts)


def builtin_scenario(name: str, robots: int | None = None) -> Scenario:
    """Look up a library scenario, optionally overriding the swarm size."""
    base = 8 if robots is None else robots
    if name == "homing-tour":
        waypoints = ((0.0, 40.0), (40.0, 40.0), (40.0, 80.0))
        sc = Scenario(
            name=name, metric="homing", robots=base, duration_s=240.0,
            placement=PlacementSpec("square", side=20.0, min_separation=3.0),
            waypoints=waypoints,
            events=(SwitchWaypoint(60.0, 1), SwitchWaypoint(120.0, 2),
                    SwitchWaypoint(180.0, 1)),
        )
    elif name == "dispersion":
        sc = Scenario(
            name=name, metric="dispersion", robots=base, duration_s=90.0,
            placement=PlacementSpec("square", side=28.0, min_separation=5.0),
        )
    elif name == "clustering":
        sc = Scenario(
            name=name, metric="clustering", robots=base, duration_s=180.0,
            placement=PlacementSpec("scatter", side=100.0, min_separation=2.0,
                                    max_nearest=40.0),
        )
    elif name == "monitoring-square":
        sc = Scenario(
            name=name, metric="monitoring", robots=base, duration_s=300.0,
            placement=PlacementSpec("square", side=28.0, min_separation=3.0),
            fence_vertices=((-50.0, -50.0), (50.0, -50.0), (50.0, 50.0), (-50.0, 50.0)),
        )
    elif name == "monitoring-lshape":
        sc = Scenario(
            name=name, metric="monitoring", robots=base, duration_s=300.0,
            placement=PlacementSpec("square", side=28.0, min_separation=3.0),
            fence_vertices=_lshape_vertices(),
        )
    elif name == "monitoring-rect":
        w = 100.0 * math.sqrt(2.0)
        h = 10_000.0 / w
        sc = Scenario(
            name=name, metric="monitoring", robots=base, duration_s=300.0,
            placement=PlacementSpec("square", side=28.0, min_separation=3.0),
            fence_vertices=((-w / 2, -h / 2), (w / 2, -h / 2), (w / 2, h / 2), (-w / 2, h / 2)),
        )
    elif name == "dispersion-robustness":
        sc = Scenario(
            name=name, metric="dispersion", robots=4 if robots is None else robots,
            duration_s=300.0,
            placement=PlacementSpec("square", side=28.0, min_separation=5.0),
            events=(AddRobots(60.0, 4, "ring40", controller="goto_centroid"),
                    AssignGenome(180.0)),
        )
    elif name == "monitoring-robustness":
        sc = Scenario(
            name=name, metric="monitoring", robots=base, duration_s=900.0,
            placement=PlacementSpec("square", side=28.0, min_separation=3.0),
            fence_vertices=((-50.0, -50.0), (50.0, -50.0), (50.0, 50.0), (-50.0, 50.0)),
            events=(RemoveRobots(300.0, 4), AddRobots(600.0, 2, "entry-west")),
        )
    else:
        raise ScenarioError(f"unknown scenario {name!r}")
    return sc


SCENARIO_NAMES = ("homing-tour", "dispersion", "clustering", "monitoring-square",
                  "monitoring-lshape", "monitoring-rect", "dispersion-robustness",
                  "monitoring-robustness")


_EVENT_TYPES = {"switch_waypoint": SwitchWaypoint, "add_robots": AddRobots,
                "remove_robots": RemoveRobots, "assign_genome": AssignGenome}


def scenario_from_json(path) -> Scenario:
    """Load a custom scenario from a JSON file.

    Expected keys: name, metric, robots, duration_s, placement
    {kind, side, min_separation, max_nearest, center}, and optionally
    waypoints, fence (vertex list in meters), events
    [{type, time_s, ...}], target_distance.
    """
    import json

    try:
        d = json.loads(Path(path).read_text())
    except json.JSONDecodeError as exc:
        raise ScenarioError(f"bad scenario file {path}: {exc}") from exc
    for key in ("metric", "robots", "duration_s"):
        if key not in d:
            raise ScenarioError(f"scenario file {path} is missing {key!r}")
    placement = d.get("placement", {})
    events = []
    for e in d.get("events", []):
        kwargs = {k: v for k, v in e.items() if k != "type"}
        try:
            events.append(_EVENT_TYPES[e["type"]](**kwargs))
        except KeyError as exc:
            raise ScenarioError(f"unknown event type in {path}: {exc}") from exc
    return Scenario(
        name=d.get("name", Path(path).stem),
        metric=d["metric"],
        robots=int(d["robots"]),
        duration_s=float(d["duration_s"]),
        placement=PlacementSpec(
            kind=placement.get("kind", "square"),
            side=float(placement.get("side", 28.0)),
            min_separation=float(placement.get("min_separation", 3.0)),
            max_nearest=float(placement.get("max_nearest", math.inf)),
            center=tuple(placement.get("center", (0.0, 0.0))),
        ),
        waypoints=tuple(tuple(w) for w in d["waypoints"]) if d.get("waypoints") else None,
        fence_vertices=tuple(tuple(v) for v in d["fence"]) if d.get("fence") else None,
        events=tuple(events),
        target_distance=float(d.get("target_distance", 20.0)),
    )


@dataclass
class MetricSeries:
    """Named per-second time series recorded during a scenario run."""

    times: np.ndarray
    columns: dict[str, np.ndarray]

    def __post_init__(self):
        if len(self.times) > 1 and not (np.diff(self.times) > 0).all():
            raise ScenarioError("metric timestamps must be strictly increasing")

    def column(self, name: str) -> np.ndarray:
        return self.columns[name]

    def window(self, name: str, last_seconds: float) -> np.ndarray:
        if not len(self.times) or last_seconds > self.times[-1]:
            raise ScenarioError("analysis window is longer than the run")
        cut = self.times[-1] - last_seconds
        return self.columns[name][self.times > cut]

    def to_csv(self, path) -> None:
        names = sorted(self.columns)
        rows = ["t," + ",".join(names)]
        for k, t in enumerate(self.times):
            rows.append(f"{float(t)!r}," + ",".join(repr(float(self.columns[n][k]))
                                                    for n in names))
        Path(path).write_text("\n".join(rows) + "\n")

    @staticmethod
    def from_csv(path) -> "MetricSeries":
        lines = Path(path).read_text().strip().splitlines()
        names = lines[0].split(",")[1:]
        data = np.array([[float(x) for x in line.split(",")] for line in lines[1:]])
        return MetricSeries(times=data[:, 0],
                            columns={n: data[:, 1 + i] for i, n in enumerate(names)})


@dataclass
class ScenarioResult:
    scenario: Scenario
    seed: int
    metrics: MetricSeries
    trajectory: np.ndarray  # rows of (t, id, x, y, heading, speed), active robots only
    start_positions: np.ndarray | None = None  # (R, 2) at t = 0
    coverage: CoverageGrid | None = None

    def write_trajectory_csv(self, path) -> None:
        rows = ["t,id,x,y,heading,speed"]
        for t, rid, x, y, h, s in self.trajectory:
            rows.append(f"{float(t)!r},{int(rid)},{float(x)!r},{float(y)!r},"
                        f"{float(h)!r},{float(s)!r}")
        Path(path).write_text("\n".join(rows) + "\n")


def dispersion_error(series: MetricSeries, window_s: float = 10.0) -> float:
    """Mean |nearest-neighbor distance - target| over the final window."""
    return float(series.window("dispersion_error", window_s).mean())


def _goto_commands(world: WorldState, rows: np.ndarray, target,
                   limits: MotionLimits) -> np.ndarray:
    """Proportional drive toward a point (plumbing for scripted robots)."""
    cmds = np.zeros((len(rows), 2))
    for k, i in enumerate(rows):
        pose = Pose(Vec2(world.positions[i, 0], world.positions[i, 1]),
                    world.headings[i])
        bearing = relative_bearing(pose, Vec2(float(target[0]), float(target[1])))
        dist = float(np.hypot(*(np.asarray(target) - world.positions[i])))
        cmds[k, 0] = limits.v_max * min(1.0, dist / 10.0)
        cmds[k, 1] = float(np.clip(2.0 * bearing, -limits.omega_max, limits.omega_max))
    return cmds


def run_scenario(scenario: Scenario, genome: Genome, seed: int = 0,
                 noise: NoiseConfig = NoiseConfig(),
                 limits: MotionLimits = MotionLimits(),
                 sensors: SensorConfig = SensorConfig()) -> ScenarioResult:
    """Replay a controller through a scenario, events included.

    Metrics are sampled once per second (matching the broadcast cadence);
    the trajectory log keeps every step of every active robot.
    """
    rng = derived_rng(seed, STREAM_SCENARIO, zlib.crc32(scenario.name.encode()))
    if scenario.placement.kind == "square":
        positions = _sample_square(rng, scenario.robots, scenario.placement)
    elif scenario.placement.kind == "scatter":
        positions = _sample_scatter(rng, scenario.robots, scenario.placement)
    else:
        raise ScenarioError(f"unsupported scenario placement {scenario.placement.kind!r}")
    headings = rng.uniform(0.0, 360.0, size=scenario.robots)

    fence = scenario.fence()
    world = WorldState(
        positions, headings,
        waypoints=scenario.waypoints,
        active_waypoint=0 if scenario.waypoints else -1,
        fence=fence, noise=noise, limits=limits, sensor_config=sensors, rng=rng,
    )
    net = NetworkPhenotype(genome)
    net.reset(world.n_robots)
    controller = np.full(world.n_robots, CONTROLLER_GENOME)

    grid = CoverageGrid(fence) if scenario.metric == "monitoring" and fence else None
    total_steps = round(scenario.duration_s / DT)
    pending = list(scenario.events)
    active_wp = 0 if scenario.waypoints else -1

    traj_rows: list[np.ndarray] = []
    metric_times: list[float] = []
    metric_cols: dict[str, list[float]] = {}

    def apply_event(event: Event) -> None:
        nonlocal active_wp, controller
        if isinstance(event, SwitchWaypoint):
            active_wp = event.index
            world.set_active_waypoint(event.index)
        elif isinstance(event, RemoveRobots):
            ids = [int(r) for r in np.nonzero(world.active)[0][: event.count]]
            world.remove_robots(ids)
            log.info("scenario %s t=%.0fs: removed robots %s", scenario.name,
                     world.clock, ids)
        elif isinstance(event, AddRobots):
            live = np.nonzero(world.active)[0]
            centroid = world.positions[live].mean(axis=0)
            setup_rng = world.batch.setups[0].rng
            if event.placement == "ring40":
                theta0 = setup_rng.uniform(0.0, 360.0)
                angles = np.radians(theta0 + 360.0 * np.arange(event.count) / event.count)
                pts = centroid + 40.0 * np.stack([np.sin(angles), np.cos(angles)], axis=1)
            elif event.placement == "entry-west":
                xmin, ymin, xmax, ymax = fence.bounding_box()
                ys = (ymin + ymax) / 2.0 + 6.0 * (np.arange(event.count)
                                                  - (event.count - 1) / 2.0)
                pts = np.stack([np.full(event.count, xmin - 5.0), ys], axis=1)
            else:
                raise ScenarioError(f"unknown add placement {event.placement!r}")
            brg = np.degrees(np.arctan2(centroid[0] - pts[:, 0], centroid[1] - pts[:, 1]))
            new_ids = world.add_robots(pts, brg)
            net.grow_batch(world.n_robots)
            kind = (CONTROLLER_GOTO_CENTROID if event.controller == "goto_centroid"
                    else CONTROLLER_GENOME)
            controller = np.concatenate([controller, np.full(len(new_ids), kind)])
            log.info("scenario %s t=%.0fs: added %d robots (%s)", scenario.name,
                     world.clock, event.count, event.controller)
        elif isinstance(event, AssignGenome):
            switching = controller != CONTROLLER_GENOME
            controller[:] = CONTROLLER_GENOME
            if switching.any():  # fresh recurrent state for handed-over robots
                net.values[switching] = 0.0
            log.info("scenario %s t=%.0fs: all robots on evolved controller",
                     scenario.name, world.clock)

    def record_metrics() -> None:
        live = np.nonzero(world.active)[0]
        pos = world.positions[live]
        row = {"active_robots": float(len(live))}
        if scenario.metric == "homing":
            wp = np.asarray(scenario.waypoints[active_wp])
            row["waypoint_distance_mean"] = float(
                np.hypot(pos[:, 0] - wp[0], pos[:, 1] - wp[1]).mean())
            row["active_waypoint"] = float(active_wp)
        elif scenario.metric == "dispersion":
            if len(pos) >= 2:
                diff = pos[:, None, :] - pos[None, :, :]
                d = np.sqrt((diff ** 2).sum(axis=2))
                np.fill_diagonal(d, np.inf)
                nn = d.min(axis=1)
                row["nn_distance_mean"] = float(nn.mean())
                row["dispersion_error"] = float(np.abs(nn - scenario.target_distance).mean())
            else:
                row["nn_distance_mean"] = math.nan
                row["dispersion_error"] = math.nan
        elif scenario.metric == "clustering":
            row["cluster_count"] = float(cluster_partition(pos, scenario.cluster_threshold).count)
        elif scenario.metric == "monitoring":
            row["coverage_mean"] = grid.mean_value()
            row["covered_fraction"] = grid.covered_fraction()
        metric_times.append(world.clock)
        for k, v in row.items():
            metric_cols.setdefault(k, []).append(v)

    for _ in range(total_steps):
        while pending and pending[0].time_s <= world.clock + DT / 2.0:
            apply_event(pending.pop(0))

        frames = world.sensor_frames()
        outputs = net.activate_batch(frames)
        cmds = commands_from_outputs(outputs, limits)
        goto_rows = np.nonzero(world.active & (controller == CONTROLLER_GOTO_CENTROID))[0]
        if len(goto_rows):
            genome_rows = np.nonzero(world.active & (controller == CONTROLLER_GENOME))[0]
            target = world.positions[genome_rows].mean(axis=0) if len(genome_rows) \
                else world.positions[world.active].mean(axis=0)
            cmds[goto_rows] = _goto_commands(world, goto_rows, target, limits)
        world.batch.step(cmds)

        if grid is not None:
            grid.step(world.positions[world.active])
        live = np.nonzero(world.active)[0]
        t = world.clock
        block = np.empty((len(live), 6))
        block[:, 0] = t
        block[:, 1] = live
        block[:, 2:4] = world.positions[live]
        block[:, 4] = world.headings[live]
        block[:, 5] = world.speeds[live]
        traj_rows.append(block)

        if world.batch.step_index % 10 == 0:
            record_metrics()

    return ScenarioResult(
        scenario=scenario,
        seed=seed,
        metrics=MetricSeries(times=np.array(metric_times),
                             columns={k: np.array(v) for k, v in metric_cols.items()}),
        trajectory=np.concatenate(traj_rows) if traj_rows else np.empty((0, 6)),
        start_positions=positions.copy(),
        coverage=grid,
    )
