"""Task definitions: placement rules, entities and evaluation settings.

Each of the four tasks carries the randomized trial setup used during
evolution: robot count drawn between 5 and 10, placement inside a
task-specific region with a separation rule, and random task entities
(a waypoint for homing, a generated fence for monitoring).

Placement rules:

* homing and dispersion: uniform in a 28 m square, at least 5 m apart;
  homing additionally drops one waypoint 40-100 m away at a random bearing;
* clustering: uniform in a 100 m square where every robot ends up within
  40 m of its nearest neighbor (never closer than 2 m); groups can still
  start mutually disconnected at communication range;
* monitoring: a randomly shaped star polygon scaled to the target area
  (10,000 m^2), robots uniform inside it, at least 2 m apart.

Trial durations during evolution are configurable; the ``desk`` presets
use shortened trials so that a full evolutionary run fits on a laptop,
while ``full`` presets use the field-experiment durations.
"""

from __future__ import annotations

import math
from dataclasses import dataclass, field, replace

import numpy as np

from .geometry import GeoFence
from .sensors import SensorConfig
from .simulation import DT, MotionLimits, NoiseConfig, SetupError, TrialSetup

TASK_NAMES = ("homing", "dispersion", "clustering", "monitoring")


@dataclass(frozen=True)
class PlacementSpec:
    """How a trial scatters its robots."""

    kind: str  # "square" | "scatter" | "fence"
    side: float = 28.0  # square side, m (square/chain)
    min_separation: float = 5.0  # m
    max_nearest: float = math.inf  # scatter rule: cap on nearest-neighbor distance
    center: tuple[float, float] = (0.0, 0.0)


@dataclass(frozen=True)
class FenceSpec:
    """Random star-polygon generator settings for monitoring trials."""

    area: float = 10_000.0  # m^2
    min_vertices: int = 4
    max_vertices: int = 8
    radius_ratio: float = 0.55  # min/max vertex radius before area scaling
    min_angle_gap: float = 20.0  # degrees between consecutive vertices


@dataclass(frozen=True)
class TaskConfig:
    """Everything needed to sample and score one task's trials."""

    name: str
    duration_steps: int
    robot_count: tuple[int, int] = (5, 10)
    placement: PlacementSpec = PlacementSpec("square")
    waypoint_distance: tuple[float, float] | None = None  # homing only
    fence_spec: FenceSpec | None = None  # monitoring only
    target_distance: float = 20.0  # dispersion target, m
    cluster_threshold: float = 7.0  # m
    noise: NoiseConfig = field(default_factory=NoiseConfig)
    limits: MotionLimits = field(default_factory=MotionLimits)
    sensors: SensorConfig = field(default_factory=SensorConfig)

    @property
    def duration_seconds(self) -> float:
        return self.duration_steps * DT


def task_config(name: str, desk: bool = False, **overrides) -> TaskConfig:
    """Build a task preset; ``desk=True`` shortens evolution trials."""
    if name == "homing":
        # desk trials use nearer waypoints and a 90 s window so most of the
        # trial exercises holding position at the waypoint, not transit
        cfg = TaskConfig(
            name="homing",
            duration_steps=900 if desk else 1200,
            placement=PlacementSpec("square", side=28.0, min_separation=5.0),
            waypoint_distance=(30.0, 60.0) if desk else (40.0, 100.0),
        )
    elif name == "dispersion":
        cfg = TaskConfig(
            name="dispersion",
            duration_steps=900,
            placement=PlacementSpec("square", side=28.0, min_separation=5.0),
        )
    elif name == "clustering":
        cfg = TaskConfig(
            name="clustering",
            duration_steps=1500 if desk else 1800,
            placement=PlacementSpec("scatter", side=100.0, min_separation=2.0,
                                    max_nearest=40.0),
        )
    elif name == "monitoring":
        cfg = TaskConfig(
            name="monitoring",
            duration_steps=1200 if desk else 3000,
            placement=PlacementSpec("fence", min_separation=2.0),
            fence_spec=FenceSpec(),
        )
    else:
        raise ValueError(f"unknown task {name!r}; expected one of {TASK_NAMES}")
    return replace(cfg, **overrides) if overrides else cfg


# -- placement ------------------------------------------------------------------

_MAX_PLACEMENT_TRIES = 2000


def _sample_square(rng, count, spec: PlacementSpec) -> np.ndarray:
    half = spec.side / 2.0
    cx, cy = spec.center
    placed: list[np.ndarray] = []
    for _ in range(_MAX_PLACEMENT_TRIES):
        p = rng.uniform([cx - half, cy - half], [cx + half, cy + half])
        if all(np.hypot(*(p - q)) >= spec.min_separation for q in placed):
            placed.append(p)
            if len(placed) == count:
                return np.array(placed)
    raise SetupError(
        f"could not place {count} robots {spec.min_separation} m apart "
        f"in a {spec.side} m square"
    )


def _sample_scatter(rng, count, spec: PlacementSpec) -> np.ndarray:
    """Uniform placements where no robot's nearest neighbor exceeds
    ``max_nearest``.

    The cap binds each robot to *some* neighbor but does not force one
    connected group: pairs can end up isolated from the rest, which is the
    realistic hard case for clustering.
    """
    half = spec.side / 2.0
    cx, cy = spec.center
    lo = np.array([cx - half, cy - half])
    hi = np.array([cx + half, cy + half])
    for _ in range(200):
        pts = rng.uniform(lo, hi, (count, 2))
        if count == 1:
            return pts
        d = np.hypot(pts[:, None, 0] - pts[None, :, 0],
                     pts[:, None, 1] - pts[None, :, 1])
        np.fill_diagonal(d, np.inf)
        nn = d.min(axis=1)
        if nn.max() <= spec.max_nearest and nn.min() >= spec.min_separation:
            return pts
    raise SetupError(f"could not scatter-place {count} robots")


def _sample_in_fence(rng, count, fence: GeoFence, min_separation: float) -> np.ndarray:
    xmin, ymin, xmax, ymax = fence.bounding_box()
    placed: list[np.ndarray] = []
    for _ in range(_MAX_PLACEMENT_TRIES):
        p = rng.uniform([xmin, ymin], [xmax, ymax])
        if not fence.contains_points(p[None, :])[0]:
            continue
        if all(np.hypot(*(p - q)) >= min_separation for q in placed):
            placed.append(p)
            if len(placed) == count:
                return np.array(placed)
    raise SetupError(f"could not place {count} robots inside the fence")


def random_fence(rng, spec: FenceSpec, center=(0.0, 0.0)) -> GeoFence:
    """Random simple polygon: star-shaped with sorted vertex bearings,
    scaled to the requested area."""
    for _ in range(100):
        k = int(rng.integers(spec.min_vertices, spec.max_vertices + 1))
        angles = np.sort(rng.uniform(0.0, 360.0, size=k))
        gaps = np.diff(np.concatenate([angles, [angles[0] + 360.0]]))
        if gaps.min() < spec.min_angle_gap:
            continue
        radii = rng.uniform(spec.radius_ratio, 1.0, size=k)
        verts = np.stack([radii * np.sin(np.radians(angles)),
                          radii * np.cos(np.radians(angles))], axis=1)
        fence = GeoFence(verts)
        scale = math.sqrt(spec.area / fence.area())
        return GeoFence(verts * scale + np.asarray(center))
    raise SetupError("random fence generation failed")


def sample_trial(task: TaskConfig, rng: np.random.Generator) -> TrialSetup:
    """Draw one randomized trial: robot count, poses and task entities.

    Draw order is fixed (count, entities, positions, headings) so a trial
    is fully reproducible from its generator state.
    """
    lo, hi = task.robot_count
    count = int(rng.integers(lo, hi + 1))

    waypoints = None
    active_waypoint = -1
    fence = None
    if task.name == "homing":
        dmin, dmax = task.waypoint_distance
        bearing = math.radians(rng.uniform(0.0, 360.0))
        dist = rng.uniform(dmin, dmax)
        cx, cy = task.placement.center
        waypoints = np.array([[cx + dist * math.sin(bearing),
                               cy + dist * math.cos(bearing)]])
        active_waypoint = 0
    elif task.name == "monitoring":
        fence = random_fence(rng, task.fence_spec, center=task.placement.center)

    if task.placement.kind == "square":
        positions = _sample_square(rng, count, task.placement)
    elif task.placement.kind == "scatter":
        positions = _sample_scatter(rng, count, task.placement)
    elif task.placement.kind == "fence":
        positions = _sample_in_fence(rng, count, fence, task.placement.min_separation)
    else:
        raise SetupError(f"unknown placement kind {task.placement.kind!r}")
    headings = rng.uniform(0.0, 360.0, size=count)

    return TrialSetup(
        positions=positions,
        headings=headings,
        rng=rng,
        waypoints=waypoints,
        active_waypoint=active_waypoint,
        fence=fence,
        noise=task.noise,
        limits=task.limits,
    )
