"""Controller inputs: waypoint, robot and geo-fence sensors.

Every controller sees the same 11-entry frame each control step, all values
normalized to [0, 1]:

    index  meaning
    0      waypoint bearing, (relative bearing + 180) / 360
    1      waypoint distance, min(d, cap) / cap
    2..5   robot sensor, slices front/right/back/left
    6..9   geo-fence sensor, same slice order
    10     1.0 if inside the fence else 0.0

Entities absent from a task give neutral readings: no waypoint reads
(0, 0); no fence reads all-clear ([1, 1, 1, 1], inside).  The sensors only
ever see broadcast (ledger) neighbor positions and the robot's own noisy
GPS/compass estimate, never ground truth: noise is injected upstream by the
simulation, which keeps everything here deterministic.

The four slices are 90 degrees wide and relative to the robot's heading,
with the front slice centered on it: front [-45, 45), right [45, 135),
back [135, 225), left [225, 315).
"""

from __future__ import annotations

from dataclasses import dataclass
from typing import Sequence

import numpy as np

from .geometry import GeoFence, Pose, relative_bearing

FRAME_SIZE = 11
SLICE_NAMES = ("front", "right", "back", "left")


@dataclass(frozen=True)
class SensorConfig:
    robot_sensor_range: float = 40.0  # m
    fence_sensor_range: float = 40.0  # m
    waypoint_distance_cap: float = 100.0  # m
    fence_sample_spacing: float = 1.0  # boundary discretization, m

    def __post_init__(self):
        if min(self.robot_sensor_range, self.fence_sensor_range,
               self.waypoint_distance_cap, self.fence_sample_spacing) <= 0.0:
            raise ValueError("sensor ranges must be positive")


def _slice_index(rel_bearing):
    """Map relative bearings (degrees) to slice indices 0..3.

    floor((b + 405)/90) & 3 equals floor(((b + 45) mod 360)/90) for every
    b (adding 360 adds 4 to the floor), without a float mod.
    """
    return np.floor_divide(np.asarray(rel_bearing) + 405.0, 90.0).astype(int) & 3


def waypoint_sensor(
    pose: Pose, waypoint: Sequence[float] | None, cfg: SensorConfig = SensorConfig()
) -> tuple[float, float]:
    """Normalized (bearing, distance) to the active waypoint; (0, 0) if none."""
    if waypoint is None:
        return 0.0, 0.0
    bearing = relative_bearing(pose, waypoint)
    dx = waypoint[0] - pose.position.x
    dy = waypoint[1] - pose.position.y
    d = float(np.hypot(dx, dy))
    return (bearing + 180.0) / 360.0, min(d, cfg.waypoint_distance_cap) / cfg.waypoint_distance_cap


def robot_sensor(
    pose: Pose, neighbor_positions, cfg: SensorConfig = SensorConfig()
) -> list[float]:
    """Per-slice normalized distance to the closest broadcast neighbor.

    ``neighbor_positions`` are the ledger entries of the other robots,
    shape (K, 2).  A slice with no neighbor in range reads 1.0.
    """
    values = [1.0] * 4
    pts = np.atleast_2d(np.asarray(neighbor_positions, dtype=float)) if len(neighbor_positions) else None
    if pts is None or pts.size == 0:
        return values
    dx = pts[:, 0] - pose.position.x
    dy = pts[:, 1] - pose.position.y
    d = np.hypot(dx, dy)
    bearing = np.mod(np.degrees(np.arctan2(dx, dy)) - pose.heading, 360.0)
    idx = _slice_index(bearing)
    in_range = d <= cfg.robot_sensor_range
    for s in range(4):
        sel = in_range & (idx == s)
        if sel.any():
            values[s] = float(d[sel].min()) / cfg.robot_sensor_range
    return values


def geofence_sensor(
    pose: Pose, fence: GeoFence | None, cfg: SensorConfig = SensorConfig()
) -> tuple[list[float], int]:
    """Per-slice normalized distance to the fence boundary plus inside flag.

    The boundary is discretized at ``cfg.fence_sample_spacing`` meters and
    sample points are bucketed into slices by bearing; a slice whose
    nearest boundary point is out of range reads 1.0.  Without a fence the
    reading is neutral: all-clear and inside.
    """
    if fence is None:
        return [1.0] * 4, 1
    samples = fence.edge_samples(cfg.fence_sample_spacing)
    dx = samples[:, 0] - pose.position.x
    dy = samples[:, 1] - pose.position.y
    d = np.hypot(dx, dy)
    bearing = np.mod(np.degrees(np.arctan2(dx, dy)) - pose.heading, 360.0)
    idx = _slice_index(bearing)
    in_range = d <= cfg.fence_sensor_range
    values = [1.0] * 4
    for s in range(4):
        sel = in_range & (idx == s)
        if sel.any():
            values[s] = float(d[sel].min()) / cfg.fence_sensor_range
    inside = 1 if bool(fence.contains_points(
        np.asarray([[pose.position.x, pose.position.y]]))[0]) else 0
    return values, inside


def sensor_frame(
    pose: Pose,
    *,
    waypoint=None,
    neighbor_positions=(),
    fence: GeoFence | None = None,
    cfg: SensorConfig = SensorConfig(),
) -> np.ndarray:
    """Assemble one full 11-value frame (reference scalar path)."""
    wp_a, wp_d = waypoint_sensor(pose, waypoint, cfg)
    rob = robot_sensor(pose, neighbor_positions, cfg)
    fen, inside = geofence_sensor(pose, fence, cfg)
    return np.array([wp_a, wp_d, *rob, *fen, float(inside)])


def build_frames(batch) -> np.ndarray:
    """Vectorized frames for every robot of a :class:`TrialBatch`.

    Matches :func:`sensor_frame` applied row by row (tested equivalence);
    inactive robots get zero frames and are invisible to everyone.  Only
    in-range pairs enter the trig/slice math, which keeps the per-step
    cost low at evolution scale.
    """
    cfg = batch.sensor_config
    n = batch.n_rows
    frames = np.zeros((n, FRAME_SIZE))
    if n == 0:
        return frames
    pos = batch.measured_positions
    head = batch.measured_headings

    # waypoint block
    wp = batch._waypoint_rows
    dwx = wp[:, 0] - pos[:, 0]
    dwy = wp[:, 1] - pos[:, 1]
    dist = np.hypot(dwx, dwy)
    has_wp = np.isfinite(dist)
    bearing = np.degrees(np.arctan2(dwx, dwy))
    rel = np.mod(bearing - head + 180.0, 360.0) - 180.0
    rel = np.where(dist > 0.0, rel, 0.0)  # coincident waypoint reads dead ahead
    cap = cfg.waypoint_distance_cap
    frames[:, 0] = np.where(has_wp, (rel + 180.0) / 360.0, 0.0)
    frames[:, 1] = np.where(has_wp, np.minimum(dist, cap) / cap, 0.0)

    # robot block: ledger positions of same-trial active neighbors
    led = batch.ledger_positions
    dx = led[:, 0][None, :] - pos[:, 0][:, None]
    dy = led[:, 1][None, :] - pos[:, 1][:, None]
    d2 = dx * dx + dy * dy
    r_rob = cfg.robot_sensor_range
    ii, jj = np.nonzero(batch.pair_mask() & (d2 <= r_rob * r_rob))
    rvals = np.ones((n, 4))
    if len(ii):
        d = np.sqrt(d2[ii, jj])
        b = np.degrees(np.arctan2(dx[ii, jj], dy[ii, jj])) - head[ii]
        np.minimum.at(rvals, (ii, _slice_index(b)), d / r_rob)
    frames[:, 2:6] = rvals

    # fence block, per trial (fences differ per trial and most tasks have none)
    frames[:, 6:10] = 1.0
    frames[:, 10] = 1.0
    r_fen = cfg.fence_sensor_range
    for i, setup in enumerate(batch.setups):
        fence = setup.fence
        if fence is None:
            continue
        sl = batch.slices[i]
        samples = batch._fence_samples[i]
        fdx = samples[:, 0][None, :] - pos[sl][:, 0][:, None]
        fdy = samples[:, 1][None, :] - pos[sl][:, 1][:, None]
        fd2 = fdx * fdx + fdy * fdy
        fi, fj = np.nonzero(fd2 <= r_fen * r_fen)
        fvals = np.ones((sl.stop - sl.start, 4))
        if len(fi):
            fd = np.sqrt(fd2[fi, fj])
            fb = np.degrees(np.arctan2(fdx[fi, fj], fdy[fi, fj])) - head[sl][fi]
            np.minimum.at(fvals, (fi, _slice_index(fb)), fd / r_fen)
        frames[sl, 6:10] = fvals
        frames[sl, 10] = fence.contains_points(pos[sl]).astype(float)

    frames[~batch.active] = 0.0
    return frames
