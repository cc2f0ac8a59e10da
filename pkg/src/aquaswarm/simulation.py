"""Discrete-time kinematic simulation of the surface-robot swarm.

One control/simulation step is 0.1 s.  Robot motion is a unicycle with a
first-order lag on the commanded linear speed and turn rate, plus three
noise layers: per-trial parameter variation (effective top speed), per-step
sensing noise (GPS position, compass heading), and environmental drift (a
constant water current with a random per-trial direction).

The hot path is :class:`TrialBatch`, which steps many independent trials in
lock-step on concatenated arrays (one genome is typically evaluated on 10
trials at once).  Each trial keeps its own RNG stream, so a trial's
trajectory is bit-identical whether it runs alone or inside a batch.
:class:`WorldState` is the single-trial view used by scenario replays and
missions.
"""

from __future__ import annotations

import math
from dataclasses import dataclass, field
from typing import NamedTuple, Sequence

import numpy as np

from .geometry import GeoFence, Pose, Vec2

DT = 0.1  # control period, seconds
BROADCAST_PERIOD_STEPS = 10  # positions are re-broadcast every second


class SimulationError(RuntimeError):
    pass


class SetupError(SimulationError):
    """Trial construction failed (infeasible placement and the like)."""


@dataclass(frozen=True)
class MotionLimits:
    """Actuation envelope and motion-model constants."""

    v_max: float = 1.7  # m/s
    omega_max: float = 90.0  # deg/s
    tau_v: float = 1.0  # linear-speed lag time constant, s
    tau_omega: float = 0.5  # turn-rate lag time constant, s
    baseline: float = 0.3  # differential-drive baseline used by the motor view, m


@dataclass(frozen=True)
class NoiseConfig:
    """Magnitudes of the three noise layers (all default-on for evolution)."""

    param_variation: float = 0.10  # per-trial +-fraction on effective v_max
    position_sigma: float = 1.5  # per-step GPS noise, m
    heading_sigma: float = 5.0  # per-step compass noise, deg
    actuator_fraction: float = 0.05  # per-step +-fraction on applied actuation
    current_speed: float = 0.1  # water drift, m/s, random per-trial direction

    @staticmethod
    def none() -> "NoiseConfig":
        return NoiseConfig(0.0, 0.0, 0.0, 0.0, 0.0)


class ActuationCommand(NamedTuple):
    """Controller output: desired linear speed (m/s) and turn rate (deg/s)."""

    linear_speed: float
    angular_rate: float


@dataclass(frozen=True)
class RobotState:
    """Snapshot of one robot: pose, lag states and its per-trial speed cap."""

    id: int
    pose: Pose
    linear_speed: float
    angular_rate: float
    v_max_effective: float


def convert_to_motor_speeds(
    cmd: ActuationCommand, limits: MotionLimits = MotionLimits()
) -> tuple[float, float]:
    """Map a (v, omega) command to left/right motor speeds in m/s.

    The command is first clamped to the actuation envelope, then
    ``left = v + omega*B/2`` and ``right = v - omega*B/2`` (omega in rad/s,
    B the baseline); positive omega turns clockwise, so the left motor runs
    faster.  Each motor speed is finally clamped to +-v_max.
    """
    v = min(max(cmd.linear_speed, 0.0), limits.v_max)
    w = min(max(cmd.angular_rate, -limits.omega_max), limits.omega_max)
    w_rad = math.radians(w)
    half = 0.5 * limits.baseline
    left = v + w_rad * half
    right = v - w_rad * half
    clamp = lambda s: min(max(s, -limits.v_max), limits.v_max)
    return clamp(left), clamp(right)


def motor_speeds_to_command(
    left: float, right: float, limits: MotionLimits = MotionLimits()
) -> ActuationCommand:
    """Inverse of :func:`convert_to_motor_speeds` (exact when unclamped)."""
    v = 0.5 * (left + right)
    w = math.degrees((left - right) / limits.baseline)
    return ActuationCommand(v, w)


def _lag_decay(tau: float, dt: float) -> float:
    """Exact discrete decay factor of a first-order lag; tau <= 0 is instant."""
    if tau <= 0.0:
        return 0.0
    return math.exp(-dt / tau)


def _integrate(pos, head, speed, angrate, v_cmd, w_cmd, v_max_eff, limits,
               decay_v, decay_w, dt, current, act_eps):
    """Advance the unicycle arrays by one step (shared scalar/batch kernel).

    The displacement is applied along the midpoint heading of the step,
    which integrates the turning motion to second order in dt.
    """
    v_t = np.clip(v_cmd, 0.0, v_max_eff)
    w_t = np.clip(w_cmd, -limits.omega_max, limits.omega_max)
    speed_n = v_t + (speed - v_t) * decay_v
    ang_n = w_t + (angrate - w_t) * decay_w
    v_used = np.clip(speed_n * (1.0 + act_eps[:, 0]), 0.0, v_max_eff)
    w_used = np.clip(ang_n * (1.0 + act_eps[:, 1]), -limits.omega_max, limits.omega_max)
    mid = np.radians(head + 0.5 * w_used * dt)
    head_n = np.mod(head + w_used * dt, 360.0)
    step_len = v_used * dt
    pos_n = pos + np.stack([step_len * np.sin(mid), step_len * np.cos(mid)], axis=1)
    pos_n += current * dt
    return pos_n, head_n, speed_n, ang_n


def step_robot(
    state: RobotState,
    cmd: ActuationCommand,
    noise: NoiseConfig = NoiseConfig.none(),
    dt: float = DT,
    rng: np.random.Generator | None = None,
    current: Sequence[float] = (0.0, 0.0),
    limits: MotionLimits = MotionLimits(),
) -> RobotState:
    """Advance a single robot by one control period.

    Actuator noise draws come from ``rng`` when given; GPS/compass noise is
    a sensing-side effect and does not enter the motion update.
    """
    if rng is not None and noise.actuator_fraction > 0.0:
        eps = rng.uniform(-noise.actuator_fraction, noise.actuator_fraction, size=(1, 2))
    else:
        eps = np.zeros((1, 2))
    pos = np.asarray([[state.pose.position.x, state.pose.position.y]], dtype=float)
    head = np.asarray([state.pose.heading], dtype=float)
    speed = np.asarray([state.linear_speed], dtype=float)
    ang = np.asarray([state.angular_rate], dtype=float)
    vmax = np.asarray([state.v_max_effective], dtype=float)
    pos, head, speed, ang = _integrate(
        pos, head, speed, ang,
        np.asarray([cmd.linear_speed], dtype=float),
        np.asarray([cmd.angular_rate], dtype=float),
        vmax, limits,
        _lag_decay(limits.tau_v, dt), _lag_decay(limits.tau_omega, dt),
        dt, np.asarray(current, dtype=float), eps,
    )
    return RobotState(
        id=state.id,
        pose=Pose(Vec2(float(pos[0, 0]), float(pos[0, 1])), float(head[0])),
        linear_speed=float(speed[0]),
        angular_rate=float(ang[0]),
        v_max_effective=state.v_max_effective,
    )


@dataclass
class TrialSetup:
    """Initial conditions of one trial, with its private RNG stream."""

    positions: np.ndarray  # (R, 2) true starting positions
    headings: np.ndarray  # (R,)
    rng: np.random.Generator
    waypoints: np.ndarray | None = None  # (W, 2)
    active_waypoint: int = -1
    fence: GeoFence | None = None
    noise: NoiseConfig = field(default_factory=NoiseConfig)
    limits: MotionLimits = field(default_factory=MotionLimits)


class BroadcastEntry(NamedTuple):
    robot_id: int
    position: Vec2
    timestamp: float


class TrialBatch:
    """Several independent trials stepped in lock-step on shared arrays.

    Rows are the concatenation of all trials' robots.  Robots only ever
    sense robots of their own trial; currents, fences and waypoints are
    per-trial.  All random draws are made from each trial's own generator
    in a fixed order, so batching does not perturb individual trials.
    """

    def __init__(self, setups: Sequence[TrialSetup], sensor_config=None, dt: float = DT):
        from .sensors import SensorConfig  # local import to avoid a cycle

        self.sensor_config = sensor_config or SensorConfig()
        self.dt = dt
        self.setups = list(setups)
        self.n_trials = len(self.setups)
        counts = [len(s.positions) for s in self.setups]
        offsets = np.concatenate([[0], np.cumsum(counts)])
        self.slices = [slice(int(offsets[i]), int(offsets[i + 1])) for i in range(self.n_trials)]
        n = int(offsets[-1])

        self.positions = np.concatenate([np.asarray(s.positions, dtype=float) for s in self.setups])
        self.headings = np.concatenate([np.mod(np.asarray(s.headings, dtype=float), 360.0) for s in self.setups])
        self.speeds = np.zeros(n)
        self.angular_rates = np.zeros(n)
        self.active = np.ones(n, dtype=bool)
        self.trial_ids = np.repeat(np.arange(self.n_trials), counts)
        self.robot_ids = np.concatenate([np.arange(c) for c in counts]).astype(int)
        self.step_index = 0

        self.limits = [s.limits for s in self.setups]
        self._decay_v = np.repeat([_lag_decay(s.limits.tau_v, dt) for s in self.setups], counts)
        self._decay_w = np.repeat([_lag_decay(s.limits.tau_omega, dt) for s in self.setups], counts)
        self._omega_max = np.repeat([s.limits.omega_max for s in self.setups], counts)

        # per-trial draws, fixed order: v_max scale, current direction,
        # initial GPS noise, initial heading noise
        vmax_eff = np.empty(n)
        current = np.empty((n, 2))
        meas_pos = np.empty((n, 2))
        meas_head = np.empty(n)
        for i, s in enumerate(self.setups):
            sl = self.slices[i]
            r = counts[i]
            p = s.noise.param_variation
            vmax_eff[sl] = s.limits.v_max * s.rng.uniform(1.0 - p, 1.0 + p, size=r)
            theta = math.radians(s.rng.uniform(0.0, 360.0))
            current[sl] = s.noise.current_speed * np.array([math.sin(theta), math.cos(theta)])
            meas_pos[sl] = self.positions[sl] + s.rng.normal(0.0, s.noise.position_sigma, size=(r, 2))
            meas_head[sl] = np.mod(self.headings[sl] + s.rng.normal(0.0, s.noise.heading_sigma, size=r), 360.0)
        self.v_max_effective = vmax_eff
        self.current = current
        self.measured_positions = meas_pos
        self.measured_headings = meas_head
        self._sense_scale = [
            np.array([s.noise.position_sigma, s.noise.position_sigma, s.noise.heading_sigma])
            for s in self.setups
        ]

        # broadcast ledger: every robot announces its GPS fix at t=0
        self.ledger_positions = meas_pos.copy()
        self.ledger_steps = np.zeros(n, dtype=int)

        self._waypoint_rows = np.full((n, 2), np.nan)
        self._fence_samples: list[np.ndarray | None] = []
        for i, s in enumerate(self.setups):
            if s.waypoints is not None and s.active_waypoint >= 0:
                self._waypoint_rows[self.slices[i]] = np.asarray(s.waypoints, dtype=float)[s.active_waypoint]
            self._fence_samples.append(
                s.fence.edge_samples(self.sensor_config.fence_sample_spacing) if s.fence is not None else None
            )
        self._pair_mask_cache: np.ndarray | None = None

    # -- basic views ------------------------------------------------------

    @property
    def n_rows(self) -> int:
        return len(self.positions)

    @property
    def clock(self) -> float:
        return self.step_index * self.dt

    def trial_positions(self, i: int) -> np.ndarray:
        return self.positions[self.slices[i]]

    def pair_mask(self) -> np.ndarray:
        """(n, n) sensing eligibility: same trial, not self, target active."""
        if self._pair_mask_cache is None:
            m = self.trial_ids[None, :] == self.trial_ids[:, None]
            np.fill_diagonal(m, False)
            m &= self.active[None, :]
            m &= self.active[:, None]
            self._pair_mask_cache = m
        return self._pair_mask_cache

    # -- stepping ---------------------------------------------------------

    def step(self, commands: np.ndarray) -> None:
        """Advance every trial by one control period.

        ``commands`` is an (n_rows, 2) array of (linear speed m/s, turn
        rate deg/s).  Inactive (removed) robots ignore their command and
        stay frozen.
        """
        commands = np.asarray(commands, dtype=float)
        if commands.shape != (self.n_rows, 2):
            raise SimulationError(
                f"expected one command per robot: got {commands.shape}, need {(self.n_rows, 2)}"
            )
        n = self.n_rows
        act_eps = np.empty((n, 2))
        sense = np.empty((n, 3))  # GPS x/y noise plus heading noise, one draw
        for i, s in enumerate(self.setups):
            sl = self.slices[i]
            r = sl.stop - sl.start
            f = s.noise.actuator_fraction
            act_eps[sl] = s.rng.uniform(-f, f, size=(r, 2))
            sense[sl] = s.rng.standard_normal((r, 3)) * self._sense_scale[i]
        gps = sense[:, :2]
        head_eps = sense[:, 2]

        pos, head, speed, ang = _integrate(
            self.positions, self.headings, self.speeds, self.angular_rates,
            commands[:, 0], commands[:, 1], self.v_max_effective,
            _BatchLimits(self._omega_max),
            self._decay_v, self._decay_w, self.dt, self.current, act_eps,
        )
        live = self.active
        self.positions = np.where(live[:, None], pos, self.positions)
        self.headings = np.where(live, head, self.headings)
        self.speeds = np.where(live, speed, self.speeds)
        self.angular_rates = np.where(live, ang, self.angular_rates)
        self.step_index += 1

        self.measured_positions = self.positions + gps
        self.measured_headings = np.mod(self.headings + head_eps, 360.0)
        due = live & (self.step_index - self.ledger_steps >= BROADCAST_PERIOD_STEPS)
        self.ledger_positions[due] = self.measured_positions[due]
        self.ledger_steps[due] = self.step_index

    def sensor_frames(self) -> np.ndarray:
        from .sensors import build_frames

        return build_frames(self)

    # -- per-trial entity control ------------------------------------------

    def set_active_waypoint(self, trial: int, index: int) -> None:
        s = self.setups[trial]
        s.active_waypoint = index
        if index >= 0 and s.waypoints is not None:
            self._waypoint_rows[self.slices[trial]] = np.asarray(s.waypoints, dtype=float)[index]
        else:
            self._waypoint_rows[self.slices[trial]] = np.nan

    def set_waypoints(self, trial: int, waypoints, active: int) -> None:
        self.setups[trial].waypoints = (
            None if waypoints is None else np.asarray(waypoints, dtype=float))
        self.set_active_waypoint(trial, active if waypoints is not None else -1)

    def set_fence(self, trial: int, fence: GeoFence | None) -> None:
        self.setups[trial].fence = fence
        self._fence_samples[trial] = (
            fence.edge_samples(self.sensor_config.fence_sample_spacing) if fence is not None else None
        )

    # -- swarm composition (single-trial batches only) ----------------------

    def remove_robots(self, ids: Sequence[int]) -> None:
        """Deactivate robots: frozen, unsensed, and dropped from the ledger."""
        self._require_single_trial()
        rows = np.isin(self.robot_ids, np.asarray(list(ids), dtype=int))
        self.active[rows] = False
        self._pair_mask_cache = None

    def add_robots(self, positions: np.ndarray, headings: np.ndarray) -> np.ndarray:
        """Spawn robots into a running trial; returns their new ids."""
        self._require_single_trial()
        s = self.setups[0]
        positions = np.atleast_2d(np.asarray(positions, dtype=float))
        headings = np.mod(np.asarray(headings, dtype=float).ravel(), 360.0)
        r = len(positions)
        p = s.noise.param_variation
        vmax = s.limits.v_max * s.rng.uniform(1.0 - p, 1.0 + p, size=r)
        gps = s.rng.normal(0.0, s.noise.position_sigma, size=(r, 2))
        head_eps = s.rng.normal(0.0, s.noise.heading_sigma, size=r)
        meas_pos = positions + gps
        meas_head = np.mod(headings + head_eps, 360.0)

        new_ids = np.arange(len(self.robot_ids), len(self.robot_ids) + r)
        self.positions = np.concatenate([self.positions, positions])
        self.headings = np.concatenate([self.headings, headings])
        self.speeds = np.concatenate([self.speeds, np.zeros(r)])
        self.angular_rates = np.concatenate([self.angular_rates, np.zeros(r)])
        self.active = np.concatenate([self.active, np.ones(r, dtype=bool)])
        self.trial_ids = np.concatenate([self.trial_ids, np.zeros(r, dtype=int)])
        self.robot_ids = np.concatenate([self.robot_ids, new_ids])
        self.v_max_effective = np.concatenate([self.v_max_effective, vmax])
        self.current = np.concatenate([self.current, np.repeat(self.current[:1], r, axis=0)])
        self.measured_positions = np.concatenate([self.measured_positions, meas_pos])
        self.measured_headings = np.concatenate([self.measured_headings, meas_head])
        self.ledger_positions = np.concatenate([self.ledger_positions, meas_pos])
        self.ledger_steps = np.concatenate([self.ledger_steps, np.full(r, self.step_index, dtype=int)])
        self._decay_v = np.concatenate([self._decay_v, np.full(r, self._decay_v[0])])
        self._decay_w = np.concatenate([self._decay_w, np.full(r, self._decay_w[0])])
        self._omega_max = np.concatenate([self._omega_max, np.full(r, s.limits.omega_max)])
        if s.waypoints is not None and s.active_waypoint >= 0:
            wp = np.asarray(s.waypoints, dtype=float)[s.active_waypoint][None, :]
        else:
            wp = np.full((1, 2), np.nan)
        self._waypoint_rows = np.concatenate([self._waypoint_rows, np.repeat(wp, r, axis=0)])
        self.slices = [slice(0, self.n_rows)]
        self._pair_mask_cache = None
        return new_ids

    def _require_single_trial(self) -> None:
        if self.n_trials != 1:
            raise SimulationError("swarm composition changes only supported on single-trial worlds")


class _BatchLimits:
    """Row-wise omega_max stand-in for :func:`_integrate` in mixed batches."""

    def __init__(self, omega_max: np.ndarray):
        self.omega_max = omega_max


class WorldState:
    """Single-trial world: the simulation surface used by replays and tests.

    The clock advances in fixed 0.1 s increments; robot positions are
    re-broadcast to the ledger every second.  Given the same seed and
    configuration the trajectory is bit-identical across runs.
    """

    def __init__(
        self,
        positions,
        headings,
        *,
        waypoints=None,
        active_waypoint: int = -1,
        fence: GeoFence | None = None,
        noise: NoiseConfig = NoiseConfig.none(),
        limits: MotionLimits = MotionLimits(),
        sensor_config=None,
        rng: np.random.Generator | None = None,
        seed: int | None = 0,
    ):
        if rng is None:
            rng = np.random.default_rng(seed)
        wp = None if waypoints is None else np.asarray(waypoints, dtype=float)
        setup = TrialSetup(
            positions=np.atleast_2d(np.asarray(positions, dtype=float)),
            headings=np.asarray(headings, dtype=float).ravel(),
            rng=rng,
            waypoints=wp,
            active_waypoint=active_waypoint if wp is not None else -1,
            fence=fence,
            noise=noise,
            limits=limits,
        )
        self.batch = TrialBatch([setup], sensor_config=sensor_config)

    # -- single-trial views ----------------------------------------------------

    @property
    def clock(self) -> float:
        return self.batch.clock

    @property
    def positions(self) -> np.ndarray:
        return self.batch.positions

    @property
    def headings(self) -> np.ndarray:
        return self.batch.headings

    @property
    def speeds(self) -> np.ndarray:
        return self.batch.speeds

    @property
    def active(self) -> np.ndarray:
        return self.batch.active

    @property
    def n_robots(self) -> int:
        return self.batch.n_rows

    @property
    def fence(self) -> GeoFence | None:
        return self.batch.setups[0].fence

    @property
    def robots(self) -> list[RobotState]:
        b = self.batch
        return [
            RobotState(
                id=int(b.robot_ids[i]),
                pose=Pose(Vec2(float(b.positions[i, 0]), float(b.positions[i, 1])),
                          float(b.headings[i])),
                linear_speed=float(b.speeds[i]),
                angular_rate=float(b.angular_rates[i]),
                v_max_effective=float(b.v_max_effective[i]),
            )
            for i in range(b.n_rows)
        ]

    @property
    def ledger(self) -> list[BroadcastEntry]:
        b = self.batch
        return [
            BroadcastEntry(
                robot_id=int(b.robot_ids[i]),
                position=Vec2(float(b.ledger_positions[i, 0]), float(b.ledger_positions[i, 1])),
                timestamp=float(b.ledger_steps[i] * b.dt),
            )
            for i in range(b.n_rows)
            if b.active[i]
        ]

    def step(self, commands) -> None:
        """Advance one control period; one command per robot is required."""
        if len(commands) != self.n_robots:
            raise SimulationError(
                f"expected {self.n_robots} commands, got {len(commands)}"
            )
        arr = np.asarray([(c[0], c[1]) for c in commands], dtype=float) if len(commands) else np.zeros((0, 2))
        self.batch.step(arr)

    def sensor_frames(self) -> np.ndarray:
        return self.batch.sensor_frames()

    def set_active_waypoint(self, index: int) -> None:
        self.batch.set_active_waypoint(0, index)

    def set_waypoints(self, waypoints, active: int = 0) -> None:
        self.batch.set_waypoints(0, waypoints, active)

    def set_fence(self, fence: GeoFence | None) -> None:
        self.batch.set_fence(0, fence)

    def add_robots(self, positions, headings) -> np.ndarray:
        return self.batch.add_robots(positions, headings)

    def remove_robots(self, ids) -> None:
        self.batch.remove_robots(ids)


def step_world(world: WorldState, commands) -> WorldState:
    """Step a world in place (returned for call-chaining convenience)."""
    world.step(commands)
    return world
