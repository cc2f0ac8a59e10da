"""Task scoring: safety coefficient, the four fitness functions, coverage.

Everything here is a pure function of a :class:`TrajectoryTrace` (or of a
coverage-grid history derived from one), so any score can be recomputed
from logged trajectories.  The scoring rules:

* safety S in [0.1, 1], linear in the trial's minimum pairwise distance,
  saturating at 3 m (S = 1 for a single robot, which has no pairs);
* homing: mean normalized progress toward the active waypoint, times S
  (can be negative when robots move away);
* dispersion: mean of max(0, 1 - |nnDist - target| / target), times S --
  the error term is normalized by the 20 m target distance to keep the
  per-step value in [0, 1];
* clustering: time-weighted mean of (R - c_t)/(R - 1) with later steps
  weighing more, times S; clusters are 7 m connected components;
* monitoring: time-average of the mean coverage-grid cell value, times S.
  Cells are 1 m^2, visits reach 5 m, values decay linearly over 100 s.
"""

from __future__ import annotations

import math
from dataclasses import dataclass
from pathlib import Path

import numpy as np

from .geometry import GeoFence


class FitnessError(ValueError):
    pass


@dataclass
class TrajectoryTrace:
    """Positions and trial metadata for one evaluated trial.

    ``positions[t, r]`` is robot ``r``'s true position after control step
    ``t`` (1-based time in the scoring formulas); ``start_positions`` is
    where the robots were when the trial began.  ``active_waypoint[t]``
    indexes ``waypoints`` (-1 when the task has none).
    """

    positions: np.ndarray  # (T, R, 2)
    start_positions: np.ndarray  # (R, 2)
    active_waypoint: np.ndarray | None = None  # (T,) int
    waypoints: np.ndarray | None = None  # (W, 2)
    fence: GeoFence | None = None
    target_distance: float = 20.0
    dt: float = 0.1

    def __post_init__(self):
        self.positions = np.asarray(self.positions, dtype=float)
        self.start_positions = np.asarray(self.start_positions, dtype=float)
        if self.positions.ndim != 3 or self.positions.shape[2] != 2:
            raise FitnessError("positions must have shape (T, R, 2)")
        if self.positions.shape[0] < 1 or self.positions.shape[1] < 1:
            raise FitnessError("a trace needs at least one step and one robot")
        if self.start_positions.shape != (self.positions.shape[1], 2):
            raise FitnessError("start_positions must have shape (R, 2)")
        if self.active_waypoint is not None:
            self.active_waypoint = np.asarray(self.active_waypoint, dtype=int)
            if self.active_waypoint.shape != (self.positions.shape[0],):
                raise FitnessError("active_waypoint must have shape (T,)")

    @property
    def n_steps(self) -> int:
        return self.positions.shape[0]

    @property
    def n_robots(self) -> int:
        return self.positions.shape[1]

    def pairwise_min_distances(self) -> np.ndarray:
        """(T,) minimum inter-robot distance per step (inf for R = 1)."""
        t, r, _ = self.positions.shape
        if r < 2:
            return np.full(t, np.inf)
        diff = self.positions[:, :, None, :] - self.positions[:, None, :, :]
        d = np.sqrt((diff ** 2).sum(axis=3))
        iu = np.triu_indices(r, k=1)
        return d[:, iu[0], iu[1]].min(axis=1)

    def nearest_neighbor_distances(self) -> np.ndarray:
        """(T, R) distance to the nearest other robot at each step."""
        t, r, _ = self.positions.shape
        if r < 2:
            raise FitnessError("nearest-neighbor distances need at least 2 robots")
        diff = self.positions[:, :, None, :] - self.positions[:, None, :, :]
        d = np.sqrt((diff ** 2).sum(axis=3))
        d[:, np.arange(r), np.arange(r)] = np.inf
        return d.min(axis=2)


def safety_coefficient(trace: TrajectoryTrace) -> float:
    """Collision-avoidance multiplier in [0.1, 1] (1 for a lone robot)."""
    if trace.n_robots < 2:
        return 1.0
    min_dist = float(trace.pairwise_min_distances().min())
    return 0.1 + min(3.0, max(0.0, min_dist)) / 3.0 * 0.9


def homing_fitness(trace: TrajectoryTrace) -> float:
    """Mean normalized progress toward the active waypoint, times S.

    The reference distance of each robot is its distance to the waypoint
    at the moment the waypoint became active (trial start for the first
    one), floored at 1 m.  A waypoint switch re-bases the reference at the
    robot positions of the step just before the switch.
    """
    if trace.waypoints is None or trace.active_waypoint is None:
        raise FitnessError("homing requires waypoints and an active-waypoint record")
    if (trace.active_waypoint < 0).any():
        raise FitnessError("homing requires an active waypoint at every step")
    waypoints = np.asarray(trace.waypoints, dtype=float)
    t_steps, _, _ = trace.positions.shape

    terms = np.empty((t_steps, trace.n_robots))
    seg_start = 0
    while seg_start < t_steps:
        wp_idx = trace.active_waypoint[seg_start]
        seg_end = seg_start
        while seg_end < t_steps and trace.active_waypoint[seg_end] == wp_idx:
            seg_end += 1
        ref = trace.start_positions if seg_start == 0 else trace.positions[seg_start - 1]
        wp = waypoints[wp_idx]
        starting = np.maximum(np.hypot(*(ref - wp).T), 1.0)
        dist = np.hypot(
            trace.positions[seg_start:seg_end, :, 0] - wp[0],
            trace.positions[seg_start:seg_end, :, 1] - wp[1],
        )
        terms[seg_start:seg_end] = (starting[None, :] - dist) / starting[None, :]
        seg_start = seg_end
    return float(terms.mean()) * safety_coefficient(trace)


def dispersion_fitness(trace: TrajectoryTrace) -> float:
    """Mean closeness of nearest-neighbor distances to the target, times S."""
    if trace.n_robots < 2:
        raise FitnessError("dispersion is undefined for fewer than 2 robots")
    target = trace.target_distance
    nn = trace.nearest_neighbor_distances()
    term = np.maximum(0.0, 1.0 - np.abs(nn - target) / target)
    return float(term.mean()) * safety_coefficient(trace)


class UnionFind:
    """Disjoint sets over 0..n-1 with union by size and path compression."""

    def __init__(self, n: int):
        self.parent = list(range(n))
        self.size = [1] * n

    def find(self, a: int) -> int:
        root = a
        while self.parent[root] != root:
            root = self.parent[root]
        while self.parent[a] != root:
            self.parent[a], a = root, self.parent[a]
        return root

    def union(self, a: int, b: int) -> None:
        ra, rb = self.find(a), self.find(b)
        if ra == rb:
            return
        if self.size[ra] < self.size[rb]:
            ra, rb = rb, ra
        self.parent[rb] = ra
        self.size[ra] += self.size[rb]


@dataclass
class ClusterPartition:
    """Disjoint robot groups chained by sub-threshold links."""

    clusters: list[frozenset[int]]
    threshold: float

    @property
    def count(self) -> int:
        return len(self.clusters)


def cluster_partition(positions, threshold: float = 7.0) -> ClusterPartition:
    """Connected components of the strictly-closer-than-threshold graph."""
    pts = np.atleast_2d(np.asarray(positions, dtype=float))
    n = len(pts)
    uf = UnionFind(n)
    if n > 1:
        diff = pts[:, None, :] - pts[None, :, :]
        d = np.sqrt((diff ** 2).sum(axis=2))
        ii, jj = np.nonzero(d < threshold)
        for a, b in zip(ii, jj):
            if a < b:
                uf.union(int(a), int(b))
    groups: dict[int, set[int]] = {}
    for i in range(n):
        groups.setdefault(uf.find(i), set()).add(i)
    clusters = sorted((frozenset(g) for g in groups.values()), key=min)
    return ClusterPartition(clusters, threshold)


def cluster_counts(trace: TrajectoryTrace, threshold: float = 7.0) -> np.ndarray:
    """(T,) number of clusters at each step."""
    t_steps, r, _ = trace.positions.shape
    if r == 1:
        return np.ones(t_steps, dtype=int)
    diff = trace.positions[:, :, None, :] - trace.positions[:, None, :, :]
    d = np.sqrt((diff ** 2).sum(axis=3))
    iu, ju = np.triu_indices(r, k=1)
    close = d[:, iu, ju] < threshold
    counts = np.empty(t_steps, dtype=int)
    for t in range(t_steps):
        uf = UnionFind(r)
        for k in np.nonzero(close[t])[0]:
            uf.union(int(iu[k]), int(ju[k]))
        counts[t] = len({uf.find(i) for i in range(r)})
    return counts


def clustering_fitness(trace: TrajectoryTrace, threshold: float = 7.0) -> float:
    """Late-weighted cluster score: sum_t t*(R - c_t)/(R - 1) / sum_t t, times S."""
    r = trace.n_robots
    if r < 2:
        raise FitnessError("clustering is undefined for fewer than 2 robots")
    c = cluster_counts(trace, threshold)
    t = np.arange(1, trace.n_steps + 1, dtype=float)
    raw = float((t * (r - c) / (r - 1)).sum() / t.sum())
    return raw * safety_coefficient(trace)


class CoverageGrid:
    """Decaying visitation grid over the cells inside a geo-fence.

    Cell values live in [0, 1]: a visit (any robot within the visit radius
    of the cell center) sets the value to 1 and it then decays linearly to
    0 over exactly ``round(1/decay_per_step)`` steps.  Values are stored as
    integer step countdowns, so the decay is exact: a cell visited once is
    exactly 0 again 1000 steps later with the default 0.001 decay.  The
    recursion's first-step case zeroes everything, visits included.
    """

    def __init__(self, fence: GeoFence, cell_size: float = 1.0,
                 visit_radius: float = 5.0, decay_per_step: float = 0.001):
        if cell_size <= 0.0 or visit_radius <= 0.0:
            raise FitnessError("cell size and visit radius must be positive")
        steps = round(1.0 / decay_per_step)
        if not math.isclose(steps * decay_per_step, 1.0, rel_tol=0.0, abs_tol=1e-9):
            raise FitnessError("1/decay_per_step must be integral")
        self.fence = fence
        self.cell_size = cell_size
        self.visit_radius = visit_radius
        self.decay_per_step = decay_per_step
        self.decay_steps = steps

        xmin, ymin, xmax, ymax = fence.bounding_box()
        self.origin = (math.floor(xmin / cell_size) * cell_size,
                       math.floor(ymin / cell_size) * cell_size)
        self.nx = max(1, math.ceil((xmax - self.origin[0]) / cell_size))
        self.ny = max(1, math.ceil((ymax - self.origin[1]) / cell_size))
        self._cx = self.origin[0] + (np.arange(self.nx) + 0.5) * cell_size
        self._cy = self.origin[1] + (np.arange(self.ny) + 0.5) * cell_size
        centers = np.stack(np.meshgrid(self._cx, self._cy, indexing="ij"),
                           axis=-1).reshape(-1, 2)
        self.mask = fence.contains_points(centers).reshape(self.nx, self.ny)
        self.n_cells = int(self.mask.sum())
        if self.n_cells == 0:
            raise FitnessError("no grid cell center falls inside the fence")
        self._remaining = np.zeros((self.nx, self.ny), dtype=np.int32)
        self._mask_flat = self.mask.ravel()
        self._window = math.ceil(visit_radius / cell_size) + 1
        self._t = 0

    def step(self, positions) -> None:
        """Advance one time step: decay everything, then mark visits.

        On the first step all values are forced to 0 (the recursion's
        first case), regardless of robot positions.
        """
        self._t += 1
        if self._t == 1:
            return
        np.subtract(self._remaining, 1, out=self._remaining,
                    where=self._remaining > 0)
        pts = np.atleast_2d(np.asarray(positions, dtype=float))
        if len(pts) == 0:
            return
        # all robots' visit windows in one indexed pass
        w = self._window
        span = np.arange(2 * w)
        i0 = np.floor((pts[:, 0] - self.origin[0]) / self.cell_size).astype(int) - w + 1
        j0 = np.floor((pts[:, 1] - self.origin[1]) / self.cell_size).astype(int) - w + 1
        ix = np.clip(i0[:, None] + span[None, :], 0, self.nx - 1)  # (R, 2w)
        jy = np.clip(j0[:, None] + span[None, :], 0, self.ny - 1)
        dx = self._cx[ix] - pts[:, 0][:, None]
        dy = self._cy[jy] - pts[:, 1][:, None]
        d2 = dx[:, :, None] ** 2 + dy[:, None, :] ** 2  # (R, 2w, 2w)
        flat = (ix[:, :, None] * self.ny + jy[:, None, :]).reshape(len(pts), -1)
        hit = flat[(d2 <= self.visit_radius ** 2).reshape(len(pts), -1)]
        hit = hit[self._mask_flat[hit]]
        self._remaining.ravel()[hit] = self.decay_steps

    def values(self) -> np.ndarray:
        """(nx, ny) cell values; cells outside the fence are 0."""
        return self._remaining.astype(float) * self.decay_per_step

    def cell_value(self, i: int, j: int) -> float:
        return float(self._remaining[i, j]) * self.decay_per_step

    def mean_value(self) -> float:
        """Mean value over the in-fence cells (the per-step score term).

        Out-of-fence cells are never visited, so the full-array sum equals
        the in-fence sum.
        """
        return float(self._remaining.sum()) * self.decay_per_step / self.n_cells

    def covered_fraction(self) -> float:
        """Share of in-fence cells with a non-zero value."""
        return np.count_nonzero(self._remaining) / self.n_cells


def coverage_step(grid: CoverageGrid, positions) -> CoverageGrid:
    """Functional view of :meth:`CoverageGrid.step` (time kept by the grid)."""
    grid.step(positions)
    return grid


def monitoring_fitness(trace: TrajectoryTrace, cell_size: float = 1.0,
                       visit_radius: float = 5.0,
                       decay_per_step: float = 0.001) -> float:
    """Time-averaged mean coverage of the fenced area, times S."""
    if trace.fence is None:
        raise FitnessError("monitoring requires a fence on the trace")
    grid = CoverageGrid(trace.fence, cell_size, visit_radius, decay_per_step)
    total = 0.0
    for t in range(trace.n_steps):
        grid.step(trace.positions[t])
        total += grid.mean_value()
    return total / trace.n_steps * safety_coefficient(trace)


FITNESS_FUNCTIONS = {
    "homing": homing_fitness,
    "dispersion": dispersion_fitness,
    "clustering": clustering_fitness,
    "monitoring": monitoring_fitness,
}


# -- coverage-grid text export --------------------------------------------------

GRID_MAGIC = "aquaswarm-coverage-grid v1"


def save_coverage_grid(grid: CoverageGrid, path) -> None:
    """Dense text export: header, then one line per row south to north.

    Line k holds the nx cell values of row j = k (west to east); the cell
    (i, j) center is origin + ((i + 0.5), (j + 0.5)) * cell_size.
    """
    values = grid.values()
    lines = [GRID_MAGIC,
             f"origin {grid.origin[0]!r} {grid.origin[1]!r}",
             f"cell_size {grid.cell_size!r}",
             f"shape {grid.nx} {grid.ny}"]
    for j in range(grid.ny):
        lines.append(" ".join(repr(float(v)) for v in values[:, j]))
    Path(path).write_text("\n".join(lines) + "\n")


def load_coverage_grid(path) -> tuple[np.ndarray, tuple[float, float], float]:
    """Read a grid export back: (values (nx, ny), origin, cell_size)."""
    lines = Path(path).read_text().strip().splitlines()
    if lines[0].strip() != GRID_MAGIC:
        raise FitnessError(f"not a coverage grid file: {path}")
    origin = tuple(float(x) for x in lines[1].split()[1:3])
    cell_size = float(lines[2].split()[1])
    nx, ny = (int(x) for x in lines[3].split()[1:3])
    values = np.empty((nx, ny))
    for j in range(ny):
        values[:, j] = [float(x) for x in lines[4 + j].split()]
    return values, origin, cell_size
