"""Fitness functions against independent brute-force oracles.

The oracles below are deliberately naive re-implementations of the scoring
definitions (plain Python loops over steps, robots, pairs and cells); the
library code must agree with them to 1e-9 on randomized micro-traces.
"""

import math

import numpy as np
import pytest

from aquaswarm.fitness import (ClusterPartition, CoverageGrid, FitnessError,
                               TrajectoryTrace, cluster_partition,
                               clustering_fitness, coverage_step,
                               dispersion_fitness, homing_fitness,
                               load_coverage_grid, monitoring_fitness,
                               safety_coefficient, save_coverage_grid)
from aquaswarm.geometry import GeoFence

# -- oracles -------------------------------------------------------------------


def oracle_safety(trace: TrajectoryTrace) -> float:
    if trace.n_robots < 2:
        return 1.0
    min_dist = math.inf
    for t in range(trace.n_steps):
        for a in range(trace.n_robots):
            for b in range(a + 1, trace.n_robots):
                d = math.dist(trace.positions[t, a], trace.positions[t, b])
                min_dist = min(min_dist, d)
    return 0.1 + min(3.0, max(0.0, min_dist)) / 3.0 * 0.9


def oracle_homing(trace: TrajectoryTrace) -> float:
    total = 0.0
    starting = {}
    prev_wp = None
    for t in range(trace.n_steps):
        wp_idx = int(trace.active_waypoint[t])
        wp = trace.waypoints[wp_idx]
        if wp_idx != prev_wp:
            ref = trace.start_positions if t == 0 else trace.positions[t - 1]
            starting = {r: max(1.0, math.dist(ref[r], wp))
                        for r in range(trace.n_robots)}
            prev_wp = wp_idx
        acc = 0.0
        for r in range(trace.n_robots):
            d = math.dist(trace.positions[t, r], wp)
            acc += (starting[r] - d) / starting[r]
        total += acc / trace.n_robots
    return total / trace.n_steps * oracle_safety(trace)


def oracle_dispersion(trace: TrajectoryTrace) -> float:
    total = 0.0
    for t in range(trace.n_steps):
        acc = 0.0
        for r in range(trace.n_robots):
            nn = min(math.dist(trace.positions[t, r], trace.positions[t, o])
                     for o in range(trace.n_robots) if o != r)
            acc += max(0.0, 1.0 - abs(nn - trace.target_distance) / trace.target_distance)
        total += acc / trace.n_robots
    return total / trace.n_steps * oracle_safety(trace)


def oracle_clusters(positions, threshold=7.0) -> list[set[int]]:
    """Transitive closure by repeated merging."""
    n = len(positions)
    groups = [{i} for i in range(n)]
    changed = True
    while changed:
        changed = False
        for a in range(len(groups)):
            for b in range(a + 1, len(groups)):
                if any(math.dist(positions[i], positions[j]) < threshold
                       for i in groups[a] for j in groups[b]):
                    groups[a] |= groups[b]
                    del groups[b]
                    changed = True
                    break
            if changed:
                break
    return groups


def oracle_clustering(trace: TrajectoryTrace, threshold=7.0) -> float:
    num = 0.0
    den = 0.0
    r = trace.n_robots
    for t in range(trace.n_steps):
        c = len(oracle_clusters(trace.positions[t], threshold))
        num += (t + 1) * (r - c) / (r - 1)
        den += t + 1
    return num / den * oracle_safety(trace)


def oracle_monitoring(trace: TrajectoryTrace, cell=1.0, radius=5.0, decay=0.001) -> float:
    xmin, ymin, xmax, ymax = trace.fence.bounding_box()
    ox = math.floor(xmin / cell) * cell
    oy = math.floor(ymin / cell) * cell
    nx = max(1, math.ceil((xmax - ox) / cell))
    ny = max(1, math.ceil((ymax - oy) / cell))
    cells = [
        (ox + (i + 0.5) * cell, oy + (j + 0.5) * cell)
        for i in range(nx) for j in range(ny)
        if trace.fence.contains_points(np.array([[ox + (i + 0.5) * cell,
                                                   oy + (j + 0.5) * cell]]))[0]
    ]
    val = {c: 0.0 for c in cells}
    total = 0.0
    for t in range(trace.n_steps):
        for c in cells:
            if t == 0:
                val[c] = 0.0  # the recursion zeroes the first step
                continue
            mind = min(math.dist(c, trace.positions[t, r])
                       for r in range(trace.n_robots))
            if mind <= radius:
                val[c] = 1.0
            else:
                val[c] = max(0.0, val[c] - decay)
        total += sum(val.values()) / len(cells)
    return total / trace.n_steps * oracle_safety(trace)


# -- randomized micro-traces -----------------------------------------------------


def random_trace(rng, with_waypoints=False, with_fence=False, allow_single=False):
    t_steps = int(rng.integers(1, 21))
    n_robots = int(rng.integers(1 if allow_single else 2, 6))
    positions = rng.uniform(-30.0, 30.0, (t_steps, n_robots, 2))
    kwargs = dict(
        positions=positions,
        start_positions=rng.uniform(-30.0, 30.0, (n_robots, 2)),
        target_distance=20.0,
    )
    if with_waypoints:
        waypoints = rng.uniform(-40.0, 40.0, (3, 2))
        active = np.sort(rng.integers(0, 3, t_steps))  # a few switches
        kwargs["waypoints"] = waypoints
        kwargs["active_waypoint"] = active
    if with_fence:
        half = rng.uniform(6.0, 15.0)
        kwargs["fence"] = GeoFence([(-half, -half), (half, -half),
                                    (half, half), (-half, half)])
    return TrajectoryTrace(**kwargs)


class TestSafetyCoefficient:
    @pytest.mark.parametrize("min_dist,expected", [(3.0, 1.0), (0.0, 0.1),
                                                   (1.5, 0.55), (5.0, 1.0)])
    def test_reference_values(self, min_dist, expected):
        trace = TrajectoryTrace(
            positions=np.array([[[0.0, 0.0], [min_dist, 0.0]]]),
            start_positions=np.array([[0.0, 0.0], [min_dist, 0.0]]),
        )
        assert safety_coefficient(trace) == pytest.approx(expected)

    def test_single_robot_is_one(self):
        trace = TrajectoryTrace(positions=np.zeros((4, 1, 2)),
                                start_positions=np.zeros((1, 2)))
        assert safety_coefficient(trace) == 1.0

    def test_oracle_agreement(self):
        rng = np.random.default_rng(100)
        for _ in range(60):
            trace = random_trace(rng, allow_single=True)
            assert safety_coefficient(trace) == pytest.approx(
                oracle_safety(trace), abs=1e-9)


class TestHomingFitness:
    def test_stationary_robots_score_zero(self):
        pos = np.tile(np.array([[0.0, 10.0], [5.0, 10.0]]), (6, 1, 1))
        trace = TrajectoryTrace(positions=pos, start_positions=pos[0].copy(),
                                active_waypoint=np.zeros(6, dtype=int),
                                waypoints=np.array([[0.0, 50.0]]))
        assert homing_fitness(trace) == pytest.approx(0.0, abs=1e-12)

    def test_worked_example(self):
        # one robot: 40 m start, then 20 m, then 0 m: ((0.5 + 1)/2) * S=1
        trace = TrajectoryTrace(
            positions=np.array([[[0.0, 20.0]], [[0.0, 0.0]]]),
            start_positions=np.array([[0.0, 40.0]]),
            active_waypoint=np.array([0, 0]),
            waypoints=np.array([[0.0, 0.0]]),
        )
        assert homing_fitness(trace) == pytest.approx(0.75)

    def test_moving_away_goes_negative(self):
        trace = TrajectoryTrace(
            positions=np.array([[[0.0, 80.0]]]),
            start_positions=np.array([[0.0, 40.0]]),
            active_waypoint=np.array([0]),
            waypoints=np.array([[0.0, 0.0]]),
        )
        assert homing_fitness(trace) == pytest.approx(-1.0)

    def test_starting_distance_floor(self):
        # spawning on the waypoint must not divide by zero
        trace = TrajectoryTrace(
            positions=np.array([[[0.0, 0.5]]]),
            start_positions=np.array([[0.0, 0.0]]),
            active_waypoint=np.array([0]),
            waypoints=np.array([[0.0, 0.0]]),
        )
        assert homing_fitness(trace) == pytest.approx((1.0 - 0.5) / 1.0)

    def test_rebase_on_waypoint_switch(self):
        # waypoint switches at t=2; reference is the position at t=1
        trace = TrajectoryTrace(
            positions=np.array([[[0.0, 30.0]], [[0.0, 20.0]], [[0.0, 10.0]]]),
            start_positions=np.array([[0.0, 40.0]]),
            active_waypoint=np.array([0, 0, 1]),
            waypoints=np.array([[0.0, 0.0], [0.0, -20.0]]),
        )
        # segment 1: starting 40: terms (40-30)/40, (40-20)/40
        # segment 2: starting dist from (0,20) to (0,-20) = 40: (40-30)/40
        expect = ((10 / 40) + (20 / 40) + (10 / 40)) / 3
        assert homing_fitness(trace) == pytest.approx(expect)

    def test_oracle_agreement(self):
        rng = np.random.default_rng(101)
        for _ in range(60):
            trace = random_trace(rng, with_waypoints=True, allow_single=True)
            assert homing_fitness(trace) == pytest.approx(
                oracle_homing(trace), abs=1e-9)

    def test_requires_waypoints(self):
        trace = TrajectoryTrace(positions=np.zeros((2, 2, 2)),
                                start_positions=np.zeros((2, 2)))
        with pytest.raises(FitnessError):
            homing_fitness(trace)


class TestDispersionFitness:
    def test_perfect_lattice(self):
        pos = np.array([[[0.0, 0.0], [20.0, 0.0], [40.0, 0.0]]])
        trace = TrajectoryTrace(positions=pos, start_positions=pos[0].copy())
        assert dispersion_fitness(trace) == pytest.approx(1.0)

    def test_half_distance(self):
        pos = np.array([[[0.0, 0.0], [10.0, 0.0]]])
        trace = TrajectoryTrace(positions=pos, start_positions=pos[0].copy())
        assert dispersion_fitness(trace) == pytest.approx(0.5)

    def test_coincident_robots_zero(self):
        pos = np.zeros((3, 2, 2))
        trace = TrajectoryTrace(positions=pos, start_positions=pos[0].copy())
        assert dispersion_fitness(trace) == pytest.approx(0.0)

    def test_error_clamped_at_zero(self):
        # a neighbor at 45 m gives |45-20|/20 > 1; the term clamps at 0
        pos = np.array([[[0.0, 0.0], [45.0, 0.0]]])
        trace = TrajectoryTrace(positions=pos, start_positions=pos[0].copy())
        assert dispersion_fitness(trace) == 0.0

    def test_single_robot_rejected(self):
        trace = TrajectoryTrace(positions=np.zeros((2, 1, 2)),
                                start_positions=np.zeros((1, 2)))
        with pytest.raises(FitnessError):
            dispersion_fitness(trace)

    def test_oracle_agreement(self):
        rng = np.random.default_rng(102)
        for _ in range(60):
            trace = random_trace(rng)
            assert dispersion_fitness(trace) == pytest.approx(
                oracle_dispersion(trace), abs=1e-9)


class TestClusterPartition:
    def test_examples(self):
        parts = cluster_partition([(0, 0), (5, 0), (20, 0)])
        assert [sorted(c) for c in parts.clusters] == [[0, 1], [2]]
        assert cluster_partition([(0, 0), (6, 0), (12, 0)]).count == 1
        assert cluster_partition([(0, 0)]).count == 1

    def test_exactly_seven_meters_is_not_an_edge(self):
        assert cluster_partition([(0, 0), (7.0, 0)]).count == 2
        assert cluster_partition([(0, 0), (6.999999, 0)]).count == 1

    def test_brute_force_transitive_closure_200_instances(self):
        rng = np.random.default_rng(103)
        for _ in range(200):
            n = int(rng.integers(1, 11))
            pts = rng.uniform(0.0, 30.0, (n, 2))
            mine = {frozenset(c) for c in cluster_partition(pts).clusters}
            oracle = {frozenset(c) for c in oracle_clusters(pts)}
            assert mine == oracle


class TestClusteringFitness:
    def test_single_cluster_throughout(self):
        pos = np.tile(np.array([[0.0, 0.0], [3.0, 0.0]]), (5, 1, 1))
        trace = TrajectoryTrace(positions=pos, start_positions=pos[0].copy())
        assert clustering_fitness(trace) == pytest.approx(safety_coefficient(trace))

    def test_worked_example(self):
        # R=4, T=2, c1=2, c2=1: raw = (1*(2/3) + 2*1)/3
        t1 = np.array([[0.0, 0], [5.0, 0], [30.0, 0], [35.0, 0]])
        t2 = np.array([[0.0, 0], [5.0, 0], [10.0, 0], [15.0, 0]])
        trace = TrajectoryTrace(positions=np.stack([t1, t2]),
                                start_positions=t1.copy())
        s = safety_coefficient(trace)
        assert clustering_fitness(trace) == pytest.approx((2 / 3 + 2) / 3 * s)

    def test_never_clustered_scores_zero(self):
        pos = np.array([[[0.0, 0.0], [50.0, 0.0], [100.0, 0.0]]])
        trace = TrajectoryTrace(positions=pos, start_positions=pos[0].copy())
        assert clustering_fitness(trace) == 0.0

    def test_single_robot_rejected(self):
        trace = TrajectoryTrace(positions=np.zeros((2, 1, 2)),
                                start_positions=np.zeros((1, 2)))
        with pytest.raises(FitnessError):
            clustering_fitness(trace)

    def test_oracle_agreement(self):
        rng = np.random.default_rng(104)
        for _ in range(60):
            trace = random_trace(rng)
            assert clustering_fitness(trace) == pytest.approx(
                oracle_clustering(trace), abs=1e-9)


SMALL_FENCE = GeoFence([(0, 0), (20, 0), (20, 20), (0, 20)])


class TestCoverageGrid:
    def test_first_step_forces_zero_even_with_visits(self):
        grid = CoverageGrid(SMALL_FENCE)
        grid.step([(10.5, 10.5)])
        assert grid.mean_value() == 0.0

    def test_visit_sets_disk_to_one(self):
        grid = CoverageGrid(SMALL_FENCE)
        grid.step([])
        grid.step([(10.5, 10.5)])
        values = grid.values()
        ii, jj = np.nonzero(values)
        d = np.hypot(ii + 0.5 - 10.5, jj + 0.5 - 10.5)
        assert np.all(values[ii, jj] == 1.0)
        assert d.max() <= 5.0
        expected = sum(
            1 for i in range(20) for j in range(20)
            if math.hypot(i + 0.5 - 10.5, j + 0.5 - 10.5) <= 5.0
        )
        assert len(ii) == expected

    def test_exact_zero_after_decay_window(self):
        grid = CoverageGrid(SMALL_FENCE)
        grid.step([])
        grid.step([(10.5, 10.5)])
        away = [(500.0, 500.0)]
        for k in range(999):
            grid.step(away)
        assert grid.cell_value(10, 10) == pytest.approx(0.001)
        assert grid.cell_value(10, 10) > 0.0
        grid.step(away)
        assert grid.cell_value(10, 10) == 0.0  # exactly zero, 1000 steps later

    def test_linear_decay_values(self):
        grid = CoverageGrid(SMALL_FENCE)
        grid.step([])
        grid.step([(10.5, 10.5)])
        away = [(500.0, 500.0)]
        for k in range(1, 11):
            grid.step(away)
            assert grid.cell_value(10, 10) == pytest.approx(1.0 - 0.001 * k, abs=1e-12)

    def test_cells_masked_to_fence(self):
        tri = GeoFence([(0, 0), (10, 0), (0, 10)])
        grid = CoverageGrid(tri)
        assert grid.n_cells < 100  # strictly fewer than the bounding box
        grid.step([])
        grid.step([(9.0, 9.0)])  # outside the triangle; nearby cells inside
        values = grid.values()
        ii, jj = np.nonzero(values)
        centers = np.stack([ii + 0.5, jj + 0.5], axis=1)
        assert np.all(tri.contains_points(centers))

    def test_coverage_step_wrapper(self):
        grid = CoverageGrid(SMALL_FENCE)
        assert coverage_step(grid, [(5.0, 5.0)]) is grid

    def test_grid_export_round_trip(self, tmp_path):
        grid = CoverageGrid(SMALL_FENCE)
        grid.step([])
        grid.step([(4.0, 5.0), (15.0, 16.0)])
        path = tmp_path / "grid.txt"
        save_coverage_grid(grid, path)
        values, origin, cell = load_coverage_grid(path)
        assert np.array_equal(values, grid.values())
        assert origin == grid.origin
        assert cell == grid.cell_size


class TestMonitoringFitness:
    def test_no_robot_inside_scores_zero(self):
        pos = np.full((5, 2, 2), 100.0)
        trace = TrajectoryTrace(positions=pos, start_positions=pos[0].copy(),
                                fence=SMALL_FENCE)
        assert monitoring_fitness(trace) == 0.0

    def test_everything_covered_gives_t_minus_one_over_t(self):
        # a dense static grid of robots keeps every cell within 5 m
        xs = np.arange(2.0, 20.0, 4.0)
        robots = np.array([(x, y) for x in xs for y in xs])
        t_steps = 4
        pos = np.tile(robots, (t_steps, 1, 1))
        trace = TrajectoryTrace(positions=pos, start_positions=robots.copy())
        trace.fence = SMALL_FENCE
        s = safety_coefficient(trace)
        assert monitoring_fitness(trace) == pytest.approx((t_steps - 1) / t_steps * s)

    def test_requires_fence(self):
        trace = TrajectoryTrace(positions=np.zeros((2, 2, 2)),
                                start_positions=np.zeros((2, 2)))
        with pytest.raises(FitnessError):
            monitoring_fitness(trace)

    def test_oracle_agreement(self):
        rng = np.random.default_rng(105)
        for _ in range(25):
            trace = random_trace(rng, with_fence=True)
            assert monitoring_fitness(trace) == pytest.approx(
                oracle_monitoring(trace), abs=1e-9)

    def test_more_robots_cover_more(self):
        rng = np.random.default_rng(106)
        fence = GeoFence([(-50, -50), (50, -50), (50, 50), (-50, 50)])
        scores = []
        for n in (1, 8):
            vals = []
            for seed in range(3):
                r = np.random.default_rng(seed)
                pos = r.uniform(-50, 50, (40, n, 2))
                trace = TrajectoryTrace(positions=pos,
                                        start_positions=pos[0].copy(), fence=fence)
                # safety-free comparison: random walks collide at random
                grid_score = monitoring_fitness(trace) / safety_coefficient(trace)
                vals.append(grid_score)
            scores.append(np.mean(vals))
        assert scores[1] > scores[0]
