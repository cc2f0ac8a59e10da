"""Neuroevolution of collective behaviors for simulated aquatic robot swarms.

The package covers the whole pipeline: a seeded 2D kinematic simulator with
local sensing over a 1 Hz position-broadcast ledger, NEAT neuroevolution of
neural controllers for homing, dispersion, clustering and area monitoring,
multi-trial fitness evaluation with post-evaluation and controller
selection, scenario replays (scalability and robustness timelines), and
sequential multi-behavior missions with kriging-based temperature mapping.
"""

from .geometry import (GeoFence, GeometryError, Pose, Vec2, distance_to_fence,
                       point_in_polygon, relative_bearing)
from .simulation import (ActuationCommand, MotionLimits, NoiseConfig, RobotState,
                         WorldState, convert_to_motor_speeds,
                         motor_speeds_to_command, step_robot, step_world)
from .sensors import SensorConfig, geofence_sensor, robot_sensor, sensor_frame, waypoint_sensor
from .neat import (Genome, NeatParams, NetworkPhenotype, Population, compatibility_distance,
                   crossover, load_genome, mutate, save_genome)
from .fitness import (ClusterPartition, CoverageGrid, TrajectoryTrace, cluster_partition,
                      clustering_fitness, coverage_step, dispersion_fitness,
                      homing_fitness, monitoring_fitness, safety_coefficient)
from .tasks import TaskConfig, sample_trial, task_config
from .evolution import (RunArchive, RunConfig, evaluate_genome, post_evaluate,
                        run_evolution, select_top)
from .kriging import GridSpec, KrigingModel, fit_variogram, krige, krige_point
from .mission import MissionPlan, TemperatureSample, active_stage, default_mission_plan, run_mission
from .scenarios import MetricSeries, Scenario, builtin_scenario, dispersion_error, run_scenario

__version__ = "0.1.0"
