"""Command-line front end.

Subcommands cover the whole experiment pipeline:

    evolve    run one evolutionary run for a task, archive every champion
    posteval  re-score archived champions over fresh trials
    select    pick the top controllers across post-evaluated archives
    replay    run a controller through a library scenario, log and plot
    mission   execute a sequential multi-controller mission
    plot      re-render figures from logged CSV/grid artifacts

Every report path writes the delimited data first and renders SVG figures
alongside it.  ``AQUASWARM_OUT_DIR`` sets the default output directory.
"""

from __future__ import annotations

import argparse
import dataclasses
import json
import logging
import os
import sys
from pathlib import Path

import numpy as np

from . import evolution, mission as mission_mod, neat, plots, scenarios
from .evolution import RunArchive, RunConfig
from .fitness import load_coverage_grid, save_coverage_grid
from .neat import NeatParams
from .simulation import NoiseConfig
from .tasks import TASK_NAMES, TaskConfig, task_config

log = logging.getLogger("aquaswarm")


def _default_out_dir() -> str:
    return os.environ.get("AQUASWARM_OUT_DIR", "out")


def _apply_overrides(obj, overrides: dict):
    """Rebuild a (possibly nested) dataclass with override values."""
    changes = {}
    for key, value in overrides.items():
        current = getattr(obj, key)
        if dataclasses.is_dataclass(current) and isinstance(value, dict):
            changes[key] = _apply_overrides(current, value)
        elif isinstance(value, list):
            changes[key] = tuple(value)
        else:
            changes[key] = value
    return dataclasses.replace(obj, **changes)


def _load_config_file(path: str | None) -> dict:
    if not path:
        return {}
    return json.loads(Path(path).read_text())


def _build_task(args, overrides: dict) -> TaskConfig:
    task = task_config(args.task, desk=args.desk)
    if getattr(args, "duration", None):
        task = dataclasses.replace(task, duration_steps=round(args.duration / 0.1))
    if overrides.get("task"):
        task = _apply_overrides(task, overrides["task"])
    return task


def cmd_evolve(args) -> int:
    overrides = _load_config_file(args.config)
    task = _build_task(args, overrides)
    run = RunConfig(
        seed=args.seed,
        generations=args.generations,
        trials_per_genome=args.trials,
        neat=NeatParams(population_size=args.population),
        workers=args.workers,
    )
    if overrides.get("run"):
        run = _apply_overrides(run, overrides["run"])
    archive = evolution.run_evolution(task, run)
    if args.posteval_trials > 0:
        evolution.post_evaluate_archive(archive, task, n=args.posteval_trials,
                                        top_k=args.posteval_top or None)
    out = Path(args.out_dir) / f"{task.name}_s{run.seed}"
    archive.save(out)
    best = archive.best_record()
    print(f"archived {len(archive.records)} generations to {out}")
    print(f"best champion: generation {best.generation}, "
          f"fitness {best.best_fitness:.4f}"
          + (f", post-eval {best.posteval_mean:.4f}" if best.posteval_mean is not None else ""))
    return 0


def cmd_posteval(args) -> int:
    archive = RunArchive.load(args.archive)
    overrides = _load_config_file(args.config)
    task = task_config(archive.task_name, desk=args.desk)
    if overrides.get("task"):
        task = _apply_overrides(task, overrides["task"])
    evolution.post_evaluate_archive(archive, task, n=args.trials,
                                    top_k=args.top or None)
    archive.save(args.archive)
    best = archive.best_record()
    print(f"post-evaluated archive {args.archive}: best generation "
          f"{best.generation} mean {best.posteval_mean:.4f} +- {best.posteval_std:.4f}")
    return 0


def cmd_select(args) -> int:
    archives = [RunArchive.load(d) for d in args.archives]
    selected = evolution.select_top(archives, k=args.top)
    out = Path(args.out_dir)
    out.mkdir(parents=True, exist_ok=True)
    rows = []
    for rank, sel in enumerate(selected, start=1):
        path = out / f"controller_{rank}.genome"
        neat.save_genome(sel.genome, path)
        rows.append(f"{rank},{sel.run_seed},{sel.generation},{sel.posteval_mean!r}")
        print(f"controller {rank}: run seed {sel.run_seed}, generation "
              f"{sel.generation}, post-eval mean {sel.posteval_mean:.4f} -> {path}")
    plots.write_csv(out / "selection.csv", "rank,run_seed,generation,posteval_mean", rows)
    return 0


def cmd_replay(args) -> int:
    if args.scenario_file:
        scenario = scenarios.scenario_from_json(args.scenario_file)
        if args.robots:
            scenario = dataclasses.replace(scenario, robots=args.robots)
        noise_overrides = json.loads(Path(args.scenario_file).read_text()).get("noise")
    else:
        scenario = scenarios.builtin_scenario(args.scenario, robots=args.robots)
        noise_overrides = None
    genome = neat.load_genome(args.genome)
    if args.no_noise:
        noise = NoiseConfig.none()
    elif noise_overrides:
        noise = _apply_overrides(NoiseConfig(), noise_overrides)
    else:
        noise = NoiseConfig()
    result = scenarios.run_scenario(scenario, genome, seed=args.seed, noise=noise)
    out = Path(args.out_dir) / f"replay_{scenario.name}_s{args.seed}"
    out.mkdir(parents=True, exist_ok=True)

    result.metrics.to_csv(out / "metrics.csv")
    result.write_trajectory_csv(out / "trajectory.csv")
    fence = scenario.fence()
    plots.plot_trajectories(result.trajectory, out / "trajectory.svg", fence=fence,
                            waypoints=scenario.waypoints,
                            title=f"{scenario.name} (seed {args.seed})")
    metric_column = {
        "homing": "waypoint_distance_mean",
        "dispersion": "dispersion_error",
        "clustering": "cluster_count",
        "monitoring": "coverage_mean",
    }[scenario.metric]
    events = [(e.time_s, type(e).__name__) for e in scenario.events]
    plots.plot_metric_series(result.metrics, out / "metrics.svg",
                             column=metric_column, events=events,
                             title=scenario.name)
    if result.coverage is not None:
        save_coverage_grid(result.coverage, out / "coverage_grid.txt")
        plots.plot_coverage(result.coverage.values(), result.coverage.origin,
                            result.coverage.cell_size, out / "coverage.svg",
                            fence=fence, trajectory=result.trajectory,
                            title=f"{scenario.name} coverage")
    summary = float(result.metrics.columns[metric_column][-1])
    print(f"replayed {scenario.name}: final {metric_column} = {summary:.3f} -> {out}")
    if scenario.metric == "dispersion":
        print(f"dispersion error (last 10 s): "
              f"{scenarios.dispersion_error(result.metrics):.3f} m")
    return 0


def cmd_mission(args) -> int:
    if args.plan:
        plan = mission_mod.load_mission_plan(args.plan)
    else:
        paths = dict(kv.split("=", 1) for kv in args.genomes)
        plan = mission_mod.default_mission_plan(paths, robots=args.robots or 8)
    log_ = mission_mod.run_mission(plan, seed=args.seed)
    out = Path(args.out_dir) / f"mission_s{args.seed}"
    mission_mod.save_mission_log(log_, out)
    mission_mod.save_mission_plan(plan, out / "plan.json")

    for k, sl in enumerate(log_.stage_logs):
        rows = np.empty((sl.positions.shape[0] * sl.positions.shape[1], 6))
        t_steps, r, _ = sl.positions.shape
        rows[:, 0] = np.repeat(sl.times, r)
        rows[:, 1] = np.tile(np.arange(r), t_steps)
        rows[:, 2:4] = sl.positions.reshape(-1, 2)
        rows[:, 4] = sl.headings.reshape(-1)
        rows[:, 5] = sl.speeds.reshape(-1)
        plots.plot_trajectories(rows, out / f"stage_{k}_{sl.task}.svg",
                                fence=plan.monitoring_fence(),
                                title=f"stage {k}: {sl.task} "
                                      f"[{sl.start_s:.0f}-{sl.end_s:.0f} s]")
    if log_.samples:
        sample_pos, _, _ = log_.samples_array()
    else:
        sample_pos = None
    for m in log_.maps:
        plots.plot_heatmap(m.prediction, m.grid.origin, m.grid.cell_size,
                           out / f"map_pred_t{int(m.time_s)}.svg",
                           label="predicted temperature (C)",
                           title=f"prediction at t={m.time_s:.0f} s",
                           sample_positions=sample_pos)
        plots.plot_heatmap(m.error_std, m.grid.origin, m.grid.cell_size,
                           out / f"map_std_t{int(m.time_s)}.svg",
                           label="prediction error std (C)",
                           title=f"error std at t={m.time_s:.0f} s",
                           sample_positions=sample_pos)
    print(f"mission finished: {len(log_.samples)} samples, "
          f"{len(log_.maps)} map checkpoints -> {out}")
    for m in log_.maps:
        print(f"  t={m.time_s:.0f}s mean error std {float(m.error_std.mean()):.4f}")
    return 0


def cmd_plot(args) -> int:
    out = Path(args.out)
    if args.kind == "fitness":
        archives = [RunArchive.load(d) for d in args.inputs]
        summaries = [np.array([r.best_fitness for r in a.records]) for a in archives]
        ranked = sorted(
            range(len(archives)),
            key=lambda i: archives[i].best_record().posteval_mean
            if archives[i].best_record().posteval_mean is not None
            else float(summaries[i].max()),
            reverse=True,
        )
        best = ranked[:3]
        plots.plot_fitness_curves(summaries, best, out,
                                  title=archives[0].task_name if archives else None)
        rows = []
        for i, s in enumerate(summaries):
            running = np.maximum.accumulate(s)
            rows.extend(f"{i},{g},{v!r}" for g, v in enumerate(running))
        plots.write_csv(out.with_suffix(".csv"), "run,generation,best_so_far", rows)
    elif args.kind == "coverage":
        values, origin, cell = load_coverage_grid(args.inputs[0])
        plots.plot_heatmap(values, origin, cell, out, label="coverage value")
    elif args.kind == "trajectory":
        rows = np.loadtxt(args.inputs[0], delimiter=",", skiprows=1)
        plots.plot_trajectories(np.atleast_2d(rows), out)
    else:
        raise SystemExit(f"unknown plot kind {args.kind!r}")
    print(f"wrote {out}")
    return 0


def build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(
        prog="aquaswarm",
        description="Evolve and replay collective behaviors for a simulated "
                    "swarm of aquatic surface robots.",
    )
    parser.add_argument("--verbose", "-v", action="store_true", help="info-level logging")
    sub = parser.add_subparsers(dest="command", required=True)

    p = sub.add_parser("evolve", help="run one evolutionary run")
    p.add_argument("--task", required=True, choices=TASK_NAMES)
    p.add_argument("--seed", type=int, default=0)
    p.add_argument("--generations", type=int, default=100)
    p.add_argument("--population", type=int, default=150)
    p.add_argument("--trials", type=int, default=10, help="trials per genome")
    p.add_argument("--duration", type=float, default=None,
                   help="evolution trial duration in seconds (overrides preset)")
    p.add_argument("--desk", action="store_true",
                   help="desk-scale preset: shorter evolution trials")
    p.add_argument("--posteval-trials", type=int, default=0,
                   help="post-evaluate champions right away (0 = skip)")
    p.add_argument("--posteval-top", type=int, default=0,
                   help="restrict post-evaluation to the top-k champions by raw fitness")
    p.add_argument("--workers", type=int, default=1)
    p.add_argument("--config", help="JSON file with task/run overrides")
    p.add_argument("--out-dir", default=_default_out_dir())
    p.set_defaults(func=cmd_evolve)

    p = sub.add_parser("posteval", help="post-evaluate an archived run")
    p.add_argument("--archive", required=True)
    p.add_argument("--trials", type=int, default=100)
    p.add_argument("--top", type=int, default=0,
                   help="only the top-k champions by raw fitness (0 = all)")
    p.add_argument("--desk", action="store_true")
    p.add_argument("--config", help="JSON file with task overrides")
    p.set_defaults(func=cmd_posteval)

    p = sub.add_parser("select", help="select the top controllers across runs")
    p.add_argument("archives", nargs="+", help="archive directories")
    p.add_argument("--top", type=int, default=3)
    p.add_argument("--out-dir", default=_default_out_dir())
    p.set_defaults(func=cmd_select)

    p = sub.add_parser("replay", help="replay a controller through a scenario")
    group = p.add_mutually_exclusive_group(required=True)
    group.add_argument("--scenario", choices=scenarios.SCENARIO_NAMES,
                       help="library scenario name")
    group.add_argument("--scenario-file", help="custom scenario JSON file")
    p.add_argument("--genome", required=True)
    p.add_argument("--seed", type=int, default=0)
    p.add_argument("--robots", type=int, default=None)
    p.add_argument("--no-noise", action="store_true", help="disable all noise layers")
    p.add_argument("--out-dir", default=_default_out_dir())
    p.set_defaults(func=cmd_replay)

    p = sub.add_parser("mission", help="run a sequential multi-controller mission")
    p.add_argument("--plan", help="mission plan JSON file")
    p.add_argument("--genomes", nargs="*", default=[],
                   help="task=genome pairs for the default five-stage plan")
    p.add_argument("--robots", type=int, default=None)
    p.add_argument("--seed", type=int, default=0)
    p.add_argument("--out-dir", default=_default_out_dir())
    p.set_defaults(func=cmd_mission)

    p = sub.add_parser("plot", help="render figures from logged artifacts")
    p.add_argument("kind", choices=("fitness", "coverage", "trajectory"))
    p.add_argument("inputs", nargs="+", help="archive dirs / grid file / trajectory csv")
    p.add_argument("--out", required=True, help="output SVG path")
    p.set_defaults(func=cmd_plot)
    return parser


def main(argv=None) -> int:
    args = build_parser().parse_args(argv)
    logging.basicConfig(
        level=logging.INFO if args.verbose else logging.WARNING,
        format="%(asctime)s %(name)s: %(message)s",
    )
    try:
        return args.func(args)
    except (mission_mod.MissionError, scenarios.ScenarioError, neat.NeatError,
            FileNotFoundError) as exc:
        print(f"error: {exc}", file=sys.stderr)
        return 2


if __name__ == "__main__":
    sys.exit(main())
