"""Evolutionary pipeline: multi-trial evaluation, runs, post-evaluation.

A genome's fitness is the mean score over (by default) 10 randomized
trials.  Trial seeds are derived from (run seed, stream, generation,
genome index, trial index), never from execution order, so results are
identical whether genomes are evaluated serially or on a process pool, and
post-evaluation draws from a stream disjoint from evolution.

After a run, champions are re-scored in 100 fresh trials to de-noise the
estimate ("post-evaluation"); across runs the best-of-run controllers are
ranked by post-evaluation mean and the top three selected.
"""

from __future__ import annotations

import json
import logging
from concurrent.futures import ProcessPoolExecutor
from dataclasses import dataclass, field
from pathlib import Path

import numpy as np

from . import neat
from .fitness import (FitnessError, TrajectoryTrace, clustering_fitness,
                      dispersion_fitness, homing_fitness, monitoring_fitness)
from .neat import Genome, NeatParams, NetworkPhenotype, Population
from .sensors import FRAME_SIZE
from .simulation import SetupError, TrialBatch, TrialSetup
from .tasks import TaskConfig, sample_trial

log = logging.getLogger(__name__)

N_OUTPUTS = 2

# seed-derivation stream tags: keep evolution, post-evaluation, scenario and
# mission draws in disjoint namespaces
STREAM_INIT = 1
STREAM_REPRODUCTION = 2
STREAM_EVOLUTION = 3
STREAM_POSTEVAL = 4
STREAM_SCENARIO = 5
STREAM_MISSION = 6


def derived_rng(base_seed: int, *path: int) -> np.random.Generator:
    """Independent generator for a (seed, stream, indices...) coordinate."""
    return np.random.default_rng(np.random.SeedSequence((int(base_seed),) + tuple(int(p) for p in path)))


def commands_from_outputs(outputs: np.ndarray, limits) -> np.ndarray:
    """Map network outputs in [0,1]^2 to (v, omega) commands."""
    cmds = np.empty_like(outputs)
    cmds[:, 0] = outputs[:, 0] * limits.v_max
    cmds[:, 1] = (2.0 * outputs[:, 1] - 1.0) * limits.omega_max
    return cmds


def run_trial_batch(genome: Genome, task: TaskConfig,
                    setups: list[TrialSetup]) -> list[TrajectoryTrace]:
    """Drive all trials of one genome in lock-step and return their traces."""
    if genome.n_inputs != FRAME_SIZE or genome.n_outputs != N_OUTPUTS:
        raise neat.NeatError(
            f"controller arity mismatch: need {FRAME_SIZE} inputs / {N_OUTPUTS} outputs, "
            f"genome has {genome.n_inputs}/{genome.n_outputs}")
    batch = TrialBatch(setups, sensor_config=task.sensors)
    net = NetworkPhenotype(genome)
    net.reset(batch.n_rows)
    t_steps = task.duration_steps
    pos_log = np.empty((t_steps, batch.n_rows, 2))
    for t in range(t_steps):
        frames = batch.sensor_frames()
        outputs = net.activate_batch(frames)
        batch.step(commands_from_outputs(outputs, task.limits))
        pos_log[t] = batch.positions
    traces = []
    for i, setup in enumerate(setups):
        sl = batch.slices[i]
        traces.append(TrajectoryTrace(
            positions=pos_log[:, sl].copy(),
            start_positions=np.asarray(setup.positions, dtype=float).copy(),
            active_waypoint=(np.full(t_steps, setup.active_waypoint)
                             if setup.waypoints is not None else None),
            waypoints=setup.waypoints,
            fence=setup.fence,
            target_distance=task.target_distance,
        ))
    return traces


def score_trace(task: TaskConfig, trace: TrajectoryTrace) -> float:
    if task.name == "homing":
        return homing_fitness(trace)
    if task.name == "dispersion":
        return dispersion_fitness(trace)
    if task.name == "clustering":
        return clustering_fitness(trace, task.cluster_threshold)
    if task.name == "monitoring":
        return monitoring_fitness(trace)
    raise FitnessError(f"no fitness registered for task {task.name!r}")


@dataclass
class EvalResult:
    scores: np.ndarray

    @property
    def mean(self) -> float:
        return float(self.scores.mean())

    @property
    def std(self) -> float:
        return float(self.scores.std())


def evaluate_genome(genome: Genome, task: TaskConfig, seeds) -> EvalResult:
    """Score a genome over independent seeded trials (arithmetic mean).

    A trial whose setup fails (infeasible placement) scores 0 and is
    logged; the other trials still count.
    """
    seeds = list(seeds)
    setups = []
    failed = []
    for k, seed in enumerate(seeds):
        rng = seed if isinstance(seed, np.random.Generator) else np.random.default_rng(seed)
        try:
            setups.append(sample_trial(task, rng))
        except SetupError as exc:
            log.warning("trial %d setup failed, scoring 0: %s", k, exc)
            failed.append(k)
    scores = np.zeros(len(seeds))
    if setups:
        traces = run_trial_batch(genome, task, setups)
        live = [k for k in range(len(scores)) if k not in failed]
        for k, trace in zip(live, traces):
            scores[k] = score_trace(task, trace)
    return EvalResult(scores=scores)


@dataclass
class RunConfig:
    """One evolutionary run's budget and bookkeeping knobs."""

    seed: int = 0
    generations: int = 100
    trials_per_genome: int = 10
    neat: NeatParams = field(default_factory=NeatParams)
    workers: int = 1

    def to_json_dict(self) -> dict:
        d = {k: v for k, v in self.__dict__.items() if k != "neat"}
        d["neat"] = dict(self.neat.__dict__)
        return d


@dataclass
class GenerationRecord:
    generation: int
    champion: Genome
    best_fitness: float
    mean_fitness: float
    std_fitness: float
    posteval_mean: float | None = None
    posteval_std: float | None = None
    posteval_scores: np.ndarray | None = None


@dataclass
class RunArchive:
    """Per-generation champions and statistics of one evolutionary run."""

    task_name: str
    seed: int
    config: dict
    records: list[GenerationRecord] = field(default_factory=list)
    trials_executed: int = 0

    def champions(self) -> list[Genome]:
        return [r.champion for r in self.records]

    def best_record(self) -> GenerationRecord:
        """Highest post-evaluation mean (earlier generation wins ties);
        falls back to raw fitness if nothing was post-evaluated."""
        evaluated = [r for r in self.records if r.posteval_mean is not None]
        pool = evaluated or self.records
        key = (lambda r: (r.posteval_mean, -r.generation)) if evaluated \
            else (lambda r: (r.best_fitness, -r.generation))
        return max(pool, key=key)

    # -- persistence -----------------------------------------------------------

    def save(self, out_dir) -> Path:
        out = Path(out_dir)
        (out / "champions").mkdir(parents=True, exist_ok=True)
        cfg = dict(self.config)
        cfg["task"] = self.task_name
        cfg["seed"] = self.seed
        cfg["trials_executed"] = self.trials_executed
        (out / "config.json").write_text(json.dumps(cfg, indent=2, sort_keys=True) + "\n")
        rows = ["generation,fitness,mean,std,posteval_mean,posteval_std"]
        for r in self.records:
            pm = "" if r.posteval_mean is None else repr(r.posteval_mean)
            ps = "" if r.posteval_std is None else repr(r.posteval_std)
            rows.append(f"{r.generation},{r.best_fitness!r},{r.mean_fitness!r},"
                        f"{r.std_fitness!r},{pm},{ps}")
        (out / "summary.csv").write_text("\n".join(rows) + "\n")
        score_rows = ["generation,trial,score"]
        for r in self.records:
            if r.posteval_scores is None:
                continue
            for k, s in enumerate(r.posteval_scores):
                score_rows.append(f"{r.generation},{k},{float(s)!r}")
        (out / "posteval.csv").write_text("\n".join(score_rows) + "\n")
        for r in self.records:
            neat.save_genome(r.champion, out / "champions" / f"gen_{r.generation:04d}.genome")
        return out

    @staticmethod
    def load(out_dir) -> "RunArchive":
        out = Path(out_dir)
        cfg = json.loads((out / "config.json").read_text())
        archive = RunArchive(task_name=cfg["task"], seed=cfg["seed"], config=cfg,
                             trials_executed=cfg.get("trials_executed", 0))
        lines = (out / "summary.csv").read_text().strip().splitlines()[1:]
        posteval: dict[int, list[float]] = {}
        pe_path = out / "posteval.csv"
        if pe_path.exists():
            for line in pe_path.read_text().strip().splitlines()[1:]:
                gen_s, _, score_s = line.split(",")
                posteval.setdefault(int(gen_s), []).append(float(score_s))
        for line in lines:
            parts = line.split(",")
            gen = int(parts[0])
            genome = neat.load_genome(out / "champions" / f"gen_{gen:04d}.genome")
            archive.records.append(GenerationRecord(
                generation=gen,
                champion=genome,
                best_fitness=float(parts[1]),
                mean_fitness=float(parts[2]),
                std_fitness=float(parts[3]),
                posteval_mean=float(parts[4]) if parts[4] else None,
                posteval_std=float(parts[5]) if parts[5] else None,
                posteval_scores=np.array(posteval[gen]) if gen in posteval else None,
            ))
        return archive


def _eval_job(args):
    genome, task, seed, generation, index, n_trials = args
    seeds = [np.random.SeedSequence((seed, STREAM_EVOLUTION, generation, index, k))
             for k in range(n_trials)]
    return index, evaluate_genome(genome, task, seeds).mean


def evaluate_generation(genomes: list[Genome], task: TaskConfig, run: RunConfig,
                        generation: int, pool: ProcessPoolExecutor | None = None) -> None:
    """Assign mean-trial fitness to every genome (in place)."""
    jobs = [(g, task, run.seed, generation, i, run.trials_per_genome)
            for i, g in enumerate(genomes)]
    if pool is None:
        results = map(_eval_job, jobs)
    else:
        results = pool.map(_eval_job, jobs, chunksize=max(1, len(jobs) // (4 * run.workers)))
    for index, fitness in results:
        genomes[index].fitness = fitness


def run_evolution(task: TaskConfig, run: RunConfig) -> RunArchive:
    """Full generational loop; reproducible bit-for-bit from (config, seed).

    The archive records the champion of the initial population plus one
    record per bred generation.
    """
    params = run.neat
    pop = Population(params, FRAME_SIZE, N_OUTPUTS, derived_rng(run.seed, STREAM_INIT))
    archive = RunArchive(task_name=task.name, seed=run.seed, config=run.to_json_dict())
    archive.config["duration_steps"] = task.duration_steps
    archive.config["robot_count"] = list(task.robot_count)

    pool = None
    if run.workers > 1:
        pool = ProcessPoolExecutor(max_workers=run.workers)
    try:
        for gen in range(run.generations + 1):
            if gen > 0:
                pop.next_generation(derived_rng(run.seed, STREAM_REPRODUCTION, gen))
            evaluate_generation(pop.genomes, task, run, gen, pool)
            archive.trials_executed += len(pop.genomes) * run.trials_per_genome
            fitnesses = np.array([g.fitness for g in pop.genomes])
            champion = pop.champion().copy()
            archive.records.append(GenerationRecord(
                generation=gen,
                champion=champion,
                best_fitness=float(fitnesses.max()),
                mean_fitness=float(fitnesses.mean()),
                std_fitness=float(fitnesses.std()),
            ))
            log.info("seed %d gen %d: best %.4f mean %.4f (%d species)",
                     run.seed, gen, fitnesses.max(), fitnesses.mean(),
                     len(pop.partition.species) or 1)
    finally:
        if pool is not None:
            pool.shutdown()
    return archive


@dataclass
class PostEvaluation:
    scores: np.ndarray

    @property
    def mean(self) -> float:
        return float(self.scores.mean())

    @property
    def std(self) -> float:
        return float(self.scores.std())


def posteval_seeds(run_seed: int, generation: int, n: int) -> list[np.random.SeedSequence]:
    """Post-evaluation seed namespace, disjoint from evolution trials."""
    return [np.random.SeedSequence((run_seed, STREAM_POSTEVAL, generation, k))
            for k in range(n)]


def post_evaluate(genome: Genome, task: TaskConfig, n: int = 100,
                  run_seed: int = 0, generation: int = 0,
                  batch_size: int = 10) -> PostEvaluation:
    """Re-score a champion over ``n`` fresh trials (full score vector kept)."""
    if n < 1:
        raise ValueError("post-evaluation needs at least one trial")
    seeds = posteval_seeds(run_seed, generation, n)
    scores = np.empty(n)
    for start in range(0, n, batch_size):
        chunk = seeds[start:start + batch_size]
        scores[start:start + len(chunk)] = evaluate_genome(genome, task, chunk).scores
    return PostEvaluation(scores=scores)


def post_evaluate_archive(archive: RunArchive, task: TaskConfig, n: int = 100,
                          top_k: int | None = None) -> None:
    """Post-evaluate archive champions in place.

    ``top_k`` restricts the pass to the k champions with the best raw
    fitness (a budget knob); selection then works on the evaluated subset.
    """
    records = archive.records
    if top_k is not None:
        records = sorted(records, key=lambda r: (r.best_fitness, -r.generation),
                         reverse=True)[:top_k]
    for rec in records:
        pe = post_evaluate(rec.champion, task, n=n, run_seed=archive.seed,
                           generation=rec.generation)
        rec.posteval_mean = pe.mean
        rec.posteval_std = pe.std
        rec.posteval_scores = pe.scores
        archive.trials_executed += n
        log.info("seed %d gen %d post-eval: %.4f +- %.4f",
                 archive.seed, rec.generation, pe.mean, pe.std)


@dataclass
class SelectedController:
    run_seed: int
    generation: int
    posteval_mean: float
    genome: Genome


def select_top(archives: list[RunArchive], k: int = 3) -> list[SelectedController]:
    """Pick the k best best-of-run controllers by post-evaluation mean.

    Ties break toward the earlier generation, then the lower run seed.
    With fewer than k archives all best-of-run controllers are returned
    (with a warning).
    """
    best_of_run = []
    for archive in archives:
        rec = archive.best_record()
        mean = rec.posteval_mean if rec.posteval_mean is not None else rec.best_fitness
        best_of_run.append(SelectedController(
            run_seed=archive.seed, generation=rec.generation,
            posteval_mean=mean, genome=rec.champion))
    if len(best_of_run) < k:
        log.warning("only %d archives available; returning all best-of-run controllers",
                    len(best_of_run))
    best_of_run.sort(key=lambda s: (-s.posteval_mean, s.generation, s.run_seed))
    return best_of_run[:k]
