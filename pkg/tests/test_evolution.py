"""Evaluation pipeline: seeding, determinism, archives, selection."""

import numpy as np
import pytest

from aquaswarm.evolution import (RunArchive, RunConfig, SelectedController,
                                 STREAM_EVOLUTION, STREAM_POSTEVAL,
                                 evaluate_genome, post_evaluate,
                                 post_evaluate_archive, posteval_seeds,
                                 run_evolution, run_trial_batch, select_top)
from aquaswarm.neat import NeatParams, Population
from aquaswarm.tasks import task_config

TINY_TASK = task_config("dispersion", duration_steps=80, robot_count=(3, 4))


@pytest.fixture(scope="module")
def genome():
    pop = Population(NeatParams(population_size=3), 11, 2, np.random.default_rng(0))
    return pop.genomes[0]


def seeds_for(n, gen=0, idx=0, seed=7):
    return [np.random.SeedSequence((seed, STREAM_EVOLUTION, gen, idx, k))
            for k in range(n)]


class TestEvaluateGenome:
    def test_mean_of_trials(self, genome):
        res = evaluate_genome(genome, TINY_TASK, seeds_for(5))
        assert len(res.scores) == 5
        assert res.mean == pytest.approx(float(res.scores.mean()))

    def test_deterministic(self, genome):
        a = evaluate_genome(genome, TINY_TASK, seeds_for(5))
        b = evaluate_genome(genome, TINY_TASK, seeds_for(5))
        assert np.array_equal(a.scores, b.scores)

    def test_setup_failure_scores_zero(self, genome):
        from aquaswarm.tasks import PlacementSpec
        impossible = task_config(
            "dispersion", duration_steps=40, robot_count=(30, 30),
            placement=PlacementSpec("square", side=8.0, min_separation=5.0))
        res = evaluate_genome(genome, impossible, seeds_for(3))
        assert np.array_equal(res.scores, np.zeros(3))

    def test_arity_mismatch_rejected(self):
        from aquaswarm.neat import NeatError
        bad = Population(NeatParams(population_size=1), 5, 2,
                         np.random.default_rng(1)).genomes[0]
        with pytest.raises(NeatError):
            evaluate_genome(bad, TINY_TASK, seeds_for(1))

    def test_posteval_namespace_disjoint_from_evolution(self):
        ev = seeds_for(50, gen=0, idx=0)
        pe = posteval_seeds(7, 0, 50)
        ev_states = {tuple(s.entropy) for s in ev}
        pe_states = {tuple(s.entropy) for s in pe}
        assert not ev_states & pe_states
        assert STREAM_EVOLUTION != STREAM_POSTEVAL


class TestRunEvolution:
    def _run(self, workers=1, generations=2, seed=3):
        run = RunConfig(seed=seed, generations=generations, trials_per_genome=3,
                        neat=NeatParams(population_size=8), workers=workers)
        return run_evolution(TINY_TASK, run)

    def test_zero_generations_archives_initial_champion(self):
        run = RunConfig(seed=1, generations=0, trials_per_genome=2,
                        neat=NeatParams(population_size=6))
        archive = run_evolution(TINY_TASK, run)
        assert len(archive.records) == 1
        assert archive.records[0].generation == 0

    def test_reproducible_bitwise(self):
        a = self._run()
        b = self._run()
        for ra, rb in zip(a.records, b.records):
            assert ra.best_fitness == rb.best_fitness
            assert ra.mean_fitness == rb.mean_fitness
            wa = sorted((k, c.weight) for k, c in ra.champion.connections.items())
            wb = sorted((k, c.weight) for k, c in rb.champion.connections.items())
            assert wa == wb

    def test_parallel_equals_serial(self):
        a = self._run(workers=1)
        b = self._run(workers=2)
        assert [r.best_fitness for r in a.records] == [r.best_fitness for r in b.records]

    def test_independent_seeds_differ(self):
        a = self._run(seed=3)
        b = self._run(seed=4)
        assert [r.best_fitness for r in a.records] != [r.best_fitness for r in b.records]

    def test_trial_accounting(self):
        archive = self._run(generations=2)
        # (generations + 1) evaluation rounds, 8 genomes, 3 trials each
        assert archive.trials_executed == 3 * 8 * 3

    def test_running_max_is_non_decreasing(self):
        archive = self._run(generations=4)
        best = [r.best_fitness for r in archive.records]
        running = np.maximum.accumulate(best)
        assert all(running[i] <= running[i + 1] for i in range(len(running) - 1))


class TestPostEvaluation:
    def test_score_vector_length(self, genome):
        pe = post_evaluate(genome, TINY_TASK, n=12, run_seed=5, generation=2)
        assert len(pe.scores) == 12
        assert pe.mean == pytest.approx(float(pe.scores.mean()))
        assert pe.std == pytest.approx(float(pe.scores.std()))

    def test_deterministic(self, genome):
        a = post_evaluate(genome, TINY_TASK, n=8, run_seed=5, generation=1)
        b = post_evaluate(genome, TINY_TASK, n=8, run_seed=5, generation=1)
        assert np.array_equal(a.scores, b.scores)

    def test_batch_size_does_not_change_scores(self, genome):
        a = post_evaluate(genome, TINY_TASK, n=10, run_seed=5, generation=0,
                          batch_size=10)
        b = post_evaluate(genome, TINY_TASK, n=10, run_seed=5, generation=0,
                          batch_size=3)
        assert np.array_equal(a.scores, b.scores)

    def test_rejects_zero_trials(self, genome):
        with pytest.raises(ValueError):
            post_evaluate(genome, TINY_TASK, n=0)

    def test_archive_posteval_top_k(self):
        run = RunConfig(seed=6, generations=2, trials_per_genome=2,
                        neat=NeatParams(population_size=6))
        archive = run_evolution(TINY_TASK, run)
        post_evaluate_archive(archive, TINY_TASK, n=4, top_k=2)
        evaluated = [r for r in archive.records if r.posteval_mean is not None]
        assert len(evaluated) == 2


class TestArchiveIO:
    def test_round_trip(self, tmp_path):
        run = RunConfig(seed=8, generations=2, trials_per_genome=2,
                        neat=NeatParams(population_size=6))
        archive = run_evolution(TINY_TASK, run)
        post_evaluate_archive(archive, TINY_TASK, n=3, top_k=1)
        archive.save(tmp_path / "run")
        loaded = RunArchive.load(tmp_path / "run")
        assert loaded.task_name == archive.task_name
        assert loaded.seed == archive.seed
        assert loaded.trials_executed == archive.trials_executed
        assert len(loaded.records) == len(archive.records)
        for ra, rb in zip(archive.records, loaded.records):
            assert ra.best_fitness == rb.best_fitness
            assert ra.posteval_mean == rb.posteval_mean
            if ra.posteval_scores is not None:
                assert np.array_equal(ra.posteval_scores, rb.posteval_scores)

    def test_save_is_byte_stable(self, tmp_path):
        run = RunConfig(seed=9, generations=1, trials_per_genome=2,
                        neat=NeatParams(population_size=5))
        archive = run_evolution(TINY_TASK, run)
        archive.save(tmp_path / "a")
        archive.save(tmp_path / "b")
        for name in ("config.json", "summary.csv", "posteval.csv"):
            assert (tmp_path / "a" / name).read_bytes() == (tmp_path / "b" / name).read_bytes()


class TestSelection:
    def _archive(self, seed, means):
        archive = RunArchive(task_name="dispersion", seed=seed, config={})
        pop = Population(NeatParams(population_size=len(means)), 11, 2,
                         np.random.default_rng(seed))
        from aquaswarm.evolution import GenerationRecord
        for gen, mean in enumerate(means):
            archive.records.append(GenerationRecord(
                generation=gen, champion=pop.genomes[gen], best_fitness=mean,
                mean_fitness=mean, std_fitness=0.0, posteval_mean=mean,
                posteval_std=0.0))
        return archive

    def test_top_three_across_archives(self):
        archives = [self._archive(s, [0.1 * s, 0.1 * s + 0.05]) for s in range(1, 11)]
        top = select_top(archives, k=3)
        assert [t.run_seed for t in top] == [10, 9, 8]
        assert all(isinstance(t, SelectedController) for t in top)

    def test_fewer_archives_than_k(self):
        archives = [self._archive(1, [0.3]), self._archive(2, [0.2])]
        top = select_top(archives, k=3)
        assert len(top) == 2

    def test_tie_breaks_earlier_generation_then_lower_seed(self):
        a = self._archive(2, [0.5, 0.5])
        b = self._archive(1, [0.5, 0.5])
        top = select_top([a, b], k=2)
        assert top[0].generation == 0
        assert top[0].run_seed == 1
        assert top[1].run_seed == 2

    def test_best_record_prefers_posteval(self):
        archive = self._archive(1, [0.9, 0.2])
        archive.records[0].posteval_mean = 0.1  # raw 0.9 was noise
        archive.records[1].posteval_mean = 0.6
        assert archive.best_record().generation == 1


class TestTraceShape:
    def test_run_trial_batch_trace_contents(self, genome):
        from aquaswarm.tasks import sample_trial
        task = task_config("homing", duration_steps=50, robot_count=(3, 3))
        setups = [sample_trial(task, np.random.default_rng(s)) for s in (1, 2)]
        start = [s.positions.copy() for s in setups]
        traces = run_trial_batch(genome, task, setups)
        assert len(traces) == 2
        for k, trace in enumerate(traces):
            assert trace.n_steps == 50
            assert trace.n_robots == 3
            assert np.array_equal(trace.start_positions, start[k])
            assert trace.waypoints is not None
            assert np.all(trace.active_waypoint == 0)
