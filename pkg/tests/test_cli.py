"""Command-line pipeline: every subcommand end to end at toy scale."""

import json

import numpy as np
import pytest

from aquaswarm import cli
from aquaswarm.evolution import RunArchive
from aquaswarm.fitness import load_coverage_grid
from aquaswarm.neat import NeatParams, Population, load_genome, save_genome


@pytest.fixture(scope="module")
def workspace(tmp_path_factory):
    """A tiny but complete pipeline: two runs, selection, replays."""
    root = tmp_path_factory.mktemp("cli")
    cfg = root / "tiny.json"
    cfg.write_text(json.dumps({"task": {"duration_steps": 120, "robot_count": [3, 4]}}))
    for seed in (0, 1):
        assert cli.main([
            "evolve", "--task", "homing", "--seed", str(seed), "--generations", "2",
            "--population", "8", "--trials", "3", "--desk", "--config", str(cfg),
            "--posteval-trials", "3", "--posteval-top", "2",
            "--out-dir", str(root),
        ]) == 0
    assert cli.main([
        "select", str(root / "homing_s0"), str(root / "homing_s1"),
        "--top", "2", "--out-dir", str(root / "sel"),
    ]) == 0
    return root


class TestEvolveCommand:
    def test_archive_layout(self, workspace):
        run_dir = workspace / "homing_s0"
        assert (run_dir / "config.json").exists()
        assert (run_dir / "summary.csv").exists()
        champions = sorted((run_dir / "champions").iterdir())
        assert len(champions) == 3  # initial + 2 generations
        lines = (run_dir / "summary.csv").read_text().splitlines()
        assert lines[0] == "generation,fitness,mean,std,posteval_mean,posteval_std"
        assert len(lines) == 4

    def test_archive_loads(self, workspace):
        archive = RunArchive.load(workspace / "homing_s0")
        assert archive.task_name == "homing"
        assert archive.trials_executed > 0

    def test_byte_identical_rerun(self, workspace, tmp_path):
        cfg = workspace / "tiny.json"
        for out in (tmp_path / "a", tmp_path / "b"):
            assert cli.main([
                "evolve", "--task", "homing", "--seed", "0", "--generations", "1",
                "--population", "6", "--trials", "2", "--desk",
                "--config", str(cfg), "--out-dir", str(out),
            ]) == 0
        a = tmp_path / "a" / "homing_s0"
        b = tmp_path / "b" / "homing_s0"
        assert (a / "summary.csv").read_bytes() == (b / "summary.csv").read_bytes()
        for ga, gb in zip(sorted((a / "champions").iterdir()),
                          sorted((b / "champions").iterdir())):
            assert ga.read_bytes() == gb.read_bytes()


class TestPostevalCommand:
    def test_updates_archive(self, workspace):
        assert cli.main([
            "posteval", "--archive", str(workspace / "homing_s1"),
            "--trials", "2", "--top", "1", "--desk",
            "--config", str(workspace / "tiny.json"),
        ]) == 0
        archive = RunArchive.load(workspace / "homing_s1")
        assert any(r.posteval_mean is not None for r in archive.records)


class TestSelectCommand:
    def test_writes_controllers_and_table(self, workspace):
        sel = workspace / "sel"
        assert (sel / "controller_1.genome").exists()
        assert (sel / "controller_2.genome").exists()
        lines = (sel / "selection.csv").read_text().splitlines()
        assert lines[0] == "rank,run_seed,generation,posteval_mean"
        assert len(lines) == 3
        g = load_genome(sel / "controller_1.genome")
        assert g.n_inputs == 11 and g.n_outputs == 2


class TestReplayCommand:
    def test_dispersion_outputs(self, workspace, tmp_path):
        genome = workspace / "sel" / "controller_1.genome"
        assert cli.main([
            "replay", "--scenario", "dispersion", "--genome", str(genome),
            "--seed", "3", "--robots", "4", "--out-dir", str(tmp_path),
        ]) == 0
        out = tmp_path / "replay_dispersion_s3"
        for name in ("metrics.csv", "trajectory.csv", "trajectory.svg", "metrics.svg"):
            assert (out / name).exists(), name
        header = (out / "trajectory.csv").read_text().splitlines()[0]
        assert header == "t,id,x,y,heading,speed"

    def test_monitoring_emits_grid_and_heatmap(self, workspace, tmp_path):
        genome = workspace / "sel" / "controller_1.genome"
        assert cli.main([
            "replay", "--scenario", "monitoring-square", "--genome", str(genome),
            "--seed", "2", "--robots", "3", "--out-dir", str(tmp_path),
        ]) == 0
        out = tmp_path / "replay_monitoring-square_s2"
        values, origin, cell = load_coverage_grid(out / "coverage_grid.txt")
        assert values.shape == (100, 100)
        assert cell == 1.0
        assert (out / "coverage.svg").exists()

    def test_incompatible_genome_arity_fails_cleanly(self, tmp_path):
        pop = Population(NeatParams(population_size=1), 4, 2, np.random.default_rng(0))
        bad = tmp_path / "bad.genome"
        save_genome(pop.genomes[0], bad)
        rc = cli.main([
            "replay", "--scenario", "dispersion", "--genome", str(bad),
            "--seed", "0", "--out-dir", str(tmp_path),
        ])
        assert rc == 2


class TestMissionCommand:
    def test_default_plan_runs(self, workspace, tmp_path):
        g = str(workspace / "sel" / "controller_1.genome")
        assert cli.main([
            "mission", "--genomes", f"homing={g}", f"dispersion={g}",
            f"monitoring={g}", f"clustering={g}", "--robots", "3",
            "--seed", "4", "--out-dir", str(tmp_path),
        ]) == 0
        out = tmp_path / "mission_s4"
        names = {p.name for p in out.iterdir()}
        assert "samples.csv" in names
        assert "plan.json" in names
        assert any(n.startswith("map_pred_t") and n.endswith(".svg") for n in names)
        assert any(n.startswith("stage_0_homing") and n.endswith(".svg") for n in names)

    def test_missing_genome_reports_error(self, tmp_path):
        rc = cli.main([
            "mission", "--genomes", "homing=/nonexistent.genome",
            "dispersion=/n.genome", "monitoring=/n.genome", "clustering=/n.genome",
            "--out-dir", str(tmp_path),
        ])
        assert rc == 2


class TestPlotCommand:
    def test_fitness_plot_with_csv(self, workspace, tmp_path):
        out = tmp_path / "fitness.svg"
        assert cli.main([
            "plot", "fitness", str(workspace / "homing_s0"),
            str(workspace / "homing_s1"), "--out", str(out),
        ]) == 0
        assert out.exists()
        assert out.with_suffix(".csv").exists()
        lines = out.with_suffix(".csv").read_text().splitlines()
        assert lines[0] == "run,generation,best_so_far"

    def test_trajectory_plot(self, workspace, tmp_path):
        genome = workspace / "sel" / "controller_1.genome"
        cli.main(["replay", "--scenario", "dispersion", "--genome", str(genome),
                  "--seed", "1", "--robots", "3", "--out-dir", str(tmp_path)])
        csv = tmp_path / "replay_dispersion_s1" / "trajectory.csv"
        out = tmp_path / "traj.svg"
        assert cli.main(["plot", "trajectory", str(csv), "--out", str(out)]) == 0
        assert out.exists()

    def test_coverage_plot(self, workspace, tmp_path):
        genome = workspace / "sel" / "controller_1.genome"
        cli.main(["replay", "--scenario", "monitoring-square", "--genome",
                  str(genome), "--seed", "1", "--robots", "3",
                  "--out-dir", str(tmp_path)])
        grid = tmp_path / "replay_monitoring-square_s1" / "coverage_grid.txt"
        out = tmp_path / "cov.svg"
        assert cli.main(["plot", "coverage", str(grid), "--out", str(out)]) == 0
        assert out.exists()


class TestEnvironmentDefaults:
    def test_out_dir_env_var(self, monkeypatch):
        monkeypatch.setenv("AQUASWARM_OUT_DIR", "/custom/path")
        assert cli._default_out_dir() == "/custom/path"
        monkeypatch.delenv("AQUASWARM_OUT_DIR")
        assert cli._default_out_dir() == "out"


class TestScenarioFileReplay:
    def test_replay_from_scenario_file(self, workspace, tmp_path):
        import json as _json

        spec = {
            "metric": "dispersion", "robots": 3, "duration_s": 20.0,
            "placement": {"kind": "square", "side": 20.0, "min_separation": 4.0},
            "noise": {"position_sigma": 0.5},
        }
        sc_path = tmp_path / "custom.json"
        sc_path.write_text(_json.dumps(spec))
        genome = workspace / "sel" / "controller_1.genome"
        assert cli.main([
            "replay", "--scenario-file", str(sc_path), "--genome", str(genome),
            "--seed", "1", "--out-dir", str(tmp_path),
        ]) == 0
        out = tmp_path / "replay_custom_s1"
        assert (out / "metrics.csv").exists()
        assert (out / "trajectory.csv").exists()
