import csv
import io
import json
import math
import xml.etree.ElementTree as ET

import numpy as np
import pytest

from polid import configuration as conf
from polid.harness import ConfigError, ExperimentConfig, HEADER, run_experiment
from polid.harness.cli import main
from polid.harness.plot import PlotError, emit_plot, read_report, series_from_rows

SVG = "{http://www.w3.org/2000/svg}"


def rows_of(text):
    return list(csv.DictReader(io.StringIO(text)))


def toy_cfg(**kw):
    base = dict(env="toy", episodes=[20, 60], seeds=[0, 1, 2], train_steps=20, batch_size=30, train_lr=0.1,
                conf_steps=5, retrain_steps=5, n_conf=1)
    base.update(kw)
    return ExperimentConfig(**base)


@pytest.fixture(scope="module")
def grid_report():
    cfg = ExperimentConfig(env="gridworld", episodes=[100, 1000], seeds=list(range(5)))
    return run_experiment(cfg)


@pytest.fixture(scope="module")
def toy_conf_report():
    return run_experiment(toy_cfg(conf=[False, True]))


class TestConfig:
    def test_unknown_key(self):
        with pytest.raises(ConfigError, match="unknown config keys"):
            ExperimentConfig.from_dict({"env": "gridworld", "colour": "red"})

    def test_missing_env(self):
        with pytest.raises(ConfigError):
            ExperimentConfig.from_dict({"rule": "simplified"})

    @pytest.mark.parametrize("bad", [
        {"env": "mars"}, {"env": "car", "rule": "both"}, {"env": "car", "episodes": [0]},
        {"env": "car", "seeds": [1, 1]}, {"env": "car", "delta": 1.5}, {"env": "car", "conf": "yes"},
        {"env": "minigolf", "experiment": "strategies"}, {"env": "car", "omega_grid": [2, 1, 0.5]},
    ])
    def test_rejects(self, bad):
        with pytest.raises(ConfigError):
            ExperimentConfig.from_dict(bad)

    def test_defaults(self):
        assert len(ExperimentConfig(env="gridworld").seeds) == 25
        assert len(ExperimentConfig(env="minigolf").seeds) == 20
        from polid.environments import DiscreteGridWorld
        hp = ExperimentConfig(env="gridworld", zeta=0.5).hyper(DiscreteGridWorld())
        assert hp["zeta"] == 0.5 and hp["train_steps"] == 200 and hp["delta"] == 0.01

    def test_round_trip(self):
        cfg = ExperimentConfig(env="car", rule=["simplified", "combinatorial"], episodes=[10, 25])
        again = ExperimentConfig.from_dict(json.loads(json.dumps(cfg.to_dict())))
        assert again == cfg

    def test_omega_grid(self):
        assert ExperimentConfig(env="minigolf").omegas()[:3] == [1.0, 1.5, 2.0]
        assert len(ExperimentConfig(env="minigolf").omegas()) == 29


class TestRun:
    def test_grid_row_count(self, grid_report):
        rows = rows_of(grid_report.csv_text())
        data = [r for r in rows if r["seed"].isdigit()]
        assert len(data) == 10
        assert len(rows) == 10 + 4
        assert list(rows[0].keys()) == HEADER
        assert grid_report.failures == 0

    def test_metric_ranges(self, grid_report):
        for r in grid_report.rows:
            assert 0.0 <= r["alpha_hat"] <= 1.0 and 0.0 <= r["beta_hat"] <= 1.0

    def test_aggregates_recompute(self, grid_report):
        for agg in grid_report.aggregates:
            members = [r for r in grid_report.rows if r["n"] == agg["n"] and r["rule"] == agg["rule"]]
            for m in ("alpha_hat", "beta_hat", "exact_match"):
                vals = np.array([float(r[m]) for r in members])
                ref = vals.mean() if agg["seed"] == "mean" else 1.96 * vals.std(ddof=1) / math.sqrt(len(vals))
                assert abs(agg[m] - ref) <= 1e-12

    def test_wallclock_blank_by_default(self, grid_report):
        assert all(r["wallclock_s"] == "" for r in rows_of(grid_report.csv_text()))

    def test_byte_identical_rerun(self, toy_conf_report):
        again = run_experiment(toy_cfg(conf=[False, True]))
        assert again.csv_text() == toy_conf_report.csv_text()

    def test_jobs_do_not_change_output(self, toy_conf_report):
        assert run_experiment(toy_cfg(conf=[False, True]), jobs=2).csv_text() == toy_conf_report.csv_text()

    def test_no_conf_never_configures(self):
        before = dict(conf.CALLS)
        run_experiment(toy_cfg(conf=[False], rule=["simplified", "combinatorial"]))
        assert dict(conf.CALLS) == before

    def test_conf_configures(self):
        before = conf.CALLS["identify_with_configuration"]
        run_experiment(toy_cfg(conf=[True], seeds=[0]))
        assert conf.CALLS["identify_with_configuration"] > before

    def test_minigolf_strategies_rows(self):
        cfg = ExperimentConfig(env="minigolf", experiment="strategies", true_units=[0, 1, 3], episodes=[30],
                               seeds=[0], omega_grid=[1.0, 3.0, 1.0], eval_episodes=100, train_steps=10)
        rep = run_experiment(cfg)
        assert [r["strategy"] for r in rep.rows] == ["uniform", "reference_optimal", "identified", "oracle"]
        oracle = rep.rows[-1]["return"]
        assert all(r["return"] <= oracle + 1e-12 for r in rep.rows)


class TestPlot:
    def test_one_path_per_series(self, grid_report, tmp_path):
        csv_path, _ = grid_report.write(tmp_path, "grid")
        svg = emit_plot(csv_path, "beta")
        root = ET.parse(svg).getroot()
        assert root.get("version") == "1.1"
        assert len(root.findall(f"{SVG}path")) == 1

    def test_conf_vs_no_conf_two_series(self, toy_conf_report, tmp_path):
        csv_path, _ = toy_conf_report.write(tmp_path, "toy")
        col, series = series_from_rows(read_report(csv_path), "beta")
        assert col == "beta_hat" and len(series) == 2
        root = ET.parse(emit_plot(csv_path, "beta")).getroot()
        assert len(root.findall(f"{SVG}path")) == 2

    def test_empty_metric(self, grid_report, tmp_path):
        csv_path, _ = grid_report.write(tmp_path, "grid")
        with pytest.raises(PlotError):
            emit_plot(csv_path, "")

    def test_single_point_sweep(self, tmp_path):
        rep = run_experiment(toy_cfg(episodes=[20], seeds=[0, 1]))
        csv_path, _ = rep.write(tmp_path, "one")
        with pytest.raises(PlotError, match="two sweep points"):
            emit_plot(csv_path, "alpha")


class TestCli:
    def test_run_and_plot(self, tmp_path, capsys):
        cfg = tmp_path / "toy.json"
        cfg.write_text(json.dumps(toy_cfg(seeds=[0, 1]).to_dict() | {"name": None, "seeds": None}))
        assert main(["run", str(cfg), "--out", str(tmp_path / "out"), "--seeds", "0..1"]) == 0
        out = tmp_path / "out" / "toy.csv"
        assert out.exists() and len(rows_of(out.read_text())) == 4 + 4
        assert main(["plot", str(out), "--metric", "alpha"]) == 0
        assert (tmp_path / "out" / "toy.alpha.svg").exists()

    def test_config_error_exit(self, tmp_path):
        bad = tmp_path / "bad.json"
        bad.write_text(json.dumps({"env": "gridworld", "typo": 1}))
        assert main(["run", str(bad)]) == 2
        assert main(["run", str(tmp_path / "missing.json")]) == 2
        assert main(["run", str(bad), "--seeds", "5..1"]) == 2

    def test_usage_error_exit(self):
        assert main(["plot", "x.csv"]) == 2
        assert main(["dance"]) == 2

    def test_plot_error_exit(self, tmp_path):
        assert main(["plot", str(tmp_path / "none.csv"), "--metric", "beta"]) == 2

    def test_run_failure_exit(self, tmp_path, monkeypatch):
        import polid.harness.cli as cli

        def boom(*a, **k):
            raise RuntimeError("disk on fire")
        monkeypatch.setattr(cli, "run_experiment", boom)
        cfg = tmp_path / "t.json"
        cfg.write_text(json.dumps({"env": "toy", "seeds": [0]}))
        assert main(["run", str(cfg)]) == 3
