import csv
import io
import json
from pathlib import Path

import pytest

from collapse_walk import cli
from collapse_walk.config import ExperimentConfig, load_config
from collapse_walk.errors import ConfigError
from collapse_walk.runner import execute, run, summary_csv

CONFIGS = Path(__file__).resolve().parent.parent / "configs"


def write_cfg(tmp_path, data, name="cfg.json"):
    path = tmp_path / name
    path.write_text(json.dumps(data))
    return str(path)


BINARY = {"scenario": {"kind": "binary", "p0": 0.3, "d": 0.05}, "trials": 2000, "master_seed": 42}


class TestConfig:
    def test_bundled_configs_load(self):
        for path in sorted(CONFIGS.glob("*.json")):
            load_config(path)

    @pytest.mark.parametrize("patch", [{"trials": 0}, {"master_seed": -1}, {"colour": "red"},
                                       {"scenario": {"kind": "binary", "p0": 1.5}},
                                       {"scenario": {"kind": "bell-epr", "wing_bases": {"C": {}}}}])
    def test_rejects_bad_configs(self, patch):
        with pytest.raises(ConfigError):
            ExperimentConfig.from_dict({**BINARY, **patch})

    def test_overrides(self):
        cfg = ExperimentConfig.from_dict(BINARY).with_overrides(seed=5, trials=10)
        assert (cfg.master_seed, cfg.trials) == (5, 10)

    def test_missing_file(self, tmp_path):
        with pytest.raises(ConfigError):
            load_config(tmp_path / "nope.json")


class TestRunner:
    def test_report_is_deterministic(self):
        cfg = ExperimentConfig.from_dict(BINARY)
        a, b = execute(cfg).report.to_json_dict(), execute(cfg).report.to_json_dict()
        a.pop("wall_time"), b.pop("wall_time")
        assert a == b and a["passed"]

    def test_seed_required(self):
        with pytest.raises(ConfigError):
            execute(ExperimentConfig.from_dict({k: v for k, v in BINARY.items() if k != "master_seed"}))

    def test_artifacts(self, tmp_path):
        res = run(ExperimentConfig.from_dict(BINARY), out_dir=tmp_path, traces=True, dump_state=True)
        names = {p.name for p in tmp_path.iterdir()}
        assert names == {"report.json", "summary.csv", "traces.jsonl", "initial_state.json",
                         "final_state_trial0.json"}
        raw = (tmp_path / "summary.csv").read_bytes()
        assert b"\r" not in raw
        rows = list(csv.DictReader(io.StringIO(raw.decode())))
        assert len(rows) == 2000 and list(rows[0]) == ["trial", "outcome", "steps", "clamps", "final_p"]
        traces = [json.loads(line) for line in (tmp_path / "traces.jsonl").read_text().splitlines()]
        # the step-by-step path reproduces every ensemble outcome
        for row, tr in zip(rows, traces):
            assert tr["block_outcomes"]["D"] == row["outcome"]
            assert tr["step_count"] == int(row["steps"])
        report = json.loads((tmp_path / "report.json").read_text())
        assert report["counts"]["x-up"] == sum(r["outcome"] == "x-up" for r in rows)
        assert summary_csv(res) == raw.decode()

    def test_bell_run_uses_both_orders(self):
        cfg = load_config(CONFIGS / "bell_singlet.json").with_overrides(trials=3000)
        res = execute(cfg)
        assert res.orders is not None and len({tuple(o) for o in res.orders}) == 2
        assert res.report.passed

    def test_eraser_report_states_both_conventions(self):
        cfg = load_config(CONFIGS / "eraser.json").with_overrides(trials=2000)
        rep = execute(cfg).report
        pred = rep.predictions["eraser"]
        assert pred["deviant_prob"] == pytest.approx(0.01) and pred["deviant_prob_total"] == pytest.approx(0.02)
        assert rep.estimator["mean_total"] == pytest.approx(2 * rep.estimator["mean_per_term"], rel=0.1)


class TestCli:
    def test_run_check(self, tmp_path, capsys):
        code = cli.main(["run", "--config", write_cfg(tmp_path, BINARY), "--check", "--out", str(tmp_path / "o")])
        assert code == 0
        assert "passed=True" in capsys.readouterr().out

    def test_run_zero_trials_is_a_config_error(self, tmp_path, capsys):
        assert cli.main(["run", "--config", write_cfg(tmp_path, BINARY), "--trials", "0"]) == 1
        assert "error" in capsys.readouterr().err

    def test_run_without_seed(self, tmp_path):
        cfg = {k: v for k, v in BINARY.items() if k != "master_seed"}
        assert cli.main(["run", "--config", write_cfg(tmp_path, cfg)]) == 1

    def test_failed_check_exits_2(self, tmp_path):
        # budget-limited walks never finish, so the per-cell checks fail
        cfg = {**BINARY, "scenario": {"kind": "binary", "p0": 0.5, "d": 0.01,
                                      "events": [{"id": "D", "t": 0, "x": 0, "steps": 3}]}}
        assert cli.main(["run", "--config", write_cfg(tmp_path, cfg), "--check"]) == 2

    def test_predict(self, tmp_path):
        assert cli.main(["predict", "--config", str(CONFIGS / "nominal_scale.json"), "--out", str(tmp_path)]) == 0
        out = json.loads((tmp_path / "predict.json").read_text())
        assert out["scale"]["steps_to_collapse"] == 10 ** 9

    @pytest.mark.parametrize("args,key,value", [
        (["markov", "--p0", "0.3", "--d", "0.1"], "expected_steps", 21.0),
        (["eraser", "--n", "50", "--d", "0.02"], "mean", 0.010812033666848242),
        (["amplified", "--d", "0.01"], "case_absorbed", 0.01),
    ])
    def test_oracle(self, capsys, args, key, value):
        assert cli.main(["oracle", *args]) == 0
        assert json.loads(capsys.readouterr().out)[key] == pytest.approx(value, rel=1e-9)

    def test_oracle_extensions(self, capsys):
        events = [{"id": "A", "t": 0, "x": 0}, {"id": "B", "t": 2, "x": 0}, {"id": "C", "t": 1, "x": 10}]
        assert cli.main(["oracle", "extensions", "--events", json.dumps(events)]) == 0
        out = json.loads(capsys.readouterr().out)
        assert out["count"] == out["count_dp"] == 3

    def test_oracle_marginals_and_singlet(self, capsys):
        assert cli.main(["oracle", "marginals", "--config", str(CONFIGS / "bell_singlet.json"),
                         "--rule", "abs-amplitude"]) == 0
        out = json.loads(capsys.readouterr().out)
        assert out["wing_A"] == pytest.approx([0.5, 0.5])
        assert cli.main(["oracle", "singlet", "--gamma", "0.6", "--delta", "0.8"]) == 0
        out = json.loads(capsys.readouterr().out)
        assert sum(out["densities"].values()) == pytest.approx(1.0)

    def test_oracle_domain_error(self, capsys):
        assert cli.main(["oracle", "markov", "--p0", "0.333", "--d", "0.01"]) == 1

    def test_signal_scan(self, tmp_path):
        assert cli.main(["signal-scan", "--samples", "20", "--seed", "7", "--out", str(tmp_path)]) == 0
        rows = list(csv.DictReader(io.StringIO((tmp_path / "signal_scan.csv").read_text())))
        assert {r["rule"] for r in rows} >= {"abs-amplitude", "power-2"}
        assert max(float(r["gap"]) for r in rows if r["rule"] == "power-2") <= 1e-12

    def test_sequence_test(self, tmp_path):
        cfg = {"scenario": {"kind": "bell-epr", "d": 0.05}, "trials": 2000, "master_seed": 1}
        code = cli.main(["sequence-test", "--config", write_cfg(tmp_path, cfg), "--check", "--out", str(tmp_path)])
        assert code == 0
        out = json.loads((tmp_path / "sequence_test.json").read_text())
        assert len(out["orders"]) == 2

    def test_sequence_test_detects_order_dependence(self, tmp_path):
        cfg = {"scenario": {"kind": "bell-epr", "alpha": 0.6, "beta": -0.8, "d": 0.05,
                            "wing_bases": {"B": {"gamma": 0.4472135954999579, "delta": 0.8944271909999159}}},
               "trials": 100000, "master_seed": 1}
        assert cli.main(["sequence-test", "--config", write_cfg(tmp_path, cfg), "--rule", "abs-amplitude",
                         "--check"]) == 2
