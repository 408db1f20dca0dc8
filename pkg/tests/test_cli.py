import json

import pytest

from qportfolio.cli import parse_scenario, run_command, scenario_hash
from qportfolio.errors import ScenarioError


def _minimal_sho(experiment="simulate", **overrides):
    sc = {
        "model": "sho",
        "params": {"gamma": 1.0, "n_thermal": 1.0},
        "risk_neutral": {"r": 0.0, "T": 1.0},
        "initial_state": [2.0, 0.0],
        "experiment": experiment,
    }
    sc.update(overrides)
    return sc


class TestParseScenario:
    def test_defaults_applied(self):
        sc = parse_scenario(json.dumps(_minimal_sho()))
        assert sc["schedule"]["dt"] == 1e-3
        assert sc["schedule"]["n_steps"] == 1000
        assert sc["options"]["n_paths"] == 10_000
        assert sc["master_seed"] == 0

    def test_unknown_key_suggestion(self):
        bad = _minimal_sho()
        bad["params"] = {"gamma_rate": 1.0, "n_thermal": 1.0}
        with pytest.raises(ScenarioError) as err:
            parse_scenario(json.dumps(bad))
        text = "\n".join(err.value.problems)
        assert "gamma_rate" in text and "gamma" in text

    def test_negative_theta_shift_names_field(self):
        bad = {
            "model": "qubit",
            "params": {"phi_flux": 1e12, "theta_shift": -1.0},
            "risk_neutral": {"r": 0.0, "T": 1.0},
            "initial_state": [0.2],
            "experiment": "simulate",
        }
        with pytest.raises(ScenarioError) as err:
            parse_scenario(json.dumps(bad))
        assert any("theta_shift" in p and "> 0" in p for p in err.value.problems)

    def test_all_errors_reported_at_once(self):
        bad = _minimal_sho()
        bad["params"] = {"gamma": -1.0}
        bad["risk_neutral"] = {"r": 0.0, "T": -2.0}
        with pytest.raises(ScenarioError) as err:
            parse_scenario(json.dumps(bad))
        assert len(err.value.problems) >= 3  # gamma, missing n_thermal, T

    def test_dt_must_divide_horizon(self):
        bad = _minimal_sho(schedule={"dt": 0.3})
        with pytest.raises(ScenarioError) as err:
            parse_scenario(json.dumps(bad))
        assert any("divide" in p for p in err.value.problems)

    def test_invalid_json(self):
        with pytest.raises(ScenarioError):
            parse_scenario("{not json")

    def test_qubit_state_bounds(self):
        bad = {
            "model": "qubit",
            "params": {"phi_flux": 1.0, "theta_shift": 1.0},
            "risk_neutral": {"r": 0.0, "T": 1.0},
            "initial_state": [1.5],
            "experiment": "simulate",
        }
        with pytest.raises(ScenarioError):
            parse_scenario(json.dumps(bad))

    def test_hash_changes_with_content(self):
        a = parse_scenario(json.dumps(_minimal_sho()))
        b = parse_scenario(json.dumps(_minimal_sho(master_seed=1)))
        assert scenario_hash(a) != scenario_hash(b)


class TestRunCommand:
    def _write(self, tmp_path, sc, name="scenario.json"):
        path = tmp_path / name
        path.write_text(json.dumps(sc))
        return str(path)

    def test_simulate_writes_artifacts(self, tmp_path):
        sc = _minimal_sho(
            schedule={"dt": 0.01},
            options={"n_paths": 200, "record_every": 20, "output_paths": 2},
            output_dir=str(tmp_path / "out"),
        )
        code = run_command(["simulate", "--scenario", self._write(tmp_path, sc)])
        assert code == 0
        assert (tmp_path / "out" / "moments.csv").exists()
        assert (tmp_path / "out" / "paths.csv").exists()
        head = (tmp_path / "out" / "moments.csv").read_text().splitlines()[0]
        assert head.startswith("# scenario_hash = ")

    def test_describe_writes_nothing(self, tmp_path, capsys):
        sc = _minimal_sho(output_dir=str(tmp_path / "out"))
        code = run_command(["simulate", "--scenario",
                            self._write(tmp_path, sc), "--describe"])
        assert code == 0
        assert not (tmp_path / "out").exists()
        resolved = json.loads(capsys.readouterr().out)
        assert resolved["schedule"]["n_steps"] == 1000

    def test_validation_failure_exits_one_without_output(self, tmp_path):
        sc = _minimal_sho(output_dir=str(tmp_path / "out"))
        sc["params"]["gamma"] = -1.0
        code = run_command(["simulate", "--scenario", self._write(tmp_path, sc)])
        assert code == 1
        assert not (tmp_path / "out").exists()

    def test_experiment_mismatch_is_validation_error(self, tmp_path):
        sc = _minimal_sho(output_dir=str(tmp_path / "out"))
        code = run_command(["hedge", "--scenario", self._write(tmp_path, sc)])
        assert code == 1

    def test_numerical_failure_exits_two_without_output(self, tmp_path):
        # qubit forward solve at dt far beyond the advective bound
        sc = {
            "model": "qubit",
            "params": {"phi_flux": 1.0, "theta_shift": 1.0},
            "risk_neutral": {"r": 0.0, "T": 10.0},
            "initial_state": [0.0],
            "schedule": {"dt": 0.1},
            "experiment": "solve_forward",
            "options": {"cells": [400]},
            "output_dir": str(tmp_path / "out"),
        }
        code = run_command(["solve-forward", "--scenario",
                            self._write(tmp_path, sc)])
        assert code == 2
        assert not (tmp_path / "out").exists()

    def test_seed_and_out_overrides(self, tmp_path):
        sc = _minimal_sho(
            schedule={"dt": 0.01},
            options={"n_paths": 100, "record_every": 50, "output_paths": 1},
            master_seed=3,
        )
        path = self._write(tmp_path, sc)
        out1 = tmp_path / "a"
        out2 = tmp_path / "b"
        assert run_command(["simulate", "--scenario", path,
                            "--out", str(out1)]) == 0
        assert run_command(["simulate", "--scenario", path, "--seed", "4",
                            "--out", str(out2)]) == 0
        m1 = (out1 / "moments.csv").read_text()
        m2 = (out2 / "moments.csv").read_text()
        assert m1 != m2  # different seed changes content

    def test_rerun_is_byte_identical(self, tmp_path):
        sc = _minimal_sho(
            schedule={"dt": 0.01},
            options={"n_paths": 300, "record_every": 25, "output_paths": 3},
        )
        path = self._write(tmp_path, sc)
        for out in ("r1", "r2"):
            assert run_command(["simulate", "--scenario", path,
                                "--out", str(tmp_path / out)]) == 0
        for name in ("moments.csv", "paths.csv"):
            a = (tmp_path / "r1" / name).read_bytes()
            b = (tmp_path / "r2" / name).read_bytes()
            assert a == b

    def test_value_experiment_json(self, tmp_path):
        sc = _minimal_sho(
            experiment="value",
            initial_state=[1.0],
            options={
                "payoff": {"kind": "step", "thresholds": [1.0]},
                "routes": ["closed_form", "mc"],
                "n_paths": 2000,
            },
            output_dir=str(tmp_path / "out"),
        )
        code = run_command(["value", "--scenario", self._write(tmp_path, sc)])
        assert code == 0
        data = json.loads((tmp_path / "out" / "value.json").read_text())
        assert set(data["results"]) == {"closed_form", "mc"}
        assert "closed_form_vs_mc" in data["diffs"]
        assert data["results"]["mc"]["standard_error"] > 0

    def test_collapse_stats(self, tmp_path):
        sc = {
            "model": "qubit",
            "params": {"phi_flux": 1.0, "theta_shift": 1.0},
            "risk_neutral": {"r": 0.0, "T": 5.0},
            "initial_state": [0.4],
            "schedule": {"dt": 0.005},
            "experiment": "collapse_stats",
            "options": {"n_paths": 500, "z0_values": [0.0, 0.4]},
            "output_dir": str(tmp_path / "out"),
        }
        code = run_command(["collapse-stats", "--scenario",
                            self._write(tmp_path, sc)])
        assert code == 0
        lines = (tmp_path / "out" / "collapse.csv").read_text().splitlines()
        data_rows = [l for l in lines if l and not l.startswith("#")][1:]
        assert len(data_rows) == 2

    def test_hedge_experiment(self, tmp_path):
        sc = _minimal_sho(
            experiment="hedge",
            initial_state=[1.0],
            schedule={"dt": 0.01},
            risk_neutral={"r": 0.05, "T": 1.0},
            options={
                "payoff": {"kind": "step", "thresholds": [1.0]},
                "n_paths": 100,
                "output_paths": 2,
            },
            output_dir=str(tmp_path / "out"),
        )
        code = run_command(["hedge", "--scenario", self._write(tmp_path, sc)])
        assert code == 0
        report = json.loads((tmp_path / "out" / "report.json").read_text())
        assert report["n_paths"] == 100
        assert "rms_error" in report
        ledger_lines = (tmp_path / "out" / "ledgers.csv").read_text().splitlines()
        data = [l for l in ledger_lines if l and not l.startswith("#")]
        assert len(data) == 1 + 2 * 101  # header + 2 paths x 101 steps

    def test_missing_scenario_file(self):
        assert run_command(["simulate", "--scenario", "/nonexistent.json"]) == 1

    def test_bad_usage_exits_one(self):
        assert run_command(["simulate"]) == 1
