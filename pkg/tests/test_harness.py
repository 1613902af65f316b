import json

import numpy as np
import pytest

from sgalign import ConfigError
from sgalign.harness import (
    CATALOG,
    catalog_config,
    catalog_names,
    config_from_dict,
    emit_csv,
    load_config,
    parse_config,
    run_experiment,
    run_sweep,
    serialize_config,
)

MINIMAL = {
    "name": "minimal",
    "subsystems": [
        {"model": "oscillator", "initial_state": [1.0, 1.0]},
        {"model": "oscillator", "initial_state": [0.5, 0.5]},
    ],
    "controller": {"kind": "alignment"},
}


class TestParseConfig:
    def test_minimal_config_gets_defaults(self):
        cfg = parse_config(json.dumps(MINIMAL))
        assert cfg.integrator.step == 1e-3
        assert cfg.integrator.horizon == 200.0
        assert cfg.integrator.method == "rk4"
        assert cfg.record_every == 10
        assert cfg.controller.gamma == 0.5
        assert cfg.seed == 0

    def test_unknown_key_named_in_error(self):
        bad = dict(MINIMAL, controller={"kind": "alignment", "gama": 0.5})
        with pytest.raises(ConfigError, match="gama"):
            parse_config(json.dumps(bad))

    def test_alignment_needs_two_subsystems(self):
        bad = dict(MINIMAL, subsystems=MINIMAL["subsystems"][:1])
        with pytest.raises(ConfigError, match="N >= 2"):
            parse_config(json.dumps(bad))

    def test_malformed_json_reports_line(self):
        with pytest.raises(ConfigError, match="line"):
            parse_config("{\n  broken\n}")

    def test_unknown_model(self):
        bad = dict(MINIMAL, subsystems=[
            {"model": "rocket", "initial_state": [0.0, 0.0]},
            MINIMAL["subsystems"][1],
        ])
        with pytest.raises(ConfigError, match="rocket"):
            parse_config(json.dumps(bad))

    def test_unknown_parameter(self):
        bad = dict(MINIMAL, subsystems=[
            {"model": "oscillator", "parameters": {"omeg": 1.0},
             "initial_state": [0.0, 0.0]},
            MINIMAL["subsystems"][1],
        ])
        with pytest.raises(ConfigError, match="omeg"):
            parse_config(json.dumps(bad))

    def test_wrong_state_length_detected_at_build(self):
        bad = dict(MINIMAL, subsystems=[
            {"model": "oscillator", "initial_state": [0.0]},
            MINIMAL["subsystems"][1],
        ])
        cfg = parse_config(json.dumps(bad))
        with pytest.raises(ConfigError, match="length"):
            run_experiment(cfg)

    @pytest.mark.parametrize("name", sorted(CATALOG))
    def test_round_trip_catalog(self, name):
        cfg = catalog_config(name)
        again = config_from_dict(serialize_config(cfg))
        assert again == cfg


class TestRunExperiment:
    def test_two_oscillator_leveling(self):
        _, metrics, audits = run_experiment(catalog_config("two-oscillator-leveling"))
        assert metrics.final_output_spread < 1e-3
        assert metrics.theorem1_branch == "goal"
        assert all(rep.passed for rep in audits.values())

    def test_pendulum_energy_tracking(self):
        traj, metrics, _ = run_experiment(catalog_config("pendulum-energy-tracking"))
        assert abs(traj.outputs[-1, 0] - 1.0) < 1e-3

    def test_aligned_start(self):
        _, metrics, _ = run_experiment(catalog_config("aligned-start"))
        assert metrics.q_final <= 1e-12
        assert metrics.u_tail_max <= 1e-12

    def test_degenerate_rest_reports_lie_branch(self):
        _, metrics, audits = run_experiment(catalog_config("degenerate-rest"))
        assert metrics.theorem1_branch in ("lie_vanish", "both")
        assert audits["monotone"].passed
        # control decay is only algebraic here; the audit flags it honestly
        assert not audits["control_decay"].passed
        assert audits["control_decay"].worst < 1e-3

    def test_batch_determinism(self, tmp_path):
        cfg = catalog_config("two-oscillator-leveling")
        t1, m1, _ = run_experiment(cfg)
        t2, m2, _ = run_experiment(cfg)
        assert m1.q_final == m2.q_final
        assert m1.final_output_spread == m2.final_output_spread
        p1, p2 = tmp_path / "a.csv", tmp_path / "b.csv"
        emit_csv(t1, str(p1))
        emit_csv(t2, str(p2))
        assert p1.read_bytes() == p2.read_bytes()

    def test_perturbation_is_seeded_and_applied(self):
        raw = json.loads(json.dumps(CATALOG["degenerate-rest"]))
        raw["controller"]["perturb_delta"] = 1e-3
        cfg = config_from_dict(raw)
        _, m1, a1 = run_experiment(cfg)
        _, m2, _ = run_experiment(cfg)
        assert m1.final_output_spread == m2.final_output_spread
        assert a1["alternative"].detail == "goal"

    def test_writes_outputs(self, tmp_path):
        raw = json.loads(json.dumps(CATALOG["two-oscillator-leveling"]))
        raw["integrator"]["horizon"] = 5.0
        raw["outputs"] = {
            "csv_path": str(tmp_path / "run.csv"),
            "report_path": str(tmp_path / "run.json"),
        }
        cfg = config_from_dict(raw)
        run_experiment(cfg)
        report = json.loads((tmp_path / "run.json").read_text())
        assert set(report) == {"config", "metrics", "audits"}
        assert report["config"]["name"] == "two-oscillator-leveling"
        assert "monotone" in report["audits"]


class TestSweep:
    def test_gamma_sweep_all_monotone(self):
        cfg = catalog_config("two-oscillator-leveling")
        rows = run_sweep(cfg, "controller.gamma", [0.05, 0.1, 0.5, 1.0])
        assert len(rows) == 4
        for value, metrics in rows:
            assert metrics.max_q_rise <= 1e-9

    def test_empty_sweep(self):
        cfg = catalog_config("two-oscillator-leveling")
        assert run_sweep(cfg, "controller.gamma", []) == []

    def test_horizon_sweep_spread_non_increasing(self):
        raw = json.loads(json.dumps(CATALOG["two-oscillator-leveling"]))
        raw["controller"]["gamma"] = 0.005  # slow decay so spreads stay resolvable
        cfg = config_from_dict(raw)
        rows = run_sweep(cfg, "integrator.horizon", [50.0, 100.0, 200.0])
        spreads = [m.final_output_spread for _, m in rows]
        assert spreads[0] >= spreads[1] >= spreads[2]

    def test_sweep_matches_individual_runs(self):
        raw = json.loads(json.dumps(CATALOG["two-oscillator-leveling"]))
        raw["integrator"]["horizon"] = 10.0
        cfg = config_from_dict(raw)
        rows = run_sweep(cfg, "controller.gamma", [0.2, 0.8])
        for value, metrics in rows:
            raw2 = serialize_config(cfg)
            raw2["controller"]["gamma"] = value
            _, single, _ = run_experiment(config_from_dict(raw2))
            assert single.q_final == metrics.q_final
            assert single.final_output_spread == metrics.final_output_spread

    def test_bad_path_named(self):
        cfg = catalog_config("two-oscillator-leveling")
        with pytest.raises(ConfigError, match="controller.gai"):
            run_sweep(cfg, "controller.gai", [0.1])

    def test_sweep_csv(self, tmp_path):
        raw = json.loads(json.dumps(CATALOG["two-oscillator-leveling"]))
        raw["integrator"]["horizon"] = 5.0
        cfg = config_from_dict(raw)
        out = tmp_path / "sweep.csv"
        run_sweep(cfg, "controller.gamma", [0.2, 0.8], out_path=str(out))
        lines = out.read_text().strip().splitlines()
        assert lines[0].startswith("controller.gamma,q_initial,q_final")
        assert len(lines) == 3


class TestEmitCsv:
    def _short_run(self):
        raw = json.loads(json.dumps(CATALOG["two-oscillator-leveling"]))
        raw["integrator"]["horizon"] = 2.0
        traj, _, _ = run_experiment(config_from_dict(raw))
        return traj

    def test_header_contract(self, tmp_path):
        traj = self._short_run()
        path = tmp_path / "t.csv"
        emit_csv(traj, str(path))
        lines = path.read_text().splitlines()
        assert lines[0] == "t,x1_1,x1_2,y1,u1,x2_1,x2_2,y2,u2,Q,Qdot_bound"

    def test_row_count_and_final_newline(self, tmp_path):
        traj = self._short_run()
        path = tmp_path / "t.csv"
        emit_csv(traj, str(path))
        text = path.read_text()
        assert text.endswith("\n")
        assert len(text.splitlines()) == 1 + traj.records

    def test_round_trip_recomputes_goal(self, tmp_path):
        from sgalign import goal_value

        traj = self._short_run()
        path = tmp_path / "t.csv"
        emit_csv(traj, str(path))
        lines = path.read_text().splitlines()
        header = lines[0].split(",")
        iy = [header.index("y1"), header.index("y2")]
        iq = header.index("Q")
        for line in lines[1:]:
            cells = [float(v) for v in line.split(",")]
            q = goal_value([cells[i] for i in iy])
            assert abs(q - cells[iq]) <= 1e-15 * max(1.0, abs(cells[iq]))

    def test_catalog_names_listed(self):
        assert "two-oscillator-leveling" in catalog_names()
        assert len(catalog_names()) == 6

    def test_load_config_from_file(self, tmp_path):
        path = tmp_path / "cfg.json"
        path.write_text(json.dumps(MINIMAL))
        cfg = load_config(str(path))
        assert cfg.name == "minimal"
