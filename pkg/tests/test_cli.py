import json
from pathlib import Path

import numpy as np
import pytest

from trackguard.cli import main
from trackguard.terminal import TerminalSet

TRACK = "configs/track.json"
PARAMS = "configs/vehicle.json"
ARTIFACT = "artifacts/terminal_set.json"


class TestSynth:
    def test_fast_synth_roundtrip(self, tmp_path):
        # a reduced grid keeps this unit test quick; the paper-scale run
        # lives in the acceptance suite
        cfg = tmp_path / "synth.json"
        cfg.write_text(json.dumps({"n_c": 5, "c_max": 1.5, "v_x_target": 1.2,
                                   "n_verify_starts": 150, "verify_iters": 80}))
        out = tmp_path / "ts.json"
        rep = tmp_path / "report.txt"
        code = main(["synth", "--config", str(cfg), "--params", PARAMS,
                     "--out", str(out), "--report", str(rep)])
        assert code == 0
        ts = TerminalSet.load(out)
        assert ts.provenance["verification"]["verified"] is True
        assert "lyapunov" in rep.read_text()

    def test_even_grid_is_config_error(self, tmp_path):
        cfg = tmp_path / "synth.json"
        cfg.write_text(json.dumps({"n_c": 2}))
        code = main(["synth", "--config", str(cfg), "--out", str(tmp_path / "x.json")])
        assert code == 2

    def test_infeasible_curvature_is_pipeline_error(self, tmp_path, capsys):
        cfg = tmp_path / "synth.json"
        cfg.write_text(json.dumps({"n_c": 3, "c_max": 8.0, "v_x_target": 2.5,
                                   "n_verify_starts": 50}))
        code = main(["synth", "--config", str(cfg), "--out", str(tmp_path / "x.json")])
        assert code == 3
        assert "steady-state" in capsys.readouterr().err


class TestVerify:
    def test_shipped_artifact_verifies(self, tmp_path):
        out = tmp_path / "rep.json"
        code = main(["verify", "--artifact", ARTIFACT, "--params", PARAMS,
                     "--n-starts", "200", "--out", str(out)])
        assert code == 0
        doc = json.loads(out.read_text())
        assert doc["verified"] is True
        assert doc["n_starts"] == 200

    def test_inflated_artifact_fails_verification(self, tmp_path):
        ts = TerminalSet.load(ARTIFACT)
        bad = ts.scaled(4.0 * ts.alpha)
        bad_path = tmp_path / "inflated.json"
        bad.save(bad_path)
        out = tmp_path / "rep.json"
        code = main(["verify", "--artifact", str(bad_path), "--params", PARAMS,
                     "--n-starts", "300", "--out", str(out)])
        assert code == 0
        doc = json.loads(out.read_text())
        assert doc["verified"] is False
        assert doc["worst_objective"] > bad.alpha

    def test_zero_starts_rejected(self):
        assert main(["verify", "--artifact", ARTIFACT, "--n-starts", "0"]) == 2


class TestSimulateAndReport:
    def test_safe_scenario_and_report(self, tmp_path):
        scen = tmp_path / "mini_safe.json"
        scen.write_text(json.dumps({
            "policy": {"kind": "pure-pursuit", "v_target": 1.2},
            "sim": {"duration": 4.0},
        }))
        code = main(["simulate", "--scenario", str(scen), "--track", TRACK,
                     "--params", PARAMS, "--terminal-set", ARTIFACT,
                     "--out-dir", str(tmp_path / "runs")])
        assert code == 0
        summary = json.loads((tmp_path / "runs" / "mini_safe.summary.json").read_text())
        assert summary["breach"] is False
        assert summary["intervention_p95"] <= 1e-3

        log = summary["log"]
        code = main(["report", log, "--assert-no-breach",
                     "--assert-intervention-p95", "1e-3",
                     "--out", str(tmp_path / "agg.json")])
        assert code == 0
        agg = json.loads((tmp_path / "agg.json").read_text())
        assert agg["breaches"] == 0 and agg["episodes"] == 1

    def test_breach_scenario_fails_assertion(self, tmp_path):
        code = main(["simulate", "--scenario", "configs/scenarios/breach_demo.json",
                     "--track", TRACK, "--params", PARAMS,
                     "--terminal-set", ARTIFACT, "--out-dir", str(tmp_path)])
        assert code == 0
        log = str(tmp_path / "breach_demo.csv")
        assert main(["report", log]) == 0
        assert main(["report", log, "--assert-no-breach"]) == 4

    def test_report_without_logs_is_config_error(self):
        assert main(["report"]) == 2

    def test_missing_scenario_is_config_error(self, tmp_path):
        assert main(["simulate", "--scenario", str(tmp_path / "nope.json"),
                     "--track", TRACK, "--terminal-set", ARTIFACT]) == 2
