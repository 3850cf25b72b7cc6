import json

import numpy as np
import pytest

from subscan import hilbert_map as hm
from subscan.cli import main


@pytest.fixture
def run_config(tmp_path):
    cfg = {
        "scenario": {
            "surface_resolution": 25,
            "tumor_points": 100,
            "tumor_radius": 1.0,
            "tumor_z_range": [3.5, 4.5],
        },
        "sensor": {"filler_points": 50},
        "map": {"hinge_shape": [7, 7, 5]},
        "eval": {"lattice_shape": [8, 8, 5]},
        "planners": ["bo"],
        "budget": 3,
        "seeds": [0],
        "evaluate_auprc": True,
    }
    path = tmp_path / "run.json"
    path.write_text(json.dumps(cfg))
    return path


class TestGenerate:
    def test_writes_scenario_files(self, tmp_path, run_config):
        out = tmp_path / "scene"
        assert main(["generate", "--config", str(run_config),
                     "--out", str(out)]) == 0
        assert (out / "anatomy.csv").exists()
        descriptor = json.loads((out / "scenario.json").read_text())
        assert descriptor["n_tumor_points"] == 100
        from subscan.scenario import load_labeled_point_cloud

        anatomy = load_labeled_point_cloud(out / "anatomy.csv")
        assert int(anatomy.labels.sum()) == 100


class TestPlan:
    def test_single_trial_artifacts(self, tmp_path, run_config):
        out = tmp_path / "trial"
        assert main(["plan", "--config", str(run_config),
                     "--out", str(out)]) == 0
        assert (out / "trace.csv").exists()
        assert (out / "posterior.json").exists()
        metrics = json.loads((out / "metrics.json").read_text())
        assert metrics["iterations"] == 3
        assert metrics["planner"] == "bo"

    def test_planner_and_budget_flags_override(self, tmp_path, run_config):
        out = tmp_path / "trial2"
        assert main(["plan", "--config", str(run_config), "--out", str(out),
                     "--planner", "multires", "--budget", "2",
                     "--seed", "7"]) == 0
        metrics = json.loads((out / "metrics.json").read_text())
        assert metrics["planner"] == "multires"
        assert metrics["iterations"] == 2
        assert metrics["seed"] == 7


class TestCampaignCommand:
    def test_campaign_and_eval_round_trip(self, tmp_path, run_config):
        out = tmp_path / "camp"
        assert main(["campaign", "--config", str(run_config),
                     "--out", str(out)]) == 0
        summary = json.loads((out / "summary.json").read_text())
        assert "bo" in summary["stats"]

        # eval a posterior produced by a plan run
        trial = tmp_path / "trial"
        assert main(["plan", "--config", str(run_config),
                     "--out", str(trial)]) == 0
        evald = tmp_path / "eval"
        assert main(["eval", "--config", str(run_config),
                     "--posterior", str(trial / "posterior.json"),
                     "--out", str(evald), "--slice", "z=2.0"]) == 0
        metrics = json.loads((evald / "metrics.json").read_text())
        assert 0.0 <= metrics["auprc"] <= 1.0
        assert (evald / "pr_curve.csv").exists()
        assert (evald / "slice_z_2.0.csv").exists()


class TestExitCodes:
    def test_config_error_is_2(self, tmp_path):
        bad = tmp_path / "bad.json"
        bad.write_text(json.dumps({"budget": 0}))
        assert main(["plan", "--config", str(bad),
                     "--out", str(tmp_path / "o")]) == 2

    def test_unknown_key_is_2(self, tmp_path):
        bad = tmp_path / "bad2.json"
        bad.write_text(json.dumps({"scenario": {"nope": 1}}))
        assert main(["campaign", "--config", str(bad),
                     "--out", str(tmp_path / "o")]) == 2

    def test_unparseable_json_is_2(self, tmp_path):
        bad = tmp_path / "bad3.json"
        bad.write_text("{not json")
        assert main(["plan", "--config", str(bad),
                     "--out", str(tmp_path / "o")]) == 2

    def test_numerical_failure_is_3(self, tmp_path, run_config):
        # corrupt posterior snapshot: NaN weights
        grid = hm.HingeGrid(hinges=np.zeros((2, 3)), gamma=1.0)
        post = hm.init_posterior(2, 1.0)
        snap = tmp_path / "posterior.json"
        hm.save_posterior(snap, grid, post)
        payload = json.loads(snap.read_text())
        payload["mu"][0] = float("nan")
        snap.write_text(json.dumps(payload))
        assert main(["eval", "--config", str(run_config),
                     "--posterior", str(snap),
                     "--out", str(tmp_path / "o")]) == 3

    def test_slice_spec_error_is_2(self, tmp_path, run_config):
        trial = tmp_path / "trial"
        assert main(["plan", "--config", str(run_config),
                     "--out", str(trial)]) == 0
        assert main(["eval", "--config", str(run_config),
                     "--posterior", str(trial / "posterior.json"),
                     "--out", str(tmp_path / "e"),
                     "--slice", "zz"]) == 2
