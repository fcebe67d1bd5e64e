import json

import numpy as np
import pandas as pd
import pytest

from hnp_umbrella.analysis.simlab import generate_setting
from hnp_umbrella.data_collection.dataset_io import load_dataset_csv, save_cohort, save_dataset_csv
from hnp_umbrella.data_collection.featurize import make_synthetic_cohort
from hnp_umbrella.main import HnpOrchestrator, RunConfig, load_classifier, main, run
from hnp_umbrella.reporting.report_exporter import load_report
from hnp_umbrella.utilities.errors import ConfigError, InvalidArgumentError


def error_output(capsys):
    lines = [line for line in capsys.readouterr().out.splitlines() if line.startswith("{")]
    return json.loads(lines[-1])["error"]


@pytest.fixture
def train_csv(tmp_path, small_setting):
    train, test = generate_setting(small_setting, seed=21)
    save_dataset_csv(train, tmp_path / "train.csv")
    save_dataset_csv(test.subset(np.arange(0, len(test), 5)), tmp_path / "test.csv")
    return tmp_path


class TestRunConfig:
    def test_lists_are_parsed(self):
        config = RunConfig.from_mapping({"task": "fit", "data": "d.csv", "alpha": "0.05,0.1", "delta": 0.2})
        assert config.alpha == [0.05, 0.1]
        assert config.spec_for(3).deltas == (0.2, 0.2)

    def test_unknown_task(self):
        with pytest.raises(ConfigError):
            RunConfig.from_mapping({"task": "train"})

    def test_oracle_only_for_simulations(self):
        with pytest.raises(InvalidArgumentError):
            RunConfig.from_mapping({"task": "fit", "data": "d.csv", "base": "oracle"})

    def test_default_output_paths(self):
        config = RunConfig.from_mapping({"task": "sweep", "seed": 1, "reps": 2})
        assert config.output_path().endswith("sweep.json")


class TestCommandLine:
    def test_simulate_requires_seed(self, capsys):
        assert main(["simulate", "--reps", "2"]) == 2
        error = error_output(capsys)
        assert error["code"] == "INVALID_ARGUMENT"
        assert "--seed" in error["message"]

    def test_zero_reps(self, capsys):
        assert main(["simulate", "--reps", "0", "--seed", "1"]) == 2
        assert error_output(capsys)["code"] == "INVALID_ARGUMENT"

    def test_fit_predict_evaluate(self, train_csv, capsys):
        model = train_csv / "model.json"
        assert main(["fit", "--data", str(train_csv / "train.csv"), "--alpha", "0.1", "--delta", "0.1",
                     "--seed", "4", "--out", str(model)]) == 0
        report = load_report(model)
        assert report["report_type"] == "fit"
        assert report["class_counts"] == [200, 200, 200]
        assert len(report["classifier"]["thresholds"]) == 2

        labels = train_csv / "labels.csv"
        assert main(["predict", "--data", str(train_csv / "test.csv"), "--model", str(model),
                     "--out", str(labels)]) == 0
        predicted = pd.read_csv(labels)["label"].to_numpy()
        test = load_dataset_csv(train_csv / "test.csv")
        assert np.array_equal(predicted, load_classifier(model).predict(test.features))

        evaluation = train_csv / "evaluation.json"
        assert main(["evaluate", "--data", str(train_csv / "test.csv"), "--model", str(model),
                     "--out", str(evaluation)]) == 0
        errors = load_report(evaluation)["errors"]
        assert 0.0 <= errors["error1"] <= 1.0
        assert "Output written to:" in capsys.readouterr().out

    def test_refit_is_byte_identical(self, train_csv):
        out = train_csv / "model.json"
        args = ["fit", "--data", str(train_csv / "train.csv"), "--alpha", "0.1", "--delta", "0.1", "--seed", "4",
                "--out", str(out)]
        assert main(args) == 0
        first = out.read_bytes()
        assert main(args) == 0
        assert out.read_bytes() == first

    def test_infeasible_split(self, train_csv, capsys):
        status = main(["fit", "--data", str(train_csv / "train.csv"), "--alpha", "0.01", "--delta", "0.01",
                       "--out", str(train_csv / "model.json")])
        assert status == 4
        error = error_output(capsys)
        assert error["code"] == "INFEASIBLE_SPLIT"
        assert error["class_label"] == 1

    def test_unparseable_dataset(self, tmp_path, capsys):
        bad = tmp_path / "bad.csv"
        bad.write_text("y,x1\n1,0.5\n2,oops\n", encoding="utf-8")
        assert main(["fit", "--data", str(bad), "--out", str(tmp_path / "m.json")]) == 5
        error = error_output(capsys)
        assert error["code"] == "PARSE_ERROR"
        assert error["line"] == 3

    def test_missing_model(self, train_csv, capsys):
        assert main(["predict", "--data", str(train_csv / "test.csv"), "--model",
                     str(train_csv / "absent.json")]) == 6
        assert error_output(capsys)["code"] == "IO_ERROR"

    def test_featurize(self, tmp_path):
        manifest = save_cohort(make_synthetic_cohort(n_patients=12, n_genes=20, n_cell_types=4, seed=2),
                               tmp_path / "cohort")
        out = tmp_path / "features.csv"
        assert main(["featurize", "--manifest", manifest, "--method", "M4", "--out", str(out)]) == 0
        data = load_dataset_csv(out)
        assert data.features.shape == (12, 20)
        report = load_report(tmp_path / "features.json")
        assert report["method"] == "M4"
        assert report["provenance"]["cell_types"] == ["c1", "c2", "c3"]

    def test_small_simulation(self, tmp_path):
        out = tmp_path / "sim.json"
        assert main(["simulate", "--setting", "T1.1", "--reps", "1", "--seed", "3",
                     "--methods", "hnp,classical", "--out", str(out)]) == 0
        document = load_report(out)
        assert document["report_type"] == "simulate"
        assert document["reps_used"] == 1
        assert set(document["summary"]) == {"hnp", "classical"}


class TestConfigFile:
    def test_flags_override_file(self, tmp_path, train_csv):
        config = tmp_path / "run.json"
        config.write_text(json.dumps({"task": "fit", "data": str(train_csv / "train.csv"), "alpha": 0.5,
                                      "delta": 0.1, "seed": 4}), encoding="utf-8")
        out = tmp_path / "model.json"
        assert main(["fit", "--config", str(config), "--alpha", "0.1", "--out", str(out)]) == 0
        assert load_report(out)["config"]["alpha"] == [0.1]

    def test_unknown_key(self, tmp_path, capsys):
        config = tmp_path / "run.json"
        config.write_text(json.dumps({"task": "fit", "learning_rate": 0.1}), encoding="utf-8")
        assert main(["fit", "--config", str(config)]) == 2
        assert error_output(capsys)["code"] == "CONFIG_ERROR"

    def test_run_reports_errors_as_json(self, capsys):
        assert run({"task": "evaluate", "data": "d.csv"}) == 2
        assert "--model" in error_output(capsys)["message"]


class TestOrchestrator:
    def test_creates_output_directories(self, tmp_path):
        HnpOrchestrator(RunConfig.from_mapping({"task": "sweep", "seed": 1, "reps": 1}))
        for name in ("reports", "reports/charts", "logs"):
            assert (tmp_path / name).is_dir()

    def test_fit_seed_defaults_from_settings(self, train_csv, monkeypatch):
        orchestrator = HnpOrchestrator(RunConfig.from_mapping(
            {"task": "fit", "data": str(train_csv / "train.csv"), "alpha": 0.1, "delta": 0.1,
             "out": str(train_csv / "model.json")}))
        monkeypatch.setitem(orchestrator.settings["hnp"], "seed", 4)
        _, document = orchestrator.run()
        assert document["seed"] == 4
