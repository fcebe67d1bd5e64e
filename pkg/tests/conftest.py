"""
Shared fixtures for the H-NP test suite.
"""

import logging

import numpy as np
import pytest

from hnp_umbrella.analysis.scoring import LOGISTIC, LabeledDataset, ScoreModel
from hnp_umbrella.analysis.simlab import SimulationSetting
from hnp_umbrella.utilities.config import SIMULATION_SETTINGS


def pytest_addoption(parser):
    parser.addoption("--runslow", action="store_true", default=False,
                     help="run the long Monte Carlo acceptance checks")


def pytest_collection_modifyitems(config, items):
    if config.getoption("--runslow"):
        return
    skip_slow = pytest.mark.skip(reason="needs --runslow")
    for item in items:
        if "slow" in item.keywords:
            item.add_marker(skip_slow)


@pytest.fixture(autouse=True)
def quiet_logging(caplog):
    caplog.set_level(logging.WARNING)


@pytest.fixture(autouse=True)
def isolated_cwd(tmp_path, monkeypatch):
    """Default report and log directories land in the test's temporary directory."""
    monkeypatch.chdir(tmp_path)


def make_posterior_model(num_classes: int) -> ScoreModel:
    """Logistic model whose posterior at x = log(p) is exactly p."""
    params = {"weights": np.eye(num_classes), "bias": np.zeros(num_classes)}
    return ScoreModel(LOGISTIC, num_classes, num_classes, params)


def as_features(posteriors) -> np.ndarray:
    return np.log(np.atleast_2d(np.asarray(posteriors, dtype=float)))


@pytest.fixture
def posterior_model():
    return make_posterior_model


@pytest.fixture
def small_setting():
    """T1.1 means with 200 observations per class and 2000 per class for testing."""
    return SimulationSetting("custom", SIMULATION_SETTINGS["T1.1"]["means"], [200, 200, 200],
                             [2000, 2000, 2000])


@pytest.fixture
def toy_dataset():
    rng = np.random.default_rng(5)
    means = np.array([[0.0, -1.0], [-1.0, 1.0], [1.0, 0.0]])
    labels = np.repeat([1, 2, 3], 120)
    features = means[labels - 1] + rng.standard_normal((len(labels), 2))
    return LabeledDataset(features, labels, 3)
