"""
Hierarchical Neyman-Pearson classification toolkit.

Fits multi-class classifiers whose under-classification errors for the
prioritized classes are bounded with high probability, runs Monte Carlo
comparisons against baseline methods and featurizes gene-by-cell-type
expression matrices.
"""

__version__ = "0.1.0"

from .analysis.hnp_core import ControlSpec, HnpClassifier, SplitPlan, fit_hnp
from .analysis.scoring import LabeledDataset
from .analysis.simlab import MonteCarloConfig, SimulationSetting, estimate_errors, run_monte_carlo
from .utilities.errors import HnpError

__all__ = [
    "ControlSpec",
    "HnpClassifier",
    "HnpError",
    "LabeledDataset",
    "MonteCarloConfig",
    "SimulationSetting",
    "SplitPlan",
    "estimate_errors",
    "fit_hnp",
    "run_monte_carlo",
]
