"""
Configuration settings for the H-NP classification toolkit.
"""

import os
import json
import logging
from pathlib import Path
from typing import Dict, Any, Optional

from dotenv import load_dotenv

from .errors import ConfigError

load_dotenv()

REPORT_SCHEMA_VERSION = "1.0"

# Umbrella algorithm defaults
HNP_DEFAULTS = {
    "alpha": 0.05,
    "delta": 0.05,
    "c_scale": 2.0,  # c(n) = c_scale / sqrt(n)
    "score_clamp": 1e-12,
    "grid": "scores",  # "scores" uses T_i over S_it, "none" uses the upper bounds only
    "score_kind": "normalized",
    "base": "logistic",
    "seed": 0,
    "boundary_rtol": 1e-12,  # relative slack when a tail value is compared against delta
}

# Multinomial logistic regression (full-batch gradient descent, zero init)
LOGISTIC_CONFIG = {
    "learning_rate": 0.1,
    "max_iters": 5000,
    "l2_penalty": 1e-4,
    "tolerance": 1e-8,
    "standardize": True,
}

GAUSSIAN_CONFIG = {
    "covariance": "shared",
    "ridge": 1e-6,
}

# Simulation presets: class means, training sizes, test sizes and default split plans
SIMULATION_SETTINGS = {
    "T1.1": {
        "means": [[0.0, -1.0], [-1.0, 1.0], [1.0, 0.0]],
        "class_sizes": [500, 500, 500],
        "test_sizes": [20000, 20000, 20000],
        "split": "50/50,45/50/5,95/5",
    },
    "T2.1": {
        "means": [[0.0, -3.0], [-1.0, 1.0], [1.0, 0.0]],
        "class_sizes": [500, 500, 500],
        "test_sizes": [20000, 20000, 20000],
        "split": "50/50,45/50/5,95/5",
    },
    "T3.1": {
        "means": [[0.0, 0.0], [-0.5, 0.5], [2.0, 2.0]],
        "class_sizes": [1000, 200, 800],
        "test_sizes": [30000, 6000, 24000],
        "split": "50/50,45/50/5,95/5",
    },
}

# Comparison protocol for the empirical ROC approach
ROC_CONFIG = {
    "score_fraction": 0.5,
}

MONTE_CARLO_CONFIG = {
    "methods": ["hnp"],
    "threads": 1,
    "sweep_ranks": 10,
}

FEATURIZE_CONFIG = {
    "n_features": 3000,
    "zero_threshold": 0.95,
    "pc_tolerance": 1e-10,
    "pc_max_iters": 10000,
    "pc_seed": 0,
}

OUTPUT_CONFIG = {
    "reports_dir": "reports",
    "charts_dir": "reports/charts",
    "log_dir": "logs",
}

REPORT_CONFIG = {
    "indent": 2,
    "chart_dpi": 150,
}

LOGGING_CONFIG = {
    "level": os.getenv("HNP_LOG", "INFO"),
    "format": "%(asctime)s %(levelname)s %(name)s %(message)s",
    "file": os.getenv("HNP_LOG_FILE"),
}

# Keys accepted in a run configuration file; identical to the CLI flag names
RUN_CONFIG_KEYS = (
    "task", "setting", "data", "manifest", "model", "alpha", "delta", "split",
    "base", "methods", "reps", "seed", "threads", "out", "grid", "ranks",
    "method", "n_features", "zero_threshold", "charts",
)


def get_config() -> Dict[str, Any]:
    """Get complete configuration dictionary."""
    return {
        "hnp": HNP_DEFAULTS,
        "logistic": LOGISTIC_CONFIG,
        "gaussian": GAUSSIAN_CONFIG,
        "settings": SIMULATION_SETTINGS,
        "roc": ROC_CONFIG,
        "monte_carlo": MONTE_CARLO_CONFIG,
        "featurize": FEATURIZE_CONFIG,
        "output": OUTPUT_CONFIG,
        "report": REPORT_CONFIG,
        "logging": LOGGING_CONFIG,
    }


def setup_logging(level: Optional[str] = None):
    """Configure root logging once for command-line use."""
    level_name = (level or os.getenv("HNP_LOG") or LOGGING_CONFIG["level"]).upper()
    numeric_level = getattr(logging, level_name, None)
    if not isinstance(numeric_level, int):
        raise ConfigError(f"Unknown log level: {level_name}", level=level_name)

    handlers = [logging.StreamHandler()]
    log_file = LOGGING_CONFIG["file"] or os.getenv("HNP_LOG_FILE")
    if log_file:
        Path(log_file).parent.mkdir(parents=True, exist_ok=True)
        handlers.append(logging.FileHandler(log_file))

    logging.basicConfig(
        level=numeric_level,
        format=LOGGING_CONFIG["format"],
        handlers=handlers,
        force=True,
    )


def create_directories(base_dir: str = "."):
    """Create the output directories for reports, charts and logs."""
    for key in ("reports_dir", "charts_dir", "log_dir"):
        os.makedirs(os.path.join(base_dir, OUTPUT_CONFIG[key]), exist_ok=True)


def load_config_file(path: str) -> Dict[str, Any]:
    """
    Load a JSON run configuration file.

    Args:
        path: Path to a JSON object whose keys match the CLI flag names

    Returns:
        Dictionary of run settings
    """
    try:
        with open(path, 'r') as f:
            data = json.load(f)
    except FileNotFoundError:
        raise ConfigError(f"Config file not found: {path}", path=str(path))
    except json.JSONDecodeError as e:
        raise ConfigError(f"Config file is not valid JSON: {e}", path=str(path))

    if not isinstance(data, dict):
        raise ConfigError("Config file must contain a JSON object", path=str(path))

    unknown = sorted(set(data) - set(RUN_CONFIG_KEYS))
    if unknown:
        raise ConfigError(f"Unknown config keys: {', '.join(unknown)}", path=str(path))
    return data


def merge_run_config(file_values: Dict[str, Any], flag_values: Dict[str, Any]) -> Dict[str, Any]:
    """Flags override file values; unset flags (None) fall through."""
    merged = dict(file_values)
    for key, value in flag_values.items():
        if value is not None:
            merged[key] = value
    return merged
