"""
Main entry point for the H-NP toolkit
Orchestrates simulations, fits, predictions, evaluations, sweeps and featurization
"""

import argparse
import json
import logging
import sys
from dataclasses import dataclass, field, asdict
from pathlib import Path
from typing import Dict, Any, List, Optional, Sequence, Tuple

import numpy as np

from .analysis.baselines import ClassicalClassifier, RocClassifier
from .analysis.hnp_core import ControlSpec, HnpClassifier, SplitPlan, fit_hnp
from .analysis.scoring import LabeledDataset
from .analysis.simlab import METHODS, MonteCarloConfig, SimulationSetting, estimate_errors, run_monte_carlo, threshold_sweep
from .data_collection.dataset_io import load_cohort, load_dataset_csv, save_dataset_csv, save_labels
from .data_collection.featurize import featurize, select_cell_types
from .reporting.report_exporter import ReportExporter, emit_report, load_report
from .reporting.report_formatter import format_summary
from .utilities.config import (
    FEATURIZE_CONFIG,
    HNP_DEFAULTS,
    MONTE_CARLO_CONFIG,
    OUTPUT_CONFIG,
    create_directories,
    get_config,
    load_config_file,
    merge_run_config,
    setup_logging,
)
from .utilities.errors import ConfigError, HnpError, InvalidArgumentError
from .utilities.tail_math import scaled_c

logger = logging.getLogger(__name__)

TASKS = ("simulate", "fit", "predict", "evaluate", "sweep", "featurize")

DEFAULT_OUTPUTS = {
    "simulate": "simulate.json",
    "fit": "model.json",
    "predict": "labels.csv",
    "evaluate": "evaluation.json",
    "sweep": "sweep.json",
    "featurize": "features.csv",
}


def _float_list(value: Any, name: str) -> Optional[List[float]]:
    if value is None:
        return None
    items = value if isinstance(value, (list, tuple)) else str(value).split(",")
    try:
        return [float(v) for v in items if str(v).strip() != ""]
    except ValueError:
        raise InvalidArgumentError(f"{name} must be a comma-separated list of numbers, got {value!r}")


def _name_list(value: Any) -> Optional[List[str]]:
    if value is None:
        return None
    items = value if isinstance(value, (list, tuple)) else str(value).split(",")
    return [str(v).strip() for v in items if str(v).strip()]


@dataclass
class RunConfig:
    """Validated run settings; key names match the command-line flags."""
    task: str
    setting: str = "T1.1"
    data: Optional[str] = None
    manifest: Optional[str] = None
    model: Optional[str] = None
    alpha: List[float] = field(default_factory=lambda: [HNP_DEFAULTS["alpha"]])
    delta: List[float] = field(default_factory=lambda: [HNP_DEFAULTS["delta"]])
    split: Optional[str] = None
    base: str = HNP_DEFAULTS["base"]
    methods: List[str] = field(default_factory=lambda: list(MONTE_CARLO_CONFIG["methods"]))
    reps: Optional[int] = None
    seed: Optional[int] = None
    threads: int = MONTE_CARLO_CONFIG["threads"]
    out: Optional[str] = None
    grid: str = HNP_DEFAULTS["grid"]
    ranks: int = MONTE_CARLO_CONFIG["sweep_ranks"]
    method: str = "M4"
    n_features: int = FEATURIZE_CONFIG["n_features"]
    zero_threshold: float = FEATURIZE_CONFIG["zero_threshold"]
    charts: bool = False

    @classmethod
    def from_mapping(cls, values: Dict[str, Any]) -> "RunConfig":
        """Normalize merged file and flag values, applying defaults for anything unset."""
        values = {k: v for k, v in values.items() if v is not None}
        task = values.get("task")
        if task not in TASKS:
            raise ConfigError(f"task must be one of {list(TASKS)}, got {task!r}")
        if "alpha" in values:
            values["alpha"] = _float_list(values["alpha"], "alpha")
        if "delta" in values:
            values["delta"] = _float_list(values["delta"], "delta")
        if "methods" in values:
            values["methods"] = _name_list(values["methods"])
        config = cls(**values)
        config.validate()
        return config

    def validate(self):
        if self.task in ("simulate", "sweep"):
            if self.seed is None:
                raise InvalidArgumentError(f"{self.task} requires --seed")
            if self.reps is None:
                raise InvalidArgumentError(f"{self.task} requires --reps")
            if int(self.reps) < 1:
                raise InvalidArgumentError(f"reps must be at least 1, got {self.reps}")
        if self.task in ("fit", "predict", "evaluate") and not self.data:
            raise InvalidArgumentError(f"{self.task} requires --data")
        if self.task in ("predict", "evaluate") and not self.model:
            raise InvalidArgumentError(f"{self.task} requires --model")
        if self.task == "featurize" and not self.manifest:
            raise InvalidArgumentError("featurize requires --manifest")
        if self.base not in ("logistic", "gaussian", "oracle"):
            raise InvalidArgumentError(f"unknown base classifier {self.base!r}")
        if self.base == "oracle" and self.task not in ("simulate", "sweep"):
            raise InvalidArgumentError("the oracle base classifier is only available for simulations")
        if self.grid not in ("scores", "none"):
            raise InvalidArgumentError(f"grid must be 'scores' or 'none', got {self.grid!r}")
        unknown = [m for m in self.methods if m not in METHODS]
        if unknown:
            raise InvalidArgumentError(f"unknown methods {unknown}; choose from {list(METHODS)}")
        if self.threads < 1:
            raise InvalidArgumentError(f"threads must be at least 1, got {self.threads}")

    def spec_for(self, num_classes: int) -> ControlSpec:
        return ControlSpec.from_lists(self.alpha, self.delta, num_classes)

    def output_path(self) -> str:
        return self.out or str(Path(OUTPUT_CONFIG["reports_dir"]) / DEFAULT_OUTPUTS[self.task])

    def echo(self) -> Dict[str, Any]:
        return asdict(self)


def load_classifier(path: str):
    """Classifier from a fit report (or a bare classifier document)."""
    document = load_report(path)
    data = document.get("classifier", document)
    kind = data.get("type", "hnp")
    if kind == "hnp":
        return HnpClassifier.from_dict(data)
    if kind == "roc":
        return RocClassifier.from_dict(data)
    if kind == "classical":
        return ClassicalClassifier.from_dict(data)
    raise InvalidArgumentError(f"unknown classifier type {kind!r}", path=path)


class HnpOrchestrator:
    """
    Runs one task of the toolkit and emits its report.
    """

    def __init__(self, config: RunConfig):
        self.config = config
        self.settings = get_config()
        create_directories()
        logger.info(f"H-NP orchestrator initialized for task {config.task}")

    def run(self) -> Tuple[str, Dict[str, Any]]:
        """
        Execute the configured task.

        Returns:
            (output path, report document)
        """
        handler = getattr(self, f"_run_{self.config.task}")
        return handler()

    def _monte_carlo_config(self) -> MonteCarloConfig:
        c = self.config
        setting = SimulationSetting.preset(c.setting)
        return MonteCarloConfig(
            setting=setting,
            spec=c.spec_for(setting.num_classes),
            reps=int(c.reps),
            master_seed=int(c.seed),
            plan=SplitPlan.parse(c.split) if c.split else None,
            base=c.base,
            methods=tuple(c.methods),
            threads=int(c.threads),
            grid=c.grid,
        )

    def _charts(self, document: Dict[str, Any], prefix: str):
        if self.config.charts:
            if self.config.out:
                charts_dir = Path(self.config.out).parent / "charts"
            else:
                charts_dir = Path(self.settings["output"]["charts_dir"])
            ReportExporter(str(charts_dir)).create_error_charts(document, prefix)

    def _run_simulate(self):
        summary = run_monte_carlo(self._monte_carlo_config())
        out = self.config.output_path()
        document = emit_report("simulate", summary, out)
        self._charts(document, f"simulate_{self.config.setting}")
        return out, document

    def _run_sweep(self):
        result = threshold_sweep(self._monte_carlo_config(), int(self.config.ranks))
        out = self.config.output_path()
        document = emit_report("sweep", result, out)
        self._charts(document, f"sweep_{self.config.setting}")
        return out, document

    def _run_fit(self):
        c = self.config
        data = load_dataset_csv(c.data)
        spec = c.spec_for(data.num_classes)
        plan = SplitPlan.parse(c.split) if c.split else SplitPlan.default(data.num_classes)
        seed = self.settings["hnp"]["seed"] if c.seed is None else int(c.seed)
        classifier = fit_hnp(data, plan, spec, seed, base=c.base, grid=c.grid,
                             c_fn=scaled_c(self.settings["hnp"]["c_scale"]))
        payload = {
            "config": c.echo(),
            "seed": seed,
            "split": plan.to_flag(),
            "class_counts": data.class_counts().tolist(),
            "classifier": classifier.to_dict(),
        }
        out = c.output_path()
        return out, emit_report("fit", payload, out)

    def _run_predict(self):
        classifier = load_classifier(self.config.model)
        data = load_dataset_csv(self.config.data)
        labels = classifier.predict(data.features)
        out = self.config.output_path()
        save_labels(labels, out)
        counts = np.bincount(labels, minlength=classifier.num_classes + 1)[1:]
        return out, {"report_type": "predict", "rows": len(labels), "label_counts": counts.tolist()}

    def _run_evaluate(self):
        classifier = load_classifier(self.config.model)
        data = load_dataset_csv(self.config.data)
        if data.num_classes > classifier.num_classes:
            raise InvalidArgumentError(
                f"data has labels up to {data.num_classes}, model has {classifier.num_classes} classes")
        test = LabeledDataset(data.features, data.labels, classifier.num_classes)
        report = estimate_errors(classifier, test)
        payload = {"config": self.config.echo(), "errors": report.to_dict()}
        out = self.config.output_path()
        return out, emit_report("evaluate", payload, out)

    def _run_featurize(self):
        c = self.config
        cohort = load_cohort(c.manifest)
        kept = None if c.method.upper() == "M1" else select_cell_types(cohort, c.zero_threshold)
        features = featurize(cohort, c.method, n_features=int(c.n_features), kept=kept)
        out = c.output_path()
        save_dataset_csv(features.to_dataset(), out)
        payload = {
            "config": c.echo(),
            "method": features.method,
            "patients": len(cohort),
            "dimension": features.dim,
            "dataset": out,
            "patient_ids": list(features.patient_ids),
            "provenance": features.provenance_dict(),
            "warnings": list(features.warnings),
        }
        report_path = str(Path(out).with_suffix(".json"))
        return out, emit_report("featurize", payload, report_path)


def build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(description="Hierarchical Neyman-Pearson classification toolkit")
    common = argparse.ArgumentParser(add_help=False)
    common.add_argument("--config", help="JSON run configuration; flags override its values")
    common.add_argument("--setting", help="Simulation preset: T1.1, T2.1 or T3.1")
    common.add_argument("--data", help="Dataset CSV with header y,x1,...,xd")
    common.add_argument("--manifest", help="Cohort manifest CSV (patient_id,label,path)")
    common.add_argument("--model", help="Fitted model JSON written by fit")
    common.add_argument("--alpha", help="Control levels alpha_1,...,alpha_{I-1} (one value is broadcast)")
    common.add_argument("--delta", help="Violation tolerances delta_1,...,delta_{I-1}")
    common.add_argument("--split", help='Per-class split plan, e.g. "50/50,45/50/5,95/5"')
    common.add_argument("--base", choices=["logistic", "gaussian", "oracle"], help="Base classifier")
    common.add_argument("--methods", help=f"Comma-separated subset of {','.join(METHODS)}")
    common.add_argument("--reps", type=int, help="Monte Carlo repetitions")
    common.add_argument("--seed", type=int, help="Master seed")
    common.add_argument("--threads", type=int, help="Parallel reps")
    common.add_argument("--out", help="Output path")
    common.add_argument("--grid", choices=["scores", "none"], help="Threshold grid policy")
    common.add_argument("--ranks", type=int, help="Number of t_1 ranks in a sweep")
    common.add_argument("--method", choices=["M1", "M2", "M3", "M4"], help="Featurization scheme")
    common.add_argument("--n-features", dest="n_features", type=int, help="Entries kept by M1")
    common.add_argument("--zero-threshold", dest="zero_threshold", type=float,
                        help="Drop cell types with a larger share of zeros")
    common.add_argument("--charts", action="store_true", default=None, help="Write box plots of per-rep errors")
    common.add_argument("--log-level", dest="log_level", help="Log level (overrides HNP_LOG)")

    subparsers = parser.add_subparsers(dest="task", required=True)
    for task in TASKS:
        subparsers.add_parser(task, parents=[common], help=f"{task} task")
    return parser


def run(values: Dict[str, Any]) -> int:
    """
    Run one task from merged settings and report the outcome.

    Returns:
        0 on success, the error's exit status otherwise; errors are printed as a JSON object
    """
    try:
        config = RunConfig.from_mapping(values)
        out, document = HnpOrchestrator(config).run()
        print(format_summary(document))
        print(f"Output written to: {out}")
        return 0
    except HnpError as e:
        logger.error(f"{e.code}: {e.message}")
        print(json.dumps({"error": e.to_dict()}, default=str))
        return e.exit_status
    except Exception as e:
        logger.exception(f"Unexpected failure: {e}")
        print(json.dumps({"error": {"code": "INTERNAL_ERROR", "message": str(e)}}))
        return 1


def main(argv: Optional[Sequence[str]] = None) -> int:
    """Main function with command-line interface."""
    args = vars(build_parser().parse_args(argv))
    try:
        setup_logging(args.pop("log_level", None))
        config_path = args.pop("config", None)
        file_values = load_config_file(config_path) if config_path else {}
    except HnpError as e:
        print(json.dumps({"error": e.to_dict()}, default=str))
        return e.exit_status
    return run(merge_run_config(file_values, args))


if __name__ == "__main__":
    sys.exit(main())
