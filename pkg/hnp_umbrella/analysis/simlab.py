"""
Monte Carlo simulation lab.

Gaussian mixture settings, error estimation on large test sets, repeated fits with
per-rep random substreams, and the sweep over the rank of t_1.
"""

import functools
import logging
import math
from dataclasses import dataclass, field
from typing import Dict, Any, List, Optional, Sequence, Tuple

import numpy as np
from joblib import Parallel, delayed

from ..utilities.config import HNP_DEFAULTS, MONTE_CARLO_CONFIG, SIMULATION_SETTINGS
from ..utilities.errors import HnpError, InvalidArgumentError
from ..utilities.rng import SPLIT_STREAM, ROC_SPLIT_STREAM, TEST_STREAM, TRAIN_STREAM, rep_stream, substream
from ..utilities.tail_math import scaled_c
from .baselines import ClassicalClassifier, fit_roc_classifier, split_for_roc
from .hnp_core import (
    ControlSpec,
    HnpClassifier,
    SplitPlan,
    class_upper_bound,
    fit_general,
    score_splits,
    sequential_thresholds,
    split_dataset,
)
from .scoring import LabeledDataset, fit_score_model

logger = logging.getLogger(__name__)

METHODS = ("hnp", "hnp_basic", "roc", "classical")

# Named error fields of the three-class report
THREE_CLASS_FIELDS = ("error1", "error23", "error21", "error31", "error32")


@dataclass(frozen=True)
class SimulationSetting:
    """Gaussian mixture with identity covariance; class i ~ N(mu_i, I)."""
    id: str
    means: Tuple[Tuple[float, ...], ...]
    class_sizes: Tuple[int, ...]
    test_sizes: Tuple[int, ...]
    split: Optional[str] = None

    def __post_init__(self):
        means = tuple(tuple(float(v) for v in m) for m in self.means)
        if len(means) < 2:
            raise InvalidArgumentError("a setting needs at least two classes")
        if len({len(m) for m in means}) != 1 or len(means[0]) == 0:
            raise InvalidArgumentError("all class means must share a positive dimension")
        for name, sizes in (("class_sizes", self.class_sizes), ("test_sizes", self.test_sizes)):
            if len(sizes) != len(means):
                raise InvalidArgumentError(f"{name} needs one entry per class")
            if any(int(s) <= 0 for s in sizes):
                raise InvalidArgumentError(f"{name} must be positive, got {list(sizes)}")
        object.__setattr__(self, "means", means)
        object.__setattr__(self, "class_sizes", tuple(int(s) for s in self.class_sizes))
        object.__setattr__(self, "test_sizes", tuple(int(s) for s in self.test_sizes))

    @property
    def num_classes(self) -> int:
        return len(self.means)

    @property
    def dim(self) -> int:
        return len(self.means[0])

    @property
    def priors(self) -> np.ndarray:
        sizes = np.asarray(self.class_sizes, dtype=float)
        return sizes / sizes.sum()

    def split_plan(self) -> SplitPlan:
        return SplitPlan.parse(self.split) if self.split else SplitPlan.default(self.num_classes)

    def oracle_params(self) -> Dict[str, Any]:
        return {"means": [list(m) for m in self.means], "priors": self.priors.tolist()}

    @classmethod
    def preset(cls, name: str) -> "SimulationSetting":
        if name not in SIMULATION_SETTINGS:
            raise InvalidArgumentError(f"unknown setting {name!r}; choose from {sorted(SIMULATION_SETTINGS)}")
        preset = SIMULATION_SETTINGS[name]
        return cls(name, preset["means"], preset["class_sizes"], preset["test_sizes"], preset.get("split"))

    def to_dict(self) -> Dict[str, Any]:
        return {
            "id": self.id,
            "means": [list(m) for m in self.means],
            "class_sizes": list(self.class_sizes),
            "test_sizes": list(self.test_sizes),
            "split": self.split,
        }


def make_random_mean_setting(num_classes: int, dim: int, scale: float = 1.0, size: int = 500,
                             seed: int = 0, test_size: int = 20000) -> SimulationSetting:
    """Custom setting whose class means are drawn N(0, scale^2) per coordinate."""
    if num_classes < 2 or dim < 1 or scale <= 0:
        raise InvalidArgumentError("need num_classes >= 2, dim >= 1 and a positive scale")
    rng = substream(seed, num_classes, dim)
    means = scale * rng.standard_normal((num_classes, dim))
    return SimulationSetting("custom", means.tolist(), [size] * num_classes, [test_size] * num_classes)


def _draw(setting: SimulationSetting, sizes: Sequence[int], rng: np.random.Generator) -> LabeledDataset:
    features = np.vstack([np.asarray(mean) + rng.standard_normal((n, setting.dim))
                          for mean, n in zip(setting.means, sizes)])
    labels = np.repeat(np.arange(1, setting.num_classes + 1), sizes)
    return LabeledDataset(features, labels, setting.num_classes)


def generate_setting(setting: SimulationSetting, seed: int, rep: int = 0) -> Tuple[LabeledDataset, LabeledDataset]:
    """
    Draw a training sample of class_sizes and a test sample of test_sizes.

    Args:
        setting: Mixture definition
        seed: Master seed
        rep: Rep index; training and test draws use separate substreams of (seed, rep)
    """
    train = _draw(setting, setting.class_sizes, rep_stream(seed, rep, TRAIN_STREAM))
    test = _draw(setting, setting.test_sizes, rep_stream(seed, rep, TEST_STREAM))
    return train, test


@dataclass(frozen=True)
class ErrorReport:
    """
    Conditional error rates of one classifier on a test set.

    confusion[i - 1, j - 1] = P_i(Y-hat = j). under_classification[i - 1] = P_i(Y-hat > i).
    remaining_risk = sum_{i>=2} pi_i P_i(Y-hat < i) with pi from the test class counts.
    """
    confusion: np.ndarray
    class_counts: Tuple[int, ...]
    under_classification: Tuple[float, ...]
    overall: float
    remaining_risk: float

    @property
    def num_classes(self) -> int:
        return len(self.class_counts)

    def _rate(self, true_label: int, predicted: int) -> float:
        if max(true_label, predicted) > self.num_classes:
            return math.nan
        return float(self.confusion[true_label - 1, predicted - 1])

    @property
    def error1(self) -> float:
        return self.under_classification[0]

    @property
    def error23(self) -> float:
        return self.under_classification[1] if self.num_classes > 2 else math.nan

    @property
    def error21(self) -> float:
        return self._rate(2, 1)

    @property
    def error31(self) -> float:
        return self._rate(3, 1)

    @property
    def error32(self) -> float:
        return self._rate(3, 2)

    def flat(self) -> Dict[str, float]:
        """Scalar errors keyed by name: the three-class names for I = 3, generic names otherwise."""
        if self.num_classes == 3:
            values = {name: getattr(self, name) for name in THREE_CLASS_FIELDS}
        else:
            values = {f"under_{i}": u for i, u in enumerate(self.under_classification, start=1)}
            for i in range(2, self.num_classes + 1):
                for j in range(1, i):
                    values[f"p_{i}_{j}"] = self._rate(i, j)
        values["overall"] = self.overall
        values["remaining_risk"] = self.remaining_risk
        return values

    def under_keys(self) -> List[str]:
        if self.num_classes == 3:
            return ["error1", "error23"]
        return [f"under_{i}" for i in range(1, self.num_classes)]

    def to_dict(self) -> Dict[str, Any]:
        payload = dict(self.flat())
        payload["under_classification"] = list(self.under_classification)
        payload["confusion"] = self.confusion.tolist()
        payload["class_counts"] = list(self.class_counts)
        return payload

    @classmethod
    def from_dict(cls, data: Dict[str, Any]) -> "ErrorReport":
        return cls(np.asarray(data["confusion"], dtype=float), tuple(data["class_counts"]),
                   tuple(data["under_classification"]), float(data["overall"]), float(data["remaining_risk"]))


def estimate_errors(classifier, test: LabeledDataset) -> ErrorReport:
    """
    Approximate population errors by test-set frequencies.

    Args:
        classifier: Any object with predict(X) and num_classes
        test: Test sample containing every class
    """
    counts = test.class_counts()
    missing = [i + 1 for i, c in enumerate(counts) if c == 0]
    if missing:
        raise InvalidArgumentError(f"test set lacks classes {missing}", classes=missing)

    predicted = np.asarray(classifier.predict(test.features))
    I = test.num_classes
    confusion = np.zeros((I, I))
    for i in range(1, I + 1):
        row = predicted[test.labels == i]
        confusion[i - 1] = np.bincount(row, minlength=I + 1)[1:] / len(row)

    under = tuple(float(confusion[i - 1, i:].sum()) for i in range(1, I))
    per_class_error = 1.0 - np.diag(confusion)
    priors = counts / counts.sum()
    overall = float(np.sum(priors * per_class_error))
    below = np.array([confusion[i - 1, :i - 1].sum() for i in range(2, I + 1)])
    remaining = float(np.sum(priors[1:] * below))
    return ErrorReport(confusion, tuple(int(c) for c in counts), under, overall, remaining)


def nearest_rank_quantile(values: Sequence[float], q: float) -> float:
    """The ceil(q * M)-th smallest of M values."""
    values = np.sort(np.asarray(values, dtype=float))
    if len(values) == 0:
        raise InvalidArgumentError("quantile of an empty sample")
    if not (0.0 < q <= 1.0):
        raise InvalidArgumentError(f"q must lie in (0, 1], got {q!r}")
    rank = max(1, int(math.ceil(q * len(values) - 1e-9)))
    return float(values[rank - 1])


@dataclass(frozen=True)
class MonteCarloConfig:
    setting: SimulationSetting
    spec: ControlSpec
    reps: int
    master_seed: int
    plan: Optional[SplitPlan] = None
    base: str = HNP_DEFAULTS["base"]
    methods: Tuple[str, ...] = tuple(MONTE_CARLO_CONFIG["methods"])
    threads: int = MONTE_CARLO_CONFIG["threads"]
    grid: str = HNP_DEFAULTS["grid"]
    c_scale: float = HNP_DEFAULTS["c_scale"]
    score_kind: str = HNP_DEFAULTS["score_kind"]
    model_config: Dict[str, Any] = field(default_factory=dict)

    def __post_init__(self):
        if isinstance(self.reps, bool) or int(self.reps) != self.reps or self.reps < 1:
            raise InvalidArgumentError(f"reps must be a positive integer, got {self.reps!r}")
        if self.master_seed is None or int(self.master_seed) < 0:
            raise InvalidArgumentError("a non-negative master seed is required")
        unknown = [m for m in self.methods if m not in METHODS]
        if unknown or not self.methods:
            raise InvalidArgumentError(f"unknown methods {unknown}; choose from {list(METHODS)}")
        if self.spec.num_classes != self.setting.num_classes:
            raise InvalidArgumentError(
                f"spec covers {self.spec.num_classes} classes, setting has {self.setting.num_classes}")
        if self.plan is None:
            object.__setattr__(self, "plan", self.setting.split_plan())
        object.__setattr__(self, "methods", tuple(self.methods))

    def to_dict(self) -> Dict[str, Any]:
        return {
            "setting": self.setting.to_dict(),
            "spec": self.spec.to_dict(),
            "split": self.plan.to_flag(),
            "reps": self.reps,
            "master_seed": self.master_seed,
            "base": self.base,
            "methods": list(self.methods),
            "grid": self.grid,
            "c_scale": self.c_scale,
            "score_kind": self.score_kind,
        }


@dataclass(frozen=True)
class RepResult:
    rep: int
    reports: Dict[str, ErrorReport]
    thresholds: Dict[str, Tuple[float, ...]]
    excluded: Optional[Dict[str, Any]] = None

    def to_dict(self) -> Dict[str, Any]:
        return {
            "rep": self.rep,
            "excluded": self.excluded,
            "thresholds": {m: list(t) for m, t in self.thresholds.items()},
            "errors": {m: r.to_dict() for m, r in self.reports.items()},
        }


@dataclass(frozen=True)
class MethodSummary:
    method: str
    reps: int
    means: Dict[str, float]
    quantiles: Dict[str, float]
    violation_rates: Dict[str, float]

    def to_dict(self) -> Dict[str, Any]:
        return {
            "method": self.method,
            "reps": self.reps,
            "means": self.means,
            "quantiles": self.quantiles,
            "violation_rates": self.violation_rates,
        }


@dataclass(frozen=True)
class MonteCarloSummary:
    config: MonteCarloConfig
    results: Tuple[RepResult, ...]
    methods: Dict[str, MethodSummary]
    excluded: int
    warnings: Tuple[str, ...] = field(default_factory=tuple)

    @property
    def master_seed(self) -> int:
        return self.config.master_seed

    def reports(self, method: str) -> List[ErrorReport]:
        return [r.reports[method] for r in self.results if r.excluded is None]

    def to_dict(self) -> Dict[str, Any]:
        return {
            "config": self.config.to_dict(),
            "master_seed": self.config.master_seed,
            "reps_requested": self.config.reps,
            "reps_used": self.config.reps - self.excluded,
            "excluded": self.excluded,
            "warnings": list(self.warnings),
            "summary": {m: s.to_dict() for m, s in self.methods.items()},
            "per_rep": [r.to_dict() for r in self.results],
        }


def summarize_reports(method: str, reports: Sequence[ErrorReport], spec: ControlSpec) -> MethodSummary:
    """Means of every error, nearest-rank (1 - delta_i) quantiles and violation rates of R_i*."""
    if not reports:
        return MethodSummary(method, 0, {}, {}, {})
    flats = [r.flat() for r in reports]
    means = {key: float(np.mean([f[key] for f in flats])) for key in flats[0]}
    quantiles, violations = {}, {}
    for i, key in enumerate(reports[0].under_keys()):
        values = np.array([f[key] for f in flats])
        quantiles[key] = nearest_rank_quantile(values, 1.0 - spec.deltas[i])
        violations[key] = float(np.mean(values > spec.alphas[i]))
    return MethodSummary(method, len(reports), means, quantiles, violations)


def _run_rep(config: MonteCarloConfig, rep: int) -> RepResult:
    train, test = generate_setting(config.setting, config.master_seed, rep)
    c_fn = scaled_c(config.c_scale)
    oracle = config.setting.oracle_params() if config.base == "oracle" else None
    reports, thresholds = {}, {}

    try:
        needs_split = any(m in config.methods for m in ("hnp", "hnp_basic"))
        if needs_split:
            splits = split_dataset(train, config.plan, rep_stream(config.master_seed, rep, SPLIT_STREAM),
                                   config.spec)
            model = fit_score_model(splits.score, config.base, config.model_config, oracle)
            scored = score_splits(model, splits, config.score_kind)
            grids = [[]] * (train.num_classes - 2) if config.grid == "none" else None
            for method, adjust in (("hnp", True), ("hnp_basic", False)):
                if method in config.methods:
                    classifier = fit_general(splits, model, config.spec, grids, c_fn, adjust,
                                             config.score_kind, scored)
                    reports[method] = estimate_errors(classifier, test)
                    thresholds[method] = classifier.thresholds

        if "roc" in config.methods:
            roc_splits = split_for_roc(train, rep_stream(config.master_seed, rep, ROC_SPLIT_STREAM))
            roc_model = fit_score_model(roc_splits.score, config.base, config.model_config, oracle)
            roc = fit_roc_classifier(roc_splits, roc_model, config.spec.alphas, config.score_kind)
            reports["roc"] = estimate_errors(roc, test)
            thresholds["roc"] = roc.thresholds

        if "classical" in config.methods:
            classical = ClassicalClassifier(fit_score_model(train, config.base, config.model_config, oracle))
            reports["classical"] = estimate_errors(classical, test)
            thresholds["classical"] = ()
    except HnpError as e:
        logger.warning(f"rep {rep} excluded: {e.message}")
        return RepResult(rep, {}, {}, e.to_dict())

    return RepResult(rep, {m: reports[m] for m in config.methods}, {m: thresholds[m] for m in config.methods})


def _map_reps(func, config: MonteCarloConfig, reps: Sequence[int]) -> List[Any]:
    if config.threads <= 1:
        return [func(config, rep) for rep in reps]
    return Parallel(n_jobs=config.threads)(delayed(func)(config, rep) for rep in reps)


def run_monte_carlo(config: MonteCarloConfig) -> MonteCarloSummary:
    """
    Repeat generate, split, fit and evaluate for reps 0..M-1.

    Rep r draws all of its randomness from substreams of (master_seed, r), and the
    reduction runs over rep-ordered results, so the summary does not depend on threads.
    """
    logger.info(f"Monte Carlo: setting {config.setting.id}, {config.reps} reps, methods {list(config.methods)}, "
                f"seed {config.master_seed}, threads {config.threads}")
    results = sorted(_map_reps(_run_rep, config, range(config.reps)), key=lambda r: r.rep)

    used = [r for r in results if r.excluded is None]
    excluded = len(results) - len(used)
    warnings = ()
    if excluded:
        message = f"{excluded} of {config.reps} reps excluded (infeasible split or rank)"
        logger.warning(message)
        warnings = (message,)

    methods = {m: summarize_reports(m, [r.reports[m] for r in used], config.spec) for m in config.methods}
    for name, summary in methods.items():
        logger.info(f"{name}: quantiles {summary.quantiles}, violation rates {summary.violation_rates}")
    return MonteCarloSummary(config, tuple(results), methods, excluded, warnings)


@dataclass(frozen=True)
class RankResult:
    rank: int
    reports: Tuple[ErrorReport, ...]
    summary: MethodSummary

    def mean(self, key: str) -> float:
        return self.summary.means[key]

    def to_dict(self) -> Dict[str, Any]:
        return {
            "rank": self.rank,
            "reps": len(self.reports),
            "summary": self.summary.to_dict(),
            "per_rep": [r.to_dict() for r in self.reports],
        }


@dataclass(frozen=True)
class SweepResult:
    config: MonteCarloConfig
    max_rank: int
    ranks: Tuple[RankResult, ...]
    notes: Tuple[str, ...]

    def mean_curve(self, key: str = "remaining_risk") -> List[Tuple[int, float]]:
        return [(r.rank, r.mean(key)) for r in self.ranks]

    def to_dict(self) -> Dict[str, Any]:
        return {
            "config": self.config.to_dict(),
            "master_seed": self.config.master_seed,
            "max_rank": self.max_rank,
            "notes": list(self.notes),
            "ranks": [r.to_dict() for r in self.ranks],
        }


def _sweep_rep(config: MonteCarloConfig, rep: int, max_rank: int) -> Dict[str, Any]:
    train, test = generate_setting(config.setting, config.master_seed, rep)
    c_fn = scaled_c(config.c_scale)
    oracle = config.setting.oracle_params() if config.base == "oracle" else None
    try:
        splits = split_dataset(train, config.plan, rep_stream(config.master_seed, rep, SPLIT_STREAM), config.spec)
        model = fit_score_model(splits.score, config.base, config.model_config, oracle)
        scored = score_splits(model, splits, config.score_kind)
        bound_1 = class_upper_bound(scored, config.spec, 1, (), c_fn, True)
    except HnpError as e:
        logger.warning(f"sweep rep {rep} excluded: {e.message}")
        return {"rep": rep, "excluded": e.to_dict(), "reports": {}}

    grid = scored.threshold[0][:, 0]
    points = np.unique(grid[grid <= bound_1.value])[::-1]
    reports = {}
    for k in range(1, min(max_rank, len(points)) + 1):
        thresholds, _ = sequential_thresholds(scored, config.spec, (float(points[k - 1]),), c_fn, True)
        classifier = HnpClassifier(model, thresholds, config.spec, score_kind=config.score_kind)
        reports[k] = estimate_errors(classifier, test)
    return {"rep": rep, "excluded": None, "reports": reports, "available": len(points)}


def threshold_sweep(config: MonteCarloConfig, max_rank: int) -> SweepResult:
    """
    Error distributions with t_1 fixed at the k-th largest feasible grid point, k = 1..K.

    The grid is the distinct T_1 scores of S_1t at or below t-bar_1; t_2..t_{I-1} are set
    to their upper bounds. Reps with fewer than k grid points contribute nothing to rank k.
    """
    if isinstance(max_rank, bool) or int(max_rank) != max_rank or max_rank < 1:
        raise InvalidArgumentError(f"max rank must be a positive integer, got {max_rank!r}")
    logger.info(f"threshold sweep: setting {config.setting.id}, ranks 1..{max_rank}, {config.reps} reps")

    sweep_rep = functools.partial(_sweep_rep, max_rank=max_rank)
    outcomes = sorted(_map_reps(sweep_rep, config, range(config.reps)), key=lambda o: o["rep"])

    notes = []
    excluded = sum(1 for o in outcomes if o["excluded"] is not None)
    if excluded:
        notes.append(f"{excluded} reps excluded (infeasible split or rank)")

    ranks = []
    for k in range(1, max_rank + 1):
        reports = tuple(o["reports"][k] for o in outcomes if k in o["reports"])
        short = sum(1 for o in outcomes if o["excluded"] is None and k not in o["reports"])
        if not reports:
            notes.append(f"rank {k} omitted: beyond the feasible grid in every rep")
            continue
        if short:
            notes.append(f"rank {k}: {short} reps have fewer than {k} feasible grid points")
        ranks.append(RankResult(k, reports, summarize_reports(f"rank_{k}", reports, config.spec)))

    for note in notes:
        logger.info(note)
    return SweepResult(config, max_rank, tuple(ranks), tuple(notes))
