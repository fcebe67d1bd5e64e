"""
H-NP umbrella algorithm: data splitting, threshold upper bounds, the grid search
over thresholds and the sequential decision rule.

Class 1 is the most severe class. A classifier with thresholds (t_1, ..., t_{I-1})
assigns the first class i whose score T_i(x) reaches t_i, and class I otherwise.
"""

import logging
import math
from dataclasses import dataclass, field
from typing import Dict, Any, Callable, List, Optional, Sequence, Tuple, Union

import numpy as np

from ..utilities.config import HNP_DEFAULTS
from ..utilities.errors import InfeasibleSplitError, InvalidArgumentError
from ..utilities.rng import SPLIT_STREAM, substream
from ..utilities.tail_math import (
    adjusted_levels,
    default_c,
    delta_search,
    min_sample_size,
    scaled_c,
)
from .scoring import LabeledDataset, ScoreModel, fit_score_model, hnp_scores, predict_proba

logger = logging.getLogger(__name__)

ADJUSTED = "adjusted"
FALLBACK = "fallback"

ROLE_SCORE = 0
ROLE_THRESHOLD = 1
ROLE_EVALUATE = 2


@dataclass(frozen=True)
class ControlSpec:
    """Control levels alpha_i and violation tolerances delta_i for classes 1..I-1."""
    alphas: Tuple[float, ...]
    deltas: Tuple[float, ...]

    def __post_init__(self):
        alphas = tuple(float(a) for a in self.alphas)
        deltas = tuple(float(d) for d in self.deltas)
        if not alphas or len(alphas) != len(deltas):
            raise InvalidArgumentError(
                f"alphas and deltas must be non-empty and of equal length ({len(alphas)} vs {len(deltas)})")
        for name, values in (("alpha", alphas), ("delta", deltas)):
            bad = [v for v in values if not (0.0 < v < 1.0)]
            if bad:
                raise InvalidArgumentError(f"every {name} must lie in (0, 1), got {bad}")
        object.__setattr__(self, "alphas", alphas)
        object.__setattr__(self, "deltas", deltas)

    @property
    def num_classes(self) -> int:
        return len(self.alphas) + 1

    def min_sizes(self) -> List[int]:
        return [min_sample_size(a, d) for a, d in zip(self.alphas, self.deltas)]

    @classmethod
    def from_lists(cls, alphas: Sequence[float], deltas: Sequence[float],
                   num_classes: Optional[int] = None) -> "ControlSpec":
        """Build a spec, broadcasting a single alpha or delta over I-1 classes when num_classes is given."""
        alphas, deltas = list(alphas), list(deltas)
        if num_classes is not None:
            if len(alphas) == 1:
                alphas = alphas * (num_classes - 1)
            if len(deltas) == 1:
                deltas = deltas * (num_classes - 1)
            if len(alphas) != num_classes - 1 or len(deltas) != num_classes - 1:
                raise InvalidArgumentError(
                    f"need {num_classes - 1} alphas and deltas for {num_classes} classes")
        return cls(tuple(alphas), tuple(deltas))

    def to_dict(self) -> Dict[str, Any]:
        return {"alphas": list(self.alphas), "deltas": list(self.deltas)}

    @classmethod
    def from_dict(cls, data: Dict[str, Any]) -> "ControlSpec":
        return cls(tuple(data["alphas"]), tuple(data["deltas"]))


@dataclass(frozen=True)
class SplitPlan:
    """
    Per-class (score, threshold, evaluate) fractions.

    Class 1 has no evaluate role and class I has no threshold role.
    """
    fractions: Tuple[Tuple[float, float, float], ...]

    def __post_init__(self):
        fractions = tuple(tuple(float(f) for f in row) for row in self.fractions)
        if len(fractions) < 2:
            raise InvalidArgumentError("a split plan needs at least two classes")
        last = len(fractions) - 1
        for i, row in enumerate(fractions):
            if len(row) != 3 or any(f < 0 for f in row):
                raise InvalidArgumentError(f"class {i + 1}: fractions must be three non-negative numbers")
            if abs(sum(row) - 1.0) > 1e-9:
                raise InvalidArgumentError(f"class {i + 1}: fractions sum to {sum(row)}, not 1")
            if i == 0 and row[ROLE_EVALUATE] > 0:
                raise InvalidArgumentError("class 1 has no evaluate role")
            if i == last and row[ROLE_THRESHOLD] > 0:
                raise InvalidArgumentError(f"class {last + 1} has no threshold role")
        object.__setattr__(self, "fractions", fractions)

    @property
    def num_classes(self) -> int:
        return len(self.fractions)

    @classmethod
    def parse(cls, text: str) -> "SplitPlan":
        """
        Parse the flag form "50/50,45/50/5,95/5".

        Class 1 gives score/threshold, class I gives score/evaluate, the classes in
        between give score/threshold/evaluate. Percentages and fractions are both accepted.
        """
        groups = [g.strip() for g in str(text).split(",") if g.strip()]
        if len(groups) < 2:
            raise InvalidArgumentError(f"split plan needs one group per class: {text!r}")
        rows = []
        for i, group in enumerate(groups):
            try:
                parts = [float(p) for p in group.split("/")]
            except ValueError:
                raise InvalidArgumentError(f"split group {group!r} is not numeric")
            total = sum(parts)
            if total <= 0:
                raise InvalidArgumentError(f"split group {group!r} sums to zero")
            scale = 100.0 if abs(total - 100.0) < 1e-6 else 1.0
            parts = [p / scale for p in parts]
            if i == 0:
                if len(parts) != 2:
                    raise InvalidArgumentError(f"class 1 split must be score/threshold, got {group!r}")
                rows.append((parts[0], parts[1], 0.0))
            elif i == len(groups) - 1:
                if len(parts) != 2:
                    raise InvalidArgumentError(f"class {i + 1} split must be score/evaluate, got {group!r}")
                rows.append((parts[0], 0.0, parts[1]))
            else:
                if len(parts) != 3:
                    raise InvalidArgumentError(
                        f"class {i + 1} split must be score/threshold/evaluate, got {group!r}")
                rows.append(tuple(parts))
        return cls(tuple(rows))

    @classmethod
    def default(cls, num_classes: int) -> "SplitPlan":
        """50/50 for class 1, 45/50/5 for middle classes, 95/5 for class I."""
        if num_classes < 2:
            raise InvalidArgumentError(f"num_classes must be at least 2, got {num_classes}")
        middle = [(0.45, 0.50, 0.05)] * (num_classes - 2)
        return cls(tuple([(0.5, 0.5, 0.0)] + middle + [(0.95, 0.0, 0.05)]))

    def counts(self, class_index: int, size: int) -> Tuple[int, int, int]:
        """(score, threshold, evaluate) counts; floors per role, remainder to score."""
        _, thr, ev = self.fractions[class_index - 1]
        n_threshold = int(math.floor(thr * size + 1e-9))
        n_evaluate = int(math.floor(ev * size + 1e-9))
        return size - n_threshold - n_evaluate, n_threshold, n_evaluate

    def validate(self, class_sizes: Sequence[int], spec: ControlSpec):
        """Raise InfeasibleSplitError when a threshold subset is below the minimum sample size."""
        if len(class_sizes) != self.num_classes or spec.num_classes != self.num_classes:
            raise InvalidArgumentError(
                f"split plan has {self.num_classes} classes, data has {len(class_sizes)}, "
                f"spec covers {spec.num_classes}")
        for i, needed in enumerate(spec.min_sizes(), start=1):
            _, n_threshold, _ = self.counts(i, int(class_sizes[i - 1]))
            if n_threshold < needed:
                raise InfeasibleSplitError(
                    f"class {i}: threshold subset has {n_threshold} observations, "
                    f"need at least {needed} for alpha={spec.alphas[i - 1]}, delta={spec.deltas[i - 1]}",
                    class_label=i, size=n_threshold, required=needed,
                )
        for i in range(2, self.num_classes + 1):
            if self.counts(i, int(class_sizes[i - 1]))[ROLE_EVALUATE] == 0:
                raise InfeasibleSplitError(f"class {i}: evaluate subset is empty", class_label=i)

    def to_flag(self) -> str:
        groups = []
        last = self.num_classes - 1
        for i, (sc, thr, ev) in enumerate(self.fractions):
            parts = (sc, thr) if i == 0 else (sc, ev) if i == last else (sc, thr, ev)
            groups.append("/".join(f"{100 * p:g}" for p in parts))
        return ",".join(groups)


@dataclass(frozen=True)
class DataSplits:
    """
    Role assignment of one dataset.

    threshold[i - 1] holds the features of S_it (i = 1..I-1) and evaluate[i - 2]
    those of S_ie (i = 2..I). class_sizes are the full-sample class counts.
    """
    score: LabeledDataset
    threshold: Tuple[np.ndarray, ...]
    evaluate: Tuple[np.ndarray, ...]
    class_sizes: Tuple[int, ...]
    roles: np.ndarray

    @property
    def num_classes(self) -> int:
        return len(self.class_sizes)

    @property
    def priors(self) -> np.ndarray:
        sizes = np.asarray(self.class_sizes, dtype=float)
        return sizes / sizes.sum()


@dataclass(frozen=True)
class ScoredSplits:
    """H-NP score matrices (n, I-1) for every threshold and evaluation subset."""
    threshold: Tuple[np.ndarray, ...]
    evaluate: Tuple[np.ndarray, ...]
    priors: np.ndarray

    @property
    def num_classes(self) -> int:
        return len(self.threshold) + 1


@dataclass(frozen=True)
class ScoreSample:
    """Sorted T_i scores over S_it and the subsequence passing below every earlier threshold."""
    index: int
    full: np.ndarray
    conditional: np.ndarray

    @property
    def n(self) -> int:
        return len(self.full)

    @property
    def n_conditional(self) -> int:
        return len(self.conditional)


@dataclass(frozen=True)
class UpperBound:
    value: float
    branch: str
    rank: int
    p_hat: float = 1.0
    alpha_adj: Optional[float] = None
    delta_adj: Optional[float] = None

    def to_dict(self) -> Dict[str, Any]:
        return {
            "value": self.value,
            "branch": self.branch,
            "rank": self.rank,
            "p_hat": self.p_hat,
            "alpha_adj": self.alpha_adj,
            "delta_adj": self.delta_adj,
        }


@dataclass(frozen=True)
class FitDiagnostics:
    upper_bounds: Tuple[float, ...]
    branches: Tuple[str, ...]
    remaining_risk: float
    grid_points: int
    use_adjustment: bool = True
    bounds: Tuple[UpperBound, ...] = field(default_factory=tuple)

    def to_dict(self) -> Dict[str, Any]:
        return {
            "upper_bounds": list(self.upper_bounds),
            "branches": list(self.branches),
            "remaining_risk": self.remaining_risk,
            "grid_points": self.grid_points,
            "use_adjustment": self.use_adjustment,
            "bounds": [b.to_dict() for b in self.bounds],
        }

    @classmethod
    def from_dict(cls, data: Dict[str, Any]) -> "FitDiagnostics":
        return cls(
            upper_bounds=tuple(float(v) for v in data["upper_bounds"]),
            branches=tuple(data["branches"]),
            remaining_risk=float(data["remaining_risk"]),
            grid_points=int(data["grid_points"]),
            use_adjustment=bool(data.get("use_adjustment", True)),
            bounds=tuple(UpperBound(**b) for b in data.get("bounds", ())),
        )


@dataclass(frozen=True)
class HnpClassifier:
    """A ScoreModel plus thresholds t_1..t_{I-1} applied by the sequential decision rule."""
    model: ScoreModel
    thresholds: Tuple[float, ...]
    spec: ControlSpec
    diagnostics: Optional[FitDiagnostics] = None
    score_kind: str = HNP_DEFAULTS["score_kind"]

    @property
    def num_classes(self) -> int:
        return self.model.num_classes

    def scores(self, X: np.ndarray) -> np.ndarray:
        return hnp_scores(predict_proba(self.model, X), self.score_kind)

    def predict(self, X: np.ndarray) -> np.ndarray:
        return assign_labels(self.scores(X), self.thresholds)

    def to_dict(self) -> Dict[str, Any]:
        return {
            "type": "hnp",
            "model": self.model.to_dict(),
            "thresholds": list(self.thresholds),
            "spec": self.spec.to_dict(),
            "score_kind": self.score_kind,
            "diagnostics": self.diagnostics.to_dict() if self.diagnostics else None,
        }

    @classmethod
    def from_dict(cls, data: Dict[str, Any]) -> "HnpClassifier":
        diagnostics = data.get("diagnostics")
        return cls(
            model=ScoreModel.from_dict(data["model"]),
            thresholds=tuple(float(t) for t in data["thresholds"]),
            spec=ControlSpec.from_dict(data["spec"]),
            diagnostics=FitDiagnostics.from_dict(diagnostics) if diagnostics else None,
            score_kind=data.get("score_kind", HNP_DEFAULTS["score_kind"]),
        )


def assign_labels(scores: np.ndarray, thresholds: Sequence[float]) -> np.ndarray:
    """First i with T_i >= t_i, else I, for every row of an (n, I-1) score matrix."""
    scores = np.atleast_2d(scores)
    thresholds = np.asarray(thresholds, dtype=float)
    if scores.shape[1] != len(thresholds):
        raise InvalidArgumentError(f"{scores.shape[1]} score columns but {len(thresholds)} thresholds")
    passes = scores >= thresholds
    return np.where(passes.any(axis=1), passes.argmax(axis=1) + 1, len(thresholds) + 1)


def classify(classifier: HnpClassifier, x: Sequence[float]) -> int:
    """Label in 1..I for a single feature vector."""
    return int(classifier.predict(np.asarray(x, dtype=float).reshape(1, -1))[0])


def split_dataset(data: LabeledDataset, plan: SplitPlan, seed: Union[int, np.random.Generator],
                  spec: Optional[ControlSpec] = None) -> DataSplits:
    """
    Randomly assign every observation a score, threshold or evaluate role per class.

    Args:
        data: Full labelled sample
        plan: Per-class role fractions
        seed: Master seed (the split substream is derived from it) or a ready Generator
        spec: When given, threshold subsets are checked against the minimum sample size

    Returns:
        DataSplits with the score-training dataset and per-class held-out features
    """
    if plan.num_classes != data.num_classes:
        raise InvalidArgumentError(
            f"split plan covers {plan.num_classes} classes, data has {data.num_classes}")
    sizes = data.class_counts()
    if spec is not None:
        plan.validate(sizes, spec)

    rng = seed if isinstance(seed, np.random.Generator) else substream(seed, SPLIT_STREAM)
    roles = np.full(len(data), ROLE_SCORE, dtype=int)
    for i in range(1, data.num_classes + 1):
        members = rng.permutation(np.flatnonzero(data.labels == i))
        _, n_threshold, n_evaluate = plan.counts(i, len(members))
        roles[members[:n_threshold]] = ROLE_THRESHOLD
        roles[members[n_threshold:n_threshold + n_evaluate]] = ROLE_EVALUATE

    threshold = tuple(data.features[(data.labels == i) & (roles == ROLE_THRESHOLD)]
                      for i in range(1, data.num_classes))
    evaluate = tuple(data.features[(data.labels == i) & (roles == ROLE_EVALUATE)]
                     for i in range(2, data.num_classes + 1))
    score = data.subset(np.flatnonzero(roles == ROLE_SCORE))
    logger.debug(f"split sizes: score={len(score)}, threshold={[len(t) for t in threshold]}, "
                 f"evaluate={[len(e) for e in evaluate]}")
    return DataSplits(score, threshold, evaluate, tuple(int(s) for s in sizes), roles)


def score_splits(model: ScoreModel, splits: DataSplits,
                 score_kind: str = HNP_DEFAULTS["score_kind"]) -> ScoredSplits:
    """Evaluate the H-NP scores once on every held-out subset."""
    def _score(X):
        if len(X) == 0:
            return np.zeros((0, model.num_classes - 1))
        return hnp_scores(predict_proba(model, X), score_kind)

    return ScoredSplits(
        threshold=tuple(_score(X) for X in splits.threshold),
        evaluate=tuple(_score(X) for X in splits.evaluate),
        priors=splits.priors,
    )


def build_score_sample(threshold_scores: np.ndarray, index: int,
                       previous_thresholds: Sequence[float] = ()) -> ScoreSample:
    """
    Sorted score sets for class `index`.

    Args:
        threshold_scores: (n_i, I-1) H-NP scores of S_it
        index: Class i (1-based)
        previous_thresholds: t_1..t_{i-1}
    """
    threshold_scores = np.atleast_2d(threshold_scores)
    if len(previous_thresholds) != index - 1:
        raise InvalidArgumentError(
            f"class {index} needs {index - 1} previous thresholds, got {len(previous_thresholds)}")
    column = threshold_scores[:, index - 1]
    mask = np.all(threshold_scores[:, :index - 1] < np.asarray(previous_thresholds, dtype=float), axis=1)
    return ScoreSample(index, np.sort(column, kind="stable"), np.sort(column[mask], kind="stable"))


def upper_bound(sample: ScoreSample, alpha: float, delta: float,
                c_fn: Callable[[int], float] = default_c,
                use_adjustment: bool = True) -> UpperBound:
    """
    Threshold upper bound t-bar_i for class i.

    Class 1 uses the order statistic t_{1(k_1)}. For i > 1 the conditional scores give
    the adjusted bound t'_{i(k'_i)} when n'_i >= log(delta') / log(1 - alpha') with
    alpha' < 1 and delta' > 0; otherwise the unconditional t_{i(k_i)} applies.

    Raises:
        NoFeasibleRankError: when n_i is below the minimum sample size
    """
    n = sample.n
    if n == 0:
        raise InvalidArgumentError(f"class {sample.index}: empty threshold set")
    k = delta_search(n, alpha, delta)
    fallback = UpperBound(float(sample.full[k - 1]), FALLBACK, k)
    if sample.index == 1 or not use_adjustment:
        return fallback

    p_hat, _, alpha_adj, delta_adj = adjusted_levels(alpha, delta, n, sample.n_conditional, c_fn)
    feasible = (sample.n_conditional > 0 and alpha_adj < 1.0 and delta_adj > 0.0
                and sample.n_conditional >= min_sample_size(alpha_adj, delta_adj))
    if not feasible:
        return UpperBound(fallback.value, FALLBACK, k, p_hat, alpha_adj, delta_adj)

    k_adj = delta_search(sample.n_conditional, alpha_adj, delta_adj)
    return UpperBound(float(sample.conditional[k_adj - 1]), ADJUSTED, k_adj, p_hat, alpha_adj, delta_adj)


def class_upper_bound(scored: ScoredSplits, spec: ControlSpec, index: int, prefix: Sequence[float],
                      c_fn: Callable[[int], float] = default_c, use_adjustment: bool = True) -> UpperBound:
    """Upper bound for class `index` given the thresholds t_1..t_{index-1}."""
    sample = build_score_sample(scored.threshold[index - 1], index, prefix)
    return upper_bound(sample, spec.alphas[index - 1], spec.deltas[index - 1], c_fn, use_adjustment)


def sequential_thresholds(scored: ScoredSplits, spec: ControlSpec, prefix: Sequence[float] = (),
                          c_fn: Callable[[int], float] = default_c,
                          use_adjustment: bool = True) -> Tuple[Tuple[float, ...], Tuple[UpperBound, ...]]:
    """
    Complete a threshold prefix (t_1..t_j) by setting every remaining t_i to its upper bound.

    Returns:
        (thresholds, upper bounds) where bounds cover the completed classes only
    """
    thresholds = [float(t) for t in prefix]
    bounds = []
    for index in range(len(thresholds) + 1, scored.num_classes):
        bound = class_upper_bound(scored, spec, index, thresholds, c_fn, use_adjustment)
        bounds.append(bound)
        thresholds.append(bound.value)
    return tuple(thresholds), tuple(bounds)


def _class_errors(scored: ScoredSplits, thresholds: Sequence[float]) -> np.ndarray:
    """e_i = fraction of S_ie assigned a label below i, for i = 2..I."""
    errors = []
    for offset, scores in enumerate(scored.evaluate):
        index = offset + 2
        if len(scores) == 0:
            raise InvalidArgumentError(f"class {index}: empty evaluation subset", class_label=index)
        errors.append(np.mean(assign_labels(scores, thresholds) < index))
    return np.asarray(errors)


def _remaining_risk(scored: ScoredSplits, thresholds: Sequence[float]) -> float:
    return float(np.sum(scored.priors[1:] * _class_errors(scored, thresholds)))


def empirical_remaining_risk(classifier: HnpClassifier, evaluation: Sequence[np.ndarray],
                             priors: Sequence[float]) -> float:
    """
    R-tilde^c = sum_{i>=2} pi_i * (fraction of S_ie labelled below i).

    Args:
        classifier: Fitted classifier
        evaluation: Features of S_ie for i = 2..I
        priors: Class proportions pi_1..pi_I
    """
    priors = np.asarray(priors, dtype=float)
    if len(priors) != classifier.num_classes or len(evaluation) != classifier.num_classes - 1:
        raise InvalidArgumentError("need I priors and I-1 evaluation subsets")
    scored = ScoredSplits(
        threshold=(),
        evaluate=tuple(classifier.scores(X) if len(X) else np.zeros((0, classifier.num_classes - 1))
                       for X in evaluation),
        priors=priors,
    )
    return _remaining_risk(scored, classifier.thresholds)


def _candidates(grid: Optional[np.ndarray], bound: float) -> List[float]:
    """Grid points at or below the bound, descending; the bound alone when none qualify."""
    if grid is None or len(grid) == 0:
        return [bound]
    grid = np.asarray(grid, dtype=float)
    points = np.unique(grid[grid <= bound])[::-1]
    return [float(p) for p in points] if len(points) else [bound]


def _build(model, thresholds, spec, bounds, risk, grid_points, use_adjustment, score_kind):
    diagnostics = FitDiagnostics(
        upper_bounds=tuple(b.value for b in bounds),
        branches=tuple(b.branch for b in bounds),
        remaining_risk=risk,
        grid_points=grid_points,
        use_adjustment=use_adjustment,
        bounds=tuple(bounds),
    )
    return HnpClassifier(model, tuple(thresholds), spec, diagnostics, score_kind)


def fit_three_class(splits: DataSplits, model: ScoreModel, spec: ControlSpec,
                    grid: Optional[Sequence[float]] = None,
                    c_fn: Callable[[int], float] = default_c,
                    use_adjustment: bool = True,
                    score_kind: str = HNP_DEFAULTS["score_kind"],
                    scored: Optional[ScoredSplits] = None) -> HnpClassifier:
    """
    Three-class umbrella fit.

    Scans t_1 over the grid (default: T_1 over S_1t) at or below t-bar_1 in descending
    order, sets t_2 to its upper bound given t_1 and keeps the first strict minimum of
    pi_2 * e_21 + pi_3 * e_3.
    """
    if splits.num_classes != 3 or spec.num_classes != 3:
        raise InvalidArgumentError("fit_three_class needs exactly three classes")
    scored = scored or score_splits(model, splits, score_kind)
    if grid is None:
        grid = scored.threshold[0][:, 0]

    bound_1 = class_upper_bound(scored, spec, 1, (), c_fn, use_adjustment)
    candidates = _candidates(np.asarray(grid, dtype=float), bound_1.value)

    best = None
    for t1 in candidates:
        bound_2 = class_upper_bound(scored, spec, 2, (t1,), c_fn, use_adjustment)
        thresholds = (t1, bound_2.value)
        risk = _remaining_risk(scored, thresholds)
        if best is None or risk < best[0]:
            best = (risk, thresholds, (bound_1, bound_2))

    risk, thresholds, bounds = best
    logger.info(f"three-class fit: t = {thresholds}, R~c = {risk:.6f} over {len(candidates)} grid points")
    return _build(model, thresholds, spec, bounds, risk, len(candidates), use_adjustment, score_kind)


def fit_general(splits: DataSplits, model: ScoreModel, spec: ControlSpec,
                grids: Optional[Sequence[Optional[Sequence[float]]]] = None,
                c_fn: Callable[[int], float] = default_c,
                use_adjustment: bool = True,
                score_kind: str = HNP_DEFAULTS["score_kind"],
                scored: Optional[ScoredSplits] = None) -> HnpClassifier:
    """
    Umbrella fit for any I >= 2.

    Nested descending search over t_1..t_{I-2}; each grid defaults to T_i over S_it and
    is cut at the upper bound implied by the thresholds before it. t_{I-1} is set to its
    upper bound at every leaf. An empty grid entry means "use the upper bound".

    Args:
        splits: Role assignment from split_dataset
        model: Fitted score model
        spec: Control levels and tolerances
        grids: A_1..A_{I-2}; None for the default score grids
        c_fn: c(n) used by the conditional adjustment
        use_adjustment: False uses the unconditional bound for every class
        score_kind: "normalized" or "raw" H-NP scores
        scored: Precomputed scores for the splits

    Returns:
        HnpClassifier with the minimizing thresholds and their diagnostics
    """
    num_classes = splits.num_classes
    if spec.num_classes != num_classes:
        raise InvalidArgumentError(f"spec covers {spec.num_classes} classes, data has {num_classes}")
    scored = scored or score_splits(model, splits, score_kind)
    depth = num_classes - 2
    if grids is None:
        grids = [None] * depth
    if len(grids) != depth:
        raise InvalidArgumentError(f"need {depth} grids for {num_classes} classes, got {len(grids)}")
    resolved = [scored.threshold[i][:, i] if g is None else np.asarray(g, dtype=float)
                for i, g in enumerate(grids)]

    state = {"best": None, "points": 0}

    def search(prefix: Tuple[float, ...], bounds: Tuple[UpperBound, ...]):
        index = len(prefix) + 1
        bound = class_upper_bound(scored, spec, index, prefix, c_fn, use_adjustment)
        if index == num_classes - 1:
            thresholds = prefix + (bound.value,)
            risk = _remaining_risk(scored, thresholds)
            state["points"] += 1
            if state["best"] is None or risk < state["best"][0]:
                state["best"] = (risk, thresholds, bounds + (bound,))
            return
        for t in _candidates(resolved[index - 1], bound.value):
            search(prefix + (t,), bounds + (bound,))

    search((), ())
    risk, thresholds, bounds = state["best"]
    logger.info(f"general fit (I={num_classes}): t = {thresholds}, R~c = {risk:.6f} "
                f"over {state['points']} grid points")
    return _build(model, thresholds, spec, bounds, risk, state["points"], use_adjustment, score_kind)


def fit_hnp(data: LabeledDataset, plan: SplitPlan, spec: ControlSpec,
            seed: Union[int, np.random.Generator],
            base: str = HNP_DEFAULTS["base"],
            grid: str = HNP_DEFAULTS["grid"],
            c_fn: Optional[Callable[[int], float]] = None,
            use_adjustment: bool = True,
            score_kind: str = HNP_DEFAULTS["score_kind"],
            model_config: Optional[Dict[str, Any]] = None,
            oracle_params: Optional[Dict[str, Any]] = None) -> HnpClassifier:
    """
    Full pipeline: split, fit the base classifier on the score subset, run the umbrella fit.

    Args:
        grid: "scores" searches T_i over S_it, "none" uses the upper bounds only
    """
    if grid not in ("scores", "none"):
        raise InvalidArgumentError(f"grid policy must be 'scores' or 'none', got {grid!r}")
    c_fn = c_fn or scaled_c(HNP_DEFAULTS["c_scale"])
    splits = split_dataset(data, plan, seed, spec)
    model = fit_score_model(splits.score, base, model_config, oracle_params)
    grids = [[]] * (data.num_classes - 2) if grid == "none" else None
    return fit_general(splits, model, spec, grids, c_fn, use_adjustment, score_kind)


def check_bounds(classifier: HnpClassifier) -> bool:
    """t_i <= t-bar_i for every recorded bound."""
    if classifier.diagnostics is None:
        return True
    return all(t <= b for t, b in zip(classifier.thresholds, classifier.diagnostics.upper_bounds))
