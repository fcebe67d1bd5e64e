"""
Comparator classifiers: classical argmax and empirical-ROC thresholds.
"""

import logging
import math
from dataclasses import dataclass
from typing import Dict, Any, Sequence, Tuple, Union

import numpy as np

from ..utilities.config import HNP_DEFAULTS, ROC_CONFIG
from ..utilities.errors import InvalidArgumentError
from ..utilities.rng import ROC_SPLIT_STREAM, substream
from .hnp_core import assign_labels
from .scoring import LabeledDataset, ScoreModel, hnp_scores, predict_proba

logger = logging.getLogger(__name__)


def classical_argmax(probs: np.ndarray) -> Union[int, np.ndarray]:
    """Label of the largest posterior entry; ties go to the smallest (most severe) label."""
    probs = np.asarray(probs, dtype=float)
    if probs.ndim == 1:
        return int(np.argmax(probs)) + 1
    return np.argmax(probs, axis=1) + 1


@dataclass(frozen=True)
class ClassicalClassifier:
    model: ScoreModel

    @property
    def num_classes(self) -> int:
        return self.model.num_classes

    def predict(self, X: np.ndarray) -> np.ndarray:
        return classical_argmax(predict_proba(self.model, X))

    def to_dict(self) -> Dict[str, Any]:
        return {"type": "classical", "model": self.model.to_dict()}

    @classmethod
    def from_dict(cls, data: Dict[str, Any]) -> "ClassicalClassifier":
        return cls(ScoreModel.from_dict(data["model"]))


def empirical_sup_threshold(scores: Sequence[float], alpha: float) -> float:
    """
    sup{t : #{s < t} / n <= alpha}.

    With sorted scores s_(1..n) this is s_(m+1), m = floor(alpha * n); +inf once every
    threshold is feasible.
    """
    scores = np.sort(np.asarray(scores, dtype=float), kind="stable")
    if len(scores) == 0:
        raise InvalidArgumentError("empirical threshold needs a non-empty score set")
    if not (0.0 < alpha <= 1.0):
        raise InvalidArgumentError(f"alpha must lie in (0, 1], got {alpha!r}")
    m = int(math.floor(alpha * len(scores) + 1e-9))
    if m >= len(scores):
        return math.inf
    return float(scores[m])


@dataclass(frozen=True)
class RocClassifier:
    """ScoreModel plus empirical-quantile thresholds, same decision rule as the H-NP classifier."""
    model: ScoreModel
    thresholds: Tuple[float, ...]
    score_kind: str = HNP_DEFAULTS["score_kind"]

    @property
    def num_classes(self) -> int:
        return self.model.num_classes

    def predict(self, X: np.ndarray) -> np.ndarray:
        return assign_labels(hnp_scores(predict_proba(self.model, X), self.score_kind), self.thresholds)

    def to_dict(self) -> Dict[str, Any]:
        return {
            "type": "roc",
            "model": self.model.to_dict(),
            "thresholds": [t if math.isfinite(t) else str(t) for t in self.thresholds],
            "score_kind": self.score_kind,
        }

    @classmethod
    def from_dict(cls, data: Dict[str, Any]) -> "RocClassifier":
        return cls(ScoreModel.from_dict(data["model"]),
                   tuple(float(t) for t in data["thresholds"]),
                   data.get("score_kind", HNP_DEFAULTS["score_kind"]))


@dataclass(frozen=True)
class RocSplits:
    score: LabeledDataset
    threshold: Tuple[np.ndarray, ...]


def split_for_roc(data: LabeledDataset, seed: Union[int, np.random.Generator],
                  score_fraction: float = ROC_CONFIG["score_fraction"]) -> RocSplits:
    """
    Per-class score/threshold split for the ROC comparison.

    Every class is split, so class I's held-out half is withheld from score training
    even though no threshold is fitted on it.
    """
    if not (0.0 < score_fraction < 1.0):
        raise InvalidArgumentError(f"score fraction must lie in (0, 1), got {score_fraction!r}")
    rng = seed if isinstance(seed, np.random.Generator) else substream(seed, ROC_SPLIT_STREAM)
    score_mask = np.zeros(len(data), dtype=bool)
    threshold = []
    for i in range(1, data.num_classes + 1):
        members = rng.permutation(np.flatnonzero(data.labels == i))
        n_threshold = int(math.floor((1.0 - score_fraction) * len(members) + 1e-9))
        score_mask[members[n_threshold:]] = True
        threshold.append(data.features[np.sort(members[:n_threshold])])
    return RocSplits(data.subset(np.flatnonzero(score_mask)), tuple(threshold[:-1]))


def fit_roc_classifier(splits: RocSplits, model: ScoreModel, alphas: Sequence[float],
                       score_kind: str = HNP_DEFAULTS["score_kind"]) -> RocClassifier:
    """
    t_i = sup{t : fraction of S_it scores T_i strictly below t <= alpha_i}, i = 1..I-1.

    Args:
        splits: Held-out features per class
        model: Score model fitted on splits.score
        alphas: Control levels alpha_1..alpha_{I-1}
    """
    if len(alphas) != model.num_classes - 1 or len(splits.threshold) != model.num_classes - 1:
        raise InvalidArgumentError(f"need {model.num_classes - 1} alphas and threshold sets")
    thresholds = []
    for i, (X, alpha) in enumerate(zip(splits.threshold, alphas)):
        if len(X) == 0:
            raise InvalidArgumentError(f"class {i + 1}: empty threshold set", class_label=i + 1)
        scores = hnp_scores(predict_proba(model, X), score_kind)[:, i]
        thresholds.append(empirical_sup_threshold(scores, alpha))
    logger.debug(f"ROC thresholds: {thresholds}")
    return RocClassifier(model, tuple(thresholds), score_kind)
