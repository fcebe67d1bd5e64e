"""
Scoring-type base classifiers and the H-NP scores built from their posteriors.
"""

import logging
from dataclasses import dataclass, field
from typing import Dict, Any, List, Optional, Sequence, Tuple

import numpy as np
from scipy.special import log_softmax, softmax
from scipy.stats import multivariate_normal

from ..utilities.config import GAUSSIAN_CONFIG, HNP_DEFAULTS, LOGISTIC_CONFIG
from ..utilities.errors import InvalidArgumentError

logger = logging.getLogger(__name__)

LOGISTIC = "multinomial-logistic"
GAUSSIAN = "gaussian-discriminant"
ORACLE = "oracle-gaussian"
MODEL_KINDS = (LOGISTIC, GAUSSIAN, ORACLE)

# CLI names for the base classifier
BASE_KINDS = {"logistic": LOGISTIC, "gaussian": GAUSSIAN, "oracle": ORACLE}


@dataclass(frozen=True)
class LabeledDataset:
    """Feature vectors with labels 1..I, class 1 being the most important."""
    features: np.ndarray
    labels: np.ndarray
    num_classes: int

    def __post_init__(self):
        features = np.asarray(self.features, dtype=float)
        if features.ndim == 1:
            features = features.reshape(-1, 1)
        labels = np.asarray(self.labels)
        if features.ndim != 2:
            raise InvalidArgumentError("features must be a 2-D array")
        if labels.ndim != 1 or len(labels) != len(features):
            raise InvalidArgumentError(
                f"features and labels differ in length ({len(features)} vs {len(labels)})")
        if self.num_classes < 2:
            raise InvalidArgumentError(f"num_classes must be at least 2, got {self.num_classes}")
        if len(labels) and (labels.min() < 1 or labels.max() > self.num_classes
                            or not np.all(labels == np.round(labels))):
            raise InvalidArgumentError(f"labels must be integers in 1..{self.num_classes}")
        object.__setattr__(self, "features", features)
        object.__setattr__(self, "labels", labels.astype(int))

    def __len__(self) -> int:
        return len(self.labels)

    @property
    def dim(self) -> int:
        return self.features.shape[1]

    def class_counts(self) -> np.ndarray:
        return np.bincount(self.labels, minlength=self.num_classes + 1)[1:]

    def class_features(self, label: int) -> np.ndarray:
        return self.features[self.labels == label]

    def subset(self, index: np.ndarray) -> "LabeledDataset":
        return LabeledDataset(self.features[index], self.labels[index], self.num_classes)

    def require_all_classes(self):
        missing = [i + 1 for i, count in enumerate(self.class_counts()) if count == 0]
        if missing:
            raise InvalidArgumentError(f"classes without observations: {missing}", classes=missing)

    @classmethod
    def concatenate(cls, parts: Sequence["LabeledDataset"], num_classes: int) -> "LabeledDataset":
        parts = [p for p in parts if len(p)]
        if not parts:
            return cls(np.zeros((0, 1)), np.zeros(0, dtype=int), num_classes)
        return cls(np.vstack([p.features for p in parts]),
                   np.concatenate([p.labels for p in parts]), num_classes)


@dataclass(frozen=True)
class ScoreModel:
    """
    A fitted probabilistic classifier.

    params holds weights/bias for the logistic kind, and means/covariances/priors
    for the Gaussian kinds.
    """
    kind: str
    num_classes: int
    dim: int
    params: Dict[str, np.ndarray]
    warnings: Tuple[str, ...] = field(default_factory=tuple)

    @property
    def converged(self) -> bool:
        return not self.warnings

    def to_dict(self) -> Dict[str, Any]:
        return {
            "kind": self.kind,
            "num_classes": self.num_classes,
            "dim": self.dim,
            "params": {name: np.asarray(value).tolist() for name, value in self.params.items()},
            "warnings": list(self.warnings),
        }

    @classmethod
    def from_dict(cls, data: Dict[str, Any]) -> "ScoreModel":
        if data.get("kind") not in MODEL_KINDS:
            raise InvalidArgumentError(f"unknown model kind: {data.get('kind')!r}")
        return cls(
            kind=data["kind"],
            num_classes=int(data["num_classes"]),
            dim=int(data["dim"]),
            params={name: np.asarray(value, dtype=float) for name, value in data["params"].items()},
            warnings=tuple(data.get("warnings", ())),
        )


def _standardization(X: np.ndarray) -> Tuple[np.ndarray, np.ndarray]:
    center = X.mean(axis=0)
    scale = X.std(axis=0)
    scale[scale <= 1e-12] = 1.0
    return center, scale


def _step_size(Z: np.ndarray, learning_rate: float, l2: float) -> float:
    """learning_rate capped at 1/L, L bounding the curvature of the penalized cross-entropy."""
    augmented = np.hstack([Z, np.ones((len(Z), 1))])
    curvature = 0.5 * np.linalg.eigvalsh(augmented.T @ augmented / len(Z)).max() + l2
    return min(learning_rate, 1.0 / curvature)


def fit_multinomial_lr(data: LabeledDataset, config: Optional[Dict[str, Any]] = None) -> ScoreModel:
    """
    Fit a softmax-linear model by full-batch gradient descent from zero weights.

    Minimizes mean cross-entropy + (l2_penalty / 2) * ||W||^2; the bias is not penalized.
    Features are standardized first when config["standardize"] is set, and the step is
    capped at the inverse curvature bound.

    Args:
        data: Training set; every class must be present
        config: Overrides for learning_rate, max_iters, l2_penalty, tolerance, standardize

    Returns:
        ScoreModel of kind multinomial-logistic; a non-converged fit carries a warning
    """
    settings = dict(LOGISTIC_CONFIG)
    settings.update(config or {})
    data.require_all_classes()
    if len(data) == 0 or data.dim < 1:
        raise InvalidArgumentError("logistic regression needs a non-empty training set with d >= 1")

    n, d = data.features.shape
    if settings["standardize"]:
        center, scale = _standardization(data.features)
    else:
        center, scale = np.zeros(d), np.ones(d)
    Z = (data.features - center) / scale
    onehot = np.eye(data.num_classes)[data.labels - 1]
    weights = np.zeros((d, data.num_classes))
    bias = np.zeros(data.num_classes)

    l2 = settings["l2_penalty"]
    step = _step_size(Z, settings["learning_rate"], l2)
    grad_norm = np.inf
    iterations = 0
    for iterations in range(1, int(settings["max_iters"]) + 1):
        residual = softmax(Z @ weights + bias, axis=1) - onehot
        grad_w = Z.T @ residual / n + l2 * weights
        grad_b = residual.mean(axis=0)
        grad_norm = float(np.sqrt(np.sum(grad_w ** 2) + np.sum(grad_b ** 2)))
        if grad_norm < settings["tolerance"]:
            break
        weights -= step * grad_w
        bias -= step * grad_b

    warnings = ()
    if grad_norm >= settings["tolerance"]:
        message = (f"logistic regression did not converge in {settings['max_iters']} iterations "
                   f"(gradient norm {grad_norm:.3e})")
        logger.warning(message)
        warnings = (message,)
    else:
        logger.debug(f"logistic regression converged after {iterations} iterations (step {step:g})")

    params = {"weights": weights, "bias": bias, "center": center, "scale": scale}
    return ScoreModel(LOGISTIC, data.num_classes, d, params, warnings)


def _regularize(cov: np.ndarray, ridge: float, label: str, warnings: List[str]) -> np.ndarray:
    eigenvalues = np.linalg.eigvalsh(cov)
    if eigenvalues.min() <= 1e-12 * max(eigenvalues.max(), 1.0):
        message = f"singular covariance for {label}; added {ridge:g} to the diagonal"
        logger.warning(message)
        warnings.append(message)
        return cov + ridge * np.eye(cov.shape[0])
    return cov


def fit_gaussian_discriminant(data: LabeledDataset, covariance: Optional[str] = None,
                              ridge: Optional[float] = None) -> ScoreModel:
    """
    Closed-form Gaussian discriminant: class means, shared or per-class covariance,
    empirical priors, posterior by Bayes' rule.
    """
    covariance = covariance or GAUSSIAN_CONFIG["covariance"]
    ridge = GAUSSIAN_CONFIG["ridge"] if ridge is None else ridge
    if covariance not in ("shared", "per_class"):
        raise InvalidArgumentError(f"covariance must be 'shared' or 'per_class', got {covariance!r}")

    counts = data.class_counts()
    for label, count in enumerate(counts, start=1):
        if count <= data.dim:
            raise InvalidArgumentError(
                f"class {label} has {count} observations; need more than d = {data.dim}",
                class_label=label)

    means = np.vstack([data.class_features(i).mean(axis=0) for i in range(1, data.num_classes + 1)])
    warnings: List[str] = []
    if covariance == "shared":
        scatter = sum(
            (data.class_features(i) - means[i - 1]).T @ (data.class_features(i) - means[i - 1])
            for i in range(1, data.num_classes + 1)
        )
        pooled = scatter / (len(data) - data.num_classes)
        pooled = _regularize(np.atleast_2d(pooled), ridge, "pooled classes", warnings)
        covs = np.repeat(pooled[None, :, :], data.num_classes, axis=0)
    else:
        covs = np.stack([
            _regularize(np.atleast_2d(np.cov(data.class_features(i), rowvar=False)), ridge,
                        f"class {i}", warnings)
            for i in range(1, data.num_classes + 1)
        ])

    priors = counts / counts.sum()
    return ScoreModel(GAUSSIAN, data.num_classes, data.dim,
                      {"means": means, "covariances": covs, "priors": priors}, tuple(warnings))


def oracle_gaussian(means: Sequence[Sequence[float]], covariance: Optional[np.ndarray] = None,
                    priors: Optional[Sequence[float]] = None) -> ScoreModel:
    """ScoreModel from known mixture parameters (identity covariance and equal priors by default)."""
    means = np.atleast_2d(np.asarray(means, dtype=float))
    num_classes, dim = means.shape
    cov = np.eye(dim) if covariance is None else np.atleast_2d(np.asarray(covariance, dtype=float))
    if cov.shape != (dim, dim):
        raise InvalidArgumentError(f"covariance must be {dim}x{dim}")
    priors = np.full(num_classes, 1.0 / num_classes) if priors is None else np.asarray(priors, float)
    if len(priors) != num_classes or np.any(priors <= 0):
        raise InvalidArgumentError("priors must be positive, one per class")
    priors = priors / priors.sum()
    covs = np.repeat(cov[None, :, :], num_classes, axis=0)
    return ScoreModel(ORACLE, num_classes, dim, {"means": means, "covariances": covs, "priors": priors})


def predict_proba(model: ScoreModel, X: np.ndarray) -> np.ndarray:
    """Posterior estimates for every row of X, shape (n, I)."""
    X = np.asarray(X, dtype=float)
    if X.ndim == 1:
        X = X.reshape(1, -1)
    if X.shape[1] != model.dim:
        raise InvalidArgumentError(f"expected {model.dim} features, got {X.shape[1]}")

    if model.kind == LOGISTIC:
        params = model.params
        if "center" in params:
            X = (X - params["center"]) / params["scale"]
        logits = X @ params["weights"] + params["bias"]
    else:
        means = model.params["means"]
        covs = model.params["covariances"]
        log_priors = np.log(model.params["priors"])
        logits = np.column_stack([
            log_priors[i] + np.atleast_1d(multivariate_normal(means[i], covs[i]).logpdf(X))
            for i in range(model.num_classes)
        ])
    return np.exp(log_softmax(logits, axis=1))


def posterior(model: ScoreModel, x: Sequence[float]) -> np.ndarray:
    """Posterior simplex vector for a single observation."""
    x = np.asarray(x, dtype=float)
    if x.ndim != 1:
        raise InvalidArgumentError("posterior expects a single feature vector")
    return predict_proba(model, x)[0]


def hnp_scores(probs: np.ndarray, kind: str = "normalized",
               clamp: float = HNP_DEFAULTS["score_clamp"]) -> np.ndarray:
    """
    H-NP scores T_1..T_{I-1} from posterior vectors.

    T_1 = p_1 and T_i = p_i / sum_{j>i} p_j, the denominator clamped below at `clamp`.
    kind="raw" returns T_i = p_i instead. Accepts one vector or a matrix of rows.
    """
    probs = np.asarray(probs, dtype=float)
    single = probs.ndim == 1
    probs = np.atleast_2d(probs)
    if probs.shape[1] < 2:
        raise InvalidArgumentError("need at least two class probabilities")

    if kind == "raw":
        scores = probs[:, :-1].copy()
    elif kind == "normalized":
        tails = np.cumsum(probs[:, ::-1], axis=1)[:, ::-1]
        scores = probs[:, :-1] / np.maximum(tails[:, 1:], clamp)
        scores[:, 0] = probs[:, 0]
    else:
        raise InvalidArgumentError(f"unknown score kind: {kind!r}")
    return scores[0] if single else scores


def fit_score_model(data: LabeledDataset, base: str = "logistic",
                    config: Optional[Dict[str, Any]] = None,
                    oracle_params: Optional[Dict[str, Any]] = None) -> ScoreModel:
    """
    Fit (or, for the oracle kind, build) the base classifier named by `base`.

    Args:
        data: Score-training subset
        base: One of "logistic", "gaussian", "oracle"
        config: Hyperparameters passed to the fitting routine
        oracle_params: means/covariance/priors for the oracle kind
    """
    if base not in BASE_KINDS:
        raise InvalidArgumentError(f"unknown base classifier {base!r}; choose from {sorted(BASE_KINDS)}")
    config = config or {}
    if base == "logistic":
        return fit_multinomial_lr(data, config)
    if base == "gaussian":
        return fit_gaussian_discriminant(data, config.get("covariance"), config.get("ridge"))
    if not oracle_params:
        raise InvalidArgumentError("the oracle base classifier needs the true mixture parameters")
    return oracle_gaussian(oracle_params["means"], oracle_params.get("covariance"),
                           oracle_params.get("priors"))
