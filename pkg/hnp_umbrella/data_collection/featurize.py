"""
Featurization of per-patient gene-by-cell-type matrices.

Four schemes turn a cohort of n_g x n_c matrices into one feature vector per patient:
  M1  entries with the largest across-patient standard deviation
  M2  one gene combination shared by the cohort (PCA of all matrices side by side)
  M3  a per-patient cell-type combination (absolute first-PC loadings of that patient)
  M4  one cell-type combination from the nonzero-mean matrix of the cohort
"""

import logging
import math
from dataclasses import dataclass, field
from typing import Dict, Any, List, Optional, Sequence, Tuple, Union

import numpy as np

from ..analysis.scoring import LabeledDataset
from ..utilities.config import FEATURIZE_CONFIG
from ..utilities.errors import InvalidArgumentError
from ..utilities.rng import substream

logger = logging.getLogger(__name__)

METHODS = ("M1", "M2", "M3", "M4")

CellTypes = Optional[Sequence[Union[str, int]]]


@dataclass(frozen=True)
class PatientMatrix:
    """Pseudo-bulk expression of one patient: genes in rows, cell types in columns."""
    values: np.ndarray
    genes: Tuple[str, ...]
    cell_types: Tuple[str, ...]
    patient_id: Optional[str] = None
    label: Optional[int] = None

    def __post_init__(self):
        values = np.asarray(self.values, dtype=float)
        genes = tuple(str(g) for g in self.genes)
        cell_types = tuple(str(c) for c in self.cell_types)
        if values.shape != (len(genes), len(cell_types)):
            raise InvalidArgumentError(
                f"patient {self.patient_id}: matrix shape {values.shape} does not match "
                f"{len(genes)} genes x {len(cell_types)} cell types")
        object.__setattr__(self, "values", values)
        object.__setattr__(self, "genes", genes)
        object.__setattr__(self, "cell_types", cell_types)


@dataclass(frozen=True)
class FeatureVectorSet:
    vectors: np.ndarray
    method: str
    provenance: Dict[str, Any]
    patient_ids: Tuple[Optional[str], ...] = field(default_factory=tuple)
    labels: Tuple[Optional[int], ...] = field(default_factory=tuple)
    warnings: Tuple[str, ...] = field(default_factory=tuple)

    @property
    def dim(self) -> int:
        return self.vectors.shape[1]

    def to_dataset(self, num_classes: Optional[int] = None) -> LabeledDataset:
        """Labelled dataset of the feature vectors; every patient needs a label."""
        if not self.labels or any(label is None for label in self.labels):
            raise InvalidArgumentError("every patient needs a class label to build a dataset")
        labels = np.asarray(self.labels, dtype=int)
        return LabeledDataset(self.vectors, labels, num_classes or int(labels.max()))

    def provenance_dict(self) -> Dict[str, Any]:
        return {key: np.asarray(value).tolist() if isinstance(value, np.ndarray) else value
                for key, value in self.provenance.items()}


@dataclass(frozen=True)
class PrincipalComponent:
    loadings: np.ndarray
    eigenvalue: float
    iterations: int
    converged: bool
    residual: float


def principal_component(matrix: np.ndarray,
                        tolerance: float = FEATURIZE_CONFIG["pc_tolerance"],
                        max_iters: int = FEATURIZE_CONFIG["pc_max_iters"],
                        seed: int = FEATURIZE_CONFIG["pc_seed"]) -> PrincipalComponent:
    """
    Leading eigenpair of the column-centered covariance by power iteration.

    Stops when ||C w - lambda w|| <= tolerance * max(lambda, 1). On budget exhaustion the
    iterate with the smallest residual is returned, flagged unconverged.
    """
    matrix = np.atleast_2d(np.asarray(matrix, dtype=float))
    if matrix.size == 0 or not np.any(matrix):
        raise InvalidArgumentError("principal component of a zero matrix is undefined")
    centered = matrix - matrix.mean(axis=0)
    cov = centered.T @ centered / max(len(matrix) - 1, 1)
    if not np.any(cov):
        raise InvalidArgumentError("principal component of a matrix without column variance is undefined")

    w = np.random.default_rng(seed).standard_normal(cov.shape[0])
    w /= np.linalg.norm(w)
    best = (math.inf, w, 0.0)
    converged = False
    iterations = 0
    for iterations in range(1, int(max_iters) + 1):
        y = cov @ w
        norm = np.linalg.norm(y)
        if norm == 0.0:
            # start vector in the null space
            w = np.eye(cov.shape[0])[iterations % cov.shape[0]]
            continue
        w = y / norm
        eigenvalue = float(w @ cov @ w)
        residual = float(np.linalg.norm(cov @ w - eigenvalue * w))
        if residual < best[0]:
            best = (residual, w, eigenvalue)
        if residual <= tolerance * max(abs(eigenvalue), 1.0):
            converged = True
            break

    residual, w, eigenvalue = best
    w = w / np.linalg.norm(w)
    if w[np.argmax(np.abs(w))] < 0:
        w = -w
    if not converged:
        logger.warning(f"power iteration stopped after {max_iters} iterations (residual {residual:.3e})")
    return PrincipalComponent(w, eigenvalue, iterations, converged, residual)


def first_pc(matrix: np.ndarray) -> np.ndarray:
    """Unit first-PC loadings, largest-magnitude entry positive."""
    return principal_component(matrix).loadings


def _check_cohort(cohort: Sequence[PatientMatrix], minimum: int = 1):
    if len(cohort) < minimum:
        raise InvalidArgumentError(f"cohort needs at least {minimum} patients, got {len(cohort)}")
    genes, cell_types = cohort[0].genes, cohort[0].cell_types
    for patient in cohort[1:]:
        if patient.genes != genes or patient.cell_types != cell_types:
            raise InvalidArgumentError(f"patient {patient.patient_id}: gene or cell-type axes differ from the cohort")


def _kept_columns(cohort: Sequence[PatientMatrix], kept: CellTypes) -> List[int]:
    cell_types = cohort[0].cell_types
    if kept is None:
        return list(range(len(cell_types)))
    columns = []
    for item in kept:
        if isinstance(item, (int, np.integer)):
            if not (0 <= item < len(cell_types)):
                raise InvalidArgumentError(f"cell-type index {item} out of range")
            columns.append(int(item))
        elif item in cell_types:
            columns.append(cell_types.index(item))
        else:
            raise InvalidArgumentError(f"unknown cell type {item!r}")
    if not columns:
        raise InvalidArgumentError("no cell types kept")
    return columns


def _result(cohort, vectors, method, provenance, warnings=()) -> FeatureVectorSet:
    return FeatureVectorSet(
        vectors=np.asarray(vectors, dtype=float),
        method=method,
        provenance=provenance,
        patient_ids=tuple(p.patient_id for p in cohort),
        labels=tuple(p.label for p in cohort),
        warnings=tuple(warnings),
    )


def select_cell_types(cohort: Sequence[PatientMatrix],
                      zero_threshold: float = FEATURIZE_CONFIG["zero_threshold"]) -> List[str]:
    """Cell types whose cohort-wide proportion of zero entries does not exceed zero_threshold."""
    _check_cohort(cohort)
    stacked = np.stack([p.values for p in cohort])
    zero_share = np.mean(stacked == 0, axis=(0, 1))
    kept = [c for c, share in zip(cohort[0].cell_types, zero_share) if share <= zero_threshold]
    dropped = [c for c, share in zip(cohort[0].cell_types, zero_share) if share > zero_threshold]
    if dropped:
        logger.info(f"dropping cell types with more than {zero_threshold:.0%} zeros: {dropped}")
    return kept


def featurize_m1(cohort: Sequence[PatientMatrix], n_features: int) -> FeatureVectorSet:
    """
    Keep entries (u, v) whose across-patient SD reaches the n_f-th largest SD.

    Ties at the cutoff are all kept, so the dimension can exceed n_f. Entries are ordered
    gene-major, cell type within gene.
    """
    _check_cohort(cohort, minimum=2)
    n_genes, n_cells = cohort[0].values.shape
    if not (1 <= n_features <= n_genes * n_cells):
        raise InvalidArgumentError(f"n_features must lie in [1, {n_genes * n_cells}], got {n_features}")

    flat = np.stack([p.values.ravel() for p in cohort])
    sd = flat.std(axis=0, ddof=1)
    cutoff = np.sort(sd)[::-1][n_features - 1]
    indices = np.flatnonzero(sd >= cutoff)
    positions = [(cohort[0].genes[i // n_cells], cohort[0].cell_types[i % n_cells]) for i in indices]
    logger.debug(f"M1 keeps {len(indices)} entries (cutoff SD {cutoff:.4g})")
    return _result(cohort, flat[:, indices], "M1",
                   {"indices": indices, "positions": positions, "cutoff_sd": float(cutoff)})


def featurize_m2(cohort: Sequence[PatientMatrix], kept: CellTypes = None) -> FeatureVectorSet:
    """
    One gene combination for the whole cohort.

    The kept columns of every patient are placed side by side; the first PC of the
    transposed result gives gene loadings w (length n_g) and X_j = w^T A_j.
    """
    _check_cohort(cohort)
    columns = _kept_columns(cohort, kept)
    combined = np.hstack([p.values[:, columns] for p in cohort])
    pc = principal_component(combined.T)
    vectors = [pc.loadings @ p.values[:, columns] for p in cohort]
    warnings = () if pc.converged else ("M2 power iteration did not converge",)
    return _result(cohort, vectors, "M2",
                   {"cell_types": [cohort[0].cell_types[c] for c in columns], "loadings": pc.loadings},
                   warnings)


def _m3_vector(values: np.ndarray, patient_id) -> Tuple[np.ndarray, Optional[str]]:
    if not np.any(values):
        message = f"patient {patient_id}: all-zero matrix, zero feature vector"
        logger.warning(message)
        return np.zeros(values.shape[0]), message
    try:
        pc = principal_component(values)
    except InvalidArgumentError as e:
        message = f"patient {patient_id}: {e.message}, zero feature vector"
        logger.warning(message)
        return np.zeros(values.shape[0]), message
    return values @ np.abs(pc.loadings), None if pc.converged else f"patient {patient_id}: PC not converged"


def featurize_m3(cohort: Sequence[PatientMatrix], kept: CellTypes = None) -> FeatureVectorSet:
    """Per patient, X_j = A_j |w_j| with w_j the first-PC loadings of A_j over the kept cell types."""
    _check_cohort(cohort)
    columns = _kept_columns(cohort, kept)
    vectors, warnings = [], []
    for patient in cohort:
        vector, warning = _m3_vector(patient.values[:, columns], patient.patient_id)
        vectors.append(vector)
        if warning:
            warnings.append(warning)
    return _result(cohort, vectors, "M3",
                   {"cell_types": [cohort[0].cell_types[c] for c in columns]}, warnings)


def nonzero_mean(cohort: Sequence[PatientMatrix], kept: CellTypes = None) -> np.ndarray:
    """Entrywise mean over the patients where the entry is nonzero; 0 where all are zero."""
    _check_cohort(cohort)
    columns = _kept_columns(cohort, kept)
    stacked = np.stack([p.values[:, columns] for p in cohort])
    counts = np.count_nonzero(stacked, axis=0)
    totals = stacked.sum(axis=0)
    return np.divide(totals, counts, out=np.zeros_like(totals), where=counts > 0)


def featurize_m4(cohort: Sequence[PatientMatrix], kept: CellTypes = None) -> FeatureVectorSet:
    """One cell-type combination w from the nonzero-mean matrix; X_j = A_j w."""
    _check_cohort(cohort)
    columns = _kept_columns(cohort, kept)
    pc = principal_component(nonzero_mean(cohort, kept))
    vectors = [p.values[:, columns] @ pc.loadings for p in cohort]
    warnings = () if pc.converged else ("M4 power iteration did not converge",)
    return _result(cohort, vectors, "M4",
                   {"cell_types": [cohort[0].cell_types[c] for c in columns], "loadings": pc.loadings},
                   warnings)


def featurize(cohort: Sequence[PatientMatrix], method: str,
              n_features: int = FEATURIZE_CONFIG["n_features"],
              kept: CellTypes = None) -> FeatureVectorSet:
    """Dispatch on M1..M4."""
    method = method.upper()
    if method == "M1":
        return featurize_m1(cohort, n_features)
    if method == "M2":
        return featurize_m2(cohort, kept)
    if method == "M3":
        return featurize_m3(cohort, kept)
    if method == "M4":
        return featurize_m4(cohort, kept)
    raise InvalidArgumentError(f"unknown featurization {method!r}; choose from {list(METHODS)}")


def apply_featurization(cohort: Sequence[PatientMatrix], fitted: FeatureVectorSet) -> FeatureVectorSet:
    """
    Featurize new patients with the positions or loadings learned on another cohort.

    M3 has no fitted state and is recomputed per patient.
    """
    _check_cohort(cohort)
    provenance = fitted.provenance
    if fitted.method == "M1":
        indices = np.asarray(provenance["indices"], dtype=int)
        vectors = [p.values.ravel()[indices] for p in cohort]
        return _result(cohort, vectors, "M1", provenance)

    columns = _kept_columns(cohort, provenance["cell_types"])
    if fitted.method == "M3":
        return featurize_m3(cohort, provenance["cell_types"])
    loadings = np.asarray(provenance["loadings"], dtype=float)
    if fitted.method == "M2":
        vectors = [loadings @ p.values[:, columns] for p in cohort]
    elif fitted.method == "M4":
        vectors = [p.values[:, columns] @ loadings for p in cohort]
    else:
        raise InvalidArgumentError(f"unknown featurization {fitted.method!r}")
    return _result(cohort, vectors, fitted.method, provenance)


def make_synthetic_cohort(n_patients: int = 50, n_genes: int = 100, n_cell_types: int = 10,
                          num_classes: int = 3, effect: float = 1.0, noise: float = 0.5,
                          zero_fraction: float = 0.1, sparse_cell_type: bool = True,
                          seed: int = 0, design_seed: int = 0) -> List[PatientMatrix]:
    """
    Synthetic pseudo-bulk cohort with class-dependent means and planted zeros.

    design_seed fixes the population (baseline means and the class signature), seed the
    patients drawn from it, so cohorts with different seeds share one distribution.
    Labels cycle through 1..num_classes. With sparse_cell_type the last cell type is
    almost entirely zero.
    """
    if n_patients < 1 or n_genes < 1 or n_cell_types < 1 or num_classes < 2:
        raise InvalidArgumentError("cohort dimensions must be positive and num_classes at least 2")
    if not (0.0 <= zero_fraction < 1.0):
        raise InvalidArgumentError(f"zero_fraction must lie in [0, 1), got {zero_fraction!r}")

    design = substream(design_seed, n_genes, n_cell_types)
    baseline = design.uniform(1.0, 3.0, size=(n_genes, n_cell_types))
    signature = (design.random((n_genes, n_cell_types)) < 0.2) * design.choice([-1.0, 1.0], (n_genes, n_cell_types))

    rng = substream(seed, n_patients, num_classes)
    genes = [f"g{u + 1}" for u in range(n_genes)]
    cell_types = [f"c{v + 1}" for v in range(n_cell_types)]
    cohort = []
    for j in range(n_patients):
        label = j % num_classes + 1
        shift = effect * (num_classes - label) / max(num_classes - 1, 1)
        patient_level = 1.0 + 0.1 * rng.standard_normal()
        mean = patient_level * baseline + shift * signature
        values = np.maximum(mean + noise * rng.standard_normal((n_genes, n_cell_types)), 0.0)
        values[rng.random((n_genes, n_cell_types)) < zero_fraction] = 0.0
        if sparse_cell_type and n_cell_types > 1:
            values[rng.random(n_genes) < 0.98, -1] = 0.0
        cohort.append(PatientMatrix(values, genes, cell_types, f"p{j + 1}", label))
    logger.debug(f"synthetic cohort: {n_patients} patients, {n_genes}x{n_cell_types}, seed {seed}")
    return cohort
