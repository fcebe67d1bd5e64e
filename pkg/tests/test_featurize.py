import numpy as np
import pytest

from hnp_umbrella.data_collection.featurize import (
    PatientMatrix,
    apply_featurization,
    featurize,
    featurize_m1,
    featurize_m2,
    featurize_m3,
    featurize_m4,
    first_pc,
    make_synthetic_cohort,
    nonzero_mean,
    principal_component,
    select_cell_types,
)
from hnp_umbrella.utilities.errors import InvalidArgumentError


def patient(values, patient_id="p", label=None):
    values = np.asarray(values, dtype=float)
    genes = [f"g{u}" for u in range(values.shape[0])]
    cells = [f"c{v}" for v in range(values.shape[1])]
    return PatientMatrix(values, genes, cells, patient_id, label)


def centered_covariance(matrix):
    centered = matrix - matrix.mean(axis=0)
    return centered.T @ centered / (len(matrix) - 1)


class TestFirstPc:
    def test_axis_aligned_covariance(self):
        matrix = np.array([[2.0, 0.0], [-2.0, 0.0], [0.0, 1.0], [0.0, -1.0]])
        assert first_pc(matrix) == pytest.approx([1.0, 0.0], abs=1e-9)

    @pytest.mark.parametrize("shape", [(5, 3), (20, 8), (50, 50)])
    def test_matches_dense_eigendecomposition(self, shape):
        rng = np.random.default_rng(shape[1])
        matrix = rng.normal(size=shape) * np.linspace(3.0, 0.5, shape[1])
        pc = principal_component(matrix)
        cov = centered_covariance(matrix)
        eigenvalues, eigenvectors = np.linalg.eigh(cov)
        assert pc.converged
        assert abs(np.linalg.norm(pc.loadings) - 1.0) <= 1e-12
        assert np.linalg.norm(cov @ pc.loadings - pc.eigenvalue * pc.loadings) <= 1e-8 * max(eigenvalues[-1], 1.0)
        assert pc.eigenvalue == pytest.approx(eigenvalues[-1], rel=1e-9)
        assert abs(pc.loadings @ eigenvectors[:, -1]) == pytest.approx(1.0, abs=1e-6)

    def test_sign_convention(self):
        matrix = np.random.default_rng(2).normal(size=(12, 4))
        loadings = first_pc(matrix)
        assert loadings[np.argmax(np.abs(loadings))] > 0
        assert np.array_equal(first_pc(matrix), loadings)
        assert np.array_equal(first_pc(-matrix), loadings)

    def test_zero_matrix(self):
        with pytest.raises(InvalidArgumentError):
            first_pc(np.zeros((3, 3)))

    def test_budget_exhaustion_returns_best_iterate(self):
        matrix = np.random.default_rng(4).normal(size=(30, 6))
        pc = principal_component(matrix, tolerance=1e-300, max_iters=3)
        assert not pc.converged
        assert pc.iterations == 3
        assert abs(np.linalg.norm(pc.loadings) - 1.0) <= 1e-12


class TestM1:
    def test_hand_example(self):
        cohort = [patient([[1.0], [5.0]]), patient([[2.0], [5.0]]), patient([[3.0], [5.0]])]
        features = featurize_m1(cohort, 1)
        assert features.vectors.tolist() == [[1.0], [2.0], [3.0]]
        assert features.provenance["positions"] == [("g0", "c0")]

    def test_ties_at_cutoff_are_kept(self):
        cohort = [patient([[1.0, 1.0], [0.0, 4.0]]), patient([[2.0, 2.0], [0.0, 4.0]])]
        features = featurize_m1(cohort, 1)
        assert features.dim == 2
        assert features.provenance["indices"].tolist() == [0, 1]

    def test_needs_two_patients(self):
        with pytest.raises(InvalidArgumentError):
            featurize_m1([patient([[1.0]])], 1)

    def test_feature_count_range(self):
        cohort = [patient([[1.0]]), patient([[2.0]])]
        with pytest.raises(InvalidArgumentError):
            featurize_m1(cohort, 2)


class TestM2:
    def test_rank_one_patient(self):
        a, b = np.array([1.0, 2.0, 3.0]), np.array([1.0, 2.0])
        features = featurize_m2([patient(np.outer(a, b))])
        assert features.provenance["loadings"] == pytest.approx(a / np.linalg.norm(a))
        assert features.vectors[0] == pytest.approx(np.linalg.norm(a) * b)

    def test_identical_patients(self):
        values = np.random.default_rng(0).uniform(size=(6, 3))
        features = featurize_m2([patient(values, "a"), patient(values, "b")])
        assert np.array_equal(features.vectors[0], features.vectors[1])
        assert features.dim == 3

    def test_kept_cell_types(self):
        values = np.random.default_rng(0).uniform(size=(6, 3))
        features = featurize_m2([patient(values)], kept=["c0", "c2"])
        assert features.dim == 2
        assert features.provenance["cell_types"] == ["c0", "c2"]

    def test_empty_cohort(self):
        with pytest.raises(InvalidArgumentError):
            featurize_m2([])


class TestM3:
    def test_rank_one_patient(self):
        a, b = np.array([1.0, 2.0, 3.0]), np.array([1.0, 2.0])
        features = featurize_m3([patient(np.outer(a, b))])
        assert features.vectors[0] == pytest.approx(np.linalg.norm(b) * a)

    def test_weights_are_nonnegative(self):
        values = np.array([[1.0, -3.0], [2.0, -1.0], [3.0, 1.0], [4.0, 3.0]])
        features = featurize_m3([patient(values)])
        weights = np.abs(principal_component(values).loadings)
        assert features.vectors[0] == pytest.approx(values @ weights)

    def test_zero_patient_gets_zero_vector(self):
        cohort = [patient(np.zeros((4, 2)), "zero"), patient(np.arange(8.0).reshape(4, 2), "ok")]
        features = featurize_m3(cohort)
        assert features.vectors[0].tolist() == [0.0] * 4
        assert any("zero" in w for w in features.warnings)
        assert features.dim == 4


class TestM4:
    def test_nonzero_mean_hand_example(self):
        cohort = [patient([[2.0, 0.0], [4.0, 4.0]]), patient([[0.0, 6.0], [0.0, 2.0]])]
        assert nonzero_mean(cohort).tolist() == [[2.0, 6.0], [4.0, 3.0]]

    def test_all_zero_entry(self):
        cohort = [patient([[0.0, 1.0], [2.0, 3.0]]), patient([[0.0, 5.0], [2.0, 1.0]])]
        assert nonzero_mean(cohort)[0, 0] == 0.0

    def test_single_patient_without_zeros(self):
        values = np.array([[1.0, 2.0], [3.0, 5.0], [2.0, 2.0]])
        assert np.array_equal(nonzero_mean([patient(values)]), values)

    def test_vectors_use_common_loadings(self):
        cohort = make_synthetic_cohort(n_patients=6, n_genes=12, n_cell_types=4, seed=1)
        features = featurize_m4(cohort)
        loadings = features.provenance["loadings"]
        assert features.dim == 12
        assert features.vectors[2] == pytest.approx(cohort[2].values @ loadings)


class TestCohortOperations:
    def test_sparse_cell_type_is_dropped(self):
        cohort = make_synthetic_cohort(seed=2)
        kept = select_cell_types(cohort, 0.95)
        assert "c10" not in kept
        assert len(kept) == 9

    @pytest.mark.parametrize("method,dim", [("M1", 25), ("M2", 9), ("M3", 100), ("M4", 100)])
    def test_dimensions(self, method, dim):
        cohort = make_synthetic_cohort(n_patients=12, seed=3)
        kept = select_cell_types(cohort)
        features = featurize(cohort, method, n_features=25, kept=kept)
        assert features.dim >= dim if method == "M1" else features.dim == dim
        assert features.labels == tuple(p.label for p in cohort)

    @pytest.mark.parametrize("method", ["M1", "M2", "M3", "M4"])
    def test_patient_order_permutes_outputs(self, method):
        cohort = make_synthetic_cohort(n_patients=9, n_genes=15, n_cell_types=4, seed=4)
        forward = featurize(cohort, method, n_features=10)
        backward = featurize(cohort[::-1], method, n_features=10)
        assert np.allclose(forward.vectors[::-1], backward.vectors, atol=1e-8)

    @pytest.mark.parametrize("method", ["M1", "M2", "M3", "M4"])
    def test_reapplied_featurization_matches(self, method):
        cohort = make_synthetic_cohort(n_patients=9, n_genes=15, n_cell_types=4, seed=5)
        fitted = featurize(cohort, method, n_features=10)
        reapplied = apply_featurization(cohort, fitted)
        assert np.allclose(reapplied.vectors, fitted.vectors)

    def test_synthetic_cohort_labels_and_reproducibility(self):
        cohort = make_synthetic_cohort(n_patients=7, n_genes=5, n_cell_types=3, seed=9)
        again = make_synthetic_cohort(n_patients=7, n_genes=5, n_cell_types=3, seed=9)
        assert [p.label for p in cohort] == [1, 2, 3, 1, 2, 3, 1]
        assert all(np.array_equal(p.values, q.values) for p, q in zip(cohort, again))

    def test_dataset_needs_labels(self):
        features = featurize_m4([patient([[1.0, 2.0], [3.0, 1.0]])])
        with pytest.raises(InvalidArgumentError):
            features.to_dataset()

    def test_axes_must_agree(self):
        with pytest.raises(InvalidArgumentError):
            featurize_m4([patient([[1.0, 2.0]]), patient([[1.0], [2.0]])])

    def test_unknown_method(self):
        with pytest.raises(InvalidArgumentError):
            featurize([patient([[1.0]])], "M5")
