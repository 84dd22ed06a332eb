"""Test model parameters, assumption checks and synthetic sampling."""

import json
from pathlib import Path

import numpy as np
import pytest

from src.errors import DataError, ParameterError, StructuralError
from src.model import (
    Dataset,
    MixtureModel,
    load_model,
    min_pairwise_distance,
    model_from_dict,
    random_model,
    residual_scales,
    residualize,
    sample_dataset,
    validate,
)
from tests.constants import COVARIANCE_REL_TOL, LABEL_EXACTNESS, MIXING_SIGMAS

A3_GAP = 0.1
A1_EIGENVALUE = 0.5


def _identity_model(k: int = 2, d: int = 3) -> MixtureModel:
    weights = np.zeros((k, d))
    for i in range(k):
        weights[i, i % d] = 1.0 if i < d else -1.0
    return MixtureModel(
        np.full(k, 1.0 / k), weights, np.broadcast_to(np.eye(d), (k, d, d)).copy()
    )


@pytest.mark.unit
class TestModelStructure:
    """Test shape and value checks on model construction."""

    def test_mismatched_weights_rejected(self) -> None:
        with pytest.raises(StructuralError):
            MixtureModel(np.array([0.5, 0.5]), np.zeros((3, 2)), np.ones((2, 2, 2)))

    def test_probabilities_must_sum_to_one(self) -> None:
        with pytest.raises(ParameterError):
            MixtureModel(np.array([0.5, 0.6]), np.zeros((2, 2)), np.stack([np.eye(2)] * 2))

    def test_non_finite_weights_rejected(self) -> None:
        weights = np.array([[np.nan, 0.0]])
        with pytest.raises(DataError):
            MixtureModel(np.ones(1), weights, np.eye(2)[None])

    def test_asymmetric_covariance_rejected(self) -> None:
        cov = np.array([[[1.0, 0.5], [0.0, 1.0]]])
        with pytest.raises(StructuralError):
            MixtureModel(np.ones(1), np.zeros((1, 2)), cov)

    def test_dataset_rejects_non_finite(self) -> None:
        with pytest.raises(DataError):
            Dataset(np.array([[1.0, np.inf]]), np.array([0.0]))

    def test_without_truth_drops_labels(self) -> None:
        data = Dataset(np.eye(2), np.zeros(2), np.array([0, 1]))
        assert data.without_truth().hidden_z is None
        assert data.hidden_z is not None


@pytest.mark.unit
class TestValidate:
    """Test the covariance, mixing and separation assumptions."""

    def test_identity_model_passes(self) -> None:
        report = validate(_identity_model(), sigma=1.0, delta=1.0, pmin=0.5)
        assert report.passed

    def test_small_eigenvalue_fails_a1(self) -> None:
        cov = np.stack([np.diag([A1_EIGENVALUE, 1.0]), np.eye(2)])
        weights = np.array([[1.0, 0.0], [-1.0, 0.0]])
        model = MixtureModel(np.array([0.5, 0.5]), weights, cov)

        report = validate(model, sigma=2.0, delta=1.0, pmin=0.5)

        assert not report.passed
        a1 = report.check("A1")
        assert not a1.passed
        assert a1.values["min_eigenvalue"] == pytest.approx(A1_EIGENVALUE)

    def test_close_weights_fail_a3(self) -> None:
        weights = np.array([[1.0, 0.0], [0.9, 0.0]])
        model = MixtureModel(np.array([0.5, 0.5]), weights, np.stack([np.eye(2)] * 2))

        report = validate(model, sigma=1.0, delta=0.5, pmin=0.5)

        a3 = report.check("A3")
        assert not a3.passed
        assert a3.values["min_pairwise_distance"] == pytest.approx(A3_GAP)

    def test_relaxed_a3_does_not_fail_report(self) -> None:
        weights = np.array([[1.0, 0.0], [0.9, 0.0]])
        model = MixtureModel(np.array([0.5, 0.5]), weights, np.stack([np.eye(2)] * 2))

        report = validate(model, sigma=1.0, delta=0.5, pmin=0.5, strict_a3=False)

        assert report.passed
        assert not report.check("A3").passed

    def test_mixing_floor_fails_a2(self) -> None:
        model = MixtureModel(
            np.array([0.9, 0.1]), np.array([[1.0, 0.0], [-1.0, 0.0]]), np.stack([np.eye(2)] * 2)
        )
        assert not validate(model, sigma=1.0, delta=1.0, pmin=0.2).check("A2").passed

    def test_single_component_separation_is_infinite(self) -> None:
        assert min_pairwise_distance(np.zeros((1, 3))) == float("inf")


@pytest.mark.unit
class TestSampling:
    """Test the synthetic data generator."""

    def test_labels_are_exact_inner_products(self, two_component_model: MixtureModel) -> None:
        data = sample_dataset(two_component_model, 500, np.random.default_rng(0))

        assert data.hidden_z is not None
        expected = np.einsum("nd,nd->n", data.x, two_component_model.weights[data.hidden_z])
        assert np.max(np.abs(data.alpha - expected)) <= LABEL_EXACTNESS

    def test_component_frequencies(self) -> None:
        """Component counts stay within a few binomial standard deviations of n * p_i."""
        n = 100_000
        probs = np.array([0.2, 0.3, 0.5])
        model = MixtureModel(probs, np.eye(3), np.stack([np.eye(3)] * 3))

        data = sample_dataset(model, n, np.random.default_rng(1))

        counts = np.bincount(data.hidden_z, minlength=3)
        sd = np.sqrt(n * probs * (1 - probs))
        assert np.all(np.abs(counts - n * probs) <= MIXING_SIGMAS * sd)

    def test_covariance_of_covariates(self) -> None:
        """Empirical covariance matches Sigma^2 for a diagonal square root."""
        cov_sqrt = np.diag([1.0, np.sqrt(2.0)])
        model = MixtureModel(np.ones(1), np.zeros((1, 2)), cov_sqrt[None])

        data = sample_dataset(model, 200_000, np.random.default_rng(2))

        emp = data.x.T @ data.x / data.n
        target = cov_sqrt @ cov_sqrt
        assert np.max(np.abs(emp - target)) <= COVARIANCE_REL_TOL * np.max(target)

    def test_same_seed_same_rows(self, two_component_model: MixtureModel) -> None:
        a = sample_dataset(two_component_model, 50, np.random.default_rng(9))
        b = sample_dataset(two_component_model, 50, np.random.default_rng(9))
        np.testing.assert_array_equal(a.x, b.x)
        np.testing.assert_array_equal(a.alpha, b.alpha)

    def test_invalid_size_rejected(self, two_component_model: MixtureModel) -> None:
        with pytest.raises(ParameterError):
            sample_dataset(two_component_model, 0, np.random.default_rng(0))

    def test_residualize_at_true_weight(self, unit_model_k1: MixtureModel) -> None:
        data = sample_dataset(unit_model_k1, 100, np.random.default_rng(3))
        residual = residualize(data, unit_model_k1.weights[0])
        assert np.max(np.abs(residual.alpha)) <= LABEL_EXACTNESS

    def test_residual_scales(self, two_component_model: MixtureModel) -> None:
        scales = residual_scales(two_component_model, two_component_model.weights[0])
        np.testing.assert_allclose(scales, [0.0, 1.0])


@pytest.mark.unit
class TestRandomModel:
    """Test random instances and model files."""

    def test_random_model_satisfies_assumptions(self) -> None:
        rng = np.random.default_rng(4)
        for _ in range(20):
            model = random_model(3, 10, rng, sigma=2.0, delta=0.5)
            assert validate(model, model.sigma, model.delta, model.pmin).passed

    def test_unreachable_separation_rejected(self) -> None:
        with pytest.raises(ParameterError):
            random_model(5, 1, np.random.default_rng(0), delta=1.5, max_tries=10)

    def test_model_file_with_diagonal_shorthand(self, temp_dir: Path) -> None:
        path = temp_dir / "model.json"
        payload = {
            "k": 2,
            "d": 2,
            "probs": [0.5, 0.5],
            "weights": [[1, 0], [0, 1]],
            "cov_sqrts": {"diag": [[1, 2], [1, 1]]},
        }
        path.write_text(json.dumps(payload))

        model = load_model(path)

        np.testing.assert_array_equal(model.cov_sqrts[0], np.diag([1.0, 2.0]))

    def test_model_roundtrip_through_dict(self, two_component_model: MixtureModel) -> None:
        rebuilt = model_from_dict(two_component_model.to_dict())
        np.testing.assert_array_equal(rebuilt.weights, two_component_model.weights)
        assert rebuilt.delta == two_component_model.delta

    def test_missing_key_is_structural(self) -> None:
        with pytest.raises(StructuralError):
            model_from_dict({"k": 1, "d": 2, "probs": [1.0]})

    def test_invalid_json_is_structural(self, temp_dir: Path) -> None:
        path = temp_dir / "broken.json"
        path.write_text("{not json")
        with pytest.raises(StructuralError):
            load_model(path)
