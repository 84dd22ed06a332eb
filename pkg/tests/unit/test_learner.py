"""Test matching, row removal and the peeling learner."""

import numpy as np
import pytest

from src.errors import ParameterError, ResourceError
from src.graddescent import GradConfig
from src.learner import (
    FitReport,
    LearnerConfig,
    explained_mask,
    greedy_match,
    learn_all,
    learner_config_from_dict,
    recovery_error,
    remove_explained,
)
from src.model import Dataset, MixtureModel, sample_dataset
from src.momentdescent import MomentDescentConfig
from src.onedvar import OneDConfig
from tests.conftest import FAST_K1_LEARNER
from tests.constants import DESK_EPS, HAND_MATCH_ERROR, REMAINING_FRACTION

OTHER_REMOVED_FRACTION = 0.01

FAST_DESCENT = MomentDescentConfig(
    k=1,
    m=5000,
    T=60,
    q=10,
    eta_scale=0.3,
    accept_factor=0.95,
    one_d=OneDConfig(restarts=1, max_iters=50, tol=1e-6),
)


def _fast_config(d: int) -> LearnerConfig:
    return LearnerConfig(
        k=1,
        eps=DESK_EPS,
        pmin=1.0,
        zeta=0.1,
        eps_g=1e-3,
        descent=FAST_DESCENT,
        grad=GradConfig(d=d, m=2048),
    )


@pytest.mark.unit
class TestRecoveryError:
    """Test permutation matching."""

    def test_identity_and_reversed(self) -> None:
        truth = np.eye(2)
        assert recovery_error(truth, truth).max_error == 0.0
        reversed_match = recovery_error(truth[::-1], truth)
        assert reversed_match.permutation == [1, 0]
        assert reversed_match.max_error == 0.0

    def test_hand_example(self) -> None:
        e1, e2 = np.eye(2)
        match = recovery_error([e2 + HAND_MATCH_ERROR * e1, e1], [e1, e2])
        assert match.permutation == [1, 0]
        assert match.max_error == pytest.approx(HAND_MATCH_ERROR)

    def test_invariant_to_estimate_order(self, rng: np.random.Generator) -> None:
        truth = rng.standard_normal((4, 3))
        est = truth + 0.05 * rng.standard_normal((4, 3))
        order = rng.permutation(4)
        assert recovery_error(est[order], truth).max_error == pytest.approx(
            recovery_error(est, truth).max_error
        )

    def test_shape_mismatch_rejected(self) -> None:
        with pytest.raises(ParameterError):
            recovery_error(np.eye(2), np.eye(3))

    def test_large_k_points_to_greedy(self) -> None:
        with pytest.raises(ParameterError, match="greedy_match"):
            recovery_error(np.eye(9), np.eye(9))

    def test_greedy_agrees_on_clear_case(self) -> None:
        truth = 3 * np.eye(3)
        est = truth[[2, 0, 1]] + 0.01
        assert greedy_match(est, truth).permutation == recovery_error(est, truth).permutation


@pytest.mark.unit
class TestRowRemoval:
    """Test removal of explained rows."""

    def test_removes_exactly_one_component(self, two_component_model: MixtureModel) -> None:
        data = sample_dataset(two_component_model, 2000, np.random.default_rng(0))

        kept, removed = remove_explained(data, two_component_model.weights[0], 1e-6)

        assert data.hidden_z is not None
        assert kept.hidden_z is not None
        assert removed == int(np.sum(data.hidden_z == 0))
        assert np.all(kept.hidden_z == 1)
        assert kept.n + removed == data.n

    @pytest.mark.parametrize("separation", [0.5, 1.0])
    def test_estimated_weight_spares_other_component(self, separation: float) -> None:
        """An estimate within eps_g of w_0 removes w_0's rows and almost none of w_1's."""
        rng = np.random.default_rng(2)
        d = 10
        weights = np.zeros((2, d))
        weights[:, 0] = [separation / 2, -separation / 2]
        model = MixtureModel(
            np.array([0.5, 0.5]), weights, np.stack([np.eye(d)] * 2), delta=separation, pmin=0.5
        )
        data = sample_dataset(model, 20_000, rng)
        cfg = LearnerConfig(k=2, sigma=1.0, delta_sep=separation, pmin=0.5)
        eps_g = cfg.resolved_eps_g(d)
        u = rng.standard_normal(d)
        v = weights[0] + eps_g * u / np.linalg.norm(u)

        mask = explained_mask(data, v, cfg.removal_threshold(d))

        assert data.hidden_z is not None
        own, other = data.hidden_z == 0, data.hidden_z == 1
        assert mask[other].mean() <= OTHER_REMOVED_FRACTION
        assert mask[own].mean() >= 1 - OTHER_REMOVED_FRACTION

    def test_zero_threshold_keeps_inexact_rows(self) -> None:
        data = Dataset(np.array([[1.0], [1.0], [2.0]]), np.array([1.0, 1.5, 2.0]))
        kept, removed = remove_explained(data, np.array([1.0]), 0.0)
        assert removed == 2
        np.testing.assert_array_equal(kept.alpha, [1.5])

    def test_negative_threshold_rejected(self) -> None:
        data = Dataset(np.eye(2), np.zeros(2))
        with pytest.raises(ParameterError):
            explained_mask(data, np.zeros(2), -1.0)

    def test_true_weights_explain_everything(self) -> None:
        rng = np.random.default_rng(1)
        weights = rng.standard_normal((3, 5))
        weights /= 2 * np.linalg.norm(weights, axis=1, keepdims=True)
        model = MixtureModel(np.full(3, 1 / 3), weights, np.stack([np.eye(5)] * 3))
        data = sample_dataset(model, 10_000, rng).without_truth()
        for w in weights:
            data, _ = remove_explained(data, w, 1e-6)
        assert data.n <= REMAINING_FRACTION * 10_000


@pytest.mark.unit
class TestLearnerConfig:
    """Test derived learner settings and overrides."""

    def test_resolved_defaults(self) -> None:
        cfg = LearnerConfig(k=2, sigma=1.0, delta_sep=1.0)
        assert cfg.resolved_pmin() == pytest.approx(0.5)
        assert cfg.resolved_zeta() == pytest.approx(0.5 / 64)
        assert cfg.resolved_eps_w() == pytest.approx(0.5 / 64)

    def test_eps_g_is_floored(self) -> None:
        cfg = LearnerConfig(k=4, pmin=0.25, delta_sep=0.5, sigma=2.0)
        assert cfg.resolved_eps_g(10) == pytest.approx(1e-9)

    def test_removal_threshold_floors_log(self) -> None:
        cfg = LearnerConfig(k=1, eps_g=1e-3, removal_scale=3.0)
        assert cfg.removal_threshold(1) == pytest.approx(3e-3)

    def test_from_dict_nested_blocks(self) -> None:
        cfg = learner_config_from_dict(FAST_K1_LEARNER, k=1, d=3, sigma=2.0, eps=0.1)
        assert cfg.sigma == pytest.approx(2.0)
        assert cfg.descent is not None
        assert cfg.descent.m == FAST_K1_LEARNER["descent"]["m"]
        assert cfg.descent.one_d.restarts == FAST_K1_LEARNER["descent"]["one_d"]["restarts"]
        assert cfg.grad is not None
        assert cfg.grad.d == 3

    def test_from_dict_unknown_key(self) -> None:
        with pytest.raises(ParameterError):
            learner_config_from_dict({"not_a_knob": 1}, k=1, d=3)


@pytest.mark.unit
class TestLearnAll:
    """Test the peeling learner end to end on small instances."""

    def test_rejects_hidden_ids_outside_evaluation(self, unit_model_k1: MixtureModel) -> None:
        data = sample_dataset(unit_model_k1, 100, np.random.default_rng(0))
        with pytest.raises(ParameterError):
            learn_all(data, _fast_config(unit_model_k1.d), np.random.default_rng(0))

    def test_rejects_truth_outside_evaluation(self, unit_model_k1: MixtureModel) -> None:
        data = sample_dataset(unit_model_k1, 100, np.random.default_rng(0)).without_truth()
        with pytest.raises(ParameterError):
            learn_all(
                data, _fast_config(unit_model_k1.d), np.random.default_rng(0), truth=unit_model_k1
            )

    def test_single_component_recovery(self, unit_model_k1: MixtureModel) -> None:
        data = sample_dataset(unit_model_k1, 60_000, np.random.default_rng(1))

        report = learn_all(
            data,
            _fast_config(unit_model_k1.d),
            np.random.default_rng(2),
            evaluation=True,
            truth=unit_model_k1,
        )

        assert report.status == "ok"
        assert len(report.recovered) == 1
        assert report.recovery is not None
        assert report.recovery.max_error <= DESK_EPS
        assert report.rounds[0].removed_by_component is not None
        assert report.samples_consumed > 0
        assert report.to_dict()["matched"]["max_error"] == report.recovery.max_error

    def test_same_seed_same_answer(self, unit_model_k1: MixtureModel) -> None:
        data = sample_dataset(unit_model_k1, 20_000, np.random.default_rng(3)).without_truth()
        cfg = _fast_config(unit_model_k1.d)

        first = learn_all(data, cfg, np.random.default_rng(4))
        second = learn_all(data, cfg, np.random.default_rng(4))

        np.testing.assert_array_equal(first.recovered[0], second.recovered[0])

    def test_insufficient_data_keeps_partial_report(self, unit_model_k1: MixtureModel) -> None:
        data = sample_dataset(unit_model_k1, 1000, np.random.default_rng(5)).without_truth()

        with pytest.raises(ResourceError) as excinfo:
            learn_all(data, _fast_config(unit_model_k1.d), np.random.default_rng(6))

        partial = excinfo.value.partial
        assert isinstance(partial, FitReport)
        assert partial.status == "insufficient_data"
        assert partial.recovered == []
