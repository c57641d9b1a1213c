"""The nine confidence quantification methods against closed forms and oracles."""

import math

import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st
from hypothesis.extra import numpy as hnp

from alsim.confidence import (
    TEMPERATURE_GRID,
    build_trust_index,
    ensemble_kld,
    ensemble_vote_entropy,
    evidential_confidence,
    fit_temperature,
    inhibited_softmax,
    label_smoothing_confidence,
    mc_dropout,
    softmax,
    temperature_scaled,
    trust_score,
)
from alsim.data import Dataset
from alsim.learner import LearnerConfig, forward_logits, loss_cross_entropy, train

finite_logits = hnp.arrays(
    np.float64, hnp.array_shapes(min_dims=2, max_dims=2, min_side=1, max_side=6),
    elements=st.floats(-50, 50))


class TestSoftmax:
    def test_symmetry(self):
        report = softmax([[0.0, 0.0]])
        assert np.allclose(report.class_distribution, [[0.5, 0.5]])
        assert report.uncertainty[0] == pytest.approx(0.5)

    def test_closed_form(self):
        report = softmax([[math.log(2), 0.0]])
        assert np.allclose(report.class_distribution, [[2 / 3, 1 / 3]], atol=1e-12)

    def test_large_logits_do_not_overflow(self):
        report = softmax([[1000.0, 0.0]])
        assert np.allclose(report.class_distribution, [[1.0, 0.0]])
        assert np.all(np.isfinite(report.class_distribution))

    @given(finite_logits, st.floats(-30, 30))
    @settings(max_examples=60, deadline=None)
    def test_shift_invariance(self, logits, shift):
        a = softmax(logits).class_distribution
        b = softmax(logits + shift).class_distribution
        assert np.allclose(a, b, atol=1e-12)

    @given(finite_logits)
    @settings(max_examples=60, deadline=None)
    def test_distribution_sums_to_one(self, logits):
        dist = softmax(logits).class_distribution
        assert np.allclose(dist.sum(axis=1), 1.0, atol=1e-9)

    def test_argmax_tie_breaks_to_lowest_class(self):
        report = softmax([[1.0, 1.0, 0.0]])
        assert report.predicted_class[0] == 0


class TestInhibitedSoftmax:
    def test_zero_logits_alpha_one(self):
        report = inhibited_softmax([[0.0, 0.0]], 1.0)
        expected = 1.0 / (2.0 + math.e)
        assert np.allclose(report.class_distribution, [[expected, expected]], atol=1e-12)
        assert report.class_distribution.sum() == pytest.approx(2 * expected)
        assert report.class_distribution.sum() < 1.0

    def test_strong_inhibition_vanishes_in_limit(self):
        z = np.array([[1.5, -0.5, 0.2]])
        a = inhibited_softmax(z, -1e3).class_distribution
        assert np.allclose(a, softmax(z).class_distribution, atol=1e-12)

    def test_scalar_oracle(self):
        z = [[5.0, 0.0]]
        denom = math.exp(5.0) + 1.0 + math.exp(1.0)
        report = inhibited_softmax(z, 1.0)
        assert report.class_distribution[0, 0] == pytest.approx(math.exp(5.0) / denom, rel=1e-12)
        assert report.class_distribution[0, 1] == pytest.approx(1.0 / denom, rel=1e-12)

    def test_sum_strictly_below_one(self):
        rng = np.random.default_rng(0)
        dist = inhibited_softmax(rng.normal(size=(20, 4)), 1.0).class_distribution
        assert np.all(dist.sum(axis=1) < 1.0)

    def test_overflow_safe(self):
        dist = inhibited_softmax([[800.0, 0.0]], 1.0).class_distribution
        assert np.all(np.isfinite(dist))


def two_cluster_dataset():
    pts = np.array([[0.0, 0.0], [0.2, 0.0], [0.0, 0.2],
                    [4.0, 0.0], [4.2, 0.0], [4.0, 0.2]])
    labels = np.array([0, 0, 0, 1, 1, 1])
    return Dataset(pts, labels, 2, np.arange(6), np.empty(0, np.int64))


class TestTrustIndex:
    def test_no_filtering_keeps_everything(self):
        ds = two_cluster_dataset()
        index = build_trust_index(ds, np.arange(6), k=2, density_fraction=0.0)
        assert index.points[0].shape == (3, 2)
        assert index.points[1].shape == (3, 2)

    def test_far_point_filtered(self):
        rng = np.random.default_rng(1)
        tight = rng.normal(size=(10, 2)) * 0.1
        far = np.array([[50.0, 50.0]])
        other = rng.normal(size=(11, 2)) * 0.1 + [8.0, 0.0]
        features = np.concatenate([tight, far, other])
        labels = np.array([0] * 11 + [1] * 11)
        ds = Dataset(features, labels, 2, np.arange(22), np.empty(0, np.int64))
        index = build_trust_index(ds, np.arange(22), k=3, density_fraction=0.1)
        assert index.points[0].shape == (10, 2)
        assert not any(np.allclose(p, [50.0, 50.0]) for p in index.points[0])

    def test_small_class_skips_filtering(self):
        ds = two_cluster_dataset()
        index = build_trust_index(ds, np.arange(6), k=10, density_fraction=0.2)
        assert index.points[0].shape == (3, 2)

    def test_missing_class_gets_empty_set(self):
        ds = two_cluster_dataset()
        index = build_trust_index(ds, np.array([0, 1, 2]), k=1)
        assert index.points[1].shape[0] == 0


class TestTrustScore:
    def test_equidistant_point(self):
        ds = two_cluster_dataset()
        index = build_trust_index(ds, np.arange(6), k=1)
        dist = np.array([[0.6, 0.4]])
        report = trust_score(index, [[2.1, 0.0]], [0], dist)
        assert report.uncertainty[0] == pytest.approx(0.5, abs=0.02)

    def test_center_of_predicted_cluster_is_trusted(self):
        ds = two_cluster_dataset()
        index = build_trust_index(ds, np.arange(6), k=1)
        report = trust_score(index, [[0.05, 0.05]], [0], np.array([[0.9, 0.1]]))
        assert report.uncertainty[0] < 0.05

    def test_hand_computed_ratio(self):
        pts = np.array([[0.0, 0.0], [4.0, 0.0], [0.0, 3.0]])
        labels = np.array([0, 1, 1])
        ds = Dataset(pts, labels, 2, np.arange(3), np.empty(0, np.int64))
        index = build_trust_index(ds, np.arange(3), k=1)
        # x=(1,0): d(class0)=1, d(class1)=3 -> ts=3 -> uncertainty 1/4
        report = trust_score(index, [[1.0, 0.0]], [0], np.array([[0.8, 0.2]]))
        assert report.uncertainty[0] == pytest.approx(0.25, rel=1e-12)

    def test_zero_distance_means_full_trust(self):
        ds = two_cluster_dataset()
        index = build_trust_index(ds, np.arange(6), k=1)
        report = trust_score(index, [[0.0, 0.0]], [0], np.array([[1.0, 0.0]]))
        assert report.uncertainty[0] == 0.0

    def test_distribution_is_copied(self):
        ds = two_cluster_dataset()
        index = build_trust_index(ds, np.arange(6), k=1)
        dist = np.array([[0.7, 0.3]])
        report = trust_score(index, [[1.0, 0.0]], [0], dist)
        assert np.array_equal(report.class_distribution, dist)
        assert report.confidence[0] == pytest.approx(0.7)

    def test_uncertainty_decreases_with_trust(self):
        ds = two_cluster_dataset()
        index = build_trust_index(ds, np.arange(6), k=1)
        xs = [[3.0, 0.0], [2.5, 0.0], [1.0, 0.0]]  # increasingly deep in class 0
        unc = trust_score(index, xs, [0, 0, 0], np.full((3, 2), 0.5)).uncertainty
        assert unc[0] > unc[1] > unc[2]


class TestEvidential:
    def test_zero_evidence_uniform(self):
        report = evidential_confidence([[0.0, -1.0, -2.0, -0.5]])
        assert np.allclose(report.class_distribution, 0.25)
        assert report.uncertainty[0] == pytest.approx(1.0)

    def test_closed_form(self):
        report = evidential_confidence([[8.0, 0.0, -1.0]])
        assert np.allclose(report.class_distribution, [[9 / 11, 1 / 11, 1 / 11]])
        assert report.uncertainty[0] == pytest.approx(3 / 11)

    def test_uncertainty_strictly_decreases_with_evidence(self):
        previous = np.inf
        for e0 in range(11):
            unc = evidential_confidence([[float(e0), 0.0, 0.0]]).uncertainty[0]
            assert unc < previous
            previous = unc

    @given(finite_logits)
    @settings(max_examples=60, deadline=None)
    def test_uncertainty_in_unit_interval(self, logits):
        unc = evidential_confidence(logits).uncertainty
        assert np.all(unc > 0.0) and np.all(unc <= 1.0)


class TestMcDropout:
    def trained_model(self, dropout):
        rng = np.random.default_rng(0)
        ds = Dataset(rng.normal(size=(40, 3)), rng.integers(0, 2, size=40), 2,
                     np.arange(40), np.empty(0, np.int64))
        cfg = LearnerConfig(hidden_sizes=(8,), dropout_rate=dropout, epochs=10, seed=1)
        return train(cfg, ds, np.arange(40)), rng.normal(size=(6, 3))

    def test_zero_dropout_equals_softmax(self):
        model, x = self.trained_model(0.0)
        report = mc_dropout(model, x, passes=50, base_seed=0)
        plain = softmax(forward_logits(model, x))
        assert np.allclose(report.class_distribution, plain.class_distribution, atol=1e-9)

    def test_single_pass_equals_one_stochastic_softmax(self):
        model, x = self.trained_model(0.3)
        report = mc_dropout(model, x, passes=1, base_seed=11)
        one = softmax(forward_logits(model, x, dropout_active=True, rng_seed=11))
        assert np.allclose(report.class_distribution, one.class_distribution, atol=1e-15)

    def test_deterministic_under_base_seed(self):
        model, x = self.trained_model(0.3)
        a = mc_dropout(model, x, passes=10, base_seed=3).class_distribution
        b = mc_dropout(model, x, passes=10, base_seed=3).class_distribution
        assert np.array_equal(a, b)

    def test_rejects_zero_passes(self):
        model, x = self.trained_model(0.3)
        with pytest.raises(ValueError):
            mc_dropout(model, x, passes=0)


class TestVoteEntropy:
    def test_unanimous_vote(self):
        members = np.tile([[0.9, 0.1]], (5, 3, 1))
        report = ensemble_vote_entropy(members)
        assert np.allclose(report.uncertainty, 0.0)

    def test_three_two_split(self):
        members = np.stack([[[0.9, 0.1]], [[0.8, 0.2]], [[0.6, 0.4]],
                            [[0.2, 0.8]], [[0.3, 0.7]]])
        expected = -(0.6 * math.log(0.6) + 0.4 * math.log(0.4))
        report = ensemble_vote_entropy(members)
        assert report.uncertainty[0] == pytest.approx(expected, abs=1e-4)
        assert report.uncertainty[0] == pytest.approx(0.6730, abs=1e-4)
        assert report.predicted_class[0] == 0  # plurality of 3

    def test_uniform_votes_hit_maximum(self):
        members = np.stack([np.eye(4)[[c]] for c in range(4)])
        report = ensemble_vote_entropy(members)
        assert report.uncertainty[0] == pytest.approx(math.log(4), rel=1e-12)

    def test_plurality_tie_takes_lowest_class(self):
        members = np.stack([[[1.0, 0.0]], [[0.0, 1.0]]])
        report = ensemble_vote_entropy(members)
        assert report.predicted_class[0] == 0

    def test_mean_distribution_reported(self):
        members = np.stack([[[0.8, 0.2]], [[0.4, 0.6]]])
        report = ensemble_vote_entropy(members)
        assert np.allclose(report.class_distribution, [[0.6, 0.4]])

    def test_needs_two_members(self):
        with pytest.raises(ValueError):
            ensemble_vote_entropy(np.ones((1, 2, 2)))


class TestEnsembleKld:
    def test_identical_members_zero(self):
        members = np.tile([[0.7, 0.3]], (4, 5, 1))
        report = ensemble_kld(members)
        assert np.all(report.uncertainty <= 1e-9)

    def test_opposed_members_approach_log2(self):
        eps = 1e-6
        members = np.stack([[[1 - eps, eps]], [[eps, 1 - eps]]])
        report = ensemble_kld(members)
        assert report.uncertainty[0] == pytest.approx(math.log(2), abs=1e-4)

    @given(st.integers(2, 5), st.integers(1, 4), st.integers(2, 4), st.integers(0, 10_000))
    @settings(max_examples=40, deadline=None)
    def test_nonnegative(self, e, m, k, seed):
        rng = np.random.default_rng(seed)
        raw = rng.random((e, m, k)) + 1e-3
        members = raw / raw.sum(axis=2, keepdims=True)
        assert np.all(ensemble_kld(members).uncertainty >= 0.0)

    def test_consensus_reported(self):
        members = np.stack([[[0.9, 0.1]], [[0.5, 0.5]]])
        report = ensemble_kld(members)
        assert np.allclose(report.class_distribution, [[0.7, 0.3]])


def grid_search_oracle(logits, labels):
    """Independent scalar grid search over the same temperature grid."""
    best_t, best_nll = None, np.inf
    for t in TEMPERATURE_GRID:
        nll = loss_cross_entropy(np.asarray(logits) / t, labels)
        if nll < best_nll:  # strict: ties keep the smallest temperature
            best_t, best_nll = t, nll
    return float(best_t)


class TestTemperature:
    def calibrated_logits(self):
        # logits equal to log class frequencies with matching empirical labels
        z = np.tile(np.log([0.8, 0.2]), (10, 1))
        y = np.array([0] * 8 + [1] * 2)
        return z, y

    def test_calibrated_logits_give_t_one(self):
        z, y = self.calibrated_logits()
        t_star = fit_temperature(z, y)
        assert t_star == pytest.approx(1.0, abs=1e-12)
        assert grid_search_oracle(z, y) == pytest.approx(t_star)

    def test_overconfident_logits_need_high_temperature(self):
        z, y = self.calibrated_logits()
        t_star = fit_temperature(z * 5.0, y)
        assert t_star == pytest.approx(5.0, abs=0.01 + 1e-9)
        assert grid_search_oracle(z * 5.0, y) == pytest.approx(t_star)

    def test_fitted_never_worse_than_unit_temperature(self):
        rng = np.random.default_rng(2)
        z = rng.normal(size=(30, 3)) * 4
        y = rng.integers(0, 3, size=30)
        t_star = fit_temperature(z, y)
        assert loss_cross_entropy(z / t_star, y) <= loss_cross_entropy(z, y) + 1e-12

    def test_grid_shape(self):
        assert TEMPERATURE_GRID.size == 1000
        assert TEMPERATURE_GRID[0] == pytest.approx(0.01)
        assert TEMPERATURE_GRID[-1] == pytest.approx(10.0)
        assert np.all(TEMPERATURE_GRID > 0)

    def test_unit_temperature_is_identity(self):
        rng = np.random.default_rng(3)
        z = rng.normal(size=(5, 4))
        assert np.array_equal(temperature_scaled(z, 1.0).class_distribution,
                              softmax(z).class_distribution)

    def test_high_temperature_flattens(self):
        dist = temperature_scaled([[3.0, 0.0, -1.0]], 1e9).class_distribution
        assert np.allclose(dist, 1 / 3, atol=1e-6)

    def test_low_temperature_sharpens(self):
        z = [[1.0, 0.0]]
        sharp = temperature_scaled(z, 0.5).class_distribution[0, 0]
        plain = softmax(z).class_distribution[0, 0]
        assert sharp > plain

    def test_nonpositive_temperature_rejected(self):
        with pytest.raises(ValueError):
            temperature_scaled([[1.0, 0.0]], 0.0)
        with pytest.raises(ValueError):
            temperature_scaled([[1.0, 0.0]], -2.0)

    @given(finite_logits, st.floats(0.01, 100.0))
    @settings(max_examples=60, deadline=None)
    def test_argmax_invariant_under_temperature(self, logits, t):
        assert np.array_equal(temperature_scaled(logits, t).predicted_class,
                              softmax(logits).predicted_class)


class TestLabelSmoothingConfidence:
    def models(self):
        rng = np.random.default_rng(0)
        ds = Dataset(rng.normal(size=(40, 3)), rng.integers(0, 3, size=40), 3,
                     np.arange(40), np.empty(0, np.int64))
        ls_cfg = LearnerConfig(hidden_sizes=(8,), loss="label_smoothing",
                               ls_alpha=0.2, epochs=10, seed=1)
        ce_cfg = LearnerConfig(hidden_sizes=(8,), epochs=10, seed=1)
        return train(ls_cfg, ds, np.arange(40)), train(ce_cfg, ds, np.arange(40)), ds

    def test_report_sums_to_one(self):
        ls_model, _, ds = self.models()
        report = label_smoothing_confidence(ls_model, ds.features[:5])
        assert np.allclose(report.class_distribution.sum(axis=1), 1.0, atol=1e-9)

    def test_warns_on_other_loss(self):
        _, ce_model, ds = self.models()
        with pytest.warns(RuntimeWarning):
            label_smoothing_confidence(ce_model, ds.features[:2])

    def test_inference_is_plain_softmax(self):
        ls_model, _, ds = self.models()
        x = ds.features[:4]
        report = label_smoothing_confidence(ls_model, x)
        assert np.array_equal(report.class_distribution,
                              softmax(forward_logits(ls_model, x)).class_distribution)
