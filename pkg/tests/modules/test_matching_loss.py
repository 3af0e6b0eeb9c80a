import math

import numpy as np
import pytest
from numpy.testing import assert_allclose

from freeprop.core import numerics as nx
from freeprop.core.errors import InvalidArgumentError, NonFiniteLossError
from freeprop.core.geometry import BoxCCWH, giou
from freeprop.core.numerics import Tensor, finite_difference_check
from freeprop.modules.matching_loss import LossBreakdown, LossConfig, LossParts, build_cost_matrix, classification_loss, combine_losses, hungarian_match, match_predictions, paired_giou, regression_loss, sigmoid_focal_loss, total_loss

LN2 = math.log(2.0)


def random_ccwh(rng, count):
    centers = rng.uniform(0.3, 0.7, size=(count, 2))
    sizes = rng.uniform(0.1, 0.4, size=(count, 2))
    return np.hstack([centers, sizes])


class TestHungarian:

    def test_two_by_two(self):
        cost = np.array([[1.0, 2.0], [3.0, 1.0]])
        result = hungarian_match(cost)
        assert result.pairs == [(0, 0), (1, 1)]
        assert result.cost(cost) == 2.0
        assert result.unmatched == []

    def test_single_pair(self):
        assert hungarian_match(np.array([[4.2]])).pairs == [(0, 0)]

    def test_column_minimum(self):
        result = hungarian_match(np.array([[5.0], [2.0], [9.0]]))
        assert result.pairs == [(1, 0)]
        assert result.unmatched == [0, 2]

    def test_no_ground_truth(self):
        result = hungarian_match(np.zeros((3, 0)))
        assert result.pairs == []
        assert result.unmatched == [0, 1, 2]

    def test_fewer_predictions_than_boxes(self):
        with pytest.raises(InvalidArgumentError):
            hungarian_match(np.zeros((1, 2)))

    def test_non_finite_cost(self):
        with pytest.raises(InvalidArgumentError):
            hungarian_match(np.array([[np.nan, 1.0], [1.0, 2.0]]))

    def test_against_exhaustive_search(self, brute_force_min_cost):
        rng = np.random.default_rng(0)
        for _ in range(1000):
            num_pred = int(rng.integers(1, 9))
            num_gt = int(rng.integers(0, min(num_pred, 6) + 1))
            cost = rng.normal(size=(num_pred, num_gt))
            result = hungarian_match(cost)
            assert len(result.pairs) == num_gt
            assert sorted(result.ground_truth) == list(range(num_gt))
            assert len(set(result.predictions)) == num_gt
            assert abs(result.cost(cost) - brute_force_min_cost(cost)) < 1e-9

    def test_positive_scaling_keeps_assignment(self):
        rng = np.random.default_rng(1)
        for _ in range(50):
            cost = rng.uniform(size=(6, 4))
            assert hungarian_match(cost).pairs == hungarian_match(7.3 * cost).pairs


class TestCostMatrix:

    def test_shape_and_perfect_match(self):
        rng = np.random.default_rng(2)
        gt = random_ccwh(rng, 3)
        pred = np.vstack([random_ccwh(rng, 2), gt[[2, 0, 1]]])
        cost = build_cost_matrix(np.zeros(5), pred, gt, LossConfig())
        assert cost.shape == (5, 3)
        assert match_predictions(np.zeros(5), pred, gt, LossConfig()).pairs == [(2, 2), (3, 0), (4, 1)]

    def test_confident_prediction_is_cheaper(self):
        gt = np.array([[0.5, 0.5, 0.2, 0.2]])
        cost = build_cost_matrix(np.array([4.0, -4.0]), np.vstack([gt, gt]), gt, LossConfig())
        assert cost[0, 0] < cost[1, 0]

    def test_no_ground_truth(self):
        cost = build_cost_matrix(np.zeros(2), np.array([[0.5, 0.5, 0.1, 0.1]] * 2), np.zeros((0, 4)), LossConfig())
        assert cost.shape == (2, 0)


class TestRegression:

    def test_identical_boxes(self):
        boxes = [BoxCCWH(0.4, 0.6, 0.2, 0.3)]
        assert regression_loss(boxes, boxes).item() == pytest.approx(0.0, abs=1e-10)

    def test_single_coordinate(self):
        loss = regression_loss([BoxCCWH(0.5, 0.5, 0.2, 0.2)], [BoxCCWH(0.5, 0.5, 0.4, 0.2)], weights=(1.0, 0.0))
        assert loss.item() == pytest.approx(0.2)

    def test_far_disjoint_boxes(self):
        losses = [regression_loss([BoxCCWH(0.05, 0.05, 0.1, 0.1)], [BoxCCWH(d, d, 0.1, 0.1)], weights=(0.0, 1.0)).item() for d in (1.0, 10.0, 100.0)]
        assert all(a < b for a, b in zip(losses, losses[1:]))
        assert 1.99 < losses[-1] <= 2.0

    def test_no_pairs(self):
        assert regression_loss(Tensor(np.zeros((0, 4))), np.zeros((0, 4))).item() == 0.0

    def test_count_mismatch(self):
        with pytest.raises(InvalidArgumentError):
            regression_loss(Tensor(np.zeros((2, 4))), np.zeros((1, 4)))

    def test_paired_giou_matches_scalar(self):
        rng = np.random.default_rng(3)
        pred, gt = random_ccwh(rng, 6), random_ccwh(rng, 6)
        expected = [giou(BoxCCWH(*p).to_xyxy(), BoxCCWH(*g).to_xyxy()) for p, g in zip(pred, gt)]
        assert_allclose(paired_giou(Tensor(pred), gt).data, expected, atol=1e-9)


class TestClassification:

    def test_focal_at_zero_logit(self):
        assert abs(sigmoid_focal_loss(Tensor([0.0]), np.array([1.0])).item() - 0.25 * 0.25 * LN2) < 1e-12
        assert abs(0.25 * 0.25 * LN2 - 0.04333) < 1e-4

    def test_asymptotes(self):
        assert sigmoid_focal_loss(Tensor([40.0]), np.array([1.0])).item() < 1e-12
        assert sigmoid_focal_loss(Tensor([-40.0]), np.array([0.0])).item() < 1e-12

    def test_normalized_by_matched_count(self):
        loss = classification_loss(Tensor(np.zeros(4)), [1])
        assert loss.item() == pytest.approx((0.0625 + 3 * 0.1875) * LN2)
        both = classification_loss(Tensor(np.zeros(4)), [1, 2])
        assert both.item() == pytest.approx((2 * 0.0625 + 2 * 0.1875) * LN2 / 2)

    def test_no_matches_normalizes_by_one(self):
        assert classification_loss(Tensor(np.zeros(2)), []).item() == pytest.approx(2 * 0.1875 * LN2)


class TestTotal:

    def test_weighted_sum(self):
        breakdown = total_loss(LossParts(1.0, 1.0, 1.0, 1.0), 5.0)
        assert breakdown.total == 8.0
        assert total_loss(LossParts(0.0, 0.0, 0.0, 0.0), 5.0).total == 0.0

    def test_zero_lambda_ignores_centerness(self):
        assert total_loss(LossParts(0.3, 0.2, 0.1, 0.0), 0.0).total == total_loss(LossParts(0.3, 0.2, 0.1, 9.0), 0.0).total

    @pytest.mark.parametrize('part', ['reg', 'cls', 'rt', 'ctr'])
    def test_non_finite_part_is_named(self, part):
        values = {'reg': 1.0, 'cls': 1.0, 'rt': 1.0, 'ctr': 1.0, part: float('nan')}
        with pytest.raises(NonFiniteLossError) as info:
            total_loss(LossParts(**values), 5.0, image_id='000007')
        assert info.value.part == part
        assert info.value.image_id == '000007'

    def test_combine_matches_breakdown(self):
        total, breakdown = combine_losses(Tensor(0.5), Tensor(0.25), Tensor(0.125), Tensor(0.1), 5.0)
        assert total.item() == pytest.approx(breakdown.total)
        assert breakdown.to_dict()['lambda'] == 5.0

    def test_breakdown_mean(self):
        a = LossBreakdown(1.0, 2.0, 3.0, 4.0, 10.0, 5.0)
        b = LossBreakdown(3.0, 2.0, 1.0, 0.0, 6.0, 5.0)
        mean = LossBreakdown.mean([a, b])
        assert (mean.reg, mean.cls, mean.rt, mean.ctr, mean.total) == (2.0, 2.0, 2.0, 2.0, 8.0)
        with pytest.raises(InvalidArgumentError):
            LossBreakdown.mean([])


class TestGradients:

    @pytest.mark.parametrize('seed', range(5))
    def test_regression(self, seed):
        rng = np.random.default_rng(seed)
        gt = random_ccwh(rng, 3)
        pred = gt + rng.normal(scale=0.05, size=gt.shape)
        assert finite_difference_check(lambda x: regression_loss(x, gt), pred) < 1e-3

    @pytest.mark.parametrize('seed', range(5))
    def test_classification(self, seed):
        rng = np.random.default_rng(seed)
        assert finite_difference_check(lambda x: classification_loss(x, [0, 3]), rng.normal(size=6)) < 1e-3

    def test_combined(self):
        rng = np.random.default_rng(9)
        gt = random_ccwh(rng, 2)

        def f(x):
            reg = regression_loss(nx.take(x, [0, 1]), gt)
            cls = classification_loss(nx.sum(x, axis=1), [0, 1])
            total, _ = combine_losses(reg, cls, Tensor(0.0), Tensor(0.0), 5.0)
            return total
        assert finite_difference_check(f, random_ccwh(rng, 4)) < 1e-3
