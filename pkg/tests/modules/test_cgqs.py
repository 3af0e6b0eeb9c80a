from dataclasses import replace

import numpy as np
import pytest
from numpy.testing import assert_allclose
from scipy.special import expit

from freeprop.core import numerics as nx
from freeprop.core.errors import InvalidArgumentError
from freeprop.core.geometry import Annotation, BoxXYXY
from freeprop.core.numerics import Tensor, finite_difference_check
from freeprop.modules.cgqs import BY_CLASSIFICATION, BY_COMBINED, CenterNetParams, MemoryTokens, QueryToken, assign_center_targets, center_scores, centerness_loss, score_queries, select_queries


def make_memory(features, positions=None):
    features = np.asarray(features, dtype=float)
    count = features.shape[0]
    if positions is None:
        positions = np.column_stack([np.linspace(0.1, 0.9, count), np.full(count, 0.5)])
    return MemoryTokens(Tensor(features), np.asarray(positions, dtype=float), np.ones(count, dtype=int), np.zeros_like(features))


def token(index, cls_score, center_score=1.0):
    return QueryToken(index, np.zeros(2), (0.5, 0.5), 1, cls_score, center_score)


def hand_params():
    return CenterNetParams(w1=Tensor([[1.0, 0.0], [0.0, 1.0]]), b1=Tensor([0.0, 0.0]), w2=Tensor([[1.0], [-1.0]]), b2=Tensor([0.5]))


class TestScoring:

    def test_orthogonal_token(self):
        scored = score_queries(make_memory([[1.0, 0.0]]), Tensor([[0.0, 1.0]]), hand_params())
        assert scored.cls_scores[0] == pytest.approx(0.5)

    def test_hand_params_match_direct_evaluation(self):
        features = np.array([[0.3, -0.7], [1.2, 0.4], [-0.5, -0.5]])
        embedding = np.array([[0.8, -0.1]])
        scored = score_queries(make_memory(features), Tensor(embedding), hand_params())
        hidden = np.maximum(features, 0.0)
        expected_center = expit(hidden[:, 0] - hidden[:, 1] + 0.5)
        assert_allclose(scored.center_scores.data, expected_center, atol=1e-12)
        assert_allclose(scored.cls_scores, expit(features @ embedding[0]), atol=1e-12)
        assert_allclose(scored.combined, expit(features @ embedding[0]) * expected_center, atol=1e-12)

    def test_combined_below_both_scores(self):
        rng = np.random.default_rng(0)
        params = CenterNetParams.init(rng, 4)
        scored = score_queries(make_memory(rng.normal(size=(12, 4))), Tensor(rng.normal(size=(1, 4))), params)
        for t in scored.tokens():
            assert t.combined <= min(t.cls_score, t.center_score)

    def test_tokens_carry_memory_layout(self):
        memory = make_memory([[1.0, 0.0], [0.0, 1.0]], positions=[[0.25, 0.75], [0.5, 0.5]])
        tokens = score_queries(memory, Tensor([[1.0, 1.0]]), hand_params()).tokens()
        assert [t.index for t in tokens] == [0, 1]
        assert tokens[0].position == (0.25, 0.75)
        assert tokens[1].level == 1

    def test_channel_mismatch(self):
        with pytest.raises(InvalidArgumentError):
            score_queries(make_memory([[1.0, 0.0]]), Tensor([[1.0, 0.0, 0.0]]), hand_params())


class TestSelection:

    def test_enumeration(self):
        tokens = [token(0, 0.9), token(1, 0.1), token(2, 0.5)]
        assert [t.index for t in select_queries(tokens, 2)] == [0, 2]

    def test_budget_above_token_count(self):
        tokens = [token(0, 0.2), token(1, 0.7), token(2, 0.5)]
        assert [t.index for t in select_queries(tokens, 10)] == [1, 2, 0]

    def test_ties_prefer_smaller_index(self):
        tokens = [token(3, 0.5), token(1, 0.5), token(2, 0.1)]
        assert [t.index for t in select_queries(tokens, 2)] == [1, 3]

    def test_monotone_transform_invariance(self):
        rng = np.random.default_rng(1)
        scores = rng.uniform(0.01, 0.99, size=15)
        base = [t.index for t in select_queries([token(i, s) for i, s in enumerate(scores)], 5)]
        cubed = [t.index for t in select_queries([token(i, s ** 3) for i, s in enumerate(scores)], 5)]
        assert base == cubed

    def test_center_score_reorders(self):
        tokens = [token(0, 0.9, 0.1), token(1, 0.6, 0.9)]
        assert select_queries(tokens, 1, BY_CLASSIFICATION)[0].index == 0
        assert select_queries(tokens, 1, BY_COMBINED)[0].index == 1

    def test_invalid_arguments(self):
        with pytest.raises(InvalidArgumentError):
            select_queries([token(0, 0.5)], 0)
        with pytest.raises(InvalidArgumentError):
            select_queries([token(0, 0.5)], 1, by='area')


class TestCenterTargets:

    def test_center_outside_and_nested(self):
        outer = BoxXYXY(0.0, 0.0, 1.0, 1.0)
        inner = BoxXYXY(0.1, 0.1, 0.3, 0.3)
        positions = np.array([[0.2, 0.2], [0.5, 0.5], [0.25, 0.2]])
        targets, positives = assign_center_targets(positions, Annotation([outer, inner]))
        assert positives == [0, 1, 2]
        assert targets[0] == pytest.approx(1.0)
        assert targets[1] == pytest.approx(1.0)
        assert targets[2] == pytest.approx(np.sqrt(0.05 / 0.15))

    def test_tokens_outside_every_box(self):
        targets, positives = assign_center_targets(np.array([[0.9, 0.9]]), Annotation([BoxXYXY(0.0, 0.0, 0.5, 0.5)]))
        assert positives == []
        assert targets.tolist() == [0.0]

    def test_empty_annotation(self):
        targets, positives = assign_center_targets(np.array([[0.5, 0.5], [0.1, 0.1]]), Annotation())
        assert positives == [] and targets.tolist() == [0.0, 0.0]


class TestCenternessLoss:

    def test_exact_predictions(self):
        assert centerness_loss([0.3, 0.8, 0.1], np.array([0.3, 0.8, 0.0]), [0, 1]).item() == 0.0

    def test_hand_value(self):
        assert centerness_loss([0.5], np.array([1.0]), [0]).item() == pytest.approx(0.5)

    def test_only_positives_count(self):
        assert centerness_loss([0.5, 0.0], np.array([1.0, 1.0]), [0]).item() == pytest.approx(0.5)

    def test_no_positives(self):
        assert centerness_loss([0.5, 0.2], np.array([1.0, 0.0]), []).item() == 0.0

    def test_shape_mismatch(self):
        with pytest.raises(InvalidArgumentError):
            centerness_loss([0.5, 0.2], np.array([1.0]), [0])


class TestGradients:

    @pytest.mark.parametrize('seed', range(5))
    def test_center_branch(self, seed):
        rng = np.random.default_rng(seed)
        params = CenterNetParams.init(rng, 4)
        features = rng.normal(size=(10, 4))
        positions = rng.uniform(size=(10, 2))
        targets, positives = assign_center_targets(positions, Annotation([BoxXYXY(0.1, 0.1, 0.8, 0.9)]))

        def f(w1):
            return centerness_loss(center_scores(Tensor(features), replace(params, w1=w1)), targets, positives)
        assert finite_difference_check(f, params.w1) < 1e-3

    @pytest.mark.parametrize('seed', range(5))
    def test_classification_branch(self, seed):
        rng = np.random.default_rng(seed)
        params = CenterNetParams.init(rng, 4)
        memory = make_memory(rng.normal(size=(10, 4)))
        f = lambda e: nx.sum(nx.mul(score_queries(memory, e, params).cls_logits, nx.sigmoid(memory.features.data[:, 0])))
        assert finite_difference_check(f, rng.normal(size=(1, 4))) < 1e-3
