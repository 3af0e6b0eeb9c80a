import numpy as np
import pytest

from freeprop.core.enums import MatchingMode
from freeprop.core.errors import InvalidArgumentError
from freeprop.core.geometry import IOU_THRESHOLDS, Annotation, BoxXYXY, average_recall, pairwise_iou


def jittered(box, rng, scale):
    x1, y1, x2, y2 = np.clip(np.array(box.as_list()) + rng.normal(scale=scale, size=4), 0.0, 1.0)
    return BoxXYXY(min(x1, x2), min(y1, y2), max(x1, x2), max(y1, y2))


def random_instance(rng, max_gt=5, max_proposals=7):
    gt = []
    for _ in range(rng.integers(1, max_gt + 1)):
        cx, cy = rng.uniform(0.2, 0.8, size=2)
        w, h = rng.uniform(0.05, 0.4, size=2)
        gt.append(BoxXYXY(cx - w / 2, cy - h / 2, cx + w / 2, cy + h / 2))
    proposals = [jittered(gt[rng.integers(len(gt))], rng, 0.03) for _ in range(rng.integers(0, max_proposals + 1))]
    return proposals, Annotation(gt)


class TestExamples:

    def test_perfect_proposal(self):
        box = BoxXYXY(0.1, 0.1, 0.4, 0.5)
        assert average_recall([[box]], [Annotation([box])], K=1).ar == pytest.approx(1.0)

    def test_partial_overlap(self):
        gt = Annotation([BoxXYXY(0.0, 0.0, 1.0, 1.0)])
        report = average_recall([[BoxXYXY(0.0, 0.0, 1.0, 0.75)]], [gt], K=1)
        assert report.ar == pytest.approx(0.6)
        assert report.ar_large == pytest.approx(0.6)
        assert report.ar_small is None and report.ar_medium is None

    def test_no_proposals(self):
        assert average_recall([[]], [Annotation([BoxXYXY(0.1, 0.1, 0.3, 0.3)])], K=10).ar == 0.0

    def test_images_without_ground_truth_are_skipped(self):
        box = BoxXYXY(0.1, 0.1, 0.4, 0.5)
        report = average_recall([[box], [box]], [Annotation([box]), Annotation()], K=1)
        assert report.ar == pytest.approx(1.0)
        assert report.num_ground_truth == 1

    def test_budget_must_be_positive(self):
        with pytest.raises(InvalidArgumentError):
            average_recall([[]], [Annotation()], K=0)

    def test_only_top_k_count(self):
        gt = BoxXYXY(0.5, 0.5, 0.9, 0.9)
        miss = BoxXYXY(0.0, 0.0, 0.1, 0.1)
        assert average_recall([[miss, gt]], [Annotation([gt])], K=1).ar == 0.0
        assert average_recall([[miss, gt]], [Annotation([gt])], K=2).ar == pytest.approx(1.0)


class TestAgainstExhaustiveMatching:

    def test_random_instances(self, brute_force_matched_count):
        rng = np.random.default_rng(11)
        for _ in range(500):
            proposals, annotation = random_instance(rng, max_gt=5, max_proposals=8)
            K = int(rng.integers(1, 9))
            report = average_recall([proposals], [annotation], K=K)
            top = np.array([p.as_list() for p in proposals[:K]]).reshape(-1, 4)
            overlaps = pairwise_iou(top, np.array(annotation.to_list()))
            expected = np.mean([brute_force_matched_count(overlaps, t) for t in IOU_THRESHOLDS]) / len(annotation)
            assert abs(report.ar - expected) < 1e-9

    def test_greedy_never_beats_optimal(self):
        rng = np.random.default_rng(12)
        for _ in range(100):
            proposals, annotation = random_instance(rng)
            optimal = average_recall([proposals], [annotation], K=8).ar
            greedy = average_recall([proposals], [annotation], K=8, matching=MatchingMode.GREEDY).ar
            assert greedy <= optimal + 1e-12


class TestMonotonicity:

    def test_non_decreasing_in_budget(self):
        rng = np.random.default_rng(13)
        for _ in range(100):
            proposals, annotation = random_instance(rng)
            values = [average_recall([proposals], [annotation], K=k).ar for k in range(1, 9)]
            assert all(a <= b + 1e-12 for a, b in zip(values, values[1:]))

    def test_non_increasing_in_threshold(self):
        rng = np.random.default_rng(14)
        for _ in range(100):
            proposals, annotation = random_instance(rng)
            per_threshold = average_recall([proposals], [annotation], K=8).recall_per_threshold
            recalls = [per_threshold[t] for t in sorted(per_threshold)]
            assert all(a >= b - 1e-12 for a, b in zip(recalls, recalls[1:]))
