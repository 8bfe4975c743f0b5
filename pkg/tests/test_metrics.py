import math

import numpy as np
import pytest
from scipy import integrate

from kinfuse.metrics import (
    accuracy,
    compute_report,
    macro_f1,
    pr_auc_macro,
    pr_auc_per_class,
    roc_auc_macro,
    t_test_one_tailed,
)


def binary_scores(s):
    s = np.asarray(s, dtype=float)
    return np.stack([1.0 - s, s], axis=1)


class TestAccuracy:
    def test_all_correct(self):
        assert accuracy([1, 0, 2], [1, 0, 2]) == 1.0

    def test_all_wrong(self):
        assert accuracy([1, 1, 1], [0, 0, 0]) == 0.0

    def test_hand_case(self):
        assert accuracy([0, 1, 1, 1], [0, 0, 1, 1]) == 0.75

    def test_length_mismatch(self):
        with pytest.raises(ValueError):
            accuracy([0, 1], [0])


class TestMacroF1:
    def test_perfect(self):
        assert macro_f1([0, 1, 2], [0, 1, 2], 3) == 1.0

    def test_hand_case(self):
        got = macro_f1([0, 1, 1, 1], [0, 0, 1, 1], 2)
        assert got == pytest.approx((2.0 / 3.0 + 4.0 / 5.0) / 2.0, abs=1e-9)

    def test_single_class_predictor_balanced(self):
        # all predictions class 0 on balanced truth: F1 = (2/3 + 0) / 2
        got = macro_f1([0, 0, 0, 0], [0, 0, 1, 1], 2)
        assert got == pytest.approx((2.0 / 3.0) / 2.0, abs=1e-12)

    def test_absent_class_contributes_zero(self):
        # class 2 has no positives and no predictions: F1 convention 0
        got = macro_f1([0, 1], [0, 1], 3)
        assert got == pytest.approx(2.0 / 3.0, abs=1e-12)

    def test_relabeling_invariance(self):
        rng = np.random.default_rng(0)
        truth = rng.integers(0, 3, size=40)
        preds = rng.integers(0, 3, size=40)
        perm = np.array([2, 0, 1])
        a = macro_f1(preds, truth, 3)
        b = macro_f1(perm[preds], perm[truth], 3)
        assert a == pytest.approx(b, abs=1e-12)


class TestRocAuc:
    def test_four_point_hand_case(self):
        got = roc_auc_macro(binary_scores([0.1, 0.4, 0.35, 0.8]), [0, 0, 1, 1], 2)
        assert got == 0.75

    def test_perfect_separation(self):
        got = roc_auc_macro(binary_scores([0.1, 0.2, 0.8, 0.9]), [0, 0, 1, 1], 2)
        assert got == 1.0

    def test_all_ties_give_half(self):
        got = roc_auc_macro(binary_scores([0.5] * 6), [0, 0, 0, 1, 1, 1], 2)
        assert got == 0.5

    def test_monotone_transform_invariance(self):
        rng = np.random.default_rng(1)
        s = rng.uniform(0.01, 0.99, size=30)
        y = rng.integers(0, 2, size=30)
        a = roc_auc_macro(binary_scores(s), y, 2)
        b = roc_auc_macro(np.stack([np.log1p(1 - s), np.exp(3 * s)], axis=1), y, 2)
        assert a == pytest.approx(b, abs=1e-12)

    def test_shuffled_labels_near_half(self):
        rng = np.random.default_rng(2)
        n = 10_000
        s = rng.uniform(size=n)
        y = rng.integers(0, 2, size=n)
        got = roc_auc_macro(binary_scores(s), y, 2)
        assert abs(got - 0.5) < 0.05

    def test_degenerate_errors(self):
        with pytest.raises(ValueError):
            roc_auc_macro(binary_scores([0.2, 0.4]), [1, 1], 2)


def _pr_auc_sweep_oracle(scores, positive):
    """Exhaustive threshold sweep recomputing precision/recall from scratch."""
    scores = np.asarray(scores, dtype=float)
    positive = np.asarray(positive, dtype=bool)
    thresholds = sorted(set(scores.tolist()), reverse=True)
    n_pos = positive.sum()
    area, prev_recall = 0.0, 0.0
    for th in thresholds:
        called = scores >= th
        tp = int((called & positive).sum())
        precision = tp / int(called.sum())
        recall = tp / n_pos
        area += (recall - prev_recall) * precision
        prev_recall = recall
    return area


class TestPrAuc:
    def test_perfect_separation(self):
        got = pr_auc_macro(binary_scores([0.1, 0.2, 0.8, 0.9]), [0, 0, 1, 1], 2)
        assert got == 1.0

    def test_class_without_positives_is_skipped(self):
        scores = np.full((4, 3), 1.0 / 3.0)
        scores[:, 0] = [0.5, 0.4, 0.3, 0.2]
        rep = pr_auc_per_class(scores, np.array([0, 0, 1, 1]), 3)
        assert np.isnan(rep[2])

    def test_matches_sweep_oracle_on_random_instances(self):
        rng = np.random.default_rng(3)
        for _ in range(100):
            n = int(rng.integers(3, 21))
            y = rng.integers(0, 2, size=n)
            if y.min() == y.max():
                y[0] = 1 - y[0]
            s = np.round(rng.uniform(size=n), int(rng.integers(1, 4)))
            got = pr_auc_macro(binary_scores(s), y, 2)
            expect = 0.5 * (_pr_auc_sweep_oracle(1 - s, y == 0)
                            + _pr_auc_sweep_oracle(s, y == 1))
            assert got == pytest.approx(expect, abs=1e-9)


def _t_tail_quadrature(t_stat, dof):
    """P(T >= t) by direct numerical integration of the t density."""
    def pdf(u):
        c = math.exp(math.lgamma((dof + 1) / 2.0) - math.lgamma(dof / 2.0))
        c /= math.sqrt(dof * math.pi)
        return c * (1.0 + u * u / dof) ** (-(dof + 1) / 2.0)

    val, _ = integrate.quad(pdf, t_stat, np.inf)
    return val


class TestTTest:
    def test_identical_means_half(self):
        assert t_test_one_tailed([1.0, 2.0, 3.0], [3.0, 2.0, 1.0]) == pytest.approx(0.5)

    def test_huge_difference_tiny_p(self):
        p = t_test_one_tailed([10, 10.1, 9.9, 10.05], [1, 1.1, 0.9, 1.05])
        assert p < 1e-6

    def test_matches_quadrature_oracle(self):
        rng = np.random.default_rng(4)
        a = rng.normal(0.4, 1.0, size=20)
        b = rng.normal(0.0, 1.3, size=20)
        va, vb = a.var(ddof=1), b.var(ddof=1)
        se2 = va / 20 + vb / 20
        t = (a.mean() - b.mean()) / math.sqrt(se2)
        dof = se2 ** 2 / ((va / 20) ** 2 / 19 + (vb / 20) ** 2 / 19)
        expect = _t_tail_quadrature(t, dof)
        assert t_test_one_tailed(a, b) == pytest.approx(expect, abs=1e-6)

    def test_direction(self):
        rng = np.random.default_rng(5)
        hi = rng.normal(1.0, 0.5, size=15)
        lo = rng.normal(0.0, 0.5, size=15)
        assert t_test_one_tailed(hi, lo) < 0.05
        assert t_test_one_tailed(lo, hi) > 0.95

    def test_zero_variance_errors(self):
        with pytest.raises(ValueError):
            t_test_one_tailed([1.0, 1.0, 1.0], [1.0, 1.0])
        with pytest.raises(ValueError):
            t_test_one_tailed([1.0], [2.0, 3.0])


class TestReport:
    def test_fields_and_ranges(self):
        rng = np.random.default_rng(6)
        n, c = 60, 4
        logits = rng.normal(size=(n, c))
        scores = np.exp(logits) / np.exp(logits).sum(axis=1, keepdims=True)
        truth = rng.integers(0, c, size=n)
        rep = compute_report(scores, truth, c)
        for v in (rep.accuracy, rep.macro_f1, rep.roc_auc, rep.pr_auc):
            assert 0.0 <= v <= 1.0
        assert rep.n_eval == n
        assert len(rep.per_class_f1) == c

    def test_sample_order_invariance(self):
        rng = np.random.default_rng(7)
        scores = rng.dirichlet(np.ones(3), size=50)
        truth = rng.integers(0, 3, size=50)
        perm = rng.permutation(50)
        a = compute_report(scores, truth, 3)
        b = compute_report(scores[perm], truth[perm], 3)
        assert a.to_dict() == b.to_dict()

    def test_text_table(self):
        rng = np.random.default_rng(8)
        scores = rng.dirichlet(np.ones(2), size=20)
        truth = rng.integers(0, 2, size=20)
        text = compute_report(scores, truth, 2).to_text()
        assert "roc_auc" in text and "accuracy" in text
