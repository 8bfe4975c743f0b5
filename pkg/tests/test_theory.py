import math
import warnings

import numpy as np
import pytest

from kinfuse.data import Dataset
from kinfuse.theory import (
    TheoryReport,
    agreement_bound,
    check_lemma2,
    empirical_loss,
    particular_loss,
    required_pairs,
    robustness_constant,
    verify_theorem1,
)


class TableModel:
    """Stub classifier answering from a lookup of probability rows keyed by
    the sample's first value; lets the theory ops run on exact numbers."""

    def __init__(self, table):
        self.table = {k: np.asarray(v, dtype=np.float64) for k, v in table.items()}

    def _row(self, x):
        return self.table[float(np.asarray(x).ravel()[0])]

    def predict_proba(self, x):
        return self._row(x)

    def proba_batch(self, X):
        return np.stack([self._row(x) for x in X])

    def predict(self, x):
        return int(np.argmax(self._row(x)))

    def predict_batch(self, X):
        return np.argmax(self.proba_batch(X), axis=1)


def pair(key_rich, key_poor):
    return (np.array([[key_rich]]), np.array([[key_poor]]))


def tiny_poor_set(keys, labels, n_classes=2):
    X = np.asarray(keys, dtype=float).reshape(-1, 1, 1)
    return Dataset(X, np.asarray(labels), np.arange(len(keys)), n_classes)


class TestParticularLoss:
    def test_exact_fit_is_zero(self):
        rich = TableModel({1.0: [0.7, 0.3]})
        poor = TableModel({2.0: [0.7, 0.3], 5.0: [1.0, 0.0]})
        h_p = tiny_poor_set([5.0], [0])
        assert particular_loss(poor, rich, pair(1.0, 2.0), h_p) == 0.0

    def test_extremal_case_hits_upper_bound(self):
        # opposite one-hot distributions plus a maximally wrong poor fit
        rich = TableModel({1.0: [1.0, 0.0]})
        poor = TableModel({2.0: [0.0, 1.0], 5.0: [0.0, 1.0]})
        h_p = tiny_poor_set([5.0], [0])
        val = particular_loss(poor, rich, pair(1.0, 2.0), h_p)
        assert val == pytest.approx(3.0, abs=1e-15)  # c + 1 with c = 2

    def test_hand_sum_of_squares(self):
        rich = TableModel({1.0: [0.8, 0.2]})
        poor = TableModel({2.0: [0.75, 0.25]})
        with warnings.catch_warnings():
            warnings.simplefilter("ignore")
            val = particular_loss(poor, rich, pair(1.0, 2.0), None)
        assert val == pytest.approx(0.005, abs=1e-15)

    def test_empty_poor_set_warns(self):
        rich = TableModel({1.0: [0.6, 0.4]})
        poor = TableModel({2.0: [0.6, 0.4]})
        with pytest.warns(UserWarning, match="empty poor"):
            particular_loss(poor, rich, pair(1.0, 2.0), None)

    def test_bounded_for_random_distributions(self):
        rng = np.random.default_rng(0)
        for _ in range(200):
            c = int(rng.integers(2, 6))
            t = rng.dirichlet(np.ones(c))
            s = rng.dirichlet(np.ones(c))
            sp = rng.dirichlet(np.ones(c))
            rich = TableModel({1.0: t})
            poor = TableModel({2.0: s, 5.0: sp})
            h_p = tiny_poor_set([5.0], [int(rng.integers(c))], n_classes=c)
            val = particular_loss(poor, rich, pair(1.0, 2.0), h_p)
            assert 0.0 <= val <= c + 1


class TestEmpiricalLoss:
    def _setup(self):
        rich = TableModel({1.0: [0.9, 0.1], 2.0: [0.2, 0.8]})
        poor = TableModel({10.0: [0.8, 0.2], 20.0: [0.25, 0.75],
                           5.0: [0.6, 0.4]})
        h_p = tiny_poor_set([5.0], [0])
        return rich, poor, h_p

    def _pairs(self, rich_keys, poor_keys):
        k = len(rich_keys)
        from kinfuse.data import PairedDataset

        labels = np.zeros(k, dtype=int)
        return PairedDataset(
            rich=Dataset(np.asarray(rich_keys, float).reshape(k, 1, 1), labels,
                         np.arange(k), 2),
            poor=Dataset(np.asarray(poor_keys, float).reshape(k, 1, 1),
                         labels.copy(), np.arange(k), 2))

    def test_single_pair_equals_particular(self):
        rich, poor, h_p = self._setup()
        h_o = self._pairs([1.0], [10.0])
        a = empirical_loss(poor, rich, h_o, h_p)
        b = particular_loss(poor, rich, pair(1.0, 10.0), h_p)
        assert a == pytest.approx(b, abs=1e-15)

    def test_duplicate_invariance(self):
        rich, poor, h_p = self._setup()
        once = empirical_loss(poor, rich, self._pairs([1.0], [10.0]), h_p)
        thrice = empirical_loss(poor, rich,
                                self._pairs([1.0] * 3, [10.0] * 3), h_p)
        assert once == pytest.approx(thrice, abs=1e-15)

    def test_matches_brute_force_resummation(self):
        rich, poor, h_p = self._setup()
        h_o = self._pairs([1.0, 2.0, 1.0], [10.0, 20.0, 20.0])
        got = empirical_loss(poor, rich, h_o, h_p)
        brute = np.mean([particular_loss(poor, rich,
                                         pair(r, p), h_p)
                         for r, p in ((1.0, 10.0), (2.0, 20.0), (1.0, 20.0))])
        assert got == pytest.approx(float(brute), abs=1e-15)

    def test_permutation_invariance(self):
        rich, poor, h_p = self._setup()
        a = empirical_loss(poor, rich, self._pairs([1.0, 2.0], [10.0, 20.0]), h_p)
        b = empirical_loss(poor, rich, self._pairs([2.0, 1.0], [20.0, 10.0]), h_p)
        assert a == pytest.approx(b, abs=1e-15)

    def test_empty_pairs_error(self):
        rich, poor, h_p = self._setup()
        with pytest.raises(ValueError):
            empirical_loss(poor, rich, None, h_p)


class TestRobustness:
    def test_two_point_hand_case(self):
        rich = TableModel({1.0: [0.7, 0.2, 0.1], 2.0: [0.5, 0.4, 0.1]})
        X = np.array([[[1.0]], [[2.0]]])
        assert robustness_constant(rich, X) == pytest.approx(0.05, abs=1e-12)

    def test_tie_gives_zero(self):
        rich = TableModel({1.0: [0.5, 0.5]})
        assert robustness_constant(rich, np.array([[[1.0]]])) == 0.0

    def test_one_hot_gives_half(self):
        rich = TableModel({1.0: [1.0, 0.0]})
        assert robustness_constant(rich, np.array([[[1.0]]])) == 0.5

    def test_empty_set_errors(self):
        rich = TableModel({})
        with pytest.raises(ValueError):
            robustness_constant(rich, np.zeros((0, 1, 1)))


class TestRequiredPairs:
    def test_exact_value(self):
        assert required_pairs(8, 0.1, 0.05) == 14940

    def test_quarter_eps_quadruples(self):
        # before the ceiling, halving eps multiplies the bound by 4
        base = (3 + 1) ** 2 / (2 * 0.2 ** 2) * math.log(2 / 0.1)
        quad = (3 + 1) ** 2 / (2 * 0.1 ** 2) * math.log(2 / 0.1)
        assert quad == pytest.approx(4 * base, rel=1e-12)
        assert required_pairs(3, 0.1, 0.1) >= 4 * required_pairs(3, 0.2, 0.1) - 4

    def test_delta_near_one_stays_positive(self):
        k = required_pairs(2, 0.5, 0.999)
        assert k >= 1

    def test_monotonicities(self):
        cs = [2, 3, 5, 8, 12]
        epss = [0.05, 0.1, 0.2, 0.4, 0.8]
        deltas = [0.01, 0.05, 0.1, 0.3, 0.9]
        for eps in epss:
            for delta in deltas:
                ks = [required_pairs(c, eps, delta) for c in cs]
                assert ks == sorted(ks)
        for c in cs:
            for delta in deltas:
                ks = [required_pairs(c, eps, delta) for eps in epss]
                assert ks == sorted(ks, reverse=True)
        for c in cs:
            for eps in epss:
                ks = [required_pairs(c, eps, delta) for delta in deltas]
                assert ks == sorted(ks, reverse=True)

    def test_domain_errors(self):
        for bad in ((8, 0.0, 0.05), (8, 1.0, 0.05), (8, 0.1, 0.0), (8, 0.1, 1.0)):
            with pytest.raises(ValueError):
                required_pairs(*bad)


class TestLemma2:
    def test_hand_chain(self):
        # per-class gaps 0.05 with zero poor term: loss 0.005 <= phi^2 = 0.01
        rich = TableModel({1.0: [0.8, 0.2]})
        poor = TableModel({2.0: [0.75, 0.25], 5.0: [1.0, 0.0]})
        h_p = tiny_poor_set([5.0], [0])
        verdict = check_lemma2(poor, rich, pair(1.0, 2.0), h_p, phi=0.1)
        assert verdict["condition_met"]
        assert verdict["agree"]

    def test_condition_not_met_is_no_claim(self):
        rich = TableModel({1.0: [0.9, 0.1]})
        poor = TableModel({2.0: [0.1, 0.9], 5.0: [0.5, 0.5]})
        h_p = tiny_poor_set([5.0], [0])
        verdict = check_lemma2(poor, rich, pair(1.0, 2.0), h_p, phi=0.1)
        assert not verdict["condition_met"]
        assert isinstance(verdict["agree"], bool)

    def test_identical_distributions_agree(self):
        rich = TableModel({1.0: [0.85, 0.15]})
        poor = TableModel({2.0: [0.85, 0.15], 5.0: [1.0, 0.0]})
        h_p = tiny_poor_set([5.0], [0])
        verdict = check_lemma2(poor, rich, pair(1.0, 2.0), h_p, phi=0.3)
        assert verdict["condition_met"] and verdict["agree"]

    def test_randomized_implication_mini_suite(self):
        # the implication condition_met -> agree must never fail
        rng = np.random.default_rng(1)
        violations = 0
        for _ in range(300):
            c = int(rng.integers(2, 6))
            rows = rng.dirichlet(np.ones(c) * rng.uniform(0.3, 3), size=8)
            rich = TableModel({float(i): rows[i] for i in range(8)})
            phi = robustness_constant(
                rich, np.arange(8, dtype=float).reshape(8, 1, 1))
            x_key = float(rng.integers(8))
            s = rows[int(x_key)] + rng.normal(scale=rng.uniform(0.01, 0.5), size=c)
            s = np.clip(s, 1e-9, None)
            s /= s.sum()
            poor = TableModel({x_key + 100.0: s, 500.0: rng.dirichlet(np.ones(c))})
            h_p = tiny_poor_set([500.0], [int(rng.integers(c))], n_classes=c)
            verdict = check_lemma2(poor, rich, pair(x_key, x_key + 100.0),
                                   h_p, phi=phi)
            if verdict["condition_met"] and not verdict["agree"]:
                violations += 1
        assert violations == 0


class TestAgreementBound:
    def test_hand_value(self):
        assert agreement_bound(0.0, 0.005, 0.2) == pytest.approx(0.75, abs=1e-12)

    def test_vacuous_sign(self):
        assert agreement_bound(0.05, 0.05, 0.2) < 0

    def test_limit_to_one(self):
        assert agreement_bound(0.0, 1e-12, 0.5) == pytest.approx(1.0, abs=1e-9)

    def test_monotonicities(self):
        assert agreement_bound(0.1, 0.01, 0.3) > agreement_bound(0.2, 0.01, 0.3)
        assert agreement_bound(0.1, 0.01, 0.3) > agreement_bound(0.1, 0.02, 0.3)
        assert agreement_bound(0.1, 0.01, 0.4) > agreement_bound(0.1, 0.01, 0.3)

    def test_phi_zero_errors(self):
        with pytest.raises(ValueError):
            agreement_bound(0.1, 0.01, 0.0)


class TestVerify:
    def test_small_run_mechanics_and_determinism(self):
        with warnings.catch_warnings():
            warnings.simplefilter("ignore")
            a = verify_theorem1(trials=2, eps=0.3, n_eval=60, seed=3)
            b = verify_theorem1(trials=2, eps=0.3, n_eval=60, seed=3)
        assert len(a.trials) == 2
        for t in a.trials:
            assert isinstance(t, TheoryReport)
            assert t.k_required == required_pairs(2, 0.3, 0.05)
            assert 0.0 <= t.empirical_agreement <= 1.0
            assert t.satisfied  # vacuous or not, agreement >= bound holds here
        assert a.to_json() == b.to_json()

    def test_trials_validated(self):
        with pytest.raises(ValueError):
            verify_theorem1(trials=0)
