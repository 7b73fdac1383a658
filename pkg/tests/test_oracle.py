import random
from fractions import Fraction as F

import pytest

from blockrand import estimators, moments, oracle
from blockrand.design import BlockDesign, enumerate_block
from blockrand.errors import EnumerationCapExceeded
from blockrand.oracle import (
    Case,
    Statistic,
    VerificationReport,
    block_statistic,
    constant_statistic,
    exact_covariance,
    exact_expectation,
    exact_moments,
    sate_diff_statistic,
    sate_ht_statistic,
    varhat_diff_statistic,
    varhat_ht_statistic,
    verify_identities,
)
from brute import table


def mu_samp(s, label=None):
    return block_statistic(label or f"mu_samp[{s}]", 0, lambda st, b: estimators.mu_hat_samp(st, s, b))


def mu_ht(s):
    return block_statistic(f"mu_ht[{s}]", 0, lambda st, b: estimators.mu_hat_ht(st, s, b))


class TestExactMoments:
    def test_sate_two_units(self):
        t = table([[[1, 3], [2, 4]]])
        m = exact_expectation(t, None, sate_diff_statistic(t.design, 1, 2))
        assert (m.expectation, m.variance, m.support_size) == (-2, 1, 2)

    def test_ht_mean_three_units(self, three_unit_table):
        m = exact_expectation(three_unit_table, None, mu_ht(1))
        assert (m.expectation, m.variance) == (2, F(20, 27))

    def test_constant(self, three_unit_table):
        m = exact_expectation(three_unit_table, None, constant_statistic(F(7, 3)))
        assert (m.expectation, m.variance) == (F(7, 3), 0)

    def test_results_are_fractions(self):
        t = table([[[0.5, 1.25], [2.0, 0.0], [1.0, 3.0]]], exact=False)
        m = exact_expectation(t, None, mu_samp(1))
        assert isinstance(m.expectation, F) and isinstance(m.variance, F)

    def test_covariance_with_self_is_variance(self, three_unit_table):
        a = mu_ht(1)
        assert exact_covariance(three_unit_table, None, a, a) == F(20, 27)

    def test_sample_mean_covariance_three_units(self):
        t = table([[[1, 2], [2, 0], [3, 5]]])
        gamma = oracle.population_params(t).block_gamma[0][0][1]
        assert exact_covariance(t, None, mu_samp(1), mu_samp(2)) == -gamma / 2

    def test_independent_blocks_uncorrelated(self):
        t = table([[[1, 2], [2, 0], [3, 5]], [[4, 1], [0, 2], [1, 1]]])
        a = block_statistic("a", 0, lambda st, b: estimators.mu_hat_samp(st, 1, b))
        b = block_statistic("b", 1, lambda st, b: estimators.mu_hat_samp(st, 1, b))
        assert exact_covariance(t, None, a, b) == 0
        plain_a = Statistic("a", a.evaluate)
        plain_b = Statistic("b", b.evaluate)
        assert exact_covariance(t, None, plain_a, plain_b) == 0

    def test_design_mismatch(self, three_unit_table):
        with pytest.raises(Exception, match="block_sizes"):
            exact_expectation(three_unit_table, BlockDesign(2, (4,)), mu_ht(1))

    def test_duplicate_labels(self, three_unit_table):
        with pytest.raises(ValueError, match="unique"):
            exact_moments(three_unit_table, [mu_ht(1), mu_ht(1)])

    def test_cap(self):
        t = table([[[1, 2]] * 8, [[0, 1]] * 8])
        stat = sate_diff_statistic(t.design, 1, 2)
        with pytest.raises(EnumerationCapExceeded, match="cap"):
            exact_expectation(t, None, Statistic("plain", stat.evaluate), cap=1000)
        # the factorized path only enumerates each block (70 labelings)
        assert exact_expectation(t, None, stat, cap=1000).support_size == 70 * 70
        with pytest.raises(EnumerationCapExceeded, match="block 1"):
            exact_expectation(t, None, stat, cap=69)

    def test_complete_mode(self):
        t = table([[[1, 3], [2, 4]], [[0, 1], [5, 2]]])
        d = t.design
        plain = Statistic("pooled", lambda st: estimators.mu_hat_samp(st, 1))
        m = exact_expectation(t, d, plain, mode="complete")
        assert m.support_size == 6
        assert m.expectation == F(1 + 2 + 0 + 5, 4)
        block = exact_expectation(t, d, plain, mode="block")
        assert block.support_size == 4
        assert block.variance != m.variance


class TestFactorization:
    @pytest.mark.parametrize(
        "rows",
        [
            [[[1, 4], [-2, 0], [3, 3]], [[5, 1], [0, 0], [2, -3], [1, 1], [4, 0]]],
            [[[1, 4, 0], [-2, 0, 2], [3, 3, 1]], [[5, 1, 1], [0, 0, 2], [2, -3, 0], [1, 1, 1]]],
        ],
    )
    def test_factorized_equals_full(self, rows):
        t = table(rows)
        d = t.design
        stats = [sate_diff_statistic(d, 1, 2), sate_ht_statistic(d, 1, 2)]
        pairs = [(stats[0].label, stats[1].label)]
        fast = exact_moments(t, stats, pairs=pairs)
        full = exact_moments(t, stats, pairs=pairs, factorize=False)
        assert fast.expectation == full.expectation
        assert fast.variance == full.variance
        assert fast.covariance == full.covariance

    def test_variance_statistics_factorize(self):
        t = table([[[1, 4], [-2, 0], [3, 3], [0, 1]], [[5, 1], [0, 0], [2, -3], [1, 1], [4, 0]]])
        d = t.design
        stats = [varhat_diff_statistic(d, 1, 2), varhat_ht_statistic(d, 1, 2)]
        assert exact_moments(t, stats).expectation == exact_moments(t, stats, factorize=False).expectation

    def test_enumeration_order_irrelevant(self, monkeypatch):
        t = table([[[1, 4], [-2, 0], [3, 3]], [[5, 1], [0, 0], [2, -3], [1, 1]]])
        d = t.design
        stat = Statistic("plain", sate_ht_statistic(d, 1, 2).evaluate)
        baseline = exact_expectation(t, None, stat)
        shuffled = list(enumerate_block(d))
        random.Random(5).shuffle(shuffled)
        monkeypatch.setattr(oracle, "enumerate_block", lambda design, cap=None: iter(shuffled))
        again = exact_expectation(t, None, stat)
        assert (again.expectation, again.variance) == (baseline.expectation, baseline.variance)

    def test_block_order_irrelevant(self, monkeypatch):
        t = table([[[1, 4], [-2, 0], [3, 3], [0, 0], [1, 2]]])
        stat = sate_diff_statistic(t.design, 1, 2)
        baseline = exact_expectation(t, None, stat)
        original = oracle.balanced_labelings
        monkeypatch.setattr(oracle, "balanced_labelings", lambda m, r: tuple(reversed(original(m, r))))
        again = exact_expectation(t, None, stat)
        assert (again.expectation, again.variance) == (baseline.expectation, baseline.variance)


def small_corpus():
    return [
        Case("shift", table([[[y, y + 1] for y in (0, 2, 5, 1)], [[y, y - 2] for y in (3, 1, 4, 1, 5)]])),
        Case("uneven", table([[[0, 1], [4, -1], [0, 1], [4, -1]], [[1, 0], [2, 0], [0, 0], [5, 2], [1, 1]]])),
        Case("three", table([[[1, 0, 2], [4, 1, 1], [0, 0, 5], [2, 3, 1], [1, 1, 1], [0, 2, 2]]])),
        Case("small", table([[[1, 0], [2, 0], [3, 0]], [[1, 2], [0, 4]]])),
    ]


class TestVerification:
    def test_small_corpus_passes(self):
        report = verify_identities(small_corpus())
        assert report.passed, [c for c in report.failures()][:3]
        summary = report.summary()
        assert set(summary) == set(oracle.IDENTITIES)
        assert all(row["fail"] == 0 for row in summary.values())

    def test_constant_shift_equality_branch(self):
        report = verify_identities(small_corpus()[:1], ["conservative-variance"])
        equal = [c for c in report.checks if "equality iff" in c.detail]
        assert equal and all(c.relation == "==" and c.lhs == c.rhs for c in equal)

    def test_strict_branch_on_unequal_variance(self):
        report = verify_identities(small_corpus()[1:2], ["conservative-variance"])
        strict = [c for c in report.checks if "equality iff" in c.detail]
        assert strict and all(c.relation == ">" and c.passed for c in strict)

    def test_selected_identity_only(self):
        report = verify_identities(small_corpus()[3:], ["sate-unbiased"])
        assert {c.identity for c in report.checks} == {"sate-unbiased"}

    def test_unknown_identity(self):
        with pytest.raises(ValueError, match="unknown identities"):
            verify_identities(small_corpus(), ["no-such-identity"])

    def test_perturbed_formula_fails(self, monkeypatch):
        original = moments.var_mu_ht
        monkeypatch.setattr(moments, "var_mu_ht", lambda values, r: original(values, r) * F(101, 100))
        report = verify_identities(small_corpus()[3:], ["ht-mean-moments"])
        assert not report.passed
        assert {c.identity for c in report.failures()} == {"ht-mean-moments"}

    def test_perturbed_estimator_fails(self, monkeypatch):
        original = estimators.sigma2_hat_samp
        monkeypatch.setattr(
            estimators, "sigma2_hat_samp", lambda study, s, block=None: original(study, s, block) + F(1, 1000)
        )
        report = verify_identities(small_corpus()[:2], ["variance-estimators-unbiased"])
        assert report.failures()

    def test_report_relations(self):
        report = VerificationReport()
        report.add("x", "c", "eq", 1, 1)
        report.add("x", "c", "ge", 2, 1, ">=")
        report.add("x", "c", "ne", 1, 2, "!=")
        assert report.passed
        report.add("x", "c", "gt", 1, 1, ">")
        assert not report.passed and len(report.failures()) == 1

    def test_indicator_suite(self):
        report = oracle.check_indicator_moments(5, 3)
        assert report.passed and len(report.checks) == 10 * 3


class TestDefaultCorpus:
    def test_shape(self):
        corpus = oracle.default_corpus()
        designs = {c.design for c in corpus}
        assert designs == set(oracle.corpus_designs())
        assert all(d.num_blocks <= 2 and max(d.block_sizes) <= 6 and d.r in (2, 3) for d in designs)
        random_tables = [c for c in corpus if "/random-" in c.label]
        assert len(random_tables) >= 50
        values = {v for c in random_tables for block in c.table.blocks for row in block for v in row}
        assert values <= set(range(-5, 6))

    def test_deterministic(self):
        assert oracle.default_corpus() == oracle.default_corpus()
        assert oracle.default_corpus(seed=1) != oracle.default_corpus()
