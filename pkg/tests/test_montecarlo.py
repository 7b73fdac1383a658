import math

import numpy as np
import pytest

from blockrand import estimators, moments, oracle
from blockrand.errors import BlockRandError, VarianceUnestimableError
from blockrand.montecarlo import (
    _draw_batch,
    _evaluate_batch,
    _block_arrays,
    compare_estimators,
    simulate,
    simulate_values,
    study_from_draw,
)
from blockrand.oracle import Statistic
from brute import table

ROWS = [[[1, 4], [-2, 0], [3, 3], [0, 1], [2, 2]], [[5, 1], [0, 0], [2, -3], [1, 1]]]


def test_small_r_rejected():
    with pytest.raises(BlockRandError, match="at least 2"):
        simulate(table(ROWS, exact=False), 1, 2, R=1)


def test_unknown_statistic():
    with pytest.raises(BlockRandError, match="unknown statistic"):
        simulate(table(ROWS, exact=False), 1, 2, ("median",), R=10)


def test_variance_statistics_need_large_blocks():
    t = table([[[1, 2], [3, 4], [5, 6]]], exact=False)
    with pytest.raises(VarianceUnestimableError, match="2r"):
        simulate(t, 1, 2, ("varhat_diff",), R=10)


def test_constant_table_zero_variance():
    t = table([[[3, 3]] * 5, [[3, 3]] * 4], exact=False)
    res = simulate(t, 1, 2, ("diff",), R=5000, seed=1)["diff"]
    assert res.empirical_variance == 0.0 and res.empirical_mean == 0.0


def test_standard_error_definition():
    res = simulate(table(ROWS, exact=False), 1, 2, R=3000, seed=4)["diff"]
    assert res.mc_standard_error == math.sqrt(res.empirical_variance / 3000)
    assert res.to_dict()["replications"] == 3000


def test_bit_identical_across_workers():
    t = table(ROWS, exact=False)
    a = simulate_values(t, 1, 2, ("diff", "ht"), R=20000, seed=7, batch_size=1000, workers=1)
    b = simulate_values(t, 1, 2, ("diff", "ht"), R=20000, seed=7, batch_size=1000, workers=4)
    for name in a:
        assert a[name].tobytes() == b[name].tobytes()


def test_prefix_stable():
    # replication i depends only on (seed, i): a shorter run is a prefix of a longer one
    t = table(ROWS, exact=False)
    short = simulate_values(t, 1, 2, ("diff",), R=5000, seed=3)["diff"]
    long = simulate_values(t, 1, 2, ("diff",), R=9000, seed=3)["diff"]
    assert np.array_equal(short, long[:5000])


def test_different_seeds_differ():
    t = table(ROWS, exact=False)
    a = simulate_values(t, 1, 2, ("diff",), R=100, seed=1)["diff"]
    b = simulate_values(t, 1, 2, ("diff",), R=100, seed=2)["diff"]
    assert not np.array_equal(a, b)


def test_vectorized_matches_scalar_estimators():
    t = table(ROWS, exact=False)
    d = t.design
    labels = _draw_batch(d, 11, 0, 200)
    names = ["diff", "ht", "varhat_diff", "varhat_ht"]
    t3 = table(ROWS, exact=False)
    # blocks of 5 and 4 with r=2 support variance estimation
    vec = _evaluate_batch(_block_arrays(t3), d, labels, 1, 2, names)
    fns = {
        "diff": estimators.sate_hat_diff,
        "ht": estimators.sate_hat_ht,
        "varhat_diff": estimators.varhat_sate_diff,
        "varhat_ht": estimators.varhat_sate_ht,
    }
    for i in range(200):
        st = study_from_draw(t, labels, i)
        for name in names:
            assert vec[name][i] == pytest.approx(fns[name](st, 1, 2), abs=1e-12)


def test_custom_statistic_path():
    t = table(ROWS, exact=False)
    custom = Statistic("mu1", lambda st: estimators.mu_hat_samp(st, 1, 0))
    values = simulate_values(t, 1, 2, ("diff", custom), R=300, seed=5)
    assert set(values) == {"diff", "mu1"}
    assert values["mu1"].shape == (300,)


def test_mean_within_four_standard_errors():
    t = table(ROWS, exact=False)
    delta = float(oracle.sate_true(t, 1, 2))
    hits = 0
    for seed in range(20):
        res = simulate(t, 1, 2, ("diff",), R=4000, seed=seed)["diff"]
        hits += abs(res.empirical_mean - delta) <= 4 * res.mc_standard_error
    assert hits >= 19


def test_three_unit_block_variances_match_theory():
    t = table([[[1, 0], [2, 0], [3, 0]]], exact=False)
    cmp = compare_estimators(t, 1, 2, R=100_000, seed=12)
    assert abs(cmp.diff.empirical_variance - cmp.theoretical_var_diff) <= 4 * cmp.diff.variance_standard_error
    assert abs(cmp.ht.empirical_variance - cmp.theoretical_var_ht) <= 4 * cmp.ht.variance_standard_error
    assert cmp.theoretical_var_ht == pytest.approx(20 / 27)
    assert not cmp.divisible and not cmp.identical_per_draw
    d = cmp.to_dict()
    assert {"theoretical_var_diff", "theoretical_var_ht"} <= set(d)


def test_divisible_blocks_identical_draws():
    t = table([[[1, 4], [-2, 0], [3, 3], [0, 1]], [[5, 1], [0, 0]]], exact=False)
    cmp = compare_estimators(t, 1, 2, R=5000, seed=2)
    assert cmp.divisible and cmp.identical_per_draw
    assert cmp.variance_difference == 0.0


def test_variance_estimator_conservative_on_corpus():
    cases = [c for c in oracle.default_corpus() if c.design.supports_variance_estimation()][:12]
    for case in cases:
        t = case.table
        res = simulate(t, 1, 2, ("varhat_diff",), R=4000, seed=9)["varhat_diff"]
        truth = float(moments.var_sate_diff(t, 1, 2))
        assert res.empirical_mean >= truth - 4 * res.mc_standard_error - 1e-12, case.label
