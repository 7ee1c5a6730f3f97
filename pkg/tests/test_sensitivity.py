import numpy as np
import pytest
from hypothesis import given
from hypothesis import strategies as st
from scipy.stats import rankdata, wilcoxon

from fairness_audit.errors import NoInformativePairs
from fairness_audit.matching import MatchConfig, MatchResult
from fairness_audit.sensitivity import (
    BEYOND_GRID,
    DEFAULT_GRID,
    EXACT_MAX_PAIRS,
    critical_gamma,
    gamma_grid,
    pairs_from_match,
    reduce_to_pairs,
    rosenbaum_bounds,
    sensitivity_for_match,
)
from oracles import poisson_binomial_tail_max, signed_rank_tail
from conftest import synthetic, synthetic_match


def _pairs(diff):
    diff = np.asarray(diff, float)
    return np.column_stack([diff, np.zeros_like(diff)])


def test_default_grid():
    assert len(DEFAULT_GRID) == 19
    assert DEFAULT_GRID[0] == 1.0 and DEFAULT_GRID[-1] == 10.0
    np.testing.assert_allclose(np.diff(DEFAULT_GRID), 0.5)
    assert len(gamma_grid(3, 0.25)) == 9


@pytest.mark.parametrize("alternative", ["greater", "less"])
@pytest.mark.parametrize("seed", range(10))
def test_gamma_one_is_wilcoxon(seed, alternative):
    r = np.random.default_rng(seed)
    diff = np.round(r.normal(0.3, 1, 40), 1)  # rounding creates ties and zeros
    rep = rosenbaum_bounds(_pairs(diff), [1.0], alternative=alternative)
    ref = wilcoxon(diff, zero_method="wilcox", correction=True, alternative=alternative,
                   method="approx").pvalue
    assert abs(rep.p_upper[0] - ref) < 1e-12
    assert rep.p_upper[0] == rep.p_lower[0]


@pytest.mark.parametrize("seed", range(8))
def test_binary_bound_is_worst_case_assignment(seed):
    r = np.random.default_rng(seed)
    D = int(r.integers(1, 13))
    favor = int(r.integers(0, D + 1))
    yt = np.r_[np.ones(favor), np.zeros(D - favor), np.ones(3)]
    yc = np.r_[np.zeros(favor), np.ones(D - favor), np.ones(3)]  # last three concordant
    gammas = [1.0, 1.5, 3.0]
    rep = rosenbaum_bounds(np.column_stack([yt, yc]), gammas, outcome_kind="binary")
    assert rep.n_informative == D
    for g, p in zip(gammas, rep.p_upper):
        assert abs(p - poisson_binomial_tail_max(D, favor, g)) < 1e-12


def test_binary_five_of_five():
    rep = rosenbaum_bounds(np.tile([1.0, 0.0], (5, 1)), [1.0, 2.0], outcome_kind="binary")
    assert rep.p_upper[0] == pytest.approx(0.5 ** 5, abs=1e-15)
    assert rep.p_upper[1] == pytest.approx((2 / 3) ** 5, abs=1e-12)
    assert round(rep.p_upper[1], 5) == 0.13169


@pytest.mark.parametrize("n", range(2, 11))
def test_exact_equals_enumeration(n):
    r = np.random.default_rng(n)
    diff = np.round(r.normal(0.4, 1, n), 1) + 0.05  # ties, no zeros
    ranks = rankdata(np.abs(diff))
    stat = ranks[diff > 0].sum()
    rep = rosenbaum_bounds(_pairs(diff), [1.0, 2.0, 4.0], method="exact")
    for g, hi, lo in zip(rep.gammas, rep.p_upper, rep.p_lower):
        assert abs(hi - signed_rank_tail(ranks, stat, g / (1 + g))) < 1e-12
        assert abs(lo - signed_rank_tail(ranks, stat, 1 / (1 + g))) < 1e-12


@pytest.mark.parametrize("n", [9, 10])
def test_normal_approximation_close_to_enumeration(n):
    for seed in range(5):
        r = np.random.default_rng(100 * n + seed)
        diff = r.normal(0.3, 1, n)
        ranks = rankdata(np.abs(diff))
        stat = ranks[diff > 0].sum()
        rep = rosenbaum_bounds(_pairs(diff), [1.0, 1.5, 2.0])
        for g, p in zip(rep.gammas, rep.p_upper):
            assert abs(p - signed_rank_tail(ranks, stat, g / (1 + g))) <= 0.03


def test_normal_approximation_degrades_for_few_pairs():
    # why the exact method exists: at four pairs the approximation drifts past 0.03
    diff = np.array([0.9, -0.2, 1.4, 0.6])
    ranks = rankdata(np.abs(diff))
    stat = ranks[diff > 0].sum()
    approx = rosenbaum_bounds(_pairs(diff), [2.0]).p_upper[0]
    exact = rosenbaum_bounds(_pairs(diff), [2.0], method="exact").p_upper[0]
    oracle = signed_rank_tail(ranks, stat, 2 / 3)
    assert abs(exact - oracle) < 1e-12
    assert abs(approx - oracle) > 0.03


def test_exact_size_limit():
    with pytest.raises(ValueError):
        rosenbaum_bounds(_pairs(np.arange(1.0, EXACT_MAX_PAIRS + 2)), [1.0], method="exact")


def test_monotone_and_ordered_over_fixtures():
    for seed in range(100):
        r = np.random.default_rng(seed)
        kind = "binary" if seed % 2 else "numeric"
        if kind == "binary":
            pairs = r.integers(0, 2, size=(30, 2)).astype(float)
            pairs[0] = [1, 0]
        else:
            pairs = r.normal(size=(30, 2)) + [0.3, 0]
        rep = rosenbaum_bounds(pairs, DEFAULT_GRID, outcome_kind=kind)
        assert np.all(np.diff(rep.p_upper) >= -1e-15)
        assert np.all(np.diff(rep.p_lower) <= 1e-15)
        assert np.all(rep.p_lower <= rep.p_upper)
        assert rep.p_upper[0] == rep.p_lower[0]


@given(st.lists(st.floats(-5, 5, allow_nan=False).filter(lambda v: abs(v) > 1e-6),
                min_size=1, max_size=40))
def test_direction_symmetry(diffs):
    a = rosenbaum_bounds(_pairs(diffs), DEFAULT_GRID, alternative="greater")
    b = rosenbaum_bounds(_pairs(-np.asarray(diffs)), DEFAULT_GRID, alternative="less")
    np.testing.assert_array_equal(a.p_upper, b.p_upper)
    np.testing.assert_array_equal(a.p_lower, b.p_lower)


def test_critical_gamma():
    strong = rosenbaum_bounds(_pairs(np.arange(1.0, 401)), DEFAULT_GRID)
    assert critical_gamma(strong) == BEYOND_GRID
    weak = rosenbaum_bounds(_pairs([1.0, -1.2, 0.5, -0.4]), DEFAULT_GRID)
    assert weak.critical_gamma() == 1.0
    mid = rosenbaum_bounds(_pairs(np.random.default_rng(3).normal(0.5, 1, 80)), DEFAULT_GRID)
    g = mid.critical_gamma(0.05)
    i = list(mid.gammas).index(g)
    assert mid.p_upper[i] > 0.05 and np.all(mid.p_upper[:i] <= 0.05)
    assert mid.to_dict()["critical_gamma"] == g


def test_no_informative_pairs():
    with pytest.raises(NoInformativePairs):
        rosenbaum_bounds(np.ones((5, 2)), DEFAULT_GRID)
    with pytest.raises(NoInformativePairs):
        rosenbaum_bounds(np.ones((5, 2)), DEFAULT_GRID, outcome_kind="binary")


def test_bad_arguments():
    with pytest.raises(ValueError):
        rosenbaum_bounds(_pairs([1.0]), [0.5, 1.0])
    with pytest.raises(ValueError):
        rosenbaum_bounds(_pairs([1.0]), [2.0, 1.0])
    with pytest.raises(ValueError):
        rosenbaum_bounds(_pairs([1.0]), [1.0], alternative="two-sided")


def _result(treated, pairs=(), subclasses=()):
    treated = np.asarray(treated, float)
    w = np.ones(len(treated))
    return MatchResult(MatchConfig(method="nn"), treated, tuple(pairs), tuple(subclasses), w,
                       np.zeros(len(treated), bool))


def test_reduce_keeps_one_to_one_pairs():
    m = _result([1, 1, 0, 0], pairs=[(0, 2, 0.1), (1, 3, 0.2)])
    assert reduce_to_pairs(m) == [(0, 2, 0.1), (1, 3, 0.2)]


def test_reduce_shared_control_goes_to_closest_treated():
    # nearest neighbour with replacement: control 2 serves both treated rows
    m = _result([1, 1, 0], pairs=[(0, 2, 0.3), (1, 2, 0.1)])
    assert reduce_to_pairs(m) == [(1, 2, 0.1)]


def test_reduce_subclasses():
    m = _result([1, 0, 0, 1, 1, 0], subclasses=[(0, 1, 2), (3, 4, 5)])
    red = reduce_to_pairs(m)
    assert red == [(0, 1, 0.0), (3, 5, 0.0)]
    for t, c, _ in red:
        assert m.treated[t] == 1 and m.treated[c] == 0


def test_full_match_reduction_is_valid():
    d, _ = synthetic(4)
    m = synthetic_match(4, "full")
    red = reduce_to_pairs(m)
    ts, cs = [t for t, _, _ in red], [c for _, c, _ in red]
    assert len(set(ts)) == len(ts) and len(set(cs)) == len(cs)
    assert np.all(m.treated[ts] == 1) and np.all(m.treated[cs] == 0)
    sub = {i: k for k, s in enumerate(m.subclasses) for i in s}
    assert all(sub[t] == sub[c] for t, c in zip(ts, cs))
    assert len(red) == len(m.subclasses)
    assert pairs_from_match(m, d.outcome).shape == (len(red), 2)


def test_direction_follows_estimate():
    d, _ = synthetic(0, tau=-1.0, noise_sd=1.0)
    m = synthetic_match(0, "full", tau=-1.0, noise_sd=1.0)
    rep = sensitivity_for_match(m, d.outcome, "numeric", -1.0)
    assert rep.alternative == "less"
    assert rep.p_upper[0] < 0.05
