import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st
from scipy import stats

from frechet_uq.errors import FrechetUQError
from frechet_uq.frechet import fit
from frechet_uq.selection import (
    global_test,
    local_importance,
    report_rows,
    select_variables,
    w_statistics,
    wilcoxon_greater,
)
from frechet_uq.spaces import EuclideanSpace, WassersteinSpace, midpoint_grid


def exact_signed_rank_sf(n, t):
    """P(T+ >= t) under the null, by counting subsets of {1..n} with each sum."""
    counts = np.zeros(n * (n + 1) // 2 + 1)
    counts[0] = 1
    for k in range(1, n + 1):
        counts[k:] = counts[k:] + counts[:-k].copy()
    return counts[int(np.ceil(t)):].sum() / 2.0 ** n


def test_normal_approximation_matches_exact_enumeration():
    rng = np.random.default_rng(0)
    for shift in (0.0, 0.3, 0.8):
        w = rng.normal(shift, 1, 20)
        ranks = stats.rankdata(np.abs(w))
        t_plus = ranks[w > 0].sum()
        assert wilcoxon_greater(w) == pytest.approx(exact_signed_rank_sf(20, t_plus), abs=0.01)


def test_planted_ranks():
    # magnitudes 1..20, positive signs on ranks 5..20: T+ = 200; the
    # complements of subsets with sum >= 200 are the 43 subsets with sum <= 10
    w = np.arange(1, 21, dtype=float)
    w[:4] *= -1
    assert exact_signed_rank_sf(20, 200) == pytest.approx(43 / 2 ** 20)
    assert wilcoxon_greater(w) == pytest.approx(exact_signed_rank_sf(20, 200), abs=0.01)


@settings(max_examples=40, deadline=None)
@given(st.integers(0, 2**32 - 1), st.integers(10, 80))
def test_agrees_with_scipy_normal_approximation(seed, n):
    rng = np.random.default_rng(seed)
    # rounding creates ties and exact zeros
    w = np.round(rng.normal(0.2, 1, n), 1)
    if np.count_nonzero(w) == 0:
        return
    ref = stats.wilcoxon(w, alternative="greater", correction=True, method="approx",
                         zero_method="wilcox").pvalue
    assert wilcoxon_greater(w) == pytest.approx(ref, abs=1e-12)


def test_all_positive_and_symmetric_values():
    rng = np.random.default_rng(1)
    assert wilcoxon_greater(rng.uniform(0.1, 1, 50)) < 1e-6
    half = rng.uniform(0.1, 1, 25)
    assert wilcoxon_greater(np.r_[half, -half]) == pytest.approx(0.5, abs=0.05)
    assert wilcoxon_greater(np.zeros(12)) == 1.0


def test_bonferroni_threshold_and_monotonicity():
    rng = np.random.default_rng(2)
    w = rng.normal(0.25, 1, 100)
    p_raw, _ = global_test(w, 0.05, 1)
    decisions = [global_test(w, 0.05, p)[1] for p in range(1, 30)]
    assert decisions == [p_raw <= 0.05 / p for p in range(1, 30)]
    # once deselected, more variables never reselect
    assert decisions == sorted(decisions, reverse=True)
    with pytest.raises(FrechetUQError):
        global_test(w[:9], 0.05, 2)


def _scalar_design(n=200, seed=3):
    rng = np.random.default_rng(seed)
    X = rng.normal(size=(n, 3))
    Y = 2 * X[:, :1] + rng.normal(size=(n, 1))
    return X, Y


def test_zero_coefficient_column_gives_zero_w():
    # a column whose least-squares coefficient vanishes changes no prediction:
    # make x2 centered and orthogonal to both x1 and y in the training sample
    rng = np.random.default_rng(4)
    x1 = rng.normal(size=60)
    y = 1 + 3 * x1 + rng.normal(size=60)
    D = np.column_stack([np.ones(60), x1, y])
    z = rng.normal(size=60)
    z -= D @ np.linalg.lstsq(D, z, rcond=None)[0]
    X = np.column_stack([x1, z])
    model = fit(X, y[:, None], EuclideanSpace(1))
    Xt = rng.normal(size=(30, 2))
    Yt = rng.normal(size=(30, 1))
    np.testing.assert_allclose(w_statistics(model, Xt, Yt, 1), 0.0, atol=1e-9)


def test_w_against_direct_computation_and_antisymmetry():
    X, Y = _scalar_design()
    space = EuclideanSpace(1)
    full = fit(X[:100], Y[:100], space)
    red = fit(np.delete(X[:100], 0, axis=1), Y[:100], space)
    w = w_statistics(full, X[100:], Y[100:], 0)
    d_full = (Y[100:, 0] - full.predict(X[100:])[:, 0]) ** 2
    d_red = (Y[100:, 0] - red.predict(X[100:, 1:])[:, 0]) ** 2
    np.testing.assert_allclose(w, d_red - d_full, atol=1e-10)
    np.testing.assert_allclose(-w, d_full - d_red, atol=1e-10)
    np.testing.assert_array_equal(w_statistics(full, X[100:], Y[100:], 0, reduced=red), w)


def test_active_variable_has_positive_mean_w():
    X, Y = _scalar_design(2000)
    full = fit(X[:1000], Y[:1000], EuclideanSpace(1))
    assert w_statistics(full, X[1000:], Y[1000:], 0).mean() > 1.0
    assert abs(w_statistics(full, X[1000:], Y[1000:], 2).mean()) < 0.05


def test_selection_pipeline_on_distributional_responses():
    rng = np.random.default_rng(5)
    n, grid = 400, midpoint_grid(50)
    X = rng.normal(size=(n, 3))
    Y = np.sort(rng.normal(size=(n, 50)), axis=1) + 2 * X[:, :1]
    reports = select_variables(X, Y, WassersteinSpace(grid), seed=0, names=["a", "b", "c"])
    assert [r.selected for r in reports][0]
    assert [r.name for r in reports] == ["a", "b", "c"]
    rows = report_rows(reports)
    assert list(rows[0]) == ["Variable No.", "Variable Name", "Selected", "Raw p-value"]
    assert [r["Variable No."] for r in rows] == [1, 2, 3]
    again = select_variables(X, Y, WassersteinSpace(grid), seed=0)
    assert [r.p_value_raw for r in again] == [r.p_value_raw for r in reports]


def test_selection_needs_two_predictors():
    with pytest.raises(FrechetUQError) as info:
        select_variables(np.zeros((50, 1)), np.zeros((50, 1)), EuclideanSpace(1))
    assert info.value.code == "NEED_P2"


def test_null_selection_rate_is_bonferroni_bounded():
    rng = np.random.default_rng(6)
    hits = 0
    runs = 100
    for _ in range(runs):
        X = rng.normal(size=(120, 3))
        Y = rng.normal(size=(120, 1))
        hits += sum(r.selected for r in select_variables(X, Y, EuclideanSpace(1),
                                                         seed=int(rng.integers(2**31))))
    # expected at most alpha = 0.05 selections per run in total
    assert hits / runs <= 0.05 + 3 * np.sqrt(0.05 / runs)


def test_local_intervals_degenerate_cases():
    rng = np.random.default_rng(7)
    X = rng.normal(size=(40, 2))
    const = local_importance(np.full(40, 2.0), X, 0.1, seed=0)
    np.testing.assert_allclose(const.lower, 2.0, atol=1e-10)
    np.testing.assert_allclose(const.upper, 2.0, atol=1e-10)
    assert const.important.all()
    zero = local_importance(np.zeros(40), X, 0.1, seed=0)
    assert np.all(zero.lower <= 0) and np.all(zero.upper >= 0)
    assert not zero.important.any()


def test_local_importance_concentrates_at_high_values():
    rng = np.random.default_rng(8)
    x = rng.uniform(0, 4, size=(600, 1))
    w = 0.5 * x[:, 0] + 0.2 * rng.normal(size=600)
    li = local_importance(w, x, 0.1, seed=1)
    flagged = x[li.important, 0]
    # roughly 0.5 x > 1.645 * 0.2
    assert flagged.size > 0 and flagged.min() > 0.5
    assert np.all(x[~li.important, 0] < flagged.min() + 1e-12)
