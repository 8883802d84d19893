import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st

from frechet_uq.errors import EmptyDataError, FrechetUQError
from frechet_uq.frechet import fit
from frechet_uq.regions import (
    ConformalKnnRadius,
    ConstantRadius,
    KnnRadius,
    PredictionRegion,
    ResidualSample,
    coverage,
    fit_heteroscedastic_conformal,
    fit_heteroscedastic_knn,
    fit_homoscedastic,
    fit_unconditional,
    quantile_rank,
    radius_rule_from_dict,
    residuals,
    split,
    symmetric_difference_error,
)
from frechet_uq.spaces import EuclideanSpace, WassersteinSpace, midpoint_grid


def sample_with(r, X=None, seed=0):
    return ResidualSample.from_values(np.asarray(r, dtype=float), X, seed=seed)


# -- splitting -----------------------------------------------------------------


def test_split_sizes_and_disjointness():
    s = split(10, (0.5, 0.5), seed=1)
    assert len(s.train) == len(s.test) == 5 and s.calib is None
    assert not set(s.train) & set(s.test)
    s3 = split(10, (0.4, 0.4, 0.2), seed=1)
    assert [len(s3.train), len(s3.test), len(s3.calib)] == [4, 4, 2]
    assert len(set(s3.train) | set(s3.test) | set(s3.calib)) == 10


def test_split_is_deterministic_under_seed():
    a, b = split(50, (0.5, 0.3), seed=7), split(50, (0.5, 0.3), seed=7)
    np.testing.assert_array_equal(a.train, b.train)
    np.testing.assert_array_equal(a.test, b.test)


def test_split_rejects_bad_fractions():
    with pytest.raises(EmptyDataError):
        split(3, (0.5, 0.2), seed=0)
    with pytest.raises(FrechetUQError):
        split(10, (0.7, 0.7), seed=0)


# -- residuals -----------------------------------------------------------------


def test_perfect_fit_gives_zero_residuals():
    X = np.arange(6.0)[:, None]
    Y = 2 * X + 1
    model = fit(X, Y, EuclideanSpace(1))
    np.testing.assert_allclose(residuals(model, X, Y, seed=0).residuals, 0, atol=1e-12)


def test_constant_offset_residuals_three_four_five():
    space = EuclideanSpace(2, "euclidean")
    center = np.array([1.0, 1.0])
    X = np.zeros((4, 1))
    Y = np.tile(center + [3.0, 4.0], (4, 1))
    np.testing.assert_allclose(residuals(center, X, Y, space, seed=0).residuals, 5.0)


def test_sup_norm_residuals_are_max_grid_gaps():
    grid = midpoint_grid(4)
    space = WassersteinSpace(grid, d2_choice="sup")
    center = np.array([0.0, 1.0, 2.0, 3.0])
    Y = np.array([[0.5, 1.0, 2.0, 3.0], [0.0, 1.0, 2.0, 5.0], [-1.0, 0.7, 2.1, 3.0]])
    r = residuals(center, np.zeros((3, 1)), Y, space, seed=0).residuals
    np.testing.assert_allclose(r, [0.5, 2.0, 1.0])


# -- homoscedastic -------------------------------------------------------------


def test_conformal_order_statistic():
    # ceil(0.8 * 5) = 4th smallest of {1, 2, 3, 4}
    assert fit_homoscedastic(sample_with([3, 1, 4, 2]), 0.2).value == 4.0
    assert quantile_rank(4, 0.2) == 4
    assert quantile_rank(4, 0.2, "plugin") == 4
    assert quantile_rank(10, 0.1, "plugin") == 9


def test_constant_residuals_give_constant_radius():
    for alpha in (0.1, 0.3, 0.5, 0.9):
        assert fit_homoscedastic(sample_with(np.full(20, 1.7)), alpha).value == 1.7


def test_tiny_alpha_gives_infinite_radius():
    rule = fit_homoscedastic(sample_with([1.0, 2.0, 3.0]), 0.01)
    assert rule.value == np.inf


def test_empty_sample_is_an_error():
    with pytest.raises(EmptyDataError):
        fit_homoscedastic(sample_with([]), 0.1)


def test_ties_are_ordered_by_tiebreak_keys():
    s = ResidualSample(np.array([1.0, 1.0, 2.0]), np.zeros((3, 0)), np.array([0.9, 0.1, 0.5]))
    assert fit_homoscedastic(s, 0.5).value == 1.0


@settings(max_examples=50, deadline=None)
@given(st.integers(0, 2**32 - 1), st.floats(0.01, 0.98), st.floats(0.01, 0.98))
def test_radius_is_monotone_in_alpha(seed, a1, a2):
    a1, a2 = sorted((a1, a2))
    rng = np.random.default_rng(seed)
    X = rng.normal(size=(60, 2))
    s = sample_with(rng.exponential(size=60), X, seed=seed)
    assert fit_homoscedastic(s, a1).value >= fit_homoscedastic(s, a2).value
    Q = rng.normal(size=(15, 2))
    for k in (1, 7, 60):
        assert np.all(KnnRadius(s, k, a1)(Q) >= KnnRadius(s, k, a2)(Q))


# -- kNN -----------------------------------------------------------------------


@settings(max_examples=40, deadline=None)
@given(st.integers(0, 2**32 - 1), st.floats(0.01, 0.98))
def test_knn_with_all_neighbours_is_homoscedastic_plugin(seed, alpha):
    rng = np.random.default_rng(seed)
    s = sample_with(rng.exponential(size=40), rng.normal(size=(40, 3)), seed=seed)
    homo = fit_homoscedastic(s, alpha, convention="plugin").value
    np.testing.assert_array_equal(KnnRadius(s, 40, alpha)(rng.normal(size=(9, 3))), homo)


def test_single_neighbour_at_a_sample_point_returns_its_residual():
    rng = np.random.default_rng(3)
    X = rng.normal(size=(10, 2))
    r = rng.exponential(size=10)
    rule = fit_heteroscedastic_knn(sample_with(r, X), 0.3, 1)
    np.testing.assert_array_equal(rule(X), r)


def test_planted_knn_toy():
    # neighbours of the query 0 by distance: idx 2 (0.1), 0 (0.5), 4 (1.0), 1 (2.0), 3 (3.0)
    X = np.array([[0.5], [2.0], [-0.1], [-3.0], [1.0]])
    r = np.array([5.0, 100.0, 1.0, 200.0, 3.0])
    s = sample_with(r, X)
    # k = 3, alpha = 0.4: plugin index ceil(0.6 * 3) = 2 of {1, 5, 3} -> 3
    assert KnnRadius(s, 3, 0.4)(np.array([[0.0]]))[0] == 3.0
    # k = 4, alpha = 0.1: index ceil(0.9 * 4) = 4 of {1, 5, 3, 100} -> 100
    assert KnnRadius(s, 4, 0.1)(np.array([[0.0]]))[0] == 100.0


def test_equidistant_neighbours_follow_tiebreak_keys():
    X = np.array([[-1.0], [1.0], [5.0]])
    s = ResidualSample(np.array([10.0, 20.0, 0.0]), X, np.array([0.7, 0.2, 0.5]))
    assert KnnRadius(s, 1, 0.5)(np.array([[0.0]]))[0] == 20.0


@settings(max_examples=30, deadline=None)
@given(st.integers(0, 2**32 - 1), st.integers(1, 30))
def test_knn_neighbours_match_brute_force(seed, k):
    rng = np.random.default_rng(seed)
    # rounded predictors produce exact distance ties
    X = np.round(rng.normal(size=(30, 2)), 1)
    s = sample_with(rng.exponential(size=30), X, seed=seed)
    rule = KnnRadius(s, k, 0.2)
    Q = np.round(rng.normal(size=(6, 2)), 1)
    nbr = rule.neighbors(Q)
    for q, row in zip(Q, nbr):
        d = np.sqrt(((X - q) ** 2).sum(axis=1))
        ref = sorted(range(30), key=lambda i: (d[i], s.tiebreak[i], i))[:k]
        assert list(row) == ref


def test_k_out_of_range():
    s = sample_with([1.0, 2.0], np.zeros((2, 1)))
    for k in (0, 3):
        with pytest.raises(FrechetUQError) as info:
            fit_heteroscedastic_knn(s, 0.1, k)
        assert info.value.code == "K_RANGE"


# -- conformalized kNN ---------------------------------------------------------


def test_conformal_offset_is_calibration_order_statistic():
    X = np.zeros((5, 1))
    s = sample_with(np.zeros(5), X)  # kNN radius is 0 everywhere
    scores = np.array([-1.0, 2.0, 0.5, -0.5, 3.0, 1.0, 0.0, 1.5, 2.5])
    calib = sample_with(scores, np.zeros((9, 1)))
    # alpha = 0.2: ceil(0.8 * 10) = 8th smallest of the scores -> 2.5
    rule = fit_heteroscedastic_conformal(s, calib, 0.2, 2)
    assert rule.offset == 2.5
    np.testing.assert_array_equal(rule(np.zeros((3, 1))), 2.5)


def test_constant_undercoverage_inflates_radius():
    rng = np.random.default_rng(4)
    X = rng.normal(size=(20, 1))
    s = sample_with(rng.exponential(size=20), X)
    base = KnnRadius(s, 5, 0.2)
    Xc = rng.normal(size=(9, 1))
    calib = sample_with(base(Xc) + 0.3, Xc)
    rule = fit_heteroscedastic_conformal(s, calib, 0.2, 5)
    assert rule.offset == pytest.approx(0.3)
    Q = rng.normal(size=(5, 1))
    np.testing.assert_allclose(rule(Q), base(Q) + 0.3)


def test_conformal_radius_is_floored_at_zero():
    rule = ConformalKnnRadius(KnnRadius(sample_with([1.0, 2.0], np.zeros((2, 1))), 1, 0.5), -5.0)
    assert rule(np.zeros((1, 1)))[0] == 0.0


def test_empty_calibration_split():
    s = sample_with([1.0, 2.0], np.zeros((2, 1)))
    with pytest.raises(EmptyDataError) as info:
        fit_heteroscedastic_conformal(s, sample_with(np.zeros(0), np.zeros((0, 1))), 0.1, 1)
    assert info.value.code == "MODE_ARGS"


# -- unconditional regions and evaluation --------------------------------------


def test_unconditional_line():
    region = fit_unconditional(np.arange(5.0)[:, None], 0.5, EuclideanSpace(1), seed=0)
    np.testing.assert_allclose(region.center, [2.0])
    # distances {2, 1, 0, 1, 2}; ceil(0.5 * 6) = 3rd smallest -> 1
    assert region.radius_rule.value == 1.0
    assert region.contains(None, [3.0]) and not region.contains(None, [3.5])


def test_unconditional_degenerate_and_boundary():
    assert fit_unconditional([[1.0], [1.0]], 0.5, EuclideanSpace(1)).radius_rule.value == 0.0
    assert fit_unconditional([[0.0], [1.0], [2.0]], 0.05, EuclideanSpace(1)).radius_rule.value \
        == np.inf
    with pytest.raises(EmptyDataError):
        fit_unconditional([[1.0]], 0.5, EuclideanSpace(1))


def test_closed_ball_and_sentinels():
    space = EuclideanSpace(2, "euclidean")
    ball = PredictionRegion(np.zeros(2), ConstantRadius(5.0), 0.1, space)
    assert ball.contains(None, [3.0, 4.0])
    assert ball.contains(None, [0.0, 0.0])
    whole = PredictionRegion(np.zeros(2), ConstantRadius(np.inf), 0.1, space)
    rng = np.random.default_rng(0)
    Y = rng.normal(size=(50, 2)) * 1e6
    assert coverage(whole, None, Y) == 1.0
    point = PredictionRegion(np.zeros(2), ConstantRadius(0.0), 0.1, space)
    assert coverage(point, None, Y) == 0.0
    assert symmetric_difference_error(whole, point, None, Y) == 1.0
    assert symmetric_difference_error(ball, ball, None, Y) == 0.0
    with pytest.raises(EmptyDataError):
        coverage(ball, None, np.zeros((0, 2)))


def test_model_centered_region():
    rng = np.random.default_rng(5)
    X = rng.normal(size=(200, 1))
    Y = X + rng.normal(size=(200, 1))
    model = fit(X[:100], Y[:100], EuclideanSpace(1))
    rule = fit_homoscedastic(residuals(model, X[100:], Y[100:], seed=1), 0.1)
    region = PredictionRegion(model, rule, 0.1, model.space)
    x = np.array([0.5])
    c = model.predict(x)
    assert region.contains(x, c)
    assert region.contains(x, c + 0.999 * rule.value)
    assert not region.contains(x, c - 1.001 * rule.value)


@pytest.mark.parametrize("rule", [
    ConstantRadius(2.5),
    ConstantRadius(np.inf),
    KnnRadius(sample_with([1.0, 2.0, 3.0], np.arange(3.0)[:, None]), 2, 0.3),
    ConformalKnnRadius(KnnRadius(sample_with([1.0, 2.0, 3.0], np.arange(3.0)[:, None]), 2, 0.3),
                       -0.25),
])
def test_radius_rule_round_trip(rule):
    back = radius_rule_from_dict(rule.to_dict())
    Q = np.linspace(-1, 4, 7)[:, None]
    np.testing.assert_array_equal(back(Q), rule(Q))
