import sys
sys.path.insert(1, '../src')
import math
import numpy as np
import pytest
from DMLpy.Data import Dataset, FoldPlan, make_dgp, make_folds
from DMLpy.Nuisance import Dictionary, NuisanceRecipe, cross_fit
from DMLpy.Scores import MomentFunctional
from DMLpy.Inference import *
from DMLpy.Utilities import ValidationError, DegenerateScoreError


ate = MomentFunctional('many_treatments', treated=1, control=0)
toy = Dataset([1.0, 2.0, 3.0, 4.0, 6.0, 8.0], [0, 0, 0, 1, 1, 1])
toy_plan = FoldPlan.no_splitting(toy.n)
toy_fits = cross_fit(toy, toy_plan, [NuisanceRecipe(ate, Dictionary.from_config((0, 1), 0), ridge=0.0)])
toy_estimates = estimate_targets(toy, [ate], toy_fits, toy_plan)

rng = np.random.default_rng(12)
independent = ScoreMatrix(rng.standard_normal((500, 2)), ['a', 'b'])


def cdf_band(grid, estimates, lower, upper):
    return CdfBandResult(grid, 1, estimates, estimates, lower, upper, np.ones(len(grid)), 100, 2.0, 0.95, True)


def test_difference_in_means_without_covariates():
    """
    Without covariates the estimate of the contrast is the difference in group means
    """
    assert toy_estimates.theta_hat[0] == pytest.approx(4.0, abs=1e-8)
    assert toy_estimates.sigma_hat[0] == pytest.approx(math.sqrt(40.0 / 6.0), abs=1e-6)
    assert toy_estimates.standard_errors()[0] == pytest.approx(toy_estimates.sigma_hat[0] / math.sqrt(6.0))
    assert abs(toy_estimates.score.mean()[0]) < 1e-12


def test_estimates_require_a_matching_plan():
    """
    Functionals and fits must agree in number
    """
    with pytest.raises(ValidationError):
        estimate_targets(toy, [ate, ate], toy_fits, toy_plan)


def test_score_matrix_is_read_only():
    """
    Evaluated scores cannot be modified
    """
    with pytest.raises(ValueError):
        toy_estimates.score.values[0, 0] = 1.0


def test_correlation_of_one_target():
    """
    A single target has correlation one and needs no ridge
    """
    correlation = estimate_correlation(toy_estimates.score)
    assert np.allclose(correlation.matrix, [[1.0]])
    assert correlation.ridge_applied == 0.0


def test_duplicated_scores_get_a_ridge():
    """
    A singular correlation is regularized and keeps its unit diagonal
    """
    column = rng.standard_normal(100)
    correlation = estimate_correlation(ScoreMatrix(np.column_stack([column, column]), ['a', 'a copy']))
    assert correlation.ridge_applied == 1e-8
    assert np.allclose(np.diag(correlation.matrix), 1.0)
    assert correlation.matrix[0, 1] == pytest.approx(1.0 / (1.0 + 1e-8))


def test_constant_score_is_degenerate():
    """
    A zero-variance column has no correlation
    """
    with pytest.raises(DegenerateScoreError):
        estimate_correlation(ScoreMatrix(np.column_stack([np.ones(10), np.arange(10.0)]), ['flat', 'ramp']))


def test_critical_value_of_one_target():
    """
    With one target the sup-t value is the normal quantile 1.95996
    """
    assert sup_t_critical_value(np.eye(1), 0.95, 100000, 0) == pytest.approx(1.95996, abs=0.03)
    assert sup_t_critical_value(np.eye(1), 0.95, 100000, 0, sided='one_sided') == pytest.approx(1.64485, abs=0.03)


def test_critical_value_of_two_independent_targets():
    """
    Two independent targets give the Sidak value 2.2365
    """
    assert sup_t_critical_value(np.eye(2), 0.95, 100000, 1) == pytest.approx(2.2365, abs=0.03)


def test_critical_value_is_reproducible_and_blockwise():
    """
    Draws depend only on the seed and the block layout
    """
    assert sup_t_critical_value(np.eye(3), 0.9, 5000, 4) == sup_t_critical_value(np.eye(3), 0.9, 5000, 4)
    long = gaussian_max_sample(np.eye(2), 60000, 3)
    short = gaussian_max_sample(np.eye(2), 50000, 3)
    assert np.array_equal(long[:50000], short)
    assert long.shape == (60000, )


def test_critical_value_validation():
    """
    Levels outside (0, 1) and fewer than 1000 draws are rejected
    """
    with pytest.raises(ValidationError):
        sup_t_critical_value(np.eye(1), 1.5)
    with pytest.raises(ValidationError):
        sup_t_critical_value(np.eye(1), 0.95, draws=999)
    with pytest.raises(ValidationError):
        gaussian_max_sample(np.eye(1), 10, 0, sided='left')


def test_critical_value_ignores_target_order():
    """
    A permuted correlation matrix gives the same draws, and permuted scores give permuted band rows
    """
    matrix = np.array([[1.0, 0.6, -0.2], [0.6, 1.0, 0.3], [-0.2, 0.3, 1.0]])
    order = [2, 0, 1]
    permuted = matrix[np.ix_(order, order)]
    assert np.array_equal(gaussian_max_sample(matrix, 20000, 7), gaussian_max_sample(permuted, 20000, 7))
    assert sup_t_critical_value(matrix, 0.95, 20000, 7) == sup_t_critical_value(permuted, 0.95, 20000, 7)
    assert np.array_equal(canonical_order(matrix), [2, 0, 1])
    assert np.array_equal(canonical_order(permuted), [0, 1, 2])

    mixing = np.array([[1.0, 0.5, 0.0, 0.2], [0.0, 1.0, 0.4, 0.0], [0.0, 0.0, 1.0, -0.3], [0.0, 0.0, 0.0, 1.0]])
    values = rng.standard_normal((400, 4)) @ mixing
    names = ['a', 'b', 'c', 'd']
    shuffle = [2, 0, 3, 1]
    score = ScoreMatrix(values, names)
    shuffled = ScoreMatrix(values[:, shuffle], [names[j] for j in shuffle])
    theta, sigma = np.array([0.1, 0.2, 0.3, 0.4]), np.array([1.0, 2.0, 0.5, 1.5])
    band = build_bands(EstimateSet(theta, sigma, 400, score, names), estimate_correlation(score), draws=20000, seed=2)
    moved = build_bands(EstimateSet(theta[shuffle], sigma[shuffle], 400, shuffled, shuffled.names),
                        estimate_correlation(shuffled), draws=20000, seed=2)
    assert moved.critical_value == pytest.approx(band.critical_value, abs=1e-10)
    assert moved.names == [names[j] for j in shuffle]
    assert np.allclose(moved.lower, band.lower[shuffle], atol=1e-10)
    assert np.allclose(moved.upper, band.upper[shuffle], atol=1e-10)


def test_gaussian_draws_do_not_depend_on_workers():
    """
    One and eight worker processes draw identical blocks
    """
    matrix = np.array([[1.0, 0.3], [0.3, 1.0]])
    assert np.array_equal(gaussian_max_sample(matrix, 120000, 5, workers=1),
                          gaussian_max_sample(matrix, 120000, 5, workers=8))


def test_perfectly_correlated_targets_act_as_one():
    """
    A hundred copies of one score keep the critical value within 0.02 of the normal quantile 1.95996
    """
    column = rng.standard_normal((300, 1))
    copies = ScoreMatrix(np.tile(column, (1, 100)), ['copy {}'.format(j) for j in range(100)])
    correlation = estimate_correlation(copies)
    assert correlation.ridge_applied > 0
    assert sup_t_critical_value(correlation, 0.95, 200000, 11) == pytest.approx(1.95996, abs=0.02)


def test_studentized_statistics_ignore_the_outcome_scale():
    """
    Multiplying the outcome by 7.5 leaves every t-statistic and the critical value unchanged
    """
    generator = np.random.default_rng(31)
    n = 400
    x = generator.standard_normal((n, 1))
    d = generator.integers(0, 3, n)
    y = x[:, 0] + 0.5 * (d == 1) - 0.3 * (d == 2) + generator.standard_normal(n)
    functionals = [MomentFunctional('many_treatments', treated=1, control=0),
                   MomentFunctional('many_treatments', treated=2, control=0), MomentFunctional('outcome_mean')]
    plan = make_folds(n, 2, 5)
    dictionary = Dictionary.from_config((0, 1, 2), 1)
    results = []
    for scale in (1.0, 7.5):
        data = Dataset(scale * y, d, x, labels=(0, 1, 2))
        fits = cross_fit(data, plan, [NuisanceRecipe(f, dictionary) for f in functionals])
        estimates = estimate_targets(data, functionals, fits, plan)
        band = build_bands(estimates, estimate_correlation(estimates.score), draws=5000, seed=9)
        results.append((estimates.t_statistics(np.zeros(3)), band.critical_value))
    assert np.allclose(results[0][0], results[1][0], rtol=0, atol=1e-10)
    assert results[0][1] == pytest.approx(results[1][1], abs=1e-10)


def test_bands_are_nested_in_the_level():
    """
    A lower level gives a narrower band from the same draws
    """
    correlation = estimate_correlation(independent)
    estimates = EstimateSet(np.zeros(2), np.ones(2), 500, independent, ['a', 'b'])
    narrow = build_bands(estimates, correlation, level=0.9, draws=20000, seed=5)
    wide = build_bands(estimates, correlation, level=0.95, draws=20000, seed=5)
    assert narrow.critical_value <= wide.critical_value
    assert np.all(wide.lower <= narrow.lower) and np.all(narrow.upper <= wide.upper)


def test_band_with_a_critical_value_override():
    """
    Overrides fix the half width; zero collapses the band and one-sided bands are open above
    """
    correlation = estimate_correlation(toy_estimates.score)
    band = build_bands(toy_estimates, correlation, critical_value=2.0)
    half = 2.0 * toy_estimates.sigma_hat[0] / math.sqrt(6.0)
    assert band.lower[0] == pytest.approx(4.0 - half) and band.upper[0] == pytest.approx(4.0 + half)
    assert band.covers([4.0]) and not band.covers([4.0 + 2 * half])
    point = build_bands(toy_estimates, correlation, critical_value=0.0)
    assert np.array_equal(point.lower, point.upper)
    one_sided = build_bands(toy_estimates, correlation, sided='one_sided', critical_value=1.0)
    assert one_sided.upper[0] == np.inf
    with pytest.raises(ValidationError):
        build_bands(toy_estimates, correlation, critical_value=-1.0)
    assert band.to_dict()['targets'][0]['name'] == ate.name


def test_default_grid():
    """
    Quartiles of 1..9 are 3, 5 and 7
    """
    data = Dataset(np.arange(1.0, 10.0), [0, 1] * 4 + [0])
    assert default_grid(data, size=3).tolist() == [3.0, 5.0, 7.0]
    with pytest.raises(ValidationError):
        default_grid(data, arm=2)


def test_monotonize():
    """
    Adjacent violators are pooled and the result clipped to [0, 1]
    """
    assert np.allclose(monotonize([1, 2, 3], [0.2, 0.1, 0.5]), [0.15, 0.15, 0.5])
    assert np.allclose(monotonize([1, 2], [-0.1, 1.2]), [0.0, 1.0])


def test_quantile_effect_from_two_bands():
    """
    Generalized inverses of the curves and of the crossed envelopes
    """
    grid = np.array([1.0, 2.0, 3.0])
    treated = cdf_band(grid, [0.2, 0.6, 1.0], [0.0, 0.4, 1.0], [0.4, 0.8, 1.0])
    control = cdf_band(grid, [0.5, 0.8, 1.0], [0.3, 0.6, 1.0], [0.7, 1.0, 1.0])
    point, (low, high) = qte_from_cdf(treated, control, 0.5)
    assert point == 1.0
    assert (low, high) == (0.0, 2.0)


def test_quantile_outside_the_estimated_range():
    """
    Missing inverses of the curves are errors; missing envelope inverses are infinite ends
    """
    grid = np.array([1.0, 2.0, 3.0])
    short = cdf_band(grid, [0.1, 0.2, 0.3], [0.0, 0.1, 0.2], [0.2, 0.3, 0.4])
    full = cdf_band(grid, [0.2, 0.6, 1.0], [0.0, 0.4, 1.0], [0.4, 0.8, 1.0])
    with pytest.raises(ValidationError):
        qte_from_cdf(short, full, 0.5)
    low_envelope = cdf_band(grid, [0.2, 0.6, 0.9], [0.0, 0.4, 0.8], [0.4, 0.8, 1.0])
    _, (low, high) = qte_from_cdf(low_envelope, full, 0.85)
    assert high == np.inf
    with pytest.raises(ValidationError):
        qte_from_cdf(full, full, 1.0)


def test_cdf_band_is_monotone_and_nested():
    """
    Monotonized curve and envelopes stay ordered inside [0, 1]
    """
    dgp = make_dgp('gaussian_outcomes')
    data = dgp.sample(300, 2)
    plan = make_folds(data.n, 2, 1)
    grid = default_grid(data, size=5, arm=1)
    band = estimate_cdf_band(data, 1, grid, None, plan, draws=2000, seed=3)
    assert np.all(np.diff(band.estimates) >= 0)
    assert np.all(band.lower <= band.estimates + 1e-12) and np.all(band.estimates <= band.upper + 1e-12)
    assert np.all((band.lower >= 0) & (band.upper <= 1))
    assert len(band.to_dict()['points']) == grid.size


def test_cdf_band_validation():
    """
    Grids must increase and arms must be labels
    """
    data = make_dgp('gaussian_outcomes').sample(50, 0)
    plan = make_folds(data.n, 2, 0)
    with pytest.raises(ValidationError):
        estimate_cdf_band(data, 1, [0.5, 0.0], None, plan, draws=1000)
    with pytest.raises(ValidationError):
        estimate_cdf_band(data, 7, [0.0, 0.5], None, plan, draws=1000)
