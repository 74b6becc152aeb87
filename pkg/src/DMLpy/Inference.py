"""
This module contains the inference layer: cross-fitted point estimates, plug-in standard deviations, the correlation of
the scores, sup-t critical values by Gaussian-max sampling, simultaneous confidence bands and the grid pipeline for
distribution functions and quantile treatment effects.

The module currently contains the following classes and functions:

* ``ScoreMatrix``, ``EstimateSet``, ``CorrelationEstimate``, ``BandResult``, ``CdfBandResult``: Result containers.
* ``estimate_targets``: :math:`\\hat{\\theta}_j` and :math:`\\hat{\\sigma}_j` from cross-fitted nuisances.
* ``estimate_correlation``: :math:`\\hat{\\Sigma}` with a ridge for singular matrices.
* ``canonical_order``, ``gaussian_max_sample``, ``sup_t_critical_value``: Draws of :math:`\\max_j|Z_j|` with
  :math:`Z \\sim N(0, \\hat{\\Sigma})` and their quantile.
* ``build_bands``: Bands :math:`\\hat{\\theta}_j \\mp n^{-1/2}\\hat{\\sigma}_j c_\\alpha`.
* ``default_grid``, ``monotonize``, ``estimate_cdf_band``, ``qte_from_cdf``.
"""

import math
import warnings

import numpy as np
import scipy.linalg
from sklearn.isotonic import IsotonicRegression

from DMLpy.Nuisance import Dictionary, NuisanceRecipe, cross_fit
from DMLpy.Scores import MomentFunctional, augmented_moment
from DMLpy.Utilities import (ValidationError, DegenerateScoreError, symmetric_factor, spawn_generator, run_parallel)


########################################################################################################################
########################################################################################################################
#                                                Point estimates
########################################################################################################################

class ScoreMatrix:
    """
    Evaluated scores :math:`\\hat{\\psi}_j(Z_i)`, one row per observation and one column per target.

    **Attributes:**

    * **values** (`ndarray`):
        ``shape=(n, p)``, read-only.

    * **names** (`list` of `str`):
        Target names.

    * **weights** (`ndarray`):
        Observation weights of the means.

    * **centered** (`bool`):
        Whether every column has weighted mean zero.
    """

    def __init__(self, values, names, weights=None, centered=True):
        values = np.atleast_2d(np.asarray(values, dtype=float))
        if not np.all(np.isfinite(values)):
            raise ValidationError('DMLpy: score entries must be finite')
        self.values = values.copy()
        self.values.setflags(write=False)
        self.n, self.p = values.shape
        self.names = list(names)
        self.weights = np.ones(self.n) if weights is None else np.asarray(weights, dtype=float)
        self.centered = centered

    def mean(self):
        return np.average(self.values, axis=0, weights=self.weights)

    def covariance(self):
        centered = self.values - self.mean()
        return centered.T @ (self.weights[:, None] * centered) / self.weights.sum()

    def select(self, columns):
        columns = list(columns)
        return ScoreMatrix(self.values[:, columns], [self.names[j] for j in columns], self.weights, self.centered)


class EstimateSet:
    """
    Cross-fitted estimates.

    **Attributes:**

    * **theta_hat** (`ndarray`):
        :math:`\\hat{\\theta}_j`.

    * **sigma_hat** (`ndarray`):
        :math:`\\hat{\\sigma}_j`, the root mean square of the centered score column.

    * **n** (`int`), **score** (``ScoreMatrix``), **names** (`list`)
    """

    def __init__(self, theta_hat, sigma_hat, n, score, names):
        self.theta_hat = np.asarray(theta_hat, dtype=float)
        self.sigma_hat = np.asarray(sigma_hat, dtype=float)
        self.n = n
        self.score = score
        self.names = list(names)

    @property
    def p(self):
        return self.theta_hat.shape[0]

    def standard_errors(self):
        return self.sigma_hat / math.sqrt(self.n)

    def t_statistics(self, theta):
        """
        :math:`\\sqrt{n}(\\hat{\\theta}_j - \\theta_j)/\\hat{\\sigma}_j`.
        """
        return math.sqrt(self.n) * (self.theta_hat - np.asarray(theta, dtype=float)) / self.sigma_hat

    def to_dict(self):
        return {'n': self.n, 'targets': [{'name': name, 'estimate': float(t), 'sigma': float(s),
                                          'standard_error': float(s / math.sqrt(self.n))}
                                         for name, t, s in zip(self.names, self.theta_hat, self.sigma_hat)]}


def estimate_targets(data, functionals, fits, plan):
    """
    Cross-fitted estimates of every target.

    Rows of fold :math:`I_\\ell` are scored with the fold-:math:`\\ell` nuisances; :math:`\\hat{\\theta}_j` is the mean of
    :math:`m_j(W_i, \\hat{\\gamma}) + \\hat{\\alpha}(W_i)(R_i - \\hat{\\gamma}(W_i))` and :math:`\\hat{\\sigma}_j^2` the mean
    square of the centered column.

    **Inputs:**

    * **data** (``Dataset``)

    * **functionals** (`list` of ``MomentFunctional``)

    * **fits** (``NuisanceFitSet``):
        Fits produced under `plan`; checked with ``fits.audit(plan)``.

    * **plan** (``FoldPlan``)

    **Output/Returns:**

    * **estimates** (``EstimateSet``)
    """
    fits.audit(plan)
    if len(functionals) != fits.ntargets:
        raise ValidationError('DMLpy: {} functionals but fits for {} targets'.format(len(functionals), fits.ntargets))
    if plan.n != data.n:
        raise ValidationError('DMLpy: the fold plan does not match the data')

    uncentered = np.zeros((data.n, len(functionals)))
    for l in range(plan.nfolds):
        rows = plan.fold(l)
        y, d, x = data.outcomes[rows], data.treatment[rows], data.covariates[rows]
        for j, functional in enumerate(functionals):
            uncentered[rows, j] = augmented_moment(functional, y, d, x, fits.gamma(l, j), fits.alpha(l, j))

    theta_hat = data.mean(uncentered)
    centered = uncentered - theta_hat
    sigma_hat = np.sqrt(data.mean(centered ** 2))
    names = [f.name for f in functionals]
    for name, sigma in zip(names, sigma_hat):
        if sigma <= 0:
            warnings.warn('DMLpy: the score of "{}" has zero variance; its band has zero width'.format(name))
    score = ScoreMatrix(centered, names, data.weights, centered=True)
    return EstimateSet(theta_hat, sigma_hat, data.n, score, names)


########################################################################################################################
########################################################################################################################
#                                              Correlation and c_alpha
########################################################################################################################

class CorrelationEstimate:
    """
    Estimated score correlation :math:`\\hat{\\Sigma}`.

    **Attributes:**

    * **matrix** (`ndarray`):
        Symmetric with unit diagonal.

    * **ridge_applied** (`float`):
        Ridge `r` used in :math:`(\\hat{\\Sigma} + rI)/(1 + r)`; 0 when none was needed.

    * **min_eigenvalue** (`float`):
        Smallest eigenvalue of `matrix`.
    """

    def __init__(self, matrix, ridge_applied=0.0, min_eigenvalue=None):
        self.matrix = np.atleast_2d(np.asarray(matrix, dtype=float))
        self.ridge_applied = ridge_applied
        self.min_eigenvalue = float(scipy.linalg.eigvalsh(self.matrix)[0]) if min_eigenvalue is None \
            else min_eigenvalue

    @property
    def p(self):
        return self.matrix.shape[0]


def estimate_correlation(score, ridge=1e-8):
    """
    Sample correlation of the score columns.

    When the smallest eigenvalue is below 1e-10 the matrix is replaced by :math:`(\\hat{\\Sigma} + rI)/(1 + r)`, which
    keeps the unit diagonal.

    **Inputs:**

    * **score** (``ScoreMatrix``)

    * **ridge** (`float`):
        `r`. Default: 1e-8

    **Output/Returns:**

    * **correlation** (``CorrelationEstimate``)
    """
    if ridge < 0:
        raise ValidationError('DMLpy: ridge must be nonnegative')
    covariance = score.covariance()
    sigma = np.sqrt(np.maximum(np.diag(covariance), 0.0))
    for name, s in zip(score.names, sigma):
        if s <= 0:
            raise DegenerateScoreError('DMLpy: the score of "{}" has zero variance'.format(name))
    matrix = covariance / np.outer(sigma, sigma)
    matrix = 0.5 * (matrix + matrix.T)
    np.fill_diagonal(matrix, 1.0)
    min_eigenvalue = float(scipy.linalg.eigvalsh(matrix)[0])
    ridge_applied = 0.0
    if min_eigenvalue < 1e-10:
        matrix = (matrix + ridge * np.eye(score.p)) / (1.0 + ridge)
        np.fill_diagonal(matrix, 1.0)
        ridge_applied = ridge
        min_eigenvalue = float(scipy.linalg.eigvalsh(matrix)[0])
    return CorrelationEstimate(matrix, ridge_applied, min_eigenvalue)


def canonical_order(matrix):
    """
    Target order used for drawing: rows sorted lexicographically by their entries in decreasing order.

    The key of a row does not depend on how the targets are listed, so a permuted matrix maps back to the same
    matrix and the same seeded normals give the same maxima.
    """
    keys = -np.sort(-np.asarray(matrix, dtype=float), axis=1)
    return np.lexsort(keys.T[::-1])


def _max_block(factor, size, seed, block, sided):
    z = spawn_generator(seed, block).standard_normal((size, factor.shape[0])) @ factor.T
    return np.max(np.abs(z), axis=1) if sided == 'two_sided' else np.max(z, axis=1)


def gaussian_max_sample(correlation, draws, seed, sided='two_sided', block_size=50000, workers=1):
    """
    Draws of :math:`\\max_j|Z_j|` (or :math:`\\max_j Z_j` when one-sided) with :math:`Z \\sim N(0, \\Sigma)`.

    Draws are generated in blocks of `block_size`; block `b` uses the stream ``(seed, b)``, so the sample does not
    depend on `workers`. The matrix is factored in ``canonical_order``, so the sample does not depend on the order
    of the targets either.

    **Inputs:**

    * **correlation** (``CorrelationEstimate`` or `ndarray`)

    * **draws** (`int`), **seed** (`int`)

    * **sided** (`str`):
        'two_sided' or 'one_sided'. Default: 'two_sided'

    * **block_size** (`int`):
        Default: 50000

    * **workers** (`int`):
        Processes drawing blocks. Default: 1

    **Output/Returns:**

    * **sample** (`ndarray`):
        ``shape=(draws, )``.
    """
    if sided not in ('two_sided', 'one_sided'):
        raise ValidationError("DMLpy: sided must be 'two_sided' or 'one_sided'")
    if not isinstance(draws, (int, np.integer)) or draws < 1:
        raise ValidationError('DMLpy: draws must be a positive integer')
    matrix = correlation.matrix if isinstance(correlation, CorrelationEstimate) else np.atleast_2d(correlation)
    if matrix.ndim != 2 or matrix.shape[0] != matrix.shape[1]:
        raise ValidationError('DMLpy: the correlation matrix must be square')
    order = canonical_order(matrix)
    factor = symmetric_factor(matrix[np.ix_(order, order)])
    sizes = [min(block_size, draws - start) for start in range(0, int(draws), block_size)]
    blocks = run_parallel(_max_block, [(factor, size, seed, b, sided) for b, size in enumerate(sizes)], workers)
    return np.concatenate(blocks)


def sup_t_critical_value(correlation, level=0.95, draws=100000, seed=0, sided='two_sided', workers=1):
    """
    Sup-t critical value :math:`c_\\alpha`: the :math:`\\lceil (1-\\alpha)(B+1) \\rceil`-th order statistic of `B`
    Gaussian-max draws (capped at `B`).

    **Inputs:**

    * **correlation** (``CorrelationEstimate`` or `ndarray`)

    * **level** (`float`):
        :math:`1 - \\alpha` in (0, 1). Default: 0.95

    * **draws** (`int`):
        `B >= 1000`. Default: 100000

    * **seed** (`int`), **sided** (`str`), **workers** (`int`)

    **Output/Returns:**

    * **critical_value** (`float`)
    """
    if not 0 < level < 1:
        raise ValidationError('DMLpy: level must lie in (0, 1)')
    if not isinstance(draws, (int, np.integer)) or draws < 1000:
        raise ValidationError('DMLpy: at least 1000 draws are required')
    sample = np.sort(gaussian_max_sample(correlation, draws, seed, sided, workers=workers))
    rank = min(int(math.ceil(level * (draws + 1))), draws)
    return float(sample[rank - 1])


class BandResult:
    """
    Simultaneous confidence band.

    **Attributes:**

    * **level**, **critical_value** (`float`), **draws**, **seed** (`int`), **sided** (`str`)

    * **names** (`list`), **estimates**, **sigma_hat**, **standard_errors**, **lower**, **upper** (`ndarray`):
        Per target; ``standard_errors`` is :math:`\\hat{\\sigma}_j/\\sqrt{n}`.
    """

    def __init__(self, level, critical_value, names, estimates, sigma_hat, n, draws, seed, sided='two_sided',
                 ridge_applied=0.0):
        self.level = level
        self.critical_value = critical_value
        self.names = list(names)
        self.estimates = np.asarray(estimates, dtype=float)
        self.sigma_hat = np.asarray(sigma_hat, dtype=float)
        self.n = n
        self.standard_errors = self.sigma_hat / math.sqrt(n)
        self.lower = self.estimates - critical_value * self.standard_errors
        if sided == 'two_sided':
            self.upper = self.estimates + critical_value * self.standard_errors
        else:
            self.upper = np.full_like(self.estimates, np.inf)
        self.draws = draws
        self.seed = seed
        self.sided = sided
        self.ridge_applied = ridge_applied

    def covers(self, theta):
        theta = np.asarray(theta, dtype=float)
        return bool(np.all((self.lower <= theta) & (theta <= self.upper)))

    def to_dict(self):
        return {'level': self.level, 'critical_value': self.critical_value, 'draws': self.draws, 'seed': self.seed,
                'sided': self.sided, 'n': self.n, 'ridge_applied': self.ridge_applied,
                'targets': [{'name': name, 'estimate': float(t), 'sigma': float(s), 'standard_error': float(e),
                             'lower': float(lo), 'upper': float(hi)}
                            for name, t, s, e, lo, hi in zip(self.names, self.estimates, self.sigma_hat,
                                                             self.standard_errors, self.lower, self.upper)]}


def build_bands(estimates, correlation, level=0.95, draws=100000, seed=0, sided='two_sided', workers=1,
                critical_value=None):
    """
    Bands :math:`\\hat{\\theta}_j \\mp n^{-1/2}\\hat{\\sigma}_j c_\\alpha` for all targets jointly.

    **Inputs:**

    * **estimates** (``EstimateSet``), **correlation** (``CorrelationEstimate``)

    * **level**, **draws**, **seed**, **sided**, **workers**:
        As in ``sup_t_critical_value``.

    * **critical_value** (`float`):
        Use this value instead of sampling one.

    **Output/Returns:**

    * **band** (``BandResult``)
    """
    if correlation.p != estimates.p:
        raise ValidationError('DMLpy: the correlation matrix does not match the number of targets')
    if critical_value is None:
        critical_value = sup_t_critical_value(correlation, level, draws, seed, sided, workers)
    elif not critical_value >= 0:
        raise ValidationError('DMLpy: a critical value override must be nonnegative')
    return BandResult(level, critical_value, estimates.names, estimates.theta_hat, estimates.sigma_hat, estimates.n,
                      draws, seed, sided, correlation.ridge_applied)


########################################################################################################################
########################################################################################################################
#                                             Distribution functions
########################################################################################################################

def default_grid(data, outcome_index=0, size=25, arm=None):
    """
    Distinct empirical quantiles of an outcome at levels :math:`i/(size+1)`, optionally within one treatment arm.
    """
    y = data.outcomes[:, outcome_index]
    if arm is not None:
        y = y[np.asarray(data.treatment).astype(object) == arm]
        if y.size == 0:
            raise ValidationError('DMLpy: no observation has treatment label "{}"'.format(arm))
    return np.unique(np.quantile(y, np.arange(1, size + 1) / (size + 1)))


def monotonize(grid, values):
    """
    Nondecreasing fit of `values` over `grid` by pool-adjacent-violators, clipped to [0, 1].
    """
    fitted = IsotonicRegression(increasing=True).fit_transform(np.asarray(grid, dtype=float),
                                                              np.asarray(values, dtype=float))
    return np.clip(fitted, 0.0, 1.0)


class CdfBandResult:
    """
    Simultaneous band for the distribution function of one arm over a grid.

    **Attributes:**

    * **grid** (`ndarray`), **arm**, **outcome_index** (`int`)

    * **raw_estimates** (`ndarray`):
        Estimates before monotonization.

    * **estimates**, **lower**, **upper** (`ndarray`):
        Reported curve and envelopes.

    * **sigma_hat**, **standard_errors** (`ndarray`), **critical_value**, **level** (`float`), **monotonized** (`bool`)
    """

    def __init__(self, grid, arm, raw_estimates, estimates, lower, upper, sigma_hat, n, critical_value, level,
                 monotonized, outcome_index=0):
        self.grid = np.asarray(grid, dtype=float)
        self.arm = arm
        self.raw_estimates = np.asarray(raw_estimates, dtype=float)
        self.estimates = np.asarray(estimates, dtype=float)
        self.lower = np.asarray(lower, dtype=float)
        self.upper = np.asarray(upper, dtype=float)
        self.sigma_hat = np.asarray(sigma_hat, dtype=float)
        self.standard_errors = self.sigma_hat / math.sqrt(n)
        self.n = n
        self.critical_value = critical_value
        self.level = level
        self.monotonized = monotonized
        self.outcome_index = outcome_index

    def to_dict(self):
        return {'arm': self.arm, 'outcome_index': self.outcome_index, 'level': self.level,
                'critical_value': self.critical_value, 'monotonized': self.monotonized,
                'points': [{'threshold': float(u), 'estimate': float(f), 'raw_estimate': float(r),
                            'standard_error': float(e), 'lower': float(lo), 'upper': float(hi)}
                           for u, f, r, e, lo, hi in zip(self.grid, self.estimates, self.raw_estimates,
                                                         self.standard_errors, self.lower, self.upper)]}


def cdf_functionals(arm, grid, outcome_index=0):
    return [MomentFunctional('cdf_at_point', threshold=u, arm=arm, outcome_index=outcome_index) for u in grid]


def estimate_cdf_band(data, arm, grid, fits, plan, level=0.95, draws=100000, seed=0, outcome_index=0, monotone=True,
                      workers=1, dictionary=None, critical_value=None):
    """
    Band for :math:`u \\mapsto F_{Y(d)}(u) = E_P[\\gamma_{0u}(d, X)]` over a grid.

    Each grid point is one 'cdf_at_point' target; the critical value is joint over the grid. Grid points whose score
    has zero variance get zero width and do not enter the critical value. With `monotone`, the estimates and each
    envelope are monotonized separately and clipped to [0, 1].

    **Inputs:**

    * **data** (``Dataset``), **arm**:
        Sample and treatment arm.

    * **grid** (`ndarray`):
        Strictly increasing thresholds.

    * **fits** (``NuisanceFitSet``):
        One target per grid point, in grid order. If `None`, distribution regressions on `dictionary` are cross-fitted
        with a propensity model shared across the grid.

    * **plan** (``FoldPlan``)

    * **level**, **draws**, **seed**, **workers**:
        As in ``sup_t_critical_value``.

    * **outcome_index** (`int`), **monotone** (`bool`)

    * **dictionary** (``Dictionary``):
        Dictionary used when `fits` is `None`. Default: ``Dictionary.from_config(labels, k)``.

    * **critical_value** (`float`):
        Use this value instead of sampling one.

    **Output/Returns:**

    * **band** (``CdfBandResult``)
    """
    grid = np.atleast_1d(np.asarray(grid, dtype=float))
    if grid.ndim != 1 or grid.size == 0 or np.any(np.diff(grid) <= 0):
        raise ValidationError('DMLpy: the grid must be strictly increasing')
    if arm not in data.labels:
        raise ValidationError('DMLpy: arm "{}" is not a treatment label'.format(arm))
    functionals = cdf_functionals(arm, grid, outcome_index)
    if fits is None:
        if dictionary is None:
            dictionary = Dictionary.from_config(data.labels, data.k)
        fits = cross_fit(data, plan, [NuisanceRecipe(f, dictionary) for f in functionals])

    with warnings.catch_warnings():
        warnings.simplefilter('ignore')
        estimates = estimate_targets(data, functionals, fits, plan)
    if critical_value is None:
        active = [j for j in range(grid.size) if estimates.sigma_hat[j] > 0]
        if len(active) < grid.size:
            warnings.warn('DMLpy: {} grid points have zero score variance'.format(grid.size - len(active)))
        if active:
            correlation = estimate_correlation(estimates.score.select(active))
        else:
            correlation = CorrelationEstimate(np.eye(1))
        critical_value = sup_t_critical_value(correlation, level, draws, seed, workers=workers)
    elif not critical_value >= 0:
        raise ValidationError('DMLpy: a critical value override must be nonnegative')

    raw = estimates.theta_hat
    half_width = critical_value * estimates.standard_errors()
    lower, upper = raw - half_width, raw + half_width
    if monotone and np.isinf(critical_value):
        point, lower, upper = monotonize(grid, raw), np.zeros(grid.size), np.ones(grid.size)
    elif monotone:
        point, lower, upper = monotonize(grid, raw), monotonize(grid, lower), monotonize(grid, upper)
    else:
        point = raw.copy()
    return CdfBandResult(grid, arm, raw, point, lower, upper, estimates.sigma_hat, data.n, critical_value, level,
                         monotone, outcome_index)


def _generalized_inverse(grid, values, q):
    reached = np.flatnonzero(values >= q)
    return float(grid[reached[0]]) if reached.size else np.inf


def qte_from_cdf(band1, band0, q):
    """
    Quantile treatment effect :math:`\\hat{F}_1^{-1}(q) - \\hat{F}_0^{-1}(q)` from two CDF bands, with the
    left-continuous generalized inverse :math:`F^{-1}(q) = \\min\\{u: F(u) \\ge q\\}` on each grid.

    The interval inverts the envelopes: the lower end uses the upper envelope of arm 1 and the lower envelope of arm 0,
    and symmetrically for the upper end. Envelope inverses that do not exist on the grid give infinite ends.

    **Output/Returns:**

    * **point** (`float`)

    * **interval** (`tuple`)
    """
    if not 0 < q < 1:
        raise ValidationError('DMLpy: the quantile level must lie in (0, 1)')
    point1 = _generalized_inverse(band1.grid, band1.estimates, q)
    point0 = _generalized_inverse(band0.grid, band0.estimates, q)
    if not (np.isfinite(point1) and np.isfinite(point0)):
        raise ValidationError('DMLpy: q = {} lies outside the estimated CDF range on the grid; use a wider '
                              'grid'.format(q))
    low = _generalized_inverse(band1.grid, band1.upper, q) - _generalized_inverse(band0.grid, band0.lower, q)
    high = _generalized_inverse(band1.grid, band1.lower, q) - _generalized_inverse(band0.grid, band0.upper, q)
    return point1 - point0, (low, high)
