"""
This module contains the estimators of the nuisance functions: the outcome regression :math:`\\hat{\\gamma}` and the
Riesz representer :math:`\\hat{\\alpha}`, organized under sample splitting.

The module currently contains the following classes and functions:

* ``Dictionary``: Finite set of named feature maps :math:`b(d, x)`; the first is the constant.
* ``RegressionFit``, ``DistributionRegressionFit``, ``PropensityFit``, ``RieszFit``: Fitted, evaluable nuisances.
* ``NuisanceRecipe``: How the nuisances of one target are fitted.
* ``NuisanceFitSet``: Per-fold, per-target fits with their training provenance.
* ``fit_regression``, ``fit_distribution_regression``, ``fit_propensity``, ``riesz_plugin``, ``riesz_automatic``,
  ``cross_fit``, ``recipes_from_config``, ``oracle_fit_set``, ``true_regression``, ``true_representer``,
  ``rmse_to_truth``.

Every evaluable nuisance is a callable ``f(d, x)`` taking a length-`m` array of treatment labels and covariates of
``shape=(m, k)`` and returning `m` values.
"""

import itertools
import math

import numpy as np
import scipy.linalg
from scipy.special import expit, logsumexp, softmax

from DMLpy.Data import Dataset, label_codes, population_expectation
from DMLpy.Utilities import (ValidationError, RankError, ConvergenceError, EstimationError, EvaluationError,
                             AuditError)


########################################################################################################################
########################################################################################################################
#                                                   Dictionary
########################################################################################################################

class _Constant:
    uses_treatment = False

    def __call__(self, d, x):
        return np.ones(np.asarray(x).shape[0])


class _Monomial:
    uses_treatment = False

    def __init__(self, powers):
        self.powers = tuple(powers)

    def __call__(self, d, x):
        values = np.ones(x.shape[0])
        for column, power in self.powers:
            values = values * x[:, column] ** power
        return values


class _LabelIndicator:

    def __init__(self, labels, label, inner=None):
        self.labels = labels
        self.code = labels.index(label)
        self.inner = inner
        self.uses_treatment = True

    def __call__(self, d, x):
        values = (label_codes(d, self.labels) == self.code).astype(float)
        if self.inner is not None:
            values = values * self.inner(d, x)
        return values


class _CellIndicator:
    uses_treatment = False

    def __init__(self, cell):
        self.cell = np.asarray(cell, dtype=float)

    def __call__(self, d, x):
        return np.all(x == self.cell, axis=1).astype(float)


class Dictionary:
    """
    Finite dictionary of feature maps :math:`b(d, x) = (b_1(d, x), ..., b_m(d, x))` with :math:`b_1 \\equiv 1`.

    **Inputs:**

    * **features** (`list` of `callables`):
        Feature maps ``f(d, x)``. Each must carry a boolean attribute ``uses_treatment``.

    * **names** (`list` of `str`):
        Feature names.

    **Attributes:**

    * **size** (`int`):
        Number of features `m`.

    **Methods:**
    """

    def __init__(self, features, names):
        if len(features) == 0 or len(features) != len(names):
            raise ValidationError('DMLpy: a dictionary needs one name per feature and at least the constant')
        if not isinstance(features[0], _Constant):
            raise ValidationError('DMLpy: the first dictionary feature must be the constant')
        self.features = list(features)
        self.names = list(names)
        self.size = len(features)

    @classmethod
    def from_config(cls, labels, k, degree=1, interactions=False, treatment_intercepts=True,
                    treatment_interactions=False, saturated=False, cells=None):
        """
        Build a dictionary from configuration options.

        **Inputs:**

        * **labels** (`tuple`), **k** (`int`):
            Treatment label set and number of covariates.

        * **degree** (`int`):
            Polynomial degree per covariate. Default: 1

        * **interactions** (`bool`):
            Add pairwise covariate products. Default: False

        * **treatment_intercepts** (`bool`):
            Add :math:`1\\{d = d_l\\}` for every non-baseline label. Default: True

        * **treatment_interactions** (`bool`):
            Add :math:`1\\{d = d_l\\} x_c` for every non-baseline label and covariate. Default: False

        * **saturated** (`bool`):
            Ignore the options above and return ``Dictionary.saturated(labels, cells)``. Default: False

        * **cells** (`ndarray`):
            Distinct covariate vectors, required when ``saturated=True``.
        """
        if saturated:
            if cells is None:
                raise ValidationError('DMLpy: a saturated dictionary needs the covariate cells')
            return cls.saturated(labels, cells)
        if not isinstance(degree, int) or degree < 0:
            raise ValidationError('DMLpy: dictionary degree must be an integer >= 0')
        labels = tuple(labels)
        features, names = [_Constant()], ['1']
        for column in range(k):
            for power in range(1, degree + 1):
                features.append(_Monomial([(column, power)]))
                names.append('x{}'.format(column) if power == 1 else 'x{}^{}'.format(column, power))
        if interactions:
            for i, j in itertools.combinations(range(k), 2):
                features.append(_Monomial([(i, 1), (j, 1)]))
                names.append('x{}*x{}'.format(i, j))
        for label in labels[1:]:
            if treatment_intercepts:
                features.append(_LabelIndicator(labels, label))
                names.append('1{{d={}}}'.format(label))
            if treatment_interactions:
                for column in range(k):
                    features.append(_LabelIndicator(labels, label, _Monomial([(column, 1)])))
                    names.append('1{{d={}}}*x{}'.format(label, column))
        return cls(features, names)

    @classmethod
    def saturated(cls, labels, cells):
        """
        Dictionary spanning every function of (label, covariate cell) for discrete covariates.
        """
        labels = tuple(labels)
        cells = np.atleast_2d(np.asarray(cells, dtype=float))
        features, names = [_Constant()], ['1']
        for c, cell in enumerate(cells[1:], start=1):
            features.append(_CellIndicator(cell))
            names.append('1{{x=cell{}}}'.format(c))
        for label in labels[1:]:
            for c, cell in enumerate(cells):
                features.append(_LabelIndicator(labels, label, _CellIndicator(cell)))
                names.append('1{{d={}}}*1{{x=cell{}}}'.format(label, c))
        return cls(features, names)

    def covariate_only(self):
        """
        Sub-dictionary of the features that do not depend on the treatment label.
        """
        keep = [i for i, feature in enumerate(self.features) if not feature.uses_treatment]
        return Dictionary([self.features[i] for i in keep], [self.names[i] for i in keep])

    def feature(self, index):
        return self.features[index]

    def evaluate(self, d, x):
        """
        Evaluate the dictionary at ``(d, x)``; returns an array of ``shape=(m_rows, size)``.
        """
        d = np.atleast_1d(np.asarray(d))
        x = np.asarray(x, dtype=float).reshape(d.shape[0], -1) if np.size(x) else np.zeros((d.shape[0], 0))
        basis = np.column_stack([feature(d, x) for feature in self.features])
        if not np.all(np.isfinite(basis)):
            raise EvaluationError('DMLpy: dictionary features are not finite on the data')
        return basis

    def penalty(self):
        """
        Diagonal of the ridge penalty: the constant is unpenalized.
        """
        penalty = np.ones(self.size)
        penalty[0] = 0.0
        return penalty


def _default_ridge(gram):
    return 1e-6 * np.trace(gram) / gram.shape[0]


########################################################################################################################
########################################################################################################################
#                                                 Regressions
########################################################################################################################

class RegressionFit:
    """
    Linear fit :math:`\\hat{\\gamma}(d, x) = \\langle \\hat{b}, b(d, x) \\rangle`.

    **Attributes:**

    * **coefficients** (`ndarray`), **ridge** (`float`), **dictionary** (``Dictionary``)
    """

    def __init__(self, dictionary, coefficients, ridge):
        self.dictionary = dictionary
        self.coefficients = np.asarray(coefficients, dtype=float)
        self.ridge = ridge
        if not np.all(np.isfinite(self.coefficients)):
            raise RankError('DMLpy: regression coefficients are not finite')

    def predict(self, d, x):
        return self.dictionary.evaluate(d, x) @ self.coefficients

    def __call__(self, d, x):
        return self.predict(d, x)


def fit_regression(data, target_index, dictionary, ridge=None, response=None):
    """
    Penalized least squares of an outcome on the dictionary.

    Minimizes :math:`\\sum_i w_i(Y_{ij} - \\langle b, b(D_i, X_i)\\rangle)^2 + \\lambda \\|b_{-1}\\|^2` where the constant
    coefficient is unpenalized. The problem is solved as an augmented least-squares system.

    **Inputs:**

    * **data** (``Dataset``)

    * **target_index** (`int`):
        Outcome column :math:`j`.

    * **dictionary** (``Dictionary``)

    * **ridge** (`float`):
        Penalty :math:`\\lambda \\geq 0`. Default: :math:`10^{-6}\\,\\mathrm{trace}(B^TWB)/m`.

    * **response** (`ndarray`):
        Optional response replacing the outcome column.

    **Output/Returns:**

    * **fit** (``RegressionFit``)
    """
    if not isinstance(data, Dataset):
        raise TypeError('DMLpy: data must be a Dataset')
    basis = dictionary.evaluate(data.treatment, data.covariates)
    y = data.outcomes[:, target_index] if response is None else np.asarray(response, dtype=float).ravel()
    root_w = np.sqrt(data.weights)
    if ridge is None:
        ridge = _default_ridge(basis.T @ (data.weights[:, None] * basis))
    if ridge < 0:
        raise ValidationError('DMLpy: ridge must be nonnegative')

    design = np.vstack([root_w[:, None] * basis, np.sqrt(ridge) * np.diag(dictionary.penalty())])
    target = np.concatenate([root_w * y, np.zeros(dictionary.size)])
    coefficients, _, rank, _ = scipy.linalg.lstsq(design, target)
    if rank < dictionary.size:
        raise RankError('DMLpy: singular normal equations (rank {} < {}); use ridge > 0'.format(
            rank, dictionary.size))
    return RegressionFit(dictionary, coefficients, ridge)


def _logit_newton(features, codes, nclasses, weights, ridge, max_iterations=100, tolerance=1e-9):
    """
    Penalized multinomial logit by damped Newton iterations with step halving.

    Class 0 is the baseline (zero coefficients). Returns coefficients of ``shape=(nclasses, m)``.
    """
    n, m = features.shape
    nfree = nclasses - 1
    penalty = np.ones(m)
    penalty[0] = 0.0
    targets = np.zeros((n, nclasses))
    targets[np.arange(n), codes] = 1.0
    total = weights.sum()

    def logits_of(beta):
        return np.hstack([np.zeros((n, 1)), features @ beta.T])

    def objective(beta):
        logits = logits_of(beta)
        loglik = logits[np.arange(n), codes] - logsumexp(logits, axis=1)
        return -np.sum(weights * loglik) + 0.5 * ridge * np.sum(penalty * beta ** 2)

    beta = np.zeros((nfree, m))
    gradient_norm = np.inf
    for _ in range(max_iterations):
        prob = softmax(logits_of(beta), axis=1)[:, 1:]
        residual = weights[:, None] * (prob - targets[:, 1:])
        grad = residual.T @ features + ridge * penalty * beta
        gradient_norm = np.max(np.abs(grad)) / total
        if gradient_norm <= tolerance:
            coefficients = np.zeros((nclasses, m))
            coefficients[1:] = beta
            return coefficients

        hessian = np.zeros((nfree * m, nfree * m))
        for a in range(nfree):
            for b in range(nfree):
                curvature = weights * prob[:, a] * (float(a == b) - prob[:, b])
                hessian[a * m:(a + 1) * m, b * m:(b + 1) * m] = features.T @ (curvature[:, None] * features)
            hessian[a * m:(a + 1) * m, a * m:(a + 1) * m] += ridge * np.diag(penalty)
        try:
            step = scipy.linalg.solve(hessian, grad.ravel(), assume_a='sym').reshape(nfree, m)
        except np.linalg.LinAlgError:
            raise RankError('DMLpy: singular Hessian in the logistic fit; use ridge > 0')

        current = objective(beta)
        scale = 1.0
        for _ in range(60):
            candidate = beta - scale * step
            if objective(candidate) <= current:
                break
            scale *= 0.5
        else:
            raise ConvergenceError('DMLpy: step halving failed in the logistic fit (gradient norm '
                                   '{:.3e})'.format(gradient_norm), gradient_norm)
        beta = candidate

    raise ConvergenceError('DMLpy: logistic fit did not converge in {} iterations (gradient norm {:.3e})'.format(
        max_iterations, gradient_norm), gradient_norm)


class DistributionRegressionFit:
    """
    Logistic fit of :math:`1\\{Y_j \\le u\\}` on the dictionary; predictions lie in [0, 1].
    """

    def __init__(self, dictionary, coefficients, ridge, threshold, constant=None):
        self.dictionary = dictionary
        self.coefficients = coefficients
        self.ridge = ridge
        self.threshold = threshold
        self.constant = constant

    def predict(self, d, x):
        if self.constant is not None:
            return np.full(np.atleast_1d(np.asarray(d)).shape[0], self.constant)
        return expit(self.dictionary.evaluate(d, x) @ self.coefficients)

    def __call__(self, d, x):
        return self.predict(d, x)


def fit_distribution_regression(data, outcome_index, threshold, dictionary, ridge=None, max_iterations=100,
                                tolerance=1e-9):
    """
    Distribution regression at one threshold: penalized logistic regression of :math:`1\\{Y_j \\le u\\}` on the
    dictionary. When the indicator does not vary in the data the fit is the constant 0 or 1.
    """
    indicator = (data.outcomes[:, outcome_index] <= threshold).astype(int)
    if np.all(indicator == indicator[0]):
        return DistributionRegressionFit(dictionary, None, ridge, threshold, constant=float(indicator[0]))
    basis = dictionary.evaluate(data.treatment, data.covariates)
    if ridge is None:
        ridge = _default_ridge(basis.T @ (data.weights[:, None] * basis))
    coefficients = _logit_newton(basis, indicator, 2, data.weights, ridge, max_iterations, tolerance)
    return DistributionRegressionFit(dictionary, coefficients[1], ridge, threshold)


class PropensityFit:
    """
    Multinomial-logistic propensity :math:`\\hat{\\pi}_l(x) = P(D = d_l|X = x)` with clipping.

    **Attributes:**

    * **labels** (`tuple`), **coefficients** (`ndarray` of ``shape=(nlabels, m)``), **clip** (`float`)
    """

    def __init__(self, dictionary, labels, coefficients, clip, ridge):
        self.dictionary = dictionary
        self.labels = tuple(labels)
        self.coefficients = coefficients
        self.clip = clip
        self.ridge = ridge

    def predict_proba(self, x):
        """
        Clipped and renormalized probabilities of every label, ``shape=(m_rows, nlabels)``.
        """
        x = np.asarray(x, dtype=float)
        rows = x.shape[0]
        basis = self.dictionary.evaluate(np.zeros(rows), x.reshape(rows, -1) if x.size else np.zeros((rows, 0)))
        prob = np.clip(softmax(basis @ self.coefficients.T, axis=1), self.clip, 1 - self.clip)
        return prob / prob.sum(axis=1, keepdims=True)

    def __call__(self, d, x):
        codes = label_codes(d, self.labels)
        if np.any(codes < 0):
            raise EvaluationError('DMLpy: treatment label outside the label set')
        return self.predict_proba(x)[np.arange(codes.shape[0]), codes]


def fit_propensity(data, dictionary, clip=0.01, ridge=None, max_iterations=100, tolerance=1e-9):
    """
    Penalized maximum-likelihood multinomial logit of the treatment label on the covariate part of the dictionary.

    **Inputs:**

    * **data** (``Dataset``)

    * **dictionary** (``Dictionary``):
        Features depending on the treatment are dropped.

    * **clip** (`float`):
        Probabilities are clipped to ``[clip, 1 - clip]`` and renormalized. Must lie in (0, 0.5). Default: 0.01

    * **ridge** (`float`):
        Penalty on the non-constant coefficients. Default: :math:`10^{-6}\\,\\mathrm{trace}(B^TWB)/m`.

    * **max_iterations** (`int`), **tolerance** (`float`):
        Newton iteration limit and tolerance on the weight-normalized gradient. Defaults: 100 and 1e-9.

    **Output/Returns:**

    * **fit** (``PropensityFit``)
    """
    if not 0 < clip < 0.5:
        raise ValidationError('DMLpy: clip must lie in (0, 0.5)')
    counts = np.bincount(data.codes, minlength=len(data.labels))
    for label, count in zip(data.labels, counts):
        if count == 0:
            raise EstimationError('DMLpy: treatment label "{}" is absent from the data'.format(label))
    dictionary = dictionary.covariate_only()
    basis = dictionary.evaluate(data.treatment, data.covariates)
    if ridge is None:
        ridge = _default_ridge(basis.T @ (data.weights[:, None] * basis))
    coefficients = _logit_newton(basis, data.codes, len(data.labels), data.weights, ridge, max_iterations,
                                 tolerance)
    return PropensityFit(dictionary, data.labels, coefficients, clip, ridge)


########################################################################################################################
########################################################################################################################
#                                                Riesz representers
########################################################################################################################

class RieszFit:
    """
    Evaluable Riesz representer, clipped to :math:`[-\\bar{\\alpha}, \\bar{\\alpha}]`.

    **Attributes:**

    * **kind** (`str`):
        'plugin', 'automatic' or 'oracle'.

    * **clip_bound** (`float`):
        :math:`\\bar{\\alpha}`.

    * **coefficients** (`ndarray`):
        Dictionary coefficients (automatic representers only).
    """

    def __init__(self, kind, predict, clip_bound, coefficients=None, ridge=None):
        if not clip_bound > 0:
            raise ValidationError('DMLpy: clip_bound must be positive')
        self.kind = kind
        self._predict = predict
        self.clip_bound = clip_bound
        self.coefficients = coefficients
        self.ridge = ridge

    def __call__(self, d, x):
        return np.clip(self._predict(d, x), -self.clip_bound, self.clip_bound)

    predict = __call__


class _PluginRepresenter:

    def __init__(self, propensity, functional=None, treated=None, control=None):
        self.propensity = propensity
        self.functional = functional
        self.treated = treated
        self.control = control

    def __call__(self, d, x):
        d = np.atleast_1d(np.asarray(d))
        if self.functional is not None and self.functional.family == 'outcome_mean':
            return np.ones(d.shape[0])
        codes = label_codes(d, self.propensity.labels)
        if np.any(codes < 0):
            raise EvaluationError('DMLpy: treatment label outside the label set')
        prob = self.propensity.predict_proba(x)[np.arange(d.shape[0]), codes]
        if self.functional is None:
            terms = [(self.treated, 1.0), (self.control, -1.0)]
        else:
            terms = self.functional.terms(x)
        numerator = np.zeros(d.shape[0])
        dobj = d.astype(object)
        for label, coefficient in terms:
            numerator = numerator + coefficient * (dobj == label)
        return numerator / prob


def riesz_plugin(propensity, treated=None, control=None, clip_bound=100.0, functional=None):
    """
    Plug-in Riesz representer from a propensity model.

    For the contrast of `treated` against `control`,
    :math:`\\alpha(d, x) = 1\\{d = d_t\\}/\\pi_t(x) - 1\\{d = d_c\\}/\\pi_c(x)`. More generally, when `functional` is
    given and writes :math:`m(w, \\gamma) = \\sum_l c_l(x)\\gamma(d_l, x)`, the representer is
    :math:`\\alpha(d, x) = c_d(x)/\\pi_d(x)` (and :math:`\\alpha \\equiv 1` for the outcome mean).

    **Inputs:**

    * **propensity** (``PropensityFit`` or any object with ``labels`` and ``predict_proba``)

    * **treated**, **control**:
        Contrast labels; ignored when `functional` is given.

    * **clip_bound** (`float`):
        :math:`\\bar{\\alpha}`. Default: 100

    * **functional** (``MomentFunctional``):
        Functional whose representer is built.

    **Output/Returns:**

    * **fit** (``RieszFit``)
    """
    if functional is None:
        if treated is None or control is None:
            raise ValidationError('DMLpy: riesz_plugin needs treated and control labels or a functional')
        if treated == control:
            raise ValidationError('DMLpy: treated and control labels must differ')
        for label in (treated, control):
            if label not in propensity.labels:
                raise ValidationError('DMLpy: label "{}" is not in the propensity label set'.format(label))
    return RieszFit('plugin', _PluginRepresenter(propensity, functional, treated, control), clip_bound)


def riesz_automatic(data, functional, dictionary, ridge=None, clip_bound=100.0):
    """
    Automatic Riesz representer by dictionary regression.

    :math:`\\hat{b} = (G + \\lambda I)^{-1} M` with :math:`G = E_n[b(W)b(W)^T]` and :math:`M = E_n[m(W, b)]`;
    the representer is :math:`\\langle \\hat{b}, b \\rangle` clipped to :math:`\\pm\\bar{\\alpha}`.

    **Inputs:**

    * **data** (``Dataset``)

    * **functional** (``MomentFunctional``):
        A functional linear in :math:`\\gamma`.

    * **dictionary** (``Dictionary``)

    * **ridge** (`float`):
        :math:`\\lambda \\geq 0`. Default: :math:`10^{-6}\\,\\mathrm{trace}(G)/m`.

    * **clip_bound** (`float`):
        Default: 100

    **Output/Returns:**

    * **fit** (``RieszFit``)
    """
    basis = dictionary.evaluate(data.treatment, data.covariates)
    omega = data.weights / data.weights.sum()
    gram = basis.T @ (omega[:, None] * basis)
    moments = np.column_stack([functional.evaluate(data.treatment, data.covariates, dictionary.feature(i))
                               for i in range(dictionary.size)])
    moment_vector = moments.T @ omega
    if ridge is None:
        ridge = _default_ridge(gram)
    if ridge < 0:
        raise ValidationError('DMLpy: ridge must be nonnegative')
    if ridge == 0 and np.linalg.matrix_rank(gram) < dictionary.size:
        raise RankError('DMLpy: singular Gram matrix in the automatic representer; use ridge > 0')
    try:
        coefficients = scipy.linalg.solve(gram + ridge * np.eye(dictionary.size), moment_vector, assume_a='sym')
    except np.linalg.LinAlgError:
        raise RankError('DMLpy: singular Gram matrix in the automatic representer; use ridge > 0')
    linear = RegressionFit(dictionary, coefficients, ridge)
    return RieszFit('automatic', linear, clip_bound, coefficients=coefficients, ridge=ridge)


########################################################################################################################
########################################################################################################################
#                                                   Cross-fitting
########################################################################################################################

class NuisanceRecipe:
    """
    Fitting configuration of the nuisances of one target.

    **Inputs:**

    * **functional** (``MomentFunctional``)

    * **dictionary** (``Dictionary``):
        Dictionary of the regression (and of the automatic representer).

    * **propensity_dictionary** (``Dictionary``):
        Dictionary of the propensity model; only its covariate features are used. Default: `dictionary`.

    * **ridge** (`float`):
        Regression penalty. Default: scale rule of ``fit_regression``.

    * **riesz** (`str`):
        'plugin' or 'automatic'. Default: 'plugin'

    * **riesz_ridge**, **propensity_ridge** (`float`):
        Penalties of the automatic representer and of the propensity model.

    * **clip** (`float`):
        Propensity clipping. Default: 0.01

    * **clip_bound** (`float`):
        Representer bound. Default: 1/clip

    * **ridge_candidates** (`list` of `float`):
        If given, each fold picks the regression penalty with the smallest validation loss on its held-out rows.
    """

    def __init__(self, functional, dictionary, propensity_dictionary=None, ridge=None, riesz='plugin',
                 riesz_ridge=None, clip=0.01, clip_bound=None, propensity_ridge=None, ridge_candidates=None):
        if riesz not in ('plugin', 'automatic'):
            raise ValidationError("DMLpy: riesz must be 'plugin' or 'automatic'")
        if not 0 < clip < 0.5:
            raise ValidationError('DMLpy: clip must lie in (0, 0.5)')
        self.functional = functional
        self.dictionary = dictionary
        self.propensity_dictionary = dictionary if propensity_dictionary is None else propensity_dictionary
        self.ridge = ridge
        self.riesz = riesz
        self.riesz_ridge = riesz_ridge
        self.clip = clip
        self.clip_bound = 1.0 / clip if clip_bound is None else clip_bound
        self.propensity_ridge = propensity_ridge
        self.ridge_candidates = None if not ridge_candidates else [float(r) for r in ridge_candidates]

    def _fit_gamma(self, train, ridge):
        functional = self.functional
        if functional.family == 'cdf_at_point':
            return fit_distribution_regression(train, functional.outcome_index, functional.threshold,
                                               self.dictionary, ridge)
        return fit_regression(train, functional.outcome_index, self.dictionary, ridge)

    def fit_gamma(self, train, validation=None):
        """
        Fit the regression on `train`; with ridge candidates, select by squared loss on `validation`.
        """
        if self.ridge_candidates is None or validation is None:
            return self._fit_gamma(train, self.ridge)
        best, best_loss = None, np.inf
        response = self.functional.response(validation.outcomes)
        for ridge in self.ridge_candidates:
            fit = self._fit_gamma(train, ridge)
            loss = validation.mean((response - fit(validation.treatment, validation.covariates)) ** 2)
            if loss < best_loss:
                best, best_loss = fit, loss
        return best


def recipes_from_config(functionals, options, labels, k, cells=None):
    """
    One ``NuisanceRecipe`` per functional from a configuration mapping.

    Recognized keys: ``dictionary`` (keyword arguments of ``Dictionary.from_config``), ``ridge``, ``riesz``,
    ``riesz_ridge``, ``clip``, ``clip_bound``, ``propensity_ridge`` and ``ridge_candidates``. All recipes share one
    dictionary, so a single propensity model per fold serves every plug-in representer.
    """
    options = dict(options or {})
    dictionary_options = dict(options.pop('dictionary', None) or {})
    allowed = {'ridge', 'riesz', 'riesz_ridge', 'clip', 'clip_bound', 'propensity_ridge', 'ridge_candidates'}
    unknown = set(options) - allowed
    if unknown:
        raise ValidationError('DMLpy: unknown nuisance options {}'.format(sorted(unknown)))
    try:
        dictionary = Dictionary.from_config(labels, k, cells=cells, **dictionary_options)
    except TypeError as error:
        raise ValidationError('DMLpy: invalid dictionary options: {}'.format(error))
    return [NuisanceRecipe(functional, dictionary, **options) for functional in functionals]


class NuisanceFitSet:
    """
    Fitted nuisances for every fold :math:`\\ell` and target :math:`j`, with the rows each fold's fits were trained on.

    **Inputs:**

    * **fits** (`list`):
        ``fits[l][j] = (gamma, alpha)``, both evaluable.

    * **provenance** (`list` of `ndarray`):
        Training rows of the fold-`l` fits.

    * **splitting** (`bool`):
        Whether the fits were obtained under sample splitting.

    * **selection_size** (`int`):
        Number of candidate recipes each fold selected from (1 without selection).

    **Attributes:**

    * **nfolds** (`int`), **ntargets** (`int`)

    **Methods:**
    """

    def __init__(self, fits, provenance, splitting=True, selection_size=1, kind='cross_fit'):
        if len(fits) == 0 or len(fits) != len(provenance):
            raise ValidationError('DMLpy: one provenance record per fold is required')
        ntargets = len(fits[0])
        if any(len(row) != ntargets for row in fits):
            raise ValidationError('DMLpy: every fold must hold fits for every target')
        self.fits = [list(row) for row in fits]
        self.provenance = [np.array(p, dtype=int) for p in provenance]
        for p in self.provenance:
            p.setflags(write=False)
        self.nfolds = len(fits)
        self.ntargets = ntargets
        self.splitting = splitting
        self.selection_size = int(selection_size)
        self.kind = kind

    def gamma(self, l, j):
        return self.fits[l][j][0]

    def alpha(self, l, j):
        return self.fits[l][j][1]

    def audit(self, plan):
        """
        Check the recorded provenance against a ``FoldPlan``; raises ``AuditError`` on any mismatch.
        """
        if plan.nfolds != self.nfolds or plan.splitting != self.splitting:
            raise AuditError('DMLpy: the fits were not produced under this fold plan')
        for l in range(plan.nfolds):
            trained = self.provenance[l]
            expected = plan.training(l)
            if trained.shape != expected.shape or not np.array_equal(np.sort(trained), expected):
                raise AuditError('DMLpy: fold {} fits were trained on rows other than the fold complement'.format(l))
            if plan.splitting and np.intersect1d(trained, plan.fold(l)).size > 0:
                raise AuditError('DMLpy: fold {} fits saw rows of fold {}'.format(l, l))
        return True

    def entropy_parameters(self):
        """
        Entropy parameters implied by the fitting scheme: :math:`v_n = 1` and :math:`a_n = \\max(e, r)` with `r`
        the number of candidate recipes.
        """
        return {'v_n': 1.0, 'a_n': max(math.e, float(self.selection_size))}

    @classmethod
    def from_callables(cls, plan, gammas, alphas, kind='external'):
        """
        Fit set reusing the same evaluables `gammas[j]`, `alphas[j]` in every fold of `plan`.
        """
        if len(gammas) != len(alphas):
            raise ValidationError('DMLpy: one gamma and one alpha per target are required')
        fits = [[(g, a) for g, a in zip(gammas, alphas)] for _ in range(plan.nfolds)]
        provenance = [plan.training(l) for l in range(plan.nfolds)]
        return cls(fits, provenance, splitting=plan.splitting, kind=kind)


def cross_fit(data, plan, recipes, verbose=False):
    """
    Fit the nuisances of every target on every fold complement.

    **Inputs:**

    * **data** (``Dataset``)

    * **plan** (``FoldPlan``):
        With ``plan.splitting = False`` every fit uses the full sample.

    * **recipes** (`list` of ``NuisanceRecipe``):
        One recipe per target.

    * **verbose** (`bool`)

    **Output/Returns:**

    * **fits** (``NuisanceFitSet``)
    """
    if plan.n != data.n:
        raise ValidationError('DMLpy: the fold plan covers {} rows but the data has {}'.format(plan.n, data.n))
    if verbose:
        print('DMLpy: Running cross-fitting over {} folds and {} targets...'.format(plan.nfolds, len(recipes)))

    fits, provenance = [], []
    for l in range(plan.nfolds):
        training = plan.training(l)
        train = data.subset(training)
        present = set(train.codes.tolist())
        for code, label in enumerate(data.labels):
            if code not in present:
                raise EstimationError('DMLpy: treatment label "{}" is absent from the training rows of fold {}'.format(
                    label, l))
        validation = data.subset(plan.fold(l)) if plan.splitting else None

        propensities = {}
        row = []
        for recipe in recipes:
            gamma = recipe.fit_gamma(train, validation)
            if recipe.riesz == 'plugin':
                key = (id(recipe.propensity_dictionary), recipe.propensity_ridge, recipe.clip)
                if key not in propensities:
                    propensities[key] = fit_propensity(train, recipe.propensity_dictionary, recipe.clip,
                                                       recipe.propensity_ridge)
                alpha = riesz_plugin(propensities[key], clip_bound=recipe.clip_bound, functional=recipe.functional)
            else:
                alpha = riesz_automatic(train, recipe.functional, recipe.dictionary, recipe.riesz_ridge,
                                        recipe.clip_bound)
            row.append((gamma, alpha))
        fits.append(row)
        provenance.append(training)

    selection_size = max([len(r.ridge_candidates) if r.ridge_candidates else 1 for r in recipes] + [1])
    if verbose:
        print('DMLpy: Cross-fitting completed!')
    return NuisanceFitSet(fits, provenance, splitting=plan.splitting, selection_size=selection_size)


########################################################################################################################
########################################################################################################################
#                                                      Truth
########################################################################################################################

def true_regression(dgp, functional):
    """
    True regression of a functional's response: :math:`E[Y_j|d,x]`, or :math:`P(Y_j \\le u|d,x)` for CDF targets.
    """
    if functional.family == 'cdf_at_point':
        return dgp.conditional_cdf(functional.threshold, functional.outcome_index)
    return dgp.regression(functional.outcome_index)


def true_representer(dgp, functional):
    """
    True Riesz representer of a functional: the unclipped plug-in representer at the true propensities.
    """
    return RieszFit('oracle', _PluginRepresenter(dgp.propensity(), functional), np.inf)


def oracle_fit_set(dgp, functionals, plan):
    """
    Fit set holding the true nuisances of every functional in every fold.
    """
    return NuisanceFitSet.from_callables(plan, [true_regression(dgp, f) for f in functionals],
                                         [true_representer(dgp, f) for f in functionals], kind='oracle')


def rmse_to_truth(dgp, fitted, truth):
    """
    :math:`\\|f - f_0\\|_{P,2}` by population expectation.
    """
    return math.sqrt(max(population_expectation(dgp, lambda y, d, x: (fitted(d, x) - truth(d, x)) ** 2), 0.0))
