"""
This module contains the data layer of ``DMLpy``: observed datasets, data-generating processes used as truth in
simulations, fold plans for sample splitting and file ingestion.

The module currently contains the following classes and functions:

* ``Dataset``: Immutable table of outcomes, treatment labels, covariates and weights.
* ``DiscreteDgp``: Finite-support data-generating process whose expectations are computed exactly by enumeration.
* ``GaussianDgp``: Gaussian-covariate process with linear regressions and logistic propensities.
* ``FoldPlan``: Assignment of observations to folds.
* ``make_dgp``: Catalog of ready-made processes.
* ``generate_dataset``, ``make_folds``, ``load_csv``, ``enumerate_expectation``, ``population_expectation``.
"""

import os

import numpy as np
import pandas as pd
import scipy.special
import scipy.stats as stats

from DMLpy.Utilities import (ValidationError, IngestionError, EvaluationError, check_random_state, spawn_generator,
                             compensated_sum)


def label_codes(values, labels):
    """
    Position of each treatment value in ``labels``; -1 for values outside the label set.
    """
    values = np.asarray(values).astype(object).ravel()
    codes = np.full(values.shape[0], -1, dtype=int)
    for index, label in enumerate(labels):
        codes[values == label] = index
    return codes


########################################################################################################################
########################################################################################################################
#                                                     Dataset
########################################################################################################################

class Dataset:
    """
    Observed sample of records :math:`W_i = (Y_i, D_i, X_i)`.

    All arrays are stored read-only; a ``Dataset`` can be shared freely.

    **Inputs:**

    * **outcomes** (`ndarray`):
        Outcomes of ``shape=(n, p_y)``. A 1D array is read as a single outcome.

    * **treatment** (`ndarray` or `list`):
        Treatment label of each record, length `n`. Labels may be integers or strings.

    * **covariates** (`ndarray`):
        Covariates of ``shape=(n, k)``. `None` means no covariates (``k = 0``).

    * **labels** (`list` or `tuple`):
        Declared label set :math:`\\{d_0, ..., d_K\\}`. The first entry is the baseline label.

        Default: sorted distinct values of `treatment`.

    * **weights** (`ndarray`):
        Positive record weights, length `n`. Sample means are weighted means. Default: all ones.

    * **outcome_names**, **covariate_names** (`list` of `str`):
        Column names, used in reports.

    **Attributes:**

    * **n** (`int`), **p_y** (`int`), **k** (`int`):
        Number of records, outcomes and covariates.

    * **codes** (`ndarray`):
        Position of every record's label in `labels`.
    """

    def __init__(self, outcomes, treatment, covariates=None, labels=None, weights=None, outcome_names=None,
                 covariate_names=None):

        outcomes = np.asarray(outcomes, dtype=float)
        if outcomes.ndim == 1:
            outcomes = outcomes.reshape(-1, 1)
        if outcomes.ndim != 2 or outcomes.shape[0] < 1:
            raise ValidationError('DMLpy: outcomes must be an array of shape (n, p_y) with n >= 1')
        n = outcomes.shape[0]

        treatment = np.asarray(treatment)
        if treatment.ndim != 1 or treatment.shape[0] != n:
            raise ValidationError('DMLpy: treatment must be a sequence of length n = {}'.format(n))

        if covariates is None:
            covariates = np.zeros((n, 0))
        covariates = np.asarray(covariates, dtype=float)
        if covariates.ndim == 1:
            covariates = covariates.reshape(-1, 1)
        if covariates.ndim != 2 or covariates.shape[0] != n:
            raise ValidationError('DMLpy: covariates must be an array of shape (n, k) with n = {}'.format(n))

        if labels is None:
            labels = sorted(set(treatment.tolist()), key=lambda v: (str(type(v)), v))
        labels = tuple(labels)
        if len(labels) == 0 or len(set(labels)) != len(labels):
            raise ValidationError('DMLpy: labels must be a nonempty set of distinct values')
        codes = label_codes(treatment, labels)
        if np.any(codes < 0):
            unknown = treatment[codes < 0][0]
            raise ValidationError('DMLpy: treatment label "{}" is not in the declared label set {}'.format(
                unknown, list(labels)))

        if weights is None:
            weights = np.ones(n)
        weights = np.asarray(weights, dtype=float).ravel()
        if weights.shape[0] != n or np.any(weights <= 0):
            raise ValidationError('DMLpy: weights must be n positive reals')

        for name, block in (('outcomes', outcomes), ('covariates', covariates), ('weights', weights)):
            if not np.all(np.isfinite(block)):
                raise ValidationError('DMLpy: {} contain non-finite values'.format(name))

        self.outcomes = outcomes.copy()
        self.treatment = treatment.copy()
        self.covariates = covariates.copy()
        self.weights = weights.copy()
        self.codes = codes
        for array in (self.outcomes, self.treatment, self.covariates, self.weights, self.codes):
            array.setflags(write=False)

        self.labels = labels
        self.n = n
        self.p_y = outcomes.shape[1]
        self.k = covariates.shape[1]

        if outcome_names is None:
            outcome_names = ['y{}'.format(j) for j in range(self.p_y)]
        if covariate_names is None:
            covariate_names = ['x{}'.format(j) for j in range(self.k)]
        if len(outcome_names) != self.p_y or len(covariate_names) != self.k:
            raise ValidationError('DMLpy: column names do not match the data dimensions')
        self.outcome_names = list(outcome_names)
        self.covariate_names = list(covariate_names)

    def subset(self, index):
        """
        Dataset restricted to the rows in `index` (integer positions), same label set.
        """
        index = np.asarray(index, dtype=int)
        return Dataset(self.outcomes[index], self.treatment[index], self.covariates[index], labels=self.labels,
                       weights=self.weights[index], outcome_names=self.outcome_names,
                       covariate_names=self.covariate_names)

    def mean(self, values):
        """
        Weighted sample mean of a length-`n` array (column-wise for 2D arrays).
        """
        return np.average(np.asarray(values, dtype=float), axis=0, weights=self.weights)

    def distinct_covariates(self):
        """
        Distinct covariate rows, sorted lexicographically; a single empty row when there are no covariates.
        """
        if self.k == 0:
            return np.zeros((1, 0))
        return np.unique(self.covariates, axis=0)

    def __repr__(self):
        return 'Dataset(n={}, p_y={}, k={}, labels={})'.format(self.n, self.p_y, self.k, list(self.labels))


########################################################################################################################
########################################################################################################################
#                                               Data-generating processes
########################################################################################################################

class _CellTable:
    """
    Function of (d, x) stored as a table over (label, covariate cell) of a ``DiscreteDgp``.
    """

    def __init__(self, dgp, table):
        self.dgp = dgp
        self.table = table

    def __call__(self, d, x):
        codes = label_codes(d, self.dgp.labels)
        if np.any(codes < 0):
            raise EvaluationError('DMLpy: treatment label outside the support of the process')
        return self.table[codes, self.dgp.cell_index(x)]


class _CellPropensity:

    def __init__(self, dgp):
        self.dgp = dgp
        self.labels = dgp.labels

    def predict_proba(self, x):
        return self.dgp.propensity_table[:, self.dgp.cell_index(x)].T


class DiscreteDgp:
    """
    Data-generating process with finitely many atoms :math:`(y, d, x)`.

    Conditional means, propensities and every population expectation are obtained exactly by enumeration, so the
    process serves as an oracle for identity checks.

    **Inputs:**

    * **outcomes** (`ndarray`):
        Outcome vector of every atom, ``shape=(natoms, p_y)``.

    * **treatment** (`list`):
        Treatment label of every atom.

    * **covariates** (`ndarray`):
        Covariate vector of every atom, ``shape=(natoms, k)``. `None` for no covariates.

    * **probabilities** (`ndarray`):
        Atom probabilities; nonnegative and summing to one within 1e-12.

    * **labels** (`list`):
        Declared label set. Default: sorted distinct atom labels.

    * **true_regression** (`callable`):
        Optional claimed :math:`E[Y_0|D=d,X=x]` as a function of ``(d, x)``; checked against enumeration (1e-10).

    * **true_propensity** (`callable`):
        Optional claimed :math:`P(D=d|X=x)` as a function of ``(d, x)``; checked against enumeration (1e-10).

    * **true_targets** (`ndarray`):
        Optional target values :math:`\\theta_{0j}` carried along for reporting.

    **Attributes:**

    * **cells** (`ndarray`):
        Distinct covariate vectors, ``shape=(ncells, k)``.

    * **propensity_table** (`ndarray`):
        :math:`P(D=d_l|X=x_c)`, ``shape=(nlabels, ncells)``.

    * **regression_table** (`ndarray`):
        :math:`E[Y|D=d_l,X=x_c]`, ``shape=(nlabels, ncells, p_y)``.
    """
    enumerable = True

    def __init__(self, outcomes, treatment, covariates, probabilities, labels=None, true_regression=None,
                 true_propensity=None, true_targets=None, name=''):

        outcomes = np.asarray(outcomes, dtype=float)
        if outcomes.ndim == 1:
            outcomes = outcomes.reshape(-1, 1)
        natoms = outcomes.shape[0]
        treatment = np.asarray(treatment)
        if covariates is None:
            covariates = np.zeros((natoms, 0))
        covariates = np.asarray(covariates, dtype=float)
        if covariates.ndim == 1:
            covariates = covariates.reshape(-1, 1)
        probabilities = np.asarray(probabilities, dtype=float).ravel()

        if natoms < 1 or treatment.shape != (natoms,) or covariates.shape[0] != natoms \
                or probabilities.shape != (natoms,):
            raise ValidationError('DMLpy: atoms must share one length for outcomes, treatment, covariates and '
                                  'probabilities')
        if not (np.all(np.isfinite(outcomes)) and np.all(np.isfinite(covariates))):
            raise ValidationError('DMLpy: atoms must be finite')
        if np.any(probabilities < 0) or abs(compensated_sum(probabilities) - 1.0) > 1e-12:
            raise ValidationError('DMLpy: atom probabilities must be nonnegative and sum to 1')

        if labels is None:
            labels = sorted(set(treatment.tolist()), key=lambda v: (str(type(v)), v))
        self.labels = tuple(labels)
        self.codes = label_codes(treatment, self.labels)
        if np.any(self.codes < 0):
            raise ValidationError('DMLpy: atom treatment labels must belong to the declared label set')

        self.outcomes = outcomes
        self.treatment = treatment
        self.covariates = covariates
        self.probabilities = probabilities
        self.natoms = natoms
        self.p_y = outcomes.shape[1]
        self.k = covariates.shape[1]
        self.name = name

        # Covariate cells in order of first appearance
        self._cell_lookup = {}
        cell_of_atom = np.zeros(natoms, dtype=int)
        for i, row in enumerate(covariates):
            key = tuple(row.tolist())
            if key not in self._cell_lookup:
                self._cell_lookup[key] = len(self._cell_lookup)
            cell_of_atom[i] = self._cell_lookup[key]
        self.cell_of_atom = cell_of_atom
        ncells = len(self._cell_lookup)
        self.cells = np.array([list(key) for key in self._cell_lookup], dtype=float).reshape(ncells, self.k)

        joint = np.zeros((len(self.labels), ncells))
        first_moment = np.zeros((len(self.labels), ncells, self.p_y))
        np.add.at(joint, (self.codes, cell_of_atom), probabilities)
        np.add.at(first_moment, (self.codes, cell_of_atom), probabilities[:, None] * outcomes)
        self.cell_probabilities = joint.sum(axis=0)
        self.joint_table = joint
        if np.any(joint <= 0):
            raise ValidationError('DMLpy: overlap fails, some (label, covariate cell) pair has probability 0')
        self.propensity_table = joint / self.cell_probabilities
        self.regression_table = first_moment / joint[:, :, None]

        if true_regression is not None:
            self._check_claim(true_regression, self.regression_table[:, :, 0], 'true_regression')
        if true_propensity is not None:
            self._check_claim(true_propensity, self.propensity_table, 'true_propensity')
        self.true_targets = None if true_targets is None else np.asarray(true_targets, dtype=float).ravel()

    def _check_claim(self, function, table, name):
        d = np.repeat(np.arange(len(self.labels)), self.cells.shape[0])
        x = np.tile(self.cells, (len(self.labels), 1))
        claimed = np.asarray(function(np.asarray(self.labels, dtype=object)[d], x), dtype=float).ravel()
        if np.max(np.abs(claimed - table.ravel())) > 1e-10:
            raise ValidationError('DMLpy: {} is inconsistent with the atom distribution'.format(name))

    def cell_index(self, x):
        """
        Covariate cell of every row of `x`.
        """
        x = np.asarray(x, dtype=float)
        if x.ndim != 2:
            x = x.reshape(-1, self.k) if self.k else np.zeros((1, 0))
        try:
            return np.array([self._cell_lookup[tuple(row.tolist())] for row in x], dtype=int)
        except KeyError:
            raise EvaluationError('DMLpy: covariate value outside the support of the process')

    def regression(self, outcome_index=0):
        """
        True regression :math:`\\gamma_0(d,x) = E[Y_j|D=d,X=x]` as a function of ``(d, x)``.
        """
        return _CellTable(self, self.regression_table[:, :, outcome_index])

    def conditional_cdf(self, threshold, outcome_index=0):
        """
        True conditional CDF :math:`P(Y_j \\le u|D=d,X=x)` as a function of ``(d, x)``.
        """
        mass = np.zeros_like(self.joint_table)
        below = self.outcomes[:, outcome_index] <= threshold
        np.add.at(mass, (self.codes[below], self.cell_of_atom[below]), self.probabilities[below])
        return _CellTable(self, mass / self.joint_table)

    def propensity(self):
        """
        True propensity model, exposing ``labels`` and ``predict_proba(x)``.
        """
        return _CellPropensity(self)

    def sample(self, n, random_state=None):
        """
        Draw `n` i.i.d. records from the atom distribution.
        """
        if not isinstance(n, (int, np.integer)) or n < 1:
            raise ValidationError('DMLpy: n must be an integer >= 1')
        random_state = check_random_state(random_state)
        index = random_state.choice(self.natoms, size=int(n), p=self.probabilities)
        return Dataset(self.outcomes[index], self.treatment[index], self.covariates[index], labels=self.labels)

    def as_dataset(self):
        """
        The atoms with positive probability as a ``Dataset`` weighted by their probabilities, so weighted sample means
        equal population expectations.
        """
        keep = self.probabilities > 0
        return Dataset(self.outcomes[keep], self.treatment[keep], self.covariates[keep], labels=self.labels,
                       weights=self.probabilities[keep])

    def expectation(self, f):
        return enumerate_expectation(self, f)


class _LinearRegression:

    def __init__(self, dgp, outcome_index):
        self.dgp = dgp
        self.outcome_index = outcome_index

    def __call__(self, d, x):
        codes = label_codes(d, self.dgp.labels)
        if np.any(codes < 0):
            raise EvaluationError('DMLpy: treatment label outside the support of the process')
        return self.dgp.conditional_mean(codes, x)[:, self.outcome_index]


class _GaussianConditionalCdf:

    def __init__(self, dgp, threshold, outcome_index):
        self.mean = _LinearRegression(dgp, outcome_index)
        self.threshold = threshold
        self.scale = dgp.noise_scale

    def __call__(self, d, x):
        return stats.norm.cdf((self.threshold - self.mean(d, x)) / self.scale)


class _LogisticPropensity:

    def __init__(self, dgp):
        self.dgp = dgp
        self.labels = dgp.labels

    def predict_proba(self, x):
        return self.dgp.propensity_probabilities(x)


class GaussianDgp:
    """
    Data-generating process with standard Gaussian covariates, a multinomial-logistic treatment assignment and
    linear outcome regressions with Gaussian noise:

    :math:`P(D=d_l|X) \\propto \\exp(X^T \\beta_l)`, :math:`Y_j = a_j + \\tau_{lj} + X^T b_j + s\\,\\varepsilon_j`
    with independent standard normal :math:`\\varepsilon_j`.

    **Inputs:**

    * **intercepts** (`ndarray`):
        :math:`a`, ``shape=(p_y, )``.

    * **effects** (`ndarray`):
        :math:`\\tau`, ``shape=(nlabels, p_y)``.

    * **slopes** (`ndarray`):
        :math:`b`, ``shape=(k, p_y)``.

    * **propensity_coefficients** (`ndarray`):
        :math:`\\beta`, ``shape=(nlabels, k)``.

    * **noise_scale** (`float`):
        :math:`s > 0`. Default: 1.0

    * **labels** (`list`):
        Label set. Default: ``0, ..., nlabels - 1``.

    * **reference_size** (`int`):
        Size of the fixed-seed reference sample used for population expectations without closed form.

        Default: 200000
    """
    enumerable = False

    def __init__(self, intercepts, effects, slopes, propensity_coefficients, noise_scale=1.0, labels=None, name='',
                 reference_size=200000):
        self.intercepts = np.atleast_1d(np.asarray(intercepts, dtype=float))
        self.p_y = self.intercepts.shape[0]
        self.effects = np.asarray(effects, dtype=float).reshape(-1, self.p_y)
        nlabels = self.effects.shape[0]
        self.slopes = np.asarray(slopes, dtype=float).reshape(-1, self.p_y)
        self.k = self.slopes.shape[0]
        self.propensity_coefficients = np.asarray(propensity_coefficients, dtype=float).reshape(nlabels, self.k)
        if nlabels < 2:
            raise ValidationError('DMLpy: at least two treatment labels are required')
        if not (isinstance(noise_scale, (int, float)) and noise_scale > 0):
            raise ValidationError('DMLpy: noise_scale must be a positive real')
        self.noise_scale = float(noise_scale)
        self.labels = tuple(range(nlabels)) if labels is None else tuple(labels)
        if len(self.labels) != nlabels:
            raise ValidationError('DMLpy: one label per row of effects is required')
        self.name = name
        self.reference_size = reference_size
        self._reference = None

    def conditional_mean(self, codes, x):
        x = np.asarray(x, dtype=float).reshape(-1, self.k)
        return self.intercepts + self.effects[codes] + x @ self.slopes

    def propensity_probabilities(self, x):
        x = np.asarray(x, dtype=float).reshape(-1, self.k)
        return scipy.special.softmax(x @ self.propensity_coefficients.T, axis=1)

    def regression(self, outcome_index=0):
        return _LinearRegression(self, outcome_index)

    def conditional_cdf(self, threshold, outcome_index=0):
        return _GaussianConditionalCdf(self, threshold, outcome_index)

    def propensity(self):
        return _LogisticPropensity(self)

    def marginal_mean(self, label, outcome_index=0):
        """
        :math:`E[\\gamma_0(d_l, X)]`, exact since :math:`E[X] = 0`.
        """
        code = self.labels.index(label)
        return self.intercepts[outcome_index] + self.effects[code, outcome_index]

    def marginal_cdf(self, threshold, label, outcome_index=0):
        """
        :math:`E[P(Y_j \\le u|D=d_l, X)]`, exact since :math:`X^T b_j` is Gaussian.
        """
        scale = np.sqrt(self.noise_scale ** 2 + np.sum(self.slopes[:, outcome_index] ** 2))
        return float(stats.norm.cdf((threshold - self.marginal_mean(label, outcome_index)) / scale))

    def sample(self, n, random_state=None):
        if not isinstance(n, (int, np.integer)) or n < 1:
            raise ValidationError('DMLpy: n must be an integer >= 1')
        random_state = check_random_state(random_state)
        x = random_state.standard_normal((int(n), self.k))
        cumulative = np.cumsum(self.propensity_probabilities(x), axis=1)
        u = random_state.random(int(n))
        codes = np.minimum((u[:, None] > cumulative).sum(axis=1), len(self.labels) - 1)
        noise = random_state.standard_normal((int(n), self.p_y))
        y = self.conditional_mean(codes, x) + self.noise_scale * noise
        return Dataset(y, np.asarray(self.labels, dtype=object)[codes].tolist(), x, labels=self.labels)

    def reference_dataset(self):
        """
        Fixed-seed sample standing in for the population when no closed form exists.
        """
        if self._reference is None:
            self._reference = self.sample(self.reference_size, spawn_generator(0, 7919))
        return self._reference


def make_dgp(name, **params):
    """
    Build a process from the catalog.

    **Inputs:**

    * **name** (`str`):
        'discrete_confounded': binary treatment, binary covariate, two-point outcome on four (d, x) cells.
        Parameters: `p_x` (P(X=1), default 0.4), `propensity` (P(D=1|X=0), P(D=1|X=1), default (0.3, 0.7)),
        `means` (cell means indexed [d][x], default ((0.2, 0.4), (0.5, 0.9))), `scale` (outcome multiplier, default 1).

        'gaussian_outcomes': binary treatment, `p` outcomes with independent noise. Parameters: `p` (default 1),
        `k` (default 3), `effect` (scalar or length-p, default 0.5), `slope` (default 0.5), `propensity_strength`
        (default 0.5), `noise_scale` (default 1.0), `intercept` (default 0.0).

    **Output/Returns:**

    * **dgp** (``DiscreteDgp`` or ``GaussianDgp``)
    """
    if name == 'discrete_confounded':
        p_x = params.pop('p_x', 0.4)
        propensity = params.pop('propensity', (0.3, 0.7))
        means = np.asarray(params.pop('means', ((0.2, 0.4), (0.5, 0.9))), dtype=float)
        scale = params.pop('scale', 1.0)
        if params:
            raise ValidationError('DMLpy: unknown parameters for discrete_confounded: {}'.format(sorted(params)))
        outcomes, treatment, covariates, probabilities = [], [], [], []
        for x in (0, 1):
            px = p_x if x == 1 else 1 - p_x
            for d in (0, 1):
                pd_x = propensity[x] if d == 1 else 1 - propensity[x]
                for y in (0, 1):
                    py = means[d, x] if y == 1 else 1 - means[d, x]
                    outcomes.append(scale * y)
                    treatment.append(d)
                    covariates.append([x])
                    probabilities.append(px * pd_x * py)
        return DiscreteDgp(outcomes, treatment, covariates, probabilities, labels=(0, 1), name=name)

    if name == 'gaussian_outcomes':
        p = params.pop('p', 1)
        k = params.pop('k', 3)
        effect = np.broadcast_to(np.asarray(params.pop('effect', 0.5), dtype=float), (p,))
        slope = params.pop('slope', 0.5)
        strength = params.pop('propensity_strength', 0.5)
        noise_scale = params.pop('noise_scale', 1.0)
        intercept = params.pop('intercept', 0.0)
        if params:
            raise ValidationError('DMLpy: unknown parameters for gaussian_outcomes: {}'.format(sorted(params)))
        if k < 1 or p < 1:
            raise ValidationError('DMLpy: gaussian_outcomes needs p >= 1 and k >= 1')
        effects = np.vstack([np.zeros(p), effect])
        slopes = np.zeros((k, p))
        slopes[0] = slope
        coefficients = np.zeros((2, k))
        coefficients[1, 0] = strength
        return GaussianDgp(np.full(p, intercept), effects, slopes, coefficients, noise_scale=noise_scale,
                           labels=(0, 1), name=name)

    raise ValidationError('DMLpy: unknown process "{}"; available: discrete_confounded, gaussian_outcomes'.format(name))


def generate_dataset(dgp, n, seed):
    """
    Draw `n` i.i.d. records from `dgp`; a pure function of ``(dgp, n, seed)``.
    """
    if not hasattr(dgp, 'sample'):
        raise ValidationError('DMLpy: dgp must be a DiscreteDgp or GaussianDgp')
    return dgp.sample(n, seed)


def enumerate_expectation(dgp, f):
    """
    Exact expectation :math:`E_P[f(Y, D, X)]` over the atoms of a ``DiscreteDgp``.

    `f` is called once with the stacked atoms ``(y, d, x)`` of shapes ``(natoms, p_y)``, ``(natoms, )``,
    ``(natoms, k)`` and returns one value per atom. The weighted sum uses exactly rounded summation.
    """
    if not isinstance(dgp, DiscreteDgp):
        raise ValidationError('DMLpy: exact enumeration requires a DiscreteDgp')
    values = np.asarray(f(dgp.outcomes, dgp.treatment, dgp.covariates), dtype=float)
    values = np.broadcast_to(values, (dgp.natoms,))
    keep = dgp.probabilities > 0
    if not np.all(np.isfinite(values[keep])):
        raise EvaluationError('DMLpy: the function is not finite on every atom')
    return compensated_sum(dgp.probabilities[keep] * values[keep])


def population_expectation(dgp, f):
    """
    :math:`E_P[f(Y, D, X)]`: exact for enumerable processes, otherwise the mean over the fixed reference sample.
    """
    if getattr(dgp, 'enumerable', False):
        return enumerate_expectation(dgp, f)
    reference = dgp.reference_dataset()
    values = np.asarray(f(reference.outcomes, reference.treatment, reference.covariates), dtype=float)
    if not np.all(np.isfinite(values)):
        raise EvaluationError('DMLpy: the function is not finite on the reference sample')
    return float(np.mean(values))


########################################################################################################################
########################################################################################################################
#                                                     Folds
########################################################################################################################

class FoldPlan:
    """
    Assignment of the observations to folds for sample splitting.

    **Inputs:**

    * **assignment** (`ndarray`):
        Fold id in ``0, ..., nfolds - 1`` of every observation.

    * **nfolds** (`int`):
        Number of folds `L`.

    * **seed** (`int`):
        Seed the assignment was drawn with (recorded only).

    * **splitting** (`bool`):
        If `False`, nuisances are trained on the full sample (``nfolds`` must be 1).

    **Attributes:**

    * **n** (`int`), **sizes** (`ndarray`)
    """

    def __init__(self, assignment, nfolds, seed=None, splitting=True):
        assignment = np.asarray(assignment, dtype=int).ravel()
        if splitting and nfolds < 2:
            raise ValidationError('DMLpy: sample splitting needs at least 2 folds')
        if not splitting and nfolds != 1:
            raise ValidationError('DMLpy: a plan without sample splitting has exactly one fold')
        if np.any(assignment < 0) or np.any(assignment >= nfolds):
            raise ValidationError('DMLpy: fold ids must lie in 0, ..., nfolds - 1')
        sizes = np.bincount(assignment, minlength=nfolds)
        if np.any(sizes == 0):
            raise ValidationError('DMLpy: every fold must be nonempty')
        self.assignment = assignment
        self.assignment.setflags(write=False)
        self.nfolds = int(nfolds)
        self.n = assignment.shape[0]
        self.seed = seed
        self.splitting = splitting
        self.sizes = sizes

    @classmethod
    def no_splitting(cls, n):
        """
        Single-fold plan: every nuisance is trained on, and evaluated at, the full sample.
        """
        return cls(np.zeros(n, dtype=int), 1, seed=None, splitting=False)

    def fold(self, l):
        """
        Positions of the observations in fold `l`.
        """
        return np.flatnonzero(self.assignment == l)

    def training(self, l):
        """
        Positions of the observations the fold-`l` nuisances are trained on.
        """
        if not self.splitting:
            return np.arange(self.n)
        return np.flatnonzero(self.assignment != l)

    def to_dict(self):
        return {'n': self.n, 'nfolds': self.nfolds, 'seed': self.seed, 'splitting': self.splitting,
                'sizes': self.sizes.tolist()}


def make_folds(n, L, seed):
    """
    Random partition of ``0, ..., n-1`` into `L` folds whose sizes are :math:`\\lfloor n/L \\rfloor` or
    :math:`\\lceil n/L \\rceil`. A pure function of ``(n, L, seed)``.
    """
    if not isinstance(n, (int, np.integer)) or not isinstance(L, (int, np.integer)):
        raise TypeError('DMLpy: n and L must be integers')
    if L < 2 or L > n:
        raise ValidationError('DMLpy: the number of folds must satisfy 2 <= L <= n (got L={}, n={})'.format(L, n))
    permutation = spawn_generator(seed).permutation(int(n))
    assignment = np.empty(int(n), dtype=int)
    assignment[permutation] = np.arange(int(n)) % int(L)
    return FoldPlan(assignment, int(L), seed=int(seed))


########################################################################################################################
########################################################################################################################
#                                                   Ingestion
########################################################################################################################

def _numeric_column(frame, column):
    raw = frame[column].str.strip()
    values = pd.to_numeric(raw, errors='coerce')
    bad = values.isna().to_numpy() | ~np.isfinite(values.to_numpy(dtype=float, na_value=np.nan))
    if bad.any():
        row = int(np.flatnonzero(bad)[0])
        cell = raw.iloc[row]
        reason = 'blank cell' if cell == '' else 'non-numeric cell "{}"'.format(cell)
        raise IngestionError('DMLpy: {} in row {}, column "{}"'.format(reason, row + 1, column))
    return values.to_numpy(dtype=float)


def _is_integer_text(values):
    for value in values:
        try:
            number = float(value)
        except ValueError:
            return False
        if not np.isfinite(number) or number != int(number):
            return False
    return True


def load_csv(path, schema):
    """
    Read a UTF-8, comma-separated file with a header row into a ``Dataset``.

    **Inputs:**

    * **path** (`str`):
        File path.

    * **schema** (`dict`):
        Column-name map with keys ``outcomes`` (name or list of names), ``treatment`` (name), and optionally
        ``covariates`` (list of names), ``categorical`` (covariate columns expanded one-hot, first level dropped),
        ``weights`` (name) and ``labels`` (declared label set).

    **Output/Returns:**

    * **data** (``Dataset``):
        Row order is preserved.
    """
    allowed = {'outcomes', 'treatment', 'covariates', 'categorical', 'weights', 'labels'}
    unknown = set(schema) - allowed
    if unknown:
        raise IngestionError('DMLpy: unknown schema keys {}'.format(sorted(unknown)))
    if 'outcomes' not in schema or 'treatment' not in schema:
        raise IngestionError('DMLpy: the schema must name the outcomes and treatment columns')
    if not os.path.isfile(path):
        raise IngestionError('DMLpy: data file "{}" does not exist'.format(path))

    frame = pd.read_csv(path, dtype=str, keep_default_na=False, encoding='utf-8')
    outcomes = schema['outcomes']
    outcomes = [outcomes] if isinstance(outcomes, str) else list(outcomes)
    covariates = list(schema.get('covariates', []))
    categorical = list(schema.get('categorical', []))
    weights = schema.get('weights')
    needed = outcomes + [schema['treatment']] + covariates + categorical + ([weights] if weights else [])
    for column in needed:
        if column not in frame.columns:
            raise IngestionError('DMLpy: column "{}" is missing from {}'.format(column, path))
    if frame.shape[0] < 1:
        raise IngestionError('DMLpy: {} has no data rows'.format(path))

    y = np.column_stack([_numeric_column(frame, column) for column in outcomes])
    x_blocks, x_names = [], []
    for column in covariates:
        x_blocks.append(_numeric_column(frame, column).reshape(-1, 1))
        x_names.append(column)
    for column in categorical:
        levels = frame[column].str.strip()
        blank = np.flatnonzero((levels == '').to_numpy())
        if blank.size:
            raise IngestionError('DMLpy: blank cell in row {}, column "{}"'.format(blank[0] + 1, column))
        dummies = pd.get_dummies(levels, prefix=column, prefix_sep='=', drop_first=True, dtype=float)
        x_blocks.append(dummies.to_numpy())
        x_names.extend(dummies.columns.tolist())
    x = np.hstack(x_blocks) if x_blocks else None

    treatment = frame[schema['treatment']].str.strip().tolist()
    blank = [i for i, value in enumerate(treatment) if value == '']
    if blank:
        raise IngestionError('DMLpy: blank cell in row {}, column "{}"'.format(blank[0] + 1, schema['treatment']))
    declared = schema.get('labels')
    declared_text = None if declared is None else [str(label).strip() for label in declared]
    text = treatment
    candidates = treatment + ([] if declared_text is None else declared_text)
    if _is_integer_text(candidates):
        treatment = [int(float(value)) for value in treatment]
        labels = None if declared_text is None else [int(float(value)) for value in declared_text]
    else:
        labels = declared_text
    if labels is not None:
        unknown = np.flatnonzero(label_codes(treatment, labels) < 0)
        if unknown.size:
            raise IngestionError('DMLpy: unknown treatment label "{}" in row {}, column "{}"'.format(
                text[unknown[0]], unknown[0] + 1, schema['treatment']))

    w = None if not weights else _numeric_column(frame, weights)
    try:
        return Dataset(y, np.array(treatment, dtype=object if isinstance(treatment[0], str) else int), x,
                       labels=labels, weights=w, outcome_names=outcomes, covariate_names=x_names)
    except ValidationError as error:
        raise IngestionError(str(error))
