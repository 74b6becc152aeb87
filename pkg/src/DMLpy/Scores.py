"""
This module contains the moment functionals :math:`m_j(w, \\gamma)`, the augmented score

:math:`\\psi_j(W, \\theta, \\gamma, \\alpha) = m_j(W, \\gamma) + \\alpha(W)(Y - \\gamma(W)) - \\theta`

and exact diagnostics computed on enumerable processes: orthogonality, double robustness and the decomposition of the
estimation error into an oracle term and remainders.

The module currently contains the following classes and functions:

* ``PolicyRule``: Treatment policy :math:`\\pi(x) \\in \\{0, 1\\}`.
* ``MomentFunctional``: Linear functional of the regression, one of five families.
* ``OracleDecomposition``: Terms of the error decomposition of one target.
* ``functionals_from_config``, ``moment_value``, ``augmented_moment``, ``orthogonal_score``, ``true_target``,
  ``true_nuisances``, ``check_orthogonality``, ``double_robustness_residual``, ``oracle_decomposition``,
  ``oracle_score_moments``, ``mean_square_continuity``.
"""

import math

import numpy as np
import scipy.linalg

from DMLpy.Data import label_codes, enumerate_expectation, population_expectation
from DMLpy.Nuisance import true_regression, true_representer
from DMLpy.Utilities import ValidationError, EvaluationError, DegenerateScoreError, gradient, compensated_sum


########################################################################################################################
########################################################################################################################
#                                                 Functionals
########################################################################################################################

class PolicyRule:
    """
    Threshold rule :math:`\\pi(x) = 1\\{x_c > t\\}` (direction 'above') or :math:`1\\{x_c \\le t\\}` (direction
    'below'), or a constant rule.

    **Inputs:**

    * **covariate** (`int`):
        Covariate column `c`. Ignored for constant rules.

    * **threshold** (`float`):
        Threshold `t`. Default: 0.0

    * **direction** (`str`):
        'above' or 'below'. Default: 'above'

    * **constant** (`int`):
        0 or 1 for a constant rule. Default: None
    """

    def __init__(self, covariate=None, threshold=0.0, direction='above', constant=None):
        if constant is not None:
            if constant not in (0, 1):
                raise ValidationError('DMLpy: a constant policy must be 0 or 1')
        elif not isinstance(covariate, int) or covariate < 0:
            raise ValidationError('DMLpy: a threshold policy needs a covariate index >= 0')
        if direction not in ('above', 'below'):
            raise ValidationError("DMLpy: policy direction must be 'above' or 'below'")
        self.covariate = covariate
        self.threshold = float(threshold)
        self.direction = direction
        self.constant = constant

    def __call__(self, x):
        x = np.asarray(x, dtype=float)
        rows = x.shape[0]
        if self.constant is not None:
            return np.full(rows, float(self.constant))
        if x.ndim != 2 or self.covariate >= x.shape[1]:
            raise EvaluationError('DMLpy: the policy needs covariate {} which is not in the data'.format(
                self.covariate))
        above = x[:, self.covariate] > self.threshold
        return (above if self.direction == 'above' else ~above).astype(float)

    def to_dict(self):
        if self.constant is not None:
            return {'constant': self.constant}
        return {'covariate': self.covariate, 'threshold': self.threshold, 'direction': self.direction}

    @classmethod
    def from_dict(cls, entry):
        return cls(**entry)


class MomentFunctional:
    """
    Linear moment functional :math:`m(w, \\gamma)` identifying :math:`\\theta_0 = E_P[m(W, \\gamma_0)]`.

    Every family except 'outcome_mean' writes :math:`m(w, \\gamma) = \\sum_l c_l(x)\\gamma(d_l, x)`:

    * 'many_treatments', 'many_outcomes': :math:`\\gamma(d_t, x) - \\gamma(d_c, x)` on outcome `outcome_index`.
    * 'policy_value': :math:`\\gamma(d_c, x) + \\pi(x)(\\gamma(d_t, x) - \\gamma(d_c, x))`.
    * 'cdf_at_point': :math:`\\gamma_u(d_a, x)` where :math:`\\gamma_u` is the regression of :math:`1\\{Y \\le u\\}`.
    * 'outcome_mean': :math:`\\gamma(d, x)` at the observed label, so :math:`\\theta_0 = E[Y]`.

    **Inputs:**

    * **family** (`str`)

    * **treated**, **control**:
        Contrast labels (and the two arms of a policy).

    * **outcome_index** (`int`):
        Outcome column. Default: 0

    * **policy** (``PolicyRule``):
        Policy of the 'policy_value' family.

    * **threshold** (`float`), **arm**:
        Threshold `u` and arm of the 'cdf_at_point' family.

    * **name** (`str`):
        Label used in reports.

    **Methods:**
    """
    families = ('many_treatments', 'many_outcomes', 'policy_value', 'cdf_at_point', 'outcome_mean')

    def __init__(self, family, treated=None, control=None, outcome_index=0, policy=None, threshold=None, arm=None,
                 name=None):
        if family not in self.families:
            raise ValidationError('DMLpy: unknown functional family "{}"; available: {}'.format(
                family, ', '.join(self.families)))
        if not isinstance(outcome_index, int) or outcome_index < 0:
            raise ValidationError('DMLpy: outcome_index must be an integer >= 0')
        if family in ('many_treatments', 'many_outcomes'):
            if treated is None or control is None or treated == control:
                raise ValidationError('DMLpy: a treatment contrast needs two different labels')
        elif family == 'policy_value':
            if not isinstance(policy, PolicyRule):
                raise ValidationError('DMLpy: policy_value needs a PolicyRule')
            treated = 1 if treated is None else treated
            control = 0 if control is None else control
            if treated == control:
                raise ValidationError('DMLpy: the two policy arms must differ')
        elif family == 'cdf_at_point':
            if threshold is None or not np.isfinite(threshold) or arm is None:
                raise ValidationError('DMLpy: cdf_at_point needs a finite threshold and an arm')
            threshold = float(threshold)
        self.family = family
        self.treated = treated
        self.control = control
        self.outcome_index = outcome_index
        self.policy = policy
        self.threshold = threshold
        self.arm = arm
        self.name = self._default_name() if name is None else name

    def _default_name(self):
        if self.family in ('many_treatments', 'many_outcomes'):
            return 'y{}: {} vs {}'.format(self.outcome_index, self.treated, self.control)
        if self.family == 'policy_value':
            return 'y{}: policy {}'.format(self.outcome_index, self.policy.to_dict())
        if self.family == 'cdf_at_point':
            return 'y{}: F_{}({:g})'.format(self.outcome_index, self.arm, self.threshold)
        return 'y{}: mean'.format(self.outcome_index)

    def terms(self, x):
        """
        Pairs :math:`(d_l, c_l(x))` of the representation :math:`m(w, \\gamma) = \\sum_l c_l(x)\\gamma(d_l, x)`.
        """
        if self.family in ('many_treatments', 'many_outcomes'):
            return [(self.treated, 1.0), (self.control, -1.0)]
        if self.family == 'policy_value':
            share = self.policy(x)
            return [(self.treated, share), (self.control, 1.0 - share)]
        if self.family == 'cdf_at_point':
            return [(self.arm, 1.0)]
        raise ValidationError('DMLpy: the outcome mean has no fixed-label representation')

    def evaluate(self, d, x, gamma):
        """
        :math:`m(w, \\gamma)` at every row of ``(d, x)``.
        """
        d = np.atleast_1d(np.asarray(d))
        x = _covariate_rows(x, d.shape[0])
        if self.family == 'outcome_mean':
            values = np.asarray(gamma(d, x), dtype=float)
        else:
            values = np.zeros(d.shape[0])
            for label, coefficient in self.terms(x):
                at_label = np.empty(d.shape[0], dtype=object)
                at_label[:] = [label] * d.shape[0]
                values = values + coefficient * np.asarray(gamma(at_label, x), dtype=float)
        if not np.all(np.isfinite(values)):
            raise EvaluationError('DMLpy: the functional "{}" is not finite on the data'.format(self.name))
        return values

    def transform(self, y):
        """
        Response of the target outcome: the value itself, or :math:`1\\{y \\le u\\}` for CDF targets.
        """
        y = np.asarray(y, dtype=float)
        if self.family == 'cdf_at_point':
            return (y <= self.threshold).astype(float)
        return y

    def response(self, outcomes):
        """
        Response column :math:`R` of an outcome matrix of ``shape=(n, p_y)``.
        """
        outcomes = np.asarray(outcomes, dtype=float)
        outcomes = outcomes.reshape(outcomes.shape[0], -1)
        if self.outcome_index >= outcomes.shape[1]:
            raise ValidationError('DMLpy: outcome index {} exceeds the {} outcome columns'.format(
                self.outcome_index, outcomes.shape[1]))
        return self.transform(outcomes[:, self.outcome_index])

    def to_dict(self):
        entry = {'family': self.family, 'name': self.name, 'outcome_index': self.outcome_index}
        if self.family in ('many_treatments', 'many_outcomes', 'policy_value'):
            entry.update({'treated': self.treated, 'control': self.control})
        if self.family == 'policy_value':
            entry['policy'] = self.policy.to_dict()
        if self.family == 'cdf_at_point':
            entry.update({'threshold': self.threshold, 'arm': self.arm})
        return entry

    def __repr__(self):
        return 'MomentFunctional({})'.format(self.name)


def functionals_from_config(entries, labels, p_y=1):
    """
    Expand configuration entries into functionals.

    Each entry is a mapping with a ``family`` key. Lists expand into one functional per element:

    * 'many_treatments': ``treated`` (label or list; default every non-baseline label), ``control`` (default the
      baseline label), ``outcome_index``.
    * 'many_outcomes': ``outcome_indices`` (default every outcome), ``treated``, ``control``.
    * 'policy_value': ``policy`` (one rule) or ``policies`` (list of rules), ``treated``, ``control``,
      ``outcome_index``.
    * 'cdf_at_point': ``thresholds`` (list) or ``threshold``, ``arm``, ``outcome_index``.
    * 'outcome_mean': ``outcome_index``.

    **Output/Returns:**

    * **functionals** (`list` of ``MomentFunctional``)
    """
    labels = tuple(labels)
    functionals = []
    for entry in entries:
        entry = dict(entry)
        family = entry.pop('family', None)
        try:
            if family == 'many_treatments':
                control = entry.pop('control', labels[0])
                treated = entry.pop('treated', [label for label in labels if label != control])
                treated = treated if isinstance(treated, (list, tuple)) else [treated]
                functionals.extend(MomentFunctional(family, treated=t, control=control, **entry) for t in treated)
            elif family == 'many_outcomes':
                indices = entry.pop('outcome_indices', list(range(p_y)))
                control = entry.pop('control', labels[0])
                treated = entry.pop('treated', labels[1] if len(labels) > 1 else None)
                functionals.extend(MomentFunctional(family, treated=treated, control=control, outcome_index=j,
                                                    **entry) for j in indices)
            elif family == 'policy_value':
                rules = entry.pop('policies', None)
                if rules is None:
                    rules = [entry.pop('policy', None)]
                for rule in rules:
                    if rule is None:
                        raise ValidationError('DMLpy: policy_value needs a policy rule')
                    functionals.append(MomentFunctional(family, policy=PolicyRule.from_dict(rule), **entry))
            elif family == 'cdf_at_point':
                thresholds = entry.pop('thresholds', None)
                if thresholds is None:
                    thresholds = [entry.pop('threshold', None)]
                functionals.extend(MomentFunctional(family, threshold=u, **entry) for u in thresholds)
            elif family == 'outcome_mean':
                functionals.append(MomentFunctional(family, **entry))
            else:
                raise ValidationError('DMLpy: unknown functional family "{}"'.format(family))
        except TypeError as error:
            raise ValidationError('DMLpy: invalid parameters for family "{}": {}'.format(family, error))
    for functional in functionals:
        for label in (functional.treated, functional.control, functional.arm):
            if label is not None and label not in labels:
                raise ValidationError('DMLpy: label "{}" of functional "{}" is not a treatment label'.format(
                    label, functional.name))
        if functional.outcome_index >= p_y:
            raise ValidationError('DMLpy: functional "{}" refers to a missing outcome column'.format(functional.name))
    if not functionals:
        raise ValidationError('DMLpy: at least one target functional is required')
    return functionals


########################################################################################################################
########################################################################################################################
#                                                    Scores
########################################################################################################################

def _covariate_rows(x, rows):
    x = np.asarray(x, dtype=float)
    if x.ndim == 2:
        return x
    return x.reshape(rows, -1) if x.size else np.zeros((rows, 0))


def _record(w):
    d, x = w
    d = np.atleast_1d(np.asarray(d, dtype=object))
    scalar = np.ndim(x) <= 1 and d.shape[0] == 1
    return d, _covariate_rows(x, d.shape[0]), scalar


def moment_value(functional, w, gamma):
    """
    :math:`m(w, \\gamma)` at a record ``w = (d, x)``; arrays of records give arrays of values.
    """
    d, x, scalar = _record(w)
    values = functional.evaluate(d, x, gamma)
    return float(values[0]) if scalar else values


def augmented_moment(functional, outcomes, d, x, gamma, alpha):
    """
    Uncentered augmented score :math:`m(W, \\gamma) + \\alpha(W)(R - \\gamma(W))` at every row, where the outcome
    matrix `outcomes` has ``shape=(n, p_y)``.
    """
    response = functional.response(outcomes)
    values = functional.evaluate(d, x, gamma) + np.asarray(alpha(d, x)) * (response - np.asarray(gamma(d, x)))
    if not np.all(np.isfinite(values)):
        raise EvaluationError('DMLpy: the score of "{}" is not finite'.format(functional.name))
    return values


def orthogonal_score(functional, w, y, theta, gamma, alpha):
    """
    Augmented score :math:`\\psi(W, \\theta, \\gamma, \\alpha) = m(W, \\gamma) + \\alpha(W)(R - \\gamma(W)) - \\theta`.

    **Inputs:**

    * **functional** (``MomentFunctional``)

    * **w** (`tuple`):
        Record ``(d, x)``; arrays of records are accepted.

    * **y** (`float` or `ndarray`):
        Target outcome; the response `R` is ``functional.transform(y)``.

    * **theta** (`float`)

    * **gamma**, **alpha** (`callables`)

    **Output/Returns:**

    * **psi** (`float` or `ndarray`)
    """
    d, x, scalar = _record(w)
    response = functional.transform(np.atleast_1d(y))
    values = functional.evaluate(d, x, gamma) + np.asarray(alpha(d, x)) * (response - np.asarray(gamma(d, x))) - theta
    if not np.all(np.isfinite(values)):
        raise EvaluationError('DMLpy: the score of "{}" is not finite'.format(functional.name))
    return float(values[0]) if scalar else values


########################################################################################################################
########################################################################################################################
#                                                Population truth
########################################################################################################################

def true_target(dgp, functional):
    """
    :math:`\\theta_0 = E_P[m(W, \\gamma_0)]`: exact for enumerable processes and for the contrasts and CDF values
    of a ``GaussianDgp``, otherwise over the reference sample.
    """
    if not getattr(dgp, 'enumerable', False) and hasattr(dgp, 'marginal_mean'):
        j = functional.outcome_index
        if functional.family in ('many_treatments', 'many_outcomes'):
            return float(dgp.marginal_mean(functional.treated, j) - dgp.marginal_mean(functional.control, j))
        if functional.family == 'cdf_at_point':
            return dgp.marginal_cdf(functional.threshold, functional.arm, j)
    gamma = true_regression(dgp, functional)
    return population_expectation(dgp, lambda y, d, x: functional.evaluate(d, x, gamma))


def true_nuisances(dgp, functional):
    """
    :math:`(\\theta_0, \\gamma_0, \\alpha_0)` of a functional under `dgp`.
    """
    return true_target(dgp, functional), true_regression(dgp, functional), true_representer(dgp, functional)


def _require_enumerable(dgp):
    if not getattr(dgp, 'enumerable', False):
        raise ValidationError('DMLpy: exact diagnostics need an enumerable process with known nuisances')


def _score_mean(dgp, functional, theta, gamma, alpha):
    return enumerate_expectation(
        dgp, lambda y, d, x: augmented_moment(functional, y, d, x, gamma, alpha) - theta)


def check_orthogonality(dgp, functional, direction_gamma, direction_alpha, h=1e-4, gamma=None, alpha=None):
    """
    Central finite-difference derivatives at :math:`r = 0` of
    :math:`r \\mapsto E_P[\\psi(W, \\theta_0, \\gamma_0 + r\\Delta\\gamma, \\alpha_0)]` and
    :math:`r \\mapsto E_P[\\psi(W, \\theta_0, \\gamma_0, \\alpha_0 + r\\Delta\\alpha)]`, with expectations by enumeration.

    **Inputs:**

    * **dgp** (``DiscreteDgp``)

    * **functional** (``MomentFunctional``)

    * **direction_gamma**, **direction_alpha** (`callables`):
        Directions :math:`\\Delta\\gamma` and :math:`\\Delta\\alpha`.

    * **h** (`float`):
        Step in (0, 0.1]. Default: 1e-4

    * **gamma**, **alpha** (`callables`):
        Replace the true nuisances at the base point (to check a wrong representer, say).

    **Output/Returns:**

    * **derivatives** (`tuple`):
        Derivative in the :math:`\\gamma` direction and in the :math:`\\alpha` direction.
    """
    _require_enumerable(dgp)
    if not 0 < h <= 0.1:
        raise ValidationError('DMLpy: the finite-difference step must lie in (0, 0.1]')
    theta0, gamma0, alpha0 = true_nuisances(dgp, functional)
    gamma0 = gamma0 if gamma is None else gamma
    alpha0 = alpha0 if alpha is None else alpha

    def along_gamma(r):
        shifted = lambda d, x: gamma0(d, x) + r[0] * direction_gamma(d, x)
        return _score_mean(dgp, functional, theta0, shifted, alpha0)

    def along_alpha(r):
        shifted = lambda d, x: alpha0(d, x) + r[0] * direction_alpha(d, x)
        return _score_mean(dgp, functional, theta0, gamma0, shifted)

    d_gamma = gradient(function=along_gamma, point=[0.0], df_step=h)[0]
    d_alpha = gradient(function=along_alpha, point=[0.0], df_step=h)[0]
    return float(d_gamma), float(d_alpha)


def double_robustness_residual(dgp, functional, gamma, alpha):
    """
    Both sides of :math:`E_P[\\psi(W, \\theta_0, \\gamma, \\alpha)] = -E_P[(\\alpha - \\alpha_0)(\\gamma - \\gamma_0)]`
    by enumeration.

    **Output/Returns:**

    * **lhs**, **rhs** (`float`)
    """
    _require_enumerable(dgp)
    theta0, gamma0, alpha0 = true_nuisances(dgp, functional)
    lhs = _score_mean(dgp, functional, theta0, gamma, alpha)
    rhs = -enumerate_expectation(dgp, lambda y, d, x: (alpha(d, x) - alpha0(d, x)) * (gamma(d, x) - gamma0(d, x)))
    return lhs, rhs


########################################################################################################################
########################################################################################################################
#                                              Error decomposition
########################################################################################################################

class OracleDecomposition:
    """
    Decomposition :math:`\\sqrt{n}(\\hat{\\theta} - \\theta_0) = \\sqrt{n}(\\bar{\\theta} - \\theta_0) + A + B + C + D`
    of one target, where :math:`\\bar{\\theta}` is the estimator at the true nuisances, `A`, `B`, `C` are centered
    empirical processes over

    :math:`f_A = m(W, \\Delta\\gamma) - \\alpha_0\\Delta\\gamma`, :math:`f_B = \\Delta\\alpha(R - \\gamma_0)`,
    :math:`f_C = -\\Delta\\alpha\\Delta\\gamma`

    and :math:`D = \\sqrt{n}\\sum_\\ell \\pi_\\ell E_P[f_{C,\\ell}]` with fold shares :math:`\\pi_\\ell`.

    **Attributes:**

    * **oracle_term**, **A**, **B**, **C**, **D** (`float`)

    * **scaled_error** (`float`):
        :math:`\\sqrt{n}(\\hat{\\theta} - \\theta_0)`.

    * **residual** (`float`):
        ``oracle_term + A + B + C + D - scaled_error``.

    * **rate_gamma**, **rate_alpha** (`float`):
        Largest fold :math:`\\|\\hat{\\gamma}_\\ell - \\gamma_0\\|_{P,2}` and :math:`\\|\\hat{\\alpha}_\\ell - \\alpha_0\\|_{P,2}`.

    * **d_bound** (`float`):
        :math:`\\sqrt{n}\\sum_\\ell \\pi_\\ell \\|\\Delta\\alpha_\\ell\\|_{P,2}\\|\\Delta\\gamma_\\ell\\|_{P,2}`, which bounds
        :math:`|D|`.
    """

    def __init__(self, name, n, oracle_term, A, B, C, D, scaled_error, rate_gamma, rate_alpha, d_bound):
        self.name = name
        self.n = n
        self.oracle_term = oracle_term
        self.A = A
        self.B = B
        self.C = C
        self.D = D
        self.scaled_error = scaled_error
        self.residual = oracle_term + A + B + C + D - scaled_error
        self.rate_gamma = rate_gamma
        self.rate_alpha = rate_alpha
        self.d_bound = d_bound

    def within_tolerance(self, tolerance=1e-10):
        return abs(self.residual) <= tolerance * (1 + abs(self.scaled_error))

    def to_dict(self):
        return {'name': self.name, 'n': self.n, 'oracle_term': self.oracle_term, 'A': self.A, 'B': self.B,
                'C': self.C, 'D': self.D, 'scaled_error': self.scaled_error, 'residual': self.residual,
                'rate_gamma': self.rate_gamma, 'rate_alpha': self.rate_alpha, 'd_bound': self.d_bound}


def _fold_rows(data, fits, plan):
    if plan is not None:
        return [plan.fold(l) for l in range(plan.nfolds)]
    if not fits.splitting:
        return [np.arange(data.n)]
    return [np.setdiff1d(np.arange(data.n), fits.provenance[l]) for l in range(fits.nfolds)]


def oracle_decomposition(data, dgp, functional, fits, plan=None, target_index=0):
    """
    Decompose the scaled estimation error of one target into the oracle term and the remainders `A`, `B`, `C`, `D`.

    Population expectations are computed by enumeration treating each fold's fits as fixed functions.

    **Inputs:**

    * **data** (``Dataset``)

    * **dgp** (``DiscreteDgp``)

    * **functional** (``MomentFunctional``)

    * **fits** (``NuisanceFitSet``)

    * **plan** (``FoldPlan``):
        Fold plan of the fits. Default: folds recovered from the fits' provenance.

    * **target_index** (`int`):
        Column of `functional` in `fits`. Default: 0

    **Output/Returns:**

    * **decomposition** (``OracleDecomposition``)
    """
    _require_enumerable(dgp)
    theta0, gamma0, alpha0 = true_nuisances(dgp, functional)
    folds = _fold_rows(data, fits, plan)
    omega = data.weights / data.weights.sum()
    root_n = math.sqrt(data.n)

    oracle_rows = augmented_moment(functional, data.outcomes, data.treatment, data.covariates, gamma0, alpha0)
    f_a, f_b, f_c, fitted = (np.zeros(data.n) for _ in range(4))
    expected_a = expected_b = expected_c = d_bound = 0.0
    rate_gamma = rate_alpha = 0.0

    for l, rows in enumerate(folds):
        gamma = fits.gamma(l, target_index)
        alpha = fits.alpha(l, target_index)

        def delta_gamma(d, x):
            return gamma(d, x) - gamma0(d, x)

        def delta_alpha(d, x):
            return alpha(d, x) - alpha0(d, x)

        def class_a(y, d, x):
            return functional.evaluate(d, x, delta_gamma) - alpha0(d, x) * delta_gamma(d, x)

        def class_b(y, d, x):
            return delta_alpha(d, x) * (functional.response(y) - gamma0(d, x))

        def class_c(y, d, x):
            return -delta_alpha(d, x) * delta_gamma(d, x)

        y, d, x = data.outcomes[rows], data.treatment[rows], data.covariates[rows]
        f_a[rows] = class_a(y, d, x)
        f_b[rows] = class_b(y, d, x)
        f_c[rows] = class_c(y, d, x)
        fitted[rows] = augmented_moment(functional, y, d, x, gamma, alpha)

        share = omega[rows].sum()
        expected_a += share * enumerate_expectation(dgp, class_a)
        expected_b += share * enumerate_expectation(dgp, class_b)
        fold_c = enumerate_expectation(dgp, class_c)
        expected_c += share * fold_c

        norm_gamma = math.sqrt(enumerate_expectation(dgp, lambda y, d, x: delta_gamma(d, x) ** 2))
        norm_alpha = math.sqrt(enumerate_expectation(dgp, lambda y, d, x: delta_alpha(d, x) ** 2))
        d_bound += share * norm_gamma * norm_alpha
        rate_gamma = max(rate_gamma, norm_gamma)
        rate_alpha = max(rate_alpha, norm_alpha)

    def empirical(values):
        return compensated_sum(omega * values)

    theta_bar = empirical(oracle_rows)
    theta_hat = empirical(fitted)
    return OracleDecomposition(
        name=functional.name, n=data.n,
        oracle_term=root_n * (theta_bar - theta0),
        A=root_n * (empirical(f_a) - expected_a),
        B=root_n * (empirical(f_b) - expected_b),
        C=root_n * (empirical(f_c) - expected_c),
        D=root_n * expected_c,
        scaled_error=root_n * (theta_hat - theta0),
        rate_gamma=rate_gamma, rate_alpha=rate_alpha, d_bound=root_n * d_bound)


########################################################################################################################
########################################################################################################################
#                                              Population moments
########################################################################################################################

def _population_rows(dgp):
    if getattr(dgp, 'enumerable', False):
        keep = dgp.probabilities > 0
        return dgp.outcomes[keep], dgp.treatment[keep], dgp.covariates[keep], dgp.probabilities[keep]
    reference = dgp.reference_dataset()
    return reference.outcomes, reference.treatment, reference.covariates, np.full(reference.n, 1.0 / reference.n)


def oracle_score_moments(dgp, functionals, q=4.0):
    """
    Moments of the true centered scores :math:`\\bar{\\psi}_{0j} = m_j(W, \\gamma_0) + \\alpha_0(R - \\gamma_0) - \\theta_0`.

    **Inputs:**

    * **dgp** (``DiscreteDgp`` or ``GaussianDgp``)

    * **functionals** (`list` of ``MomentFunctional``)

    * **q** (`float`):
        Moment order of the envelope. Default: 4.0

    **Output/Returns:**

    * **moments** (`dict`):
        ``theta`` (true targets), ``sigma`` (score standard deviations), ``correlation``, ``lambda_min`` (smallest
        eigenvalue of the correlation), ``b_n`` (the larger of
        :math:`\\|\\max_j|\\bar{\\psi}_{0j}/\\sigma_j|\\|_{P,q}` and :math:`\\max_j E[(\\bar{\\psi}_{0j}/\\sigma_j)^4]^{1/2}`)
        and ``sigma_bar`` (:math:`\\max_j \\sup|R - \\gamma_0|` over the population rows).
    """
    y, d, x, weights = _population_rows(dgp)
    theta, columns, spread = [], [], 0.0
    for functional in functionals:
        theta0, gamma0, alpha0 = true_nuisances(dgp, functional)
        columns.append(augmented_moment(functional, y, d, x, gamma0, alpha0) - theta0)
        theta.append(theta0)
        spread = max(spread, float(np.max(np.abs(functional.response(y) - gamma0(d, x)))))
    scores = np.column_stack(columns)
    second = scores.T @ (weights[:, None] * scores)
    sigma = np.sqrt(np.maximum(np.diag(second), 0.0))
    for functional, s in zip(functionals, sigma):
        if s <= 0:
            raise DegenerateScoreError('DMLpy: the score of "{}" has zero variance'.format(functional.name))
    correlation = second / np.outer(sigma, sigma)
    standardized = scores / sigma
    envelope = compensated_sum(weights * np.max(np.abs(standardized), axis=1) ** q) ** (1.0 / q)
    fourth = np.sqrt(np.max(standardized.T ** 4 @ weights))
    return {'theta': np.asarray(theta), 'sigma': sigma, 'correlation': correlation,
            'lambda_min': float(scipy.linalg.eigvalsh(correlation)[0]), 'b_n': float(max(envelope, fourth)),
            'sigma_bar': spread}


class _CellLabelIndicator:

    def __init__(self, dgp, code, cell):
        self.dgp = dgp
        self.code = code
        self.cell = cell

    def __call__(self, d, x):
        return ((label_codes(d, self.dgp.labels) == self.code)
                & (self.dgp.cell_index(x) == self.cell)).astype(float)


def mean_square_continuity(dgp, functional):
    """
    Smallest :math:`\\bar{Q}^2` with :math:`E[m(W, \\gamma)^2] \\le \\bar{Q}^2 E[\\gamma(W)^2]` for every function
    :math:`\\gamma` of (label, covariate cell), as the largest generalized eigenvalue over the cell indicators.
    """
    _require_enumerable(dgp)
    keep = dgp.probabilities > 0
    d, x, p = dgp.treatment[keep], dgp.covariates[keep], dgp.probabilities[keep]
    nlabels, ncells = dgp.joint_table.shape
    directions = [_CellLabelIndicator(dgp, code, cell) for code in range(nlabels) for cell in range(ncells)]
    moments = np.column_stack([functional.evaluate(d, x, direction) for direction in directions])
    functional_gram = moments.T @ (p[:, None] * moments)
    gram = np.diag(dgp.joint_table.ravel())
    return float(scipy.linalg.eigh(functional_gram, gram, eigvals_only=True)[-1])
