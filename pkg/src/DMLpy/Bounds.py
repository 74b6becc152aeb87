"""
This module contains calculators for finite-sample bounds on the Kolmogorov distance between the distribution of the
sup-t statistic of the estimators and its Gaussian limit, and for the auxiliary inequalities they are built from.

All calculators are pure formula evaluations. Universal constants that are not known numerically are inputs (default
1), so every reported value holds up to the configured constants.

The module currently contains the following classes and functions:

* ``Theorem1Inputs``, ``Theorem1Bound``: Finitely many targets.
* ``Theorem2Inputs``: Targets indexed by a continuum.
* ``BoundReport``: Itemized terms with the inputs echoed.
* ``theorem1_term_A``, ``theorem1_delta1``, ``theorem1_delta2``, ``theorem1_bound``, ``preliminary_rate``,
  ``theorem2_bound``.
* ``maximal_inequality_bound``, ``entropy_sum``, ``entropy_sum_many``, ``anti_concentration_bound``,
  ``gaussian_sup_coupling_bound``, ``kolmogorov_from_coupling``, ``class_variances``, ``empirical_bound_inputs``.
"""

import math
import warnings

import numpy as np

from DMLpy.Nuisance import rmse_to_truth
from DMLpy.Scores import true_nuisances, oracle_score_moments, mean_square_continuity
from DMLpy.Utilities import ValidationError

REGIMES = {'heavy_tail_q': 'heavy_tail_q', 'heavy': 'heavy_tail_q', 'sub_gaussian': 'sub_gaussian',
           'subgauss': 'sub_gaussian', 'bounded': 'bounded'}


def _positive(name, value):
    if not (isinstance(value, (int, float, np.integer, np.floating)) and np.isfinite(value) and value > 0):
        raise ValidationError('DMLpy: {} must be a positive real (got {})'.format(name, value))
    return float(value)


def _nonnegative(name, value):
    if not (isinstance(value, (int, float, np.integer, np.floating)) and np.isfinite(value) and value >= 0):
        raise ValidationError('DMLpy: {} must be a nonnegative real (got {})'.format(name, value))
    return float(value)


def _at_least(name, value, lower):
    value = _nonnegative(name, value) if lower >= 0 else float(value)
    if value < lower:
        raise ValidationError('DMLpy: {} must be >= {} (got {})'.format(name, lower, value))
    return value


def _constants(given, names):
    constants = {name: 1.0 for name in names}
    for name, value in (given or {}).items():
        if name not in constants:
            raise ValidationError('DMLpy: unknown constant "{}"; expected one of {}'.format(name, sorted(names)))
        constants[name] = _positive('constant ' + name, value)
    return constants


########################################################################################################################
########################################################################################################################
#                                                  Reports
########################################################################################################################

class BoundReport:
    """
    Itemized bound.

    **Attributes:**

    * **theorem** (`str`), **inputs** (`dict`), **terms** (`dict`), **total** (`float`), **constants** (`dict`),
      **warnings** (`list` of `str`)
    """

    def __init__(self, theorem, inputs, terms, total, constants, messages=None):
        self.theorem = theorem
        self.inputs = dict(inputs)
        self.terms = dict(terms)
        self.total = float(total)
        self.constants = dict(constants)
        self.warnings = list(messages or [])

    def to_dict(self):
        return {'theorem': self.theorem, 'inputs': self.inputs, 'terms': self.terms, 'total': self.total,
                'constants_used': self.constants, 'note': 'up to configured constants', 'warnings': self.warnings}


def _vacuous(total, messages):
    if total >= 1:
        message = 'DMLpy: bound vacuous at these inputs (total {:.4g} >= 1)'.format(total)
        warnings.warn(message)
        messages.append(message)


########################################################################################################################
########################################################################################################################
#                                            Finitely many targets
########################################################################################################################

class Theorem1Inputs:
    """
    Inputs of the bound for finitely many targets.

    **Inputs:**

    * **n**, **p** (`float`):
        Sample size (> 1) and number of targets (>= 2). Real values are accepted.

    * **b_n** (`float`):
        Envelope of the standardized scores.

    * **lambda_min** (`float`):
        Smallest eigenvalue of the score correlation.

    * **sigma_min** (`float`):
        Smallest score standard deviation.

    * **Q_bar**, **alpha_bar**, **sigma_bar** (`float`):
        Mean-square continuity constant, representer bound and residual bound.

    * **R_gamma**, **R_alpha** (`float`):
        Root-mean-square rates of the regression and representer estimators.

    * **q** (`float`):
        Moment order, >= 4. Default: 4

    * **delta** (`float`):
        Envelope moment excess, >= 0. Default: 0

    * **v_n**, **a_n**, **M_n** (`float`):
        Entropy parameters (:math:`v_n \\ge 1`, :math:`a_n \\ge e`) and envelope norm. Defaults: 1, e, 0

    * **c** (`float`):
        Free constant of term (C). Default: 1

    * **constants** (`dict`):
        'C_q' (heavy-tail regime), 'C' (other regimes) and 'K'. Default: all 1
    """

    def __init__(self, n, p, b_n, lambda_min, sigma_min, Q_bar=1.0, alpha_bar=1.0, sigma_bar=1.0, R_gamma=0.0,
                 R_alpha=0.0, q=4.0, delta=0.0, v_n=1.0, a_n=math.e, M_n=0.0, c=1.0, constants=None):
        self.n = _positive('n', n)
        if self.n <= 1:
            raise ValidationError('DMLpy: n must exceed 1')
        self.p = _at_least('p', p, 2)
        self.b_n = _positive('b_n', b_n)
        self.lambda_min = _positive('lambda_min', lambda_min)
        self.sigma_min = _positive('sigma_min', sigma_min)
        self.Q_bar = _nonnegative('Q_bar', Q_bar)
        self.alpha_bar = _nonnegative('alpha_bar', alpha_bar)
        self.sigma_bar = _nonnegative('sigma_bar', sigma_bar)
        self.R_gamma = _nonnegative('R_gamma', R_gamma)
        self.R_alpha = _nonnegative('R_alpha', R_alpha)
        self.q = _at_least('q', q, 4)
        self.delta = _nonnegative('delta', delta)
        self.v_n = _at_least('v_n', v_n, 1)
        self.a_n = _at_least('a_n', a_n, math.e)
        self.M_n = _nonnegative('M_n', M_n)
        self.c = _positive('c', c)
        self.constants = _constants(constants, ('C_q', 'C', 'K'))

    def to_dict(self):
        return {key: value for key, value in self.__dict__.items()}


def theorem1_term_A(inputs, regime='heavy_tail_q'):
    """
    Gaussian-approximation term (A).

    * 'heavy_tail_q': :math:`C_q\\{b(\\log p)^{3/2}\\log n/(\\sqrt{n}\\lambda) + b^2(\\log p)^2\\log n/(n^{1-2/q}\\lambda)
      + [b^q(\\log p)^{3q/2-4}\\log n\\log(pn)/(n^{q/2-1}\\lambda^{q/2})]^{1/(q-2)}\\}`
    * 'sub_gaussian': :math:`C\\{b(\\log p)^{3/2}\\log n/(\\sqrt{n}\\lambda) + b^2(\\log p)^2/\\sqrt{n\\lambda}\\}`
    * 'bounded': :math:`C\\,b(\\log p)^{3/2}\\log n/(\\sqrt{n}\\lambda)`
    """
    if regime not in REGIMES:
        raise ValidationError('DMLpy: unknown regime "{}"; available: heavy_tail_q, sub_gaussian, bounded'.format(
            regime))
    regime = REGIMES[regime]
    n, p, b, lam, q = inputs.n, inputs.p, inputs.b_n, inputs.lambda_min, inputs.q
    log_p, log_n = math.log(p), math.log(n)
    leading = b * log_p ** 1.5 * log_n / (math.sqrt(n) * lam)
    if regime == 'bounded':
        return inputs.constants['C'] * leading
    if regime == 'sub_gaussian':
        return inputs.constants['C'] * (leading + b ** 2 * log_p ** 2 / math.sqrt(n * lam))
    second = b ** 2 * log_p ** 2 * log_n / (n ** (1 - 2 / q) * lam)
    third = (b ** q * log_p ** (1.5 * q - 4) * log_n * math.log(p * n)
             / (n ** (q / 2 - 1) * lam ** (q / 2))) ** (1 / (q - 2))
    return inputs.constants['C_q'] * (leading + second + third)


def theorem1_delta1(inputs):
    """
    :math:`\\Delta_{1n} = K\\{[((2+\\sqrt{2})\\bar{\\alpha} + \\sqrt{2}\\bar{Q})R_\\gamma + \\bar{\\sigma}R_\\alpha]
    \\sqrt{3v_n\\log(3a_n)} + 3v_n n^{1/(2+\\delta)-1/2}\\,5M_n\\log(3a_n)\\}`.
    """
    log_3a = math.log(3 * inputs.a_n)
    coefficient = ((2 + math.sqrt(2)) * inputs.alpha_bar + math.sqrt(2) * inputs.Q_bar) * inputs.R_gamma \
        + inputs.sigma_bar * inputs.R_alpha
    spread = coefficient * math.sqrt(3 * inputs.v_n * log_3a)
    envelope = 3 * inputs.v_n * inputs.n ** (1 / (2 + inputs.delta) - 0.5) * 5 * inputs.M_n * log_3a
    return inputs.constants['K'] * (spread + envelope)


def theorem1_delta2(inputs):
    """
    :math:`\\Delta_{2n} = \\sqrt{n}R_\\gamma R_\\alpha`.
    """
    return math.sqrt(inputs.n) * inputs.R_gamma * inputs.R_alpha


class Theorem1Bound:
    """
    Bound for finitely many targets: ``total = term_A + term_B + term_C``.

    **Attributes:**

    * **term_A**, **term_B**, **term_C**, **delta_1n**, **delta_2n**, **total** (`float`), **regime** (`str`),
      **inputs** (``Theorem1Inputs``), **warnings** (`list`)
    """

    def __init__(self, term_A, term_B, term_C, delta_1n, delta_2n, regime, inputs, messages):
        self.term_A = term_A
        self.term_B = term_B
        self.term_C = term_C
        self.delta_1n = delta_1n
        self.delta_2n = delta_2n
        self.total = term_A + term_B + term_C
        self.regime = regime
        self.inputs = inputs
        self.warnings = messages

    def report(self):
        terms = {'term_A': self.term_A, 'term_B': self.term_B, 'term_C': self.term_C, 'delta_1n': self.delta_1n,
                 'delta_2n': self.delta_2n, 'regime': self.regime}
        echoed = self.inputs.to_dict()
        constants = echoed.pop('constants')
        return BoundReport('theorem1', echoed, terms, self.total, constants, self.warnings)


def theorem1_bound(inputs, regime='heavy_tail_q'):
    """
    Assemble :math:`\\varrho(n, p)` = (A) + (B) + (C), with (B) :math:`= 6\\sqrt{\\log p}(\\Delta_{1n} + \\Delta_{2n})
    /\\sigma_{\\min}` and (C) :math:`= c/\\log n`. A warning is issued when the total is at least 1.

    **Output/Returns:**

    * **bound** (``Theorem1Bound``)
    """
    term_a = theorem1_term_A(inputs, regime)
    delta_1n = theorem1_delta1(inputs)
    delta_2n = theorem1_delta2(inputs)
    term_b = 6 * math.sqrt(math.log(inputs.p)) / inputs.sigma_min * (delta_1n + delta_2n)
    term_c = inputs.c / math.log(inputs.n)
    messages = []
    _vacuous(term_a + term_b + term_c, messages)
    return Theorem1Bound(term_a, term_b, term_c, delta_1n, delta_2n, REGIMES[regime], inputs, messages)


########################################################################################################################
########################################################################################################################
#                                               Continuum of targets
########################################################################################################################

class Theorem2Inputs:
    """
    Inputs of the bound for targets indexed by a continuum.

    **Inputs:**

    * **n** (`float`):
        Sample size (> 1).

    * **b_n**, **V_n**, **A_n** (`float`):
        Envelope and entropy parameters of the true scores (:math:`V_n \\ge 1`, :math:`A_n \\ge n`).

    * **c0**, **c1**, **C0** (`float`):
        Lower and upper derivative bounds of the score in :math:`\\theta`.

    * **B_1n**, **B_2n** (`float`):
        First and second derivative bounds in the nuisance direction.

    * **omega** (`float`):
        Lipschitz exponent in (0, 2]. Default: 1

    * **R_eta** (`float`):
        Root-mean-square rate of the nuisance estimators. Default: 0

    * **epsilon_n** (`float`):
        Optimization error of the estimator. Default: 0

    * **q**, **delta**, **v_n**, **a_n**, **M_n**:
        Moment order (>= 4), envelope moment excess, nuisance-class entropy parameters (:math:`v_n \\ge 1`,
        :math:`a_n \\ge 1`) and envelope norm. Defaults: 4, 0, 1, e, 0

    * **gamma** (`float`):
        Coupling probability parameter in (0, 1). Default: 0.1

    * **c** (`float`):
        Default: 1

    * **prefactor** (`str`):
        'C0' to scale :math:`\\Delta_{1n}, \\Delta_{2n}` by :math:`C_0^{-1}`, 'c0' for :math:`c_0^{-1}`. Default: 'C0'

    * **constants** (`dict`):
        'K', 'd_q', 'D_q', 'kappa', 'chi'. Default: all 1
    """

    def __init__(self, n, b_n, V_n, A_n, c0=1.0, c1=1.0, C0=1.0, B_1n=0.0, B_2n=0.0, omega=1.0, R_eta=0.0,
                 epsilon_n=0.0, q=4.0, delta=0.0, v_n=1.0, a_n=math.e, M_n=0.0, gamma=0.1, c=1.0, prefactor='C0',
                 constants=None):
        self.n = _positive('n', n)
        if self.n <= 1:
            raise ValidationError('DMLpy: n must exceed 1')
        self.b_n = _positive('b_n', b_n)
        self.V_n = _at_least('V_n', V_n, 1)
        self.A_n = _positive('A_n', A_n)
        if self.A_n < self.n:
            raise ValidationError('DMLpy: A_n must be at least n')
        self.c0 = _positive('c0', c0)
        self.c1 = _positive('c1', c1)
        self.C0 = _positive('C0', C0)
        self.B_1n = _nonnegative('B_1n', B_1n)
        self.B_2n = _nonnegative('B_2n', B_2n)
        self.omega = _positive('omega', omega)
        if self.omega > 2:
            raise ValidationError('DMLpy: omega must lie in (0, 2]')
        self.R_eta = _nonnegative('R_eta', R_eta)
        self.epsilon_n = _nonnegative('epsilon_n', epsilon_n)
        self.q = _at_least('q', q, 4)
        self.delta = _nonnegative('delta', delta)
        self.v_n = _at_least('v_n', v_n, 1)
        self.a_n = _at_least('a_n', a_n, 1)
        self.M_n = _nonnegative('M_n', M_n)
        self.gamma = _positive('gamma', gamma)
        if self.gamma >= 1:
            raise ValidationError('DMLpy: gamma must lie in (0, 1)')
        self.c = _positive('c', c)
        if prefactor not in ('C0', 'c0'):
            raise ValidationError("DMLpy: prefactor must be 'C0' or 'c0'")
        self.prefactor = prefactor
        self.constants = _constants(constants, ('K', 'd_q', 'D_q', 'kappa', 'chi'))

    def to_dict(self):
        return {key: value for key, value in self.__dict__.items()}


def preliminary_rate(inputs):
    """
    :math:`R^\\vee_n = \\max\\{c_1^{-1}n^{-1/2}\\epsilon_n + c_1^{-1}n^{-1/2}K(C_0\\sqrt{v_n\\log a_n}
    + v_n n^{1/(2+\\delta)-1/2}M_n\\log a_n) + c_1^{-1}B_{1n}R_\\eta,\\ R_\\eta\\}`.
    """
    n, log_a = inputs.n, math.log(inputs.a_n)
    spread = inputs.C0 * math.sqrt(inputs.v_n * log_a) \
        + inputs.v_n * n ** (1 / (2 + inputs.delta) - 0.5) * inputs.M_n * log_a
    preliminary = (inputs.epsilon_n / math.sqrt(n) + inputs.constants['K'] * spread / math.sqrt(n)
                   + inputs.B_1n * inputs.R_eta) / inputs.c1
    return max(preliminary, inputs.R_eta)


def _clamped_log(value, name, messages):
    result = math.log(value)
    if result < 0:
        message = 'DMLpy: log({}) = {:.4g} < 0 clamped at 0'.format(name, result)
        warnings.warn(message)
        messages.append(message)
        return 0.0
    return result


def kolmogorov_from_coupling(r1, r2, expected_sup, c0=1.0, kappa=1.0):
    """
    Kolmogorov distance implied by a coupling :math:`P(|Z - \\tilde{Z}| > r_1) \\le r_2`:
    :math:`\\kappa r_1(E[\\tilde{Z}] + \\sqrt{1 \\vee \\log(c_0/r_1)}) + r_2`, which equals :math:`r_2` when
    :math:`r_1 = 0`.
    """
    r1 = _nonnegative('r1', r1)
    r2 = _nonnegative('r2', r2)
    if r1 == 0:
        return r2
    return kappa * r1 * (expected_sup + math.sqrt(max(1.0, math.log(c0 / r1)))) + r2


def theorem2_bound(inputs):
    """
    Bound for a continuum of targets:
    :math:`\\kappa r_{1n}(\\chi\\sqrt{V_n\\log(A_n b_n)} + \\sqrt{1 \\vee \\log(1/r_{1n})}) + r_{2n}` with

    * :math:`\\Delta_{1n} = s^{-1}K(\\sqrt{C_0}(R^\\vee_n)^{\\omega/2}\\sqrt{2v_n\\log(2a_n)}
      + 2v_n n^{1/(2+\\delta)-1/2}\\,2M_n\\log(2a_n))`
    * :math:`\\Delta_{2n} = s^{-1}\\tfrac{1}{2}\\sqrt{n}B_{2n}(R^\\vee_n)^2`
    * :math:`\\Delta_{3n} = b_nL_n/(\\gamma^{1/2}n^{1/2-1/q}) + b_n^{1/2}L_n^{3/4}/(\\gamma^{1/2}n^{1/4})
      + (b_nL_n^2)^{1/3}/(\\gamma^{1/3}n^{1/6})`, :math:`L_n = d_q V_n(\\log n \\vee \\log(A_n b_n))`
    * :math:`r_{1n} = \\epsilon_n/c_0 + \\Delta_{1n} + \\Delta_{2n} + \\Delta_{3n}`,
      :math:`r_{2n} = D_q(\\gamma + \\log n/n) + c/\\log n`

    where the prefactor `s` is :math:`C_0` (or :math:`c_0` with ``prefactor='c0'``).

    **Output/Returns:**

    * **report** (``BoundReport``)
    """
    k = inputs.constants
    n, b, messages = inputs.n, inputs.b_n, []
    scale = inputs.C0 if inputs.prefactor == 'C0' else inputs.c0
    rate = preliminary_rate(inputs)
    log_2a = math.log(2 * inputs.a_n)
    delta_1n = k['K'] / scale * (math.sqrt(inputs.C0) * rate ** (inputs.omega / 2) * math.sqrt(2 * inputs.v_n * log_2a)
                                 + 2 * inputs.v_n * n ** (1 / (2 + inputs.delta) - 0.5) * 2 * inputs.M_n * log_2a)
    delta_2n = 0.5 * math.sqrt(n) * inputs.B_2n * rate ** 2 / scale
    log_ab = math.log(inputs.A_n * b)
    L_n = k['d_q'] * inputs.V_n * max(math.log(n), log_ab)
    delta_3n = (b * L_n / (inputs.gamma ** 0.5 * n ** (0.5 - 1 / inputs.q))
                + b ** 0.5 * L_n ** 0.75 / (inputs.gamma ** 0.5 * n ** 0.25)
                + (b * L_n ** 2) ** (1 / 3) / (inputs.gamma ** (1 / 3) * n ** (1 / 6)))
    r_1n = inputs.epsilon_n / inputs.c0 + delta_1n + delta_2n + delta_3n
    r_2n = k['D_q'] * (inputs.gamma + math.log(n) / n) + inputs.c / math.log(n)
    expected_sup = k['chi'] * math.sqrt(inputs.V_n * _clamped_log(inputs.A_n * b, 'A_n b_n', messages))
    total = kolmogorov_from_coupling(r_1n, r_2n, expected_sup, 1.0, k['kappa'])
    _vacuous(total, messages)

    terms = {'R_vee': rate, 'delta_1n': delta_1n, 'delta_2n': delta_2n, 'delta_3n': delta_3n, 'L_n': L_n,
             'r_1n': r_1n, 'r_2n': r_2n}
    echoed = inputs.to_dict()
    constants = echoed.pop('constants')
    return BoundReport('theorem2', echoed, terms, total, constants, messages)


########################################################################################################################
########################################################################################################################
#                                               Auxiliary inequalities
########################################################################################################################

def maximal_inequality_bound(sigma, v, a, M, q, c, K, n):
    """
    Maximal inequality for empirical processes: with probability at least :math:`1 - c/\\log n`,
    :math:`\\sup_f|G_n f| \\le K(\\sigma\\sqrt{v\\log a} + v n^{1/q-1/2}M\\log a)`.
    """
    _nonnegative('sigma', sigma)
    _nonnegative('M', M)
    _at_least('v', v, 1)
    _at_least('a', a, math.e)
    _at_least('q', q, 2)
    _positive('c', c)
    _positive('K', K)
    _positive('n', n)
    log_a = math.log(a)
    return K * (sigma * math.sqrt(v * log_a) + v * n ** (1 / q - 0.5) * M * log_a)


def entropy_sum(v1, a1, v2, a2):
    """
    Entropy parameters of the sum of two classes with parameters :math:`(v_1, a_1)` and :math:`(v_2, a_2)`:
    :math:`(v_1 + v_2, 2\\max(a_1, a_2))`.
    """
    return entropy_sum_many([(v1, a1), (v2, a2)])


def entropy_sum_many(classes):
    """
    Entropy parameters of the sum of `k` classes: :math:`(\\sum_i v_i, k\\max_i a_i)`.
    """
    classes = list(classes)
    if len(classes) < 1:
        raise ValidationError('DMLpy: at least one class is required')
    for v, a in classes:
        _at_least('v', v, 1)
        _positive('a', a)
    return float(sum(v for v, _ in classes)), float(len(classes) * max(a for _, a in classes))


def anti_concentration_bound(p, epsilon, sigma):
    """
    :math:`12\\epsilon\\sqrt{\\log p}/\\sigma`, bounding the probability that the maximum of a centered Gaussian vector
    falls in an interval of half-length :math:`\\epsilon`.
    """
    p = _at_least('p', p, 2)
    return 12 * _nonnegative('epsilon', epsilon) * math.sqrt(math.log(p)) / _positive('sigma', sigma)


def gaussian_sup_coupling_bound(b, sigma, v, a, q, n, gamma, constants=None):
    """
    Coupling of the supremum of an empirical process with that of its Gaussian limit: with probability at least
    ``1 - probability``, the two differ by at most

    :math:`bL_n/(\\gamma^{1/2}n^{1/2-1/q}) + (b\\sigma)^{1/2}L_n^{3/4}/(\\gamma^{1/2}n^{1/4})
    + (b\\sigma^2L_n^2)^{1/3}/(\\gamma^{1/3}n^{1/6})`, :math:`L_n = Bv(\\log n \\vee \\log(ab/\\sigma))`,

    and ``probability`` :math:`= C(\\gamma + \\log n/n)`.

    **Inputs:**

    * **constants** (`dict`):
        'B' and 'C'. Default: both 1

    **Output/Returns:**

    * **coupling** (`dict`):
        'threshold', 'probability' and 'L_n'.
    """
    constants = _constants(constants, ('B', 'C'))
    sigma = _positive('sigma', sigma)
    b = _positive('b', b)
    if b < sigma:
        raise ValidationError('DMLpy: b must be at least sigma')
    _at_least('v', v, 1)
    _at_least('a', a, math.e)
    _at_least('q', q, 4)
    n = _positive('n', n)
    if not 0 < gamma < 1:
        raise ValidationError('DMLpy: gamma must lie in (0, 1)')
    L_n = constants['B'] * v * max(math.log(n), math.log(a * b / sigma))
    threshold = (b * L_n / (gamma ** 0.5 * n ** (0.5 - 1 / q))
                 + (b * sigma) ** 0.5 * L_n ** 0.75 / (gamma ** 0.5 * n ** 0.25)
                 + (b * sigma ** 2 * L_n ** 2) ** (1 / 3) / (gamma ** (1 / 3) * n ** (1 / 6)))
    return {'threshold': threshold, 'probability': constants['C'] * (gamma + math.log(n) / n), 'L_n': L_n}


def class_variances(Q_bar, alpha_bar, sigma_bar, R_gamma, R_alpha):
    """
    Variance envelopes of the three remainder classes of the error decomposition:
    :math:`\\sigma_A^2 = 2(\\bar{Q}^2 + \\bar{\\alpha}^2)R_\\gamma^2`, :math:`\\sigma_B^2 = \\bar{\\sigma}^2R_\\alpha^2`,
    :math:`\\sigma_C^2 = 4\\bar{\\alpha}^2R_\\gamma^2`. ``coefficient`` is the factor multiplying
    :math:`\\sqrt{3v_n\\log(3a_n)}` in :math:`\\Delta_{1n}`, which bounds :math:`\\sigma_A + \\sigma_B + \\sigma_C`.
    """
    for name, value in (('Q_bar', Q_bar), ('alpha_bar', alpha_bar), ('sigma_bar', sigma_bar),
                        ('R_gamma', R_gamma), ('R_alpha', R_alpha)):
        _nonnegative(name, value)
    return {'sigma_A2': 2 * (Q_bar ** 2 + alpha_bar ** 2) * R_gamma ** 2,
            'sigma_B2': sigma_bar ** 2 * R_alpha ** 2,
            'sigma_C2': 4 * alpha_bar ** 2 * R_gamma ** 2,
            'coefficient': ((2 + math.sqrt(2)) * alpha_bar + math.sqrt(2) * Q_bar) * R_gamma + sigma_bar * R_alpha}


def empirical_bound_inputs(dgp, functionals, fits, score=None, n=None, q=4.0):
    """
    Measure the bound inputs that simulation truth determines.

    **Inputs:**

    * **dgp** (``DiscreteDgp`` or ``GaussianDgp``)

    * **functionals** (`list` of ``MomentFunctional``)

    * **fits** (``NuisanceFitSet``):
        Fits whose rates are measured against the truth.

    * **score** (``ScoreMatrix``):
        Score of the estimates; supplies `n` when given.

    * **n** (`int`):
        Sample size when `score` is not given.

    * **q** (`float`):
        Moment order of the envelope. Default: 4

    **Output/Returns:**

    * **inputs** (`dict`):
        ``n``, ``p``, ``q``, ``b_n``, ``lambda_min``, ``sigma_min``, ``alpha_bar``, ``sigma_bar``, ``R_gamma``,
        ``R_alpha``, ``v_n``, ``a_n``, ``Q_bar`` (enumerable processes only) and ``warnings``. The envelope ``M_n``
        and any non-default constants are left to the caller.
    """
    if n is None:
        if score is None:
            raise ValidationError('DMLpy: the sample size must be given through score or n')
        n = score.n
    moments = oracle_score_moments(dgp, functionals, q)
    messages = []
    lambda_min = max(moments['lambda_min'], 0.0)
    if lambda_min < 1e-10:
        message = 'DMLpy: the score correlation is singular (lambda_min = {:.3e})'.format(moments['lambda_min'])
        warnings.warn(message)
        messages.append(message)

    R_gamma = R_alpha = alpha_bar = 0.0
    for j, functional in enumerate(functionals):
        _, gamma0, alpha0 = true_nuisances(dgp, functional)
        for l in range(fits.nfolds):
            R_gamma = max(R_gamma, rmse_to_truth(dgp, fits.gamma(l, j), gamma0))
            R_alpha = max(R_alpha, rmse_to_truth(dgp, fits.alpha(l, j), alpha0))

    if getattr(dgp, 'enumerable', False):
        keep = dgp.probabilities > 0
        d, x = dgp.treatment[keep], dgp.covariates[keep]
    else:
        reference = dgp.reference_dataset()
        d, x = reference.treatment, reference.covariates
    for j, functional in enumerate(functionals):
        _, _, alpha0 = true_nuisances(dgp, functional)
        alpha_bar = max(alpha_bar, float(np.max(np.abs(alpha0(d, x)))))
        for l in range(fits.nfolds):
            alpha_bar = max(alpha_bar, float(np.max(np.abs(fits.alpha(l, j)(d, x)))))

    entropy = fits.entropy_parameters()
    inputs = {'n': n, 'p': len(functionals), 'q': q, 'b_n': moments['b_n'], 'lambda_min': lambda_min,
              'sigma_min': float(np.min(moments['sigma'])), 'alpha_bar': alpha_bar,
              'sigma_bar': moments['sigma_bar'], 'R_gamma': R_gamma, 'R_alpha': R_alpha, 'v_n': entropy['v_n'],
              'a_n': entropy['a_n'], 'warnings': messages}
    if getattr(dgp, 'enumerable', False):
        inputs['Q_bar'] = math.sqrt(max(mean_square_continuity(dgp, f) for f in functionals))
    return inputs
