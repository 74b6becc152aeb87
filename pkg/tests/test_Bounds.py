import sys
sys.path.insert(1, '../src')
import math
import numpy as np
import pytest
from DMLpy.Data import make_dgp, make_folds
from DMLpy.Nuisance import oracle_fit_set
from DMLpy.Scores import MomentFunctional
from DMLpy.Bounds import *
from DMLpy.Utilities import ValidationError


rates = dict(R_gamma=0.1, R_alpha=0.1)
bounded = Theorem1Inputs(n=1e4, p=10, b_n=1.0, lambda_min=1.0, sigma_min=1.0)


def test_term_A_in_the_bounded_regime():
    """
    b (log p)^{3/2} log n / (sqrt(n) lambda) at n = 1e4, p = 10
    """
    expected = math.log(10) ** 1.5 * math.log(1e4) / 100
    assert theorem1_term_A(bounded, 'bounded') == pytest.approx(expected, rel=1e-12)
    assert theorem1_term_A(bounded, 'sub_gaussian') > theorem1_term_A(bounded, 'bounded')


def test_term_A_scales_with_its_constant():
    """
    Term (A) is linear in the configured constant
    """
    doubled = Theorem1Inputs(n=1e4, p=10, b_n=1.0, lambda_min=1.0, sigma_min=1.0, constants={'C_q': 2.0})
    assert theorem1_term_A(doubled) == pytest.approx(2 * theorem1_term_A(bounded))


def test_term_A_decreases_in_n():
    """
    Each regime shrinks as the sample grows
    """
    for regime in ('heavy_tail_q', 'sub_gaussian', 'bounded'):
        values = [theorem1_term_A(Theorem1Inputs(n=n, p=10, b_n=2.0, lambda_min=0.5, sigma_min=1.0), regime)
                  for n in (100, 1e3, 1e4, 1e6)]
        assert values == sorted(values, reverse=True)


def test_regime_aliases():
    """
    Short regime names map to the canonical ones; unknown names are rejected
    """
    assert theorem1_term_A(bounded, 'subgauss') == theorem1_term_A(bounded, 'sub_gaussian')
    with pytest.raises(ValidationError):
        theorem1_term_A(bounded, 'light')


def test_delta2_is_the_product_of_rates():
    """
    sqrt(100) * 0.1 * 0.1 = 0.1
    """
    inputs = Theorem1Inputs(n=100, p=2, b_n=1.0, lambda_min=1.0, sigma_min=1.0, **rates)
    assert theorem1_delta2(inputs) == pytest.approx(0.1)


def test_delta1_formula():
    """
    Coefficient (2 + 2 sqrt(2)) 0.1 + 0.1 times sqrt(3 log(3e))
    """
    inputs = Theorem1Inputs(n=100, p=2, b_n=1.0, lambda_min=1.0, sigma_min=1.0, **rates)
    expected = ((2 + 2 * math.sqrt(2)) * 0.1 + 0.1) * math.sqrt(3 * math.log(3 * math.e))
    assert theorem1_delta1(inputs) == pytest.approx(expected)
    assert theorem1_delta1(Theorem1Inputs(n=100, p=2, b_n=1.0, lambda_min=1.0, sigma_min=1.0)) == 0.0


def test_term_C():
    """
    c / log n = 0.1 at n = e^10
    """
    inputs = Theorem1Inputs(n=math.exp(10), p=2, b_n=1.0, lambda_min=1.0, sigma_min=1.0)
    assert theorem1_bound(inputs, 'bounded').term_C == pytest.approx(0.1)


def test_theorem1_assembly_and_report():
    """
    The total adds (A), (B) and (C) and the report echoes the inputs
    """
    inputs = Theorem1Inputs(n=1e6, p=10, b_n=1.0, lambda_min=1.0, sigma_min=1.0, R_gamma=1e-3, R_alpha=1e-3)
    bound = theorem1_bound(inputs, 'bounded')
    term_b = 6 * math.sqrt(math.log(10)) * (bound.delta_1n + bound.delta_2n)
    assert bound.term_B == pytest.approx(term_b)
    assert bound.total == pytest.approx(bound.term_A + bound.term_B + bound.term_C)
    report = bound.report().to_dict()
    assert report['theorem'] == 'theorem1'
    assert report['inputs']['p'] == 10.0
    assert report['constants_used'] == {'C_q': 1.0, 'C': 1.0, 'K': 1.0}
    assert report['terms']['regime'] == 'bounded'


def test_vacuous_bound_warns():
    """
    Totals of at least one are reported with a warning
    """
    inputs = Theorem1Inputs(n=10, p=100, b_n=5.0, lambda_min=0.1, sigma_min=0.1, R_gamma=1.0, R_alpha=1.0)
    with pytest.warns(UserWarning, match='vacuous'):
        bound = theorem1_bound(inputs)
    assert bound.total >= 1 and bound.warnings


def test_theorem1_input_validation():
    """
    p >= 2, positive eigenvalue, a_n >= e and known constants
    """
    with pytest.raises(ValidationError):
        Theorem1Inputs(n=100, p=1, b_n=1.0, lambda_min=1.0, sigma_min=1.0)
    with pytest.raises(ValidationError):
        Theorem1Inputs(n=100, p=2, b_n=1.0, lambda_min=0.0, sigma_min=1.0)
    with pytest.raises(ValidationError):
        Theorem1Inputs(n=100, p=2, b_n=1.0, lambda_min=1.0, sigma_min=1.0, a_n=2.0)
    with pytest.raises(ValidationError):
        Theorem1Inputs(n=100, p=2, b_n=1.0, lambda_min=1.0, sigma_min=1.0, q=3.0)
    with pytest.raises(ValidationError):
        Theorem1Inputs(n=100, p=2, b_n=1.0, lambda_min=1.0, sigma_min=1.0, constants={'Z': 1.0})


def test_preliminary_rate():
    """
    Defaults give n^{-1/2}; a slower nuisance rate dominates
    """
    assert preliminary_rate(Theorem2Inputs(n=100, b_n=1.0, V_n=1.0, A_n=100)) == pytest.approx(0.1)
    assert preliminary_rate(Theorem2Inputs(n=100, b_n=1.0, V_n=1.0, A_n=100, R_eta=0.5)) == 0.5


def test_theorem2_probability_term():
    """
    r_2n = D_q (gamma + log n / n) + c / log n
    """
    n = math.exp(10)
    report = theorem2_bound(Theorem2Inputs(n=n, b_n=1.0, V_n=1.0, A_n=n, gamma=0.5))
    assert report.terms['r_2n'] == pytest.approx(0.5 + 10 * math.exp(-10) + 0.1)
    assert report.total > report.terms['r_2n']
    assert report.to_dict()['theorem'] == 'theorem2'


def test_theorem2_prefactor():
    """
    Delta_1n scales with the inverse prefactor
    """
    base = dict(n=1e4, b_n=1.0, V_n=1.0, A_n=1e4, C0=2.0, c0=0.5, R_eta=0.1)
    large = theorem2_bound(Theorem2Inputs(prefactor='C0', **base)).terms['delta_1n']
    small = theorem2_bound(Theorem2Inputs(prefactor='c0', **base)).terms['delta_1n']
    assert small == pytest.approx(4 * large)


def test_theorem2_input_validation():
    """
    A_n >= n, omega in (0, 2], gamma in (0, 1) and a known prefactor
    """
    with pytest.raises(ValidationError):
        Theorem2Inputs(n=100, b_n=1.0, V_n=1.0, A_n=10)
    with pytest.raises(ValidationError):
        Theorem2Inputs(n=100, b_n=1.0, V_n=1.0, A_n=100, omega=3.0)
    with pytest.raises(ValidationError):
        Theorem2Inputs(n=100, b_n=1.0, V_n=1.0, A_n=100, gamma=1.0)
    with pytest.raises(ValidationError):
        Theorem2Inputs(n=100, b_n=1.0, V_n=1.0, A_n=100, prefactor='K')
    Theorem2Inputs(n=100, b_n=1.0, V_n=1.0, A_n=100, a_n=1.0)


def test_kolmogorov_from_coupling():
    """
    Zero coupling radius leaves the probability; otherwise the anti-concentration term is added
    """
    assert kolmogorov_from_coupling(0.0, 0.3, 5.0) == 0.3
    expected = 0.1 * (1.0 + math.sqrt(math.log(10))) + 0.2
    assert kolmogorov_from_coupling(0.1, 0.2, 1.0) == pytest.approx(expected)
    assert kolmogorov_from_coupling(0.5, 0.0, 0.0) == pytest.approx(0.5)


def test_maximal_inequality():
    """
    sigma = v = M = K = 1, a = e, q = 2, n = 1 gives 2
    """
    assert maximal_inequality_bound(sigma=1.0, v=1.0, a=math.e, M=1.0, q=2.0, c=1.0, K=1.0, n=1.0) == \
        pytest.approx(2.0)
    with pytest.raises(ValidationError):
        maximal_inequality_bound(sigma=1.0, v=0.5, a=math.e, M=1.0, q=2.0, c=1.0, K=1.0, n=1.0)


def test_entropy_sums():
    """
    Entropy parameters add in v and multiply the largest a by the number of classes
    """
    assert entropy_sum(1, math.e, 1, math.e) == pytest.approx((2.0, 2 * math.e))
    assert entropy_sum_many([(1, 2.0), (2, 5.0), (1, 3.0)]) == (4.0, 15.0)
    with pytest.raises(ValidationError):
        entropy_sum_many([])


def test_anti_concentration():
    """
    12 * 0.1 * sqrt(log e^4) / 1 = 2.4
    """
    assert anti_concentration_bound(math.exp(4), 0.1, 1.0) == pytest.approx(2.4)


def test_gaussian_sup_coupling():
    """
    The failure probability is C (gamma + log n / n) and b must dominate sigma
    """
    coupling = gaussian_sup_coupling_bound(b=2.0, sigma=1.0, v=1.0, a=math.e, q=4.0, n=1e4, gamma=0.1)
    assert coupling['probability'] == pytest.approx(0.1 + math.log(1e4) / 1e4)
    assert coupling['L_n'] == pytest.approx(math.log(1e4))
    assert coupling['threshold'] > 0
    with pytest.raises(ValidationError):
        gaussian_sup_coupling_bound(b=0.5, sigma=1.0, v=1.0, a=math.e, q=4.0, n=1e4, gamma=0.1)


def test_class_variances_are_bounded_by_the_delta1_coefficient():
    """
    sigma_A + sigma_B + sigma_C never exceeds the coefficient of Delta_1n
    """
    variances = class_variances(1.0, 1.0, 1.0, 0.1, 0.1)
    assert variances['sigma_A2'] == pytest.approx(0.04)
    assert variances['sigma_B2'] == pytest.approx(0.01)
    assert variances['sigma_C2'] == pytest.approx(0.04)
    total = sum(math.sqrt(variances[key]) for key in ('sigma_A2', 'sigma_B2', 'sigma_C2'))
    assert total <= variances['coefficient']


def test_empirical_inputs_with_true_nuisances():
    """
    Oracle fits have zero rates; the other inputs come from the population
    """
    dgp = make_dgp('discrete_confounded')
    functionals = [MomentFunctional('many_treatments', treated=1, control=0), MomentFunctional('outcome_mean')]
    fits = oracle_fit_set(dgp, functionals, make_folds(100, 2, 0))
    inputs = empirical_bound_inputs(dgp, functionals, fits, n=100)
    assert (inputs['R_gamma'], inputs['R_alpha']) == (0.0, 0.0)
    assert inputs['p'] == 2 and inputs['a_n'] == math.e
    assert inputs['alpha_bar'] == pytest.approx(1 / 0.3)
    assert inputs['sigma_bar'] == pytest.approx(0.9)
    assert inputs['Q_bar'] == pytest.approx(math.sqrt(1 / 0.21))
    assert 0 < inputs['lambda_min'] <= 1
    with pytest.raises(ValidationError):
        empirical_bound_inputs(dgp, functionals, fits)


def _theorem1_total(regime, n, p, b, lam, s_min, Q, a_bar, s_bar, r_g, r_a, q, delta, v, a, M, c, C_q, C, K):
    log_p, log_n = math.log(p), math.log(n)
    first = b * log_p ** 1.5 * log_n / (math.sqrt(n) * lam)
    if regime == 'bounded':
        A = C * first
    elif regime == 'sub_gaussian':
        A = C * (first + b ** 2 * log_p ** 2 / math.sqrt(n * lam))
    else:
        A = C_q * (first + b ** 2 * log_p ** 2 * log_n / (n ** (1 - 2 / q) * lam)
                   + (b ** q * log_p ** (1.5 * q - 4) * log_n * math.log(p * n)
                      / (n ** (q / 2 - 1) * lam ** (q / 2))) ** (1 / (q - 2)))
    d1 = K * ((2 + math.sqrt(2)) * a_bar + math.sqrt(2) * Q) * r_g * math.sqrt(3 * v * math.log(3 * a)) \
        + K * s_bar * r_a * math.sqrt(3 * v * math.log(3 * a)) \
        + K * 15 * v * M * math.log(3 * a) * n ** (1 / (2 + delta) - 0.5)
    d2 = math.sqrt(n) * r_g * r_a
    return A + 6 * math.sqrt(log_p) * (d1 + d2) / s_min + c / log_n


def _theorem2_total(n, b, V, A_n, c0, c1, C0, B1, B2, omega, r_eta, eps, q, delta, v, a, M, gamma, c, s, K, d_q,
                    D_q, kappa, chi):
    root_n = math.sqrt(n)
    tail = n ** (1 / (2 + delta) - 0.5)
    r_vee = max(eps / (c1 * root_n) + K * C0 * math.sqrt(v * math.log(a)) / (c1 * root_n)
                + K * v * tail * M * math.log(a) / (c1 * root_n) + B1 * r_eta / c1, r_eta)
    d1 = K * math.sqrt(C0) * r_vee ** (omega / 2) * math.sqrt(2 * v * math.log(2 * a)) / s \
        + K * 4 * v * tail * M * math.log(2 * a) / s
    d2 = root_n * B2 * r_vee ** 2 / (2 * s)
    L = d_q * V * max(math.log(n), math.log(A_n * b))
    d3 = b * L / (math.sqrt(gamma) * n ** (0.5 - 1 / q)) + math.sqrt(b) * L ** 0.75 / (math.sqrt(gamma) * n ** 0.25) \
        + (b * L * L) ** (1 / 3) / (gamma ** (1 / 3) * n ** (1 / 6))
    r1 = eps / c0 + d1 + d2 + d3
    r2 = D_q * (gamma + math.log(n) / n) + c / math.log(n)
    return kappa * r1 * (chi * math.sqrt(V * math.log(A_n * b)) + math.sqrt(max(1.0, -math.log(r1)))) + r2


def test_theorem1_matches_a_straight_line_evaluation():
    """
    Totals of every regime agree with an independent evaluation on 50 random input vectors
    """
    rng = np.random.default_rng(2024)
    for _ in range(50):
        values = dict(n=10 ** rng.uniform(2, 8), p=float(rng.integers(2, 500)), b_n=rng.uniform(0.5, 5),
                      lambda_min=rng.uniform(0.05, 1), sigma_min=rng.uniform(0.1, 2), Q_bar=rng.uniform(0, 3),
                      alpha_bar=rng.uniform(0, 3), sigma_bar=rng.uniform(0, 3), R_gamma=rng.uniform(0, 0.5),
                      R_alpha=rng.uniform(0, 0.5), q=rng.uniform(4, 10), delta=rng.uniform(0, 2),
                      v_n=rng.uniform(1, 5), a_n=rng.uniform(math.e, 50), M_n=rng.uniform(0, 2),
                      c=rng.uniform(0.1, 2))
        constants = {'C_q': rng.uniform(0.5, 3), 'C': rng.uniform(0.5, 3), 'K': rng.uniform(0.5, 3)}
        inputs = Theorem1Inputs(constants=constants, **values)
        for regime in ('heavy_tail_q', 'sub_gaussian', 'bounded'):
            expected = _theorem1_total(regime, *values.values(), constants['C_q'], constants['C'], constants['K'])
            assert theorem1_bound(inputs, regime).total == pytest.approx(expected, rel=1e-12)


def test_theorem2_matches_a_straight_line_evaluation():
    """
    Totals agree with an independent evaluation on 50 random input vectors
    """
    rng = np.random.default_rng(2025)
    for _ in range(50):
        n = 10 ** rng.uniform(2, 8)
        values = dict(n=n, b_n=rng.uniform(0.5, 5), V_n=rng.uniform(1, 5), A_n=n * rng.uniform(1, 10),
                      c0=rng.uniform(0.2, 3), c1=rng.uniform(0.2, 3), C0=rng.uniform(0.2, 3), B_1n=rng.uniform(0, 2),
                      B_2n=rng.uniform(0, 2), omega=rng.uniform(0.1, 2), R_eta=rng.uniform(0, 0.5),
                      epsilon_n=rng.uniform(0, 1), q=rng.uniform(4, 10), delta=rng.uniform(0, 2),
                      v_n=rng.uniform(1, 5), a_n=rng.uniform(1, 50), M_n=rng.uniform(0, 2),
                      gamma=rng.uniform(0.01, 0.99), c=rng.uniform(0.1, 2))
        prefactor = 'C0' if rng.uniform() < 0.5 else 'c0'
        constants = {name: rng.uniform(0.5, 3) for name in ('K', 'd_q', 'D_q', 'kappa', 'chi')}
        report = theorem2_bound(Theorem2Inputs(prefactor=prefactor, constants=constants, **values))
        scale = values['C0'] if prefactor == 'C0' else values['c0']
        expected = _theorem2_total(*values.values(), scale, *constants.values())
        assert report.total == pytest.approx(expected, rel=1e-12)


def test_auxiliary_inequalities_match_a_straight_line_evaluation():
    """
    Maximal inequality, anti-concentration and coupling agree with independent evaluations on 50 random inputs
    """
    rng = np.random.default_rng(2026)
    for _ in range(50):
        sigma, v, a, M = rng.uniform(0.1, 2), rng.uniform(1, 5), rng.uniform(math.e, 50), rng.uniform(0, 2)
        q, K, n, gamma = rng.uniform(4, 10), rng.uniform(0.5, 3), 10 ** rng.uniform(2, 8), rng.uniform(0.01, 0.99)
        expected = K * sigma * math.sqrt(v * math.log(a)) + K * v * M * math.log(a) / n ** (0.5 - 1 / q)
        assert maximal_inequality_bound(sigma, v, a, M, q, 1.0, K, n) == pytest.approx(expected, rel=1e-12)
        p = float(rng.integers(2, 500))
        assert anti_concentration_bound(p, gamma, sigma) == \
            pytest.approx(12 * gamma * math.log(p) ** 0.5 / sigma, rel=1e-12)
        b = sigma * rng.uniform(1, 5)
        L = v * max(math.log(n), math.log(a * b / sigma))
        threshold = b * L / (math.sqrt(gamma) * n ** (0.5 - 1 / q)) \
            + math.sqrt(b * sigma) * L ** 0.75 / (math.sqrt(gamma) * n ** 0.25) \
            + (b * sigma * sigma * L * L) ** (1 / 3) / (gamma ** (1 / 3) * n ** (1 / 6))
        coupling = gaussian_sup_coupling_bound(b, sigma, v, a, q, n, gamma)
        assert coupling['threshold'] == pytest.approx(threshold, rel=1e-12)


def test_theorem1_vanishes_along_a_growth_schedule():
    """
    Fixed p, b_n = 1 and root-n nuisance rates send every regime's total below 1e-3 by n = 2^40

    The free constant of term (C) is 0.01, so that c / log n is 3.6e-4 at the last point.
    """
    for regime in ('heavy_tail_q', 'sub_gaussian', 'bounded'):
        totals = []
        for k in range(10, 41, 5):
            n = 2.0 ** k
            inputs = Theorem1Inputs(n=n, p=10, b_n=1.0, lambda_min=1.0, sigma_min=1.0, R_gamma=n ** -0.5,
                                    R_alpha=n ** -0.5, c=0.01)
            totals.append(theorem1_bound(inputs, regime).total)
        assert totals == sorted(totals, reverse=True)
        assert totals[-1] < 1e-3
