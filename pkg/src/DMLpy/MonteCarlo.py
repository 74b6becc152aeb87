"""
This module contains the replicated experiments: coverage of the simultaneous bands, the empirical distribution of the
sup-t statistic compared with the Gaussian-max limit, comparisons of that distance with the finite-sample bounds,
audits of the error decomposition and a double-robustness check.

Replication `r` draws all of its randomness from streams derived from ``(master_seed, r)``, so results do not depend on
the number of worker processes.

The module currently contains the following classes and functions:

* ``ExperimentSpec``: Serializable description of an experiment.
* ``CoverageReport``, ``KsReport``: Aggregated results.
* ``run_coverage``, ``empirical_sup_t``, ``ks_distance``, ``bound_vs_empirical``, ``decomposition_audit``,
  ``run_double_robustness``, ``dump_sample``.
"""

import math
import warnings

import numpy as np
import pandas as pd
from scipy.stats import ks_2samp

from DMLpy.Bounds import (Theorem1Inputs, Theorem2Inputs, theorem1_bound, theorem2_bound,
                          empirical_bound_inputs)
from DMLpy.Data import make_dgp, make_folds, FoldPlan
from DMLpy.Inference import (estimate_targets, estimate_correlation, build_bands, gaussian_max_sample,
                             cdf_functionals, estimate_cdf_band)
from DMLpy.Nuisance import (NuisanceFitSet, cross_fit, oracle_fit_set, recipes_from_config, true_regression,
                            true_representer)
from DMLpy.Scores import functionals_from_config, oracle_score_moments, oracle_decomposition, true_target
from DMLpy.Utilities import (ValidationError, NumericalError, spawn_generator, spawn_seed, run_parallel, spec_hash)

MODES = ('coverage', 'ks', 'decomposition_audit', 'double_robustness')


class ExperimentSpec:
    """
    Description of a replicated experiment.

    **Inputs:**

    * **dgp** (`str`):
        Name of a process in the ``make_dgp`` catalog.

    * **n** (`int`):
        Sample size per replication.

    * **functionals** (`list` of `dict`):
        Target configuration, as accepted by ``functionals_from_config``. Ignored when `grid` is given.

    * **nuisance** (`dict`):
        Nuisance options, as accepted by ``recipes_from_config``.

    * **dgp_params** (`dict`):
        Parameters of the process.

    * **folds** (`int`):
        Number of folds `L`. Default: 5

    * **cross_fitting** (`bool`):
        If `False`, nuisances are trained and evaluated on the full sample. Default: True

    * **level** (`float`), **draws** (`int`), **sided** (`str`):
        Band level, Gaussian draws and sidedness. Defaults: 0.95, 100000, 'two_sided'

    * **replications** (`int`):
        `R >= 1`. Default: 100

    * **master_seed** (`int`):
        Default: 0

    * **mode** (`str`):
        'coverage', 'ks', 'decomposition_audit' or 'double_robustness'. Default: 'coverage'

    * **oracle** (`bool`):
        Use the true nuisances instead of fitted ones. Default: False

    * **critical_value** (`float`):
        Critical value used instead of the sampled one (coverage mode).

    * **alpha_shift** (`float`):
        Shift added to the true representer in the double-robustness experiment. Default: 0.5

    * **grid** (`list`), **arm**, **outcome_index**:
        Thresholds and arm of a distribution-function experiment. Its bands are built by ``estimate_cdf_band``, so
        coverage is checked for the monotonized envelopes clipped to [0, 1].

    * **workers** (`int`):
        Processes running replications. Default: 1

    * **bound** (`dict`):
        Overrides of the measured bound inputs, plus ``theorem`` (1 or 2), ``regime`` and ``constants``.
    """

    def __init__(self, dgp, n, functionals=None, nuisance=None, dgp_params=None, folds=5, cross_fitting=True,
                 level=0.95, draws=100000, sided='two_sided', replications=100, master_seed=0, mode='coverage',
                 oracle=False, critical_value=None, alpha_shift=0.5, grid=None, arm=None, outcome_index=0, workers=1,
                 bound=None):
        if mode not in MODES:
            raise ValidationError('DMLpy: mode must be one of {}'.format(', '.join(MODES)))
        if not isinstance(n, int) or n < 2:
            raise ValidationError('DMLpy: n must be an integer >= 2')
        if not isinstance(replications, int) or replications < 1:
            raise ValidationError('DMLpy: replications must be an integer >= 1')
        if not 0 < level < 1:
            raise ValidationError('DMLpy: level must lie in (0, 1)')
        if cross_fitting and not 2 <= folds <= n:
            raise ValidationError('DMLpy: folds must satisfy 2 <= folds <= n')
        if grid is not None:
            grid = [float(u) for u in grid]
            if arm is None:
                raise ValidationError('DMLpy: a grid experiment needs an arm')
            if sided != 'two_sided':
                raise ValidationError('DMLpy: distribution-function bands are two-sided')
        elif not functionals:
            raise ValidationError('DMLpy: an experiment needs target functionals or a grid')
        self.dgp = dgp
        self.dgp_params = dict(dgp_params or {})
        self.n = n
        self.functionals = [dict(entry) for entry in (functionals or [])]
        self.nuisance = dict(nuisance or {})
        self.folds = folds
        self.cross_fitting = cross_fitting
        self.level = level
        self.draws = draws
        self.sided = sided
        self.replications = replications
        self.master_seed = master_seed
        self.mode = mode
        self.oracle = oracle
        self.critical_value = critical_value
        self.alpha_shift = alpha_shift
        self.grid = grid
        self.arm = arm
        self.outcome_index = outcome_index
        self.workers = workers
        self.bound = dict(bound or {})

    def to_dict(self):
        return {key: value for key, value in self.__dict__.items() if key != 'workers'}

    def spec_hash(self):
        return spec_hash(self.to_dict())

    def build_dgp(self):
        return make_dgp(self.dgp, **self.dgp_params)

    def build_functionals(self, dgp):
        if self.grid is not None:
            return cdf_functionals(self.arm, self.grid, self.outcome_index)
        return functionals_from_config(self.functionals, dgp.labels, dgp.p_y)


########################################################################################################################
########################################################################################################################
#                                                  Replications
########################################################################################################################

def _plan(spec, r):
    if not spec.cross_fitting:
        return FoldPlan.no_splitting(spec.n)
    return make_folds(spec.n, spec.folds, spawn_seed(spec.master_seed, r, 1))


def _fits(spec, dgp, functionals, data, plan):
    if spec.mode == 'double_robustness':
        gammas = [true_regression(dgp, f) for f in functionals]
        alphas = [_ShiftedRepresenter(true_representer(dgp, f), spec.alpha_shift) for f in functionals]
        return NuisanceFitSet.from_callables(plan, gammas, alphas, kind='shifted')
    if spec.oracle:
        return oracle_fit_set(dgp, functionals, plan)
    recipes = recipes_from_config(functionals, spec.nuisance, data.labels, data.k, data.distinct_covariates())
    return cross_fit(data, plan, recipes)


class _ShiftedRepresenter:

    def __init__(self, alpha, shift):
        self.alpha = alpha
        self.shift = shift

    def __call__(self, d, x):
        return self.alpha(d, x) + self.shift


def _replicate(spec, r, theta0, sigma0):
    """
    One replication; numerical and validation failures are returned instead of raised.
    """
    try:
        dgp = spec.build_dgp()
        functionals = spec.build_functionals(dgp)
        data = dgp.sample(spec.n, spawn_generator(spec.master_seed, r))
        plan = _plan(spec, r)
        fits = _fits(spec, dgp, functionals, data, plan)
        with warnings.catch_warnings():
            warnings.simplefilter('ignore')
            estimates = estimate_targets(data, functionals, fits, plan)
        error = estimates.theta_hat - theta0
        outcome = {'failed': False, 'error': error}

        if spec.mode == 'coverage':
            seed = spawn_seed(spec.master_seed, r, 2)
            if spec.grid is not None:
                with warnings.catch_warnings():
                    warnings.simplefilter('ignore')
                    band = estimate_cdf_band(data, spec.arm, spec.grid, fits, plan, spec.level, spec.draws, seed,
                                             spec.outcome_index, critical_value=spec.critical_value)
                half_width = (band.upper - band.lower) / 2
            else:
                correlation = estimate_correlation(estimates.score)
                band = build_bands(estimates, correlation, spec.level, spec.draws, seed, spec.sided,
                                   critical_value=spec.critical_value)
                half_width = band.critical_value * band.standard_errors
            inside = (band.lower <= theta0) & (theta0 <= band.upper)
            outcome.update({'covered': bool(np.all(inside)), 'covered_each': inside, 'half_width': half_width})
        elif spec.mode == 'ks':
            scaled = math.sqrt(spec.n) * error / sigma0
            outcome['sup_t'] = float(np.max(np.abs(scaled)) if spec.sided == 'two_sided' else np.max(scaled))
        elif spec.mode == 'decomposition_audit':
            parts = [oracle_decomposition(data, dgp, f, fits, plan, j) for j, f in enumerate(functionals)]
            outcome.update({
                'residual': max(abs(p.residual) / (1 + abs(p.scaled_error)) for p in parts),
                'A': max(abs(p.A) for p in parts), 'B': max(abs(p.B) for p in parts),
                'C': max(abs(p.C) for p in parts), 'D': max(abs(p.D) for p in parts),
                'preliminary_rate': float(np.max(np.abs(error)))})
        return outcome
    except (ValidationError, NumericalError) as failure:
        return {'failed': True, 'message': str(failure)}


def _truth(spec, dgp, functionals):
    theta0 = np.array([true_target(dgp, f) for f in functionals])
    sigma0 = None
    if spec.mode in ('ks', 'double_robustness'):
        sigma0 = oracle_score_moments(dgp, functionals)['sigma']
    return theta0, sigma0


def _run(spec, verbose=False):
    dgp = spec.build_dgp()
    functionals = spec.build_functionals(dgp)
    theta0, sigma0 = _truth(spec, dgp, functionals)
    if verbose:
        print('DMLpy: Running {} replications in {} mode...'.format(spec.replications, spec.mode))
    outcomes = run_parallel(_replicate, [(spec, r, theta0, sigma0) for r in range(spec.replications)],
                            spec.workers)
    failed = [o for o in outcomes if o['failed']]
    if len(failed) > 0.01 * spec.replications:
        raise NumericalError('DMLpy: {} of {} replications failed; first failure: {}'.format(
            len(failed), spec.replications, failed[0]['message']))
    if failed:
        warnings.warn('DMLpy: {} replications failed and were excluded'.format(len(failed)))
    if verbose:
        print('DMLpy: Replications completed!')
    return dgp, functionals, theta0, sigma0, [o for o in outcomes if not o['failed']], len(failed)


########################################################################################################################
########################################################################################################################
#                                                  Experiments
########################################################################################################################

class CoverageReport:
    """
    Coverage of the simultaneous band over replications.

    **Attributes:**

    * **coverage** (`float`):
        Share of replications whose band contains every true target.

    * **marginal** (`ndarray`):
        Per-target coverage.

    * **mean_half_width** (`ndarray`):
        Mean of :math:`c_\\alpha\\hat{\\sigma}_j/\\sqrt{n}`.

    * **replications**, **failures** (`int`)

    * **mc_se** (`float`):
        :math:`\\sqrt{cov(1 - cov)/R}`.

    * **spec_hash** (`str`)
    """

    def __init__(self, names, covered, covered_each, half_widths, failures, spec_digest):
        self.names = list(names)
        self.replications = len(covered)
        self.coverage = float(np.mean(covered))
        self.marginal = np.mean(np.asarray(covered_each, dtype=float), axis=0)
        self.mean_half_width = np.mean(np.asarray(half_widths, dtype=float), axis=0)
        self.mc_se = math.sqrt(self.coverage * (1 - self.coverage) / self.replications)
        self.failures = failures
        self.spec_hash = spec_digest

    def to_dict(self):
        return {'coverage': self.coverage, 'mc_se': self.mc_se, 'replications': self.replications,
                'failures': self.failures, 'spec_hash': self.spec_hash,
                'targets': [{'name': name, 'coverage': float(c), 'mean_half_width': float(w)}
                            for name, c, w in zip(self.names, self.marginal, self.mean_half_width)]}


def run_coverage(spec, verbose=False):
    """
    Replicate data generation, fitting, estimation and band construction; record whether each band contains every
    true target.

    **Output/Returns:**

    * **report** (``CoverageReport``)
    """
    if spec.mode != 'coverage':
        raise ValidationError('DMLpy: run_coverage needs a spec in coverage mode')
    _, functionals, _, _, outcomes, failures = _run(spec, verbose)
    return CoverageReport([f.name for f in functionals], [o['covered'] for o in outcomes],
                          [o['covered_each'] for o in outcomes], [o['half_width'] for o in outcomes], failures,
                          spec.spec_hash())


def empirical_sup_t(spec, verbose=False):
    """
    Replicated sup-t statistics :math:`\\max_j\\sqrt{n}|\\hat{\\theta}_j - \\theta_{0j}|/\\sigma_j`, studentized by
    the true score standard deviations (the signed maximum when one-sided).
    """
    if spec.mode != 'ks':
        raise ValidationError('DMLpy: empirical_sup_t needs a spec in ks mode')
    outcomes = _run(spec, verbose)[4]
    return np.array([o['sup_t'] for o in outcomes])


def ks_distance(sample_a, sample_b):
    """
    Two-sample Kolmogorov distance :math:`\\sup_t|F_a(t) - F_b(t)|` between empirical distribution functions.
    """
    sample_a = np.asarray(sample_a, dtype=float).ravel()
    sample_b = np.asarray(sample_b, dtype=float).ravel()
    if sample_a.size == 0 or sample_b.size == 0:
        raise ValidationError('DMLpy: both samples must be nonempty')
    return float(ks_2samp(sample_a, sample_b, method='asymp').statistic)


class KsReport:
    """
    Empirical Kolmogorov distance between the sup-t statistic and the Gaussian-max limit, with the bound at the
    measured inputs.

    **Attributes:**

    * **sup_t** (`ndarray`), **gaussian_draws** (`int`), **ks** (`float`)

    * **bound** (`float`):
        Bound total, `None` when it cannot be evaluated (one target for the finite-target bound).

    * **status** (`str`):
        'vacuous' (bound at least 1 or unavailable), 'consistent' or 'violated'.

    * **bound_report** (`dict`), **spec_hash** (`str`), **warnings** (`list`)
    """

    def __init__(self, sup_t, gaussian_draws, ks, bound, bound_report, spec_digest, messages):
        self.sup_t = np.asarray(sup_t)
        self.gaussian_draws = gaussian_draws
        self.ks = ks
        self.bound = bound
        self.bound_report = bound_report
        if bound is None or bound >= 1:
            self.status = 'vacuous'
        else:
            self.status = 'consistent' if ks <= bound else 'violated'
        self.spec_hash = spec_digest
        self.warnings = list(messages)

    def to_dict(self):
        return {'ks': self.ks, 'bound': self.bound, 'status': self.status, 'replications': int(self.sup_t.size),
                'gaussian_draws': self.gaussian_draws, 'bound_report': self.bound_report,
                'spec_hash': self.spec_hash, 'warnings': self.warnings}


def _measured_inputs(spec, dgp, functionals):
    data = dgp.sample(spec.n, spawn_generator(spec.master_seed, 0))
    plan = _plan(spec, 0)
    fits = _fits(spec, dgp, functionals, data, plan)
    with warnings.catch_warnings():
        warnings.simplefilter('ignore')
        return empirical_bound_inputs(dgp, functionals, fits, n=spec.n)


def bound_vs_empirical(spec, bound_inputs=None, verbose=False):
    """
    Compare the empirical Kolmogorov distance of the sup-t statistic with the bound at measured inputs.

    The inputs measured on replication 0 (``empirical_bound_inputs``) are overridden by ``spec.bound`` and then by
    `bound_inputs`. ``theorem`` selects the finite-target bound (1, default) or the continuum bound (2); ``regime``
    and ``constants`` are passed through.

    **Output/Returns:**

    * **report** (``KsReport``)
    """
    if spec.mode != 'ks':
        raise ValidationError('DMLpy: bound_vs_empirical needs a spec in ks mode')
    dgp, functionals, _, _, outcomes, _ = _run(spec, verbose)
    sample = np.array([o['sup_t'] for o in outcomes])
    moments = oracle_score_moments(dgp, functionals)
    gaussian = gaussian_max_sample(moments['correlation'], spec.draws, spawn_seed(spec.master_seed, 0, 9),
                                   spec.sided, workers=spec.workers)
    ks = ks_distance(sample, gaussian)

    options = dict(spec.bound)
    options.update(bound_inputs or {})
    theorem = int(options.pop('theorem', 1))
    regime = options.pop('regime', 'heavy_tail_q')
    measured = _measured_inputs(spec, dgp, functionals)
    messages = measured.pop('warnings')
    bound, report = None, None
    if theorem == 1:
        inputs = dict(measured)
        inputs.update(options)
        if inputs['p'] < 2:
            messages.append('DMLpy: the finite-target bound needs at least 2 targets')
        else:
            result = theorem1_bound(Theorem1Inputs(**inputs), regime)
            bound, report = result.total, result.report().to_dict()
    elif theorem == 2:
        inputs = {'n': measured['n'], 'b_n': measured['b_n'], 'V_n': 1.0, 'A_n': float(measured['n']),
                  'R_eta': max(measured['R_gamma'], measured['R_alpha']), 'v_n': measured['v_n'],
                  'a_n': measured['a_n'], 'q': measured['q']}
        inputs.update(options)
        result = theorem2_bound(Theorem2Inputs(**inputs))
        bound, report = result.total, result.to_dict()
    else:
        raise ValidationError('DMLpy: theorem must be 1 or 2')
    return KsReport(sample, spec.draws, ks, bound, report, spec.spec_hash(), messages)


def decomposition_audit(spec, tolerance=1e-10, verbose=False):
    """
    Error decomposition in every replication: the scaled identity residual and the largest :math:`|A|, |B|, |C|, |D|`
    over targets, plus the preliminary rate :math:`\\max_j|\\hat{\\theta}_j - \\theta_{0j}|`. Fails when a residual
    exceeds `tolerance`.

    **Output/Returns:**

    * **summary** (`dict`)
    """
    if spec.mode != 'decomposition_audit':
        raise ValidationError('DMLpy: decomposition_audit needs a spec in decomposition_audit mode')
    outcomes, failures = _run(spec, verbose)[4:]
    residuals = np.array([o['residual'] for o in outcomes])
    if np.any(residuals > tolerance):
        raise NumericalError('DMLpy: the decomposition identity fails (scaled residual {:.3e})'.format(
            residuals.max()))
    summary = {'replications': len(outcomes), 'failures': failures, 'max_residual': float(residuals.max()),
               'spec_hash': spec.spec_hash()}
    for term in ('A', 'B', 'C', 'D', 'preliminary_rate'):
        values = np.array([o[term] for o in outcomes])
        summary[term] = {'max': float(values.max()), 'median': float(np.median(values))}
    return summary


def run_double_robustness(spec, verbose=False):
    """
    Estimation with the true regression and the representer shifted by ``spec.alpha_shift``: the score stays mean
    zero, so :math:`|\\hat{\\theta}_j - \\theta_{0j}|` should stay within :math:`3\\sigma_j/\\sqrt{n}`.

    **Output/Returns:**

    * **summary** (`dict`):
        Mean and largest absolute errors, the threshold and the share of replications within it.
    """
    if spec.mode != 'double_robustness':
        raise ValidationError('DMLpy: run_double_robustness needs a spec in double_robustness mode')
    _, functionals, _, sigma0, outcomes, failures = _run(spec, verbose)
    errors = np.abs(np.array([o['error'] for o in outcomes]))
    threshold = 3 * sigma0 / math.sqrt(spec.n)
    return {'replications': len(outcomes), 'failures': failures, 'alpha_shift': spec.alpha_shift,
            'targets': [{'name': f.name, 'mean_abs_error': float(errors[:, j].mean()),
                         'max_abs_error': float(errors[:, j].max()), 'threshold': float(threshold[j]),
                         'share_within': float(np.mean(errors[:, j] <= threshold[j]))}
                        for j, f in enumerate(functionals)],
            'spec_hash': spec.spec_hash()}


def dump_sample(sample, path, column='sup_t'):
    """
    Write a sample as a single-column CSV file.
    """
    pd.DataFrame({column: np.asarray(sample, dtype=float)}).to_csv(path, index=False)
