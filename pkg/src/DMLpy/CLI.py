"""
Command-line surface of DMLpy.

A run is described by a ``RunConfig`` loaded from a JSON file and overridden by command-line flags. ``run`` dispatches
the command to the owning module and returns a ``Report`` whose config echo reproduces its results block.

Exit codes: 0 on success, 2 on a validation error, 3 on a numerical failure.

The module currently contains the following classes and functions:

* ``RunConfig`` and its sections ``DataConfig``, ``NuisanceConfig``, ``BoundConfig``, ``SimulateConfig``,
  ``CdfConfig``.
* ``parse_config``, ``run``, ``Report``, ``Commands``, ``main``.
"""

import json
import sys
import time
import warnings
from typing import Any, Dict, List, Literal, Optional, Union

import fire
from pydantic import BaseModel, ConfigDict, Field, field_validator, model_validator
from pydantic import ValidationError as SchemaError

from DMLpy.Bounds import Theorem1Inputs, Theorem2Inputs, theorem1_bound, theorem2_bound, REGIMES
from DMLpy.Data import make_dgp, generate_dataset, load_csv, make_folds, FoldPlan
from DMLpy.Inference import (estimate_targets, estimate_correlation, build_bands, default_grid, cdf_functionals,
                             estimate_cdf_band, qte_from_cdf)
from DMLpy.MonteCarlo import (ExperimentSpec, run_coverage, bound_vs_empirical, decomposition_audit,
                              run_double_robustness, dump_sample)
from DMLpy.Nuisance import cross_fit, recipes_from_config
from DMLpy.Scores import functionals_from_config
from DMLpy.Utilities import ValidationError, NumericalError, spawn_seed, spec_hash, to_serializable

SCHEMA_VERSION = 1
COMMANDS = ('estimate', 'bands', 'cdf-bands', 'bound', 'simulate')

# Flat flags and the section they belong to.
FLAT_FLAGS = {'level': None, 'draws': None, 'seed': None, 'folds': None, 'out': None, 'workers': None,
              'sided': None, 'cross_fitting': None, 'theorem': 'bound', 'regime': 'bound', 'mode': 'simulate',
              'replications': 'simulate', 'csv': 'data', 'dgp': 'data', 'n': 'data'}

Label = Union[int, str]


########################################################################################################################
########################################################################################################################
#                                                  Configuration
########################################################################################################################

class DataConfig(BaseModel):
    """
    Data source: a CSV file with its column map, or a process from the catalog with a sample size.
    """
    model_config = ConfigDict(extra='forbid')

    csv: Optional[str] = None
    columns: Optional[Dict[str, Any]] = None
    dgp: Optional[str] = None
    dgp_params: Dict[str, Any] = Field(default_factory=dict)
    n: Optional[int] = None

    @model_validator(mode='after')
    def _one_source(self):
        if (self.csv is None) == (self.dgp is None):
            raise ValueError('exactly one of data.csv and data.dgp must be given')
        if self.csv is not None and self.columns is None:
            raise ValueError('data.columns must map the outcomes and treatment columns of the CSV file')
        if self.dgp is not None and (self.n is None or self.n < 2):
            raise ValueError('data.n must be an integer >= 2 when data.dgp is given')
        return self


class NuisanceConfig(BaseModel):
    model_config = ConfigDict(extra='forbid')

    dictionary: Dict[str, Any] = Field(default_factory=dict)
    ridge: Optional[float] = None
    riesz: Literal['plugin', 'automatic'] = 'plugin'
    riesz_ridge: Optional[float] = None
    clip: float = 0.01
    clip_bound: Optional[float] = None
    propensity_ridge: Optional[float] = None
    ridge_candidates: Optional[List[float]] = None

    @field_validator('clip')
    @classmethod
    def _clip_range(cls, value):
        if not 0 < value < 0.5:
            raise ValueError('clip must lie in (0,0.5)')
        return value

    @model_validator(mode='after')
    def _fill_clip_bound(self):
        if self.clip_bound is None:
            self.clip_bound = 1.0 / self.clip
        return self

    def options(self):
        return self.model_dump(exclude_none=True)


class BoundConfig(BaseModel):
    model_config = ConfigDict(extra='forbid')

    theorem: Literal[1, 2] = 1
    regime: str = 'heavy_tail_q'
    inputs: Dict[str, Any] = Field(default_factory=dict)
    constants: Dict[str, float] = Field(default_factory=dict)

    @field_validator('regime')
    @classmethod
    def _known_regime(cls, value):
        if value not in REGIMES:
            raise ValueError('regime must be one of {}'.format(', '.join(sorted(REGIMES))))
        return value


class SimulateConfig(BaseModel):
    model_config = ConfigDict(extra='forbid')

    mode: Literal['coverage', 'ks', 'decomposition_audit', 'double_robustness'] = 'coverage'
    replications: int = Field(100, ge=1)
    oracle: bool = False
    critical_value: Optional[float] = None
    alpha_shift: float = 0.5
    dump: Optional[str] = None


class CdfConfig(BaseModel):
    model_config = ConfigDict(extra='forbid')

    arms: List[Label] = Field(default_factory=list)
    grid: Optional[List[float]] = None
    grid_size: int = Field(25, ge=1)
    quantiles: List[float] = Field(default_factory=list)
    outcome_index: int = Field(0, ge=0)
    monotone: bool = True


class RunConfig(BaseModel):
    """
    Validated configuration of one run. Unknown keys are rejected in every section.
    """
    model_config = ConfigDict(extra='forbid')

    command: Literal['estimate', 'bands', 'cdf-bands', 'bound', 'simulate']
    data: Optional[DataConfig] = None
    functionals: List[Dict[str, Any]] = Field(default_factory=list)
    nuisance: NuisanceConfig = Field(default_factory=NuisanceConfig)
    folds: int = 5
    cross_fitting: bool = True
    level: float = 0.95
    draws: int = 100000
    seed: int = 0
    sided: Literal['two_sided', 'one_sided'] = 'two_sided'
    workers: int = Field(1, ge=1)
    out: Optional[str] = None
    bound: BoundConfig = Field(default_factory=BoundConfig)
    simulate: SimulateConfig = Field(default_factory=SimulateConfig)
    cdf: CdfConfig = Field(default_factory=CdfConfig)

    @field_validator('level')
    @classmethod
    def _level_range(cls, value):
        if not 0 < value < 1:
            raise ValueError('level must lie in (0,1)')
        return value

    @field_validator('draws')
    @classmethod
    def _enough_draws(cls, value):
        if value < 1000:
            raise ValueError('draws must be an integer >= 1000')
        return value

    @field_validator('folds')
    @classmethod
    def _fold_count(cls, value):
        if value < 2:
            raise ValueError('folds must be an integer >= 2')
        return value

    @model_validator(mode='after')
    def _command_inputs(self):
        if self.command != 'bound' and self.data is None:
            raise ValueError('command "{}" needs a data section'.format(self.command))
        if self.command in ('estimate', 'bands') and not self.functionals:
            raise ValueError('command "{}" needs at least one functional'.format(self.command))
        if self.command == 'cdf-bands' and not self.cdf.arms:
            raise ValueError('command "cdf-bands" needs cdf.arms')
        if self.command == 'cdf-bands' and self.cdf.quantiles and len(self.cdf.arms) != 2:
            raise ValueError('cdf.quantiles needs exactly two arms (treated, control)')
        if self.command == 'simulate':
            if self.data.dgp is None:
                raise ValueError('command "simulate" needs data.dgp')
            if not self.functionals and not (self.cdf.grid and len(self.cdf.arms) == 1):
                raise ValueError('command "simulate" needs functionals, or cdf.grid with one arm')
        return self


def _set_dotted(document, key, value):
    parts = key.split('.')
    node = document
    for part in parts[:-1]:
        child = node.get(part)
        if child is None:
            child = node[part] = {}
        elif not isinstance(child, dict):
            raise ValidationError('DMLpy: flag "{}" addresses a key that is not a section'.format(key))
        node = child
    node[parts[-1]] = value


def parse_config(path=None, overrides=None):
    """
    Load and validate a run configuration.

    **Inputs:**

    * **path** (`str`):
        JSON configuration file. Optional when `overrides` describe the whole run.

    * **overrides** (`dict`):
        Flag values; they win over file values. Flat names (``level``, ``draws``, ``seed``, ``folds``, ``out``,
        ``workers``, ``sided``, ``cross_fitting``, ``theorem``, ``regime``, ``mode``, ``replications``, ``csv``,
        ``dgp``, ``n``) are routed to their section; dotted names ``section.key`` address anything.

    **Output/Returns:**

    * **config** (``RunConfig``)
    """
    document = {}
    if path is not None:
        try:
            with open(path, encoding='utf-8') as handle:
                document = json.load(handle)
        except OSError as error:
            raise ValidationError('DMLpy: cannot read config file "{}": {}'.format(path, error))
        except json.JSONDecodeError as error:
            raise ValidationError('DMLpy: config file "{}" is not valid JSON: {}'.format(path, error))
        if not isinstance(document, dict):
            raise ValidationError('DMLpy: config file "{}" must hold a JSON object'.format(path))
    for key, value in (overrides or {}).items():
        if value is None:
            continue
        key = key.replace('-', '_') if '.' not in key else key
        section = FLAT_FLAGS.get(key)
        _set_dotted(document, key if section is None else '{}.{}'.format(section, key), value)
    try:
        return RunConfig.model_validate(document)
    except SchemaError as error:
        problems = ['{}: {}'.format('.'.join(str(part) for part in problem['loc']) or 'config', problem['msg'])
                    for problem in error.errors()]
        raise ValidationError('DMLpy: invalid configuration; ' + '; '.join(problems))


########################################################################################################################
########################################################################################################################
#                                                     Runs
########################################################################################################################

class Report:
    """
    Structured result of a run.

    **Attributes:**

    * **command** (`str`), **config** (`dict`), **spec_hash** (`str`)

    * **results** (`dict`):
        Depends only on the config echo.

    * **warnings** (`list`), **timing** (`dict`)
    """

    def __init__(self, command, config, results, messages=None, timing=None, schema_version=SCHEMA_VERSION):
        self.schema_version = schema_version
        self.command = command
        self.config = config
        self.spec_hash = spec_hash(config)
        self.results = to_serializable(results)
        self.warnings = list(messages or [])
        self.timing = dict(timing or {})

    def to_dict(self):
        return {'schema_version': self.schema_version, 'command': self.command,
                'config': self.config, 'spec_hash': self.spec_hash, 'results': self.results,
                'warnings': self.warnings, 'timing': self.timing}

    def dumps(self):
        return json.dumps(self.to_dict(), indent=2, sort_keys=True)

    def write(self, path):
        with open(path, 'w', encoding='utf-8') as handle:
            handle.write(self.dumps())

    @classmethod
    def from_dict(cls, document):
        if document.get('schema_version') != SCHEMA_VERSION:
            raise ValidationError('DMLpy: unsupported report schema version {}'.format(
                document.get('schema_version')))
        return cls(document['command'], document['config'], document['results'], document.get('warnings'),
                   document.get('timing'), document['schema_version'])

    @classmethod
    def read(cls, path):
        with open(path, encoding='utf-8') as handle:
            return cls.from_dict(json.load(handle))


class _Stage:
    """
    Names the stage a run is in, so failures can report it.
    """

    def __init__(self):
        self.name = 'validating the configuration'

    def __call__(self, name):
        self.name = name


def _load_data(config):
    source = config.data
    if source.csv is not None:
        return load_csv(source.csv, source.columns)
    return generate_dataset(make_dgp(source.dgp, **source.dgp_params), source.n, spawn_seed(config.seed, 0))


def _plan(config, n):
    if not config.cross_fitting:
        return FoldPlan.no_splitting(n)
    if config.folds > n:
        raise ValidationError('DMLpy: folds must not exceed the sample size {}'.format(n))
    return make_folds(n, config.folds, spawn_seed(config.seed, 1))


def _fit(config, data, functionals, plan, verbose):
    recipes = recipes_from_config(functionals, config.nuisance.options(), data.labels, data.k,
                                  data.distinct_covariates())
    return cross_fit(data, plan, recipes, verbose=verbose)


def _estimate(config, stage, verbose):
    stage('loading data')
    data = _load_data(config)
    functionals = functionals_from_config(config.functionals, data.labels, data.p_y)
    plan = _plan(config, data.n)
    stage('cross-fitting nuisances')
    fits = _fit(config, data, functionals, plan, verbose)
    stage('estimating targets')
    return estimate_targets(data, functionals, fits, plan), plan


def _run_bands(config, stage, verbose):
    estimates, plan = _estimate(config, stage, verbose)
    stage('computing the critical value')
    correlation = estimate_correlation(estimates.score)
    band = build_bands(estimates, correlation, config.level, config.draws, spawn_seed(config.seed, 2), config.sided,
                       config.workers)
    return {'bands': band.to_dict(), 'folds': plan.to_dict()}


def _run_cdf_bands(config, stage, verbose):
    stage('loading data')
    data = _load_data(config)
    plan = _plan(config, data.n)
    settings = config.cdf
    bands = {}
    for index, arm in enumerate(settings.arms):
        if arm not in data.labels:
            raise ValidationError('DMLpy: cdf arm "{}" is not a treatment label'.format(arm))
        grid = settings.grid
        if grid is None:
            grid = default_grid(data, settings.outcome_index, settings.grid_size, arm)
        stage('cross-fitting distribution regressions for arm {}'.format(arm))
        fits = _fit(config, data, cdf_functionals(arm, grid, settings.outcome_index), plan, verbose)
        stage('building the band for arm {}'.format(arm))
        bands[arm] = estimate_cdf_band(data, arm, grid, fits, plan, config.level, config.draws,
                                       spawn_seed(config.seed, 2, index), settings.outcome_index, settings.monotone,
                                       config.workers)
    results = {'cdf_bands': [band.to_dict() for band in bands.values()], 'folds': plan.to_dict()}
    if settings.quantiles:
        stage('inverting the distribution functions')
        treated, control = settings.arms
        rows = []
        for q in settings.quantiles:
            point, (low, high) = qte_from_cdf(bands[treated], bands[control], q)
            rows.append({'q': q, 'qte': point, 'lower': low, 'upper': high})
        results['qte'] = rows
    return results


def _run_bound(config, stage):
    stage('evaluating the bound')
    settings = config.bound
    try:
        if settings.theorem == 1:
            inputs = Theorem1Inputs(constants=settings.constants, **settings.inputs)
            return {'bound': theorem1_bound(inputs, settings.regime).report().to_dict()}
        inputs = Theorem2Inputs(constants=settings.constants, **settings.inputs)
        return {'bound': theorem2_bound(inputs).to_dict()}
    except TypeError as error:
        raise ValidationError('DMLpy: invalid bound inputs: {}'.format(error))


def _run_simulate(config, stage, verbose):
    stage('setting up the experiment')
    settings = config.simulate
    cdf = config.cdf
    grid_run = not config.functionals
    bound = dict(config.bound.inputs)
    bound.update({'theorem': config.bound.theorem, 'regime': config.bound.regime})
    if config.bound.constants:
        bound['constants'] = config.bound.constants
    spec = ExperimentSpec(config.data.dgp, config.data.n, config.functionals, config.nuisance.options(),
                          config.data.dgp_params, config.folds, config.cross_fitting, config.level, config.draws,
                          config.sided, settings.replications, config.seed, settings.mode, settings.oracle,
                          settings.critical_value, settings.alpha_shift, cdf.grid if grid_run else None,
                          cdf.arms[0] if grid_run else None, cdf.outcome_index, config.workers, bound)
    stage('running {} replications'.format(settings.replications))
    if settings.mode == 'coverage':
        return {'coverage': run_coverage(spec, verbose).to_dict()}
    if settings.mode == 'ks':
        report = bound_vs_empirical(spec, verbose=verbose)
        if settings.dump is not None:
            dump_sample(report.sup_t, settings.dump)
        return {'ks': report.to_dict()}
    if settings.mode == 'decomposition_audit':
        return {'decomposition': decomposition_audit(spec, verbose=verbose)}
    return {'double_robustness': run_double_robustness(spec, verbose)}


def run(config, verbose=False):
    """
    Execute a validated configuration.

    **Output/Returns:**

    * **report** (``Report``):
        Also written to ``config.out`` when set.

    Failures carry the stage they happened in as the ``stage`` attribute.
    """
    stage = _Stage()
    start = time.perf_counter()
    with warnings.catch_warnings(record=True) as caught:
        warnings.simplefilter('always')
        try:
            if config.command == 'estimate':
                estimates, plan = _estimate(config, stage, verbose)
                results = {'estimates': estimates.to_dict(), 'folds': plan.to_dict()}
            elif config.command == 'bands':
                results = _run_bands(config, stage, verbose)
            elif config.command == 'cdf-bands':
                results = _run_cdf_bands(config, stage, verbose)
            elif config.command == 'bound':
                results = _run_bound(config, stage)
            else:
                results = _run_simulate(config, stage, verbose)
        except (ValidationError, NumericalError) as error:
            error.stage = stage.name
            raise
    messages = []
    for record in caught:
        text = str(record.message)
        if text not in messages:
            messages.append(text)
    report = Report(config.command, config.model_dump(mode='json'), results, messages,
                    {'seconds': time.perf_counter() - start})
    if config.out is not None:
        report.write(config.out)
    return report


def summarize(report):
    """
    One-paragraph summary of a report.
    """
    results = report.results
    parts = ['DMLpy {}:'.format(report.command)]
    if 'estimates' in results:
        parts.append('{} targets estimated on n = {}.'.format(len(results['estimates']['targets']),
                                                             results['estimates']['n']))
    if 'bands' in results:
        band = results['bands']
        parts.append('{} targets, level {}, critical value {:.4f}.'.format(len(band['targets']), band['level'],
                                                                         band['critical_value']))
    if 'cdf_bands' in results:
        parts.append('{} distribution-function bands.'.format(len(results['cdf_bands'])))
    if 'qte' in results:
        parts.append('{} quantile treatment effects.'.format(len(results['qte'])))
    if 'bound' in results:
        parts.append('bound total {:.6g}.'.format(results['bound']['total']))
    if 'coverage' in results:
        parts.append('coverage {:.4f} (Monte Carlo s.e. {:.4f}) over {} replications.'.format(
            results['coverage']['coverage'], results['coverage']['mc_se'], results['coverage']['replications']))
    if 'ks' in results:
        parts.append('Kolmogorov distance {:.4f}, bound {}, status {}.'.format(
            results['ks']['ks'], results['ks']['bound'], results['ks']['status']))
    if 'decomposition' in results:
        parts.append('largest decomposition residual {:.3e}.'.format(results['decomposition']['max_residual']))
    if 'double_robustness' in results:
        parts.append('{} replications with a shifted representer.'.format(
            results['double_robustness']['replications']))
    if report.warnings:
        parts.append('{} warnings.'.format(len(report.warnings)))
    return ' '.join(parts)


########################################################################################################################
########################################################################################################################
#                                                 Command line
########################################################################################################################

class Commands:
    """
    ``dmlpy <command> [--config PATH] [--flag value ...]``
    """

    def __init__(self, verbose=False):
        self._verbose = verbose

    def _execute(self, command, config, flags):
        flags = dict(flags)
        flags['command'] = command
        report = run(parse_config(config, flags), self._verbose)
        print(summarize(report))

    def estimate(self, config=None, **flags):
        """Cross-fitted estimates of every target."""
        self._execute('estimate', config, flags)

    def bands(self, config=None, **flags):
        """Simultaneous sup-t bands."""
        self._execute('bands', config, flags)

    def cdf_bands(self, config=None, **flags):
        """Distribution-function bands and quantile treatment effects."""
        self._execute('cdf-bands', config, flags)

    def bound(self, config=None, **flags):
        """Finite-sample Kolmogorov-distance bounds."""
        self._execute('bound', config, flags)

    def simulate(self, config=None, **flags):
        """Monte Carlo experiments."""
        self._execute('simulate', config, flags)


def main(argv=None):
    try:
        fire.Fire(Commands, command=argv, name='dmlpy')
    except ValidationError as error:
        print('{} (while {})'.format(error, getattr(error, 'stage', 'validating the configuration')),
              file=sys.stderr)
        return 2
    except NumericalError as error:
        print('{} (while {})'.format(error, getattr(error, 'stage', 'running')), file=sys.stderr)
        return 3
    return 0


if __name__ == '__main__':
    sys.exit(main())
