import sys
sys.path.insert(1, '../src')
import json
import math
import pytest
from DMLpy.CLI import *
from DMLpy.Utilities import ValidationError, NumericalError


toy_rows = 'y,d\n1,0\n2,0\n3,0\n4,1\n6,1\n8,1\n'
lonely_rows = 'y,d\n1,0\n2,0\n3,0\n4,0\n6,0\n8,1\n'
contrast = [{'family': 'many_treatments'}]
bound_inputs = {'n': 1e4, 'p': 10, 'b_n': 1.0, 'lambda_min': 1.0, 'sigma_min': 1.0}


def write_json(path, document):
    path.write_text(json.dumps(document), encoding='utf-8')
    return str(path)


def csv_config(tmp_path, rows, **options):
    data = tmp_path / 'data.csv'
    data.write_text(rows, encoding='utf-8')
    document = {'command': 'bands', 'data': {'csv': str(data), 'columns': {'outcomes': 'y', 'treatment': 'd'}},
                'functionals': contrast, 'draws': 1000}
    document.update(options)
    return write_json(tmp_path / 'config.json', document)


def simulate_config(**options):
    document = {'command': 'simulate', 'data': {'dgp': 'discrete_confounded', 'n': 100}, 'functionals': contrast,
                'nuisance': {'dictionary': {'saturated': True}}, 'folds': 2, 'draws': 1000, 'seed': 4,
                'simulate': {'replications': 3}}
    document.update(options)
    return RunConfig.model_validate(document)


def test_defaults():
    """
    Unspecified settings take their documented defaults
    """
    config = parse_config(overrides={'command': 'bound'})
    assert (config.level, config.draws, config.folds, config.seed) == (0.95, 100000, 5, 0)
    assert config.sided == 'two_sided' and config.cross_fitting
    assert config.nuisance.clip_bound == pytest.approx(100.0)
    assert config.bound.theorem == 1 and config.simulate.replications == 100


def test_invalid_settings_are_validation_errors():
    """
    Out-of-range level, draws and folds are reported with their location
    """
    with pytest.raises(ValidationError, match=r'level must lie in \(0,1\)'):
        parse_config(overrides={'command': 'bound', 'level': 1.5})
    with pytest.raises(ValidationError, match='draws must be an integer >= 1000'):
        parse_config(overrides={'command': 'bound', 'draws': 10})
    with pytest.raises(ValidationError, match='folds must be an integer >= 2'):
        parse_config(overrides={'command': 'bound', 'folds': 1})
    with pytest.raises(ValidationError, match=r'clip must lie in \(0,0.5\)'):
        parse_config(overrides={'command': 'bound', 'nuisance.clip': 0.7})
    with pytest.raises(ValidationError, match='colour'):
        parse_config(overrides={'command': 'bound', 'colour': 'red'})


def test_command_requirements():
    """
    Commands other than bound need data; estimation commands need functionals
    """
    with pytest.raises(ValidationError, match='needs a data section'):
        parse_config(overrides={'command': 'estimate'})
    with pytest.raises(ValidationError, match='exactly one of data.csv and data.dgp'):
        parse_config(overrides={'command': 'estimate', 'csv': 'a.csv', 'dgp': 'discrete_confounded', 'n': 10})
    with pytest.raises(ValidationError, match='cdf.arms'):
        parse_config(overrides={'command': 'cdf-bands', 'dgp': 'gaussian_outcomes', 'n': 10})
    with pytest.raises(ValidationError, match='needs data.dgp'):
        parse_config(overrides={'command': 'simulate', 'csv': 'a.csv', 'data.columns': {'outcomes': 'y'},
                                'functionals': contrast})


def test_flags_override_the_file(tmp_path):
    """
    Flags win over file values; None flags are ignored; flat flags reach their section
    """
    path = write_json(tmp_path / 'config.json', {'command': 'bound', 'level': 0.9, 'bound': {'regime': 'bounded'}})
    assert parse_config(path).level == 0.9
    assert parse_config(path, {'level': 0.8}).level == 0.8
    assert parse_config(path, {'level': None}).level == 0.9
    config = parse_config(path, {'theorem': 2, 'cross-fitting': False, 'nuisance.clip': 0.05, 'replications': 7})
    assert config.bound.theorem == 2 and config.bound.regime == 'bounded'
    assert not config.cross_fitting
    assert config.nuisance.clip_bound == pytest.approx(20.0)
    assert config.simulate.replications == 7


def test_unreadable_config_files(tmp_path):
    """
    Missing files, malformed JSON and non-object documents are validation errors
    """
    with pytest.raises(ValidationError, match='cannot read'):
        parse_config(str(tmp_path / 'missing.json'))
    broken = tmp_path / 'broken.json'
    broken.write_text('{"command": ', encoding='utf-8')
    with pytest.raises(ValidationError, match='not valid JSON'):
        parse_config(str(broken))
    with pytest.raises(ValidationError, match='JSON object'):
        parse_config(write_json(tmp_path / 'list.json', [1, 2]))


def test_bound_command_passes_inputs_through():
    """
    The bounded-regime total is term (A) plus c / log n
    """
    config = parse_config(overrides={'command': 'bound', 'regime': 'bounded', 'bound.inputs': bound_inputs})
    report = run(config)
    expected = math.log(10) ** 1.5 * math.log(1e4) / 100 + 1 / math.log(1e4)
    assert report.results['bound']['total'] == pytest.approx(expected)
    assert report.results['bound']['theorem'] == 'theorem1'
    assert 'bound total' in summarize(report)


def test_bound_command_rejects_unknown_inputs():
    """
    Inputs that the bound does not take are validation errors
    """
    config = parse_config(overrides={'command': 'bound', 'bound.inputs': dict(bound_inputs, shape=2)})
    with pytest.raises(ValidationError, match='invalid bound inputs'):
        run(config)


def test_bands_on_a_small_csv(tmp_path):
    """
    Difference in means of 4 with a band around it, written to the output file
    """
    out = str(tmp_path / 'report.json')
    config = parse_config(csv_config(tmp_path, toy_rows, cross_fitting=False), {'out': out})
    report = run(config)
    target = report.results['bands']['targets'][0]
    assert target['estimate'] == pytest.approx(4.0, abs=1e-8)
    assert target['lower'] < 4.0 < target['upper']
    assert report.results['folds']['nfolds'] == 1
    saved = Report.read(out)
    assert saved.results == report.results
    assert saved.spec_hash == report.spec_hash
    assert 'critical value' in summarize(report)


def test_report_schema_version_is_checked():
    """
    Reports of another schema version are rejected
    """
    document = Report('bound', {'command': 'bound'}, {}).to_dict()
    document['schema_version'] = 99
    with pytest.raises(ValidationError, match='schema version'):
        Report.from_dict(document)


def test_failures_name_their_stage(tmp_path):
    """
    A label missing from a training fold fails while cross-fitting
    """
    config = parse_config(csv_config(tmp_path, lonely_rows, folds=2))
    with pytest.raises(NumericalError) as failure:
        run(config)
    assert failure.value.stage == 'cross-fitting nuisances'


def test_estimate_on_generated_data():
    """
    Generated data gives one estimate per contrast
    """
    config = simulate_config(command='estimate', data={'dgp': 'gaussian_outcomes', 'n': 200}, nuisance={})
    report = run(config)
    assert len(report.results['estimates']['targets']) == 1
    assert report.results['estimates']['n'] == 200


def test_simulate_is_reproducible():
    """
    The same configuration gives the same results block
    """
    first = run(simulate_config())
    second = run(simulate_config())
    assert first.results == second.results
    assert first.spec_hash == second.spec_hash
    assert first.results['coverage']['replications'] == 3


def test_simulate_decomposition_audit():
    """
    The audit mode reports the largest identity residual
    """
    report = run(simulate_config(simulate={'replications': 2, 'mode': 'decomposition_audit'}))
    assert report.results['decomposition']['max_residual'] <= 1e-10


def test_cdf_bands_with_quantile_effects():
    """
    Two arms and one quantile level give two bands and one effect
    """
    config = simulate_config(command='cdf-bands', data={'dgp': 'gaussian_outcomes', 'n': 300}, functionals=[],
                             nuisance={}, cdf={'arms': [1, 0], 'grid_size': 9, 'quantiles': [0.5]})
    report = run(config)
    assert len(report.results['cdf_bands']) == 2
    row = report.results['qte'][0]
    assert row['q'] == 0.5 and row['lower'] <= row['qte'] <= row['upper']


def test_main_exit_codes(tmp_path, capsys):
    """
    0 on success, 2 on validation errors and 3 on numerical failures
    """
    path = write_json(tmp_path / 'bound.json', {'command': 'bound', 'bound': {'inputs': bound_inputs}})
    assert main(['bound', '--config', path]) == 0
    assert 'bound total' in capsys.readouterr().out
    assert main(['bound', '--config', path, '--level', '1.5']) == 2
    assert 'level must lie in (0,1)' in capsys.readouterr().err
    assert main(['bands', '--config', csv_config(tmp_path, lonely_rows, folds=2)]) == 3
