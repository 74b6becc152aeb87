import sys
sys.path.insert(1, '../src')
import numpy as np
import pytest
from DMLpy.Data import *
from DMLpy.Utilities import ValidationError, IngestionError, EvaluationError


dgp = make_dgp('discrete_confounded')
gaussian = make_dgp('gaussian_outcomes', p=2, k=2, effect=[0.5, -0.25])


def write(path, text):
    path.write_text(text, encoding='utf-8')
    return str(path)


def test_dataset_defaults_and_read_only_arrays():
    """
    Dataset fills labels, weights and names and refuses writes
    """
    data = Dataset([1.0, 2.0, 3.0], [1, 0, 1])
    assert data.labels == (0, 1)
    assert (data.n, data.p_y, data.k) == (3, 1, 0)
    assert data.codes.tolist() == [1, 0, 1]
    assert data.outcome_names == ['y0']
    with pytest.raises(ValueError):
        data.outcomes[0, 0] = 5.0


def test_dataset_rejects_undeclared_labels():
    """
    Treatment values must belong to the declared label set
    """
    with pytest.raises(ValidationError):
        Dataset([1.0, 2.0], ['a', 'c'], labels=['a', 'b'])
    with pytest.raises(ValidationError):
        Dataset([1.0, np.nan], [0, 1])


def test_weighted_mean_and_subset():
    """
    Weighted means and row subsets keep the label set
    """
    data = Dataset([[1.0], [3.0]], [0, 1], weights=[3.0, 1.0], labels=[0, 1, 2])
    assert data.mean(data.outcomes[:, 0]) == 1.5
    part = data.subset([1])
    assert part.n == 1 and part.labels == (0, 1, 2)


def test_discrete_process_tables():
    """
    Propensity and regression tables of the confounded catalog process
    """
    assert dgp.cells.tolist() == [[0.0], [1.0]]
    assert np.allclose(dgp.propensity_table[1], [0.3, 0.7])
    assert np.allclose(dgp.regression_table[:, :, 0], [[0.2, 0.4], [0.5, 0.9]])
    gamma = dgp.regression()
    assert np.allclose(gamma(np.array([1, 0]), np.array([[1.0], [0.0]])), [0.9, 0.2])


def test_exact_enumeration():
    """
    Enumerated expectations of the outcome and of the average effect
    """
    assert abs(enumerate_expectation(dgp, lambda y, d, x: y[:, 0]) - 0.474) < 1e-12
    gamma = dgp.regression()
    effect = enumerate_expectation(dgp, lambda y, d, x: gamma(np.ones(len(d), dtype=int), x)
                                   - gamma(np.zeros(len(d), dtype=int), x))
    assert abs(effect - 0.38) < 1e-12
    assert population_expectation(dgp, lambda y, d, x: np.ones(len(d))) == pytest.approx(1.0)


def test_weighted_atoms_reproduce_expectations():
    """
    The atom table as a weighted dataset gives population means
    """
    atoms = dgp.as_dataset()
    assert abs(atoms.mean(atoms.outcomes[:, 0]) - 0.474) < 1e-12


def test_conditional_cdf_of_binary_outcome():
    """
    P(Y <= 0 | d, x) is one minus the cell mean
    """
    cdf = dgp.conditional_cdf(0.0)
    assert np.allclose(cdf(np.array([0, 1]), np.array([[0.0], [1.0]])), [0.8, 0.1])


def test_discrete_process_validation():
    """
    Probabilities must sum to one and every cell needs every label
    """
    with pytest.raises(ValidationError):
        DiscreteDgp([0.0, 1.0], [0, 1], None, [0.5, 0.6])
    with pytest.raises(ValidationError):
        DiscreteDgp([0.0, 1.0], [0, 1], [[0.0], [1.0]], [0.5, 0.5])
    with pytest.raises(EvaluationError):
        dgp.regression()(np.array([0]), np.array([[2.0]]))


def test_single_atom_process_without_covariates():
    """
    A single atom is a valid process
    """
    point = DiscreteDgp([2.0], [0], None, [1.0])
    assert point.cells.shape == (1, 0)
    assert point.regression()(np.array([0]), np.zeros((1, 0)))[0] == 2.0


def test_claimed_truth_is_checked():
    """
    Claimed regressions inconsistent with the atoms are rejected
    """
    with pytest.raises(ValidationError):
        DiscreteDgp([0.0, 1.0, 0.0, 1.0], [0, 0, 1, 1], None, [0.25] * 4,
                    true_regression=lambda d, x: np.full(len(d), 0.7))


def test_sampling_is_reproducible():
    """
    Samples are pure functions of the seed
    """
    first = generate_dataset(dgp, 50, 3)
    second = generate_dataset(dgp, 50, 3)
    assert np.array_equal(first.outcomes, second.outcomes)
    assert np.array_equal(first.treatment, second.treatment)
    assert set(first.treatment.tolist()) <= {0, 1}


def test_gaussian_process_closed_forms():
    """
    Marginal means and distribution functions of the Gaussian catalog process
    """
    assert gaussian.marginal_mean(1, 1) == -0.25
    assert gaussian.marginal_mean(0, 0) == 0.0
    assert abs(gaussian.marginal_cdf(0.5, 1) - 0.5) < 1e-12
    assert gaussian.marginal_cdf(0.0, 0) == pytest.approx(0.5)
    probabilities = gaussian.propensity().predict_proba(np.zeros((1, 2)))
    assert np.allclose(probabilities, [[0.5, 0.5]])


def test_catalog_rejects_unknown_names():
    """
    Unknown processes and parameters are validation errors
    """
    with pytest.raises(ValidationError):
        make_dgp('unknown')
    with pytest.raises(ValidationError):
        make_dgp('discrete_confounded', bogus=1)


def test_folds_are_balanced_and_reproducible():
    """
    Fold sizes differ by at most one and the plan depends only on the seed
    """
    plan = make_folds(23, 5, 7)
    assert sorted(plan.sizes.tolist()) == [4, 4, 5, 5, 5]
    assert np.array_equal(plan.assignment, make_folds(23, 5, 7).assignment)
    assert len(np.intersect1d(plan.fold(0), plan.training(0))) == 0
    assert len(plan.fold(0)) + len(plan.training(0)) == 23


def test_fold_plan_edge_cases():
    """
    L = n gives singleton folds; L = 1 or L > n are rejected
    """
    plan = make_folds(4, 4, 0)
    assert plan.sizes.tolist() == [1, 1, 1, 1]
    with pytest.raises(ValidationError):
        make_folds(4, 1, 0)
    with pytest.raises(ValidationError):
        make_folds(4, 5, 0)


def test_plan_without_splitting():
    """
    The full-sample plan trains and evaluates on every row
    """
    plan = FoldPlan.no_splitting(6)
    assert plan.nfolds == 1 and not plan.splitting
    assert plan.training(0).tolist() == list(range(6))
    assert plan.fold(0).tolist() == list(range(6))


def test_csv_ingestion(tmp_path):
    """
    Columns are bound by name, categorical columns expanded and string labels kept
    """
    path = write(tmp_path / 'data.csv', 'y,d,x,region\n1.5,treated,0.1,north\n2.5,control,0.2,south\n'
                                        '3.0,treated,0.3,north\n')
    data = load_csv(path, {'outcomes': 'y', 'treatment': 'd', 'covariates': ['x'], 'categorical': ['region'],
                           'labels': ['control', 'treated']})
    assert data.labels == ('control', 'treated')
    assert data.covariate_names == ['x', 'region=south']
    assert data.covariates[:, 1].tolist() == [0.0, 1.0, 0.0]
    assert data.outcomes[:, 0].tolist() == [1.5, 2.5, 3.0]


def test_csv_integer_labels(tmp_path):
    """
    Integer-valued treatment text becomes integer labels
    """
    path = write(tmp_path / 'data.csv', 'y,d\n1,0\n2,1\n')
    data = load_csv(path, {'outcomes': 'y', 'treatment': 'd'})
    assert data.labels == (0, 1)
    declared = load_csv(path, {'outcomes': 'y', 'treatment': 'd', 'labels': [0.0, 1.0, 2.0]})
    assert declared.labels == (0, 1, 2)
    assert declared.codes.tolist() == [0, 1]
    assert load_csv(path, {'outcomes': 'y', 'treatment': 'd', 'labels': ['0.0', '1']}).labels == (0, 1)


def test_csv_errors_name_row_and_column(tmp_path):
    """
    Non-numeric cells, missing columns and unknown labels are ingestion errors
    """
    path = write(tmp_path / 'data.csv', 'y,d\n1,0\nabc,1\n')
    with pytest.raises(IngestionError, match='row 2, column "y"'):
        load_csv(path, {'outcomes': 'y', 'treatment': 'd'})
    with pytest.raises(IngestionError, match='missing'):
        load_csv(path, {'outcomes': 'z', 'treatment': 'd'})
    path = write(tmp_path / 'labels.csv', 'y,d\n1,0\n2,5\n')
    with pytest.raises(IngestionError, match='unknown treatment label'):
        load_csv(path, {'outcomes': 'y', 'treatment': 'd', 'labels': [0, 1]})
