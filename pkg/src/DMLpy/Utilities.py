# DMLpy is distributed under the MIT license.
#
# Permission is hereby granted, free of charge, to any person obtaining a copy of this software and associated
# documentation files (the "Software"), to deal in the Software without restriction, including without limitation the
# rights to use, copy, modify, merge, publish, distribute, sublicense, and/or sell copies of the Software, and to permit
# persons to whom the Software is furnished to do so, subject to the following conditions:
#
# The above copyright notice and this permission notice shall be included in all copies or substantial portions of the
# Software.
#
# THE SOFTWARE IS PROVIDED "AS IS", WITHOUT WARRANTY OF ANY KIND, EXPRESS OR IMPLIED, INCLUDING BUT NOT LIMITED TO THE
# WARRANTIES OF MERCHANTABILITY, FITNESS FOR A PARTICULAR PURPOSE AND NON-INFRINGEMENT. IN NO EVENT SHALL THE AUTHORS OR
# COPYRIGHT HOLDERS BE LIABLE FOR ANY CLAIM, DAMAGES OR OTHER LIABILITY, WHETHER IN AN ACTION OF CONTRACT, TORT OR
# OTHERWISE, ARISING FROM, OUT OF OR IN CONNECTION WITH THE SOFTWARE OR THE USE OR OTHER DEALINGS IN THE SOFTWARE.

"""
Shared helpers: the error hierarchy, random-number streams, exact summation, symmetric factorizations, finite
differences, parallel execution and report serialization.
"""

import hashlib
import json
import math
from multiprocessing import Pool

import numpy as np
import scipy.linalg


########################################################################################################################
#                                                    Errors
########################################################################################################################

class ValidationError(ValueError):
    """
    Invalid arguments, configuration, data or preconditions. The command line maps it to exit code 2.
    """
    pass


class IngestionError(ValidationError):
    """
    A data file that cannot be bound to the declared schema. Messages name the row and/or column.
    """
    pass


class AuditError(ValidationError):
    """
    Nuisance fits whose recorded provenance does not match the fold plan.
    """
    pass


class NumericalError(ArithmeticError):
    """
    Numerical failure during estimation. The command line maps it to exit code 3.
    """
    pass


class RankError(NumericalError):
    pass


class ConvergenceError(NumericalError):
    """
    Iterative solver stopped before reaching its tolerance.

    **Attributes:**

    * **gradient_norm** (`float`):
        Norm of the gradient at the last iterate.
    """

    def __init__(self, message, gradient_norm=None):
        super().__init__(message)
        self.gradient_norm = gradient_norm


class EstimationError(NumericalError):
    pass


class DegenerateScoreError(NumericalError):
    pass


class FactorizationError(NumericalError):
    pass


class EvaluationError(NumericalError):
    pass


########################################################################################################################
#                                               Random streams
########################################################################################################################

def check_random_state(random_state):
    """
    Normalize a ``random_state`` input to a ``numpy.random.Generator`` (PCG64 bit generator).

    **Inputs:**

    * **random_state** (None or `int` or ``numpy.random.Generator`` object):
        Seed or generator. Integers are passed through ``numpy.random.SeedSequence`` so that 64-bit seeds are accepted.

    **Output/Returns:**

    * **generator** (``numpy.random.Generator``)
    """
    if random_state is None:
        return np.random.Generator(np.random.PCG64())
    if isinstance(random_state, (int, np.integer)) and not isinstance(random_state, bool):
        return np.random.Generator(np.random.PCG64(np.random.SeedSequence(int(random_state))))
    if isinstance(random_state, np.random.Generator):
        return random_state
    raise TypeError('DMLpy: random_state should be None, an integer or a numpy.random.Generator object')


def spawn_generator(master_seed, *indices):
    """
    Generator for the stream identified by ``(master_seed, *indices)``.

    The stream depends only on the integers given, never on which process or in which order it is requested.
    """
    entropy = [int(master_seed)] + [int(i) for i in indices]
    if any(e < 0 for e in entropy):
        raise ValidationError('DMLpy: seeds and stream indices must be nonnegative integers')
    return np.random.Generator(np.random.PCG64(np.random.SeedSequence(entropy)))


def spawn_seed(master_seed, *indices):
    """
    Derive a 64-bit integer seed for the stream ``(master_seed, *indices)``.
    """
    entropy = [int(master_seed)] + [int(i) for i in indices]
    state = np.random.SeedSequence(entropy).generate_state(2, dtype=np.uint32)
    return int(state[0]) | (int(state[1]) << 32)


########################################################################################################################
#                                                Linear algebra
########################################################################################################################

def compensated_sum(values):
    """
    Exactly rounded sum of a sequence of floats (``math.fsum``).
    """
    return math.fsum(np.asarray(values, dtype=float).ravel().tolist())


def _is_pd(input_matrix):
    try:
        _ = scipy.linalg.cholesky(input_matrix, lower=True)
        return True
    except np.linalg.LinAlgError:
        return False


def symmetric_factor(input_matrix, eigenvalue_floor=1e-12, tolerance=1e-10):
    """
    Compute a factor ``L`` with ``L @ L.T`` equal to a symmetric positive semidefinite matrix.

    A Cholesky factorization is tried first. When it fails the matrix is factored through its eigen-decomposition with
    the eigenvalues clipped at ``eigenvalue_floor``.

    **Inputs:**

    * **input_matrix** (`ndarray`):
        Symmetric matrix of ``shape=(p, p)``.

    * **eigenvalue_floor** (`float`):
        Lower clip for the eigenvalues in the fallback path.

        Default: 1e-12

    * **tolerance** (`float`):
        Eigenvalues below ``-tolerance`` mean the matrix is not positive semidefinite.

        Default: 1e-10

    **Output/Returns:**

    * **factor** (`ndarray`):
        Matrix of ``shape=(p, p)``.
    """
    input_matrix = np.atleast_2d(np.asarray(input_matrix, dtype=float))
    if input_matrix.shape[0] != input_matrix.shape[1]:
        raise ValidationError('DMLpy: the matrix to factor must be square')
    if not np.allclose(input_matrix, input_matrix.T, atol=1e-12):
        raise FactorizationError('DMLpy: the matrix to factor is not symmetric')
    if _is_pd(input_matrix):
        return scipy.linalg.cholesky(input_matrix, lower=True)
    eigenvalues, eigenvectors = scipy.linalg.eigh(input_matrix)
    if eigenvalues.min() < -tolerance:
        raise FactorizationError('DMLpy: the matrix is not positive semidefinite (smallest eigenvalue '
                                 '{:.3e})'.format(eigenvalues.min()))
    return eigenvectors * np.sqrt(np.maximum(eigenvalues, eigenvalue_floor))


########################################################################################################################
#                                             Finite differences
########################################################################################################################

def gradient(function=None, point=None, df_step=None):
    """
    This method estimates the gradient of a scalar function using a central finite difference scheme.

    **Inputs:**

    * **function** (`callable`):
        Function of a 1D `ndarray` returning a real number.

    * **point** (`ndarray`):
        The point to evaluate the gradient at, ``shape=(dimension, )``.

    * **df_step** (`float` or `list`):
        Finite difference step.

        Default: 0.001.

    **Output/Returns:**

    * **du_dj** (`ndarray`):
        Vector of first-order gradients.
    """
    if not callable(function):
        raise TypeError('DMLpy: a callable function must be provided.')
    point = np.atleast_1d(np.asarray(point, dtype=float))
    dimension = point.shape[0]

    if df_step is None:
        df_step = [0.001] * dimension
    elif isinstance(df_step, (float, int)):
        df_step = [float(df_step)] * dimension
    elif isinstance(df_step, (list, tuple)) and len(df_step) == 1:
        df_step = [df_step[0]] * dimension
    if len(df_step) != dimension:
        raise ValueError('DMLpy: df_step must be a float or a list with one step per dimension.')

    du_dj = np.zeros(dimension)
    for ii in range(dimension):
        u_plus, u_minus = point.copy(), point.copy()
        u_plus[ii] += df_step[ii]
        u_minus[ii] -= df_step[ii]
        du_dj[ii] = (function(u_plus) - function(u_minus)) / (2 * df_step[ii])
    return du_dj


########################################################################################################################
#                                           Parallel execution
########################################################################################################################

def run_parallel(function, arguments, workers=1):
    """
    Evaluate ``function(*args)`` for every tuple in ``arguments`` and return the results in input order.

    With ``workers > 1`` the calls are distributed over a ``multiprocessing.Pool``; ``function`` must then be a
    module-level function so that it can be pickled.
    """
    arguments = list(arguments)
    if not isinstance(workers, int) or workers < 1:
        raise ValidationError('DMLpy: workers must be an integer >= 1')
    if workers == 1 or len(arguments) <= 1:
        return [function(*args) for args in arguments]
    with Pool(processes=min(workers, len(arguments))) as pool:
        return pool.starmap(function, arguments)


########################################################################################################################
#                                               Serialization
########################################################################################################################

def to_serializable(obj):
    """
    Convert numpy containers and scalars to plain python objects that ``json`` can write.
    """
    if isinstance(obj, dict):
        return {str(key): to_serializable(value) for key, value in obj.items()}
    if isinstance(obj, (list, tuple)):
        return [to_serializable(value) for value in obj]
    if isinstance(obj, np.ndarray):
        return to_serializable(obj.tolist())
    if isinstance(obj, np.bool_):
        return bool(obj)
    if isinstance(obj, np.integer):
        return int(obj)
    if isinstance(obj, np.floating):
        return float(obj)
    return obj


def spec_hash(document):
    """
    SHA-256 of the canonical JSON form of ``document`` (sorted keys, no whitespace).
    """
    text = json.dumps(to_serializable(document), sort_keys=True, separators=(',', ':'))
    return hashlib.sha256(text.encode('utf-8')).hexdigest()
