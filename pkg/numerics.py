"""
Numerics Module
Dense complex linear algebra and Newton correction used by the path tracker.
"""

import logging
import warnings
from dataclasses import dataclass, field

import numpy as np
import scipy.linalg

logger = logging.getLogger(__name__)

PIVOT_TOLERANCE = 1e-14
SINGULARITY_THRESHOLD = 1e-8

ComplexMatrix = np.ndarray


class SingularMatrixError(np.linalg.LinAlgError):
    """A pivot fell below working precision"""


@dataclass(frozen=True)
class NewtonReport:
    final_point: np.ndarray
    residual_norm: float
    iterations: int
    converged: bool
    singular: bool = False
    residuals: tuple = field(default=())


def residual_norm(values):
    values = np.asarray(values)
    return float(np.max(np.abs(values))) if values.size else 0.0


def lu_solve(A, b, pivot_tol=PIVOT_TOLERANCE):
    """
    Solve A x = b with partial pivoting.

    Parameters:
    - A: square complex matrix
    - b: right-hand side of matching dimension
    - pivot_tol: smallest allowed |pivot| relative to the largest entry of A

    Returns:
    - solution vector x

    Raises:
    - SingularMatrixError when a pivot is below pivot_tol * max|A_ij|
    """
    A = np.asarray(A, dtype=complex)
    b = np.asarray(b, dtype=complex)
    if A.ndim != 2 or A.shape[0] != A.shape[1]:
        raise ValueError(f"lu_solve needs a square matrix, got shape {A.shape}")
    if b.shape[0] != A.shape[0]:
        raise ValueError(f"right-hand side has length {b.shape[0]}, expected {A.shape[0]}")
    if A.shape[0] == 0:
        return np.zeros(0, dtype=complex)
    if not np.all(np.isfinite(A)) or not np.all(np.isfinite(b)):
        raise SingularMatrixError("non-finite entries")

    scale = np.max(np.abs(A))
    if scale == 0:
        raise SingularMatrixError("zero matrix")
    with warnings.catch_warnings():
        warnings.simplefilter('ignore', scipy.linalg.LinAlgWarning)
        lu, piv = scipy.linalg.lu_factor(A, check_finite=False)
    pivots = np.abs(np.diag(lu))
    if pivots.min() < pivot_tol * scale:
        raise SingularMatrixError(f"pivot {pivots.min():.3e} below {pivot_tol:.0e} relative to {scale:.3e}")
    return scipy.linalg.lu_solve((lu, piv), b, check_finite=False)


def newton_correct(F_eval, J_eval, x0, tol, max_iter):
    """
    Newton's method x <- x - J(x)^-1 F(x) until ||F(x)||_inf <= tol.

    Parameters:
    - F_eval, J_eval: callables returning the residual vector and Jacobian at x
    - x0: starting point
    - tol: residual tolerance (infinity norm)
    - max_iter: maximal number of corrections

    Returns:
    - NewtonReport; a singular Jacobian stops the iteration with singular=True
    """
    if max_iter < 1:
        raise ValueError("max_iter must be at least 1")
    x = np.array(x0, dtype=complex)
    residuals = []
    iterations = 0
    while True:
        r = residual_norm(F_eval(x))
        residuals.append(r)
        if r <= tol:
            return NewtonReport(x, r, iterations, True, residuals=tuple(residuals))
        if iterations >= max_iter or not np.isfinite(r):
            return NewtonReport(x, r, iterations, False, residuals=tuple(residuals))
        try:
            dx = lu_solve(J_eval(x), F_eval(x))
        except SingularMatrixError:
            return NewtonReport(x, r, iterations, False, singular=True, residuals=tuple(residuals))
        x = x - dx
        iterations += 1


def singular_values(A):
    A = np.asarray(A, dtype=complex)
    if A.size == 0:
        return np.zeros(0)
    return scipy.linalg.svdvals(A, check_finite=False)


def smallest_singular_value(A):
    """sigma_min of a square matrix (0 for an exactly singular one)"""
    values = singular_values(A)
    return float(values[-1]) if values.size else 0.0


def is_numerically_singular(A, threshold=SINGULARITY_THRESHOLD):
    """sigma_min(A) < threshold * ||A||_2"""
    values = singular_values(A)
    if not values.size or not np.all(np.isfinite(values)) or values[0] == 0:
        return True
    return bool(values[-1] < threshold * values[0])
