"""Cholesky-based helpers shared by the regression modules.

All positive definite solves in the package go through these wrappers;
nothing forms an explicit matrix inverse of a covariance.
"""

import numpy as np
from scipy.linalg import cho_solve, cholesky, solve_triangular

from .errors import IllConditionedError

__all__ = [
    "cholesky_factor",
    "cholesky_solve",
    "solve_lower",
    "logdet_from_factor",
]


def cholesky_factor(A, context=""):
    """Lower Cholesky factor of a symmetric positive definite matrix.

    Raises
    ------
    IllConditionedError
        If the factorization fails.
    """
    try:
        return cholesky(A, lower=True)
    except np.linalg.LinAlgError as exc:
        label = context or "matrix"
        raise IllConditionedError(f"Cholesky factorization of {label} failed: {exc}") from exc


def cholesky_solve(L, b):
    """Solve ``A x = b`` given the lower factor of A."""
    return cho_solve((L, True), b)


def solve_lower(L, b):
    """Solve ``L x = b`` for lower triangular L."""
    return solve_triangular(L, b, lower=True)


def logdet_from_factor(L):
    """Log determinant of A from its lower Cholesky factor."""
    return 2.0 * float(np.sum(np.log(np.diag(L))))
