"""Single-output Gaussian process regression with homoscedastic noise.

Serves as the conjugate building block that the mixture model extends:
exact posterior predictive moments and marginal likelihood under a
fixed kernel, with analytic evidence gradients for hyperparameter
checks.
"""

from dataclasses import dataclass, field

import numpy as np

from .errors import InvalidArgumentError
from .kernels import Ar1Kernel, ZeroKernel, ar1_jitter, cross_vector, design_matrix, kernel_eval
from .linalg import cholesky_factor, cholesky_solve, logdet_from_factor, solve_lower

__all__ = ["GpModel", "fit_gp", "gp_predict", "gp_log_evidence", "gp_log_evidence_gradient"]

LOG_2PI = np.log(2.0 * np.pi)


@dataclass
class GpModel:
    """Fitted Gaussian process regressor.

    Holds the training design, the lower Cholesky factor of
    ``K + jitter + noise_var * I`` and the precomputed solve against the
    targets, so prediction and evidence are cheap.
    """

    kernel: object
    noise_var: float
    X: np.ndarray
    y: np.ndarray
    chol: np.ndarray = field(repr=False)
    alpha: np.ndarray = field(repr=False)


def _gram(kernel, X):
    K = design_matrix(kernel, X)
    return K + ar1_jitter(kernel) * np.eye(X.shape[0])


def fit_gp(kernel, X, y, noise_var):
    """Factorize the noisy kernel matrix for later prediction.

    Parameters
    ----------
    kernel : ZeroKernel or Ar1Kernel
    X : ndarray, shape (N, p)
    y : ndarray, shape (N,)
    noise_var : float
        Observation noise variance, strictly positive.

    Returns
    -------
    GpModel
    """
    X = np.asarray(X, dtype=float)
    if X.ndim == 1:
        X = X[:, None]
    y = np.asarray(y, dtype=float)
    if noise_var <= 0.0:
        raise InvalidArgumentError(f"noise_var must be positive, got {noise_var}")
    if y.ndim != 1 or y.shape[0] != X.shape[0]:
        raise InvalidArgumentError(f"y must be (N,) matching X, got {y.shape} vs {X.shape}")
    if X.shape[0] == 0:
        raise InvalidArgumentError("at least one observation is required")
    if not (np.all(np.isfinite(X)) and np.all(np.isfinite(y))):
        raise InvalidArgumentError("inputs must be finite")
    A = _gram(kernel, X) + noise_var * np.eye(X.shape[0])
    L = cholesky_factor(A, context="noisy kernel matrix")
    return GpModel(kernel, float(noise_var), X, y, L, cholesky_solve(L, y))


def gp_predict(model, xstar):
    """Posterior predictive mean and variance at a single point.

    The variance includes the observation noise, so it never drops
    below ``noise_var``.
    """
    ks = cross_vector(model.kernel, model.X, xstar)
    kss = kernel_eval(model.kernel, xstar, xstar)
    mean = float(ks @ model.alpha)
    w = solve_lower(model.chol, ks)
    var = model.noise_var + kss - float(w @ w)
    return mean, var


def gp_log_evidence(model):
    """Log marginal likelihood of the training targets."""
    n = model.y.shape[0]
    quad = float(model.y @ model.alpha)
    return -0.5 * (n * LOG_2PI + logdet_from_factor(model.chol) + quad)


def gp_log_evidence_gradient(model):
    """Evidence gradients in unconstrained coordinates.

    Returns
    -------
    dict
        ``log_noise_var`` always; ``logit_phi`` and ``log_sigma0_sq``
        when the kernel is autoregressive.  Each entry is the derivative
        of :func:`gp_log_evidence` with respect to that coordinate.
    """
    n = model.y.shape[0]
    Ainv = cholesky_solve(model.chol, np.eye(n))
    alpha = model.alpha

    def directional(dA):
        return 0.5 * float(alpha @ dA @ alpha) - 0.5 * float(np.sum(Ainv * dA))

    grads = {"log_noise_var": directional(model.noise_var * np.eye(n))}
    if isinstance(model.kernel, Ar1Kernel):
        phi = model.kernel.phi
        Kj = _gram(model.kernel, model.X)
        grads["log_sigma0_sq"] = directional(Kj)
        K = design_matrix(model.kernel, model.X)
        diff = model.X[:, None, :] - model.X[None, :, :]
        D = np.sqrt(np.sum(diff * diff, axis=-1))
        scale = 2.0 * phi / (1.0 - phi**2)
        dK = K * (scale + D / phi)
        dJ = ar1_jitter(model.kernel) * scale * np.eye(n)
        grads["logit_phi"] = phi * (1.0 - phi) * directional(dK + dJ)
    return grads
