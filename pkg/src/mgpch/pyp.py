"""Truncated Pitman-Yor stick-breaking prior and its variational posterior.

Component weights are built from stick fractions v_c with prior
``v_c ~ Beta(1 - delta, alpha + delta * c)`` and

    weight_c = v_c * prod_{j < c} (1 - v_j),

truncated at level C by pinning the final fraction to one.  With
``delta = 0`` the construction reduces to a Dirichlet process.  The
innovation parameter alpha carries a Gamma(eta1, eta2) prior.  The
variational posterior keeps independent Beta factors for the C - 1
free sticks and a Gamma factor for alpha.
"""

from dataclasses import dataclass

import numpy as np

from .errors import InvalidArgumentError, NumericalDomainError

__all__ = [
    "PypConfig",
    "StickPosterior",
    "InnovationPosterior",
    "digamma",
    "update_stick_posteriors",
    "update_innovation_posterior",
    "stick_log_moments",
    "expected_log_weights",
    "expected_weights",
]

ROW_SUM_TOL = 1e-6


@dataclass(frozen=True)
class PypConfig:
    """Prior hyperparameters of the truncated Pitman-Yor process.

    Parameters
    ----------
    delta : float
        Discount in [0, 1).  Zero recovers the Dirichlet process.
    eta1, eta2 : float
        Shape and rate of the Gamma prior on the innovation parameter.
    truncation : int
        Number of mixture components C kept by the truncation.
    """

    delta: float = 0.25
    eta1: float = 1.0
    eta2: float = 1.0
    truncation: int = 10

    def __post_init__(self):
        if not (0.0 <= self.delta < 1.0):
            raise InvalidArgumentError(f"delta must lie in [0, 1), got {self.delta}")
        if self.eta1 <= 0.0 or self.eta2 <= 0.0:
            raise InvalidArgumentError(
                f"Gamma prior parameters must be positive, got ({self.eta1}, {self.eta2})"
            )
        if self.truncation < 1:
            raise InvalidArgumentError(f"truncation must be >= 1, got {self.truncation}")


@dataclass(frozen=True)
class StickPosterior:
    """Beta posteriors over the C - 1 free stick fractions."""

    beta1: np.ndarray
    beta2: np.ndarray

    def __post_init__(self):
        beta1 = np.atleast_1d(np.asarray(self.beta1, dtype=float))
        beta2 = np.atleast_1d(np.asarray(self.beta2, dtype=float))
        object.__setattr__(self, "beta1", beta1)
        object.__setattr__(self, "beta2", beta2)
        if beta1.shape != beta2.shape:
            raise InvalidArgumentError("beta1 and beta2 must have equal length")
        if np.any(beta1 <= 0.0) or np.any(beta2 <= 0.0):
            raise InvalidArgumentError("Beta parameters must be positive")

    @property
    def truncation(self):
        return self.beta1.shape[0] + 1


@dataclass(frozen=True)
class InnovationPosterior:
    """Gamma posterior over the innovation parameter."""

    eta1_hat: float
    eta2_hat: float

    def __post_init__(self):
        if self.eta1_hat <= 0.0 or self.eta2_hat <= 0.0:
            raise InvalidArgumentError("Gamma posterior parameters must be positive")

    @property
    def mean(self):
        return self.eta1_hat / self.eta2_hat

    @property
    def log_mean(self):
        """Expected log innovation under the Gamma posterior."""
        return float(digamma(self.eta1_hat)) - np.log(self.eta2_hat)


# Asymptotic expansion psi(x) ~ ln x - 1/(2x) - sum B_2n / (2n x^2n),
# applied after shifting the argument above 10 via psi(x) = psi(x+1) - 1/x.
_DIGAMMA_SHIFT = 10.0
_DIGAMMA_COEFFS = (
    -1.0 / 12.0,
    1.0 / 120.0,
    -1.0 / 252.0,
    1.0 / 240.0,
    -1.0 / 132.0,
    691.0 / 32760.0,
    -1.0 / 12.0,
)


def digamma(x):
    """Digamma function for positive arguments.

    Accurate to about 1e-12 over the positive reals; accepts scalars or
    arrays and preserves the input shape.
    """
    x = np.asarray(x, dtype=float)
    if np.any(x <= 0.0):
        raise InvalidArgumentError("digamma requires positive arguments")
    scalar = x.ndim == 0
    x = np.atleast_1d(x).copy()
    acc = np.zeros_like(x)
    while True:
        small = x < _DIGAMMA_SHIFT
        if not np.any(small):
            break
        acc[small] -= 1.0 / x[small]
        x[small] += 1.0
    inv2 = 1.0 / (x * x)
    series = np.zeros_like(x)
    power = inv2.copy()
    for coeff in _DIGAMMA_COEFFS:
        series += coeff * power
        power *= inv2
    out = acc + np.log(x) - 0.5 / x + series
    return float(out[0]) if scalar else out


def _check_responsibilities(R, truncation):
    R = np.asarray(R, dtype=float)
    if R.ndim != 2:
        raise InvalidArgumentError(f"responsibilities must be (N, C), got shape {R.shape}")
    if R.shape[1] != truncation:
        raise InvalidArgumentError(
            f"responsibility columns ({R.shape[1]}) must equal the truncation ({truncation})"
        )
    if R.shape[0] > 0:
        row_sums = R.sum(axis=1)
        if np.any(np.abs(row_sums - 1.0) > ROW_SUM_TOL):
            worst = int(np.argmax(np.abs(row_sums - 1.0)))
            raise InvalidArgumentError(
                f"responsibility row {worst} sums to {row_sums[worst]!r}, expected 1"
            )
        if np.any(R < -ROW_SUM_TOL):
            raise InvalidArgumentError("responsibilities must be non-negative")
    return R


def update_stick_posteriors(R, delta, alpha_mean, truncation):
    """Closed-form update of the stick Beta posteriors.

    Parameters
    ----------
    R : ndarray, shape (N, C)
        Responsibilities; rows must sum to one.
    delta : float
        Pitman-Yor discount.
    alpha_mean : float
        Current posterior mean of the innovation parameter.
    truncation : int
        Truncation level C.

    Returns
    -------
    StickPosterior
        For stick c (1-based), ``beta1 = 1 - delta + N_c`` and
        ``beta2 = alpha_mean + delta * c + T_c`` where N_c is the
        responsibility mass on component c and T_c the mass on all
        later components.
    """
    R = _check_responsibilities(R, truncation)
    if truncation == 1:
        return StickPosterior(np.empty(0), np.empty(0))
    mass = R.sum(axis=0)
    tail = np.concatenate([np.cumsum(mass[::-1])[::-1][1:], [0.0]])
    c = np.arange(1, truncation, dtype=float)
    beta1 = 1.0 - delta + mass[:-1]
    beta2 = alpha_mean + delta * c + tail[:-1]
    return StickPosterior(beta1, beta2)


def update_innovation_posterior(sticks, eta1, eta2):
    """Closed-form update of the Gamma posterior over the innovation parameter.

    The shape grows by one per free stick; the rate subtracts the
    expected log survivals ``E[log(1 - v_c)]``, each of which is
    non-positive, so the posterior rate always exceeds the prior rate.
    """
    if eta1 <= 0.0 or eta2 <= 0.0:
        raise InvalidArgumentError("prior parameters must be positive")
    n_sticks = sticks.beta1.shape[0]
    eta1_hat = eta1 + n_sticks
    if n_sticks == 0:
        return InnovationPosterior(eta1_hat, eta2)
    _, elog1mv = stick_log_moments(sticks)
    eta2_hat = eta2 - float(np.sum(elog1mv))
    if eta2_hat <= 0.0:
        raise NumericalDomainError(f"innovation posterior rate is non-positive: {eta2_hat}")
    return InnovationPosterior(eta1_hat, eta2_hat)


def stick_log_moments(sticks):
    """Expected log stick fractions and log survivals.

    Returns
    -------
    (ndarray, ndarray)
        ``E[log v_c]`` and ``E[log(1 - v_c)]`` for the C - 1 free sticks.
    """
    total = digamma(sticks.beta1 + sticks.beta2)
    return digamma(sticks.beta1) - total, digamma(sticks.beta2) - total


def expected_log_weights(sticks):
    """Expected log mixture weights under the stick posterior.

    The final component uses ``E[log v_C] = 0`` because the truncation
    pins its stick fraction to one.
    """
    n_sticks = sticks.beta1.shape[0]
    if n_sticks == 0:
        return np.zeros(1)
    elogv, elog1mv = stick_log_moments(sticks)
    prefix = np.concatenate([[0.0], np.cumsum(elog1mv)])
    logv = np.concatenate([elogv, [0.0]])
    return prefix + logv


def expected_weights(sticks):
    """Posterior mean mixture weights; sums to one by construction."""
    n_sticks = sticks.beta1.shape[0]
    if n_sticks == 0:
        return np.ones(1)
    v = sticks.beta1 / (sticks.beta1 + sticks.beta2)
    v = np.concatenate([v, [1.0]])
    survival = np.concatenate([[1.0], np.cumprod(1.0 - v[:-1])])
    return v * survival
