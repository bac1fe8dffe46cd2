"""Conditional pairwise dependence between output dimensions.

The volatility model treats outputs as conditionally independent; this
layer adds back pairwise dependence through Archimedean copulas whose
parameter varies with the input.  Each output pair gets a weight vector
over radial basis features of the input, trained by maximizing the
copula log likelihood of the pair's probability-integral transforms
under the fitted predictive marginals.  Predictive covariance follows
from integrating C(F_i, F_j) - F_i F_j over the two marginals.
"""

import math
import warnings
from dataclasses import dataclass

import numpy as np
from scipy.optimize import minimize
from scipy.special import ndtr

from .errors import DegenerateMarginalsError, InvalidArgumentError, QuadratureWarning
from .kernels import RbfKernel

__all__ = [
    "Clayton",
    "Frank",
    "Gumbel",
    "PairwiseCopulaModel",
    "family_from_name",
    "link_parameter",
    "copula_cdf",
    "copula_log_density",
    "marginal_cdf",
    "basis_features",
    "conditional_theta",
    "train_pairwise",
    "predictive_covariance",
]

# below this magnitude the Frank formulas lose precision; treated as independence
FRANK_INDEPENDENCE_BAND = 1e-6

MARGINAL_CLIP = 1e-10
QUADRATURE_NODES = 64
QUADRATURE_SPAN = 8.0

# unpenalized maximum likelihood lets the basis weights chase sampling
# noise point by point; a fixed quadratic penalty keeps the conditional
# parameter near its neutral value unless the data insist otherwise
WEIGHT_PENALTY = 30.0


@dataclass(frozen=True)
class Clayton:
    """Lower-tail-dependent family, parameter domain theta > 0."""


@dataclass(frozen=True)
class Frank:
    """Radially symmetric family, any real theta; 0 is independence."""


@dataclass(frozen=True)
class Gumbel:
    """Upper-tail-dependent family, parameter domain theta >= 1."""


_FAMILIES = {"clayton": Clayton, "frank": Frank, "gumbel": Gumbel}


def family_from_name(name):
    try:
        return _FAMILIES[name.lower()]()
    except KeyError:
        raise InvalidArgumentError(
            f"unknown copula family {name!r}, expected one of {sorted(_FAMILIES)}"
        ) from None


def link_parameter(family, gamma):
    """Map an unconstrained score into the family's parameter domain.

    Clayton uses exp, Frank the identity (its domain is the whole line
    up to the independence band) and Gumbel 1 + exp.
    """
    gamma = np.asarray(gamma, dtype=float)
    if isinstance(family, Clayton):
        out = np.exp(gamma)
    elif isinstance(family, Frank):
        out = gamma + 0.0
    elif isinstance(family, Gumbel):
        out = 1.0 + np.exp(gamma)
    else:
        raise InvalidArgumentError(f"unknown copula family {family!r}")
    return float(out) if out.ndim == 0 else out


def _check_theta(family, theta):
    theta = float(theta)
    if not math.isfinite(theta):
        raise InvalidArgumentError(f"theta must be finite, got {theta}")
    if isinstance(family, Clayton) and theta <= 0.0:
        raise InvalidArgumentError(f"Clayton requires theta > 0, got {theta}")
    if isinstance(family, Gumbel) and theta < 1.0:
        raise InvalidArgumentError(f"Gumbel requires theta >= 1, got {theta}")
    if not isinstance(family, (Clayton, Frank, Gumbel)):
        raise InvalidArgumentError(f"unknown copula family {family!r}")
    return theta


def _interior_cdf(family, theta, U, V):
    """Family cdf on strictly interior arguments; theta may be an array."""
    theta = np.broadcast_to(np.asarray(theta, dtype=float), U.shape)
    if isinstance(family, Clayton):
        a = -theta * np.log(U)
        b = -theta * np.log(V)
        M = np.maximum(a, b)
        inner = np.exp(a - M) + np.exp(b - M) - np.exp(-M)
        return np.exp(-(M + np.log(inner)) / theta)
    if isinstance(family, Frank):
        out = U * V
        live = np.abs(theta) >= FRANK_INDEPENDENCE_BAND
        if np.any(live):
            th, u, v = theta[live], U[live], V[live]
            g1 = np.expm1(-th)
            ratio = np.expm1(-th * u) * np.expm1(-th * v) / g1
            ratio = np.maximum(ratio, -1.0 + 1e-300)
            out[live] = -np.log1p(ratio) / th
        return out
    tu = -np.log(U)
    tv = -np.log(V)
    out = U * V
    live = theta > 1.0
    if np.any(live):
        th = theta[live]
        a, b = tu[live], tv[live]
        M = np.maximum(a, b)
        inner = (a / M) ** th + (b / M) ** th
        out[live] = np.exp(-M * inner ** (1.0 / th))
    return out


def _cdf_arrays(family, theta, U, V):
    U, V = np.broadcast_arrays(np.asarray(U, dtype=float), np.asarray(V, dtype=float))
    out = np.zeros(U.shape)
    at_zero = (U <= 0.0) | (V <= 0.0)
    top_u = ~at_zero & (U >= 1.0)
    top_v = ~at_zero & ~top_u & (V >= 1.0)
    out[top_u] = V[top_u]
    out[top_v] = U[top_v]
    mid = ~(at_zero | top_u | top_v)
    if np.any(mid):
        th = np.broadcast_to(np.asarray(theta, dtype=float), U.shape)[mid]
        out[mid] = _interior_cdf(family, th, U[mid], V[mid])
    return out


def _log_density_arrays(family, theta, U, V):
    """Family log density on strictly interior arguments; theta may be an array."""
    U, V = np.broadcast_arrays(np.asarray(U, dtype=float), np.asarray(V, dtype=float))
    theta = np.broadcast_to(np.asarray(theta, dtype=float), U.shape)
    lu = np.log(U)
    lv = np.log(V)
    if isinstance(family, Clayton):
        a = -theta * lu
        b = -theta * lv
        M = np.maximum(a, b)
        logsum = M + np.log(np.exp(a - M) + np.exp(b - M) - np.exp(-M))
        return np.log1p(theta) - (theta + 1.0) * (lu + lv) - (2.0 + 1.0 / theta) * logsum
    if isinstance(family, Frank):
        out = np.zeros(U.shape)
        live = np.abs(theta) >= FRANK_INDEPENDENCE_BAND
        if np.any(live):
            th, u, v = theta[live], U[live], V[live]
            g1 = np.expm1(-th)
            denom = g1 + np.expm1(-th * u) * np.expm1(-th * v)
            out[live] = (
                np.log(np.abs(th))
                + np.log(np.abs(g1))
                - th * (u + v)
                - 2.0 * np.log(np.abs(denom))
            )
        return out
    out = np.zeros(U.shape)
    live = theta > 1.0
    if np.any(live):
        th = theta[live]
        tu, tv = -lu[live], -lv[live]
        M = np.maximum(tu, tv)
        inner = (tu / M) ** th + (tv / M) ** th
        A = M * inner ** (1.0 / th)
        out[live] = (
            -A
            - lu[live]
            - lv[live]
            + (1.0 - 2.0 * th) * np.log(A)
            + (th - 1.0) * (np.log(tu) + np.log(tv))
            + np.log(A + th - 1.0)
        )
    return out


def copula_cdf(family, theta, u, v):
    """Copula value C(u, v) under the given family and parameter.

    Boundary conventions C(u, 0) = 0 and C(u, 1) = u are returned
    exactly; interior values use overflow-safe rearrangements of the
    standard Clayton, Frank and Gumbel formulas.
    """
    theta = _check_theta(family, theta)
    u, v = float(u), float(v)
    if not (0.0 <= u <= 1.0 and 0.0 <= v <= 1.0):
        raise InvalidArgumentError(f"u and v must lie in [0, 1], got ({u}, {v})")
    return float(_cdf_arrays(family, theta, u, v))


def copula_log_density(family, theta, u, v):
    """Log of the copula density at a strictly interior point."""
    theta = _check_theta(family, theta)
    u, v = float(u), float(v)
    if not (0.0 < u < 1.0 and 0.0 < v < 1.0):
        raise InvalidArgumentError(f"u and v must lie strictly inside (0, 1), got ({u}, {v})")
    return float(_log_density_arrays(family, theta, u, v))


def marginal_cdf(moments, d, y):
    """Gaussian cdf of output ``d`` under the predictive moments."""
    mean = float(np.asarray(moments.mean)[d])
    var = float(np.asarray(moments.variance)[d])
    return float(ndtr((float(y) - mean) / math.sqrt(var)))


@dataclass(frozen=True)
class PairwiseCopulaModel:
    """Trained conditional copula for one output pair.

    The parameter at input x is ``link(w @ h(x))`` where h collects the
    radial basis features against the stored basis points.
    """

    family: object
    basis_points: np.ndarray  # (I, p)
    w: np.ndarray  # (I,)
    basis_kernel: RbfKernel

    def __post_init__(self):
        if self.basis_points.ndim != 2 or self.basis_points.shape[0] < 1:
            raise InvalidArgumentError("at least one basis point is required")
        if self.w.shape != (self.basis_points.shape[0],) or not np.all(np.isfinite(self.w)):
            raise InvalidArgumentError("w must hold one finite weight per basis point")


def _feature_matrix(kernel, X, basis):
    d2 = np.sum((X[:, None, :] - basis[None, :, :]) ** 2, axis=-1)
    return np.exp(-0.5 * d2 / kernel.lengthscale**2)


def basis_features(pairmodel, x):
    """Basis feature vector h(x) of the trained pair model."""
    x = np.atleast_1d(np.asarray(x, dtype=float))
    if x.shape != (pairmodel.basis_points.shape[1],):
        raise InvalidArgumentError(
            f"x must have dimension {pairmodel.basis_points.shape[1]}, got shape {x.shape}"
        )
    return _feature_matrix(pairmodel.basis_kernel, x[None, :], pairmodel.basis_points)[0]


def conditional_theta(pairmodel, x):
    """Copula parameter at one input, through the family link."""
    return float(link_parameter(pairmodel.family, pairmodel.w @ basis_features(pairmodel, x)))


def _basis_lengthscale(basis):
    if basis.shape[0] < 2:
        return 1.0
    diff = basis[:, None, :] - basis[None, :, :]
    d = np.sqrt(np.sum(diff * diff, axis=-1))
    d = d[np.triu_indices(basis.shape[0], 1)]
    d = d[d > 0.0]
    return float(np.median(d)) if d.size else 1.0


def train_pairwise(pair, mgpch, data, family, basis_fraction=0.1):
    """Fit the conditional copula parameter for one output pair.

    Transforms the pair's outputs through their in-sample predictive
    marginals, then maximizes the summed copula log density, less a
    quadratic weight penalty, over the basis weights, starting from
    zero (the link image of the neutral score).  Basis points are taken
    at regular positions along the training sequence; the feature
    lengthscale is the median pairwise distance among them.
    """
    i, j = pair
    X = np.asarray(data[0], dtype=float)
    Y = np.asarray(data[1], dtype=float)
    if X.ndim != 2 or Y.ndim != 2 or X.shape[0] != Y.shape[0]:
        raise InvalidArgumentError("data must be matching (X, Y) matrices")
    if not 0 <= i < Y.shape[1] or not 0 <= j < Y.shape[1] or i == j:
        raise InvalidArgumentError(f"pair {pair!r} is not a distinct output pair")
    if not 0.0 < basis_fraction <= 1.0:
        raise InvalidArgumentError(f"basis_fraction must lie in (0, 1], got {basis_fraction}")
    _check_theta(family, link_parameter(family, 0.0))

    N = X.shape[0]
    n_basis = math.ceil(basis_fraction * N)
    idx = np.round(np.linspace(0, N - 1, n_basis)).astype(int)
    basis = X[idx]
    kernel = RbfKernel(_basis_lengthscale(basis))
    H = _feature_matrix(kernel, X, basis)

    u = np.empty(N)
    v = np.empty(N)
    for n in range(N):
        moments = mgpch.predict(X[n])
        u[n] = marginal_cdf(moments, i, Y[n, i])
        v[n] = marginal_cdf(moments, j, Y[n, j])
    if not (np.all(np.isfinite(u)) and np.all(np.isfinite(v))):
        raise DegenerateMarginalsError(
            "probability-integral transforms are non-finite; "
            "the predictive marginals are degenerate"
        )
    u = np.clip(u, MARGINAL_CLIP, 1.0 - MARGINAL_CLIP)
    v = np.clip(v, MARGINAL_CLIP, 1.0 - MARGINAL_CLIP)

    def negative_likelihood(w):
        theta = link_parameter(family, H @ w)
        val = -float(np.sum(_log_density_arrays(family, theta, u, v)))
        val += 0.5 * WEIGHT_PENALTY * float(w @ w)
        return val if math.isfinite(val) else 1e300

    w0 = np.zeros(n_basis)
    base = negative_likelihood(w0)
    if not base < 1e300:
        raise DegenerateMarginalsError(
            "copula objective is non-finite at zero weights; "
            "the predictive marginals are degenerate"
        )
    # the Frank link passes through the independence band at w = 0, where
    # the objective is locally flat; a wide difference step sees past it
    result = minimize(
        negative_likelihood,
        w0,
        method="L-BFGS-B",
        options={"maxiter": 200, "eps": 1e-4},
    )
    w = result.x if negative_likelihood(result.x) <= base else w0
    return PairwiseCopulaModel(family=family, basis_points=basis, w=w, basis_kernel=kernel)


def predictive_covariance(pairmodel, moments, pair, xstar):
    """Predictive covariance of one output pair at a single input.

    Integrates C(F_i(k), F_j(k')) - F_i(k) F_j(k') over both marginals
    by Gauss-Legendre quadrature spanning mean +/- 8 std each; the node
    count is doubled once as a convergence check and a warning is
    attached when the two estimates disagree.
    """
    i, j = pair
    mean = np.asarray(moments.mean, dtype=float)
    var = np.asarray(moments.variance, dtype=float)
    if not 0 <= i < mean.size or not 0 <= j < mean.size or i == j:
        raise InvalidArgumentError(f"pair {pair!r} is not a distinct output pair")
    if not (var[i] > 0.0 and var[j] > 0.0):
        raise InvalidArgumentError("predictive variances must be positive")
    theta = conditional_theta(pairmodel, xstar)
    scale = QUADRATURE_SPAN**2 * math.sqrt(var[i] * var[j])
    positive = isinstance(pairmodel.family, (Clayton, Gumbel))

    def estimate(nodes):
        t, wq = np.polynomial.legendre.leggauss(nodes)
        F = ndtr(QUADRATURE_SPAN * t)
        gap = _cdf_arrays(pairmodel.family, theta, F[:, None], F[None, :]) - F[:, None] * F[None, :]
        if positive:
            gap = np.maximum(gap, 0.0)
        return scale * float(wq @ gap @ wq)

    coarse = estimate(QUADRATURE_NODES)
    fine = estimate(2 * QUADRATURE_NODES)
    # stable message so repeated triggers from one call site are deduplicated
    if abs(fine - coarse) > 1e-6 * max(1.0, abs(fine)):
        warnings.warn(
            "covariance quadrature still moving after doubling nodes",
            QuadratureWarning,
            stacklevel=2,
        )
    return fine
