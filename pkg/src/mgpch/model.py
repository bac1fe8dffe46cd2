"""Mixture of Gaussian process regressions with log-Gaussian-process noise.

Each mixture component c pairs a latent mean function f_d^c (one per
output dimension d, often pinned to zero through the zero kernel) with
a latent log-variance function g_d^c, so the conditional variance
``exp(g_d^c(x))`` moves with the input.  Component membership follows a
truncated Pitman-Yor prior.  Inference is mean-field coordinate ascent:
Gaussian factors for f and g, Beta factors for the sticks, a Gamma
factor for the innovation parameter, and a categorical factor per
observation, all driven by a single free-energy objective.

The posterior over each g keeps the conjugate form

    S = (Lam^-1 + Q)^-1,
    m = Lam (Q - diag(r_c) / 2) 1 + m_tilde 1,

where Q is a diagonal free parameter of the bound.  The expected
noise precision used everywhere is ``E[exp(-g_n)] = exp(-m_n +
S_nn / 2)``, the reciprocal of the reported noise variance
``exp(m_n - S_nn / 2)``; both come from one accessor so every update
sees the same quantity.  Q itself is moved toward its stationary value
``q_nc * omega_n * E[exp(-g_n)] / 2`` with a backtracking safeguard
that only ever accepts free-energy improvements.
"""

import math
from dataclasses import dataclass, field, replace

import numpy as np
from scipy.special import betaln, gammaln

from .errors import (
    DivergedFitError,
    InvalidArgumentError,
    ModelStateError,
    NumericalDomainError,
)
from .kernels import Ar1Kernel, ZeroKernel, ar1_jitter, cross_vector, design_matrix, kernel_eval
from .linalg import cholesky_factor, cholesky_solve, logdet_from_factor, solve_lower
from .pyp import (
    InnovationPosterior,
    PypConfig,
    digamma,
    expected_log_weights,
    expected_weights,
    stick_log_moments,
    update_innovation_posterior,
    update_stick_posteriors,
)

__all__ = [
    "MgpchConfig",
    "VariationalState",
    "MgpchModel",
    "PredictiveMoments",
    "SimulationDraw",
    "expected_noise_variance",
    "noise_posterior_given_q",
    "latent_function_posterior",
    "update_noise_processes",
    "update_latent_functions",
    "update_responsibilities",
    "update_mixture_posteriors",
    "free_energy",
    "fit",
    "predict",
    "simulate",
]

LOG_2PI = np.log(2.0 * np.pi)

# Damping ladder for the safeguarded Q step; 0 falls back to the current state.
_BACKTRACK_STEPS = (1.0, 0.5, 0.25, 0.125, 0.0625, 0.03125)
_ACCEPT_SLACK = 1e-12


@dataclass
class MgpchConfig:
    """Model and fit settings.

    Parameters
    ----------
    pyp : PypConfig
        Mixture prior; its truncation fixes the component count C.
    mean_kernels : sequence of kernels or None
        Per-component kernel of the latent mean.  None means the zero
        kernel everywhere, which removes the mean update entirely.
    noise_kernels : sequence of Ar1Kernel or None
        Per-component kernel of the latent log variance.  None selects
        a data-driven default at fit time: correlation 1/2 at the
        median pairwise input distance and unit marginal variance.
    m_tilde : float, array or None
        Prior mean of the log variance, broadcast to shape (C, D).
        None uses the log of the empirical variance of each output.
    max_iters : int
        Coordinate-ascent iteration cap.
    tol : float
        Relative free-energy change that declares convergence.
    hyperopt_every : int
        Cadence of the quasi-Newton hyperparameter step over the kernel
        parameters and m_tilde; 0 disables it.
    seed : int
        Seed for the k-means responsibility initialization.
    """

    pyp: PypConfig = field(default_factory=PypConfig)
    mean_kernels: object = None
    noise_kernels: object = None
    m_tilde: object = None
    max_iters: int = 200
    tol: float = 1e-6
    hyperopt_every: int = 0
    seed: int = 0

    def __post_init__(self):
        if self.max_iters < 0:
            raise InvalidArgumentError(f"max_iters must be >= 0, got {self.max_iters}")
        if self.tol <= 0.0:
            raise InvalidArgumentError(f"tol must be positive, got {self.tol}")
        if self.hyperopt_every < 0:
            raise InvalidArgumentError("hyperopt_every must be >= 0")
        for name in ("mean_kernels", "noise_kernels"):
            kernels = getattr(self, name)
            if kernels is not None:
                kernels = tuple(kernels)
                if len(kernels) != self.pyp.truncation:
                    raise InvalidArgumentError(
                        f"{name} must have one entry per component "
                        f"({self.pyp.truncation}), got {len(kernels)}"
                    )
                setattr(self, name, kernels)
        if self.noise_kernels is not None:
            for k in self.noise_kernels:
                if not isinstance(k, Ar1Kernel):
                    raise InvalidArgumentError("noise kernels must be autoregressive")


@dataclass
class VariationalState:
    """Mean-field factors of the mixture posterior.

    Shapes use N observations, C components and D output dimensions.
    The trailing fields are derived caches that :func:`refresh_caches`
    rebuilds from the primal arrays.
    """

    R: np.ndarray  # (N, C) responsibilities
    mu: np.ndarray  # (C, D, N) latent mean posterior means
    Sigma: np.ndarray  # (C, D, N, N) latent mean posterior covariances
    m: np.ndarray  # (C, D, N) log-variance posterior means
    S: np.ndarray  # (C, D, N, N) log-variance posterior covariances
    Q: np.ndarray  # (C, D, N) diagonal bound parameters
    sticks: object
    innovation: object
    omega: np.ndarray = None  # (C, D, N) expected squared residuals
    inv_noise: np.ndarray = None  # (C, D, N) expected noise precisions
    g_kl: np.ndarray = None  # (C, D) KL of each q(g) from its prior
    f_kl: np.ndarray = None  # (C, D) KL of each q(f) from its prior
    noise_chol: object = None  # per (c, d) factor of I + sqrt(Q) Lam sqrt(Q)

    @property
    def n_components(self):
        return self.R.shape[1]


@dataclass
class _FitContext:
    """Resolved kernels and factorized design matrices for one dataset."""

    X: np.ndarray
    Y: np.ndarray
    config: MgpchConfig
    mean_kernels: tuple
    noise_kernels: tuple
    m_tilde: np.ndarray  # (C, D)
    lam: np.ndarray  # (C, N, N) jittered noise design matrices
    lam_chol: np.ndarray
    lam_logdet: np.ndarray
    K: object  # per component: jittered mean design matrix or None
    K_chol: object
    K_logdet: object


@dataclass
class MgpchModel:
    """Fitted mixture model.

    Carries the training design, the resolved per-component kernels and
    the variational state, plus the free-energy trace recorded after
    every coordinate update (``trace_labels`` names each entry).
    """

    config: MgpchConfig
    X: np.ndarray
    Y: np.ndarray
    mean_kernels: tuple
    noise_kernels: tuple
    m_tilde: np.ndarray
    state: VariationalState
    free_energy_trace: list
    trace_labels: list
    _ctx: object = field(default=None, repr=False, compare=False)

    def predict(self, xstar):
        return predict(self, xstar)


@dataclass(frozen=True)
class PredictiveMoments:
    """Mixture predictive moments at a single input.

    ``mean`` blends the per-component regression means with the
    posterior mean weights; ``variance`` blends the squared weights
    against the per-component mean uncertainty plus the predictive mean
    of the component noise variance.
    """

    mean: np.ndarray  # (D,)
    variance: np.ndarray  # (D,)
    weights: np.ndarray  # (C,)
    component_means: np.ndarray  # (C, D) regression means
    component_mean_vars: np.ndarray  # (C, D) regression variances
    noise_log_mean: np.ndarray  # (C, D) predictive mean of g
    noise_log_var: np.ndarray  # (C, D) predictive variance of g
    component_noise_vars: np.ndarray  # (C, D) predictive mean of exp(g)


@dataclass(frozen=True)
class SimulationDraw:
    """Forward draw from the generative model with feedback inputs."""

    X: np.ndarray  # (N, D) inputs; row n + 1 repeats output row n
    Y: np.ndarray  # (N, D) outputs
    variances: np.ndarray  # (N, D) realized noise variances
    assignments: np.ndarray  # (N,) component of each observation
    weights: np.ndarray  # (C,) sampled stick weights


def expected_noise_variance(m, S):
    """Expected noise variance ``exp(m_n - S_nn / 2)`` per observation.

    The reciprocal equals ``E[exp(-g_n)]`` under ``g ~ N(m, S)``; every
    update and the free energy divide by this same quantity.
    """
    m = np.asarray(m, dtype=float)
    S = np.asarray(S, dtype=float)
    diag = np.diagonal(S, axis1=-2, axis2=-1)
    return np.exp(m - 0.5 * diag)


def noise_posterior_given_q(lam, Q, qz, m_tilde):
    """Gaussian posterior of one log-variance process for a fixed bound parameter.

    Evaluates ``S = (Lam^-1 + Q)^-1`` and
    ``m = Lam (Q - diag(qz) / 2) 1 + m_tilde 1`` through the symmetric
    root identity, which stays exact when entries of Q are zero.

    Parameters
    ----------
    lam : ndarray, shape (N, N)
        Prior covariance of g (jitter included).
    Q : ndarray, shape (N,)
        Non-negative diagonal bound parameters.
    qz : ndarray, shape (N,)
        Responsibilities of this component.
    m_tilde : float
        Prior mean of g.

    Returns
    -------
    (m, S) : posterior mean vector and covariance matrix.
    """
    m, S, _ = _noise_posterior(lam, Q, qz, m_tilde)
    return m, S


def _noise_posterior(lam, Q, qz, m_tilde):
    n = lam.shape[0]
    if np.any(Q < 0.0):
        raise InvalidArgumentError("bound parameters Q must be non-negative")
    root = np.sqrt(Q)
    A = root[:, None] * lam * root[None, :] + np.eye(n)
    La = cholesky_factor(A, context="noise bound matrix")
    T = root[:, None] * lam
    S = lam - T.T @ cholesky_solve(La, T)
    S = 0.5 * (S + S.T)
    m = m_tilde + lam @ (Q - 0.5 * qz)
    return m, S, La


def latent_function_posterior(K, B, y):
    """Gaussian posterior of one latent mean function.

    Evaluates ``Sigma = (K^-1 + B)^-1`` and ``mu = Sigma B y`` with
    ``B = diag(b)`` through the symmetric root identity.

    Parameters
    ----------
    K : ndarray, shape (N, N)
        Prior covariance (jitter included).
    B : ndarray, shape (N,)
        Non-negative effective precisions ``q_nc * E[exp(-g_n)]``.
    y : ndarray, shape (N,)

    Returns
    -------
    (mu, Sigma)
    """
    mu, Sigma, _ = _latent_posterior(K, B, y)
    return mu, Sigma


def _latent_posterior(K, B, y):
    n = K.shape[0]
    if np.any(B < 0.0):
        raise InvalidArgumentError("effective precisions must be non-negative")
    root = np.sqrt(B)
    A = root[:, None] * K * root[None, :] + np.eye(n)
    La = cholesky_factor(A, context="mean bound matrix")
    T = root[:, None] * K
    Sigma = K - T.T @ cholesky_solve(La, T)
    Sigma = 0.5 * (Sigma + Sigma.T)
    mu = Sigma @ (B * y)
    return mu, Sigma, La


# ---------------------------------------------------------------------------
# context construction and initialization


def _validate_data(X, Y, min_points=1):
    X = np.asarray(X, dtype=float)
    Y = np.asarray(Y, dtype=float)
    if X.ndim == 1:
        X = X[:, None]
    if Y.ndim == 1:
        Y = Y[:, None]
    if X.ndim != 2 or Y.ndim != 2:
        raise InvalidArgumentError("X and Y must be two-dimensional arrays")
    if X.shape[0] != Y.shape[0]:
        raise InvalidArgumentError(
            f"X and Y must agree on N, got {X.shape[0]} and {Y.shape[0]}"
        )
    if X.shape[0] < min_points:
        raise InvalidArgumentError(f"at least {min_points} observations are required")
    if not (np.all(np.isfinite(X)) and np.all(np.isfinite(Y))):
        raise InvalidArgumentError("inputs must be finite")
    return X, Y


def _default_noise_kernel(X):
    diff = X[:, None, :] - X[None, :, :]
    dists = np.sqrt(np.sum(diff * diff, axis=-1))
    positive = dists[np.triu_indices(X.shape[0], k=1)]
    positive = positive[positive > 0.0]
    if positive.size == 0:
        phi = 0.5
    else:
        med = float(np.median(positive))
        # correlation 1/2 at the median distance; tiny input scales push
        # phi itself extremely close to zero, which is fine
        phi = float(np.clip(np.exp(np.log(0.5) / med), 1e-280, 1.0 - 1e-12))
    return Ar1Kernel(phi=phi, sigma0_sq=1.0 - phi**2)


def _resolve_m_tilde(m_tilde, Y, C):
    D = Y.shape[1]
    if m_tilde is None:
        var = np.var(Y, axis=0)
        if np.any(var <= 0.0):
            raise InvalidArgumentError("outputs with zero variance need an explicit m_tilde")
        return np.tile(np.log(var), (C, 1))
    arr = np.asarray(m_tilde, dtype=float)
    if arr.ndim == 0:
        return np.full((C, D), float(arr))
    if arr.shape != (C, D):
        raise InvalidArgumentError(f"m_tilde must broadcast to ({C}, {D}), got {arr.shape}")
    return arr.copy()


def _make_context(X, Y, config):
    X, Y = _validate_data(X, Y)
    C = config.pyp.truncation
    n = X.shape[0]
    mean_kernels = (
        tuple(config.mean_kernels) if config.mean_kernels is not None else (ZeroKernel(),) * C
    )
    if config.noise_kernels is not None:
        noise_kernels = tuple(config.noise_kernels)
    else:
        noise_kernels = (_default_noise_kernel(X),) * C
    m_tilde = _resolve_m_tilde(config.m_tilde, Y, C)

    lam = np.empty((C, n, n))
    lam_chol = np.empty_like(lam)
    lam_logdet = np.empty(C)
    K, K_chol, K_logdet = [], [], []
    eye = np.eye(n)
    for c in range(C):
        lam[c] = design_matrix(noise_kernels[c], X) + ar1_jitter(noise_kernels[c]) * eye
        lam_chol[c] = cholesky_factor(lam[c], context=f"noise design matrix {c}")
        lam_logdet[c] = logdet_from_factor(lam_chol[c])
        mk = mean_kernels[c]
        if isinstance(mk, ZeroKernel):
            K.append(None)
            K_chol.append(None)
            K_logdet.append(0.0)
        else:
            Kc = design_matrix(mk, X) + ar1_jitter(mk) * eye
            K.append(Kc)
            K_chol.append(cholesky_factor(Kc, context=f"mean design matrix {c}"))
            K_logdet.append(logdet_from_factor(K_chol[-1]))
    return _FitContext(
        X, Y, config, mean_kernels, noise_kernels, m_tilde, lam, lam_chol, lam_logdet, K, K_chol, K_logdet
    )


def _kmeans_labels(Z, C, rng):
    """Seeded k-means++ plus Lloyd iterations on standardized features."""
    n = Z.shape[0]
    std = Z.std(axis=0)
    std[std == 0.0] = 1.0
    W = (Z - Z.mean(axis=0)) / std
    if C >= n:
        return np.arange(n) % C
    centers = np.empty((C, W.shape[1]))
    centers[0] = W[rng.integers(n)]
    d2 = np.sum((W - centers[0]) ** 2, axis=1)
    for c in range(1, C):
        total = d2.sum()
        if total <= 0.0:
            centers[c:] = W[rng.integers(n, size=C - c)]
            break
        centers[c] = W[rng.choice(n, p=d2 / total)]
        d2 = np.minimum(d2, np.sum((W - centers[c]) ** 2, axis=1))
    labels = np.full(n, -1, dtype=int)
    for _sweep in range(100):
        dists = np.sum((W[:, None, :] - centers[None, :, :]) ** 2, axis=2)
        new_labels = np.argmin(dists, axis=1)
        if np.array_equal(new_labels, labels):
            break
        labels = new_labels
        for c in range(C):
            mask = labels == c
            if np.any(mask):
                centers[c] = W[mask].mean(axis=0)
    return labels


def _init_state(ctx):
    config = ctx.config
    n, D = ctx.Y.shape
    C = config.pyp.truncation
    rng = np.random.default_rng(config.seed)

    labels = _kmeans_labels(np.hstack([ctx.X, ctx.Y]), C, rng)
    R = np.full((n, C), 0.1 / C)
    R[np.arange(n), labels] += 0.9

    sticks = update_stick_posteriors(R, config.pyp.delta, config.pyp.eta1 / config.pyp.eta2, C)
    innovation = update_innovation_posterior(sticks, config.pyp.eta1, config.pyp.eta2)

    mu = np.zeros((C, D, n))
    Sigma = np.zeros((C, D, n, n))
    for c in range(C):
        if ctx.K[c] is not None:
            Sigma[c, :] = ctx.K[c]

    m = np.empty((C, D, n))
    S = np.empty((C, D, n, n))
    Q = np.empty((C, D, n))
    for c in range(C):
        for d in range(D):
            Q[c, d] = 0.5 * R[:, c]
            m[c, d], S[c, d], _ = _noise_posterior(ctx.lam[c], Q[c, d], R[:, c], ctx.m_tilde[c, d])

    state = VariationalState(R, mu, Sigma, m, S, Q, sticks, innovation)
    refresh_caches(state, ctx)
    return state


# ---------------------------------------------------------------------------
# cache maintenance


def _gauss_kl_from_arrays(mean_diff, cov, prior_chol, prior_logdet):
    """KL(N(mean, cov) || N(prior_mean, prior_cov)) from explicit arrays."""
    n = cov.shape[0]
    Ls = cholesky_factor(0.5 * (cov + cov.T), context="posterior covariance")
    trace = float(np.trace(cholesky_solve(prior_chol, cov)))
    w = solve_lower(prior_chol, mean_diff)
    quad = float(w @ w)
    return 0.5 * (trace + quad - n + prior_logdet - logdet_from_factor(Ls))


def refresh_caches(state, ctx):
    """Rebuild every derived cache from the primal state arrays."""
    C, D, n = state.m.shape
    state.inv_noise = 1.0 / expected_noise_variance(state.m, state.S)
    omega = np.empty((C, D, n))
    g_kl = np.empty((C, D))
    f_kl = np.zeros((C, D))
    noise_chol = [[None] * D for _ in range(C)]
    for c in range(C):
        for d in range(D):
            resid = ctx.Y[:, d] - state.mu[c, d]
            omega[c, d] = resid**2 + np.diagonal(state.Sigma[c, d])
            g_kl[c, d] = _gauss_kl_from_arrays(
                state.m[c, d] - ctx.m_tilde[c, d],
                state.S[c, d],
                ctx.lam_chol[c],
                ctx.lam_logdet[c],
            )
            if ctx.K[c] is not None:
                f_kl[c, d] = _gauss_kl_from_arrays(
                    state.mu[c, d], state.Sigma[c, d], ctx.K_chol[c], ctx.K_logdet[c]
                )
            root = np.sqrt(state.Q[c, d])
            A = root[:, None] * ctx.lam[c] * root[None, :] + np.eye(n)
            noise_chol[c][d] = cholesky_factor(A, context="noise bound matrix")
    state.omega = omega
    state.g_kl = g_kl
    state.f_kl = f_kl
    state.noise_chol = noise_chol


# ---------------------------------------------------------------------------
# coordinate updates


def update_noise_processes(state, ctx):
    """Safeguarded coordinate update of every log-variance posterior.

    For each (c, d) block the bound parameter Q is pulled toward its
    stationary value ``q_nc * omega_n * E[exp(-g_n)] / 2`` and the
    posterior is rebuilt from the closed forms.  Candidates are damped
    geometrically until the block's free-energy contribution does not
    decrease; if every candidate fails the block keeps its current
    state, so the step never lowers the objective.
    """
    C, D, n = state.m.shape
    for c in range(C):
        qz = state.R[:, c]
        for d in range(D):
            omega = state.omega[c, d]
            old_obj = -state.g_kl[c, d] - 0.5 * float(
                qz @ (state.m[c, d] + omega * state.inv_noise[c, d])
            )
            target = 0.5 * qz * omega * state.inv_noise[c, d]
            for lam_step in _BACKTRACK_STEPS:
                Q = (1.0 - lam_step) * state.Q[c, d] + lam_step * target
                m, S, La = _noise_posterior(ctx.lam[c], Q, qz, ctx.m_tilde[c, d])
                Linv = solve_lower(La, np.eye(n))
                trace = float(np.sum(Linv * Linv))
                t = Q - 0.5 * qz
                quad = float(t @ (ctx.lam[c] @ t))
                logdet_a = logdet_from_factor(La)
                kl = 0.5 * (trace + quad - n + logdet_a)
                inv_noise = np.exp(-m + 0.5 * np.diagonal(S))
                obj = -kl - 0.5 * float(qz @ (m + omega * inv_noise))
                if obj >= old_obj - _ACCEPT_SLACK * (1.0 + abs(old_obj)):
                    state.m[c, d] = m
                    state.S[c, d] = S
                    state.Q[c, d] = Q
                    state.g_kl[c, d] = kl
                    state.inv_noise[c, d] = inv_noise
                    state.noise_chol[c][d] = La
                    break
            # every candidate rejected: keep the current block unchanged


def update_latent_functions(state, ctx):
    """Closed-form update of every latent mean posterior.

    Components with the zero kernel are left untouched: their mean is
    identically zero and carries no free-energy terms.
    """
    C, D, n = state.m.shape
    for c in range(C):
        if ctx.K[c] is None:
            continue
        qz = state.R[:, c]
        for d in range(D):
            B = qz * state.inv_noise[c, d]
            mu, Sigma, La = _latent_posterior(ctx.K[c], B, ctx.Y[:, d])
            state.mu[c, d] = mu
            state.Sigma[c, d] = Sigma
            resid = ctx.Y[:, d] - mu
            state.omega[c, d] = resid**2 + np.diagonal(Sigma)
            Linv = solve_lower(La, np.eye(n))
            trace = float(np.sum(Linv * Linv))
            w = solve_lower(ctx.K_chol[c], mu)
            quad = float(w @ w)
            state.f_kl[c, d] = 0.5 * (trace + quad - n + logdet_from_factor(La))


def _responsibility_logits(state, ctx):
    """Unnormalized log responsibilities: prior log weights plus data fit."""
    n, C = state.R.shape
    elogw = expected_log_weights(state.sticks)
    fit_term = -0.5 * np.sum(
        state.omega * state.inv_noise + state.m, axis=1
    )  # (C, N), summed over D
    return elogw[None, :] + fit_term.T


def update_responsibilities(state, ctx):
    """Closed-form categorical update with log-sum-exp normalization."""
    logits = _responsibility_logits(state, ctx)
    if not np.all(np.isfinite(np.max(logits, axis=1))):
        raise NumericalDomainError("every component underflowed for some observation")
    shifted = logits - logits.max(axis=1, keepdims=True)
    w = np.exp(shifted)
    R = w / w.sum(axis=1, keepdims=True)
    state.R = R


def update_mixture_posteriors(state, ctx):
    """Stick Beta updates followed by the innovation Gamma update."""
    config = ctx.config.pyp
    state.sticks = update_stick_posteriors(
        state.R, config.delta, state.innovation.mean, config.truncation
    )
    state.innovation = update_innovation_posterior(state.sticks, config.eta1, config.eta2)


# ---------------------------------------------------------------------------
# free energy


def _alpha_term(innovation, eta1, eta2):
    a, b = innovation.eta1_hat, innovation.eta2_hat
    elog = innovation.log_mean
    emean = innovation.mean
    elogp = eta1 * np.log(eta2) - gammaln(eta1) + (eta1 - 1.0) * elog - eta2 * emean
    entropy = a - np.log(b) + gammaln(a) + (1.0 - a) * digamma(a)
    return float(elogp + entropy)


def _stick_term(sticks, innovation, delta):
    n_sticks = sticks.beta1.shape[0]
    if n_sticks == 0:
        return 0.0
    elogv, elog1mv = stick_log_moments(sticks)
    b1, b2 = sticks.beta1, sticks.beta2
    entropy = (
        betaln(b1, b2)
        - (b1 - 1.0) * digamma(b1)
        - (b2 - 1.0) * digamma(b2)
        + (b1 + b2 - 2.0) * digamma(b1 + b2)
    )
    c = np.arange(1, n_sticks + 1, dtype=float)
    cross = (
        innovation.log_mean
        - delta * elogv
        + (innovation.mean + delta * c - 1.0) * elog1mv
    )
    return float(np.sum(cross + entropy))


def _assignment_terms(state):
    elogw = expected_log_weights(state.sticks)
    R = state.R
    mixing = float(np.sum(R @ elogw))
    mask = R > 0.0
    entropy = -float(np.sum(R[mask] * np.log(R[mask])))
    return mixing + entropy


def _expected_log_lik(state, ctx):
    D = state.m.shape[1]
    inner = np.sum(state.omega * state.inv_noise + state.m, axis=1)  # (C, N)
    per_point = -0.5 * (D * LOG_2PI + inner)  # (C, N)
    return float(np.sum(state.R * per_point.T))


def free_energy(state, ctx):
    """Variational free energy of the current state.

    Sums the negated KL of every Gaussian factor from its prior, the
    innovation and stick terms in the form whose exact coordinate
    maximizers are the closed-form updates, the assignment cross
    entropy, and the expected log likelihood.
    """
    if state.g_kl is None:
        refresh_caches(state, ctx)
    config = ctx.config.pyp
    value = -float(np.sum(state.g_kl)) - float(np.sum(state.f_kl))
    value += _alpha_term(state.innovation, config.eta1, config.eta2)
    value += _stick_term(state.sticks, state.innovation, config.delta)
    value += _assignment_terms(state)
    value += _expected_log_lik(state, ctx)
    return value


# ---------------------------------------------------------------------------
# hyperparameter step


def _unconstrained_get(ctx):
    theta = []
    for k in ctx.noise_kernels:
        theta.append(np.log(k.phi / (1.0 - k.phi)))
        theta.append(np.log(k.sigma0_sq))
    theta.extend(np.ravel(ctx.m_tilde))
    return np.array(theta)


def _context_with_theta(ctx, theta):
    C = len(ctx.noise_kernels)
    D = ctx.m_tilde.shape[1]
    kernels = []
    for c in range(C):
        logit_phi, log_s0 = theta[2 * c], theta[2 * c + 1]
        phi = 1.0 / (1.0 + np.exp(-logit_phi))
        phi = float(np.clip(phi, 1e-12, 1.0 - 1e-12))
        kernels.append(Ar1Kernel(phi=phi, sigma0_sq=float(np.exp(log_s0))))
    m_tilde = theta[2 * C :].reshape(C, D)
    config = replace(ctx.config, noise_kernels=tuple(kernels), m_tilde=m_tilde)
    return _make_context(ctx.X, ctx.Y, config)


def _prior_fit_objective(state, ctx):
    """Free-energy terms that move with the kernel hyperparameters."""
    total = 0.0
    C, D = state.g_kl.shape
    for c in range(C):
        for d in range(D):
            total -= _gauss_kl_from_arrays(
                state.m[c, d] - ctx.m_tilde[c, d],
                state.S[c, d],
                ctx.lam_chol[c],
                ctx.lam_logdet[c],
            )
            if ctx.K[c] is not None:
                total -= _gauss_kl_from_arrays(
                    state.mu[c, d], state.Sigma[c, d], ctx.K_chol[c], ctx.K_logdet[c]
                )
    return total


def _hyperopt_step(state, ctx):
    """One quasi-Newton burst over kernel parameters and prior means.

    Maximizes the free energy with the variational factors frozen,
    using central finite differences; the result is applied only when
    it improves the objective, so the overall trace stays monotone.
    """
    from scipy.optimize import minimize

    theta0 = _unconstrained_get(ctx)
    base = _prior_fit_objective(state, ctx)

    def negative(theta):
        try:
            cand = _context_with_theta(ctx, theta)
            return -_prior_fit_objective(state, cand)
        except Exception:
            return 1e30

    step = 1e-5

    def grad(theta):
        g = np.empty_like(theta)
        for i in range(theta.size):
            plus = theta.copy()
            plus[i] += step
            minus = theta.copy()
            minus[i] -= step
            g[i] = (negative(plus) - negative(minus)) / (2.0 * step)
        return g

    result = minimize(
        negative,
        theta0,
        jac=grad,
        method="L-BFGS-B",
        options={"maxiter": 5, "maxcor": 10, "maxls": 20},
    )
    if result.fun < -base:
        return _context_with_theta(ctx, result.x)
    return ctx


# ---------------------------------------------------------------------------
# fit


def fit(X, Y, config=None):
    """Fit the mixture by free-energy coordinate ascent.

    Parameters
    ----------
    X : array_like, shape (N, p)
        Conditioning inputs; for return series, the previous day's
        return vector.
    Y : array_like, shape (N, D)
        Outputs; for return series, the next day's return vector.
    config : MgpchConfig, optional

    Returns
    -------
    MgpchModel
        Fitted model with ``free_energy_trace`` recording the objective
        after initialization and after every coordinate update.

    Raises
    ------
    DivergedFitError
        If the free energy becomes non-finite.
    """
    if config is None:
        config = MgpchConfig()
    _validate_data(X, Y, min_points=2)
    ctx = _make_context(X, Y, config)
    state = _init_state(ctx)

    trace = [free_energy(state, ctx)]
    labels = ["init"]
    if not math.isfinite(trace[0]):
        raise DivergedFitError("free energy non-finite at initialization", iteration=0)

    def record(label, iteration):
        value = free_energy(state, ctx)
        if not math.isfinite(value):
            raise DivergedFitError(f"free energy non-finite after {label}", iteration=iteration)
        trace.append(value)
        labels.append(label)
        return value

    previous = trace[0]
    for it in range(config.max_iters):
        update_noise_processes(state, ctx)
        record("noise", it)
        update_latent_functions(state, ctx)
        record("mean", it)
        update_responsibilities(state, ctx)
        record("responsibilities", it)
        update_mixture_posteriors(state, ctx)
        current = record("mixture", it)
        if config.hyperopt_every and (it + 1) % config.hyperopt_every == 0:
            new_ctx = _hyperopt_step(state, ctx)
            if new_ctx is not ctx:
                ctx = new_ctx
                refresh_caches(state, ctx)
            current = record("hyperparameters", it)
        if abs(current - previous) <= config.tol * max(abs(previous), abs(current), 1.0):
            break
        previous = current

    model = MgpchModel(
        config=ctx.config,
        X=ctx.X,
        Y=ctx.Y,
        mean_kernels=ctx.mean_kernels,
        noise_kernels=ctx.noise_kernels,
        m_tilde=ctx.m_tilde,
        state=state,
        free_energy_trace=trace,
        trace_labels=labels,
    )
    model._ctx = ctx
    return model


def _model_context(model):
    if model._ctx is None:
        config = replace(
            model.config,
            noise_kernels=model.noise_kernels,
            mean_kernels=model.mean_kernels,
            m_tilde=model.m_tilde,
        )
        model._ctx = _make_context(model.X, model.Y, config)
        if model.state is not None and model.state.g_kl is None:
            refresh_caches(model.state, model._ctx)
    return model._ctx


# ---------------------------------------------------------------------------
# prediction


def predict(model, xstar):
    """Mixture predictive moments at a single input point.

    Per component, the regression moments come from the noisy-kernel
    solve against the training targets, and the noise moments from the
    log-variance posterior evaluated at the new input; the mixture
    blends components with the posterior mean weights (squared for the
    variance).
    """
    if model.state is None:
        raise ModelStateError("predict requires a fitted model")
    state = model.state
    ctx = _model_context(model)
    if state.g_kl is None or state.noise_chol is None:
        refresh_caches(state, ctx)
    xstar = np.atleast_1d(np.asarray(xstar, dtype=float))
    if xstar.shape != (ctx.X.shape[1],):
        raise InvalidArgumentError(
            f"xstar must have dimension {ctx.X.shape[1]}, got shape {xstar.shape}"
        )
    C, D, n = state.m.shape
    weights = expected_weights(state.sticks)

    a = np.zeros((C, D))
    svar = np.zeros((C, D))
    tau = np.empty((C, D))
    phi_star = np.empty((C, D))
    for c in range(C):
        lam_cross = cross_vector(ctx.noise_kernels[c], ctx.X, xstar)
        lam_ss = kernel_eval(ctx.noise_kernels[c], xstar, xstar)
        mk = ctx.mean_kernels[c]
        if not isinstance(mk, ZeroKernel):
            k_cross = cross_vector(mk, ctx.X, xstar)
            k_ss = kernel_eval(mk, xstar, xstar)
        for d in range(D):
            tau[c, d] = float(lam_cross @ (state.Q[c, d] - 0.5)) + ctx.m_tilde[c, d]
            root = np.sqrt(state.Q[c, d])
            w = solve_lower(state.noise_chol[c][d], root * lam_cross)
            phi_star[c, d] = max(lam_ss - float(w @ w), 0.0)
            if not isinstance(mk, ZeroKernel):
                B = state.R[:, c] * state.inv_noise[c, d]
                rootB = np.sqrt(B)
                A = rootB[:, None] * ctx.K[c] * rootB[None, :] + np.eye(n)
                La = cholesky_factor(A, context="mean bound matrix")
                inner = rootB * cholesky_solve(La, rootB * ctx.Y[:, d])
                a[c, d] = float(k_cross @ inner)
                wk = solve_lower(La, rootB * k_cross)
                svar[c, d] = max(k_ss - float(wk @ wk), 0.0)
    psi = np.exp(tau + 0.5 * phi_star)
    mean = weights @ a
    variance = (weights**2) @ (svar + psi)
    return PredictiveMoments(
        mean=mean,
        variance=variance,
        weights=weights,
        component_means=a,
        component_mean_vars=svar,
        noise_log_mean=tau,
        noise_log_var=phi_star,
        component_noise_vars=psi,
    )


# ---------------------------------------------------------------------------
# simulation


class _LazyGpPath:
    """Sequentially conditioned draw of one Gaussian process path."""

    def __init__(self, kernel, mean):
        self.kernel = kernel
        self.mean = mean
        self.jitter = ar1_jitter(kernel) + 1e-12
        self.points = []
        self.L = np.empty((0, 0))
        self.u = np.empty(0)  # solve of the centered values against L

    def sample(self, x, rng):
        if isinstance(self.kernel, ZeroKernel):
            return 0.0
        k_self = kernel_eval(self.kernel, x, x) + self.jitter
        if not self.points:
            mean, var = self.mean, k_self
            w = np.empty(0)
        else:
            hist = np.array(self.points)
            k_cross = cross_vector(self.kernel, hist, np.atleast_1d(x))
            w = solve_lower(self.L, k_cross)
            mean = self.mean + float(w @ self.u)
            var = max(k_self - float(w @ w), self.jitter)
        value = mean + math.sqrt(var) * rng.standard_normal()
        # grow the Cholesky factor by one row; the new solve entry only
        # needs the conditional residual over the pivot
        k = self.L.shape[0]
        pivot = math.sqrt(var)
        newL = np.zeros((k + 1, k + 1))
        newL[:k, :k] = self.L
        newL[k, :k] = w
        newL[k, k] = pivot
        self.L = newL
        self.u = np.append(self.u, (value - mean) / pivot)
        self.points.append(np.atleast_1d(np.asarray(x, dtype=float)))
        return value


def simulate(config, n_points, n_dims, seed=0):
    """Forward draw from the generative model.

    Samples the innovation parameter, the stick weights, i.i.d.
    component assignments, and per-(component, dimension) paths of the
    latent mean and log-variance processes; outputs are Gaussian with
    variance ``exp(g)``.  Inputs feed back: row n + 1 of X equals row n
    of Y, starting from the origin, which mirrors how return series are
    paired for fitting.

    Returns
    -------
    SimulationDraw
    """
    if n_points < 1 or n_dims < 1:
        raise InvalidArgumentError("n_points and n_dims must be positive")
    C = config.pyp.truncation
    rng = np.random.default_rng(seed)
    delta = config.pyp.delta

    # tiny shapes can underflow the Gamma draw to exactly zero
    alpha = max(rng.gamma(config.pyp.eta1, 1.0 / config.pyp.eta2), 1e-300)
    v = np.ones(C)
    for c in range(C - 1):
        v[c] = rng.beta(1.0 - delta, alpha + delta * (c + 1))
    survival = np.concatenate([[1.0], np.cumprod(1.0 - v[:-1])])
    weights = v * survival

    mean_kernels = (
        tuple(config.mean_kernels) if config.mean_kernels is not None else (ZeroKernel(),) * C
    )
    if config.noise_kernels is not None:
        noise_kernels = tuple(config.noise_kernels)
    else:
        noise_kernels = (Ar1Kernel(phi=0.5, sigma0_sq=0.75),) * C
    if config.m_tilde is None:
        m_tilde = np.zeros((C, n_dims))
    else:
        m_tilde = np.asarray(config.m_tilde, dtype=float)
        if m_tilde.ndim == 0:
            m_tilde = np.full((C, n_dims), float(m_tilde))
        elif m_tilde.shape != (C, n_dims):
            raise InvalidArgumentError(
                f"m_tilde must broadcast to ({C}, {n_dims}), got {m_tilde.shape}"
            )

    g_paths = [
        [_LazyGpPath(noise_kernels[c], m_tilde[c, d]) for d in range(n_dims)] for c in range(C)
    ]
    f_paths = [[_LazyGpPath(mean_kernels[c], 0.0) for d in range(n_dims)] for c in range(C)]

    X = np.zeros((n_points, n_dims))
    Y = np.empty((n_points, n_dims))
    variances = np.empty((n_points, n_dims))
    assignments = rng.choice(C, size=n_points, p=weights)
    for n in range(n_points):
        c = assignments[n]
        x = X[n]
        for d in range(n_dims):
            g = g_paths[c][d].sample(x, rng)
            f = f_paths[c][d].sample(x, rng)
            variances[n, d] = np.exp(g)
            Y[n, d] = f + math.sqrt(variances[n, d]) * rng.standard_normal()
        if n + 1 < n_points:
            X[n + 1] = Y[n]
    return SimulationDraw(X, Y, variances, assignments.astype(int), weights)
