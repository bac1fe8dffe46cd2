"""Predictive moments against explicit-inverse oracles."""

import numpy as np
import pytest
from numpy.testing import assert_allclose

from mgpch.errors import InvalidArgumentError, ModelStateError
from mgpch.kernels import Ar1Kernel, ZeroKernel, ar1_jitter, cross_vector, kernel_eval
from mgpch.model import (
    MgpchConfig,
    MgpchModel,
    _init_state,
    _make_context,
    fit,
    noise_posterior_given_q,
    predict,
    refresh_caches,
)
from mgpch.pyp import PypConfig


def manual_scalar_model():
    """One observation, one component, bound parameter pinned at 0.4."""
    kernel = Ar1Kernel(phi=0.5, sigma0_sq=0.75)
    config = MgpchConfig(
        pyp=PypConfig(truncation=1), noise_kernels=(kernel,), m_tilde=-9.0, max_iters=0
    )
    X = np.array([[0.0]])
    Y = np.array([[0.01]])
    ctx = _make_context(X, Y, config)
    state = _init_state(ctx)
    state.Q = np.array([[[0.4]]])
    m, S = noise_posterior_given_q(ctx.lam[0], state.Q[0, 0], state.R[:, 0], -9.0)
    state.m, state.S = m[None, None], S[None, None]
    refresh_caches(state, ctx)
    return MgpchModel(
        config=config,
        X=ctx.X,
        Y=ctx.Y,
        mean_kernels=ctx.mean_kernels,
        noise_kernels=ctx.noise_kernels,
        m_tilde=ctx.m_tilde,
        state=state,
        free_energy_trace=[0.0],
        trace_labels=["init"],
        _ctx=ctx,
    )


class TestScalarOracle:
    def test_noise_moments_match_hand_computation(self):
        model = manual_scalar_model()
        out = predict(model, np.array([1.0]))

        # marginal 0.75 / (1 - 0.25) = 1, correlation 0.5 at distance 1
        assert_allclose(out.noise_log_mean, 0.5 * (0.4 - 0.5) - 9.0, rtol=1e-12)
        jitter = ar1_jitter(model.noise_kernels[0])
        phi = 1.0 - 0.25 / ((1.0 + jitter) + 1.0 / 0.4)
        assert_allclose(out.noise_log_var, phi, rtol=1e-12)
        assert_allclose(out.component_noise_vars, np.exp(-9.05 + 0.5 * phi), rtol=1e-12)

    def test_zero_mean_kernel_gives_zero_mean(self):
        model = manual_scalar_model()
        out = predict(model, np.array([1.0]))
        assert out.mean == 0.0
        assert np.all(out.component_means == 0.0)
        assert np.all(out.component_mean_vars == 0.0)
        assert_allclose(out.weights, [1.0])
        assert_allclose(out.variance, out.component_noise_vars[0], rtol=1e-15)


def explicit_moments(model, xstar):
    """Direct solve of the predictive equations with dense inverses."""
    state = model.state
    X, Y = model.X, model.Y
    C, D, n = state.m.shape
    tau = np.empty((C, D))
    phi = np.empty((C, D))
    a = np.zeros((C, D))
    svar = np.zeros((C, D))
    for c in range(C):
        nk = model.noise_kernels[c]
        lam = np.array(
            [[kernel_eval(nk, X[i], X[j]) for j in range(n)] for i in range(n)]
        ) + ar1_jitter(nk) * np.eye(n)
        lam_cross = cross_vector(nk, X, xstar)
        lam_ss = kernel_eval(nk, xstar, xstar)
        mk = model.mean_kernels[c]
        for d in range(D):
            Q = state.Q[c, d]
            tau[c, d] = lam_cross @ (Q - 0.5) + model.m_tilde[c, d]
            phi[c, d] = lam_ss - lam_cross @ np.linalg.inv(lam + np.diag(1.0 / Q)) @ lam_cross
            if not isinstance(mk, ZeroKernel):
                K = np.array(
                    [[kernel_eval(mk, X[i], X[j]) for j in range(n)] for i in range(n)]
                ) + ar1_jitter(mk) * np.eye(n)
                k_cross = cross_vector(mk, X, xstar)
                B = state.R[:, c] * state.inv_noise[c, d]
                gain = np.linalg.inv(K + np.diag(1.0 / B))
                a[c, d] = k_cross @ gain @ Y[:, d]
                svar[c, d] = kernel_eval(mk, xstar, xstar) - k_cross @ gain @ k_cross
    psi = np.exp(tau + 0.5 * phi)
    weights = np.asarray(predict(model, xstar).weights)
    return weights @ a, (weights**2) @ (svar + psi), tau, phi, a, svar


@pytest.fixture(scope="module")
def fitted():
    rng = np.random.default_rng(4)
    X = np.sort(rng.standard_normal(20))[:, None]
    Y = 0.2 * rng.standard_normal((20, 1))
    config = MgpchConfig(
        pyp=PypConfig(truncation=1),
        mean_kernels=(Ar1Kernel(phi=0.6, sigma0_sq=0.3),),
        max_iters=12,
        seed=4,
    )
    return fit(X, Y, config)


class TestFittedModel:
    def test_matches_explicit_inverses(self, fitted):
        for xs in (np.array([0.3]), np.array([-2.0])):
            out = predict(fitted, xs)
            mean, var, tau, phi, a, svar = explicit_moments(fitted, xs)
            assert_allclose(out.noise_log_mean, tau, rtol=1e-9)
            assert_allclose(out.noise_log_var, phi, rtol=1e-7, atol=1e-12)
            assert_allclose(out.component_means, a, rtol=1e-9)
            assert_allclose(out.component_mean_vars, svar, rtol=1e-7, atol=1e-12)
            assert_allclose(out.mean, mean, rtol=1e-9)
            assert_allclose(out.variance, var, rtol=1e-7)

    def test_single_component_variance_decomposition(self, fitted):
        out = predict(fitted, np.array([0.0]))
        assert_allclose(out.weights, [1.0])
        assert_allclose(
            out.variance,
            out.component_mean_vars[0] + out.component_noise_vars[0],
            rtol=1e-15,
        )

    def test_method_wrapper(self, fitted):
        xs = np.array([0.1])
        direct = predict(fitted, xs)
        assert_allclose(fitted.predict(xs).mean, direct.mean)
        assert_allclose(fitted.predict(xs).variance, direct.variance)


class TestMixtureWeights:
    def test_weights_normalized_and_variance_positive(self):
        rng = np.random.default_rng(2)
        X = rng.standard_normal((30, 2))
        Y = 0.5 * rng.standard_normal((30, 2))
        model = fit(X, Y, MgpchConfig(pyp=PypConfig(truncation=4), max_iters=8))
        out = predict(model, np.array([0.2, -0.4]))
        assert_allclose(out.weights.sum(), 1.0, atol=1e-12)
        assert np.all(out.weights >= 0.0)
        assert np.all(out.variance > 0.0)
        assert out.mean.shape == (2,)
        assert out.component_noise_vars.shape == (4, 2)


class TestValidation:
    def test_unfitted_model_rejected(self):
        model = manual_scalar_model()
        model.state = None
        with pytest.raises(ModelStateError):
            predict(model, np.array([0.0]))

    def test_wrong_input_dimension_rejected(self):
        model = manual_scalar_model()
        with pytest.raises(InvalidArgumentError):
            predict(model, np.array([0.0, 1.0]))
