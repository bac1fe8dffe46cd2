"""Model persistence round trips."""

import json

import numpy as np
import pytest
from numpy.testing import assert_allclose

from mgpch.copula import family_from_name, train_pairwise
from mgpch.errors import FormatError, InvalidArgumentError
from mgpch.kernels import Ar1Kernel
from mgpch.model import MgpchConfig, MgpchModel, fit, predict
from mgpch.pyp import PypConfig
from mgpch.serialize import load_model, save_model


@pytest.fixture(scope="module")
def fitted():
    rng = np.random.default_rng(0)
    X = rng.normal(size=(24, 1))
    Y = 0.02 * rng.standard_normal((24, 2))
    config = MgpchConfig(
        pyp=PypConfig(truncation=2),
        mean_kernels=[Ar1Kernel(0.5, 0.4)] * 2,
        max_iters=10,
        seed=1,
    )
    model = fit(X, Y, config)
    copulas = {(0, 1): train_pairwise((0, 1), model, (X, Y), family_from_name("clayton"))}
    return model, copulas


class TestRoundTrip:
    def test_model_round_trip_preserves_predictions_exactly(self, fitted, tmp_path):
        model, _ = fitted
        path = tmp_path / "model.json"
        save_model(path, model)
        loaded, pairwise = load_model(path)
        assert pairwise == {}
        assert loaded.config == model.config
        assert np.array_equal(loaded.X, model.X)
        assert np.array_equal(loaded.state.Q, model.state.Q)
        assert loaded.free_energy_trace == model.free_energy_trace
        assert loaded.trace_labels == model.trace_labels
        xstar = np.array([0.3])
        a = predict(model, xstar)
        b = predict(loaded, xstar)
        # caches are rebuilt on load, so agreement is to rounding, not bits
        assert_allclose(b.mean, a.mean, rtol=1e-13, atol=1e-16)
        assert_allclose(b.variance, a.variance, rtol=1e-13)
        again, _ = load_model(path)
        c = predict(again, xstar)
        assert c.mean.tolist() == b.mean.tolist()
        assert c.variance.tolist() == b.variance.tolist()

    def test_copulas_travel_in_the_same_container(self, fitted, tmp_path):
        model, copulas = fitted
        path = tmp_path / "model.json"
        save_model(path, model, pairwise=copulas)
        loaded, pairwise = load_model(path)
        assert set(pairwise) == {(0, 1)}
        original = copulas[(0, 1)]
        restored = pairwise[(0, 1)]
        assert restored.family == original.family
        assert np.array_equal(restored.w, original.w)
        assert np.array_equal(restored.basis_points, original.basis_points)
        assert restored.basis_kernel == original.basis_kernel

    def test_save_is_byte_stable(self, fitted, tmp_path):
        model, copulas = fitted
        first = tmp_path / "a.json"
        second = tmp_path / "b.json"
        save_model(first, model, pairwise=copulas)
        save_model(second, model, pairwise=copulas)
        assert first.read_bytes() == second.read_bytes()
        reloaded, pairwise = load_model(first)
        third = tmp_path / "c.json"
        save_model(third, reloaded, pairwise=pairwise)
        assert third.read_bytes() == first.read_bytes()

    def test_unfitted_model_rejected(self, fitted, tmp_path):
        model, _ = fitted
        bare = MgpchModel(
            config=model.config,
            X=model.X,
            Y=model.Y,
            mean_kernels=model.mean_kernels,
            noise_kernels=model.noise_kernels,
            m_tilde=model.m_tilde,
            state=None,
            free_energy_trace=[],
            trace_labels=[],
        )
        with pytest.raises(InvalidArgumentError):
            save_model(tmp_path / "x.json", bare)


class TestSchema:
    def test_rejects_other_json(self, tmp_path):
        path = tmp_path / "x.json"
        path.write_text('{"hello": 1}')
        with pytest.raises(FormatError):
            load_model(path)

    def test_rejects_unknown_version(self, fitted, tmp_path):
        model, _ = fitted
        path = tmp_path / "x.json"
        save_model(path, model)
        payload = json.loads(path.read_text())
        payload["version"] = 999
        path.write_text(json.dumps(payload))
        with pytest.raises(FormatError, match="version"):
            load_model(path)

    def test_rejects_broken_json_with_line(self, tmp_path):
        path = tmp_path / "x.json"
        path.write_text('{"format": "mgpch-model",\n  broken\n}')
        with pytest.raises(FormatError) as info:
            load_model(path)
        assert info.value.line == 2

    def test_missing_field_is_a_format_error(self, fitted, tmp_path):
        model, _ = fitted
        path = tmp_path / "x.json"
        save_model(path, model)
        payload = json.loads(path.read_text())
        del payload["state"]
        path.write_text(json.dumps(payload))
        with pytest.raises(FormatError, match="state"):
            load_model(path)
