import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st

from manifold_unlearn import losses
from manifold_unlearn.nn import (
    DimensionError,
    EncoderSpec,
    NumericError,
    flatten,
    forward,
    gradient,
    init_params,
    load_params,
    param_count,
    representations,
    save_params,
    sgd_step,
    unflatten,
)

from conftest import grad_check, random_spec


class TestEncoderSpec:
    def test_rep_layer_with_head(self):
        spec = EncoderSpec([4, 8, 3, 2], ["relu", "tanh", "identity"], head=True)
        assert spec.rep_layer == 2
        assert spec.rep_dim == 3
        assert spec.n_classes == 2

    def test_rep_layer_without_head(self):
        spec = EncoderSpec([4, 8, 3], "tanh")
        assert spec.rep_dim == 3
        assert spec.activations == ("tanh", "tanh")
        assert spec.n_classes is None

    @pytest.mark.parametrize(
        "layers, acts, head",
        [
            ([4], [], False),
            ([4, 2], ["relu"], True),
            ([4, 0, 2], ["relu", "relu"], False),
            ([4, 2], ["softplus"], False),
            ([4, 3, 2], ["relu"], False),
        ],
    )
    def test_invalid(self, layers, acts, head):
        with pytest.raises(ValueError):
            EncoderSpec(layers, acts, head=head)

    def test_json_round_trip(self):
        spec = EncoderSpec([3, 5, 2, 4], ["relu", "tanh", "identity"], head=True, bias=False)
        assert EncoderSpec.from_json(spec.to_json()) == spec


class TestParameters:
    def test_param_count(self):
        assert param_count(EncoderSpec([3, 5, 2], "relu")) == 3 * 5 + 5 + 5 * 2 + 2
        assert param_count(EncoderSpec([3, 5, 2], "relu", bias=False)) == 25

    def test_init_range(self):
        spec = EncoderSpec([100, 10], "relu")
        w, b = unflatten(spec, init_params(spec, np.random.default_rng(0)))[0]
        assert np.abs(w).max() <= 0.1
        assert np.abs(b).max() <= 0.1

    def test_layout_is_layer_major_row_major(self):
        spec = EncoderSpec([2, 2], "identity")
        (w, b), = unflatten(spec, np.array([1.0, 2.0, 3.0, 4.0, 0.5, -1.0]))
        np.testing.assert_array_equal(w, [[1.0, 2.0], [3.0, 4.0]])
        np.testing.assert_array_equal(b, [0.5, -1.0])

    @given(st.integers(0, 2 ** 32 - 1))
    @settings(max_examples=30, deadline=None)
    def test_flatten_round_trip(self, seed):
        rng = np.random.default_rng(seed)
        spec = random_spec(rng, head=bool(rng.integers(2)))
        theta = rng.standard_normal(param_count(spec))
        np.testing.assert_array_equal(flatten(unflatten(spec, theta), spec), theta)

    def test_wrong_length(self):
        spec = EncoderSpec([2, 2], "identity")
        with pytest.raises(DimensionError):
            unflatten(spec, np.zeros(5))

    def test_save_load(self, tmp_path):
        theta = np.random.default_rng(0).standard_normal(17)
        save_params(tmp_path / "p.bin", theta)
        raw = (tmp_path / "p.bin").read_bytes()
        assert raw[:8] == (17).to_bytes(8, "little")
        np.testing.assert_array_equal(load_params(tmp_path / "p.bin"), theta)

    def test_load_truncated(self, tmp_path):
        save_params(tmp_path / "p.bin", np.ones(4))
        (tmp_path / "q.bin").write_bytes((tmp_path / "p.bin").read_bytes()[:-3])
        with pytest.raises(ValueError, match="header says 4"):
            load_params(tmp_path / "q.bin")

    def test_sgd_step(self):
        np.testing.assert_allclose(sgd_step(np.ones(3), np.arange(3.0), 0.5), [1.0, 0.5, 0.0])


class TestForward:
    def test_hand_computed(self):
        spec = EncoderSpec([2, 2], "identity")
        theta = np.array([1.0, 2.0, 3.0, 4.0, 0.5, -1.0])
        np.testing.assert_allclose(forward(spec, theta, [1.0, 1.0]).output, [4.5, 5.0])

    def test_relu_then_head(self):
        spec = EncoderSpec([1, 2, 1], ["relu", "identity"], head=True)
        # hidden weights [1, -1], no-op biases; head sums the hidden units
        theta = np.array([1.0, -1.0, 0.0, 0.0, 1.0, 1.0, 0.0])
        fr = forward(spec, theta, np.array([[2.0], [-3.0]]))
        np.testing.assert_allclose(fr.representation, [[2.0, 0.0], [0.0, 3.0]])
        np.testing.assert_allclose(fr.logits, [[2.0], [3.0]])

    def test_single_vs_batch(self):
        rng = np.random.default_rng(0)
        spec = random_spec(rng)
        theta = init_params(spec, rng)
        x = rng.standard_normal((4, spec.input_dim))
        batch = representations(spec, theta, x)
        for i in range(4):
            np.testing.assert_allclose(representations(spec, theta, x[i]), batch[i], rtol=1e-12, atol=1e-15)

    def test_dimension_error(self):
        spec = EncoderSpec([3, 2], "relu")
        with pytest.raises(DimensionError):
            forward(spec, np.zeros(param_count(spec)), np.zeros(4))

    def test_overflow_reports_layer(self):
        spec = EncoderSpec([1, 1, 1], ["identity", "identity"])
        theta = np.array([1e300, 0.0, 1e300, 0.0])
        with pytest.raises(NumericError) as info:
            forward(spec, theta, [1e10])
        assert info.value.layer == 1


class TestGradient:
    @pytest.mark.parametrize("seed", range(5))
    def test_cross_entropy(self, seed):
        rng = np.random.default_rng(seed)
        spec = random_spec(rng)
        theta = init_params(spec, rng)
        x = rng.standard_normal((5, spec.input_dim))
        y = rng.integers(0, spec.n_classes, size=5)
        assert grad_check(spec, theta, x, losses.cross_entropy(y)) < 1e-6

    @pytest.mark.parametrize("seed", range(5))
    def test_representation_mse_with_head(self, seed):
        rng = np.random.default_rng(seed)
        spec = random_spec(rng)
        theta = init_params(spec, rng)
        x = rng.standard_normal((4, spec.input_dim))
        target = rng.standard_normal((4, spec.rep_dim))
        loss = losses.combine(losses.representation_mse(target), losses.cross_entropy(np.zeros(4, dtype=int)))
        assert grad_check(spec, theta, x, loss) < 1e-6

    def test_relu_subgradient_at_zero(self):
        spec = EncoderSpec([1, 1], "relu", bias=False)
        value, g = gradient(spec, np.array([1.0]), np.array([[0.0]]), losses.output_mse(np.array([[1.0]])))
        assert value == 1.0
        np.testing.assert_array_equal(g, [0.0])

    def test_loss_ignoring_outputs_has_zero_gradient(self):
        spec = EncoderSpec([2, 3], "tanh")
        _, g = gradient(spec, np.ones(9), np.ones((2, 2)), lambda fr: (1.0, None, None))
        np.testing.assert_array_equal(g, np.zeros(9))
