"""
Unit tests for the dense network module
"""

import math

import numpy as np
import pytest

from src.exceptions import ConfigurationError, LayoutQueryError, ShapeError
from src.tensor_nn import (
    BIAS,
    WEIGHT,
    Batch,
    LayerSpec,
    axpy,
    build_layer_specs,
    forward,
    init_model,
    last_layer_vector,
    loss_and_grad,
    make_layout,
    predict,
    sgd_step,
    slice_segment,
    validate_layer_specs,
)
from tests.conftest import flat_vector


def _relative_error(analytic: float, numeric: float) -> float:
    return abs(analytic - numeric) / max(abs(analytic), abs(numeric), 1e-6)


class TestLayerSpecs:
    """Test cases for layer specs and layouts"""

    def test_build_layer_specs_chains(self):
        """Hidden layers use relu, the output layer identity"""
        specs = build_layer_specs([784, 128, 64, 10])
        assert [(s.input_dim, s.output_dim) for s in specs] == [(784, 128), (128, 64), (64, 10)]
        assert [s.activation for s in specs] == ["relu", "relu", "identity"]

    def test_non_chaining_layers_rejected(self):
        """Layer output must feed the next layer's input"""
        specs = [LayerSpec(4, 5, "relu"), LayerSpec(6, 3, "identity")]
        with pytest.raises(ConfigurationError):
            validate_layer_specs(specs)

    def test_wrong_class_count_rejected(self):
        """Final width must match the number of classes"""
        with pytest.raises(ConfigurationError):
            validate_layer_specs(build_layer_specs([4, 5, 3]), num_classes=10)

    def test_invalid_activation_rejected(self):
        with pytest.raises(ConfigurationError):
            LayerSpec(2, 2, "tanh")

    def test_layout_offsets_are_contiguous(self):
        """Weight then bias per layer, no gaps"""
        layout = make_layout(build_layer_specs([2, 3, 2]))
        assert [(s.layer, s.kind, s.offset, s.length) for s in layout] == [
            (0, WEIGHT, 0, 6),
            (0, BIAS, 6, 3),
            (1, WEIGHT, 9, 6),
            (1, BIAS, 15, 2),
        ]


class TestInitModel:
    """Test cases for parameter initialization"""

    def test_parameter_count(self):
        """MNIST model 784-128-64-10 has 109,386 parameters"""
        params = init_model(build_layer_specs([784, 128, 64, 10]), seed=0)
        assert len(params) == 784 * 128 + 128 + 128 * 64 + 64 + 64 * 10 + 10

    def test_biases_zero_and_weights_bounded(self, small_spec):
        """Biases start at zero, weights inside the Glorot bound"""
        params = init_model(small_spec, seed=1)
        for k, spec in enumerate(small_spec):
            limit = math.sqrt(6.0 / (spec.input_dim + spec.output_dim))
            assert np.all(slice_segment(params, k, BIAS) == 0.0)
            assert np.all(np.abs(slice_segment(params, k, WEIGHT)) <= limit)

    def test_same_seed_same_model(self, small_spec):
        """Initialization is deterministic per seed"""
        a = init_model(small_spec, seed=5)
        b = init_model(small_spec, seed=5)
        c = init_model(small_spec, seed=6)
        assert np.array_equal(a.values, b.values)
        assert not np.array_equal(a.values, c.values)


class TestSegments:
    """Test cases for segment queries"""

    def test_last_layer_vector(self, small_model):
        """Negative layer index selects from the output"""
        assert np.array_equal(last_layer_vector(small_model), slice_segment(small_model, 1, WEIGHT))
        with_bias = last_layer_vector(small_model, include_bias=True)
        assert with_bias.size == 5 * 3 + 3

    def test_missing_segment_raises(self, small_model):
        with pytest.raises(LayoutQueryError):
            slice_segment(small_model, 5, WEIGHT)

    def test_slice_is_a_copy(self, small_model):
        """Mutating a slice leaves the parameters untouched"""
        before = small_model.values.copy()
        piece = slice_segment(small_model, 0)
        piece[:] = 99.0
        assert np.array_equal(small_model.values, before)


class TestForwardAndGradient:
    """Test cases for forward pass and backpropagation"""

    def test_zero_model_loss_is_log_classes(self, small_model):
        """All-zero weights give uniform softmax, loss log(C)"""
        zeros = small_model.with_values(np.zeros(len(small_model)))
        batch = Batch(np.ones((4, 4)), np.array([0, 1, 2, 0]))
        loss, grad = loss_and_grad(zeros, batch)
        assert loss == pytest.approx(math.log(3))
        assert grad.layout == zeros.layout

    def test_batch_dim_mismatch(self, small_model):
        with pytest.raises(ShapeError):
            forward(small_model, Batch(np.ones((2, 7)), np.array([0, 1])))

    def test_label_out_of_range(self, small_model):
        with pytest.raises(ShapeError):
            loss_and_grad(small_model, Batch(np.ones((1, 4)), np.array([3])))

    @pytest.mark.parametrize("trial", range(20))
    def test_gradient_matches_finite_differences(self, trial):
        """Analytic gradient agrees with central differences to 1e-4"""
        rng = np.random.default_rng(100 + trial)
        dims = [int(rng.integers(2, 5)), int(rng.integers(2, 6)), int(rng.integers(2, 4))]
        params = init_model(build_layer_specs(dims), seed=trial)
        # random non-zero biases avoid dead units sitting exactly on the kink
        params = params.with_values(params.values + 0.1 * rng.standard_normal(len(params)))
        batch = Batch(rng.standard_normal((6, dims[0])), rng.integers(0, dims[-1], size=6))

        _, grad = loss_and_grad(params, batch)
        step = 1e-5
        for i in range(len(params)):
            bumped_up = params.values.copy()
            bumped_down = params.values.copy()
            bumped_up[i] += step
            bumped_down[i] -= step
            loss_up, _ = loss_and_grad(params.with_values(bumped_up), batch)
            loss_down, _ = loss_and_grad(params.with_values(bumped_down), batch)
            numeric = (loss_up - loss_down) / (2 * step)
            assert _relative_error(grad.values[i], numeric) <= 1e-4

    def test_sgd_step_reduces_loss_on_fixed_batch(self, small_model):
        """Repeated small steps on one batch lower its loss"""
        rng = np.random.default_rng(0)
        batch = Batch(rng.standard_normal((16, 4)), rng.integers(0, 3, size=16))
        first, params = sgd_step(small_model, batch, 0.1)
        for _ in range(50):
            _, params = sgd_step(params, batch, 0.1)
        last, _ = loss_and_grad(params, batch)
        assert last < first


class TestHelpers:
    """Test cases for axpy and predict"""

    def test_axpy_hand_example(self):
        result = axpy(flat_vector([1.0, 2.0]), flat_vector([3.0, 4.0]), 0.5)
        assert result.values.tolist() == [2.5, 4.0]

    def test_axpy_layout_mismatch(self, small_model):
        other = init_model(build_layer_specs([4, 2, 3]), seed=0)
        with pytest.raises(ShapeError):
            axpy(small_model, other, 1.0)

    def test_predict_ties_go_to_lowest_class(self, small_model):
        """Equal logits predict class 0"""
        zeros = small_model.with_values(np.zeros(len(small_model)))
        assert predict(zeros, np.ones((3, 4))).tolist() == [0, 0, 0]


class TestHandComputedForward:
    """Test cases for forward and loss on hand-checkable nets"""

    def test_zero_parameters_give_zero_logits(self, small_model):
        zeros = small_model.with_values(np.zeros(len(small_model)))
        logits = forward(zeros, Batch(np.arange(8.0).reshape(2, 4), np.array([0, 1])))
        assert np.array_equal(logits, np.zeros((2, 3)))

    def test_one_to_one_net_is_affine(self):
        """A 1->1 net computes w * x + b"""
        params = init_model(build_layer_specs([1, 1]), seed=0).with_values(np.array([2.5, -1.0]))
        logits = forward(params, Batch(np.array([[0.0], [1.0], [-2.0]]), np.zeros(3, dtype=int)))
        assert logits.ravel().tolist() == [-1.0, 1.5, -6.0]

    def test_two_to_two_net(self):
        """W = [[1, 2], [3, 4]], b = [0.5, -0.5]: x = [1, 1] gives [4.5, 5.5]"""
        params = init_model(build_layer_specs([2, 2]), seed=0).with_values(
            np.array([1.0, 2.0, 3.0, 4.0, 0.5, -0.5])
        )
        logits = forward(params, Batch(np.array([[1.0, 1.0], [2.0, 0.0]]), np.array([0, 1])))
        assert logits.tolist() == [[4.5, 5.5], [2.5, 3.5]]

    def test_duplicated_batch_same_loss_and_gradient(self, small_model):
        """The loss is a mean, so repeating every sample changes nothing"""
        rng = np.random.default_rng(3)
        inputs = rng.standard_normal((5, 4))
        labels = rng.integers(0, 3, size=5)
        loss, grad = loss_and_grad(small_model, Batch(inputs, labels))
        loss_twice, grad_twice = loss_and_grad(
            small_model, Batch(np.vstack([inputs, inputs]), np.concatenate([labels, labels]))
        )
        assert loss_twice == pytest.approx(loss, abs=1e-12)
        assert np.allclose(grad_twice.values, grad.values, rtol=0, atol=1e-12)
