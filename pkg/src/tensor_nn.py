"""
Dense Network Module for the CosDefense simulator

A minimal feed-forward network (affine layers, ReLU hidden activations,
softmax cross-entropy loss) with exact analytic gradients. Parameters live
in one flat float64 vector with a layout map, so defenses can slice out a
single layer (typically the last weight matrix) without knowing the model.
"""

import logging
from dataclasses import dataclass
from typing import List, Optional, Sequence, Tuple

import numpy as np

from . import config
from .exceptions import ConfigurationError, LayoutQueryError, ShapeError

logger = logging.getLogger(__name__)

WEIGHT = "weight"
BIAS = "bias"


@dataclass(frozen=True)
class LayerSpec:
    """
    One affine layer.

    Attributes:
        input_dim: Number of inputs
        output_dim: Number of outputs
        activation: 'relu' for hidden layers, 'identity' for the output
            layer (softmax is applied in the loss)
    """

    input_dim: int
    output_dim: int
    activation: str = config.HIDDEN_ACTIVATION

    def __post_init__(self) -> None:
        if self.input_dim < 1 or self.output_dim < 1:
            raise ConfigurationError(
                f"Layer dims must be positive, got {self.input_dim}->{self.output_dim}"
            )
        if self.activation not in config.ACTIVATIONS:
            raise ConfigurationError(
                f"Invalid activation: {self.activation}. Must be one of {list(config.ACTIVATIONS)}"
            )


@dataclass(frozen=True)
class Segment:
    """Location of one weight matrix or bias vector inside a ParamVector."""

    layer: int
    kind: str
    offset: int
    length: int
    shape: Tuple[int, ...]


@dataclass(frozen=True, eq=False)
class ParamVector:
    """
    Flat model parameters plus the layout that maps them back to layers.

    Weight segments are stored row-major with shape (input_dim, output_dim),
    so a layer computes ``inputs @ W + b``.
    """

    values: np.ndarray
    layout: Tuple[Segment, ...]

    def __post_init__(self) -> None:
        values = np.asarray(self.values, dtype=np.float64)
        object.__setattr__(self, "values", values)
        expected_offset = 0
        for segment in self.layout:
            if segment.offset != expected_offset:
                raise ShapeError(
                    f"Layout segment ({segment.layer}, {segment.kind}) starts at "
                    f"{segment.offset}, expected {expected_offset}"
                )
            if int(np.prod(segment.shape)) != segment.length:
                raise ShapeError(
                    f"Layout segment ({segment.layer}, {segment.kind}) shape "
                    f"{segment.shape} does not match length {segment.length}"
                )
            expected_offset += segment.length
        if values.ndim != 1 or values.size != expected_offset:
            raise ShapeError(
                f"Values length {values.size} does not match layout total {expected_offset}"
            )

    def __len__(self) -> int:
        return int(self.values.size)

    @property
    def num_layers(self) -> int:
        return len({segment.layer for segment in self.layout})

    def with_values(self, values: np.ndarray) -> "ParamVector":
        """Same layout, new values."""
        return ParamVector(values=values, layout=self.layout)

    def view(self, layer: int, kind: str) -> np.ndarray:
        """Read-only view of one segment in its natural shape."""
        segment = find_segment(self, layer, kind)
        block = self.values[segment.offset : segment.offset + segment.length]
        block = block.reshape(segment.shape)
        block.flags.writeable = False
        return block

    def norm(self) -> float:
        return float(np.linalg.norm(self.values))


@dataclass(frozen=True, eq=False)
class Batch:
    """
    A mini-batch of feature vectors and class labels.
    """

    inputs: np.ndarray
    labels: np.ndarray

    def __post_init__(self) -> None:
        inputs = np.asarray(self.inputs, dtype=np.float64)
        labels = np.asarray(self.labels, dtype=np.int64)
        if inputs.ndim != 2:
            raise ShapeError(f"Batch inputs must be 2-D, got shape {inputs.shape}")
        if labels.ndim != 1 or labels.shape[0] != inputs.shape[0]:
            raise ShapeError(
                f"Batch has {inputs.shape[0]} inputs but labels of shape {labels.shape}"
            )
        if inputs.shape[0] < 1:
            raise ShapeError("Batch must contain at least one example")
        object.__setattr__(self, "inputs", inputs)
        object.__setattr__(self, "labels", labels)

    def __len__(self) -> int:
        return int(self.labels.shape[0])


def build_layer_specs(dims: Sequence[int]) -> List[LayerSpec]:
    """
    Chain layer specs from a list of widths.

    Args:
        dims: [input_dim, hidden..., num_classes]

    Returns:
        List of LayerSpec, ReLU on hidden layers and identity on the output

    Example:
        >>> [(s.input_dim, s.output_dim) for s in build_layer_specs([784, 128, 64, 10])]
        [(784, 128), (128, 64), (64, 10)]
    """
    if len(dims) < 2:
        raise ConfigurationError(f"Need at least input and output widths, got {list(dims)}")
    specs = []
    for k in range(len(dims) - 1):
        activation = (
            config.OUTPUT_ACTIVATION if k == len(dims) - 2 else config.HIDDEN_ACTIVATION
        )
        specs.append(LayerSpec(int(dims[k]), int(dims[k + 1]), activation))
    return specs


def validate_layer_specs(spec: Sequence[LayerSpec], num_classes: Optional[int] = None) -> None:
    """
    Check that layers chain and the last one is the identity output layer.

    Raises:
        ConfigurationError: If the layer specs do not chain
    """
    if len(spec) == 0:
        raise ConfigurationError("Model spec has no layers")
    for k in range(len(spec) - 1):
        if spec[k].output_dim != spec[k + 1].input_dim:
            raise ConfigurationError(
                f"Layer {k} output_dim {spec[k].output_dim} does not match "
                f"layer {k + 1} input_dim {spec[k + 1].input_dim}"
            )
        if spec[k].activation != config.HIDDEN_ACTIVATION:
            raise ConfigurationError(f"Hidden layer {k} must use relu")
    if spec[-1].activation != config.OUTPUT_ACTIVATION:
        raise ConfigurationError("Final layer must use the identity activation")
    if num_classes is not None and spec[-1].output_dim != num_classes:
        raise ConfigurationError(
            f"Final layer has {spec[-1].output_dim} outputs but data has {num_classes} classes"
        )


def make_layout(spec: Sequence[LayerSpec]) -> Tuple[Segment, ...]:
    """Layout for a chained spec: weight then bias, layer by layer."""
    layout = []
    offset = 0
    for k, layer in enumerate(spec):
        weight_len = layer.input_dim * layer.output_dim
        layout.append(Segment(k, WEIGHT, offset, weight_len, (layer.input_dim, layer.output_dim)))
        offset += weight_len
        layout.append(Segment(k, BIAS, offset, layer.output_dim, (layer.output_dim,)))
        offset += layer.output_dim
    return tuple(layout)


def init_model(spec: Sequence[LayerSpec], seed: int) -> ParamVector:
    """
    Initialize parameters for a chained dense network.

    Weights of each layer are drawn uniformly from
    [-sqrt(6 / (fan_in + fan_out)), +sqrt(6 / (fan_in + fan_out))];
    biases start at exactly zero.

    Args:
        spec: Chained layer specs
        seed: Seed for the weight draw

    Returns:
        ParamVector with populated layout

    Example:
        >>> params = init_model(build_layer_specs([2, 3, 2]), seed=7)
        >>> len(params)
        17
    """
    validate_layer_specs(spec)
    layout = make_layout(spec)
    rng = np.random.default_rng(seed)
    values = np.zeros(sum(segment.length for segment in layout), dtype=np.float64)

    for segment in layout:
        if segment.kind != WEIGHT:
            continue
        fan_in, fan_out = segment.shape
        limit = np.sqrt(6.0 / (fan_in + fan_out))
        values[segment.offset : segment.offset + segment.length] = rng.uniform(
            -limit, limit, size=segment.length
        )

    return ParamVector(values=values, layout=layout)


def find_segment(params: ParamVector, layer: int, kind: str) -> Segment:
    """
    Locate one segment; negative layer indices count from the output.

    Raises:
        LayoutQueryError: If no segment matches
    """
    if not params.layout:
        raise LayoutQueryError("Parameter layout is empty")
    num_layers = params.num_layers
    resolved = layer + num_layers if layer < 0 else layer
    for segment in params.layout:
        if segment.layer == resolved and segment.kind == kind:
            return segment
    raise LayoutQueryError(f"No {kind} segment for layer {layer} (model has {num_layers} layers)")


def slice_segment(params: ParamVector, layer: int, kind: str = WEIGHT) -> np.ndarray:
    """
    Copy one segment out as a flat vector.

    Args:
        params: Parameters (or an update with the same layout)
        layer: Layer index; -1 selects the last layer
        kind: 'weight' or 'bias'

    Returns:
        Flat copy of the segment values

    Example:
        >>> params = init_model(build_layer_specs([2, 3, 2]), seed=0)
        >>> slice_segment(params, -1).shape
        (6,)
    """
    segment = find_segment(params, layer, kind)
    return params.values[segment.offset : segment.offset + segment.length].copy()


def last_layer_vector(params: ParamVector, include_bias: bool = False) -> np.ndarray:
    """
    The final affine layer's weights, optionally followed by its bias.
    """
    weights = slice_segment(params, -1, WEIGHT)
    if not include_bias:
        return weights
    return np.concatenate([weights, slice_segment(params, -1, BIAS)])


def _layers(params: ParamVector) -> List[Tuple[np.ndarray, np.ndarray]]:
    return [(params.view(k, WEIGHT), params.view(k, BIAS)) for k in range(params.num_layers)]


def _check_inputs(params: ParamVector, batch: Batch) -> None:
    if not params.layout:
        raise ShapeError("Parameter layout is empty")
    input_dim = params.layout[0].shape[0]
    if batch.inputs.shape[1] != input_dim:
        raise ShapeError(
            f"Batch feature dim {batch.inputs.shape[1]} does not match model input dim {input_dim}"
        )


def forward(params: ParamVector, batch: Batch) -> np.ndarray:
    """
    Compute logits for a batch.

    Args:
        params: Model parameters
        batch: Inputs (labels are ignored)

    Returns:
        Array of shape (len(batch), num_classes)
    """
    _check_inputs(params, batch)
    layers = _layers(params)
    activations = batch.inputs
    for k, (weight, bias) in enumerate(layers):
        z = activations @ weight + bias
        activations = np.maximum(z, 0.0) if k < len(layers) - 1 else z
    return activations


def loss_and_grad(params: ParamVector, batch: Batch) -> Tuple[float, ParamVector]:
    """
    Mean softmax cross-entropy over the batch and its exact gradient.

    Args:
        params: Model parameters
        batch: Mini-batch with labels in [0, num_classes)

    Returns:
        Tuple of (loss, gradient with the same layout as params)
    """
    _check_inputs(params, batch)
    layers = _layers(params)
    num_classes = layers[-1][0].shape[1]
    if batch.labels.min() < 0 or batch.labels.max() >= num_classes:
        raise ShapeError(f"Labels must lie in [0, {num_classes})")

    # forward, keeping every layer's input and pre-activation
    inputs = [batch.inputs]
    pre_activations = []
    activations = batch.inputs
    for k, (weight, bias) in enumerate(layers):
        z = activations @ weight + bias
        pre_activations.append(z)
        activations = np.maximum(z, 0.0) if k < len(layers) - 1 else z
        inputs.append(activations)

    logits = pre_activations[-1]
    shifted = logits - logits.max(axis=1, keepdims=True)
    log_norm = np.log(np.exp(shifted).sum(axis=1, keepdims=True))
    log_probs = shifted - log_norm
    n = len(batch)
    rows = np.arange(n)
    loss = float(-log_probs[rows, batch.labels].mean())

    probs = np.exp(log_probs)
    delta = probs
    delta[rows, batch.labels] -= 1.0
    delta /= n

    grad = np.zeros_like(params.values)
    for k in range(len(layers) - 1, -1, -1):
        weight, _ = layers[k]
        weight_seg = find_segment(params, k, WEIGHT)
        bias_seg = find_segment(params, k, BIAS)
        grad[weight_seg.offset : weight_seg.offset + weight_seg.length] = (
            inputs[k].T @ delta
        ).ravel()
        grad[bias_seg.offset : bias_seg.offset + bias_seg.length] = delta.sum(axis=0)
        if k > 0:
            delta = (delta @ weight.T) * (pre_activations[k - 1] > 0.0)

    return max(loss, 0.0), params.with_values(grad)


def axpy(params: ParamVector, delta: ParamVector, scale: float) -> ParamVector:
    """
    Element-wise params + scale * delta.

    Raises:
        ShapeError: If the layouts differ
    """
    if params.layout != delta.layout:
        raise ShapeError("axpy operands have different layouts")
    return params.with_values(params.values + scale * delta.values)


def sgd_step(params: ParamVector, batch: Batch, learning_rate: float) -> Tuple[float, ParamVector]:
    """
    One plain SGD step; returns the pre-step loss and the new parameters.
    """
    loss, grad = loss_and_grad(params, batch)
    return loss, axpy(params, grad, -learning_rate)


def predict(params: ParamVector, inputs: np.ndarray) -> np.ndarray:
    """
    Argmax class per row; ties resolve to the lowest class index.
    """
    logits = forward(params, Batch(inputs, np.zeros(len(inputs), dtype=np.int64)))
    return np.argmax(logits, axis=1)
