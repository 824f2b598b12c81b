# Dense feed-forward network with masked evaluation and exact reverse-mode gradients
import logging
from dataclasses import dataclass, field
from enum import Enum
from typing import List, Sequence, Tuple

import numpy as np

from utils.errors import DivergenceError, DomainError, PreconditionError, ShapeError

logger = logging.getLogger(__name__)


class Activation(Enum):
    RELU = "relu"
    TANH = "tanh"
    IDENTITY = "identity"


class LossKind(Enum):
    REGRESSION = "regression"
    CLASSIFICATION = "classification"


class Granularity(Enum):
    PER_UNIT = "per_unit"
    PER_PARAMETER = "per_parameter"


@dataclass
class Layer:
    weight: np.ndarray  # (out_units, in_units)
    bias: np.ndarray    # (out_units,)
    activation: Activation

    def copy(self) -> 'Layer':
        return Layer(self.weight.copy(), self.bias.copy(), self.activation)


@dataclass
class Network:
    """Layer list plus the masking granularity; the last layer is the unmasked output layer"""
    layers: List[Layer]
    granularity: Granularity = Granularity.PER_UNIT

    def __post_init__(self):
        if not self.layers:
            raise ShapeError("Network needs at least one layer")
        for index, layer in enumerate(self.layers):
            if layer.weight.ndim != 2 or layer.bias.shape != (layer.weight.shape[0],):
                raise ShapeError(f"Layer {index}: weight {layer.weight.shape} and bias {layer.bias.shape} disagree")
            if index > 0 and layer.weight.shape[1] != self.layers[index - 1].weight.shape[0]:
                raise ShapeError(
                    f"Layer {index} expects {layer.weight.shape[1]} inputs but layer {index - 1} "
                    f"produces {self.layers[index - 1].weight.shape[0]}"
                )

    @property
    def input_dim(self) -> int:
        return self.layers[0].weight.shape[1]

    @property
    def output_dim(self) -> int:
        return self.layers[-1].weight.shape[0]

    @property
    def hidden_sizes(self) -> List[int]:
        return [layer.weight.shape[0] for layer in self.layers[:-1]]

    @property
    def layer_sizes(self) -> List[int]:
        return [self.input_dim] + [layer.weight.shape[0] for layer in self.layers]

    @property
    def n_params(self) -> int:
        return sum(layer.weight.size + layer.bias.size for layer in self.layers)

    @property
    def mask_size(self) -> int:
        """Number of maskable elements: hidden units, or every parameter in per-parameter mode"""
        if self.granularity is Granularity.PER_PARAMETER:
            return self.n_params
        return sum(self.hidden_sizes)

    def copy(self) -> 'Network':
        return Network([layer.copy() for layer in self.layers], self.granularity)

    def flat_params(self) -> np.ndarray:
        """Parameters in canonical order: per layer, weight (row-major) then bias"""
        parts = []
        for layer in self.layers:
            parts.append(layer.weight.ravel())
            parts.append(layer.bias.ravel())
        return np.concatenate(parts)

    def with_flat_params(self, flat: np.ndarray) -> 'Network':
        flat = np.asarray(flat, dtype=np.float64)
        if flat.shape != (self.n_params,):
            raise ShapeError(f"Expected {self.n_params} parameters, got shape {flat.shape}")
        layers = []
        offset = 0
        for layer in self.layers:
            w_size = layer.weight.size
            weight = flat[offset:offset + w_size].reshape(layer.weight.shape).copy()
            offset += w_size
            bias = flat[offset:offset + layer.bias.size].copy()
            offset += layer.bias.size
            layers.append(Layer(weight, bias, layer.activation))
        return Network(layers, self.granularity)

    def owners(self) -> np.ndarray:
        """Mask index owning each flat parameter (-1 for unowned output-layer parameters)"""
        if self.granularity is Granularity.PER_PARAMETER:
            return np.arange(self.n_params)

        owner_parts = []
        unit_offset = 0
        last = len(self.layers) - 1
        for index, layer in enumerate(self.layers):
            out_units, in_units = layer.weight.shape
            if index == last:
                owner_parts.append(np.full(layer.weight.size + out_units, -1, dtype=np.int64))
                continue
            units = np.arange(unit_offset, unit_offset + out_units)
            owner_parts.append(np.repeat(units, in_units))
            owner_parts.append(units)
            unit_offset += out_units
        return np.concatenate(owner_parts).astype(np.int64)

    def consumers(self) -> np.ndarray:
        """
        Hidden unit whose output each flat parameter multiplies (-1 for
        first-layer weights and every bias). Folding a unit's probability into
        these weights gives the same function as scaling the unit's output.
        """
        if self.granularity is Granularity.PER_PARAMETER:
            return np.arange(self.n_params)

        consumer_parts = []
        unit_offset = 0
        for index, layer in enumerate(self.layers):
            out_units, in_units = layer.weight.shape
            if index == 0:
                consumer_parts.append(np.full(layer.weight.size, -1, dtype=np.int64))
            else:
                units = np.arange(unit_offset, unit_offset + in_units)
                consumer_parts.append(np.tile(units, out_units))
                unit_offset += in_units
            consumer_parts.append(np.full(out_units, -1, dtype=np.int64))
        return np.concatenate(consumer_parts).astype(np.int64)


@dataclass
class GradBundle:
    """Gradients mirroring the network's layers plus one entry per mask logit"""
    weights: List[Tuple[np.ndarray, np.ndarray]]
    mask_logits: np.ndarray = field(default_factory=lambda: np.zeros(0))

    def flat_weights(self) -> np.ndarray:
        parts = []
        for d_weight, d_bias in self.weights:
            parts.append(d_weight.ravel())
            parts.append(d_bias.ravel())
        return np.concatenate(parts)


def logistic(values) -> np.ndarray:
    """Numerically stable elementwise logistic function"""
    values = np.asarray(values, dtype=np.float64)
    out = np.empty_like(values)
    positive = values >= 0
    out[positive] = 1.0 / (1.0 + np.exp(-values[positive]))
    exp_values = np.exp(values[~positive])
    out[~positive] = exp_values / (1.0 + exp_values)
    return out


def glorot_bound(fan_in: int, fan_out: int) -> float:
    return float(np.sqrt(6.0 / (fan_in + fan_out)))


def build_network(layer_sizes: Sequence[int], hidden_activation: Activation,
                  rng: np.random.Generator,
                  granularity: Granularity = Granularity.PER_UNIT) -> Network:
    """Glorot-uniform weights, zero biases, identity output layer"""
    if len(layer_sizes) < 2 or any(int(size) < 1 for size in layer_sizes):
        raise ShapeError(f"Invalid layer sizes: {list(layer_sizes)}")

    layers = []
    last = len(layer_sizes) - 2
    for index, (fan_in, fan_out) in enumerate(zip(layer_sizes[:-1], layer_sizes[1:])):
        bound = glorot_bound(fan_in, fan_out)
        weight = rng.uniform(-bound, bound, size=(fan_out, fan_in))
        activation = Activation.IDENTITY if index == last else hidden_activation
        layers.append(Layer(weight, np.zeros(fan_out), activation))
    return Network(layers, granularity)


def dense_probs(net: Network) -> np.ndarray:
    """All-ones mask: the unmasked network"""
    return np.ones(net.mask_size)


def _activate(z: np.ndarray, activation: Activation) -> np.ndarray:
    if activation is Activation.RELU:
        return np.maximum(z, 0.0)
    if activation is Activation.TANH:
        return np.tanh(z)
    return z


def _activation_grad(z: np.ndarray, h: np.ndarray, activation: Activation) -> np.ndarray:
    if activation is Activation.RELU:
        return (z > 0).astype(np.float64)
    if activation is Activation.TANH:
        return 1.0 - h * h
    return np.ones_like(z)


def _check_inputs(net: Network, mask_probs, inputs) -> Tuple[np.ndarray, np.ndarray]:
    inputs = np.asarray(inputs, dtype=np.float64)
    if inputs.ndim != 2 or inputs.shape[1] != net.input_dim:
        raise ShapeError(f"Inputs of shape {inputs.shape} do not match input dimension {net.input_dim}")
    if not np.all(np.isfinite(inputs)):
        raise DomainError("Inputs contain non-finite values")

    probs = np.asarray(mask_probs, dtype=np.float64).ravel()
    if probs.shape != (net.mask_size,):
        raise ShapeError(f"Mask has {probs.size} entries, network has {net.mask_size} maskable elements")
    return inputs, probs


def _split_param_probs(net: Network, probs: np.ndarray) -> List[Tuple[np.ndarray, np.ndarray]]:
    """Per-parameter mode: reshape the flat mask into per-layer (weight, bias) masks"""
    parts = []
    offset = 0
    for layer in net.layers:
        w_mask = probs[offset:offset + layer.weight.size].reshape(layer.weight.shape)
        offset += layer.weight.size
        b_mask = probs[offset:offset + layer.bias.size]
        offset += layer.bias.size
        parts.append((w_mask, b_mask))
    return parts


def _forward_cache(net: Network, probs: np.ndarray, inputs: np.ndarray):
    """Run the forward pass keeping what the backward pass needs"""
    per_parameter = net.granularity is Granularity.PER_PARAMETER
    param_masks = _split_param_probs(net, probs) if per_parameter else None

    cache = []
    activations = inputs
    unit_offset = 0
    last = len(net.layers) - 1
    for index, layer in enumerate(net.layers):
        if per_parameter:
            w_mask, b_mask = param_masks[index]
            weight = layer.weight * w_mask
            bias = layer.bias * b_mask
        else:
            weight, bias = layer.weight, layer.bias

        z = activations @ weight.T + bias
        h = _activate(z, layer.activation)
        unit_probs = None
        if index < last and not per_parameter:
            width = layer.weight.shape[0]
            unit_probs = probs[unit_offset:unit_offset + width]
            unit_offset += width
            out = h * unit_probs
        else:
            out = h
        cache.append((activations, z, h, weight, unit_probs))
        activations = out
    return activations, cache


def forward(net: Network, mask_probs, inputs) -> np.ndarray:
    """Masked evaluation of f_{M ⊙ θ}; each hidden unit's output is scaled by its probability"""
    inputs, probs = _check_inputs(net, mask_probs, inputs)
    outputs, _ = _forward_cache(net, probs, inputs)
    return outputs


def _prepare_targets(net: Network, targets, loss_kind: LossKind, n_samples: int) -> np.ndarray:
    targets = np.asarray(targets)
    if loss_kind is LossKind.CLASSIFICATION:
        labels = targets.ravel()
        if labels.shape != (n_samples,):
            raise ShapeError(f"Expected {n_samples} class labels, got shape {targets.shape}")
        if not np.all(np.isfinite(labels.astype(np.float64))) or np.any(labels != np.round(labels)):
            raise DomainError("Class labels must be integers")
        labels = labels.astype(np.int64)
        if labels.min() < 0 or labels.max() >= net.output_dim:
            raise DomainError(f"Class index out of range [0, {net.output_dim})")
        return labels

    values = targets.astype(np.float64)
    if values.ndim == 1:
        values = values.reshape(-1, 1)
    if values.shape != (n_samples, net.output_dim):
        raise ShapeError(f"Targets of shape {targets.shape} do not match outputs ({n_samples}, {net.output_dim})")
    if not np.all(np.isfinite(values)):
        raise DomainError("Targets contain non-finite values")
    return values


def _loss_and_output_grad(outputs: np.ndarray, targets: np.ndarray, loss_kind: LossKind) -> Tuple[float, np.ndarray]:
    n_samples = outputs.shape[0]
    if loss_kind is LossKind.CLASSIFICATION:
        shifted = outputs - outputs.max(axis=1, keepdims=True)
        log_norm = np.log(np.sum(np.exp(shifted), axis=1, keepdims=True))
        log_probs = shifted - log_norm
        rows = np.arange(n_samples)
        loss = -float(np.mean(log_probs[rows, targets]))
        grad = np.exp(log_probs)
        grad[rows, targets] -= 1.0
        return loss, grad / n_samples

    residual = outputs - targets
    loss = float(np.sum(residual * residual) / n_samples)
    return loss, 2.0 * residual / n_samples


def evaluate_loss(net: Network, mask_probs, inputs, targets, loss_kind: LossKind) -> float:
    """Mean task loss without gradients"""
    inputs, probs = _check_inputs(net, mask_probs, inputs)
    if inputs.shape[0] == 0:
        raise PreconditionError("Loss needs at least one sample")
    targets = _prepare_targets(net, targets, loss_kind, inputs.shape[0])
    outputs, _ = _forward_cache(net, probs, inputs)
    loss, _ = _loss_and_output_grad(outputs, targets, loss_kind)
    return loss


def loss_and_grads(net: Network, mask_probs, inputs, targets, loss_kind: LossKind) -> Tuple[float, GradBundle]:
    """
    Mean loss over samples and its exact gradients.

    Mask gradients are taken with respect to the logits that produced mask_probs
    (chain rule through the logistic: dp/dlogit = p(1 - p)).
    """
    inputs, probs = _check_inputs(net, mask_probs, inputs)
    if inputs.shape[0] == 0:
        raise PreconditionError("Loss needs at least one sample")
    targets = _prepare_targets(net, targets, loss_kind, inputs.shape[0])

    outputs, cache = _forward_cache(net, probs, inputs)
    loss, grad_out = _loss_and_output_grad(outputs, targets, loss_kind)

    per_parameter = net.granularity is Granularity.PER_PARAMETER
    param_masks = _split_param_probs(net, probs) if per_parameter else None
    grad_probs = np.zeros(net.mask_size)
    layer_grads: List[Tuple[np.ndarray, np.ndarray]] = [None] * len(net.layers)
    param_grad_probs: List[Tuple[np.ndarray, np.ndarray]] = [None] * len(net.layers)

    unit_end = sum(net.hidden_sizes)
    grad_a = grad_out
    for index in range(len(net.layers) - 1, -1, -1):
        layer = net.layers[index]
        prev_activations, z, h, weight, unit_probs = cache[index]

        if unit_probs is not None:
            width = unit_probs.size
            grad_probs[unit_end - width:unit_end] = np.sum(grad_a * h, axis=0)
            unit_end -= width
            grad_h = grad_a * unit_probs
        else:
            grad_h = grad_a

        grad_z = grad_h * _activation_grad(z, h, layer.activation)
        grad_weight_eff = grad_z.T @ prev_activations
        grad_bias_eff = grad_z.sum(axis=0)

        if per_parameter:
            w_mask, b_mask = param_masks[index]
            layer_grads[index] = (grad_weight_eff * w_mask, grad_bias_eff * b_mask)
            param_grad_probs[index] = (grad_weight_eff * layer.weight, grad_bias_eff * layer.bias)
        else:
            layer_grads[index] = (grad_weight_eff, grad_bias_eff)

        grad_a = grad_z @ weight

    if per_parameter:
        grad_probs = np.concatenate([np.concatenate([gw.ravel(), gb.ravel()]) for gw, gb in param_grad_probs])

    grads = GradBundle(layer_grads, grad_probs * probs * (1.0 - probs))
    if not np.isfinite(loss) or not np.all(np.isfinite(grads.flat_weights())) \
            or not np.all(np.isfinite(grads.mask_logits)):
        raise DivergenceError(f"Non-finite loss or gradient (loss={loss})")
    return loss, grads


def predict_labels(net: Network, mask_probs, inputs) -> np.ndarray:
    return np.argmax(forward(net, mask_probs, inputs), axis=1)


def query_metric(net: Network, mask_probs, inputs, targets, loss_kind: LossKind) -> float:
    """MSE for regression, accuracy for classification"""
    if loss_kind is LossKind.CLASSIFICATION:
        labels = np.asarray(targets).ravel().astype(np.int64)
        return float(np.mean(predict_labels(net, mask_probs, inputs) == labels))
    return evaluate_loss(net, mask_probs, inputs, targets, loss_kind)


def apply_gradient(net: Network, grads: GradBundle, learning_rate: float) -> Network:
    """Plain gradient step on the weights, returning a new network"""
    layers = []
    for layer, (d_weight, d_bias) in zip(net.layers, grads.weights):
        layers.append(Layer(layer.weight - learning_rate * d_weight,
                            layer.bias - learning_rate * d_bias,
                            layer.activation))
    return Network(layers, net.granularity)
