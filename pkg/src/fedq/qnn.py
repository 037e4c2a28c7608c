"""Quantized multilayer perceptrons plus layer-level operation counting.

Weights live twice: a full-precision shadow copy updated by SGD and kept in
[-1, 1] by projection after every step, and a fixed-point copy refreshed
from the shadow after each update. Forward passes consume only fixed-point
weights and re-quantize each layer's outputs before they feed the next
layer, while batch norm, activations, the loss, and all gradient arithmetic
stay in full precision. Gradients flow through the quantizer and the unit
clip as if they were the identity (straight-through), so the shadow weights
see the gradient of the loss evaluated at the quantized operating point.

Only dense layers are executable; conv2d / maxpool specs exist so that the
operation counts of convolutional architectures can feed the energy model.
"""

from __future__ import annotations

from dataclasses import dataclass, field

import numpy as np

from .quantizer import PrecisionLevel, clip_unit, quantize_array

_BN_EPS = 1e-5
_ACTIVATIONS = ("relu", "sign", "none")


@dataclass(frozen=True)
class LayerSpec:
    """Shape and options of one layer. Use the dense/conv2d/maxpool builders."""

    kind: str
    in_features: int = 0
    out_features: int = 0
    in_channels: int = 0
    out_channels: int = 0
    kernel_size: int = 0
    pool_size: int = 0
    bias: bool = True
    has_batchnorm: bool = False
    activation: str = "none"

    def __post_init__(self):
        if self.kind not in ("dense", "conv2d", "maxpool"):
            raise ValueError(f"unknown layer kind {self.kind!r}")
        if self.activation not in _ACTIVATIONS:
            raise ValueError(f"unknown activation {self.activation!r}")

    @classmethod
    def dense(cls, in_features: int, out_features: int, activation: str = "none",
              bias: bool = True, batchnorm: bool = False) -> "LayerSpec":
        if in_features < 1 or out_features < 1:
            raise ValueError("dense layer sizes must be positive")
        return cls(kind="dense", in_features=in_features, out_features=out_features,
                   bias=bias, has_batchnorm=batchnorm, activation=activation)

    @classmethod
    def conv2d(cls, in_channels: int, out_channels: int, kernel_size: int,
               activation: str = "none", bias: bool = True,
               batchnorm: bool = False) -> "LayerSpec":
        if min(in_channels, out_channels, kernel_size) < 1:
            raise ValueError("conv2d sizes must be positive")
        return cls(kind="conv2d", in_channels=in_channels, out_channels=out_channels,
                   kernel_size=kernel_size, bias=bias, has_batchnorm=batchnorm,
                   activation=activation)

    @classmethod
    def maxpool(cls, pool_size: int) -> "LayerSpec":
        if pool_size < 1:
            raise ValueError("pool size must be positive")
        return cls(kind="maxpool", pool_size=pool_size, bias=False)


@dataclass(frozen=True)
class NetworkArch:
    """Operation counts of an architecture: MACs per iteration, stored weights,
    intermediate outputs, and the flattened model dimension (== n_weights)."""

    n_mac: int
    n_weights: int
    n_outputs: int
    dim: int = -1

    def __post_init__(self):
        if self.dim == -1:
            object.__setattr__(self, "dim", self.n_weights)
        if min(self.n_mac, self.n_weights, self.n_outputs) < 0:
            raise ValueError("architecture counts must be non-negative")
        if self.dim != self.n_weights:
            raise ValueError("model dimension must equal the weight count")


def _layer_param_count(spec: LayerSpec, weight_count: int, channels: int) -> int:
    params = weight_count
    if spec.bias:
        params += channels
    if spec.has_batchnorm:
        params += 2 * channels  # scale and shift, stored full precision
    return params


def count_arch(layers, input_hw: tuple[int, int] | None = None) -> NetworkArch:
    """Count MACs, weights, and intermediate outputs with the usual arithmetic.

    conv2d layers use stride-1 same-padding (spatial size preserved), maxpool
    divides it by the pool size. input_hw gives the spatial size of the input
    when the first layer is convolutional.
    """
    n_mac = 0
    n_weights = 0
    n_outputs = 0
    hw = input_hw
    channels = None  # channel count while inside a conv stack
    for i, spec in enumerate(layers):
        if spec.kind == "dense":
            if channels is not None:
                flat = channels * hw[0] * hw[1]
                if spec.in_features != flat:
                    raise ValueError(
                        f"layer {i}: dense expects {spec.in_features} inputs but the "
                        f"conv stack provides {flat}")
                channels = None
            n_mac += spec.in_features * spec.out_features
            n_weights += _layer_param_count(
                spec, spec.in_features * spec.out_features, spec.out_features)
            n_outputs += spec.out_features
        elif spec.kind == "conv2d":
            if channels is None:
                if hw is None:
                    raise ValueError(f"layer {i}: conv2d needs input_hw")
                channels = spec.in_channels
            if spec.in_channels != channels:
                raise ValueError(f"layer {i}: conv2d expects {spec.in_channels} input "
                                 f"channels, got {channels}")
            h, w = hw
            kernel_macs = spec.kernel_size ** 2 * spec.in_channels
            n_mac += h * w * spec.out_channels * kernel_macs
            n_weights += _layer_param_count(
                spec, kernel_macs * spec.out_channels, spec.out_channels)
            n_outputs += h * w * spec.out_channels
            channels = spec.out_channels
        else:  # maxpool
            if channels is None:
                raise ValueError(f"layer {i}: maxpool outside a conv stack")
            h, w = hw
            hw = (h // spec.pool_size, w // spec.pool_size)
            n_outputs += hw[0] * hw[1] * channels
    return NetworkArch(n_mac=n_mac, n_weights=n_weights, n_outputs=n_outputs)


@dataclass(frozen=True)
class MiniBatch:
    """One sampled batch: inputs are rows, labels are class ids or targets."""

    inputs: np.ndarray
    labels: np.ndarray

    def __post_init__(self):
        inputs = np.atleast_2d(np.asarray(self.inputs, dtype=float))
        labels = np.asarray(self.labels)
        object.__setattr__(self, "inputs", inputs)
        object.__setattr__(self, "labels", labels)
        if inputs.shape[0] != labels.shape[0]:
            raise ValueError("batch inputs and labels disagree in length")

    @property
    def size(self) -> int:
        return self.inputs.shape[0]


@dataclass
class ModelState:
    """Shadow weights, their fixed-point copies, and the quantization level.

    q_weights / q_biases mirror weights / biases as of the last resync.
    Batch-norm scale/shift parameters are trained at full precision and are
    neither clipped nor quantized.
    """

    layers: tuple[LayerSpec, ...]
    weights: list[np.ndarray]
    biases: list[np.ndarray | None]
    bn_scales: list[np.ndarray | None]
    bn_shifts: list[np.ndarray | None]
    q_weights: list[np.ndarray] = field(default_factory=list)
    q_biases: list[np.ndarray | None] = field(default_factory=list)
    precision: PrecisionLevel = PrecisionLevel(32)
    loss_kind: str = "cross_entropy"

    @property
    def n_bits(self) -> int:
        return self.precision.n


def init_model(layers, n_bits: int, rng: np.random.Generator,
               loss: str = "cross_entropy", weight_scale: float = 0.5,
               n_max: int = 32) -> ModelState:
    """Build a dense model with U(-weight_scale, weight_scale) shadow weights."""
    specs = tuple(layers)
    if not specs:
        raise ValueError("model needs at least one layer")
    for i, spec in enumerate(specs):
        if spec.kind != "dense":
            raise ValueError(f"layer {i}: only dense layers are executable")
        if i and spec.in_features != specs[i - 1].out_features:
            raise ValueError(f"layer {i}: input width {spec.in_features} does not "
                             f"match previous output {specs[i - 1].out_features}")
    if loss not in ("cross_entropy", "squared_error"):
        raise ValueError(f"unknown loss {loss!r}")
    if not 0 < weight_scale <= 1:
        raise ValueError("weight_scale must lie in (0, 1]")

    weights, biases, bn_scales, bn_shifts = [], [], [], []
    for spec in specs:
        weights.append(rng.uniform(-weight_scale, weight_scale,
                                   size=(spec.in_features, spec.out_features)))
        biases.append(np.zeros(spec.out_features) if spec.bias else None)
        bn_scales.append(np.ones(spec.out_features) if spec.has_batchnorm else None)
        bn_shifts.append(np.zeros(spec.out_features) if spec.has_batchnorm else None)
    model = ModelState(layers=specs, weights=weights, biases=biases,
                       bn_scales=bn_scales, bn_shifts=bn_shifts,
                       precision=PrecisionLevel(n_bits, n_max), loss_kind=loss)
    resync_quantized(model, rng)
    return model


def resync_quantized(model: ModelState, rng: np.random.Generator) -> None:
    """Refresh the fixed-point copies from the shadow parameters."""
    n, n_max = model.precision.n, model.precision.n_max
    model.q_weights = [quantize_array(w, n, rng, n_max) for w in model.weights]
    model.q_biases = [None if b is None else quantize_array(b, n, rng, n_max)
                      for b in model.biases]


def model_dimension(model: ModelState) -> int:
    return sum(w.size for w in model.weights) \
        + sum(b.size for b in model.biases if b is not None) \
        + sum(2 * s.size for s in model.bn_scales if s is not None)


def flatten_parameters(model: ModelState) -> np.ndarray:
    """All trainable parameters as one vector, layer by layer."""
    parts = []
    for i in range(len(model.layers)):
        parts.append(model.weights[i].ravel())
        if model.biases[i] is not None:
            parts.append(model.biases[i])
        if model.bn_scales[i] is not None:
            parts.append(model.bn_scales[i])
            parts.append(model.bn_shifts[i])
    if not parts:
        return np.zeros(0)
    return np.concatenate(parts)


def assign_parameters(model: ModelState, flat: np.ndarray,
                      rng: np.random.Generator | None = None) -> None:
    """Load a flat parameter vector, projecting weights and biases onto [-1, 1].

    Passing rng refreshes the fixed-point copies; without it the caller must
    resync before the next quantized forward pass.
    """
    flat = np.asarray(flat, dtype=float)
    if flat.size != model_dimension(model):
        raise ValueError(f"parameter vector of length {flat.size}, expected "
                         f"{model_dimension(model)}")
    pos = 0

    def take(count):
        nonlocal pos
        chunk = flat[pos:pos + count]
        pos += count
        return chunk

    for i, spec in enumerate(model.layers):
        w = take(model.weights[i].size).reshape(model.weights[i].shape)
        model.weights[i] = clip_unit(w)
        if model.biases[i] is not None:
            model.biases[i] = clip_unit(take(model.biases[i].size))
        if model.bn_scales[i] is not None:
            model.bn_scales[i] = take(model.bn_scales[i].size).copy()
            model.bn_shifts[i] = take(model.bn_shifts[i].size).copy()
    if rng is not None:
        resync_quantized(model, rng)


def _softmax(logits: np.ndarray) -> np.ndarray:
    shifted = logits - logits.max(axis=1, keepdims=True)
    exp = np.exp(shifted)
    return exp / exp.sum(axis=1, keepdims=True)


def _loss_and_grad(kind: str, outputs: np.ndarray, labels: np.ndarray):
    b = outputs.shape[0]
    if kind == "cross_entropy":
        probs = _softmax(outputs)
        idx = labels.astype(int)
        loss = float(-np.mean(np.log(probs[np.arange(b), idx] + 1e-300)))
        grad = probs.copy()
        grad[np.arange(b), idx] -= 1.0
        return loss, grad / b
    targets = np.asarray(labels, dtype=float).reshape(b, -1)
    resid = outputs - targets
    return float(0.5 * np.sum(resid ** 2) / b), resid / b


def _forward_layers(model: ModelState, inputs: np.ndarray,
                    rng: np.random.Generator | None, quantized: bool):
    """Run the network, returning the raw outputs and per-layer caches."""
    x = np.atleast_2d(np.asarray(inputs, dtype=float))
    if x.shape[1] != model.layers[0].in_features:
        raise ValueError(f"batch width {x.shape[1]} does not match the model "
                         f"input width {model.layers[0].in_features}")
    n, n_max = model.precision.n, model.precision.n_max
    if quantized:
        if rng is None:
            raise ValueError("quantized forward pass needs a random generator")
        x = quantize_array(clip_unit(x), n, rng, n_max)

    caches = []
    last = len(model.layers) - 1
    for i, spec in enumerate(model.layers):
        w = model.q_weights[i] if quantized else model.weights[i]
        bias = model.q_biases[i] if quantized else model.biases[i]
        z = x @ w
        if bias is not None:
            z = z + bias
        cache = {"x": x, "w": w}
        if spec.has_batchnorm:
            mean = z.mean(axis=0)
            var = z.var(axis=0)
            inv_std = 1.0 / np.sqrt(var + _BN_EPS)
            z_hat = (z - mean) * inv_std
            act_in = model.bn_scales[i] * z_hat + model.bn_shifts[i]
            cache.update(z=z, z_hat=z_hat, inv_std=inv_std)
        else:
            act_in = z
        cache["act_in"] = act_in
        if spec.activation == "relu":
            out = np.maximum(act_in, 0.0)
        elif spec.activation == "sign":
            out = np.sign(act_in)
        else:
            out = act_in
        if i != last and quantized:
            out = quantize_array(clip_unit(out), n, rng, n_max)
        caches.append(cache)
        x = out
    return x, caches


def forward(model: ModelState, batch: MiniBatch, rng: np.random.Generator | None = None,
            quantized: bool = True) -> tuple[np.ndarray, float]:
    """Outputs and loss of one pass. quantized=False gives the full-precision
    reference path used for evaluation."""
    outputs, _ = _forward_layers(model, batch.inputs, rng, quantized)
    loss, _ = _loss_and_grad(model.loss_kind, outputs, batch.labels)
    return outputs, loss


def _backward_layers(model: ModelState, caches, grad_out: np.ndarray):
    """Gradients w.r.t. all parameters, straight through quantize and clip."""
    grads_w = [None] * len(model.layers)
    grads_b = [None] * len(model.layers)
    grads_bn_s = [None] * len(model.layers)
    grads_bn_t = [None] * len(model.layers)
    delta = grad_out
    for i in reversed(range(len(model.layers))):
        spec = model.layers[i]
        cache = caches[i]
        act_in = cache["act_in"]
        if spec.activation == "relu":
            delta = delta * (act_in > 0)
        elif spec.activation == "sign":
            delta = delta * (np.abs(act_in) <= 1.0)
        if spec.has_batchnorm:
            z_hat, inv_std = cache["z_hat"], cache["inv_std"]
            b = z_hat.shape[0]
            grads_bn_s[i] = np.sum(delta * z_hat, axis=0)
            grads_bn_t[i] = np.sum(delta, axis=0)
            d_hat = delta * model.bn_scales[i]
            delta = (inv_std / b) * (b * d_hat - d_hat.sum(axis=0)
                                     - z_hat * np.sum(d_hat * z_hat, axis=0))
        grads_w[i] = cache["x"].T @ delta
        if model.biases[i] is not None:
            grads_b[i] = delta.sum(axis=0)
        if not np.all(np.isfinite(grads_w[i])):
            raise FloatingPointError(f"non-finite gradient in layer {i}")
        delta = delta @ cache["w"].T
    return grads_w, grads_b, grads_bn_s, grads_bn_t


def local_sgd_step(model: ModelState, batch: MiniBatch, eta: float,
                   rng: np.random.Generator) -> ModelState:
    """One SGD step at the quantized operating point, then project and resync.

    The gradient is taken with the fixed-point weights and activations of the
    forward pass; shadow weights move by -eta * grad and are clipped to
    [-1, 1]; the fixed-point copies are refreshed afterwards.
    """
    if eta < 0:
        raise ValueError("learning rate must be non-negative")
    outputs, caches = _forward_layers(model, batch.inputs, rng, quantized=True)
    _, grad_out = _loss_and_grad(model.loss_kind, outputs, batch.labels)
    grads_w, grads_b, grads_bn_s, grads_bn_t = _backward_layers(model, caches, grad_out)
    for i in range(len(model.layers)):
        model.weights[i] = clip_unit(model.weights[i] - eta * grads_w[i])
        if model.biases[i] is not None:
            model.biases[i] = clip_unit(model.biases[i] - eta * grads_b[i])
        if model.bn_scales[i] is not None:
            model.bn_scales[i] = model.bn_scales[i] - eta * grads_bn_s[i]
            model.bn_shifts[i] = model.bn_shifts[i] - eta * grads_bn_t[i]
    resync_quantized(model, rng)
    return model


def local_round(model: ModelState, shard, steps: int, eta: float,
                rng: np.random.Generator, batch_size: int | None = None):
    """Run `steps` SGD steps on fresh mini-batches and report the shadow drift.

    Returns (model, delta) where delta is the flattened difference between
    final and initial shadow parameters; entries lie in [-2, 2].
    """
    from .data import sample_batch  # local import to avoid a cycle

    if steps < 1:
        raise ValueError("need at least one local step")
    if shard.size < 1:
        raise ValueError("device shard is empty")
    size = batch_size if batch_size is not None else min(32, shard.size)
    start = flatten_parameters(model).copy()
    for _ in range(steps):
        local_sgd_step(model, sample_batch(shard, size, rng), eta, rng)
    delta = flatten_parameters(model) - start
    return model, delta
