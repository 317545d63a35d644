"""Minimal fully connected classifier with exact, hand-derived gradients.

The model is a chain of affine layers with rectified-linear activations
between them and identity on the output. Gradients of the cross-entropy
loss with respect to both parameters and inputs are computed by a
closed-form backward pass (no autodiff), in 64-bit floats throughout.

All public operations are pure: inputs are never mutated and every
returned array is freshly allocated. ``ModelParams`` and ``Dataset``
freeze their arrays read-only at construction, so instances are safe to
share across threads.
"""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from .errors import DomainError, ShapeError

__all__ = [
    "ModelParams",
    "Dataset",
    "init_params",
    "forward",
    "loss",
    "per_example_loss",
    "grad_params",
    "grad_input",
    "sgd_step",
    "train_local",
    "predict",
    "concat_datasets",
]


def _freeze(a: np.ndarray) -> np.ndarray:
    out = np.array(a, dtype=np.float64, order="C")
    if not np.all(np.isfinite(out)):
        raise DomainError("array contains NaN or Inf")
    out.setflags(write=False)
    return out


@dataclass(frozen=True)
class ModelParams:
    """Ordered affine layers; each entry is (weights[out, in], bias[out])."""

    layers: tuple[tuple[np.ndarray, np.ndarray], ...]

    def __post_init__(self):
        if not self.layers:
            raise ShapeError("model needs at least one layer")
        frozen = []
        prev_out = None
        for k, (w, b) in enumerate(self.layers):
            w, b = _freeze(w), _freeze(b)
            if w.ndim != 2 or b.ndim != 1 or w.shape[0] != b.shape[0]:
                raise ShapeError(f"layer {k}: weight {w.shape} and bias {b.shape} do not form an affine map")
            if prev_out is not None and w.shape[1] != prev_out:
                raise ShapeError(f"layer {k} expects {w.shape[1]} inputs but layer {k - 1} emits {prev_out}")
            prev_out = w.shape[0]
            frozen.append((w, b))
        object.__setattr__(self, "layers", tuple(frozen))

    @property
    def in_dim(self) -> int:
        return self.layers[0][0].shape[1]

    @property
    def out_dim(self) -> int:
        return self.layers[-1][0].shape[0]

    @property
    def num_params(self) -> int:
        return sum(w.size + b.size for w, b in self.layers)

    def flatten(self) -> np.ndarray:
        """Concatenate all weights and biases, layer by layer, row-major."""
        return np.concatenate([part.ravel() for w, b in self.layers for part in (w, b)])

    def unflatten(self, flat: np.ndarray) -> "ModelParams":
        """Rebuild params with this architecture from a flat vector."""
        flat = np.asarray(flat, dtype=np.float64)
        if flat.ndim != 1 or flat.size != self.num_params:
            raise ShapeError(f"expected flat vector of length {self.num_params}, got shape {flat.shape}")
        layers = []
        pos = 0
        for w, b in self.layers:
            new_w = flat[pos : pos + w.size].reshape(w.shape)
            pos += w.size
            new_b = flat[pos : pos + b.size]
            pos += b.size
            layers.append((new_w, new_b))
        return ModelParams(tuple(layers))


@dataclass(frozen=True)
class Dataset:
    """Feature matrix [n, d] with integer class labels in [0, num_classes)."""

    features: np.ndarray
    labels: np.ndarray
    num_classes: int

    def __post_init__(self):
        feats = _freeze(self.features)
        labels = np.array(self.labels, dtype=np.int64)
        labels.setflags(write=False)
        if feats.ndim != 2:
            raise ShapeError(f"features must be 2-D, got shape {feats.shape}")
        if labels.ndim != 1 or labels.shape[0] != feats.shape[0]:
            raise ShapeError(f"{labels.shape[0]} labels for {feats.shape[0]} examples")
        if self.num_classes < 1:
            raise DomainError("num_classes must be positive")
        if labels.size and (labels.min() < 0 or labels.max() >= self.num_classes):
            raise DomainError(f"labels must lie in [0, {self.num_classes})")
        object.__setattr__(self, "features", feats)
        object.__setattr__(self, "labels", labels)

    @property
    def n(self) -> int:
        return self.features.shape[0]

    @property
    def dim(self) -> int:
        return self.features.shape[1]

    def subset(self, indices) -> "Dataset":
        idx = np.asarray(indices, dtype=np.int64)
        return Dataset(self.features[idx], self.labels[idx], self.num_classes)


def concat_datasets(a: Dataset, b: Dataset) -> Dataset:
    if a.dim != b.dim:
        raise ShapeError(f"feature dimensions differ: {a.dim} vs {b.dim}")
    if a.num_classes != b.num_classes:
        raise DomainError("datasets disagree on num_classes")
    return Dataset(
        np.concatenate([a.features, b.features], axis=0),
        np.concatenate([a.labels, b.labels]),
        a.num_classes,
    )


def init_params(layer_sizes, rng: np.random.Generator, scale: float | None = None) -> ModelParams:
    """Gaussian-initialized network for the given size chain [d, h1, ..., K].

    Weights are drawn N(0, s^2) with s = scale or sqrt(2 / fan_in); biases
    start at zero. Deterministic given the generator state.
    """
    sizes = [int(s) for s in layer_sizes]
    if len(sizes) < 2 or any(s < 1 for s in sizes):
        raise ShapeError(f"need at least [in, out] positive sizes, got {sizes}")
    layers = []
    for fan_in, fan_out in zip(sizes[:-1], sizes[1:]):
        s = scale if scale is not None else np.sqrt(2.0 / fan_in)
        w = s * rng.standard_normal((fan_out, fan_in))
        layers.append((w, np.zeros(fan_out)))
    return ModelParams(tuple(layers))


def _as_batch(x: np.ndarray, dim: int) -> tuple[np.ndarray, bool]:
    x = np.asarray(x, dtype=np.float64)
    single = x.ndim == 1
    if single:
        x = x[None, :]
    if x.ndim != 2 or x.shape[1] != dim:
        raise ShapeError(f"input has shape {x.shape}, model expects feature dimension {dim}")
    return x, single


def _forward_cache(params: ModelParams, x: np.ndarray, masks=None):
    """Forward pass keeping layer inputs and pre-activations for backprop.

    masks, when given, holds one inverted-dropout mask per hidden layer,
    applied multiplicatively after the rectifier.
    """
    inputs = [x]
    pre = []
    h = x
    last = len(params.layers) - 1
    for k, (w, b) in enumerate(params.layers):
        z = h @ w.T + b
        pre.append(z)
        if k < last:
            h = np.maximum(z, 0.0)
            if masks is not None:
                h = h * masks[k]
        else:
            h = z
        inputs.append(h)
    return inputs, pre


def _log_softmax(z: np.ndarray) -> np.ndarray:
    shifted = z - z.max(axis=1, keepdims=True)
    return shifted - np.log(np.exp(shifted).sum(axis=1, keepdims=True))


def forward(params: ModelParams, x) -> np.ndarray:
    """Logits for one example [d] or a batch [n, d]; shape mirrors the input."""
    batch, single = _as_batch(x, params.in_dim)
    out = _forward_cache(params, batch)[0][-1]
    return out[0] if single else out


def per_example_loss(params: ModelParams, batch: Dataset) -> np.ndarray:
    """Cross-entropy of each example: -log softmax probability of its label."""
    if batch.dim != params.in_dim:
        raise ShapeError(f"dataset dimension {batch.dim} does not match model input {params.in_dim}")
    logits = _forward_cache(params, batch.features)[0][-1]
    log_p = _log_softmax(logits)
    return -log_p[np.arange(batch.n), batch.labels]


def loss(params: ModelParams, batch: Dataset) -> float:
    """Mean cross-entropy over the batch."""
    if batch.n == 0:
        raise DomainError("loss of an empty batch is undefined")
    return float(np.mean(per_example_loss(params, batch)))


def _backward(params: ModelParams, inputs, pre, y: np.ndarray, scale: float, masks=None):
    """Gradients of scale * sum_i CE_i. Returns (flat param grad, input grad)."""
    n = pre[-1].shape[0]
    probs = np.exp(_log_softmax(pre[-1]))
    delta = probs
    delta[np.arange(n), y] -= 1.0
    delta *= scale

    grads = [None] * len(params.layers)
    for k in range(len(params.layers) - 1, -1, -1):
        w, _ = params.layers[k]
        grads[k] = (delta.T @ inputs[k], delta.sum(axis=0))
        back = delta @ w
        if k > 0:
            if masks is not None:
                back = back * masks[k - 1]
            delta = back * (pre[k - 1] > 0.0)
        else:
            delta = back

    flat = np.concatenate([part.ravel() for gw, gb in grads for part in (gw, gb)])
    return flat, delta


def grad_params(params: ModelParams, batch: Dataset) -> np.ndarray:
    """Exact gradient of `loss` w.r.t. all parameters, flattened in layer order."""
    if batch.n == 0:
        raise DomainError("gradient over an empty batch is undefined")
    if batch.dim != params.in_dim:
        raise ShapeError(f"dataset dimension {batch.dim} does not match model input {params.in_dim}")
    inputs, pre = _forward_cache(params, batch.features)
    flat, _ = _backward(params, inputs, pre, batch.labels, 1.0 / batch.n)
    return flat


def grad_input(params: ModelParams, x, y: int) -> np.ndarray:
    """Exact gradient of the single-example cross-entropy w.r.t. the input."""
    batch, single = _as_batch(x, params.in_dim)
    if not single:
        raise ShapeError("grad_input takes a single example vector")
    if not 0 <= int(y) < params.out_dim:
        raise DomainError(f"label {y} out of range for {params.out_dim} classes")
    inputs, pre = _forward_cache(params, batch)
    _, dx = _backward(params, inputs, pre, np.array([int(y)]), 1.0)
    return dx[0]


def sgd_step(params: ModelParams, grad: np.ndarray, lr: float) -> ModelParams:
    """One gradient-descent update: params - lr * grad, reshaped."""
    grad = np.asarray(grad, dtype=np.float64)
    if grad.ndim != 1 or grad.size != params.num_params:
        raise ShapeError(f"gradient length {grad.size} does not match {params.num_params} parameters")
    if lr < 0:
        raise DomainError("learning rate must be non-negative")
    if lr == 0.0:
        return params
    return params.unflatten(params.flatten() - lr * grad)


def train_local(
    params: ModelParams,
    data: Dataset,
    epochs: int,
    lr: float,
    batch_size: int,
    rng: np.random.Generator,
    dropout: float = 0.0,
) -> ModelParams:
    """Mini-batch SGD with per-epoch Fisher-Yates shuffling from `rng`.

    Deterministic given the generator state. `dropout`, when nonzero,
    applies inverted dropout to hidden activations during training steps
    only (masks are drawn from the same stream).
    """
    if data.n == 0:
        raise DomainError("cannot train on an empty dataset")
    if batch_size < 1:
        raise DomainError("batch_size must be at least 1")
    if epochs < 0:
        raise DomainError("epochs must be non-negative")
    if not 0.0 <= dropout < 1.0:
        raise DomainError("dropout must lie in [0, 1)")
    if data.dim != params.in_dim:
        raise ShapeError(f"dataset dimension {data.dim} does not match model input {params.in_dim}")

    n_hidden = len(params.layers) - 1
    for _ in range(epochs):
        order = rng.permutation(data.n)
        for start in range(0, data.n, batch_size):
            idx = order[start : start + batch_size]
            x, y = data.features[idx], data.labels[idx]
            masks = None
            if dropout > 0.0 and n_hidden > 0:
                keep = 1.0 - dropout
                masks = [
                    (rng.random((len(idx), w.shape[0])) < keep) / keep
                    for w, _ in params.layers[:-1]
                ]
            inputs, pre = _forward_cache(params, x, masks)
            flat, _ = _backward(params, inputs, pre, y, 1.0 / len(idx), masks)
            params = sgd_step(params, flat, lr)
    return params


def predict(params: ModelParams, x):
    """Argmax class of the logits; ties break toward the lowest index.

    Returns an int for a single example, an int64 array for a batch.
    """
    logits = forward(params, x)
    if logits.ndim == 1:
        return int(np.argmax(logits))
    return np.argmax(logits, axis=1).astype(np.int64)
