"""Network specification, state, and differentiable evaluation.

A network is a sequence of layer descriptors applied to a fixed input shape.
``NetworkState`` couples a spec with concrete parameter arrays; states are
treated as immutable once created, so a trained state is safe to share across
parallel read-only scoring workers.
"""

from __future__ import annotations

from dataclasses import dataclass, field, replace

import numpy as np

from adval.errors import ConfigError, InputError, UnsupportedArchitectureError
from adval.nn import layers as L
from adval.nn.layers import DTYPE, Dense, Dropout, LayerSpec


@dataclass(frozen=True)
class NetworkSpec:
    input_shape: tuple[int, ...]
    layers: tuple[LayerSpec, ...]
    class_count: int
    init_seed: int = 0

    def __post_init__(self):
        if self.class_count < 2:
            raise ConfigError(f"class_count must be >= 2, got {self.class_count}")
        if not self.input_shape or any(d < 1 for d in self.input_shape):
            raise ConfigError(f"input shape must be positive dims, got {self.input_shape}")
        for layer in self.layers:
            L.validate_layer(layer)
        out = self.shape_chain()[-1]
        if out != (self.class_count,):
            raise ConfigError(
                f"network output shape {out} does not match class_count {self.class_count}"
            )

    def shape_chain(self) -> list[tuple[int, ...]]:
        """Per-sample shapes: [input, after layer 0, ..., output]."""
        shapes = [tuple(self.input_shape)]
        for layer in self.layers:
            shapes.append(L.output_shape(layer, shapes[-1]))
        return shapes

    def has_dropout(self) -> bool:
        return any(isinstance(l, Dropout) for l in self.layers)


@dataclass(frozen=True)
class NetworkState:
    spec: NetworkSpec
    params: tuple  # per-layer dict of arrays, or None for parameterless layers
    epochs_trained: int = 0


def init_network(spec: NetworkSpec) -> NetworkState:
    """Fresh parameters from the spec's init seed: Glorot-uniform weights, zero biases."""
    rng = np.random.default_rng(spec.init_seed)
    shapes = spec.shape_chain()
    params = tuple(
        L.init_params(layer, shapes[i], rng) for i, layer in enumerate(spec.layers)
    )
    return NetworkState(spec=spec, params=params)


def clone_params(params):
    return tuple(
        None if p is None else {k: v.copy() for k, v in p.items()} for p in params
    )


def _check_batch(spec: NetworkSpec, x: np.ndarray) -> np.ndarray:
    x = np.asarray(x, dtype=DTYPE)
    if x.shape[1:] != spec.input_shape:
        raise InputError(
            f"input shape {x.shape[1:]} does not match network input {spec.input_shape}"
        )
    return x


def forward_batch(
    state: NetworkState,
    x: np.ndarray,
    *,
    dropout_seed: int | None = None,
) -> np.ndarray:
    """Logits (N, class_count). Dropout is identity unless ``dropout_seed`` is given."""
    x = _check_batch(state.spec, x)
    rng = None if dropout_seed is None else np.random.default_rng(dropout_seed)
    for layer, params in zip(state.spec.layers, state.params):
        x, _ = L.forward(layer, params, x, rng=rng, dropout_active=rng is not None)
    return x


def forward(state: NetworkState, x: np.ndarray, *, dropout_seed: int | None = None) -> np.ndarray:
    """Logits (class_count,) for a single input."""
    x = np.asarray(x, dtype=DTYPE)
    if x.shape != state.spec.input_shape:
        raise InputError(
            f"input shape {x.shape} does not match network input {state.spec.input_shape}"
        )
    if not np.all(np.isfinite(x)):
        raise InputError("input contains non-finite values")
    return forward_batch(state, x[None], dropout_seed=dropout_seed)[0]


def _forward_caches(state, x, *, rng=None, dropout_active=False):
    caches = []
    for layer, params in zip(state.spec.layers, state.params):
        x, cache = L.forward(layer, params, x, rng=rng, dropout_active=dropout_active)
        caches.append(cache)
    return x, caches


def _backward(state, caches, dlogits):
    grads = [None] * len(state.spec.layers)
    dy = dlogits
    for i in range(len(state.spec.layers) - 1, -1, -1):
        dy, g = L.backward(state.spec.layers[i], state.params[i], caches[i], dy)
        grads[i] = g
    return dy, tuple(grads)


def softmax_probs(logits: np.ndarray) -> np.ndarray:
    """Probabilities along the last axis, computed with max-subtraction."""
    z = np.asarray(logits, dtype=DTYPE)
    z = z - z.max(axis=-1, keepdims=True)
    e = np.exp(z)
    return e / e.sum(axis=-1, keepdims=True)


def log_softmax(logits: np.ndarray) -> np.ndarray:
    z = np.asarray(logits, dtype=DTYPE)
    z = z - z.max(axis=-1, keepdims=True)
    return z - np.log(np.exp(z).sum(axis=-1, keepdims=True))


def cross_entropy(logits: np.ndarray, labels: np.ndarray) -> float:
    """Mean negative log-likelihood over the batch."""
    lp = log_softmax(logits)
    return float(-lp[np.arange(len(labels)), labels].mean())


def loss_and_param_grads(state, x, labels, *, rng=None, dropout_active=False):
    """Mean cross-entropy over the batch plus gradients for every parameter."""
    x = _check_batch(state.spec, x)
    logits, caches = _forward_caches(state, x, rng=rng, dropout_active=dropout_active)
    n = len(labels)
    probs = softmax_probs(logits)
    dlogits = probs.copy()
    dlogits[np.arange(n), labels] -= 1.0
    dlogits /= n
    _, grads = _backward(state, caches, dlogits)
    return cross_entropy(logits, labels), grads


def _check_label(spec: NetworkSpec, label: int) -> int:
    label = int(label)
    if not 0 <= label < spec.class_count:
        raise InputError(f"label {label} outside [0, {spec.class_count})")
    return label


def grad_params(state: NetworkState, x: np.ndarray, label: int):
    """Cross-entropy gradient w.r.t. every parameter, for one (input, label) pair.

    Dropout is disabled; the result is deterministic.
    """
    label = _check_label(state.spec, label)
    _, grads = loss_and_param_grads(state, np.asarray(x, dtype=DTYPE)[None], np.array([label]))
    return grads


def grad_input_logit(state: NetworkState, x: np.ndarray, k: int) -> np.ndarray:
    """Gradient of logit ``k`` w.r.t. the input. Dropout disabled."""
    k = _check_label(state.spec, k)
    x = np.asarray(x, dtype=DTYPE)
    if x.shape != state.spec.input_shape:
        raise InputError(
            f"input shape {x.shape} does not match network input {state.spec.input_shape}"
        )
    _, caches = _forward_caches(state, x[None])
    seed = np.zeros((1, state.spec.class_count), dtype=DTYPE)
    seed[0, k] = 1.0
    dx, _ = _backward(state, caches, seed)
    return dx[0]


def logits_and_input_jacobian(state: NetworkState, x: np.ndarray):
    """Logits plus the full Jacobian d logits / d input, shape (C, *input_shape).

    Runs one forward/backward over a batch of C replicated inputs with
    identity upstream seeds, which equals C separate per-logit backward passes.
    """
    x = np.asarray(x, dtype=DTYPE)
    c = state.spec.class_count
    rep = np.broadcast_to(x, (c, *x.shape))
    logits, caches = _forward_caches(state, np.ascontiguousarray(rep))
    dx, _ = _backward(state, caches, np.eye(c, dtype=DTYPE))
    return logits[0], dx


def _last_dense_index(spec: NetworkSpec) -> int:
    for i in range(len(spec.layers) - 1, -1, -1):
        if isinstance(spec.layers[i], Dense):
            return i
    raise UnsupportedArchitectureError("network has no dense layer to embed from")


def embed_batch(state: NetworkState, x: np.ndarray) -> np.ndarray:
    """Pre-logit features: activations entering the final dense layer."""
    x = _check_batch(state.spec, x)
    stop = _last_dense_index(state.spec)
    for layer, params in zip(state.spec.layers[:stop], state.params[:stop]):
        x, _ = L.forward(layer, params, x)
    return x.reshape(x.shape[0], -1)


def embed(state: NetworkState, x: np.ndarray) -> np.ndarray:
    return embed_batch(state, np.asarray(x, dtype=DTYPE)[None])[0]


def predict_batch(state: NetworkState, x: np.ndarray, *, chunk: int = 256) -> np.ndarray:
    """Argmax predictions, evaluated in chunks to bound conv buffer memory."""
    x = _check_batch(state.spec, x)
    out = np.empty(len(x), dtype=np.int64)
    for lo in range(0, len(x), chunk):
        out[lo : lo + chunk] = forward_batch(state, x[lo : lo + chunk]).argmax(axis=1)
    return out


def accuracy(state: NetworkState, x: np.ndarray, labels: np.ndarray) -> float:
    return float((predict_batch(state, x) == np.asarray(labels)).mean())
