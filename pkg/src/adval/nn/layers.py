"""Layer descriptors and their forward/backward kernels.

All kernels operate on batched float64 arrays. Inputs use row-major layout:
dense activations are (N, features), convolutional activations are
(N, channels, height, width). Each forward kernel returns the output plus a
cache consumed by the matching backward kernel; backward kernels return the
gradient w.r.t. the layer input and, for parameterized layers, gradients
shaped exactly like the parameters.
"""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from adval.errors import ConfigError

DTYPE = np.float64


@dataclass(frozen=True)
class Dense:
    in_features: int
    out_features: int


@dataclass(frozen=True)
class Conv2D:
    """Valid-padding 2D convolution over (channels, height, width) input."""

    filters: int
    kernel: int
    stride: int = 1


@dataclass(frozen=True)
class MaxPool2D:
    """Non-overlapping max pooling; spatial dims must be divisible by ``size``."""

    size: int


@dataclass(frozen=True)
class ReLU:
    pass


@dataclass(frozen=True)
class Dropout:
    rate: float


@dataclass(frozen=True)
class Flatten:
    pass


LayerSpec = Dense | Conv2D | MaxPool2D | ReLU | Dropout | Flatten


def validate_layer(layer: LayerSpec) -> None:
    if isinstance(layer, Dense):
        if layer.in_features < 1 or layer.out_features < 1:
            raise ConfigError(f"dense layer dimensions must be positive, got {layer}")
    elif isinstance(layer, Conv2D):
        if layer.filters < 1 or layer.kernel < 1 or layer.stride < 1:
            raise ConfigError(f"conv2d parameters must be positive, got {layer}")
    elif isinstance(layer, MaxPool2D):
        if layer.size < 1:
            raise ConfigError(f"maxpool size must be positive, got {layer}")
    elif isinstance(layer, Dropout):
        if not 0.0 <= layer.rate < 1.0:
            raise ConfigError(f"dropout rate must be in [0, 1), got {layer.rate}")


def output_shape(layer: LayerSpec, in_shape: tuple[int, ...]) -> tuple[int, ...]:
    """Per-sample output shape of ``layer`` applied to per-sample ``in_shape``.

    Raises ConfigError when the shapes do not compose.
    """
    if isinstance(layer, Dense):
        if in_shape != (layer.in_features,):
            raise ConfigError(
                f"dense layer expects ({layer.in_features},), got input shape {in_shape}"
            )
        return (layer.out_features,)
    if isinstance(layer, Conv2D):
        if len(in_shape) != 3:
            raise ConfigError(f"conv2d expects (channels, h, w) input, got {in_shape}")
        c, h, w = in_shape
        k, s = layer.kernel, layer.stride
        if h < k or w < k:
            raise ConfigError(f"conv2d kernel {k} does not fit input {in_shape}")
        return (layer.filters, (h - k) // s + 1, (w - k) // s + 1)
    if isinstance(layer, MaxPool2D):
        if len(in_shape) != 3:
            raise ConfigError(f"maxpool expects (channels, h, w) input, got {in_shape}")
        c, h, w = in_shape
        if h % layer.size or w % layer.size:
            raise ConfigError(
                f"maxpool size {layer.size} must divide spatial dims of {in_shape}"
            )
        return (c, h // layer.size, w // layer.size)
    if isinstance(layer, Flatten):
        return (int(np.prod(in_shape)),)
    # ReLU / Dropout are shape-preserving
    return in_shape


def init_params(layer: LayerSpec, in_shape: tuple[int, ...], rng: np.random.Generator):
    """Glorot-uniform weights, zero biases. Returns None for parameterless layers."""
    if isinstance(layer, Dense):
        fan_in, fan_out = layer.in_features, layer.out_features
        limit = np.sqrt(6.0 / (fan_in + fan_out))
        w = rng.uniform(-limit, limit, size=(fan_in, fan_out)).astype(DTYPE)
        return {"W": w, "b": np.zeros(fan_out, dtype=DTYPE)}
    if isinstance(layer, Conv2D):
        c_in = in_shape[0]
        k = layer.kernel
        fan_in = c_in * k * k
        fan_out = layer.filters * k * k
        limit = np.sqrt(6.0 / (fan_in + fan_out))
        w = rng.uniform(-limit, limit, size=(layer.filters, c_in, k, k)).astype(DTYPE)
        return {"W": w, "b": np.zeros(layer.filters, dtype=DTYPE)}
    return None


def _conv_windows(x: np.ndarray, kernel: int, stride: int) -> np.ndarray:
    """Strided view (N, C, Ho, Wo, k, k) of every receptive field."""
    n, c, h, w = x.shape
    ho = (h - kernel) // stride + 1
    wo = (w - kernel) // stride + 1
    sn, sc, sh, sw = x.strides
    return np.lib.stride_tricks.as_strided(
        x,
        shape=(n, c, ho, wo, kernel, kernel),
        strides=(sn, sc, stride * sh, stride * sw, sh, sw),
        writeable=False,
    )


def forward(layer, params, x, *, rng=None, dropout_active=False):
    """Apply ``layer`` to batch ``x``; returns (output, cache).

    ``rng`` supplies dropout masks when ``dropout_active`` is set; otherwise
    dropout is the identity (inverted-dropout scaling happens at train time,
    so deterministic inference needs no rescaling).
    """
    if isinstance(layer, Dense):
        return x @ params["W"] + params["b"], x
    if isinstance(layer, ReLU):
        mask = x > 0
        return x * mask, mask
    if isinstance(layer, Flatten):
        return x.reshape(x.shape[0], -1), x.shape
    if isinstance(layer, Dropout):
        if not dropout_active:
            return x, None
        keep = 1.0 - layer.rate
        mask = (rng.random(x.shape) < keep) / keep
        return x * mask, mask
    if isinstance(layer, Conv2D):
        windows = _conv_windows(x, layer.kernel, layer.stride)
        # (N, Ho, Wo, F) <- contract (C, k, k)
        y = np.tensordot(windows, params["W"], axes=([1, 4, 5], [1, 2, 3]))
        y = np.ascontiguousarray(y.transpose(0, 3, 1, 2)) + params["b"][None, :, None, None]
        return y, (x, windows)
    if isinstance(layer, MaxPool2D):
        n, c, h, w = x.shape
        s = layer.size
        hs, ws = h // s, w // s
        tiles = x.reshape(n, c, hs, s, ws, s).transpose(0, 1, 2, 4, 3, 5).reshape(
            n, c, hs, ws, s * s
        )
        idx = tiles.argmax(axis=-1)
        y = np.take_along_axis(tiles, idx[..., None], axis=-1)[..., 0]
        return y, (x.shape, idx)
    raise TypeError(f"unknown layer {layer!r}")


def backward(layer, params, cache, dy):
    """Backward pass; returns (dx, param_grads_or_None)."""
    if isinstance(layer, Dense):
        x = cache
        dx = dy @ params["W"].T
        return dx, {"W": x.T @ dy, "b": dy.sum(axis=0)}
    if isinstance(layer, ReLU):
        return dy * cache, None
    if isinstance(layer, Flatten):
        return dy.reshape(cache), None
    if isinstance(layer, Dropout):
        if cache is None:
            return dy, None
        return dy * cache, None
    if isinstance(layer, Conv2D):
        x, windows = cache
        k, s = layer.kernel, layer.stride
        n, f, ho, wo = dy.shape
        # (F, C, k, k) <- contract batch and output positions
        dw = np.tensordot(dy, windows, axes=([0, 2, 3], [0, 2, 3]))
        db = dy.sum(axis=(0, 2, 3))
        dx = np.zeros_like(x)
        # scatter-add each kernel tap; receptive fields may overlap when stride < k
        for ki in range(k):
            for kj in range(k):
                contrib = np.tensordot(dy, params["W"][:, :, ki, kj], axes=([1], [0]))
                dx[:, :, ki : ki + s * ho : s, kj : kj + s * wo : s] += contrib.transpose(
                    0, 3, 1, 2
                )
        return dx, {"W": dw, "b": db}
    if isinstance(layer, MaxPool2D):
        x_shape, idx = cache
        n, c, h, w = x_shape
        s = layer.size
        hs, ws = h // s, w // s
        tiles = np.zeros((n, c, hs, ws, s * s), dtype=dy.dtype)
        np.put_along_axis(tiles, idx[..., None], dy[..., None], axis=-1)
        dx = tiles.reshape(n, c, hs, ws, s, s).transpose(0, 1, 2, 4, 3, 5).reshape(
            n, c, h, w
        )
        return dx, None
    raise TypeError(f"unknown layer {layer!r}")
