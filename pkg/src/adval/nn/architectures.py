"""The two desk-scale reference architectures.

arch-A is a small convolutional net and needs image-shaped input
(channels, height, width); arch-B is a plain dense net that flattens whatever
it is given. Both use ReLU activations and dropout 0.25 before the class layer,
which BALD's posterior sampling relies on.
"""

from __future__ import annotations

import math

import numpy as np

from adval.errors import ConfigError
from adval.nn.layers import Conv2D, Dense, Dropout, Flatten, MaxPool2D, ReLU
from adval.nn.network import NetworkSpec

ARCHITECTURES = ("arch-A", "arch-B")


def conv_input_shape(input_shape: tuple[int, ...]) -> tuple[int, int, int]:
    """Image shape a conv architecture will see for data of ``input_shape``.

    Flat vectors are viewed as single-channel square images when their length
    is a perfect square; (h, w) grids get a channel axis.
    """
    if len(input_shape) == 3:
        return input_shape
    if len(input_shape) == 2:
        return (1, *input_shape)
    if len(input_shape) == 1:
        side = math.isqrt(input_shape[0])
        if side * side != input_shape[0]:
            raise ConfigError(
                f"arch-A needs image-shaped input; {input_shape[0]} is not a perfect square"
            )
        return (1, side, side)
    raise ConfigError(f"unsupported input shape {input_shape}")


def build_network(arch: str, input_shape: tuple[int, ...], class_count: int, seed: int = 0) -> NetworkSpec:
    if arch == "arch-A":
        shape = conv_input_shape(tuple(input_shape))
        _, h, w = shape
        conv = Conv2D(filters=8, kernel=5, stride=1)
        ho, wo = h - 4, w - 4
        if ho < 2 or wo < 2 or ho % 2 or wo % 2:
            raise ConfigError(f"arch-A does not compose with input shape {shape}")
        flat = 8 * (ho // 2) * (wo // 2)
        layers = (
            conv,
            ReLU(),
            MaxPool2D(2),
            Flatten(),
            Dense(flat, 64),
            ReLU(),
            Dropout(0.25),
            Dense(64, class_count),
        )
        return NetworkSpec(shape, layers, class_count, init_seed=seed)
    if arch == "arch-B":
        flat = int(np.prod(input_shape))
        layers = (
            Flatten(),
            Dense(flat, 256),
            ReLU(),
            Dense(256, 64),
            ReLU(),
            Dropout(0.25),
            Dense(64, class_count),
        )
        return NetworkSpec(tuple(input_shape), layers, class_count, init_seed=seed)
    raise ConfigError(f"unknown architecture {arch!r}; expected one of {ARCHITECTURES}")
