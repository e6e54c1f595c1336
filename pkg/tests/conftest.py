"""Shared fixtures: random small networks, trained nets on blob data, oracles."""

import numpy as np
import pytest

from adval import nn
from adval.data import Dataset, SyntheticSpec, gen_blobs
from adval.nn import (
    Conv2D,
    Dense,
    Dropout,
    Flatten,
    MaxPool2D,
    NetworkSpec,
    ReLU,
    TrainConfig,
)


def random_dense_spec(rng: np.random.Generator, with_dropout: bool = False) -> NetworkSpec:
    """Small random dense net: 1-2 hidden layers, 2-5 classes."""
    dim = int(rng.integers(2, 6))
    classes = int(rng.integers(2, 6))
    hidden = [int(rng.integers(3, 9)) for _ in range(int(rng.integers(1, 3)))]
    widths = [dim, *hidden]
    layers = []
    for a, b in zip(widths, widths[1:]):
        layers += [Dense(a, b), ReLU()]
    if with_dropout:
        layers.append(Dropout(0.25))
    layers.append(Dense(widths[-1], classes))
    return NetworkSpec((dim,), tuple(layers), classes, init_seed=int(rng.integers(1 << 31)))


def random_conv_spec(rng: np.random.Generator) -> NetworkSpec:
    """Small random conv net on a single-channel 8x8 or 10x10 image."""
    side = int(rng.choice([8, 10]))
    classes = int(rng.integers(2, 5))
    filters = int(rng.integers(2, 5))
    conv = Conv2D(filters=filters, kernel=3, stride=1)
    after = side - 2
    layers = [conv, ReLU(), MaxPool2D(2), Flatten()]
    flat = filters * (after // 2) ** 2
    layers += [Dense(flat, int(rng.integers(4, 9))), ReLU()]
    layers += [Dense(layers[-2].out_features, classes)]
    return NetworkSpec(
        (1, side, side), tuple(layers), classes, init_seed=int(rng.integers(1 << 31))
    )


def fd_loss_param_grad(state, x, label, layer_idx, key, flat_index, h=1e-4):
    """Central finite difference of the cross-entropy loss w.r.t. one parameter."""

    def loss_with(delta):
        params = nn.network.clone_params(state.params)
        params[layer_idx][key].ravel()[flat_index] += delta
        moved = nn.NetworkState(state.spec, params, state.epochs_trained)
        logits = nn.forward(moved, x)
        return nn.network.cross_entropy(logits[None], np.array([label]))

    return (loss_with(h) - loss_with(-h)) / (2 * h)


def fd_input_logit_grad(state, x, k, flat_index, h=1e-4):
    """Central finite difference of logit k w.r.t. one input coordinate."""

    def logit_with(delta):
        moved = np.array(x, dtype=float)
        moved.ravel()[flat_index] += delta
        return nn.forward(state, moved)[k]

    return (logit_with(h) - logit_with(-h)) / (2 * h)


def rel_err(a, b, floor=1e-6):
    diff = abs(a - b)
    if diff < floor:
        return 0.0
    return diff / max(abs(a), abs(b))


BLOB_SPEC_3C = SyntheticSpec(class_count=3, points_per_class=150, cov_scale=0.55, seed=7)
BLOB_SPEC_4C = SyntheticSpec(class_count=4, points_per_class=150, cov_scale=0.45, seed=11)


def small_blob_net(blobs: Dataset, hidden=(24,), seed=2, epochs=800) -> nn.NetworkState:
    layers = []
    widths = [blobs.input_shape[0], *hidden]
    for a, b in zip(widths, widths[1:]):
        layers += [Dense(a, b), ReLU()]
    layers.append(Dense(widths[-1], blobs.class_count))
    spec = NetworkSpec(blobs.input_shape, tuple(layers), blobs.class_count, init_seed=seed)
    state = nn.init_network(spec)
    cfg = TrainConfig(epochs=epochs, seed=seed)
    return nn.train(state, list(zip(blobs.inputs, blobs.labels)), cfg)


@pytest.fixture(scope="session")
def blobs3() -> Dataset:
    return gen_blobs(BLOB_SPEC_3C)


@pytest.fixture(scope="session")
def blobs4() -> Dataset:
    return gen_blobs(BLOB_SPEC_4C)


@pytest.fixture(scope="session")
def trained3(blobs3) -> nn.NetworkState:
    """3-class 2D net trained well enough for attack geometry tests."""
    return small_blob_net(blobs3)


@pytest.fixture(scope="session")
def trained4(blobs4) -> nn.NetworkState:
    return small_blob_net(blobs4)
