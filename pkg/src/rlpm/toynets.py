"""Small network generators used by the experiment scripts and test suites."""
from __future__ import annotations

import numpy as np

from .blocks import BlockSpec, build_resnet_block
from .graph import GraphBuilder, NetworkGraph


def build_mlp(
    in_dim: int,
    widths,
    classes: int,
    *,
    rng: np.random.Generator,
    bias: bool = True,
    softmax: bool = True,
    name: str = "mlp",
) -> NetworkGraph:
    """Dense-ReLU stack ending in a linear class layer."""
    b = GraphBuilder((in_dim,), rng)
    for w in widths:
        b.dense(w, bias="zeros" if bias else None)
        b.relu()
    b.dense(classes, bias="zeros" if bias else None)
    if softmax:
        b.softmax()
    return b.build(name=name, output_classes=classes)


def random_relu_net(
    rng: np.random.Generator,
    *,
    max_depth: int = 5,
    max_width: int = 32,
    classes: int | None = None,
    bias: bool = False,
    softmax: bool = True,
) -> NetworkGraph:
    """Random dense-ReLU chain with depth <= max_depth hidden layers."""
    depth = int(rng.integers(1, max_depth + 1))
    in_dim = int(rng.integers(2, max_width + 1))
    widths = [int(rng.integers(2, max_width + 1)) for _ in range(depth - 1)]
    classes = classes or int(rng.integers(2, 6))
    return build_mlp(
        in_dim, widths, classes, rng=rng, bias=bias, softmax=softmax, name="random-mlp"
    )


def random_conv_net(
    rng: np.random.Generator,
    *,
    image: int = 8,
    channels: int = 1,
    classes: int = 3,
    bias: bool = False,
    pool: str | None = "max",
    softmax: bool = True,
) -> NetworkGraph:
    """Small conv net: conv, relu, optional pool, conv, relu, flatten, dense."""
    b = GraphBuilder((image, image, channels), rng)
    c1 = int(rng.integers(2, 7))
    b.conv2d(c1, 3, padding="same", bias="zeros" if bias else None)
    b.relu()
    if pool == "max":
        b.maxpool(2)
    elif pool == "avg":
        b.avgpool(2)
    c2 = int(rng.integers(2, 7))
    b.conv2d(c2, 3, padding="valid", bias="zeros" if bias else None)
    b.relu()
    b.flatten()
    b.dense(classes, bias="zeros" if bias else None)
    if softmax:
        b.softmax()
    return b.build(name="random-conv", output_classes=classes)


def build_conv_classifier(
    input_shape=(16, 16, 1),
    classes: int = 2,
    *,
    rng: np.random.Generator | None = None,
    name: str = "conv-classifier",
) -> NetworkGraph:
    """Trainable conv net for the synthetic image tasks."""
    rng = rng if rng is not None else np.random.default_rng(0)
    b = GraphBuilder(input_shape, rng)
    b.conv2d(8, 3, padding="same")
    b.relu()
    b.maxpool(2)
    b.conv2d(8, 3, padding="same")
    b.relu()
    b.maxpool(2)
    b.flatten()
    b.dense(32)
    b.relu()
    b.dense(classes)
    b.softmax()
    return b.build(name=name, output_classes=classes)


def random_patch_net(
    rng: np.random.Generator,
    *,
    patch: int = 8,
    channels: int = 1,
    classes: int = 5,
    hidden: int | None = None,
) -> NetworkGraph:
    """Patch classifier with valid padding throughout, so sliding it over a
    larger image reproduces per-patch outputs exactly."""
    b = GraphBuilder((patch, patch, channels), rng)
    c1 = int(rng.integers(2, 7))
    b.conv2d(c1, 3, padding="valid")
    b.relu()
    if patch >= 8 and rng.random() < 0.7:
        b.maxpool(2)
    c2 = int(rng.integers(2, 7))
    b.conv2d(c2, 2, padding="valid")
    b.relu()
    b.flatten()
    if hidden is None and rng.random() < 0.5:
        hidden = int(rng.integers(4, 17))
    if hidden:
        b.dense(hidden)
        b.relu()
    b.dense(classes)
    b.softmax()
    return b.build(name="patch", output_classes=classes)


def build_toy_resnet(
    input_shape=(256, 256, 1),
    classes: int = 3,
    *,
    depths=(16, 16, 32),
    repeats: int = 2,
    rng: np.random.Generator | None = None,
    name: str = "toy-resnet",
) -> NetworkGraph:
    """Entry conv, one bottleneck block stack, global average pool head."""
    rng = rng if rng is not None else np.random.default_rng(0)
    b = GraphBuilder(input_shape, rng)
    entry = b.conv2d(8, 3, stride=2, padding="same", id="entry_conv")
    entry = b.relu(id="entry_relu")
    block_end = b.extend(
        build_resnet_block(
            BlockSpec(tuple(depths), repeats, reduce_entry=True),
            in_channels=8,
            rng=rng,
            id_prefix="block",
            upstream=entry,
        )
    )
    h = b._shape_of(block_end)
    b.avgpool((h[0], h[1]), stride=1, inputs=block_end, id="head_pool")
    b.flatten(id="head_flatten")
    b.dense(classes, id="head_dense")
    b.softmax(id="head_softmax")
    return b.build(name=name, output_classes=classes)
