"""Plain SGD on cross-entropy, enough to produce non-trivial toy classifiers.

Training never mutates the graph passed in: weights are copied, updated in
place on the copy, and a fresh immutable graph is returned.
"""
from __future__ import annotations

import logging
from dataclasses import replace

import numpy as np

from . import layers as L
from .errors import InputError
from .graph import NetworkGraph, backprop, forward, forward_with_trace, presoftmax, validate_graph
from .tensor import as_tensor, frozen

log = logging.getLogger(__name__)


def _thawed_copy(net: NetworkGraph) -> NetworkGraph:
    specs = []
    for spec in net.layers:
        specs.append(
            replace(
                spec,
                weights=None if spec.weights is None else spec.weights.copy(),
                bias=None if spec.bias is None else spec.bias.copy(),
            )
        )
    return replace(net, layers=tuple(specs))


def _refrozen(net: NetworkGraph) -> NetworkGraph:
    specs = []
    for spec in net.layers:
        specs.append(
            replace(
                spec,
                weights=None if spec.weights is None else frozen(spec.weights),
                bias=None if spec.bias is None else frozen(spec.bias),
            )
        )
    return replace(net, layers=tuple(specs))


def accuracy(net: NetworkGraph, dataset) -> float:
    """Fraction of examples whose arg-max class matches the label."""
    if not dataset:
        raise InputError("empty dataset")
    hits = 0
    for x, label in dataset:
        out = forward(net, x)
        hits += int(np.argmax(out) == label)
    return hits / len(dataset)


def train_toy(
    net: NetworkGraph,
    dataset,
    epochs: int,
    lr: float,
    *,
    seed: int = 0,
    shuffle: bool = True,
) -> NetworkGraph:
    """SGD over ``dataset`` (pairs of input tensor and integer label).

    Returns a new graph; the input graph is untouched. The final training
    accuracy is logged.
    """
    if not dataset:
        raise InputError("empty dataset")
    if lr <= 0:
        raise InputError("learning rate must be positive")
    dataset = [(as_tensor(x), int(y)) for x, y in dataset]
    for _, y in dataset:
        if not 0 <= y < net.output_classes:
            raise InputError(f"label {y} outside [0, {net.output_classes})")

    work = _thawed_copy(net)
    by_id = {spec.id: spec for spec in work.layers}
    rng = np.random.default_rng(seed)
    order = np.arange(len(dataset))
    for _ in range(epochs):
        if shuffle:
            rng.shuffle(order)
        for idx in order:
            x, y = dataset[idx]
            _, trace = forward_with_trace(work, x)
            logits, start = presoftmax(work, trace)
            p = L.softmax_lastaxis(logits)
            seed_vec = p.copy()
            seed_vec[y] -= 1.0  # d(cross-entropy)/d(logits)
            _, wg, bg = backprop(work, trace, seed_vec, start, want_weight_grads=True)
            for lid, dw in wg.items():
                by_id[lid].weights[...] -= lr * dw
            for lid, db in bg.items():
                by_id[lid].bias[...] -= lr * db

    trained = _refrozen(work)
    validate_graph(trained)
    log.info(
        "train_toy: %d examples, %d epochs, final training accuracy %.3f",
        len(dataset), epochs, accuracy(trained, dataset),
    )
    return trained
