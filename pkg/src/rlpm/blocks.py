"""Residual bottleneck blocks.

A block is ``repeats`` units of three convolutions (1x1, 3x3, 1x1 with
channel depths L, M, N), each followed by a folded-norm placeholder, with
an additive shortcut across the unit. The first convolution of the first
unit uses stride 2 when ``reduce_entry`` is set; the shortcut becomes a
1x1 projection whenever channels or spatial size change.
"""
from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from . import layers as L
from .graph import NetworkGraph, ancestors
from .tensor import frozen


@dataclass(frozen=True)
class BlockSpec:
    depths: tuple[int, int, int]
    repeats: int
    reduce_entry: bool = False

    def __post_init__(self):
        if self.repeats < 1:
            raise ValueError("repeats must be >= 1")
        if any(d < 1 for d in self.depths):
            raise ValueError("channel depths must be positive")


def _he(rng, shape, fan_in):
    return frozen(rng.normal(0.0, np.sqrt(2.0 / fan_in), size=shape))


def build_resnet_block(
    spec: BlockSpec,
    in_channels: int,
    *,
    rng: np.random.Generator | None = None,
    id_prefix: str = "block",
    upstream: str | None = None,
) -> list[L.LayerSpec]:
    """Expand a block spec into layer specs chained after ``upstream``
    (``None`` = the network input). Conv weights are He-initialized from
    ``rng``; norm placeholders start as identity (scale 1, shift 0)."""
    if in_channels < 1:
        raise ValueError("in_channels must be >= 1")
    rng = rng or np.random.default_rng(0)
    ln, m, n = spec.depths
    out: list[L.LayerSpec] = []
    if upstream is None:
        # anchor so both the unit path and its shortcut have a single source
        upstream = f"{id_prefix}_in"
        out.append(
            L.LayerSpec(
                id=upstream,
                kind=L.BATCHNORM,
                inputs=(),
                weights=frozen(np.ones(in_channels)),
                bias=frozen(np.zeros(in_channels)),
            )
        )

    def conv(name, kernel, cin, cout, stride):
        kh, kw = kernel
        out.append(
            L.LayerSpec(
                id=name,
                kind=L.CONV2D,
                params={
                    "out_channels": cout,
                    "kernel": [kh, kw],
                    "stride": stride,
                    "padding": "same" if kh > 1 else "valid",
                },
                inputs=(prev[0],),
                weights=_he(rng, (kh, kw, cin, cout), kh * kw * cin),
                bias=None,
            )
        )
        prev[0] = name
        return name

    def norm(name, channels):
        out.append(
            L.LayerSpec(
                id=name,
                kind=L.BATCHNORM,
                inputs=(prev[0],),
                weights=frozen(np.ones(channels)),
                bias=frozen(np.zeros(channels)),
            )
        )
        prev[0] = name
        return name

    def relu(name):
        out.append(L.LayerSpec(id=name, kind=L.RELU, inputs=(prev[0],)))
        prev[0] = name
        return name

    unit_in = upstream
    channels = in_channels
    for u in range(spec.repeats):
        stride = 2 if (spec.reduce_entry and u == 0) else 1
        p = f"{id_prefix}_u{u}"
        prev = [unit_in]
        conv(f"{p}_conv1", (1, 1), channels, ln, stride)
        norm(f"{p}_norm1", ln)
        relu(f"{p}_relu1")
        conv(f"{p}_conv2", (3, 3), ln, m, 1)
        norm(f"{p}_norm2", m)
        relu(f"{p}_relu2")
        conv(f"{p}_conv3", (1, 1), m, n, 1)
        main_end = norm(f"{p}_norm3", n)

        if channels != n or stride != 1:
            prev = [unit_in]
            conv(f"{p}_shortcut_conv", (1, 1), channels, n, stride)
            shortcut_end = norm(f"{p}_shortcut_norm", n)
        else:
            shortcut_end = unit_in

        out.append(L.LayerSpec(id=f"{p}_add", kind=L.ADD, inputs=(main_end, shortcut_end)))
        prev = [f"{p}_add"]
        unit_in = relu(f"{p}_out")
        channels = n
    return out


def shortcut_kind(net: NetworkGraph, add_id: str) -> str:
    """'identity' when one input of the add feeds the other branch directly,
    'projection' otherwise."""
    spec = net.layer(add_id)
    if spec.kind != L.ADD:
        raise ValueError(f"layer '{add_id}' is not an add")
    a, b = spec.inputs
    if a in ancestors(net, b) or b in ancestors(net, a):
        return "identity"
    return "projection"
