"""Patch classifier to whole-image classifier conversion.

A patch classifier maps a fixed p x q patch to 5 class probabilities.
Rewriting its flatten+dense head as convolutions yields a network that
slides over an arbitrarily large image and emits a u x v x 5 heatmap of
per-position patch probabilities, without changing any parameter. A small
trainable head (pool, dense stack, plus a per-class global-max shortcut)
turns that heatmap into a 3-class whole-image prediction.
"""
from __future__ import annotations

from dataclasses import dataclass, replace

import numpy as np

from . import layers as L
from .errors import ConversionError, InputError, ShapeError
from .graph import (
    GraphBuilder,
    NetworkGraph,
    forward,
    infer_shapes,
    validate_graph,
    with_input_shape,
)
from .tensor import as_tensor, frozen

PATCH_CLASSES = 5
WHOLE_CLASSES = 3

_PATCH_KINDS = frozenset(
    {L.CONV2D, L.MAXPOOL2D, L.AVGPOOL2D, L.RELU, L.FLATTEN, L.DENSE, L.SOFTMAX}
)


@dataclass(frozen=True)
class PatchClassifier:
    """A validated patch-level network: rank-3 input, 5-way softmax output,
    layer kinds restricted to the convertible set."""

    net: NetworkGraph

    def __post_init__(self):
        net = self.net
        shapes = validate_graph(net)
        if len(net.input_shape) != 3:
            raise ShapeError(
                f"patch input must be rows x cols x channels, got {net.input_shape}"
            )
        if net.output_classes != PATCH_CLASSES:
            raise ShapeError(
                f"patch classifier must have {PATCH_CLASSES} classes, got {net.output_classes}"
            )
        out = net.layer(net.output_id)
        if out.kind != L.SOFTMAX:
            raise ShapeError("patch classifier must end in softmax")
        for spec in net.layers:
            if spec.kind not in _PATCH_KINDS:
                raise ShapeError(
                    f"layer '{spec.id}' of kind '{spec.kind}' is not convertible"
                )
            if len(spec.inputs) > 1:
                raise ShapeError("patch classifier must be a simple chain")
        del shapes

    @property
    def patch_shape(self) -> tuple[int, int, int]:
        return self.net.input_shape  # type: ignore[return-value]


def _as_patch_net(patch) -> NetworkGraph:
    return patch.net if isinstance(patch, PatchClassifier) else PatchClassifier(patch).net


def dense_to_conv(patch) -> NetworkGraph:
    """Rewrite every flatten+dense head as equivalent convolutions.

    The dense layer following a flatten of an h x w x d feature map becomes
    an h x w convolution with d input channels; dense layers further down
    become 1 x 1 convolutions. A net with no dense layers is returned
    unchanged. On the original patch size the converted net reproduces the
    source outputs (as a 1 x 1 x c map).
    """
    net = _as_patch_net(patch)
    if not any(spec.kind == L.DENSE for spec in net.layers):
        return net
    shapes = infer_shapes(net)
    rewired: dict[str, str] = {}
    feature_shape: dict[str, tuple[int, ...]] = {}  # rank-3 shape at each kept layer
    out_layers: list[L.LayerSpec] = []

    def source_of(spec: L.LayerSpec) -> str | None:
        if not spec.inputs:
            return None
        src = spec.inputs[0]
        return rewired.get(src, src)

    for spec in net.layers:
        src = source_of(spec)
        src_shape = feature_shape[src] if src else tuple(net.input_shape)
        if spec.kind == L.FLATTEN:
            # dropped; consumers read the rank-3 map directly
            rewired[spec.id] = src if src else ""
            feature_shape[spec.id] = src_shape
            continue
        if spec.kind == L.DENSE:
            if len(src_shape) != 3:
                raise ConversionError(
                    f"dense layer '{spec.id}' is not preceded by a flatten"
                )
            h, w, d = src_shape
            units = int(spec.params["units"])
            kernel = frozen(spec.weights.reshape(h, w, d, units))
            out_layers.append(
                L.LayerSpec(
                    id=spec.id,
                    kind=L.CONV2D,
                    params={
                        "out_channels": units,
                        "kernel": [h, w],
                        "stride": 1,
                        "padding": "valid",
                    },
                    inputs=(src,) if src else (),
                    weights=kernel,
                    bias=spec.bias,
                )
            )
            feature_shape[spec.id] = (1, 1, units)
            continue
        new_spec = spec if src == (spec.inputs[0] if spec.inputs else None) else replace(
            spec, inputs=(src,) if src else ()
        )
        out_layers.append(new_spec)
        original = shapes[spec.id]
        if spec.kind == L.RELU:
            # elementwise: commutes with the dropped flatten, keeps the map shape
            feature_shape[spec.id] = src_shape
        elif len(original) == 1:
            # downstream of the converted head: spatial extent collapsed to 1x1
            feature_shape[spec.id] = (1, 1, original[0])
        else:
            feature_shape[spec.id] = original
    converted = NetworkGraph(
        layers=tuple(out_layers),
        input_shape=net.input_shape,
        output_classes=net.output_classes,
        name=(net.name + "-conv") if net.name else "patch-conv",
    )
    validate_graph(converted)
    return converted


def effective_stride(net: NetworkGraph) -> int:
    """Product of all conv and pool strides: how far one heatmap cell moves
    the receptive field on the input image."""
    stride = 1
    for spec in net.layers:
        if spec.kind == L.CONV2D:
            stride *= int(spec.params.get("stride", 1))
        elif spec.kind in (L.MAXPOOL2D, L.AVGPOOL2D):
            _, s, _ = L.pool_params(spec)
            stride *= s
    return stride


@dataclass(frozen=True, eq=False)
class WholeImageHeatmap:
    """Per-position patch-class probabilities over a whole image."""

    values: np.ndarray  # u x v x c, each (i, j) cell softmax-normalized
    source_image_shape: tuple[int, int]
    stride: int

    def __post_init__(self):
        object.__setattr__(self, "values", frozen(self.values))
        if self.values.ndim != 3:
            raise ShapeError(f"heatmap must be rank-3, got {self.values.shape}")


def _image_tensor(M, channels: int) -> np.ndarray:
    M = as_tensor(M)
    if M.ndim == 2:
        M = M[:, :, None]
    if M.ndim != 3:
        raise ShapeError(f"image must be rank-2 or rank-3, got shape {M.shape}")
    if M.shape[2] == 1 and channels > 1:
        M = np.repeat(M, channels, axis=2)
    if M.shape[2] != channels:
        raise ShapeError(f"image has {M.shape[2]} channels, model expects {channels}")
    return M


def heatmap(fconv: NetworkGraph, M) -> WholeImageHeatmap:
    """Slide the converted patch classifier over a whole image."""
    p, q, d = fconv.input_shape
    M = _image_tensor(M, d)
    r, s = M.shape[0], M.shape[1]
    if r < p or s < q:
        raise ShapeError(f"image {r}x{s} is smaller than the patch {p}x{q}")
    values = forward(with_input_shape(fconv, (r, s, d)), M)
    return WholeImageHeatmap(
        values=values, source_image_shape=(r, s), stride=effective_stride(fconv)
    )


def extract_patch(fconv: NetworkGraph, M, i: int, j: int) -> np.ndarray:
    """The image patch whose classification lands at heatmap cell (i, j)."""
    p, q, d = fconv.input_shape
    M = _image_tensor(M, d)
    t = effective_stride(fconv)
    return M[i * t : i * t + p, j * t : j * t + q, :]


# ---------------------------------------------------------------------------
# whole-image classification head


@dataclass(frozen=True)
class HeadConfig:
    """Trainable layers stacked on the heatmap: pool + dense stack, with a
    per-class global-max shortcut added to the logits."""

    pool_window: int = 2
    hidden_widths: tuple[int, ...] = (64,)
    classes: int = WHOLE_CLASSES

    def __post_init__(self):
        if self.pool_window < 1:
            raise InputError(f"pool_window must be >= 1, got {self.pool_window}")
        if any(w < 1 for w in self.hidden_widths):
            raise InputError(f"hidden widths must be >= 1, got {self.hidden_widths}")
        if self.classes < 2:
            raise InputError(f"need >= 2 classes, got {self.classes}")


def build_whole_image_classifier(
    fconv: NetworkGraph,
    image_shape: tuple[int, int],
    head: HeadConfig = HeadConfig(),
    rng: np.random.Generator | None = None,
) -> NetworkGraph:
    """Append the classification head to a converted patch net.

    The heatmap feeds two branches: max-pool, flatten and a dense stack
    down to the class logits; and a global max per heatmap channel
    projected linearly to the same logits. The branches are summed and
    softmaxed. The resulting graph is trainable end to end.
    """
    p, q, d = fconv.input_shape
    r, s = image_shape
    if r < p or s < q:
        raise ShapeError(f"image {r}x{s} is smaller than the patch {p}x{q}")
    rng = rng if rng is not None else np.random.default_rng(0)
    big = with_input_shape(fconv, (r, s, d))
    u, v, c = infer_shapes(big)[big.output_id]
    if u < head.pool_window or v < head.pool_window:
        raise ShapeError(
            f"heatmap {u}x{v} is smaller than the head pool window {head.pool_window}"
        )
    b = GraphBuilder((r, s, d), rng)
    heat_id = b.extend(big.layers)
    cur = b.maxpool(head.pool_window, inputs=heat_id, id="head_pool")
    cur = b.flatten(inputs=cur, id="head_flatten")
    for k, width in enumerate(head.hidden_widths):
        cur = b.dense(width, inputs=cur, id=f"head_dense{k}")
        cur = b.relu(inputs=cur, id=f"head_relu{k}")
    main = b.dense(head.classes, inputs=cur, id="head_logits")
    shortcut = b.maxpool((u, v), stride=1, inputs=heat_id, id="head_globalmax")
    shortcut = b.flatten(inputs=shortcut, id="head_globalmax_flat")
    shortcut = b.dense(head.classes, inputs=shortcut, id="head_shortcut")
    joined = b.add_join(main, shortcut, id="head_add")
    b.softmax(inputs=joined, id="head_softmax")
    return b.build(
        name=(fconv.name + "-whole") if fconv.name else "whole",
        output_classes=head.classes,
    )


def classify_whole(whole: NetworkGraph, M) -> np.ndarray:
    """Class probabilities of a whole image under the merged classifier."""
    d = whole.input_shape[2]
    M = _image_tensor(M, d)
    return forward(whole, M)


def patch_count(fconv: NetworkGraph, image_shape: tuple[int, int]) -> tuple[int, int]:
    """Heatmap extent (u, v) for a given image size."""
    p, q, d = fconv.input_shape
    r, s = image_shape
    big = with_input_shape(fconv, (r, s, d))
    u, v, _ = infer_shapes(big)[big.output_id]
    return int(u), int(v)
