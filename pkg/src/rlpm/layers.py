"""Layer specifications and their forward / backward kernels.

Every layer operates on a single example (no batch axis). Images are
``(rows, cols, channels)`` float64 arrays; vectors are rank-1. Convolution
weights are ``(kh, kw, in_channels, out_channels)``, dense weights
``(in_features, out_features)``.
"""
from __future__ import annotations

import math
from dataclasses import dataclass, field

import numpy as np
from numpy.lib.stride_tricks import sliding_window_view

from .errors import ShapeError

DENSE = "dense"
CONV2D = "conv2d"
RELU = "relu"
MAXPOOL2D = "maxpool2d"
AVGPOOL2D = "avgpool2d"
FLATTEN = "flatten"
SOFTMAX = "softmax"
ADD = "add"
BATCHNORM = "batchnorm_folded"

LAYER_KINDS = frozenset(
    {DENSE, CONV2D, RELU, MAXPOOL2D, AVGPOOL2D, FLATTEN, SOFTMAX, ADD, BATCHNORM}
)
PADDINGS = ("valid", "same")
# Layers that apply a weight matrix to their input (relevance rules act here).
LINEAR_KINDS = frozenset({DENSE, CONV2D, BATCHNORM})


@dataclass(frozen=True)
class LayerSpec:
    """One node of a network graph.

    ``inputs`` lists the ids of upstream layers; an empty tuple means the
    layer reads the network input. Weights, when present, are read-only
    float64 arrays.
    """

    id: str
    kind: str
    params: dict = field(default_factory=dict)
    inputs: tuple[str, ...] = ()
    weights: np.ndarray | None = None
    bias: np.ndarray | None = None


def _pair(value) -> tuple[int, int]:
    if isinstance(value, (tuple, list)):
        a, b = value
        return int(a), int(b)
    return int(value), int(value)


def pool_params(spec: LayerSpec) -> tuple[tuple[int, int], int, str]:
    """Window, stride and padding of a pooling layer (stride defaults to the
    window extent, which must then be square)."""
    ph, pw = _pair(spec.params["window"])
    stride = spec.params.get("stride")
    if stride is None:
        if ph != pw:
            raise ShapeError(
                f"pool with non-square window {(ph, pw)} needs an explicit stride"
            )
        stride = ph
    return (ph, pw), int(stride), spec.params.get("padding", "valid")


def _conv_span(size: int, k: int, stride: int, padding: str) -> tuple[int, int, int]:
    """Return (pad_before, pad_after, out_size) for one spatial axis."""
    if padding == "valid":
        if size < k:
            raise ShapeError(f"window {k} larger than input extent {size}")
        return 0, 0, (size - k) // stride + 1
    out = math.ceil(size / stride)
    total = max(0, (out - 1) * stride + k - size)
    return total // 2, total - total // 2, out


# ---------------------------------------------------------------------------
# shape inference / validation


def output_shape(spec: LayerSpec, in_shapes: list[tuple[int, ...]]) -> tuple[int, ...]:
    """Infer the output shape of ``spec`` and validate params and weights.

    Raises ShapeError naming the layer on any inconsistency.
    """
    try:
        return _output_shape(spec, in_shapes)
    except ShapeError as exc:
        raise ShapeError(f"layer '{spec.id}': {exc}") from None


def _output_shape(spec: LayerSpec, in_shapes: list[tuple[int, ...]]) -> tuple[int, ...]:
    kind = spec.kind
    if kind not in LAYER_KINDS:
        raise ShapeError(f"unknown layer kind '{kind}'")
    if kind == ADD:
        if len(in_shapes) != 2:
            raise ShapeError("add requires exactly two inputs")
        a, b = in_shapes
        if a != b:
            raise ShapeError(f"add inputs differ: {a} vs {b}")
        return a
    if len(in_shapes) != 1:
        raise ShapeError(f"{kind} takes exactly one input, got {len(in_shapes)}")
    (shape,) = in_shapes

    if kind == RELU:
        return shape
    if kind == FLATTEN:
        return (int(np.prod(shape)),)
    if kind == SOFTMAX:
        if len(shape) not in (1, 3) or shape[-1] < 2:
            raise ShapeError(f"softmax needs >=2 classes on the last axis, got {shape}")
        return shape
    if kind == BATCHNORM:
        if spec.weights is None or spec.bias is None:
            raise ShapeError("batchnorm_folded requires scale and shift")
        c = shape[-1]
        if spec.weights.shape != (c,) or spec.bias.shape != (c,):
            raise ShapeError(
                f"batchnorm_folded scale/shift must be shape ({c},), got "
                f"{spec.weights.shape}/{spec.bias.shape}"
            )
        return shape
    if kind == DENSE:
        if len(shape) != 1:
            raise ShapeError(f"dense input must be rank-1 (flatten first), got {shape}")
        units = int(spec.params["units"])
        if spec.weights is None:
            raise ShapeError("dense requires weights")
        if spec.weights.shape != (shape[0], units):
            raise ShapeError(
                f"dense weights must be {(shape[0], units)}, got {spec.weights.shape}"
            )
        if spec.bias is not None and spec.bias.shape != (units,):
            raise ShapeError(f"dense bias must be ({units},), got {spec.bias.shape}")
        return (units,)
    if kind == CONV2D:
        if len(shape) != 3:
            raise ShapeError(f"conv2d input must be rank-3, got {shape}")
        kh, kw = _pair(spec.params["kernel"])
        stride = int(spec.params.get("stride", 1))
        padding = spec.params.get("padding", "valid")
        out_ch = int(spec.params["out_channels"])
        if stride < 1:
            raise ShapeError(f"stride must be >= 1, got {stride}")
        if padding not in PADDINGS:
            raise ShapeError(f"padding must be one of {PADDINGS}, got '{padding}'")
        if spec.weights is None:
            raise ShapeError("conv2d requires weights")
        want = (kh, kw, shape[2], out_ch)
        if spec.weights.shape != want:
            raise ShapeError(f"conv2d weights must be {want}, got {spec.weights.shape}")
        if spec.bias is not None and spec.bias.shape != (out_ch,):
            raise ShapeError(f"conv2d bias must be ({out_ch},), got {spec.bias.shape}")
        *_, hr = _conv_span(shape[0], kh, stride, padding)
        *_, wr = _conv_span(shape[1], kw, stride, padding)
        return (hr, wr, out_ch)
    if kind in (MAXPOOL2D, AVGPOOL2D):
        if len(shape) != 3:
            raise ShapeError(f"{kind} input must be rank-3, got {shape}")
        (ph, pw), stride, padding = pool_params(spec)
        if ph < 1 or pw < 1:
            raise ShapeError(f"pool window must be >= 1, got {(ph, pw)}")
        if stride < 1:
            raise ShapeError(f"stride must be >= 1, got {stride}")
        if padding not in PADDINGS:
            raise ShapeError(f"padding must be one of {PADDINGS}, got '{padding}'")
        *_, hr = _conv_span(shape[0], ph, stride, padding)
        *_, wr = _conv_span(shape[1], pw, stride, padding)
        return (hr, wr, shape[2])
    raise ShapeError(f"unhandled kind '{kind}'")


# ---------------------------------------------------------------------------
# convolution kernels


def _pad2d(x: np.ndarray, pads: tuple[int, int, int, int], value: float = 0.0) -> np.ndarray:
    pt, pb, pl, pr = pads
    if pt == pb == pl == pr == 0:
        return x
    return np.pad(x, ((pt, pb), (pl, pr), (0, 0)), constant_values=value)


def _conv_geometry(shape, kh, kw, stride, padding):
    pt, pb, ho = _conv_span(shape[0], kh, stride, padding)
    pl, pr, wo = _conv_span(shape[1], kw, stride, padding)
    return (pt, pb, pl, pr), ho, wo


def conv2d_forward(
    x: np.ndarray, w: np.ndarray, bias: np.ndarray | None, stride: int, padding: str
) -> np.ndarray:
    kh, kw = w.shape[0], w.shape[1]
    pads, ho, wo = _conv_geometry(x.shape, kh, kw, stride, padding)
    xp = _pad2d(x, pads)
    win = sliding_window_view(xp, (kh, kw), axis=(0, 1))[::stride, ::stride]
    # win: (ho, wo, C, kh, kw);  w: (kh, kw, C, out)
    out = np.tensordot(win, w, axes=([2, 3, 4], [2, 0, 1]))
    if bias is not None:
        out = out + bias
    return out


def conv2d_backward_input(
    g: np.ndarray, x_shape: tuple[int, ...], w: np.ndarray, stride: int, padding: str
) -> np.ndarray:
    """Vector-Jacobian product of conv2d_forward with respect to its input."""
    kh, kw = w.shape[0], w.shape[1]
    pads, ho, wo = _conv_geometry(x_shape, kh, kw, stride, padding)
    pt, pb, pl, pr = pads
    padded_shape = (x_shape[0] + pt + pb, x_shape[1] + pl + pr, x_shape[2])
    dxp = np.zeros(padded_shape)
    # core[oh, ow, i, j, c] = sum_o g[oh, ow, o] * w[i, j, c, o]
    core = np.tensordot(g, w, axes=([2], [3]))
    for i in range(kh):
        for j in range(kw):
            dxp[i : i + stride * ho : stride, j : j + stride * wo : stride, :] += core[
                :, :, i, j, :
            ]
    return dxp[pt : pt + x_shape[0], pl : pl + x_shape[1], :]


def conv2d_backward_weights(
    g: np.ndarray, x: np.ndarray, w_shape: tuple[int, ...], stride: int, padding: str
) -> tuple[np.ndarray, np.ndarray]:
    kh, kw = w_shape[0], w_shape[1]
    pads, _, _ = _conv_geometry(x.shape, kh, kw, stride, padding)
    xp = _pad2d(x, pads)
    win = sliding_window_view(xp, (kh, kw), axis=(0, 1))[::stride, ::stride]
    # dW[i, j, c, o] = sum_{oh,ow} win[oh, ow, c, i, j] * g[oh, ow, o]
    dw = np.tensordot(win, g, axes=([0, 1], [0, 1])).transpose(1, 2, 0, 3)
    return dw, g.sum(axis=(0, 1))


# ---------------------------------------------------------------------------
# pooling kernels


def _pool_windows(x, ph, pw, stride, padding, fill):
    pads, ho, wo = _conv_geometry(x.shape, ph, pw, stride, padding)
    xp = _pad2d(x, pads, value=fill)
    win = sliding_window_view(xp, (ph, pw), axis=(0, 1))[::stride, ::stride]
    return pads, win  # (ho, wo, C, ph, pw)


def maxpool_forward(x, window, stride, padding) -> np.ndarray:
    ph, pw = _pair(window)
    _, win = _pool_windows(x, ph, pw, stride, padding, fill=-np.inf)
    return win.max(axis=(3, 4))


def maxpool_backward(x, g, window, stride, padding) -> np.ndarray:
    """Route each pooled cotangent to its window argmax (first index on ties)."""
    ph, pw = _pair(window)
    pads, win = _pool_windows(x, ph, pw, stride, padding, fill=-np.inf)
    ho, wo, ch = g.shape
    flat = win.reshape(ho, wo, ch, ph * pw)
    idx = flat.argmax(axis=3)  # first occurrence == row-major within window
    pt, pb, pl, pr = pads
    dxp = np.zeros((x.shape[0] + pt + pb, x.shape[1] + pl + pr, ch))
    oh, ow, cc = np.indices((ho, wo, ch))
    rows = oh * stride + idx // pw
    cols = ow * stride + idx % pw
    np.add.at(dxp, (rows.ravel(), cols.ravel(), cc.ravel()), g.ravel())
    return dxp[pt : pt + x.shape[0], pl : pl + x.shape[1], :]


def avgpool_forward(x, window, stride, padding) -> np.ndarray:
    ph, pw = _pair(window)
    _, win = _pool_windows(x, ph, pw, stride, padding, fill=0.0)
    return win.mean(axis=(3, 4))


def avgpool_backward(x, g, window, stride, padding) -> np.ndarray:
    """Spread each pooled cotangent equally over its window."""
    ph, pw = _pair(window)
    pads, ho, wo = _conv_geometry(x.shape, ph, pw, stride, padding)
    pt, pb, pl, pr = pads
    dxp = np.zeros((x.shape[0] + pt + pb, x.shape[1] + pl + pr, x.shape[2]))
    share = g / (ph * pw)
    for i in range(ph):
        for j in range(pw):
            dxp[i : i + stride * ho : stride, j : j + stride * wo : stride, :] += share
    return dxp[pt : pt + x.shape[0], pl : pl + x.shape[1], :]


# ---------------------------------------------------------------------------
# elementwise / dense kernels


def softmax_lastaxis(z: np.ndarray) -> np.ndarray:
    shifted = z - z.max(axis=-1, keepdims=True)
    e = np.exp(shifted)
    return e / e.sum(axis=-1, keepdims=True)


def forward_layer(spec: LayerSpec, inputs: tuple[np.ndarray, ...]) -> tuple[np.ndarray, np.ndarray]:
    """Compute ``(pre_activation, output)`` for one layer.

    For the pure nonlinearities (relu, softmax) the pre-activation is the
    layer input; everywhere else it equals the output.
    """
    kind = spec.kind
    if kind == CONV2D:
        out = conv2d_forward(
            inputs[0],
            spec.weights,
            spec.bias,
            int(spec.params.get("stride", 1)),
            spec.params.get("padding", "valid"),
        )
        return out, out
    if kind == DENSE:
        out = inputs[0] @ spec.weights
        if spec.bias is not None:
            out = out + spec.bias
        return out, out
    if kind == RELU:
        return inputs[0], np.maximum(inputs[0], 0.0)
    if kind == SOFTMAX:
        return inputs[0], softmax_lastaxis(inputs[0])
    if kind == FLATTEN:
        out = inputs[0].reshape(-1)
        return out, out
    if kind == ADD:
        out = inputs[0] + inputs[1]
        return out, out
    if kind == BATCHNORM:
        out = inputs[0] * spec.weights + spec.bias
        return out, out
    if kind == MAXPOOL2D:
        window, stride, padding = pool_params(spec)
        return (out := maxpool_forward(inputs[0], window, stride, padding)), out
    if kind == AVGPOOL2D:
        window, stride, padding = pool_params(spec)
        return (out := avgpool_forward(inputs[0], window, stride, padding)), out
    raise ShapeError(f"layer '{spec.id}': unknown kind '{kind}'")


def backward_layer(
    spec: LayerSpec,
    inputs: tuple[np.ndarray, ...],
    output: np.ndarray,
    g: np.ndarray,
) -> tuple[tuple[np.ndarray, ...], np.ndarray | None, np.ndarray | None]:
    """Vector-Jacobian product of one layer.

    Returns cotangents for each input plus weight and bias gradients
    (None for layers without parameters).
    """
    kind = spec.kind
    x = inputs[0]
    if kind == CONV2D:
        stride = int(spec.params.get("stride", 1))
        padding = spec.params.get("padding", "valid")
        dx = conv2d_backward_input(g, x.shape, spec.weights, stride, padding)
        dw, db = conv2d_backward_weights(g, x, spec.weights.shape, stride, padding)
        return (dx,), dw, (db if spec.bias is not None else None)
    if kind == DENSE:
        dx = spec.weights @ g
        dw = np.outer(x, g)
        return (dx,), dw, (g.copy() if spec.bias is not None else None)
    if kind == RELU:
        return (g * (x > 0.0),), None, None
    if kind == SOFTMAX:
        p = output
        dot = (g * p).sum(axis=-1, keepdims=True)
        return (p * (g - dot),), None, None
    if kind == FLATTEN:
        return (g.reshape(x.shape),), None, None
    if kind == ADD:
        return (g, g.copy()), None, None
    if kind == BATCHNORM:
        axes = tuple(range(x.ndim - 1))
        dscale = (g * x).sum(axis=axes) if x.ndim > 1 else g * x
        dshift = g.sum(axis=axes) if x.ndim > 1 else g.copy()
        return (g * spec.weights,), np.asarray(dscale), np.asarray(dshift)
    if kind == MAXPOOL2D:
        window, stride, padding = pool_params(spec)
        return (maxpool_backward(x, g, window, stride, padding),), None, None
    if kind == AVGPOOL2D:
        window, stride, padding = pool_params(spec)
        return (avgpool_backward(x, g, window, stride, padding),), None, None
    raise ShapeError(f"layer '{spec.id}': unknown kind '{kind}'")
